//! The `W`, `a` and `b` subproblems of the ADMM iteration.

use super::randomize::{recover_vector, Recovered};
use super::DesignParams;
use crate::error::{Error, Result};
use crate::fim::{
    bcrb, map_in_a, map_in_b, map_in_rw, prior_fim, scene_param_matrices, FimBlocks, LinearFim, ParamMatrices,
    PriorSpec,
};
use crate::linalg::{c, herm_eig, herm_part, CMat, CVec, RMat, RVec};
use crate::scene::Scene;
use crate::sdp::{
    embed_unchecked, epigraph_inverse_trace, hermitian_from_embedding, solve_with, BlockId, Coeff, ConicProblem,
    ConicSolution, Epigraph, Status,
};

/// Diagonal rescaling of the FIM so that the prior part has unit diagonal.
///
/// The BCRB objective is reported relative to `Tr{Lambda Sigma_theta}`, the
/// bound with no data, so it lies in `(0, 1]`.
#[derive(Clone, Debug)]
pub struct FimScaling {
    pub d: RVec,
    /// `D F_P D`.
    pub prior: RMat,
    /// Epigraph weights `lambda_i d_i^2 / reference`.
    pub weights: RVec,
    pub reference: f64,
    pub n_theta: usize,
}

impl FimScaling {
    pub fn new(priors: &PriorSpec, lambda: &RVec) -> Result<Self> {
        let (ft, fa) = prior_fim(priors)?;
        let nt = ft.nrows();
        let nf = nt + fa.nrows();
        let mut fp = RMat::zeros(nf, nf);
        fp.view_mut((0, 0), (nt, nt)).copy_from(&ft);
        fp.view_mut((nt, nt), (fa.nrows(), fa.nrows())).copy_from(&fa);
        let d = fp.diagonal().map(|v| 1.0 / v.sqrt());
        let prior = RMat::from_fn(nf, nf, |i, j| d[i] * d[j] * fp[(i, j)]);
        let reference: f64 = (0..nt).map(|i| lambda[i] * priors.cov_theta[(i, i)]).sum();
        let weights = RVec::from_fn(nt, |i, _| lambda[i] * d[i] * d[i] / reference);
        Ok(Self { d, prior, weights, reference, n_theta: nt })
    }

    pub fn dim(&self) -> usize {
        self.d.len()
    }

    /// Adds the epigraph and the FIM LMI
    /// `D F_L D + D F_P D - [[U, 0], [0, 0]] = Z >= 0`.
    ///
    /// `linear(p, q)` lists the terms whose inner product with the problem
    /// variables equals the unscaled `F_L(p, q)`.
    pub fn add_lmi(
        &self,
        problem: &mut ConicProblem,
        mut linear: impl FnMut(usize, usize) -> Vec<(BlockId, Coeff)>,
    ) -> (Epigraph, BlockId) {
        let epi = epigraph_inverse_trace(problem, &self.weights);
        let nf = self.dim();
        let z = problem.add_psd(nf);
        for p in 0..nf {
            for q in p..nf {
                let mut terms = vec![(z, Coeff::entry(p, q))];
                if q < self.n_theta {
                    terms.push(epi.u_entry(p, q));
                }
                for (blk, mut coeff) in linear(p, q) {
                    coeff.scale(-self.d[p] * self.d[q]);
                    terms.push((blk, coeff));
                }
                problem.add_constraint(terms, self.prior[(p, q)]);
            }
        }
        (epi, z)
    }
}

/// Everything the subproblems share for one scene.
#[derive(Clone, Debug)]
pub struct DesignContext<'a> {
    pub scene: &'a Scene,
    pub priors: PriorSpec,
    pub params: DesignParams,
    pub pm: ParamMatrices,
    pub scaling: FimScaling,
}

impl<'a> DesignContext<'a> {
    pub fn new(scene: &'a Scene, params: DesignParams) -> Result<Self> {
        params.validate()?;
        let priors = scene.priors.clone();
        let pm = scene_param_matrices(scene, &priors);
        let scaling = FimScaling::new(&priors, &params.weights)?;
        Ok(Self { scene, priors, params, pm, scaling })
    }

    /// `Tr{Lambda J^{-1}} / Tr{Lambda Sigma_theta}` for a likelihood FIM.
    pub fn normalized_bcrb(&self, fl: RMat) -> Result<f64> {
        let blocks = FimBlocks::new(fl, &self.priors)?;
        Ok(bcrb(&blocks, &self.params.weights)?.weighted / self.scaling.reference)
    }

    fn solve(&self, problem: &ConicProblem) -> Result<ConicSolution> {
        solve_with(problem, &self.params.solver)
    }
}

/// `rho1 a^T (1 - a) + rho2 ||b - 1 + a + mu / rho2||^2`.
pub fn penalty(a: &RVec, b: &RVec, mu: &RVec, rho1: f64, rho2: f64) -> f64 {
    let bin: f64 = a.iter().map(|v| v * (1.0 - v)).sum();
    let cons: f64 = (0..a.len()).map(|i| (b[i] - 1.0 + a[i] + mu[i] / rho2).powi(2)).sum();
    rho1 * bin + rho2 * cons
}

/// `mu + rho2 (b - 1 + a)`.
pub fn update_dual(mu: &RVec, a: &RVec, b: &RVec, rho2: f64) -> RVec {
    RVec::from_fn(mu.len(), |i, _| mu[i] + rho2 * (b[i] - 1.0 + a[i]))
}

#[derive(Clone, Debug)]
pub struct AdmmState {
    pub a: RVec,
    pub b: RVec,
    pub mu: RVec,
    pub r_n: CMat,
}

impl AdmmState {
    pub fn initial(n: usize, sigma2: f64) -> Self {
        Self {
            a: RVec::from_element(n, 0.5),
            b: RVec::from_element(n, 0.5),
            mu: RVec::zeros(n),
            r_n: CMat::identity(n, n) * c(sigma2, 0.0),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Beamformer {
    /// `[w_1, ..., w_K, W_r]`, `N x (K + N)`.
    pub w: CMat,
    pub r_w: CMat,
    /// Rank-one `w_k w_k^H`.
    pub r_k: Vec<CMat>,
    /// Optimal value of the relaxation.
    pub normalized_bcrb: f64,
    /// Smallest eigenvalue of `R_w - sum R_k` relative to `P`, before clipping.
    pub residual_min_eig: f64,
}

/// `w = (c^H R c)^{-1/2} R c` with `c = A h^*`; `None` if `c^H R c <= 0`.
pub fn rank_one_beam(r: &CMat, cv: &CVec) -> Option<CVec> {
    let rc = r * cv;
    let gain = cv.dotc(&rc).re;
    (gain > 0.0).then(|| rc / c(gain.sqrt(), 0.0))
}

fn submatrix(m: &CMat, idx: &[usize]) -> CMat {
    CMat::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

fn user_vector(scene: &Scene, k: usize, a: &RVec) -> CVec {
    // A h_k^*
    CVec::from_fn(scene.n, |i, _| scene.users[k].channel[i].conj() * a[i])
}

/// Index of the SINR row carrying the most weight in an infeasibility
/// certificate.
fn blamed_user(sol: &ConicSolution, rows: &[usize]) -> usize {
    rows.iter().enumerate().max_by(|x, y| sol.y[*x.1].abs().total_cmp(&sol.y[*y.1].abs())).map(|(k, _)| k).unwrap_or(0)
}

fn accept(sol: &ConicSolution, what: &str) -> Result<()> {
    match sol.status {
        Status::Optimal => Ok(()),
        Status::MaxIterations if sol.relative_gap < 1e-5 && sol.primal_infeasibility < 1e-6 => Ok(()),
        Status::PrimalInfeasible => Err(Error::Infeasible(what.into())),
        other => Err(Error::Numerical(format!(
            "{what}: solver stopped with {other:?} (gap {:.2e}, primal residual {:.2e})",
            sol.relative_gap, sol.primal_infeasibility
        ))),
    }
}

/// Beamformer subproblem at fixed `a`, `b` and noise precision.
///
/// Solves the relaxation over `R_1, ..., R_K, R_r` (so that
/// `R_w = sum R_k + R_r`), restricted to antennas with `a_n > 0`, then
/// recovers rank-one user beams and a radar beamformer from the residual.
pub fn update_w(ctx: &DesignContext, a: &RVec, b: &RVec, precision: &CMat) -> Result<Beamformer> {
    let scene = ctx.scene;
    let n = scene.n;
    let k_users = scene.k();
    let power = scene.power;
    let support: Vec<usize> = (0..n).filter(|&i| a[i] > 1e-12).collect();
    if support.is_empty() {
        if k_users > 0 {
            return Err(Error::SinrUnreachable { user: 0 });
        }
        let fl = RMat::zeros(ctx.scaling.dim(), ctx.scaling.dim());
        return Ok(Beamformer {
            w: CMat::zeros(n, n),
            r_w: CMat::zeros(n, n),
            r_k: vec![],
            normalized_bcrb: ctx.normalized_bcrb(fl)?,
            residual_min_eig: 0.0,
        });
    }
    let s = support.len();

    let map = map_in_rw(&ctx.pm, a, b, precision, scene.snapshots);
    let coeffs: Vec<RMat> =
        map.coeffs.iter().map(|cm| embed_unchecked(&herm_part(&submatrix(cm, &support))) * (0.5 * power)).collect();

    let mut problem = ConicProblem::new();
    let r_blocks: Vec<BlockId> = (0..=k_users).map(|_| problem.add_psd(2 * s)).collect();
    let lp = problem.add_nonneg(k_users + 1);
    ctx.scaling.add_lmi(&mut problem, |p, q| {
        let cm = &coeffs[map.index(p, q)];
        r_blocks.iter().map(|&blk| (blk, Coeff::Dense(cm.clone()))).collect()
    });

    let mut sinr_rows = Vec::with_capacity(k_users);
    for (k, user) in scene.users.iter().enumerate() {
        let cv = user_vector(scene, k, a);
        let cs = CVec::from_fn(s, |i, _| cv[support[i]]);
        let g = embed_unchecked(&(&cs * cs.adjoint())) * (0.5 * power / user.noise);
        let mut terms: Vec<(BlockId, Coeff)> = r_blocks
            .iter()
            .enumerate()
            .map(|(j, &blk)| {
                let scale = if j == k { 1.0 / user.sinr_min } else { -1.0 };
                (blk, Coeff::Dense(&g * scale))
            })
            .collect();
        terms.push((lp, Coeff::diag(k, -1.0)));
        sinr_rows.push(problem.constraints.len());
        problem.add_constraint(terms, 1.0);
    }

    let a2 = RVec::from_fn(s, |i, _| a[support[i]] * a[support[i]]);
    let pw = embed_unchecked(&CMat::from_diagonal(&a2.map(|v| c(v, 0.0)))) * 0.5;
    let mut terms: Vec<(BlockId, Coeff)> = r_blocks.iter().map(|&blk| (blk, Coeff::Dense(pw.clone()))).collect();
    terms.push((lp, Coeff::diag(k_users, 1.0)));
    problem.add_constraint(terms, 1.0);

    let sol = ctx.solve(&problem)?;
    if sol.status == Status::PrimalInfeasible && k_users > 0 {
        return Err(Error::SinrUnreachable { user: blamed_user(&sol, &sinr_rows) });
    }
    accept(&sol, "beamformer relaxation")?;

    let lift = |blk: BlockId| -> CMat {
        let h = hermitian_from_embedding(sol.block(blk).as_psd()) * c(power, 0.0);
        let mut full = CMat::zeros(n, n);
        for (i, &si) in support.iter().enumerate() {
            for (j, &sj) in support.iter().enumerate() {
                full[(si, sj)] = h[(i, j)];
            }
        }
        full
    };
    let relaxed: Vec<CMat> = r_blocks.iter().map(|&blk| lift(blk)).collect();
    let r_w = herm_part(&relaxed.iter().fold(CMat::zeros(n, n), |acc, r| acc + r));

    let mut w = CMat::zeros(n, k_users + n);
    let mut r_k = Vec::with_capacity(k_users);
    for k in 0..k_users {
        let wk = rank_one_beam(&relaxed[k], &user_vector(scene, k, a)).ok_or(Error::SinrUnreachable { user: k })?;
        r_k.push(&wk * wk.adjoint());
        w.set_column(k, &wk);
    }
    let residual = herm_part(&(r_k.iter().fold(r_w.clone(), |acc, r| acc - r)));
    let (vals, vecs) = herm_eig(&residual);
    let residual_min_eig = vals.min() / power;
    if residual_min_eig < -1e-8 {
        return Err(Error::Numerical(format!("R_w - sum R_k has eigenvalue {:.3e} P", residual_min_eig)));
    }
    for i in 0..n {
        let lam = vals[i].max(0.0);
        w.set_column(k_users + i, &(vecs.column(i) * c(lam.sqrt(), 0.0)));
    }
    // Guard against the solver's feasibility tolerance.
    let used = scene.transmit_power(a, &w);
    let mut r_w = r_w;
    if used > power {
        let shrink = power / used;
        w *= c(shrink.sqrt(), 0.0);
        r_w *= c(shrink, 0.0);
        r_k.iter_mut().for_each(|r| *r *= c(shrink, 0.0));
    }
    Ok(Beamformer { w, r_w, r_k, normalized_bcrb: sol.primal_objective, residual_min_eig })
}

/// Result of the `a` or `b` subproblem.
#[derive(Clone, Debug)]
pub struct LiftedUpdate {
    pub value: RVec,
    /// The lifted `(N+1) x (N+1)` solution, if the relaxation solved.
    pub lifted: Option<RMat>,
    pub rank_one: bool,
    /// Set when the relaxation failed and the previous value was kept.
    pub stalled: bool,
}

fn pad(m: &RMat) -> RMat {
    let n = m.nrows();
    let mut out = RMat::zeros(n + 1, n + 1);
    out.view_mut((0, 0), (n, n)).copy_from(m);
    out
}

/// `E_b`: `Tr{[a; 1][a; 1]^T E_b}` equals the penalty in `a` up to a
/// constant.
pub fn penalty_matrix_a(rho1: f64, rho2: f64, b: &RVec, mu: &RVec) -> RMat {
    let c_b = RVec::from_fn(b.len(), |i, _| 0.5 * rho1 + rho2 * (b[i] - 1.0 + mu[i] / rho2));
    penalty_matrix(rho2 - rho1, &c_b)
}

/// `E_a`: the same for the consensus term in `b`.
pub fn penalty_matrix_b(rho2: f64, a: &RVec, mu: &RVec) -> RMat {
    let lin = RVec::from_fn(a.len(), |i, _| rho2 * (a[i] - 1.0 + mu[i] / rho2));
    penalty_matrix(rho2, &lin)
}

/// `[[diag, lin], [lin^T, 0]]`.
fn penalty_matrix(diag: f64, lin: &RVec) -> RMat {
    let n = lin.len();
    let mut e = RMat::zeros(n + 1, n + 1);
    for i in 0..n {
        e[(i, i)] = diag;
        e[(i, n)] = lin[i];
        e[(n, i)] = lin[i];
    }
    e
}

/// Constraints common to the `a` and `b` relaxations: cardinality bounds on
/// `1^T X_1 1`, box on the diagonal, unit corner. Slack entries start at
/// `slack0` in `lp`.
fn add_lifted_structure(
    problem: &mut ConicProblem,
    x: BlockId,
    lp: BlockId,
    slack0: usize,
    n: usize,
    lo: usize,
    hi: usize,
) {
    let nn = (n * n) as f64;
    let mut ones = RMat::from_element(n, n, 1.0 / nn);
    ones = pad(&ones);
    problem
        .add_constraint(vec![(x, Coeff::Dense(ones.clone())), (lp, Coeff::diag(slack0, -1.0))], (lo * lo) as f64 / nn);
    problem.add_constraint(vec![(x, Coeff::Dense(ones)), (lp, Coeff::diag(slack0 + 1, 1.0))], (hi * hi) as f64 / nn);
    for i in 0..n {
        problem.add_constraint(vec![(x, Coeff::entry(i, i)), (lp, Coeff::diag(slack0 + 2 + i, 1.0))], 1.0);
    }
    problem.add_constraint(vec![(x, Coeff::entry(n, n))], 1.0);
}

fn lifted_problem(
    ctx: &DesignContext,
    map: &LinearFim<RMat>,
    extra_slacks: usize,
    lo: usize,
    hi: usize,
    e: RMat,
) -> (ConicProblem, BlockId, BlockId) {
    let n = ctx.scene.n;
    let mut problem = ConicProblem::new();
    let x = problem.add_psd(n + 1);
    let lp = problem.add_nonneg(extra_slacks + 2 + n);
    let padded: Vec<RMat> = map.coeffs.iter().map(pad).collect();
    ctx.scaling.add_lmi(&mut problem, |p, q| vec![(x, Coeff::Dense(padded[map.index(p, q)].clone()))]);
    problem.add_objective(x, Coeff::Dense(e));
    add_lifted_structure(&mut problem, x, lp, extra_slacks, n, lo, hi);
    (problem, x, lp)
}

fn stream_seed(base: u64, iteration: usize, stream: u64) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add((iteration as u64) << 8).wrapping_add(stream)
}

fn finish(
    ctx: &DesignContext,
    problem: &ConicProblem,
    x: BlockId,
    previous: &RVec,
    bounds: (usize, usize),
    seed: u64,
    objective: impl Fn(&RVec) -> f64,
) -> Result<LiftedUpdate> {
    let sol = match ctx.solve(problem) {
        Ok(sol) => sol,
        Err(Error::Numerical(msg)) => {
            log::warn!("lifted relaxation failed: {msg}");
            return Ok(LiftedUpdate { value: previous.clone(), lifted: None, rank_one: false, stalled: true });
        }
        Err(e) => return Err(e),
    };
    if let Err(e) = accept(&sol, "partition relaxation") {
        log::warn!("keeping previous partition iterate: {e}");
        return Ok(LiftedUpdate { value: previous.clone(), lifted: None, rank_one: false, stalled: true });
    }
    let lifted = sol.block(x).as_psd().clone();
    let Recovered { value, rank_one } =
        recover_vector(&lifted, ctx.params.rank_one_ratio, bounds, ctx.params.randomization_samples, seed, objective);
    Ok(LiftedUpdate { value, lifted: Some(lifted), rank_one, stalled: false })
}

/// Partition subproblem at fixed `W`, `b`, `mu` and noise precision.
pub fn update_a(
    ctx: &DesignContext,
    state: &AdmmState,
    bf: &Beamformer,
    precision: &CMat,
    iteration: usize,
) -> Result<LiftedUpdate> {
    let scene = ctx.scene;
    let n = scene.n;
    let k_users = scene.k();
    let (rho1, rho2) = (ctx.params.rho1, ctx.params.rho2);
    let map = map_in_a(&ctx.pm, &state.b, precision, &bf.r_w, scene.snapshots);

    let e_b = penalty_matrix_a(rho1, rho2, &state.b, &state.mu);
    let lo = k_users;
    let hi = n - scene.min_receive();
    let (mut problem, x, lp) = lifted_problem(ctx, &map, k_users + 1, lo, hi, e_b);

    for (k, user) in scene.users.iter().enumerate() {
        let h = &user.channel;
        let wk = bf.w.column(k);
        let own = CVec::from_fn(n, |i, _| h[i] * wk[i]);
        let total = CMat::from_fn(n, n, |i, j| h[i] * bf.r_w[(i, j)] * h[j].conj());
        let dk = (&own * own.adjoint()) * c(1.0 + 1.0 / user.sinr_min, 0.0) - total;
        let re = pad(&herm_part(&dk).map(|v| v.re / user.noise));
        problem.add_constraint(vec![(x, Coeff::Dense(re)), (lp, Coeff::diag(k, -1.0))], 1.0);
    }
    let pw: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, i, bf.r_w[(i, i)].re / scene.power)).collect();
    problem.add_constraint(vec![(x, Coeff::Sparse(pw)), (lp, Coeff::diag(k_users, 1.0))], 1.0);

    let objective = |cand: &RVec| -> f64 {
        let fl = map.eval(&(cand * cand.transpose()));
        match ctx.normalized_bcrb(fl) {
            Ok(v) => v + penalty(cand, &state.b, &state.mu, rho1, rho2),
            Err(_) => f64::INFINITY,
        }
    };
    finish(ctx, &problem, x, &state.a, (lo, hi), stream_seed(ctx.params.seed, iteration, 1), objective)
}

/// Auxiliary-variable subproblem at fixed `W`, `a`, `mu` and noise precision.
pub fn update_b(
    ctx: &DesignContext,
    state: &AdmmState,
    bf: &Beamformer,
    precision: &CMat,
    iteration: usize,
) -> Result<LiftedUpdate> {
    let scene = ctx.scene;
    let n = scene.n;
    let rho2 = ctx.params.rho2;
    let map = map_in_b(&ctx.pm, &state.a, precision, &bf.r_w, scene.snapshots);

    let e_a = penalty_matrix_b(rho2, &state.a, &state.mu);
    let lo = scene.min_receive();
    let hi = n - scene.k();
    let (problem, x, _) = lifted_problem(ctx, &map, 0, lo, hi, e_a);

    let objective = |cand: &RVec| -> f64 {
        let fl = map.eval(&(cand * cand.transpose()));
        match ctx.normalized_bcrb(fl) {
            Ok(v) => v + penalty(&state.a, cand, &state.mu, 0.0, rho2),
            Err(_) => f64::INFINITY,
        }
    };
    finish(ctx, &problem, x, &state.b, (lo, hi), stream_seed(ctx.params.seed, iteration, 2), objective)
}
