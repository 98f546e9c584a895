//! Primal-dual interior point method with Nesterov-Todd scaling and a
//! Mehrotra predictor-corrector.

use nalgebra::SymmetricEigen;

use super::problem::{BlockKind, BlockValue, Coeff, ConicProblem, ConicSolution, Status};
use crate::error::{Error, Result};
use crate::linalg::{sym_part, RMat, RVec};

#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub max_iter: usize,
    /// Fraction of the distance to the cone boundary taken per step.
    pub step_fraction: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { gap_tol: 1e-7, feas_tol: 1e-8, max_iter: 200, step_fraction: 0.98 }
    }
}

/// Anything that can solve a [`ConicProblem`].
pub trait ConicBackend {
    fn solve(&self, problem: &ConicProblem) -> Result<ConicSolution>;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct InteriorPoint {
    pub options: SolverOptions,
}

impl ConicBackend for InteriorPoint {
    fn solve(&self, problem: &ConicProblem) -> Result<ConicSolution> {
        solve_with(problem, &self.options)
    }
}

pub fn solve(problem: &ConicProblem, tol: f64, max_iter: usize) -> Result<ConicSolution> {
    solve_with(problem, &SolverOptions { gap_tol: tol, max_iter, ..Default::default() })
}

/// Scaled problem data: rows of `A` by block, with the row scaling applied.
struct Data {
    kinds: Vec<BlockKind>,
    c: Vec<BlockValue>,
    rows: Vec<Vec<(usize, Coeff)>>,
    b: RVec,
}

impl Data {
    fn m(&self) -> usize {
        self.b.len()
    }

    fn apply(&self, x: &[BlockValue]) -> RVec {
        RVec::from_iterator(
            self.m(),
            self.rows.iter().map(|row| row.iter().map(|(blk, c)| x[*blk].inner(c)).sum::<f64>()),
        )
    }

    fn adjoint(&self, y: &RVec) -> Vec<BlockValue> {
        let mut out: Vec<BlockValue> = self.kinds.iter().map(|&k| BlockValue::zeros(k)).collect();
        for (i, row) in self.rows.iter().enumerate() {
            if y[i] == 0.0 {
                continue;
            }
            for (blk, c) in row {
                out[*blk].add_coeff(y[i], c);
            }
        }
        out
    }
}

fn norm(v: &[BlockValue]) -> f64 {
    v.iter().map(|b| b.norm_sq()).sum::<f64>().sqrt()
}

fn dot(a: &[BlockValue], b: &[BlockValue]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

/// Per-block Nesterov-Todd scaling point.
enum Scaling {
    Psd {
        /// `W = r r^T`, with `r^T S r = r^{-1} X r^{-T} = diag(lambda)`.
        r: RMat,
        r_inv: RMat,
        w: RMat,
        lambda: RVec,
        lx: RMat,
        ls: RMat,
    },
    Lp {
        w: RVec,
        lambda: RVec,
    },
}

fn cholesky_jitter(m: &RMat) -> Option<RMat> {
    let sym = sym_part(m);
    if let Some(ch) = sym.clone().cholesky() {
        return Some(ch.l());
    }
    let scale = sym.diagonal().amax().max(1e-300);
    let mut jitter = 1e-14 * scale;
    for _ in 0..6 {
        let shifted = &sym + RMat::identity(sym.nrows(), sym.nrows()) * jitter;
        if let Some(ch) = shifted.cholesky() {
            return Some(ch.l());
        }
        jitter *= 100.0;
    }
    None
}

fn nt_scaling(x: &BlockValue, s: &BlockValue) -> Option<Scaling> {
    match (x, s) {
        (BlockValue::Psd(x), BlockValue::Psd(s)) => {
            let lx = cholesky_jitter(x)?;
            let ls = cholesky_jitter(s)?;
            let svd = (ls.transpose() * &lx).svd(true, true);
            let sv = svd.singular_values.clone();
            if sv.iter().any(|&v| !(v > 0.0)) {
                return None;
            }
            let v = svd.v_t?.transpose();
            let u = svd.u?;
            let inv_sqrt = RMat::from_diagonal(&sv.map(|v| 1.0 / v.sqrt()));
            let sqrt = RMat::from_diagonal(&sv.map(|v| v.sqrt()));
            let r = &lx * &v * &inv_sqrt;
            // r^{-1} = Sigma^{1/2} V^T L_x^{-1} = Sigma^{-1/2} U^T L_s^T
            let r_inv = &inv_sqrt * u.transpose() * ls.transpose();
            let _ = sqrt;
            let w = &r * r.transpose();
            Some(Scaling::Psd { r, r_inv, w, lambda: sv, lx, ls })
        }
        (BlockValue::Nonneg(x), BlockValue::Nonneg(s)) => {
            if x.iter().chain(s.iter()).any(|&v| !(v > 0.0)) {
                return None;
            }
            Some(Scaling::Lp { w: x.zip_map(s, |a, b| (a / b).sqrt()), lambda: x.zip_map(s, |a, b| (a * b).sqrt()) })
        }
        _ => None,
    }
}

impl Scaling {
    /// `W D W`.
    fn wdw(&self, d: &BlockValue) -> BlockValue {
        match (self, d) {
            (Scaling::Psd { w, .. }, BlockValue::Psd(d)) => BlockValue::Psd(sym_part(&(w * d * w))),
            (Scaling::Lp { w, .. }, BlockValue::Nonneg(d)) => {
                BlockValue::Nonneg(RVec::from_fn(d.len(), |i, _| w[i] * w[i] * d[i]))
            }
            _ => unreachable!(),
        }
    }

    /// `W A W` for a coefficient.
    fn wcw(&self, c: &Coeff) -> BlockValue {
        match (self, c) {
            (Scaling::Psd { w, .. }, Coeff::Dense(d)) => BlockValue::Psd(w * d * w),
            (Scaling::Psd { w, .. }, Coeff::Sparse(e)) => {
                let n = w.nrows();
                let mut out = RMat::zeros(n, n);
                for &(i, j, v) in e {
                    let wi = w.column(i);
                    let wj = w.column(j);
                    if i == j {
                        out.ger(v, &wi, &wi, 1.0);
                    } else {
                        out.ger(v, &wi, &wj, 1.0);
                        out.ger(v, &wj, &wi, 1.0);
                    }
                }
                BlockValue::Psd(out)
            }
            (Scaling::Lp { w, .. }, Coeff::Sparse(e)) => {
                let mut out = RVec::zeros(w.len());
                for &(i, _, v) in e {
                    out[i] += v * w[i] * w[i];
                }
                BlockValue::Nonneg(out)
            }
            _ => unreachable!(),
        }
    }

    fn lambda(&self) -> &RVec {
        match self {
            Scaling::Psd { lambda, .. } | Scaling::Lp { lambda, .. } => lambda,
        }
    }

    /// Maps a scaled-space target `G` (symmetric) to `R_c` with
    /// `dX + W dS W = R_c` solving the linearized centrality equation.
    fn rc(&self, g: &BlockValue) -> BlockValue {
        match (self, g) {
            (Scaling::Psd { r, lambda, .. }, BlockValue::Psd(g)) => {
                let n = lambda.len();
                let h = RMat::from_fn(n, n, |i, j| 2.0 * g[(i, j)] / (lambda[i] + lambda[j]));
                BlockValue::Psd(sym_part(&(r * h * r.transpose())))
            }
            (Scaling::Lp { w, lambda }, BlockValue::Nonneg(g)) => {
                BlockValue::Nonneg(RVec::from_fn(g.len(), |i, _| w[i] * g[i] / lambda[i]))
            }
            _ => unreachable!(),
        }
    }

    /// Scaled directions `(r^{-1} dX r^{-T}, r^T dS r)`.
    fn scaled(&self, dx: &BlockValue, ds: &BlockValue) -> (BlockValue, BlockValue) {
        match (self, dx, ds) {
            (Scaling::Psd { r, r_inv, .. }, BlockValue::Psd(dx), BlockValue::Psd(ds)) => {
                (BlockValue::Psd(r_inv * dx * r_inv.transpose()), BlockValue::Psd(r.transpose() * ds * r))
            }
            (Scaling::Lp { w, .. }, BlockValue::Nonneg(dx), BlockValue::Nonneg(ds)) => {
                (BlockValue::Nonneg(dx.component_div(w)), BlockValue::Nonneg(ds.component_mul(w)))
            }
            _ => unreachable!(),
        }
    }

    /// Largest step keeping `X + t dX` and `S + t dS` in the cone.
    fn max_steps(&self, x: &BlockValue, s: &BlockValue, dx: &BlockValue, ds: &BlockValue) -> (f64, f64) {
        match (self, x, s, dx, ds) {
            (Scaling::Psd { lx, ls, .. }, _, _, BlockValue::Psd(dx), BlockValue::Psd(ds)) => {
                (psd_step(lx, dx), psd_step(ls, ds))
            }
            (
                Scaling::Lp { .. },
                BlockValue::Nonneg(x),
                BlockValue::Nonneg(s),
                BlockValue::Nonneg(dx),
                BlockValue::Nonneg(ds),
            ) => (ratio_step(x, dx), ratio_step(s, ds)),
            _ => unreachable!(),
        }
    }
}

fn ratio_step(x: &RVec, dx: &RVec) -> f64 {
    let mut t = f64::INFINITY;
    for i in 0..x.len() {
        if dx[i] < 0.0 {
            t = t.min(-x[i] / dx[i]);
        }
    }
    t
}

fn psd_step(l: &RMat, d: &RMat) -> f64 {
    let linv = match l.clone().try_inverse() {
        Some(v) => v,
        None => return 0.0,
    };
    let m = sym_part(&(&linv * d * linv.transpose()));
    let e = SymmetricEigen::new(m).eigenvalues.min();
    if e < 0.0 {
        -1.0 / e
    } else {
        f64::INFINITY
    }
}

fn solve_spd(m: &RMat, rhs: &RVec) -> Option<RVec> {
    let sym = sym_part(m);
    let scale = sym.diagonal().amax().max(1e-300);
    let mut jitter = 0.0;
    for _ in 0..6 {
        if let Some(ch) = (&sym + RMat::identity(sym.nrows(), sym.nrows()) * jitter).cholesky() {
            // Refinement against the unshifted matrix recovers the accuracy
            // lost to jitter and to ill-conditioning.
            let mut x = ch.solve(rhs);
            for _ in 0..2 {
                let r = rhs - &sym * &x;
                x += ch.solve(&r);
            }
            return Some(x);
        }
        jitter = if jitter == 0.0 { 1e-13 * scale } else { jitter * 100.0 };
    }
    sym.lu().solve(rhs)
}

fn prepare(problem: &ConicProblem) -> (Data, RVec, f64, f64) {
    let kinds = problem.blocks.clone();
    let mut rows: Vec<Vec<(usize, Coeff)>> = Vec::with_capacity(problem.constraints.len());
    let mut b = RVec::zeros(problem.constraints.len());
    let mut row_scale = RVec::zeros(problem.constraints.len());
    for (i, con) in problem.constraints.iter().enumerate() {
        let nrm = con.terms.iter().map(|(_, c)| c.frob_sq()).sum::<f64>().sqrt();
        let s = if nrm > 0.0 { 1.0 / nrm } else { 1.0 };
        row_scale[i] = s;
        b[i] = con.rhs * s;
        rows.push(
            con.terms
                .iter()
                .map(|(blk, c)| {
                    let mut c = c.clone();
                    c.scale(s);
                    (blk.0, c)
                })
                .collect(),
        );
    }
    let mut c: Vec<BlockValue> = kinds.iter().map(|&k| BlockValue::zeros(k)).collect();
    for (blk, obj) in problem.objective.iter().enumerate() {
        if let Some(coeff) = obj {
            c[blk].add_coeff(1.0, coeff);
        }
    }
    let b_scale = b.amax().max(1.0);
    let c_scale = norm(&c).max(1.0);
    let b = b / b_scale;
    let c = c.iter().map(|v| v.scaled(1.0 / c_scale)).collect();
    (Data { kinds, c, rows, b }, row_scale, b_scale, c_scale)
}

pub fn solve_with(problem: &ConicProblem, opts: &SolverOptions) -> Result<ConicSolution> {
    problem.validate()?;
    let (data, row_scale, b_scale, c_scale) = prepare(problem);
    let m = data.m();
    let nu: f64 = data.kinds.iter().map(|k| k.size() as f64).sum();
    if nu == 0.0 {
        return Err(Error::Dimension("conic problem has no variables".into()));
    }

    let start = 10f64.max(nu.sqrt());
    let mut x: Vec<BlockValue> = data.kinds.iter().map(|&k| BlockValue::identity(k, start)).collect();
    let mut s = x.clone();
    let mut y = RVec::zeros(m);
    let b_norm = data.b.norm();
    let c_norm = norm(&data.c);

    let mut status = Status::MaxIterations;
    let mut iterations = 0;
    let mut stall = 0;
    let (mut pobj, mut dobj, mut pinf, mut dinf, mut relgap);
    // Best iterate by the worst of the three residuals, returned if the
    // iteration later degrades and stops short of the tolerances.
    let mut best: Option<(f64, Vec<BlockValue>, RVec, Vec<BlockValue>, [f64; 5])> = None;

    loop {
        let rp = &data.b - data.apply(&x);
        let aty = data.adjoint(&y);
        let rd: Vec<BlockValue> = (0..x.len())
            .map(|k| {
                let mut v = data.c[k].clone();
                v.axpy(-1.0, &aty[k]);
                v.axpy(-1.0, &s[k]);
                v
            })
            .collect();
        pobj = dot(&data.c, &x);
        dobj = data.b.dot(&y);
        let gap = dot(&x, &s);
        let mu = gap / nu;
        pinf = rp.norm() / (1.0 + b_norm);
        dinf = norm(&rd) / (1.0 + c_norm);
        let denom = 1.0 + pobj.abs() + dobj.abs();
        relgap = (pobj - dobj).abs().max(gap.abs()) / denom;
        log::trace!(
            "it {iterations}: pobj {pobj:.6e} dobj {dobj:.6e} pinf {pinf:.2e} dinf {dinf:.2e} gap {relgap:.2e}"
        );
        let merit = (pinf / opts.feas_tol).max(dinf / opts.feas_tol).max(relgap / opts.gap_tol);
        if best.as_ref().is_none_or(|b| merit < b.0) {
            best = Some((merit, x.clone(), y.clone(), s.clone(), [pobj, dobj, pinf, dinf, relgap]));
        }

        if pinf <= opts.feas_tol && dinf <= opts.feas_tol && relgap <= opts.gap_tol {
            status = Status::Optimal;
            break;
        }
        // Farkas rays: unbounded dual objective with bounded slack means the
        // primal is empty, and symmetrically.
        if dobj > 1e8 && (c_norm + norm(&rd)) / dobj < 1e-8 {
            status = Status::PrimalInfeasible;
            break;
        }
        if pobj < -1e8 && (b_norm + rp.norm()) / (-pobj) < 1e-8 {
            status = Status::DualInfeasible;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        iterations += 1;

        let scal: Option<Vec<Scaling>> = x.iter().zip(&s).map(|(xb, sb)| nt_scaling(xb, sb)).collect();
        let scal = match scal {
            Some(v) => v,
            None => {
                status = near_optimal(pinf, dinf, relgap, opts);
                break;
            }
        };

        // Schur complement M_ij = sum_b <A_ib, W_b A_jb W_b>.
        let wcw: Vec<Vec<(usize, BlockValue)>> =
            data.rows.iter().map(|row| row.iter().map(|(blk, c)| (*blk, scal[*blk].wcw(c))).collect()).collect();
        let mut schur = RMat::zeros(m, m);
        for j in 0..m {
            for i in 0..=j {
                let mut acc = 0.0;
                for (blk_i, ci) in &data.rows[i] {
                    for (blk_j, t) in &wcw[j] {
                        if blk_i == blk_j {
                            acc += t.inner(ci);
                        }
                    }
                }
                schur[(i, j)] = acc;
                schur[(j, i)] = acc;
            }
        }
        let wrdw: Vec<BlockValue> = scal.iter().zip(&rd).map(|(sc, r)| sc.wdw(r)).collect();
        let a_wrdw = data.apply(&wrdw);

        let direction = |g: &[BlockValue]| -> Option<(Vec<BlockValue>, RVec, Vec<BlockValue>)> {
            let rc: Vec<BlockValue> = scal.iter().zip(g).map(|(sc, gb)| sc.rc(gb)).collect();
            let rhs = &rp - data.apply(&rc) + &a_wrdw;
            let dy = solve_spd(&schur, &rhs)?;
            let atdy = data.adjoint(&dy);
            let ds: Vec<BlockValue> = (0..rd.len())
                .map(|k| {
                    let mut v = rd[k].clone();
                    v.axpy(-1.0, &atdy[k]);
                    v
                })
                .collect();
            let dx: Vec<BlockValue> = (0..rc.len())
                .map(|k| {
                    let mut v = rc[k].clone();
                    v.axpy(-1.0, &scal[k].wdw(&ds[k]));
                    v
                })
                .collect();
            if dy.iter().any(|v| !v.is_finite()) {
                return None;
            }
            Some((dx, dy, ds))
        };

        let target = |sigma_mu: f64, corr: Option<&[BlockValue]>| -> Vec<BlockValue> {
            scal.iter()
                .enumerate()
                .map(|(k, sc)| {
                    let lam = sc.lambda();
                    match data.kinds[k] {
                        BlockKind::Psd(n) => {
                            let mut g = RMat::from_diagonal(&lam.map(|l| sigma_mu - l * l));
                            if let Some(c) = corr {
                                g -= c[k].as_psd();
                            }
                            let _ = n;
                            BlockValue::Psd(g)
                        }
                        BlockKind::Nonneg(_) => {
                            let mut g = lam.map(|l| sigma_mu - l * l);
                            if let Some(c) = corr {
                                g -= c[k].as_nonneg();
                            }
                            BlockValue::Nonneg(g)
                        }
                    }
                })
                .collect()
        };

        let steps = |dx: &[BlockValue], ds: &[BlockValue]| -> (f64, f64) {
            let mut ap = f64::INFINITY;
            let mut ad = f64::INFINITY;
            for k in 0..x.len() {
                let (p, d) = scal[k].max_steps(&x[k], &s[k], &dx[k], &ds[k]);
                ap = ap.min(p);
                ad = ad.min(d);
            }
            (ap, ad)
        };

        // Predictor.
        let Some((dxa, _, dsa)) = direction(&target(0.0, None)) else {
            status = near_optimal(pinf, dinf, relgap, opts);
            break;
        };
        let (apa, ada) = steps(&dxa, &dsa);
        let (apa, ada) = (apa.min(1.0), ada.min(1.0));
        let mut xa = x.clone();
        let mut sa = s.clone();
        for k in 0..x.len() {
            xa[k].axpy(apa, &dxa[k]);
            sa[k].axpy(ada, &dsa[k]);
        }
        let mu_aff = dot(&xa, &sa) / nu;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // Corrector with the second-order term of the predictor.
        let corr: Vec<BlockValue> = scal
            .iter()
            .enumerate()
            .map(|(k, sc)| {
                let (tx, ts) = sc.scaled(&dxa[k], &dsa[k]);
                match (tx, ts) {
                    (BlockValue::Psd(a), BlockValue::Psd(b)) => BlockValue::Psd(sym_part(&(a * b))),
                    (BlockValue::Nonneg(a), BlockValue::Nonneg(b)) => BlockValue::Nonneg(a.component_mul(&b)),
                    _ => unreachable!(),
                }
            })
            .collect();
        let Some((dx, dy, ds)) = direction(&target(sigma * mu, Some(&corr))) else {
            status = near_optimal(pinf, dinf, relgap, opts);
            break;
        };
        let (ap, ad) = steps(&dx, &ds);
        let ap = (opts.step_fraction * ap).min(1.0);
        let ad = (opts.step_fraction * ad).min(1.0);
        for k in 0..x.len() {
            x[k].axpy(ap, &dx[k]);
            s[k].axpy(ad, &ds[k]);
        }
        y += dy * ad;

        if ap.max(ad) < 1e-10 {
            stall += 1;
            if stall >= 3 {
                status = near_optimal(pinf, dinf, relgap, opts);
                break;
            }
        } else {
            stall = 0;
        }
    }

    if matches!(status, Status::MaxIterations | Status::NumericalFailure) {
        let merit = (pinf / opts.feas_tol).max(dinf / opts.feas_tol).max(relgap / opts.gap_tol);
        if let Some((m, bx, by, bs, r)) = best.filter(|b| b.0 < merit) {
            log::debug!("restoring best iterate (merit {m:.2e} vs {merit:.2e})");
            (x, y, s) = (bx, by, bs);
            [pobj, dobj, pinf, dinf, relgap] = r;
            if near_optimal(pinf, dinf, relgap, opts) == Status::Optimal {
                status = Status::Optimal;
            }
        }
    }

    // Undo the data scaling.
    let x_out: Vec<BlockValue> = x.iter().map(|v| v.scaled(b_scale)).collect();
    let s_out: Vec<BlockValue> = s.iter().map(|v| v.scaled(c_scale)).collect();
    let y_out = RVec::from_fn(m, |i, _| y[i] * c_scale * row_scale[i]);
    Ok(ConicSolution {
        status,
        x: x_out,
        y: y_out,
        s: s_out,
        primal_objective: pobj * b_scale * c_scale,
        dual_objective: dobj * b_scale * c_scale,
        relative_gap: relgap,
        primal_infeasibility: pinf,
        dual_infeasibility: dinf,
        iterations,
    })
}

/// Status when the iteration cannot continue: accept a slightly looser
/// solution rather than discarding a nearly converged point.
fn near_optimal(pinf: f64, dinf: f64, relgap: f64, opts: &SolverOptions) -> Status {
    if pinf <= 1e3 * opts.feas_tol && dinf <= 1e3 * opts.feas_tol && relgap <= 1e2 * opts.gap_tol {
        Status::Optimal
    } else {
        Status::NumericalFailure
    }
}
