//! Prior and likelihood Fisher information and the weighted BCRB.
//!
//! Parameters are ordered `xi = [theta; Re alpha; Im alpha]`. The likelihood
//! FIM uses the design convention `S S^H = L I`, so
//! `F_L(p, q) = 2L Re Tr{Psi D_q R_w D_p^H}` with `D_p = B M_p A` and
//! `M_p = dG/dxi_p`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{
    c, condition_sym, diag_c, frob_c, herm_eig, herm_part, inv_hpd, is_binary, psd_factor, sym_part, CMat, CVec, RMat,
    RVec, J,
};
use crate::scene::{Scene, TargetModel};

#[derive(Clone, Debug, PartialEq)]
pub struct PriorSpec {
    pub mean_theta: RVec,
    pub cov_theta: RMat,
    pub mean_alpha: CVec,
    pub cov_alpha: CMat,
}

impl PriorSpec {
    pub fn n_theta(&self) -> usize {
        self.mean_theta.len()
    }

    pub fn n_alpha(&self) -> usize {
        self.mean_alpha.len()
    }

    /// Length of `xi`.
    pub fn dim(&self) -> usize {
        self.n_theta() + 2 * self.n_alpha()
    }

    pub fn validate(&self) -> Result<()> {
        let (t, k) = (self.n_theta(), self.n_alpha());
        if self.cov_theta.shape() != (t, t) || self.cov_alpha.shape() != (k, k) {
            return Err(Error::Dimension("prior covariance shape mismatch".into()));
        }
        if sym_part(&self.cov_theta).cholesky().is_none() {
            return Err(Error::Singular {
                what: "DOA prior covariance".into(),
                condition: condition_sym(&self.cov_theta),
            });
        }
        if herm_part(&self.cov_alpha).cholesky().is_none() {
            return Err(Error::Singular { what: "RCS prior covariance".into(), condition: f64::INFINITY });
        }
        Ok(())
    }

    /// Same priors with `Sigma_theta` multiplied by `factor`.
    pub fn with_theta_scale(&self, factor: f64) -> Self {
        Self { cov_theta: &self.cov_theta * factor, ..self.clone() }
    }
}

/// `(F_theta, F_alpha)` with `F_alpha = 2 [[Re P, -Im P], [Im P, Re P]]`, `P = Sigma_alpha^{-1}`.
pub fn prior_fim(priors: &PriorSpec) -> Result<(RMat, RMat)> {
    priors.validate()?;
    let ft = crate::linalg::inv_spd(&priors.cov_theta, "DOA prior covariance")?;
    let p = inv_hpd(&priors.cov_alpha, "RCS prior covariance")?;
    let k = p.nrows();
    let mut fa = RMat::zeros(2 * k, 2 * k);
    for i in 0..k {
        for j in 0..k {
            let v = p[(i, j)];
            fa[(i, j)] = 2.0 * v.re;
            fa[(k + i, k + j)] = 2.0 * v.re;
            fa[(i, k + j)] = -2.0 * v.im;
            fa[(k + i, j)] = 2.0 * v.im;
        }
    }
    Ok((sym_part(&ft), sym_part(&fa)))
}

#[derive(Clone, Debug)]
pub struct FimBlocks {
    pub likelihood: RMat,
    pub prior_theta: RMat,
    pub prior_alpha: RMat,
}

impl FimBlocks {
    pub fn new(likelihood: RMat, priors: &PriorSpec) -> Result<Self> {
        let (prior_theta, prior_alpha) = prior_fim(priors)?;
        if likelihood.nrows() != priors.dim() {
            return Err(Error::Dimension(format!(
                "likelihood FIM is {}x{}, priors need {}",
                likelihood.nrows(),
                likelihood.ncols(),
                priors.dim()
            )));
        }
        Ok(Self { likelihood, prior_theta, prior_alpha })
    }

    pub fn n_theta(&self) -> usize {
        self.prior_theta.nrows()
    }

    pub fn theta_theta(&self) -> RMat {
        let t = self.n_theta();
        self.likelihood.view((0, 0), (t, t)).into_owned()
    }

    pub fn theta_alpha(&self) -> RMat {
        let t = self.n_theta();
        let m = self.prior_alpha.nrows();
        self.likelihood.view((0, t), (t, m)).into_owned()
    }

    pub fn alpha_alpha(&self) -> RMat {
        let t = self.n_theta();
        let m = self.prior_alpha.nrows();
        self.likelihood.view((t, t), (m, m)).into_owned()
    }

    /// `F_B = F_L + blkdiag(F_theta, F_alpha)`.
    pub fn bayesian(&self) -> RMat {
        let t = self.n_theta();
        let m = self.prior_alpha.nrows();
        let mut f = self.likelihood.clone();
        f.view_mut((0, 0), (t, t)).zip_apply(&self.prior_theta, |x, y| *x += y);
        f.view_mut((t, t), (m, m)).zip_apply(&self.prior_alpha, |x, y| *x += y);
        sym_part(&f)
    }
}

#[derive(Clone, Debug)]
pub struct Bcrb {
    /// `Tr{Lambda J^{-1}}`.
    pub weighted: f64,
    /// Diagonal of the theta block of `F_B^{-1}`.
    pub per_parameter: RVec,
    /// Schur complement `J`.
    pub schur: RMat,
}

impl Bcrb {
    /// Mean of the per-parameter root bounds, in degrees.
    pub fn mean_root_deg(&self) -> f64 {
        let n = self.per_parameter.len() as f64;
        self.per_parameter.iter().map(|v| v.max(0.0).sqrt().to_degrees()).sum::<f64>() / n
    }
}

/// Weighted BCRB through the Schur complement of the alpha block.
pub fn bcrb(blocks: &FimBlocks, weights: &RVec) -> Result<Bcrb> {
    let ftt = blocks.theta_theta() + &blocks.prior_theta;
    let fta = blocks.theta_alpha();
    let faa = sym_part(&(blocks.alpha_alpha() + &blocks.prior_alpha));
    let faa_ch = faa
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular { what: "F_aa + F_alpha".into(), condition: condition_sym(&faa) })?;
    let schur = sym_part(&(&ftt - &fta * faa_ch.solve(&fta.transpose())));
    let inv = schur
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular { what: "BCRB Schur complement".into(), condition: condition_sym(&schur) })?
        .inverse();
    if weights.len() != inv.nrows() {
        return Err(Error::Dimension(format!("{} weights for {} angles", weights.len(), inv.nrows())));
    }
    let weighted = (0..inv.nrows()).map(|i| weights[i] * inv[(i, i)]).sum();
    Ok(Bcrb { weighted, per_parameter: inv.diagonal(), schur })
}

/// Noise precision `Psi` used in place of `R_n^{-1}`.
///
/// At a binary partition the receive-support block of `R_n` is inverted and
/// zeros are embedded elsewhere. At fractional `a`, `(R_n + sigma^2 A^2)^{-1}`
/// is used; it coincides with the binary rule after `B`-masking and keeps the
/// masks from cancelling against `R_n^{-1}` when `b = 1 - a`.
pub fn noise_precision(r_n: &CMat, a: &RVec, sigma2: f64) -> Result<CMat> {
    let n = a.len();
    let eps = 1e-12 * sigma2;
    if is_binary(a, 0.0) {
        let rx: Vec<usize> = (0..n).filter(|&i| a[i] == 0.0).collect();
        let mut out = CMat::zeros(n, n);
        if rx.is_empty() {
            return Ok(out);
        }
        let sub = CMat::from_fn(rx.len(), rx.len(), |i, j| r_n[(rx[i], rx[j])])
            + CMat::identity(rx.len(), rx.len()) * c(eps, 0.0);
        let inv = inv_hpd(&sub, "receive-support noise covariance")?;
        for (i, &ri) in rx.iter().enumerate() {
            for (j, &rj) in rx.iter().enumerate() {
                out[(ri, rj)] = inv[(i, j)];
            }
        }
        Ok(out)
    } else {
        relaxed_noise_precision(r_n, a, sigma2)
    }
}

/// `(R_n + sigma^2 A^2 + eps I)^{-1}` at any `a`, binary or not.
pub fn relaxed_noise_precision(r_n: &CMat, a: &RVec, sigma2: f64) -> Result<CMat> {
    let eps = 1e-12 * sigma2;
    let reg = r_n + diag_c(&a.map(|v| sigma2 * v * v + eps));
    inv_hpd(&reg, "regularized noise covariance")
}

/// `M_p = dG/dxi_p` for every component of `xi`, unmasked.
#[derive(Clone, Debug)]
pub struct ParamMatrices {
    pub m: Vec<CMat>,
    pub n_theta: usize,
}

pub fn param_matrices(model: &TargetModel, theta: &[f64], alpha: &CVec, n: usize) -> ParamMatrices {
    let resp = model.responses(theta, n, 1);
    let nt = model.n_theta();
    let mut m = Vec::with_capacity(nt + 2 * alpha.len());
    for k in 0..nt {
        m.push(resp.combine_d1(k, alpha.as_slice()));
    }
    for hc in &resp.h {
        m.push(hc.clone());
    }
    for hc in &resp.h {
        m.push(hc * J);
    }
    ParamMatrices { m, n_theta: nt }
}

#[derive(Clone, Debug)]
pub struct LikelihoodFim {
    pub info: RMat,
    /// Set when `b = 0`: no antenna receives and the FIM is zero.
    pub receive_empty: bool,
}

fn complement(a: &RVec) -> RVec {
    a.map(|v| 1.0 - v)
}

/// Trace form over arbitrary derivative matrices and masks.
pub fn likelihood_fim_general(
    pm: &ParamMatrices,
    a: &RVec,
    b: &RVec,
    precision: &CMat,
    r_w: &CMat,
    snapshots: usize,
) -> RMat {
    let am = diag_c(a);
    let bm = diag_c(b);
    let d: Vec<CMat> = pm.m.iter().map(|m| &bm * m * &am).collect();
    let y: Vec<CMat> = d.iter().map(|dq| precision * dq * r_w).collect();
    let nf = d.len();
    let scale = 2.0 * snapshots as f64;
    let mut f = RMat::zeros(nf, nf);
    for p in 0..nf {
        for q in p..nf {
            let v = scale * frob_c(&d[p], &y[q]).re;
            f[(p, q)] = v;
            f[(q, p)] = v;
        }
    }
    f
}

/// One rank-one piece `coef * u v^T` of a derivative matrix.
struct Term {
    coef: Complex64,
    u: CVec,
    v: CVec,
}

/// Point-target FIM in factored form: every entry is a sum of products
/// `(a^T diag(x) R_w diag(y^*) a) (b^T diag(u^*) Psi diag(v) b)`.
pub fn likelihood_fim_point(
    steering: &[(CVec, CVec)],
    alpha: &CVec,
    a: &RVec,
    r_w: &CMat,
    precision: &CMat,
    snapshots: usize,
) -> LikelihoodFim {
    let b = complement(a);
    let info = point_fim_factored(steering, alpha, a, &b, r_w, precision, snapshots);
    LikelihoodFim { info, receive_empty: b.iter().all(|&v| v == 0.0) }
}

pub(crate) fn point_fim_factored(
    steering: &[(CVec, CVec)],
    alpha: &CVec,
    a: &RVec,
    b: &RVec,
    r_w: &CMat,
    precision: &CMat,
    snapshots: usize,
) -> RMat {
    let t = steering.len();
    let one = c(1.0, 0.0);
    let mut params: Vec<Vec<Term>> = Vec::with_capacity(3 * t);
    for (i, (h, hd)) in steering.iter().enumerate() {
        params.push(vec![
            Term { coef: alpha[i], u: hd.clone(), v: h.clone() },
            Term { coef: alpha[i], u: h.clone(), v: hd.clone() },
        ]);
    }
    for (h, _) in steering {
        params.push(vec![Term { coef: one, u: h.clone(), v: h.clone() }]);
    }
    for (h, _) in steering {
        params.push(vec![Term { coef: J, u: h.clone(), v: h.clone() }]);
    }

    let tx = |x: &CVec, y: &CVec| -> Complex64 {
        let n = a.len();
        let mut acc = c(0.0, 0.0);
        for m in 0..n {
            if a[m] == 0.0 {
                continue;
            }
            let left = x[m] * a[m];
            for k in 0..n {
                acc += left * r_w[(m, k)] * y[k].conj() * a[k];
            }
        }
        acc
    };
    let rx = |u: &CVec, v: &CVec| -> Complex64 {
        let n = b.len();
        let mut acc = c(0.0, 0.0);
        for m in 0..n {
            if b[m] == 0.0 {
                continue;
            }
            let left = u[m].conj() * b[m];
            for k in 0..n {
                acc += left * precision[(m, k)] * v[k] * b[k];
            }
        }
        acc
    };

    let nf = params.len();
    let scale = 2.0 * snapshots as f64;
    let mut f = RMat::zeros(nf, nf);
    for p in 0..nf {
        for q in p..nf {
            let mut acc = c(0.0, 0.0);
            for tq in &params[q] {
                for tp in &params[p] {
                    acc += tp.coef.conj() * tq.coef * tx(&tq.v, &tp.v) * rx(&tp.u, &tq.u);
                }
            }
            f[(p, q)] = scale * acc.re;
            f[(q, p)] = scale * acc.re;
        }
    }
    f
}

/// Extended-target response aggregates.
#[derive(Clone, Debug)]
pub struct EtResponse {
    pub angles: Vec<f64>,
    pub h: Vec<CMat>,
    pub h_theta: CMat,
    pub h_delta: CMat,
    pub g: CMat,
}

impl EtResponse {
    pub fn new(center: f64, spread: f64, offsets: &RVec, alpha: &CVec, n: usize, gain: f64) -> Self {
        let pi = std::f64::consts::PI;
        let q = diag_c(&crate::scene::element_positions(n));
        let angles: Vec<f64> = offsets.iter().map(|w| center + spread * w).collect();
        let mut h = Vec::with_capacity(angles.len());
        let mut h_theta = CMat::zeros(n, n);
        let mut h_delta = CMat::zeros(n, n);
        let mut g = CMat::zeros(n, n);
        for (i, &phi) in angles.iter().enumerate() {
            let v = crate::scene::steering_vector(phi, n, gain);
            let hi = &v * v.transpose();
            let sym = &q * &hi + &hi * &q;
            let base = sym * (c(0.0, -pi * phi.cos()) * alpha[i]);
            h_delta += &base * c(offsets[i], 0.0);
            h_theta += base;
            g += &hi * alpha[i];
            h.push(hi);
        }
        Self { angles, h, h_theta, h_delta, g }
    }
}

/// Extended-target FIM, `(2 + 2 N_bins)^2`, in trace form.
pub fn likelihood_fim_extended(
    et: &EtResponse,
    a: &RVec,
    r_w: &CMat,
    precision: &CMat,
    snapshots: usize,
) -> LikelihoodFim {
    let b = complement(a);
    let mut m = vec![et.h_theta.clone(), et.h_delta.clone()];
    m.extend(et.h.iter().cloned());
    m.extend(et.h.iter().map(|h| h * J));
    let pm = ParamMatrices { m, n_theta: 2 };
    let info = likelihood_fim_general(&pm, a, &b, precision, r_w, snapshots);
    LikelihoodFim { info, receive_empty: b.iter().all(|&v| v == 0.0) }
}

/// FIM entries as linear functionals of a matrix variable.
///
/// `coeffs[idx(p, q)]` holds the coefficient for `p <= q`; the entry value is
/// `Re Tr{C_pq X}` (complex maps) or `Tr{C_pq X}` (real maps).
#[derive(Clone, Debug)]
pub struct LinearFim<T> {
    pub dim: usize,
    pub coeffs: Vec<T>,
}

impl<T> LinearFim<T> {
    pub fn index(&self, p: usize, q: usize) -> usize {
        let (p, q) = if p <= q { (p, q) } else { (q, p) };
        p * self.dim - p * (p + 1) / 2 + q
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.dim).flat_map(move |p| (p..self.dim).map(move |q| (p, q)))
    }
}

impl LinearFim<CMat> {
    pub fn eval(&self, x: &CMat) -> RMat {
        let mut f = RMat::zeros(self.dim, self.dim);
        for (p, q) in self.pairs() {
            let v = crate::linalg::re_trace_prod(&self.coeffs[self.index(p, q)], x);
            f[(p, q)] = v;
            f[(q, p)] = v;
        }
        f
    }
}

impl LinearFim<RMat> {
    pub fn eval(&self, x: &RMat) -> RMat {
        let mut f = RMat::zeros(self.dim, self.dim);
        for (p, q) in self.pairs() {
            let v = crate::linalg::frob(&self.coeffs[self.index(p, q)], x);
            f[(p, q)] = v;
            f[(q, p)] = v;
        }
        f
    }
}

/// `F_L(p, q) = Re Tr{C_pq R_w}` with `C_pq = 2L Herm(A M_p^H B Psi B M_q A)`.
pub fn map_in_rw(pm: &ParamMatrices, a: &RVec, b: &RVec, precision: &CMat, snapshots: usize) -> LinearFim<CMat> {
    let am = diag_c(a);
    let bm = diag_c(b);
    let core = &bm * precision * &bm;
    let left: Vec<CMat> = pm.m.iter().map(|m| &am * m.adjoint() * &core).collect();
    let right: Vec<CMat> = pm.m.iter().map(|m| m * &am).collect();
    let dim = pm.m.len();
    let scale = c(2.0 * snapshots as f64, 0.0);
    let mut coeffs = Vec::with_capacity(dim * (dim + 1) / 2);
    for p in 0..dim {
        for q in p..dim {
            coeffs.push(herm_part(&(&left[p] * &right[q] * scale)));
        }
    }
    LinearFim { dim, coeffs }
}

/// `F_L(p, q) = Tr{C_pq a a^T}` with `C_pq = Sym(2L Re(K_pq o R_w^T))`.
pub fn map_in_a(pm: &ParamMatrices, b: &RVec, precision: &CMat, r_w: &CMat, snapshots: usize) -> LinearFim<RMat> {
    let bm = diag_c(b);
    let core = &bm * precision * &bm;
    let left: Vec<CMat> = pm.m.iter().map(|m| m.adjoint() * &core).collect();
    let dim = pm.m.len();
    let scale = 2.0 * snapshots as f64;
    let n = b.len();
    let mut coeffs = Vec::with_capacity(dim * (dim + 1) / 2);
    for p in 0..dim {
        for q in p..dim {
            let k = &left[p] * &pm.m[q];
            let cm = RMat::from_fn(n, n, |i, j| scale * (k[(i, j)] * r_w[(j, i)]).re);
            coeffs.push(sym_part(&cm));
        }
    }
    LinearFim { dim, coeffs }
}

/// `F_L(p, q) = Tr{C_pq b b^T}` with `C_pq = Sym(2L Re(Psi o E_pq^T))`.
pub fn map_in_b(pm: &ParamMatrices, a: &RVec, precision: &CMat, r_w: &CMat, snapshots: usize) -> LinearFim<RMat> {
    let am = diag_c(a);
    let core = &am * r_w * &am;
    let right: Vec<CMat> = pm.m.iter().map(|m| &core * m.adjoint()).collect();
    let dim = pm.m.len();
    let scale = 2.0 * snapshots as f64;
    let n = a.len();
    let mut coeffs = Vec::with_capacity(dim * (dim + 1) / 2);
    for p in 0..dim {
        for q in p..dim {
            let e = &pm.m[q] * &right[p];
            let cm = RMat::from_fn(n, n, |i, j| scale * (precision[(i, j)] * e[(j, i)]).re);
            coeffs.push(sym_part(&cm));
        }
    }
    LinearFim { dim, coeffs }
}

/// Same map as [`map_in_b`], built from the eigen-lift `Psi = sum_n u_n u_n^H`:
/// `C_pq = sum_n Re diag(u_n^H) D_pq diag(u_n)` with `D_pq = 2L M_q A R_w A M_p^H`.
pub fn map_in_b_eigen(pm: &ParamMatrices, a: &RVec, precision: &CMat, r_w: &CMat, snapshots: usize) -> LinearFim<RMat> {
    let (vals, vecs) = herm_eig(precision);
    let us: Vec<CVec> =
        (0..vals.len()).filter(|&i| vals[i] > 0.0).map(|i| vecs.column(i) * c(vals[i].sqrt(), 0.0)).collect();
    let am = diag_c(a);
    let core = &am * r_w * &am;
    let dim = pm.m.len();
    let n = a.len();
    let scale = c(2.0 * snapshots as f64, 0.0);
    let mut coeffs = Vec::new();
    for p in 0..dim {
        for q in p..dim {
            let d = &pm.m[q] * &core * pm.m[p].adjoint() * scale;
            let mut acc = RMat::zeros(n, n);
            for u in &us {
                let lifted = CMat::from_diagonal(&u.conjugate()) * &d * CMat::from_diagonal(u);
                acc += lifted.map(|v| v.re);
            }
            coeffs.push(sym_part(&acc));
        }
    }
    LinearFim { dim, coeffs }
}

/// Finite-difference oracle: differentiates
/// `eta(xi) = vec{B G(theta, alpha) A X}` with `X X^H = L R_w` numerically.
#[allow(clippy::too_many_arguments)]
pub fn fim_fd_oracle(
    model: &TargetModel,
    theta: &RVec,
    alpha: &CVec,
    a: &RVec,
    r_w: &CMat,
    precision: &CMat,
    snapshots: usize,
    step: f64,
) -> Result<RMat> {
    let scale0 = theta.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    if !(step > 1e-12 * scale0) {
        return Err(Error::Numerical(format!("finite-difference step {step:e} underflows")));
    }
    let n = a.len();
    let (f, _) = psd_factor(r_w);
    let x = diag_c(a) * f * c((snapshots as f64).sqrt(), 0.0);
    let bm = diag_c(&complement(a));
    let nt = theta.len();
    let na = alpha.len();
    let eta = |th: &RVec, al: &CVec| -> CMat {
        let g = model.responses(th.as_slice(), n, 0).combine(al.as_slice());
        &bm * g * &x
    };
    let mut derivs = Vec::with_capacity(nt + 2 * na);
    for k in 0..nt + 2 * na {
        let (mut tp, mut tm) = (theta.clone(), theta.clone());
        let (mut ap, mut am_) = (alpha.clone(), alpha.clone());
        if k < nt {
            tp[k] += step;
            tm[k] -= step;
        } else if k < nt + na {
            ap[k - nt] += c(step, 0.0);
            am_[k - nt] -= c(step, 0.0);
        } else {
            ap[k - nt - na] += c(0.0, step);
            am_[k - nt - na] -= c(0.0, step);
        }
        derivs.push((eta(&tp, &ap) - eta(&tm, &am_)) * c(0.5 / step, 0.0));
    }
    let nf = derivs.len();
    let weighted: Vec<CMat> = derivs.iter().map(|d| precision * d).collect();
    let mut fim = RMat::zeros(nf, nf);
    for p in 0..nf {
        for q in 0..nf {
            fim[(p, q)] = 2.0 * frob_c(&derivs[p], &weighted[q]).re;
        }
    }
    Ok(fim)
}

/// Design-stage FIM of a scene at the prior means.
pub fn scene_fim(scene: &Scene, a: &RVec, b: &RVec, r_w: &CMat, precision: &CMat) -> Result<FimBlocks> {
    let pm = scene_param_matrices(scene, &scene.priors);
    let fl = likelihood_fim_general(&pm, a, b, precision, r_w, scene.snapshots);
    FimBlocks::new(fl, &scene.priors)
}

pub fn scene_param_matrices(scene: &Scene, priors: &PriorSpec) -> ParamMatrices {
    param_matrices(&scene.target, priors.mean_theta.as_slice(), &priors.mean_alpha, scene.n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{default_offsets, steering_derivatives, steering_vector};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_c(rng: &mut ChaCha8Rng) -> Complex64 {
        c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    }

    fn rand_psd(rng: &mut ChaCha8Rng, n: usize, cols: usize) -> CMat {
        let w = CMat::from_fn(n, cols, |_, _| rand_c(rng));
        &w * w.adjoint()
    }

    fn rel(a: &RMat, b: &RMat) -> f64 {
        (a - b).norm() / b.norm().max(1e-300)
    }

    #[test]
    fn prior_fim_examples() {
        let p = PriorSpec {
            mean_theta: RVec::zeros(3),
            cov_theta: RMat::identity(3, 3) * 0.09,
            mean_alpha: CVec::zeros(3),
            cov_alpha: CMat::identity(3, 3) * c(0.01, 0.0),
        };
        let (ft, fa) = prior_fim(&p).unwrap();
        assert!((ft - RMat::identity(3, 3) / 0.09).norm() < 1e-12);
        assert!((fa - RMat::identity(6, 6) * 200.0).norm() < 1e-9);
    }

    #[test]
    fn prior_fim_matches_log_prior_hessian() {
        // -log p(alpha) = (alpha - mu)^H P (alpha - mu) + const
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = 3;
        let x = CMat::from_fn(k, k, |_, _| rand_c(&mut rng));
        let cov = &x * x.adjoint() + CMat::identity(k, k) * c(0.3, 0.0);
        let mu = CVec::from_fn(k, |_, _| rand_c(&mut rng));
        let p = inv_hpd(&cov, "cov").unwrap();
        let nlp = |z: &RVec| -> f64 {
            let a = CVec::from_fn(k, |i, _| c(z[i], z[k + i]));
            let d = &a - &mu;
            (d.adjoint() * &p * &d)[(0, 0)].re
        };
        let z0 = RVec::from_fn(2 * k, |i, _| if i < k { mu[i].re } else { mu[i - k].im });
        let h = 1e-3;
        let mut hess = RMat::zeros(2 * k, 2 * k);
        for i in 0..2 * k {
            for j in 0..2 * k {
                let e = |s: f64, t: f64| {
                    let mut z = z0.clone();
                    z[i] += s;
                    z[j] += t;
                    nlp(&z)
                };
                hess[(i, j)] = (e(h, h) - e(h, -h) - e(-h, h) + e(-h, -h)) / (4.0 * h * h);
            }
        }
        let spec =
            PriorSpec { mean_theta: RVec::zeros(1), cov_theta: RMat::identity(1, 1), mean_alpha: mu, cov_alpha: cov };
        let (_, fa) = prior_fim(&spec).unwrap();
        assert!(rel(&fa, &hess) < 1e-5, "{}", rel(&fa, &hess));
    }

    #[test]
    fn singular_prior_rejected() {
        let p = PriorSpec {
            mean_theta: RVec::zeros(2),
            cov_theta: RMat::zeros(2, 2),
            mean_alpha: CVec::zeros(1),
            cov_alpha: CMat::identity(1, 1),
        };
        assert!(matches!(prior_fim(&p), Err(Error::Singular { .. })));
    }

    fn point_setup(seed: u64, n: usize, t: usize) -> (Vec<(CVec, CVec)>, TargetModel, RVec, CVec, RVec, CMat, CMat) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = RVec::from_fn(t, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let alpha = CVec::from_fn(t, |_, _| rand_c(&mut rng) * c(2.0, 0.0));
        let a = RVec::from_fn(n, |_, _| 0.05 + 0.9 * rng.random::<f64>());
        let r_w = rand_psd(&mut rng, n, n + 2);
        let r_n = crate::scene::noise_covariance(
            &a,
            &CMat::from_fn(n, n, |_, _| rand_c(&mut rng)),
            &crate::scene::si_channel(n, 0.3, 1.0),
            0.5,
        );
        let psi = noise_precision(&r_n, &a, 0.5).unwrap();
        let steer = theta.iter().map(|&th| (steering_vector(th, n, 0.8), steering_derivatives(th, n, 0.8).0)).collect();
        (steer, TargetModel::Point { gain: 0.8, count: t }, theta, alpha, a, r_w, psi)
    }

    #[test]
    fn point_closed_form_matches_trace_and_oracle() {
        for seed in 0..5 {
            let (steer, model, theta, alpha, a, r_w, psi) = point_setup(seed, 7, 2);
            let f = likelihood_fim_point(&steer, &alpha, &a, &r_w, &psi, 16).info;
            let pm = param_matrices(&model, theta.as_slice(), &alpha, 7);
            let g = likelihood_fim_general(&pm, &a, &complement(&a), &psi, &r_w, 16);
            assert!(rel(&f, &g) < 1e-12, "{}", rel(&f, &g));
            let o = fim_fd_oracle(&model, &theta, &alpha, &a, &r_w, &psi, 16, 1e-6).unwrap();
            assert!(rel(&f, &o) < 1e-5, "{}", rel(&f, &o));
            assert!((&o - o.transpose()).norm() <= 1e-10 * o.norm());
        }
    }

    #[test]
    fn all_transmit_gives_zero() {
        let (steer, model, theta, alpha, _, r_w, _) = point_setup(1, 6, 2);
        let a = RVec::from_element(6, 1.0);
        let psi = noise_precision(&CMat::zeros(6, 6), &a, 1.0).unwrap();
        let f = likelihood_fim_point(&steer, &alpha, &a, &r_w, &psi, 8);
        assert!(f.receive_empty);
        assert_eq!(f.info.norm(), 0.0);
        let o = fim_fd_oracle(&model, &theta, &alpha, &a, &r_w, &psi, 8, 1e-6).unwrap();
        assert_eq!(o.norm(), 0.0);
    }

    #[test]
    fn fim_linear_in_snapshots() {
        let (steer, _, _, alpha, a, r_w, psi) = point_setup(2, 6, 1);
        let f1 = likelihood_fim_point(&steer, &alpha, &a, &r_w, &psi, 10).info;
        let f2 = likelihood_fim_point(&steer, &alpha, &a, &r_w, &psi, 20).info;
        assert!(rel(&(f1 * 2.0), &f2) < 1e-14);
    }

    #[test]
    fn extended_closed_form_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 8;
        let w = default_offsets(3);
        let model = TargetModel::Extended { gain: 0.9, offsets: w.clone() };
        let theta = RVec::from_vec(vec![0.4, 0.06]);
        let alpha = CVec::from_fn(3, |_, _| rand_c(&mut rng));
        let a = RVec::from_fn(n, |_, _| 0.1 + 0.8 * rng.random::<f64>());
        let r_w = rand_psd(&mut rng, n, n);
        let psi = noise_precision(&(CMat::identity(n, n) * c(0.2, 0.0)), &a, 0.2).unwrap();
        let et = EtResponse::new(theta[0], theta[1], &w, &alpha, n, 0.9);
        let f = likelihood_fim_extended(&et, &a, &r_w, &psi, 32).info;
        let o = fim_fd_oracle(&model, &theta, &alpha, &a, &r_w, &psi, 32, 1e-6).unwrap();
        assert!(rel(&f, &o) < 1e-5, "{}", rel(&f, &o));
        let pm = param_matrices(&model, theta.as_slice(), &alpha, n);
        let g = likelihood_fim_general(&pm, &a, &complement(&a), &psi, &r_w, 32);
        assert!(rel(&f, &g) < 1e-12);
    }

    #[test]
    fn extended_unit_offset_collapses_angle_rows() {
        let n = 6;
        let w = RVec::from_vec(vec![1.0]);
        let alpha = CVec::from_element(1, c(1.0, 0.5));
        let et = EtResponse::new(0.3, 0.05, &w, &alpha, n, 1.0);
        let a = RVec::from_fn(n, |i, _| if i < 3 { 0.8 } else { 0.2 });
        let r_w = CMat::identity(n, n);
        let psi = CMat::identity(n, n);
        let f = likelihood_fim_extended(&et, &a, &r_w, &psi, 4).info;
        assert!((f[(0, 0)] - f[(1, 1)]).abs() < 1e-12 * f[(0, 0)]);
        assert!((f[(0, 0)] - f[(0, 1)]).abs() < 1e-12 * f[(0, 0)]);
        let ones = RVec::from_element(n, 1.0);
        assert_eq!(likelihood_fim_extended(&et, &ones, &r_w, &psi, 4).info.norm(), 0.0);
    }

    #[test]
    fn oracle_rejects_tiny_step() {
        let (_, model, theta, alpha, a, r_w, psi) = point_setup(0, 4, 1);
        assert!(fim_fd_oracle(&model, &theta, &alpha, &a, &r_w, &psi, 4, 0.0).is_err());
    }

    #[test]
    fn decoupled_bcrb() {
        let priors = PriorSpec {
            mean_theta: RVec::zeros(2),
            cov_theta: RMat::identity(2, 2) * 0.5,
            mean_alpha: CVec::zeros(1),
            cov_alpha: CMat::identity(1, 1),
        };
        let mut fl = RMat::zeros(4, 4);
        fl[(0, 0)] = 3.0;
        fl[(1, 1)] = 8.0;
        fl[(2, 2)] = 1.0;
        let blocks = FimBlocks::new(fl, &priors).unwrap();
        let b = bcrb(&blocks, &RVec::from_vec(vec![1.0, 1.0])).unwrap();
        assert!((b.weighted - (1.0 / 5.0 + 1.0 / 10.0)).abs() < 1e-14);
    }

    #[test]
    fn bcrb_singular_reports() {
        let priors = PriorSpec {
            mean_theta: RVec::zeros(1),
            cov_theta: RMat::identity(1, 1),
            mean_alpha: CVec::zeros(1),
            cov_alpha: CMat::identity(1, 1),
        };
        let mut fl = RMat::zeros(3, 3);
        fl[(0, 0)] = -1.0;
        let blocks = FimBlocks::new(fl, &priors).unwrap();
        assert!(matches!(bcrb(&blocks, &RVec::from_element(1, 1.0)), Err(Error::Singular { .. })));
    }

    #[test]
    fn binary_precision_inverts_receive_support() {
        let n = 5;
        let a = RVec::from_vec(vec![1.0, 0.0, 1.0, 0.0, 0.0]);
        let w = CMat::from_fn(n, n + 1, |i, j| c(i as f64, j as f64 * 0.1));
        let r_n = crate::scene::noise_covariance(&a, &w, &crate::scene::si_channel(n, 0.2, 1.0), 0.3);
        let psi = noise_precision(&r_n, &a, 0.3).unwrap();
        let prod = &r_n * &psi;
        let rx = [1usize, 3, 4];
        for &i in &rx {
            for &j in &rx {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((prod[(i, j)] - c(e, 0.0)).norm() < 1e-9);
            }
        }
        assert_eq!(psi[(0, 0)].norm(), 0.0);
        // Fractional formula agrees after B-masking at binary a.
        let reg = inv_hpd(&(r_n.clone() + diag_c(&a.map(|v| 0.3 * v * v))), "x").unwrap();
        let bm = diag_c(&complement(&a));
        assert!((&bm * &reg * &bm - &bm * &psi * &bm).norm() < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn linear_maps_reproduce_direct_fim(seed in 0u64..10_000, et in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 6;
            let (model, theta) = if et {
                (TargetModel::Extended { gain: 1.0, offsets: default_offsets(2) }, vec![0.3, 0.05])
            } else {
                (TargetModel::Point { gain: 1.0, count: 2 }, vec![0.2, 0.6])
            };
            let alpha = CVec::from_fn(model.n_alpha(), |_, _| rand_c(&mut rng));
            let a = RVec::from_fn(n, |_, _| rng.random::<f64>());
            let b = RVec::from_fn(n, |_, _| rng.random::<f64>());
            let r_w = rand_psd(&mut rng, n, n);
            let psi = rand_psd(&mut rng, n, n) + CMat::identity(n, n);
            let pm = param_matrices(&model, &theta, &alpha, n);
            let direct = likelihood_fim_general(&pm, &a, &b, &psi, &r_w, 8);
            let scale = direct.norm();

            let in_rw = map_in_rw(&pm, &a, &b, &psi, 8).eval(&r_w);
            prop_assert!((&in_rw - &direct).norm() <= 1e-8 * scale);

            let a1 = &a * a.transpose();
            let in_a = map_in_a(&pm, &b, &psi, &r_w, 8).eval(&a1);
            prop_assert!((&in_a - &direct).norm() <= 1e-8 * scale);

            let b1 = &b * b.transpose();
            let in_b = map_in_b(&pm, &a, &psi, &r_w, 8).eval(&b1);
            prop_assert!((&in_b - &direct).norm() <= 1e-8 * scale);
            let lifted = map_in_b_eigen(&pm, &a, &psi, &r_w, 8).eval(&b1);
            prop_assert!((&lifted - &direct).norm() <= 1e-8 * scale);

            if !et {
                let steer: Vec<(CVec, CVec)> = theta
                    .iter()
                    .map(|&th| (steering_vector(th, n, 1.0), steering_derivatives(th, n, 1.0).0))
                    .collect();
                let fact = point_fim_factored(&steer, &alpha, &a, &b, &r_w, &psi, 8);
                prop_assert!((&fact - &direct).norm() <= 1e-10 * scale);
            }
        }

        #[test]
        fn schur_matches_full_inverse(seed in 0u64..10_000, t in 1usize..4, k in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dim = t + 2 * k;
            let x = RMat::from_fn(dim, dim + 2, |_, _| rng.random::<f64>() - 0.5);
            let fl = &x * x.transpose();
            let priors = PriorSpec {
                mean_theta: RVec::zeros(t),
                cov_theta: RMat::identity(t, t) * (0.5 + rng.random::<f64>()),
                mean_alpha: CVec::zeros(k),
                cov_alpha: CMat::identity(k, k) * c(0.5 + rng.random::<f64>(), 0.0),
            };
            let blocks = FimBlocks::new(fl, &priors).unwrap();
            let w = RVec::from_fn(t, |_, _| 0.1 + rng.random::<f64>());
            let b = bcrb(&blocks, &w).unwrap();
            let inv = blocks.bayesian().try_inverse().unwrap();
            let expect: f64 = (0..t).map(|i| w[i] * inv[(i, i)]).sum();
            prop_assert!((b.weighted - expect).abs() <= 1e-10 * expect);
            prop_assert!(b.weighted > 0.0);
        }
    }
}
