//! Joint MAP estimation of target angles and reflection coefficients by a
//! concentrated Newton iteration.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fim::PriorSpec;
use crate::linalg::{c, diag_c, frob_c, herm_part, inv_hpd, inv_spd, sym_eig, sym_part, CMat, CVec, RMat, RVec};
use crate::scene::{Scene, TargetModel};

/// Fixed data of one estimation problem, whitened on the receive support.
///
/// With `R_SS = L L^H` the Cholesky factor of the receive-support block of
/// `R_n`, every snapshot is premultiplied by `L^{-1}`, so the products with
/// `I_L (x) R_n^{-1}` become plain Frobenius inner products.
#[derive(Clone, Debug)]
pub struct MapProblem {
    model: TargetModel,
    n: usize,
    support: Vec<usize>,
    /// `L^{-1}` on the support, `|S| x |S|`.
    whitener: CMat,
    /// Whitened observations, `|S| x L`.
    y: CMat,
    /// Transmitted block `A W S`, `N x L`.
    x: CMat,
    mean_theta: RVec,
    prec_theta: RMat,
    chol_theta: RMat,
    mean_alpha: CVec,
    prec_alpha: CMat,
    /// `Sigma_alpha^{-1} mu_alpha`.
    prior_pull: CVec,
}

/// Quantities at one `theta`.
#[derive(Clone, Debug)]
pub struct MapWorkspace {
    pub theta: RVec,
    /// Whitened regressors, one `|S| x L` matrix per RCS coefficient.
    pub v: Vec<CMat>,
    /// `dV/dtheta_i`, as combinations over coefficients.
    pub v_dot: Vec<Vec<Option<CMat>>>,
    pub v_ddot: Vec<Vec<Vec<Option<CMat>>>>,
    pub d: CMat,
    pub d_inv: CMat,
    pub p: CVec,
    pub alpha: CVec,
    /// Whitened residual `y - V D^{-1} p`.
    pub r: CMat,
}

impl MapProblem {
    /// `y` is the full `N x L` echo block; only receive rows are used.
    pub fn new(
        model: &TargetModel,
        priors: &PriorSpec,
        a: &RVec,
        transmitted: &CMat,
        y: &CMat,
        r_n: &CMat,
    ) -> Result<Self> {
        let n = a.len();
        if let Some((index, &value)) = a.iter().enumerate().find(|(_, &v)| v != 0.0 && v != 1.0) {
            return Err(Error::NonBinaryPartition { index, value });
        }
        if y.nrows() != n || transmitted.nrows() != n || y.ncols() != transmitted.ncols() || r_n.nrows() != n {
            return Err(Error::Dimension("echo, waveform and noise covariance disagree".into()));
        }
        priors.validate()?;
        let support: Vec<usize> = (0..n).filter(|&i| a[i] == 0.0).collect();
        let s = support.len();
        let whitener = if s == 0 {
            CMat::zeros(0, 0)
        } else {
            let sub = CMat::from_fn(s, s, |i, j| r_n[(support[i], support[j])]);
            let scale = match sub.diagonal().iter().map(|v| v.re).fold(0.0, f64::max) {
                v if v > 0.0 => v,
                _ => 1.0,
            };
            let sub = herm_part(&sub) + CMat::identity(s, s) * c(1e-12 * scale, 0.0);
            let l = sub.cholesky().ok_or_else(|| Error::Singular {
                what: "receive-support noise covariance".into(),
                condition: f64::INFINITY,
            })?;
            l.l()
                .solve_lower_triangular(&CMat::identity(s, s))
                .ok_or_else(|| Error::Numerical("triangular solve failed while whitening".into()))?
        };
        let y_s = CMat::from_fn(s, y.ncols(), |i, j| y[(support[i], j)]);
        let prec_theta = inv_spd(&priors.cov_theta, "DOA prior covariance")?;
        let chol_theta = sym_part(&priors.cov_theta)
            .cholesky()
            .ok_or_else(|| Error::InvalidConfig("DOA prior covariance is not PD".into()))?
            .l();
        let prec_alpha = inv_hpd(&priors.cov_alpha, "RCS prior covariance")?;
        let prior_pull = &prec_alpha * &priors.mean_alpha;
        Ok(Self {
            model: model.clone(),
            n,
            y: &whitener * y_s,
            support,
            whitener,
            x: transmitted.clone(),
            mean_theta: priors.mean_theta.clone(),
            prec_theta,
            chol_theta,
            mean_alpha: priors.mean_alpha.clone(),
            prec_alpha,
            prior_pull,
        })
    }

    /// Problem for a design `(a, W)` and one echo block; `R_n` is rebuilt from
    /// the design.
    pub fn from_design(
        scene: &Scene,
        priors: &PriorSpec,
        a: &RVec,
        w: &CMat,
        symbols: &CMat,
        y: &CMat,
    ) -> Result<Self> {
        let x = diag_c(a) * w * symbols;
        let r_n = scene.noise_covariance(a, w);
        Self::new(&scene.target, priors, a, &x, y, &r_n)
    }

    pub fn n_theta(&self) -> usize {
        self.mean_theta.len()
    }

    pub fn prior_mean(&self) -> &RVec {
        &self.mean_theta
    }

    fn whiten(&self, m: &CMat) -> CMat {
        let rows = CMat::from_fn(self.support.len(), self.x.ncols(), |i, j| {
            let r = self.support[i];
            (0..self.n).map(|k| m[(r, k)] * self.x[(k, j)]).sum()
        });
        &self.whitener * rows
    }

    fn regressors(
        &self,
        theta: &RVec,
        order: usize,
    ) -> (Vec<CMat>, Vec<Vec<Option<CMat>>>, Vec<Vec<Vec<Option<CMat>>>>) {
        let resp = self.model.responses(theta.as_slice(), self.n, order);
        let v = resp.h.iter().map(|h| self.whiten(h)).collect();
        let dv = resp.d1.iter().map(|row| row.iter().map(|m| m.as_ref().map(|m| self.whiten(m))).collect()).collect();
        let ddv = resp
            .d2
            .iter()
            .map(|rows| {
                rows.iter().map(|row| row.iter().map(|m| m.as_ref().map(|m| self.whiten(m))).collect()).collect()
            })
            .collect();
        (v, dv, ddv)
    }

    /// `D`, `p`, `alpha_hat = D^{-1} p` and the residual at `theta`.
    pub fn workspace(&self, theta: &RVec, order: usize) -> MapWorkspace {
        let (v, v_dot, v_ddot) = self.regressors(theta, order);
        let na = v.len();
        let d = herm_part(&(CMat::from_fn(na, na, |i, j| frob_c(&v[i], &v[j])) + &self.prec_alpha));
        // D is PD through the prior term.
        let d_inv = inv_hpd(&d, "MAP normal matrix").expect("prior keeps D positive definite");
        let p = CVec::from_fn(na, |i, _| frob_c(&v[i], &self.y)) + &self.prior_pull;
        let alpha = &d_inv * &p;
        let mut r = self.y.clone();
        for (vc, ac) in v.iter().zip(alpha.iter()) {
            r -= vc * *ac;
        }
        MapWorkspace { theta: theta.clone(), v, v_dot, v_ddot, d, d_inv, p, alpha, r }
    }

    fn prior_term(&self, theta: &RVec) -> f64 {
        let e = theta - &self.mean_theta;
        0.5 * (e.transpose() * &self.prec_theta * &e)[(0, 0)]
    }

    pub fn concentrate_alpha(&self, theta: &RVec) -> CVec {
        self.workspace(theta, 0).alpha
    }

    /// `-p^H D^{-1} p + (theta - mu)^T Sigma^{-1} (theta - mu) / 2`.
    pub fn concentrated_objective(&self, theta: &RVec) -> f64 {
        let ws = self.workspace(theta, 0);
        -ws.p.dotc(&ws.alpha).re + self.prior_term(theta)
    }

    /// Negative log-posterior in `(theta, alpha)` without the constant
    /// `||y||^2 + mu_alpha^H Sigma_alpha^{-1} mu_alpha`.
    pub fn joint_objective(&self, theta: &RVec, alpha: &CVec) -> f64 {
        let (v, _, _) = self.regressors(theta, 0);
        let mut r = self.y.clone();
        for (vc, ac) in v.iter().zip(alpha.iter()) {
            r -= vc * *ac;
        }
        let da = alpha - &self.mean_alpha;
        let quad = da.dotc(&(&self.prec_alpha * &da)).re;
        frob_c(&r, &r).re + self.prior_term(theta) + quad
            - frob_c(&self.y, &self.y).re
            - self.mean_alpha.dotc(&self.prior_pull).re
    }

    pub fn map_gradient(&self, theta: &RVec) -> RVec {
        self.gradient_at(&self.workspace(theta, 1))
    }

    pub fn map_hessian(&self, theta: &RVec) -> RMat {
        self.hessian_at(&self.workspace(theta, 2))
    }

    fn combine(&self, mats: &[Option<CMat>], coef: &CVec) -> CMat {
        let mut out = CMat::zeros(self.y.nrows(), self.y.ncols());
        for (m, a) in mats.iter().zip(coef.iter()) {
            if let Some(m) = m {
                out += m * *a;
            }
        }
        out
    }

    fn gradient_at(&self, ws: &MapWorkspace) -> RVec {
        let prior = &self.prec_theta * (&ws.theta - &self.mean_theta);
        RVec::from_fn(self.n_theta(), |i, _| {
            let vi_alpha = self.combine(&ws.v_dot[i], &ws.alpha);
            prior[i] - 2.0 * frob_c(&ws.r, &vi_alpha).re
        })
    }

    fn hessian_at(&self, ws: &MapWorkspace) -> RMat {
        let nt = self.n_theta();
        let na = ws.v.len();
        let zero = CMat::zeros(self.y.nrows(), self.y.ncols());
        let get = |m: &Option<CMat>| -> CMat { m.clone().unwrap_or_else(|| zero.clone()) };

        // dD/dtheta_j, dp/dtheta_j and dr/dtheta_j.
        let mut dd = Vec::with_capacity(nt);
        let mut dp = Vec::with_capacity(nt);
        let mut dr = Vec::with_capacity(nt);
        for j in 0..nt {
            let vj: Vec<CMat> = ws.v_dot[j].iter().map(get).collect();
            let ddj = CMat::from_fn(na, na, |c1, c2| frob_c(&vj[c1], &ws.v[c2]) + frob_c(&ws.v[c1], &vj[c2]));
            let dpj = CVec::from_fn(na, |c1, _| frob_c(&vj[c1], &self.y));
            let coef = &ws.d_inv * (&ddj * &ws.alpha) - &ws.d_inv * &dpj;
            let mut drj = zero.clone();
            for c1 in 0..na {
                drj += &ws.v[c1] * coef[c1] - &vj[c1] * ws.alpha[c1];
            }
            dd.push(ddj);
            dp.push(dpj);
            dr.push(drj);
        }

        let mut h = self.prec_theta.clone();
        for i in 0..nt {
            let vi: Vec<CMat> = ws.v_dot[i].iter().map(get).collect();
            let vi_alpha = self.combine(&ws.v_dot[i], &ws.alpha);
            for j in 0..nt {
                let t2 = -2.0 * frob_c(&dr[j], &vi_alpha).re;
                let t3 = -2.0 * frob_c(&ws.r, &self.combine(&ws.v_ddot[i][j], &ws.alpha)).re;
                // r^H V_i u = sum_c <r, V_ic> u_c
                let r_vi = CVec::from_fn(na, |c1, _| frob_c(&ws.r, &vi[c1]));
                let u4 = &ws.d_inv * (&dd[j] * &ws.alpha);
                let u5 = &ws.d_inv * &dp[j];
                let t4 = 2.0 * (r_vi.transpose() * u4)[(0, 0)].re;
                let t5 = -2.0 * (r_vi.transpose() * u5)[(0, 0)].re;
                h[(i, j)] += t2 + t3 + t4 + t5;
            }
        }
        sym_part(&h)
    }
}

#[derive(Clone, Debug)]
pub struct MapOptions {
    pub armijo_c: f64,
    pub shrink: f64,
    pub initial_step: f64,
    pub min_step: f64,
    /// Stop once the accepted update is shorter than this, in radians.
    pub step_tol: f64,
    pub max_iterations: usize,
    /// Hessians with smallest eigenvalue below `hessian_floor * trace` are
    /// replaced by the identity.
    pub hessian_floor: f64,
}

impl Default for MapOptions {
    fn default() -> Self {
        Self {
            armijo_c: 1e-4,
            shrink: 0.5,
            initial_step: 1.0,
            min_step: 1e-12,
            step_tol: 1e-7,
            max_iterations: 100,
            hessian_floor: 1e-10,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EstimationResult {
    pub theta: Vec<f64>,
    pub alpha: Vec<[f64; 2]>,
    pub iterations: usize,
    pub objective: f64,
    pub converged: bool,
    /// Set when the first line search failed and the prior mean was returned.
    pub failed: bool,
    /// Accepted Armijo step sizes.
    pub steps: Vec<f64>,
    /// `L(theta)` at the start and after every accepted step.
    pub objectives: Vec<f64>,
    /// Convergence rule used, for the record.
    pub criterion: String,
}

impl EstimationResult {
    pub fn theta_vec(&self) -> RVec {
        RVec::from_vec(self.theta.clone())
    }
}

/// Newton iteration with Armijo backtracking from the prior mean.
///
/// The iteration runs in prior-whitened coordinates `theta = mu + L z`,
/// `Sigma_theta = L L^T`; the identity fallback for an indefinite Hessian is
/// then `Sigma_theta^{-1}` in the original coordinates, which keeps the
/// gradient step well scaled when angles are in radians.
pub fn run_algorithm2(problem: &MapProblem, opts: &MapOptions) -> EstimationResult {
    let lt = &problem.chol_theta;
    let mut theta = problem.mean_theta.clone();
    let mut value = problem.concentrated_objective(&theta);
    let mut steps = Vec::new();
    let mut objectives = vec![value];
    let mut converged = false;
    let mut failed = false;
    let mut iterations = 0;
    for m in 0..opts.max_iterations {
        iterations = m + 1;
        let ws = problem.workspace(&theta, 2);
        let g = lt.transpose() * problem.gradient_at(&ws);
        let h = sym_part(&(lt.transpose() * problem.hessian_at(&ws) * lt));
        let (vals, _) = sym_eig(&h);
        let floor = opts.hessian_floor * h.trace().abs().max(1e-300);
        let dir = match (vals.min() > floor).then(|| h.clone().cholesky()).flatten() {
            Some(ch) => -ch.solve(&g),
            None => -g.clone(),
        };
        let slope = g.dot(&dir);
        if slope >= 0.0 {
            converged = g.norm() == 0.0;
            break;
        }
        let mut t = opts.initial_step;
        let accepted = loop {
            let cand = &theta + lt * (&dir * t);
            let v = problem.concentrated_objective(&cand);
            if v <= value + opts.armijo_c * t * slope {
                break Some((cand, v));
            }
            t *= opts.shrink;
            if t < opts.min_step {
                break None;
            }
        };
        match accepted {
            Some((cand, v)) => {
                let moved = (&cand - &theta).norm();
                theta = cand;
                value = v;
                steps.push(t);
                objectives.push(v);
                if moved < opts.step_tol {
                    converged = true;
                    break;
                }
            }
            None if m == 0 => {
                failed = true;
                break;
            }
            None => {
                // No further decrease is representable; the iterate stands.
                converged = true;
                break;
            }
        }
    }
    if failed {
        theta = problem.mean_theta.clone();
        value = problem.concentrated_objective(&theta);
    }
    let alpha = problem.concentrate_alpha(&theta);
    EstimationResult {
        theta: theta.iter().copied().collect(),
        alpha: alpha.iter().map(|v| [v.re, v.im]).collect(),
        iterations,
        objective: value,
        converged,
        failed,
        steps,
        objectives,
        criterion: format!("step norm < {:e} rad or {} iterations", opts.step_tol, opts.max_iterations),
    }
}

/// Wraps an angular error into `(-pi, pi]`.
pub fn wrap_angle(x: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut y = x % two_pi;
    if y <= -std::f64::consts::PI {
        y += two_pi;
    } else if y > std::f64::consts::PI {
        y -= two_pi;
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_examples() {
        let pi = std::f64::consts::PI;
        assert!((wrap_angle(0.1) - 0.1).abs() < 1e-15);
        assert!((wrap_angle(2.0 * pi + 0.1) - 0.1).abs() < 1e-12);
        assert!((wrap_angle(-2.0 * pi - 0.1) + 0.1).abs() < 1e-12);
        assert!((wrap_angle(pi) - pi).abs() < 1e-15);
    }
}
