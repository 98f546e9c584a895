//! ULA steering vectors and the target response model.
//!
//! Both target kinds are written as `G(theta) = sum_c alpha_c H_c(theta)`
//! with rank-one `H_c = h(phi_c) h(phi_c)^T`. For point targets `phi_c` is the
//! c-th DOA; for an extended target `phi_c = theta_c + Delta * w_c`.

use num_complex::Complex64;

use crate::linalg::{c, CMat, CVec, RVec};

/// Element positions `q_n = n - (N + 1) / 2` in half-wavelengths.
pub fn element_positions(n: usize) -> RVec {
    RVec::from_fn(n, |i, _| i as f64 + 1.0 - (n as f64 + 1.0) / 2.0)
}

/// `h(n) = beta * exp(-j pi q_n sin(theta))`.
pub fn steering_vector(theta: f64, n: usize, gain: f64) -> CVec {
    let s = theta.sin();
    let q = element_positions(n);
    CVec::from_fn(n, |i, _| Complex64::from_polar(gain, -std::f64::consts::PI * q[i] * s))
}

/// First and second derivatives of [`steering_vector`] with respect to `theta`.
pub fn steering_derivatives(theta: f64, n: usize, gain: f64) -> (CVec, CVec) {
    let pi = std::f64::consts::PI;
    let h = steering_vector(theta, n, gain);
    let q = element_positions(n);
    let (s, co) = theta.sin_cos();
    let d1 = CVec::from_fn(n, |i, _| c(0.0, -pi * co * q[i]) * h[i]);
    let d2 = CVec::from_fn(n, |i, _| (c(0.0, pi * s * q[i]) - c(pi * pi * co * co * q[i] * q[i], 0.0)) * h[i]);
    (d1, d2)
}

#[derive(Clone, Debug, PartialEq)]
pub enum TargetModel {
    /// `count` independent point reflectors sharing the gain `beta`.
    Point { gain: f64, count: usize },
    /// Scatterers at `theta_c + Delta * offsets`.
    Extended { gain: f64, offsets: RVec },
}

/// Response matrices and their angle derivatives, unmasked (no `A`, `B`).
///
/// `h[c]` is `H_c`; `d1[k][c] = dH_c/dtheta_k`; `d2[k][l][c]` the second
/// derivative. Entries that vanish identically are `None`.
#[derive(Clone, Debug)]
pub struct ResponseSet {
    pub steering: Vec<CVec>,
    pub h: Vec<CMat>,
    pub d1: Vec<Vec<Option<CMat>>>,
    pub d2: Vec<Vec<Vec<Option<CMat>>>>,
}

impl ResponseSet {
    /// `G = sum_c alpha_c H_c`.
    pub fn combine(&self, alpha: &[Complex64]) -> CMat {
        let n = self.h[0].nrows();
        let mut g = CMat::zeros(n, n);
        for (hc, &a) in self.h.iter().zip(alpha) {
            g += hc * a;
        }
        g
    }

    /// `dG/dtheta_k`.
    pub fn combine_d1(&self, k: usize, alpha: &[Complex64]) -> CMat {
        let n = self.h[0].nrows();
        let mut g = CMat::zeros(n, n);
        for (m, &a) in self.d1[k].iter().zip(alpha) {
            if let Some(m) = m {
                g += m * a;
            }
        }
        g
    }
}

fn outer_t(x: &CVec, y: &CVec) -> CMat {
    x * y.transpose()
}

impl TargetModel {
    pub fn n_theta(&self) -> usize {
        match self {
            TargetModel::Point { count, .. } => *count,
            TargetModel::Extended { .. } => 2,
        }
    }

    pub fn n_alpha(&self) -> usize {
        match self {
            TargetModel::Point { count, .. } => *count,
            TargetModel::Extended { offsets, .. } => offsets.len(),
        }
    }

    pub fn gain(&self) -> f64 {
        match self {
            TargetModel::Point { gain, .. } | TargetModel::Extended { gain, .. } => *gain,
        }
    }

    /// Directions of the individual reflectors.
    pub fn scatter_angles(&self, theta: &[f64]) -> Vec<f64> {
        match self {
            TargetModel::Point { .. } => theta.to_vec(),
            TargetModel::Extended { offsets, .. } => offsets.iter().map(|w| theta[0] + theta[1] * w).collect(),
        }
    }

    /// Builds `H_c` and, up to `order` (0, 1 or 2), their angle derivatives.
    pub fn responses(&self, theta: &[f64], n: usize, order: usize) -> ResponseSet {
        assert_eq!(theta.len(), self.n_theta(), "theta has the wrong length");
        let gain = self.gain();
        let angles = self.scatter_angles(theta);
        let nc = angles.len();
        let nt = self.n_theta();
        let mut steering = Vec::with_capacity(nc);
        let mut h = Vec::with_capacity(nc);
        let mut first = Vec::with_capacity(nc);
        let mut second = Vec::with_capacity(nc);
        for &phi in &angles {
            let v = steering_vector(phi, n, gain);
            h.push(outer_t(&v, &v));
            if order >= 1 {
                let (dv, ddv) = steering_derivatives(phi, n, gain);
                let dvt = outer_t(&dv, &v);
                first.push(&dvt + dvt.transpose());
                if order >= 2 {
                    let a = outer_t(&ddv, &v);
                    second.push(&a + a.transpose() + outer_t(&dv, &dv) * c(2.0, 0.0));
                }
            }
            steering.push(v);
        }

        // Chain rule through phi_c(theta): dphi_c/dtheta_k is 1 or w_c.
        let weight = |k: usize, col: usize| -> f64 {
            match self {
                TargetModel::Point { .. } => {
                    if k == col {
                        1.0
                    } else {
                        0.0
                    }
                }
                TargetModel::Extended { offsets, .. } => {
                    if k == 0 {
                        1.0
                    } else {
                        offsets[col]
                    }
                }
            }
        };

        let mut d1 = Vec::new();
        let mut d2 = Vec::new();
        if order >= 1 {
            for k in 0..nt {
                d1.push(
                    (0..nc)
                        .map(|col| {
                            let w = weight(k, col);
                            (w != 0.0).then(|| &first[col] * c(w, 0.0))
                        })
                        .collect(),
                );
            }
        }
        if order >= 2 {
            for k in 0..nt {
                let mut row = Vec::new();
                for l in 0..nt {
                    row.push(
                        (0..nc)
                            .map(|col| {
                                let w = weight(k, col) * weight(l, col);
                                (w != 0.0).then(|| &second[col] * c(w, 0.0))
                            })
                            .collect(),
                    );
                }
                d2.push(row);
            }
        }
        ResponseSet { steering, h, d1, d2 }
    }
}

/// Evenly spaced offsets over [-1, 1]; a single bin sits at the center.
pub fn default_offsets(bins: usize) -> RVec {
    if bins <= 1 {
        return RVec::zeros(bins);
    }
    RVec::from_fn(bins, |i, _| -1.0 + 2.0 * i as f64 / (bins - 1) as f64)
}
