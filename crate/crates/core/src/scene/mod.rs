//! Channels, waveforms, noise covariance and echo synthesis.

mod config;
mod echo;
mod target;

pub use config::{DesignConfig, PathLossConfig, ScenarioConfig, SelfInterferenceConfig, TargetConfig, UserConfig};
pub use echo::{draw_truth, synthesize_echoes, EchoBatch, TrueParams};
pub use target::{default_offsets, element_positions, steering_derivatives, steering_vector, ResponseSet, TargetModel};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::fim::PriorSpec;
use crate::linalg::{c, diag_c, CMat, CVec, RMat, RVec};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// `PL(d) = C0 (d / d0)^(-exponent)`, linear power gain.
pub fn path_loss(distance: f64, exponent: f64, c0_db: f64, d0: f64) -> Result<f64> {
    if !(distance > 0.0) {
        return Err(Error::InvalidConfig(format!("link distance must be positive, got {distance}")));
    }
    Ok(db_to_linear(c0_db) * (distance / d0).powf(-exponent))
}

pub(crate) fn complex_normal(rng: &mut ChaCha8Rng) -> num_complex::Complex64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    c(s * re, s * im)
}

/// Rician user channel with unit-variance NLoS entries, scaled by `sqrt(pathloss)`.
pub fn rician_user_channel(phi: f64, n: usize, kappa: f64, pathloss: f64, seed: u64) -> CVec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let los = steering_vector(phi, n, 1.0);
    let wl = (kappa / (1.0 + kappa)).sqrt();
    let wn = (1.0 / (1.0 + kappa)).sqrt();
    let amp = pathloss.sqrt();
    CVec::from_fn(n, |i, _| (los[i] * wl + complex_normal(&mut rng) * wn) * amp)
}

/// `H_SI(i, j) = amplitude * exp(-j 2 pi d_ij / lambda)` with half-wavelength spacing.
pub fn si_channel(n: usize, amplitude: f64, wavelength: f64) -> CMat {
    let spacing = wavelength / 2.0;
    CMat::from_fn(n, n, |i, j| {
        let d = (i as f64 - j as f64).abs() * spacing;
        num_complex::Complex64::from_polar(amplitude, -2.0 * std::f64::consts::PI * d / wavelength)
    })
}

/// `rows x L` matrix of i.i.d. CN(0, 1) symbols.
pub fn generate_symbols(rows: usize, snapshots: usize, seed: u64) -> CMat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Column-major fill keeps the stream independent of later reshaping.
    CMat::from_fn(rows, snapshots, |_, _| complex_normal(&mut rng))
}

/// `R_n = B [sigma^2 I + H_SI A W W^H A H_SI^H] B` with `B = I - A`.
pub fn noise_covariance(a: &RVec, w: &CMat, h_si: &CMat, sigma2: f64) -> CMat {
    let n = a.len();
    let am = diag_c(a);
    let bm = diag_c(&a.map(|v| 1.0 - v));
    let leak = h_si * &am * w;
    let inner = CMat::identity(n, n) * c(sigma2, 0.0) + &leak * leak.adjoint();
    &bm * inner * &bm
}

#[derive(Clone, Debug)]
pub struct UserLink {
    pub channel: CVec,
    pub noise: f64,
    pub sinr_min: f64,
}

/// A scenario converted to linear units with its channels realized.
#[derive(Clone, Debug)]
pub struct Scene {
    pub config: ScenarioConfig,
    pub n: usize,
    pub snapshots: usize,
    pub wavelength: f64,
    pub users: Vec<UserLink>,
    pub radar_noise: f64,
    pub h_si: CMat,
    pub si_amplitude: f64,
    pub si_delay: usize,
    pub si_advance: bool,
    pub power: f64,
    pub target: TargetModel,
    pub priors: PriorSpec,
    pub weights: RVec,
}

impl Scene {
    pub fn from_config(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.antennas;
        let wavelength = SPEED_OF_LIGHT / cfg.carrier_hz;
        let pl = &cfg.pathloss;

        let u = &cfg.users;
        let user_pl = path_loss(u.distance_m, u.pathloss_exponent, pl.c0_db, pl.d0_m)?;
        let kappa = db_to_linear(u.rician_k_db);
        let users = u
            .angles_deg
            .iter()
            .enumerate()
            .map(|(k, phi)| UserLink {
                channel: rician_user_channel(
                    phi.to_radians(),
                    n,
                    kappa,
                    user_pl,
                    cfg.channel_seed.wrapping_mul(1_000_003).wrapping_add(k as u64),
                ),
                noise: dbm_to_watts(u.noise_dbm),
                sinr_min: db_to_linear(u.sinr_db),
            })
            .collect();

        let deg2 = (std::f64::consts::PI / 180.0).powi(2);
        let (target, priors, target_pl) = match &cfg.target {
            TargetConfig::Point { angles_deg, distance_m, pathloss_exponent, angle_var_deg2, rcs_mean, rcs_var } => {
                let tpl = path_loss(*distance_m, *pathloss_exponent, pl.c0_db, pl.d0_m)?;
                let t = angles_deg.len();
                let priors = PriorSpec {
                    mean_theta: RVec::from_iterator(t, angles_deg.iter().map(|v| v.to_radians())),
                    cov_theta: RMat::identity(t, t) * (angle_var_deg2 * deg2),
                    mean_alpha: CVec::from_element(t, c(rcs_mean[0], rcs_mean[1])),
                    cov_alpha: CMat::identity(t, t) * c(*rcs_var, 0.0),
                };
                (TargetModel::Point { gain: tpl.sqrt(), count: t }, priors, tpl)
            }
            TargetConfig::Extended {
                center_deg,
                spread_deg,
                bins,
                offsets,
                distance_m,
                pathloss_exponent,
                center_var_deg2,
                spread_var_deg2,
                rcs_mean,
                rcs_var,
            } => {
                let tpl = path_loss(*distance_m, *pathloss_exponent, pl.c0_db, pl.d0_m)?;
                let w = match offsets {
                    Some(v) => RVec::from_vec(v.clone()),
                    None => default_offsets(*bins),
                };
                let nb = w.len();
                let priors = PriorSpec {
                    mean_theta: RVec::from_vec(vec![center_deg.to_radians(), spread_deg.to_radians()]),
                    cov_theta: RMat::from_diagonal(&RVec::from_vec(vec![
                        center_var_deg2 * deg2,
                        spread_var_deg2 * deg2,
                    ])),
                    mean_alpha: CVec::from_element(nb, c(rcs_mean[0], rcs_mean[1])),
                    cov_alpha: CMat::identity(nb, nb) * c(*rcs_var, 0.0),
                };
                (TargetModel::Extended { gain: tpl.sqrt(), offsets: w }, priors, tpl)
            }
        };
        priors.validate()?;

        let si = &cfg.self_interference;
        // ||H_SI||_F^2 / ||h h^T||_F^2 = amplitude^2 / PL^2.
        let si_amplitude = si.amplitude.unwrap_or(target_pl * 10f64.powf(si.ratio_db / 20.0));
        let weights = match &cfg.weights {
            Some(w) => RVec::from_vec(w.clone()),
            None => RVec::from_element(target.n_theta(), 1.0),
        };

        Ok(Self {
            config: cfg.clone(),
            n,
            snapshots: cfg.snapshots,
            wavelength,
            users,
            radar_noise: dbm_to_watts(cfg.radar_noise_dbm),
            h_si: si_channel(n, si_amplitude, wavelength),
            si_amplitude,
            si_delay: si.delay,
            si_advance: si.advance,
            power: cfg.power_watts(),
            target,
            priors,
            weights,
        })
    }

    pub fn k(&self) -> usize {
        self.users.len()
    }

    /// Minimum number of receive antennas.
    pub fn min_receive(&self) -> usize {
        self.config.target.min_receive()
    }

    pub fn noise_covariance(&self, a: &RVec, w: &CMat) -> CMat {
        noise_covariance(a, w, &self.h_si, self.radar_noise)
    }

    /// SINR of every user for a given partition and beamformer.
    pub fn sinr(&self, a: &RVec, w: &CMat) -> Vec<f64> {
        let am = diag_c(a);
        self.users
            .iter()
            .enumerate()
            .map(|(k, u)| {
                let g = u.channel.transpose() * &am * w;
                let total: f64 = g.iter().map(|v| v.norm_sqr()).sum();
                let own = g[k].norm_sqr();
                own / (total - own + u.noise)
            })
            .collect()
    }

    /// `||A W||_F^2`.
    pub fn transmit_power(&self, a: &RVec, w: &CMat) -> f64 {
        let mut p = 0.0;
        for i in 0..self.n {
            for j in 0..w.ncols() {
                p += a[i] * a[i] * w[(i, j)].norm_sqr();
            }
        }
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::min_eig_herm;
    use proptest::prelude::*;
    use rand::Rng;

    fn db(x: f64) -> f64 {
        10.0 * x.log10()
    }

    #[test]
    fn path_loss_reference_points() {
        assert!((db(path_loss(1.0, 2.0, -30.0, 1.0).unwrap()) + 30.0).abs() < 1e-12);
        let t = db(path_loss(50.0, 2.0, -30.0, 1.0).unwrap());
        assert!((t - (-30.0 - 20.0 * 50f64.log10())).abs() < 1e-10);
        assert!((t + 63.979_400_086_720_375).abs() < 1e-9);
        let u = db(path_loss(100.0, 2.6, -30.0, 1.0).unwrap());
        assert!((u + 82.0).abs() < 1e-10);
        assert!(path_loss(0.0, 2.0, -30.0, 1.0).is_err());
    }

    #[test]
    fn rician_los_limit_and_determinism() {
        let phi = 0.3;
        let h = rician_user_channel(phi, 8, 1e12, 4.0, 11);
        let los = steering_vector(phi, 8, 2.0);
        assert!((&h - &los).norm() < 1e-5);
        let a = rician_user_channel(phi, 8, 2.0, 1.0, 5);
        let b = rician_user_channel(phi, 8, 2.0, 1.0, 5);
        assert_eq!(a, b);
    }

    #[test]
    fn rician_energy_moment() {
        let n = 8;
        let pl = 3.0;
        let trials = 10_000;
        let mean: f64 = (0..trials)
            .map(|s| rician_user_channel(0.2, n, db_to_linear(3.0), pl, s as u64).norm_squared())
            .sum::<f64>()
            / trials as f64;
        assert!((mean / (pl * n as f64) - 1.0).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn si_channel_structure() {
        let lambda = SPEED_OF_LIGHT / 3.5e9;
        assert!(si_channel(4, 0.0, lambda).norm() == 0.0);
        let h = si_channel(2, 0.7, lambda);
        assert!((h[(0, 1)] - c(-0.7, 0.0)).norm() < 1e-12);
        assert!((h[(0, 0)] - c(0.7, 0.0)).norm() < 1e-15);
        let h = si_channel(6, 0.3, lambda);
        assert!((h.norm_squared() - 0.09 * 36.0).abs() < 1e-12);
        assert!((&h - h.adjoint()).norm() < 1e-12);
    }

    #[test]
    fn symbol_covariance_and_determinism() {
        let l = 10_000;
        let s = generate_symbols(3, l, 9);
        let cov = &s * s.adjoint() / c(l as f64, 0.0);
        let err = (cov - CMat::identity(3, 3)).norm();
        assert!(err < 5.0 * 3.0 / (l as f64).sqrt(), "err {err}");
        assert_eq!(generate_symbols(3, 4, 2), generate_symbols(3, 4, 2));
        assert_eq!(generate_symbols(4, 32, 0).ncols(), 32);
    }

    #[test]
    fn noise_covariance_limits() {
        let n = 5;
        let h = si_channel(n, 0.5, 1.0);
        let w = CMat::from_fn(n, n + 1, |i, j| c((i + j) as f64, 1.0));
        let ones = RVec::from_element(n, 1.0);
        assert!(noise_covariance(&ones, &w, &h, 2.0).norm() < 1e-14);
        let a = RVec::from_vec(vec![0.2, 0.9, 0.0, 1.0, 0.5]);
        let r = noise_covariance(&a, &CMat::zeros(n, n + 1), &h, 2.0);
        let expect = RVec::from_iterator(n, a.iter().map(|v| 2.0 * (1.0 - v).powi(2)));
        assert!((r - diag_c(&expect)).norm() < 1e-14);
    }

    #[test]
    fn scene_defaults_build() {
        let s = Scene::from_config(&ScenarioConfig::default()).unwrap();
        assert_eq!(s.users.len(), 2);
        assert!((s.power - 100.0).abs() < 1e-9);
        assert!((s.radar_noise - 1e-11).abs() < 1e-24);
        // SI ratio 0 dB: ||H_SI||_F = ||h h^T||_F.
        let h = steering_vector(0.5, s.n, s.target.gain());
        let ht = &h * h.transpose();
        assert!((s.h_si.norm() / ht.norm() - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn noise_covariance_is_hermitian_psd(seed in 0u64..500, n in 2usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = RVec::from_fn(n, |_, _| rng.random::<f64>());
            let w = CMat::from_fn(n, n + 2, |_, _| complex_normal(&mut rng));
            let h = si_channel(n, rng.random::<f64>(), 1.0);
            let r = noise_covariance(&a, &w, &h, 0.1);
            prop_assert!((&r - r.adjoint()).norm() < 1e-12 * (1.0 + r.norm()));
            prop_assert!(min_eig_herm(&r) >= -1e-12 * (1.0 + r.norm()));
        }

        #[test]
        fn masked_channel_rewrite(seed in 0u64..500, n in 2usize..10, theta in -1.5f64..1.5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = RVec::from_fn(n, |_, _| rng.random::<f64>());
            let b = a.map(|v| 1.0 - v);
            let h = steering_vector(theta, n, 0.7);
            let direct = diag_c(&b) * &h * h.transpose() * diag_c(&a);
            let rewrite = CMat::from_diagonal(&h) * diag_c(&b) * CMat::from_element(n, n, c(1.0, 0.0))
                * diag_c(&a) * CMat::from_diagonal(&h);
            prop_assert!((direct - rewrite).norm() < 1e-12);
        }
    }
}
