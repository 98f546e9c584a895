use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{complex_normal, Scene};
use crate::error::{Error, Result};
use crate::fim::PriorSpec;
use crate::linalg::{c, diag_c, herm_part, sym_part, CMat, CVec, RVec};

#[derive(Clone, Debug, PartialEq)]
pub struct TrueParams {
    pub theta: RVec,
    pub alpha: CVec,
}

#[derive(Clone, Debug)]
pub struct EchoBatch {
    pub y: CMat,
    pub symbols: CMat,
    pub truth: TrueParams,
}

impl EchoBatch {
    /// `vec(Y_r)`, column-major.
    pub fn vectorized(&self) -> CVec {
        CVec::from_column_slice(self.y.as_slice())
    }
}

/// Draws `theta ~ N(mu_theta, Sigma_theta)` and `alpha ~ CN(mu_alpha, Sigma_alpha)`.
pub fn draw_truth(priors: &PriorSpec, seed: u64) -> Result<TrueParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lt = sym_part(&priors.cov_theta)
        .cholesky()
        .ok_or_else(|| Error::InvalidConfig("DOA prior covariance is not PD".into()))?
        .l();
    let la = herm_part(&priors.cov_alpha)
        .cholesky()
        .ok_or_else(|| Error::InvalidConfig("RCS prior covariance is not PD".into()))?
        .l();
    let zt = RVec::from_fn(lt.nrows(), |_, _| StandardNormal.sample(&mut rng));
    let za = CVec::from_fn(la.nrows(), |_, _| complex_normal(&mut rng));
    Ok(TrueParams { theta: &priors.mean_theta + lt * zt, alpha: &priors.mean_alpha + la * za })
}

/// Synthesizes `Y_r = B G A W S + B H_SI A W S J_tau + B N_r` for a binary partition.
pub fn synthesize_echoes(
    scene: &Scene,
    a: &RVec,
    w: &CMat,
    symbols: &CMat,
    truth: &TrueParams,
    noise_seed: u64,
) -> Result<EchoBatch> {
    let n = scene.n;
    if let Some((index, &value)) = a.iter().enumerate().find(|(_, &v)| v != 0.0 && v != 1.0) {
        return Err(Error::NonBinaryPartition { index, value });
    }
    if a.len() != n || w.nrows() != n || w.ncols() != n + scene.k() || symbols.nrows() != w.ncols() {
        return Err(Error::Dimension(format!(
            "a: {}, W: {}x{}, S: {}x{} for N = {n}, K = {}",
            a.len(),
            w.nrows(),
            w.ncols(),
            symbols.nrows(),
            symbols.ncols(),
            scene.k()
        )));
    }
    let l = symbols.ncols();
    let am = diag_c(a);
    let bm = diag_c(&a.map(|v| 1.0 - v));
    let x = &am * w * symbols;

    let resp = scene.target.responses(truth.theta.as_slice(), n, 0);
    let g = resp.combine(truth.alpha.as_slice());
    let mut y = &bm * &g * &x;

    if scene.si_amplitude != 0.0 {
        let tau = scene.si_delay % l.max(1);
        let shifted = CMat::from_fn(n, l, |i, col| {
            let src = if scene.si_advance { (col + tau) % l } else { (col + l - tau) % l };
            x[(i, src)]
        });
        y += &bm * &scene.h_si * shifted;
    }

    if scene.radar_noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        let s = scene.radar_noise.sqrt();
        let noise = CMat::from_fn(n, l, |_, _| complex_normal(&mut rng) * c(s, 0.0));
        y += &bm * noise;
    }
    Ok(EchoBatch { y, symbols: symbols.clone(), truth: truth.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{generate_symbols, ScenarioConfig, TargetConfig};

    fn quiet_scene(target: TargetConfig) -> Scene {
        let mut cfg = ScenarioConfig { antennas: 6, target, ..Default::default() };
        cfg.users.angles_deg = vec![-20.0];
        cfg.self_interference.amplitude = Some(0.0);
        let mut s = Scene::from_config(&cfg).unwrap();
        s.radar_noise = 0.0;
        s
    }

    fn partition() -> RVec {
        RVec::from_vec(vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0])
    }

    #[test]
    fn silent_scene_is_zero() {
        let s = quiet_scene(TargetConfig::Point {
            angles_deg: vec![40.0],
            distance_m: 50.0,
            pathloss_exponent: 2.0,
            angle_var_deg2: 0.09,
            rcs_mean: [1.0, 1.0],
            rcs_var: 0.01,
        });
        let w = CMat::from_element(6, 7, c(1.0, 0.5));
        let sym = generate_symbols(7, 8, 3);
        let truth = TrueParams { theta: RVec::from_vec(vec![0.7]), alpha: CVec::zeros(1) };
        let e = synthesize_echoes(&s, &partition(), &w, &sym, &truth, 1).unwrap();
        assert_eq!(e.y.norm(), 0.0);
    }

    #[test]
    fn single_target_is_rank_one() {
        let s = quiet_scene(TargetConfig::Point {
            angles_deg: vec![40.0],
            distance_m: 50.0,
            pathloss_exponent: 2.0,
            angle_var_deg2: 0.09,
            rcs_mean: [1.0, 1.0],
            rcs_var: 0.01,
        });
        let w = CMat::from_fn(6, 7, |i, j| c((i * j) as f64, 1.0 - j as f64));
        let sym = generate_symbols(7, 8, 3);
        let truth = TrueParams { theta: RVec::from_vec(vec![0.7]), alpha: CVec::from_element(1, c(1.0, -0.3)) };
        let e = synthesize_echoes(&s, &partition(), &w, &sym, &truth, 1).unwrap();
        let sv = e.y.clone().svd(false, false).singular_values;
        assert!(sv[1] <= 1e-10 * sv[0]);
        // transmit rows carry nothing
        for col in 0..8 {
            assert_eq!(e.y[(0, col)].norm(), 0.0);
        }
    }

    #[test]
    fn single_bin_extended_equals_point() {
        let pt = quiet_scene(TargetConfig::Point {
            angles_deg: vec![30.0],
            distance_m: 50.0,
            pathloss_exponent: 2.0,
            angle_var_deg2: 0.09,
            rcs_mean: [1.0, 1.0],
            rcs_var: 0.01,
        });
        let et = quiet_scene(TargetConfig::Extended {
            center_deg: 30.0,
            spread_deg: 3.0,
            bins: 1,
            offsets: None,
            distance_m: 50.0,
            pathloss_exponent: 2.0,
            center_var_deg2: 0.09,
            spread_var_deg2: 0.09,
            rcs_mean: [1.0, 1.0],
            rcs_var: 1.0,
        });
        let w = CMat::from_fn(6, 7, |i, j| c(i as f64 - 2.0, j as f64));
        let sym = generate_symbols(7, 5, 4);
        let alpha = CVec::from_element(1, c(0.3, 0.9));
        let tp = TrueParams { theta: RVec::from_vec(vec![0.5]), alpha: alpha.clone() };
        let te = TrueParams { theta: RVec::from_vec(vec![0.5, 0.05]), alpha };
        let a = synthesize_echoes(&pt, &partition(), &w, &sym, &tp, 0).unwrap();
        let b = synthesize_echoes(&et, &partition(), &w, &sym, &te, 0).unwrap();
        assert!((a.y - b.y).norm() < 1e-15);
    }

    #[test]
    fn fractional_partition_rejected() {
        let s = Scene::from_config(&ScenarioConfig::default()).unwrap();
        let a = RVec::from_element(s.n, 0.5);
        let w = CMat::zeros(s.n, s.n + s.k());
        let sym = generate_symbols(s.n + s.k(), 4, 0);
        let truth = draw_truth(&s.priors, 0).unwrap();
        assert!(matches!(
            synthesize_echoes(&s, &a, &w, &sym, &truth, 0),
            Err(Error::NonBinaryPartition { index: 0, .. })
        ));
    }

    #[test]
    fn synthesis_is_deterministic() {
        let s = Scene::from_config(&ScenarioConfig::default()).unwrap();
        let a = RVec::from_fn(s.n, |i, _| if i % 2 == 0 { 1.0 } else { 0.0 });
        let w = CMat::from_element(s.n, s.n + s.k(), c(0.1, 0.0));
        let sym = generate_symbols(s.n + s.k(), 32, 5);
        let truth = draw_truth(&s.priors, 8).unwrap();
        let e1 = synthesize_echoes(&s, &a, &w, &sym, &truth, 3).unwrap();
        let e2 = synthesize_echoes(&s, &a, &w, &sym, &truth, 3).unwrap();
        assert_eq!(e1.y, e2.y);
        assert_eq!(e1.vectorized().len(), s.n * 32);
    }
}
