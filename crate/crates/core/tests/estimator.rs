use isac_core::designer::{design, DesignParams, Strategy};
use isac_core::estimator::{run_algorithm2, MapOptions, MapProblem};
use isac_core::fim::PriorSpec;
use isac_core::linalg::{c, CMat, CVec, RMat, RVec};
use isac_core::scene::{
    draw_truth, generate_symbols, synthesize_echoes, ScenarioConfig, Scene, TargetConfig, TrueParams,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn extended() -> TargetConfig {
    TargetConfig::Extended {
        center_deg: 55.0,
        spread_deg: 4.0,
        bins: 3,
        offsets: None,
        distance_m: 50.0,
        pathloss_exponent: 2.0,
        center_var_deg2: 1.0,
        spread_var_deg2: 0.25,
        rcs_mean: [1.0, 0.0],
        rcs_var: 0.1,
    }
}

fn scene(n: usize, target: Option<TargetConfig>) -> Scene {
    let mut cfg = ScenarioConfig { antennas: n, ..Default::default() };
    if let Some(t) = target {
        cfg.target = t;
    }
    Scene::from_config(&cfg).unwrap()
}

fn partition(n: usize) -> RVec {
    RVec::from_fn(n, |i, _| if i < n / 2 { 1.0 } else { 0.0 })
}

fn random_w(n: usize, cols: usize, seed: u64) -> CMat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    CMat::from_fn(n, cols, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * c(0.3, 0.0))
}

fn problem(s: &Scene, seed: u64) -> (MapProblem, TrueParams) {
    let a = partition(s.n);
    let w = random_w(s.n, s.n + s.k(), seed);
    let symbols = generate_symbols(s.n + s.k(), s.snapshots, seed + 1);
    let truth = draw_truth(&s.priors, seed + 2).unwrap();
    let echo = synthesize_echoes(s, &a, &w, &symbols, &truth, seed + 3).unwrap();
    (MapProblem::from_design(s, &s.priors, &a, &w, &symbols, &echo.y).unwrap(), truth)
}

fn fd_gradient(p: &MapProblem, theta: &RVec, h: f64) -> RVec {
    RVec::from_fn(theta.len(), |i, _| {
        let mut up = theta.clone();
        let mut dn = theta.clone();
        up[i] += h;
        dn[i] -= h;
        (p.concentrated_objective(&up) - p.concentrated_objective(&dn)) / (2.0 * h)
    })
}

fn fd_hessian(p: &MapProblem, theta: &RVec, h: f64) -> RMat {
    let n = theta.len();
    let mut out = RMat::zeros(n, n);
    for j in 0..n {
        let mut up = theta.clone();
        let mut dn = theta.clone();
        up[j] += h;
        dn[j] -= h;
        out.set_column(j, &((p.map_gradient(&up) - p.map_gradient(&dn)) / (2.0 * h)));
    }
    out
}

fn check_derivatives(s: &Scene, seed: u64) {
    let (p, truth) = problem(s, seed);
    for theta in [truth.theta.clone(), p.prior_mean().clone()] {
        let g = p.map_gradient(&theta);
        let gf = fd_gradient(&p, &theta, 1e-6);
        assert!((&g - &gf).norm() <= 1e-5 * (1.0 + g.norm()), "gradient {g} vs {gf}");
        let hm = p.map_hessian(&theta);
        let hf = fd_hessian(&p, &theta, 1e-6);
        assert!((&hm - &hf).norm() <= 1e-5 * (1.0 + hm.norm()), "hessian {hm} vs {hf}");
    }
}

#[test]
fn derivatives_match_finite_differences_point() {
    let s = scene(8, None);
    for seed in [1, 11, 21] {
        check_derivatives(&s, seed);
    }
}

#[test]
fn derivatives_match_finite_differences_extended() {
    let s = scene(8, Some(extended()));
    for seed in [2, 12] {
        check_derivatives(&s, seed);
    }
}

#[test]
fn concentrated_alpha_matches_grid_search() {
    // One point target: the joint objective is a quadratic in alpha, so a
    // fine grid around the closed form must not find anything lower.
    let mut cfg = ScenarioConfig { antennas: 6, ..Default::default() };
    cfg.target = TargetConfig::Point {
        angles_deg: vec![40.0],
        distance_m: 50.0,
        pathloss_exponent: 2.0,
        angle_var_deg2: 1.0,
        rcs_mean: [1.0, 0.0],
        rcs_var: 0.1,
    };
    let s = Scene::from_config(&cfg).unwrap();
    let (p, truth) = problem(&s, 5);
    let theta = truth.theta.clone();
    let alpha = p.concentrate_alpha(&theta);
    let best = p.joint_objective(&theta, &alpha);
    let span = 0.5 * alpha.norm().max(0.1);
    let mut grid_best = f64::INFINITY;
    for i in -40..=40 {
        for j in -40..=40 {
            let cand = CVec::from_element(1, alpha[0] + c(span * i as f64 / 40.0, span * j as f64 / 40.0));
            grid_best = grid_best.min(p.joint_objective(&theta, &cand));
        }
    }
    assert!(best <= grid_best + 1e-9 * best.abs().max(1.0));
    // The minimum over alpha is the concentrated criterion.
    let conc = p.concentrated_objective(&theta);
    assert!((best - conc).abs() <= 1e-8 * conc.abs().max(1.0), "{best} vs {conc}");
}

#[test]
fn tight_rcs_prior_pins_alpha_to_its_mean() {
    let s = scene(8, None);
    let a = partition(8);
    let w = random_w(8, 10, 3);
    let symbols = generate_symbols(10, s.snapshots, 4);
    let truth = draw_truth(&s.priors, 5).unwrap();
    let echo = synthesize_echoes(&s, &a, &w, &symbols, &truth, 6).unwrap();
    let mut priors = s.priors.clone();
    priors.cov_alpha = CMat::identity(2, 2) * c(1e-14, 0.0);
    let p = MapProblem::from_design(&s, &priors, &a, &w, &symbols, &echo.y).unwrap();
    let got = p.concentrate_alpha(&truth.theta);
    assert!((got - &priors.mean_alpha).norm() < 1e-3);
}

fn noiseless(target: Option<TargetConfig>, seed: u64) -> (Scene, MapProblem, TrueParams) {
    let mut s = scene(10, target);
    s.radar_noise = 1e-20 * s.radar_noise.max(1e-30);
    s.si_amplitude = 0.0;
    s.h_si = CMat::zeros(10, 10);
    let d = design(&s, Strategy::Even, DesignParams::from_scene(&s)).unwrap();
    let symbols = generate_symbols(10 + s.k(), s.snapshots, seed);
    let mut truth = draw_truth(&s.priors, seed + 1).unwrap();
    // Stay in the basin of the prior mean.
    let dt = &truth.theta - &s.priors.mean_theta;
    truth.theta = &s.priors.mean_theta + dt * 0.2;
    let echo = synthesize_echoes(&s, &d.a, d.w(), &symbols, &truth, seed + 2).unwrap();
    let p = MapProblem::from_design(&s, &s.priors, &d.a, d.w(), &symbols, &echo.y).unwrap();
    (s, p, truth)
}

#[test]
fn noiseless_echo_recovers_truth() {
    for target in [None, Some(extended())] {
        let (_, p, truth) = noiseless(target, 40);
        let res = run_algorithm2(&p, &MapOptions::default());
        assert!(res.converged && !res.failed);
        let err = (res.theta_vec() - &truth.theta).amax();
        assert!(err < 1e-6, "angle error {err}");
        for (got, want) in res.alpha.iter().zip(truth.alpha.iter()) {
            assert!((c(got[0], got[1]) - want).norm() < 1e-4 * want.norm().max(1.0));
        }
    }
}

#[test]
fn estimate_never_worse_than_prior_mean() {
    let s = scene(12, None);
    let d = design(&s, Strategy::Heu, DesignParams::from_scene(&s)).unwrap();
    for seed in 0..10u64 {
        let symbols = generate_symbols(12 + s.k(), s.snapshots, 100 + seed);
        let truth = draw_truth(&s.priors, 200 + seed).unwrap();
        let echo = synthesize_echoes(&s, &d.a, d.w(), &symbols, &truth, 300 + seed).unwrap();
        let p = MapProblem::from_design(&s, &s.priors, &d.a, d.w(), &symbols, &echo.y).unwrap();
        let res = run_algorithm2(&p, &MapOptions::default());
        let at_mean = p.concentrated_objective(p.prior_mean());
        assert!(res.objective <= at_mean + 1e-12 * at_mean.abs());
        let consistent = p.concentrated_objective(&res.theta_vec());
        assert!((consistent - res.objective).abs() <= 1e-12 * consistent.abs().max(1.0));
    }
}

#[test]
fn no_echo_information_returns_prior_mean() {
    let s = scene(8, None);
    let a = partition(8);
    // Silent transmitter: the likelihood is flat in theta.
    let w = CMat::zeros(8, 10);
    let symbols = generate_symbols(10, s.snapshots, 1);
    let truth = draw_truth(&s.priors, 2).unwrap();
    let echo = synthesize_echoes(&s, &a, &w, &symbols, &truth, 3).unwrap();
    let p = MapProblem::from_design(&s, &s.priors, &a, &w, &symbols, &echo.y).unwrap();
    let res = run_algorithm2(&p, &MapOptions::default());
    assert!((res.theta_vec() - &s.priors.mean_theta).norm() < 1e-12);
    for (got, want) in res.alpha.iter().zip(s.priors.mean_alpha.iter()) {
        assert!((c(got[0], got[1]) - want).norm() < 1e-12);
    }
}

#[test]
fn all_transmit_partition_is_prior_only() {
    let s = scene(6, None);
    let a = RVec::from_element(6, 1.0);
    let w = random_w(6, 8, 1);
    let symbols = generate_symbols(8, s.snapshots, 1);
    let y = CMat::zeros(6, s.snapshots);
    let p = MapProblem::from_design(&s, &s.priors, &a, &w, &symbols, &y).unwrap();
    let res = run_algorithm2(&p, &MapOptions::default());
    assert!((res.theta_vec() - &s.priors.mean_theta).norm() < 1e-14);
}

#[test]
fn non_binary_partition_is_rejected() {
    let s = scene(6, None);
    let mut a = partition(6);
    a[1] = 0.4;
    let w = random_w(6, 8, 1);
    let symbols = generate_symbols(8, s.snapshots, 1);
    let y = CMat::zeros(6, s.snapshots);
    assert!(MapProblem::from_design(&s, &s.priors, &a, &w, &symbols, &y).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    // Relabeling the targets permutes the estimate and nothing else.
    #[test]
    fn target_permutation_equivariance(seed in 0u64..1000) {
        let s = scene(8, None);
        let (p, _) = problem(&s, seed);
        let res = run_algorithm2(&p, &MapOptions::default());

        let a = partition(8);
        let w = random_w(8, 10, seed);
        let symbols = generate_symbols(10, s.snapshots, seed + 1);
        let truth = draw_truth(&s.priors, seed + 2).unwrap();
        let echo = synthesize_echoes(&s, &a, &w, &symbols, &truth, seed + 3).unwrap();
        let perm = |v: &RVec| RVec::from_vec(vec![v[1], v[0]]);
        let swapped = PriorSpec {
            mean_theta: perm(&s.priors.mean_theta),
            cov_theta: s.priors.cov_theta.clone(),
            mean_alpha: CVec::from_vec(vec![s.priors.mean_alpha[1], s.priors.mean_alpha[0]]),
            cov_alpha: s.priors.cov_alpha.clone(),
        };
        let q = MapProblem::from_design(&s, &swapped, &a, &w, &symbols, &echo.y).unwrap();
        let res2 = run_algorithm2(&q, &MapOptions::default());
        prop_assert!((res2.theta[0] - res.theta[1]).abs() < 1e-8);
        prop_assert!((res2.theta[1] - res.theta[0]).abs() < 1e-8);
        prop_assert!((res2.objective - res.objective).abs() <= 1e-9 * res.objective.abs().max(1.0));
    }
}

#[test]
fn residual_orthogonality_identity() {
    for (target, seed) in [(None, 3u64), (Some(extended()), 4)] {
        let s = scene(8, target);
        let (p, truth) = problem(&s, seed);
        let ws = p.workspace(&truth.theta, 0);
        let prec = s.priors.cov_alpha.clone().try_inverse().unwrap();
        let rhs = &prec * (&ws.alpha - &s.priors.mean_alpha);
        for (c_idx, v) in ws.v.iter().enumerate() {
            let lhs = isac_core::linalg::frob_c(v, &ws.r);
            assert!((lhs - rhs[c_idx]).norm() <= 1e-8 * (1.0 + rhs.norm()), "{lhs} vs {}", rhs[c_idx]);
        }
    }
}

#[test]
fn joint_objective_is_stationary_in_alpha() {
    let s = scene(8, None);
    let (p, truth) = problem(&s, 9);
    let alpha = p.concentrate_alpha(&truth.theta);
    let h = 1e-6;
    for k in 0..alpha.len() {
        for dir in [c(1.0, 0.0), c(0.0, 1.0)] {
            let mut up = alpha.clone();
            let mut dn = alpha.clone();
            up[k] += dir * h;
            dn[k] -= dir * h;
            let g = (p.joint_objective(&truth.theta, &up) - p.joint_objective(&truth.theta, &dn)) / (2.0 * h);
            let scale = p.joint_objective(&truth.theta, &alpha).abs().max(1.0);
            assert!(g.abs() <= 1e-8 * scale / alpha.norm().max(1e-3), "directional derivative {g}");
        }
    }
}

#[test]
fn tighter_doa_prior_pulls_estimate_to_mean() {
    let mut cfg = ScenarioConfig { antennas: 8, power_db: 0.0, ..Default::default() };
    cfg.target = TargetConfig::Point {
        angles_deg: vec![40.0],
        distance_m: 50.0,
        pathloss_exponent: 2.0,
        angle_var_deg2: 1.0,
        rcs_mean: [1.0, 0.0],
        rcs_var: 0.1,
    };
    let s = Scene::from_config(&cfg).unwrap();
    let a = partition(8);
    let w = random_w(8, 10, 1);
    let symbols = generate_symbols(10, s.snapshots, 2);
    let mut truth = draw_truth(&s.priors, 3).unwrap();
    truth.theta[0] = s.priors.mean_theta[0] + 1.5f64.to_radians();
    let echo = synthesize_echoes(&s, &a, &w, &symbols, &truth, 4).unwrap();
    let mut last = f64::INFINITY;
    for scale in [1.0, 0.1, 0.01] {
        let priors = s.priors.with_theta_scale(scale);
        let p = MapProblem::from_design(&s, &priors, &a, &w, &symbols, &echo.y).unwrap();
        let res = run_algorithm2(&p, &MapOptions::default());
        let dist = (res.theta[0] - priors.mean_theta[0]).abs();
        assert!(dist < last, "scale {scale}: {dist} vs {last}");
        last = dist;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn accepted_objectives_never_increase(seed in 0u64..1000, extended_target in any::<bool>()) {
        let s = scene(8, extended_target.then(extended));
        let (p, _) = problem(&s, seed);
        let res = run_algorithm2(&p, &MapOptions::default());
        prop_assert_eq!(res.objectives.len(), res.steps.len() + 1);
        for w in res.objectives.windows(2) {
            prop_assert!(w[1] <= w[0]);
        }
    }
}
