//! Experiment driver behind the `isac` CLI: single designs, parameter sweeps
//! with Monte Carlo estimation, extended-target campaigns and config checks.

mod spec;

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::designer::{constraint_violations, design, Design, DesignParams, IterationRecord, Strategy};
use crate::error::{Error, Result};
use crate::estimator::{run_algorithm2, wrap_angle, MapOptions, MapProblem};
use crate::fim::{fim_fd_oracle, likelihood_fim_general, param_matrices, relaxed_noise_precision};
use crate::linalg::{c, CMat, RVec};
use crate::scene::{draw_truth, generate_symbols, synthesize_echoes, ScenarioConfig, Scene, TargetConfig};

pub use spec::{apply, bins_for_spread, user_angles, SweepParam, SweepSpec, BIN_WIDTH_DEG};

/// Exact first line of every result CSV.
pub const CSV_HEADER: &str = "strategy,param,value,root_bcrb_deg,rmse_deg,trials,seed";

/// Environment variable holding the worker thread count.
pub const WORKERS_ENV: &str = "ISAC_WORKERS";

/// Sizes the global thread pool from `ISAC_WORKERS`; unset means one worker
/// per core. Results do not depend on this value.
pub fn init_workers() -> Result<usize> {
    let requested = match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::InvalidConfig(format!("{WORKERS_ENV} must be a positive integer, got '{v}'")))?,
        Err(_) => 0,
    };
    // A second initialization keeps the existing pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(requested).build_global();
    Ok(rayon::current_num_threads())
}

/// Counter-based seed derivation (SplitMix64 finalizer over the key path), so
/// every trial's randomness is fixed by its coordinates alone.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    path.iter().fold(mix(master), |acc, &k| mix(acc ^ mix(k)))
}

#[derive(Clone, Debug, Serialize)]
pub struct MonteCarloSummary {
    pub trials: usize,
    /// Per-parameter RMSE in degrees.
    pub rmse_per_param_deg: Vec<f64>,
    /// Mean of the per-parameter RMSEs.
    pub rmse_deg: f64,
    pub mean_iterations: f64,
    /// Trials where the first line search failed.
    pub failures: usize,
}

/// Runs `trials` independent echo syntheses and MAP estimates for a design.
/// Truth, symbols and noise of trial `i` depend only on `(seed, i)`.
pub fn monte_carlo(scene: &Scene, a: &RVec, w: &CMat, trials: usize, seed: u64) -> Result<MonteCarloSummary> {
    let rows = w.ncols();
    let opts = MapOptions::default();
    let outcomes: Vec<Result<(Vec<f64>, usize, bool)>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let t = i as u64;
            let truth = draw_truth(&scene.priors, derive_seed(seed, &[t, 0]))?;
            let symbols = generate_symbols(rows, scene.snapshots, derive_seed(seed, &[t, 1]));
            let echo = synthesize_echoes(scene, a, w, &symbols, &truth, derive_seed(seed, &[t, 2]))?;
            let problem = MapProblem::from_design(scene, &scene.priors, a, w, &symbols, &echo.y)?;
            let res = run_algorithm2(&problem, &opts);
            let sq =
                res.theta.iter().zip(truth.theta.iter()).map(|(e, t)| wrap_angle(e - t).to_degrees().powi(2)).collect();
            Ok((sq, res.iterations, res.failed))
        })
        .collect();
    let n_theta = scene.priors.n_theta();
    let mut sums = vec![0.0; n_theta];
    let mut iterations = 0usize;
    let mut failures = 0usize;
    for o in outcomes {
        let (sq, it, failed) = o?;
        for (s, v) in sums.iter_mut().zip(sq) {
            *s += v;
        }
        iterations += it;
        failures += failed as usize;
    }
    let rmse: Vec<f64> = sums.iter().map(|s| (s / trials as f64).sqrt()).collect();
    Ok(MonteCarloSummary {
        trials,
        rmse_deg: rmse.iter().sum::<f64>() / n_theta as f64,
        rmse_per_param_deg: rmse,
        mean_iterations: iterations as f64 / trials.max(1) as f64,
        failures,
    })
}

/// One sweep point for one strategy.
#[derive(Clone, Debug, Serialize)]
pub struct ResultRow {
    pub strategy: Strategy,
    pub param: SweepParam,
    pub value: f64,
    /// Mean of the per-parameter root BCRBs, degrees.
    pub root_bcrb_deg: f64,
    pub rmse_deg: f64,
    pub trials: usize,
    pub seed: u64,
    pub mean_iterations: f64,
    pub wall_time_s: f64,
    /// Set when the design or the estimation failed at this point.
    pub error: Option<String>,
}

/// The CSV columns of a [`ResultRow`]; field order is the header.
#[derive(Serialize)]
struct CsvRecord {
    strategy: Strategy,
    param: SweepParam,
    value: f64,
    root_bcrb_deg: f64,
    rmse_deg: f64,
    trials: usize,
    seed: u64,
}

impl ResultRow {
    fn record(&self) -> CsvRecord {
        CsvRecord {
            strategy: self.strategy,
            param: self.param,
            value: self.value,
            root_bcrb_deg: self.root_bcrb_deg,
            rmse_deg: self.rmse_deg,
            trials: self.trials,
            seed: self.seed,
        }
    }

    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

fn run_point(spec: &SweepSpec, index: usize, value: f64, strategy: Strategy) -> ResultRow {
    let seed = derive_seed(spec.seed, &[index as u64]);
    let start = Instant::now();
    let mut row = ResultRow {
        strategy,
        param: spec.param,
        value,
        root_bcrb_deg: f64::NAN,
        rmse_deg: f64::NAN,
        trials: spec.trials,
        seed,
        mean_iterations: f64::NAN,
        wall_time_s: 0.0,
        error: None,
    };
    let outcome = (|| -> Result<(f64, MonteCarloSummary)> {
        let cfg = apply(&spec.base, spec.param, value)?;
        let scene = Scene::from_config(&cfg)?;
        let d = design(&scene, strategy, DesignParams::from_scene(&scene))?;
        let mc = monte_carlo(&scene, &d.a, d.w(), spec.trials, seed)?;
        Ok((d.root_bcrb_deg(), mc))
    })();
    match outcome {
        Ok((bound, mc)) => {
            row.root_bcrb_deg = bound;
            row.rmse_deg = mc.rmse_deg;
            row.mean_iterations = mc.mean_iterations;
        }
        Err(e) => {
            log::error!("{strategy} at {}={value}: {e}", spec.param);
            row.error = Some(e.to_string());
        }
    }
    row.wall_time_s = start.elapsed().as_secs_f64();
    row
}

/// Runs every (point, strategy) pair. Rows come back in grid order, then
/// strategy order, whatever the thread count.
pub fn sweep_rows(spec: &SweepSpec) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let jobs: Vec<(usize, f64, Strategy)> = spec
        .grid()
        .into_iter()
        .enumerate()
        .flat_map(|(i, v)| spec.strategies.iter().map(move |&s| (i, v, s)))
        .collect();
    Ok(jobs.into_par_iter().map(|(i, v, s)| run_point(spec, i, v, s)).collect())
}

/// CSV text for one strategy's rows.
pub fn csv_text(rows: &[ResultRow], strategy: Strategy) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(CSV_HEADER.split(','))?;
    for r in rows.iter().filter(|r| r.strategy == strategy) {
        w.serialize(r.record())?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("CSV output is ASCII"))
}

fn write_outputs(rows: &[ResultRow], spec: &SweepSpec, prefix: &str, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for &s in &spec.strategies {
        let path = out_dir.join(format!("{prefix}_{}_{s}.csv", spec.param));
        std::fs::write(&path, csv_text(rows, s)?)?;
        written.push(path);
    }
    let summary = out_dir.join(format!("{prefix}_{}_rows.json", spec.param));
    std::fs::write(&summary, serde_json::to_string_pretty(rows)?)?;
    written.push(summary);
    Ok(written)
}

/// Point-target sweep; writes one CSV per strategy plus a JSON row dump.
pub fn run_sweep(spec: &SweepSpec, out_dir: &Path) -> Result<(Vec<ResultRow>, Vec<PathBuf>)> {
    let rows = sweep_rows(spec)?;
    let files = write_outputs(&rows, spec, "sweep", out_dir)?;
    Ok((rows, files))
}

/// Extended-target campaign. Same schema as [`run_sweep`]; the bound and the
/// RMSE average the central angle and the spread.
pub fn run_et_campaign(spec: &SweepSpec, out_dir: &Path) -> Result<(Vec<ResultRow>, Vec<PathBuf>)> {
    if !matches!(spec.base.target, TargetConfig::Extended { .. }) {
        return Err(Error::InvalidConfig("et campaign needs an extended target in `base`".into()));
    }
    let rows = sweep_rows(spec)?;
    let files = write_outputs(&rows, spec, "et", out_dir)?;
    Ok((rows, files))
}

#[derive(Clone, Debug, Serialize)]
pub struct ComplexMatrix {
    pub rows: usize,
    pub cols: usize,
    /// Row-major real parts.
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl From<&CMat> for ComplexMatrix {
    fn from(m: &CMat) -> Self {
        let part = |f: fn(&num_complex::Complex64) -> f64| {
            (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| f(&m[(i, j)])).collect()).collect()
        };
        Self { rows: m.nrows(), cols: m.ncols(), re: part(|v| v.re), im: part(|v| v.im) }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DesignArtifact {
    pub strategy: Strategy,
    pub config: ScenarioConfig,
    pub a: Vec<f64>,
    pub w: ComplexMatrix,
    pub weighted_bcrb: f64,
    pub per_parameter_bcrb: Vec<f64>,
    pub root_bcrb_deg: f64,
    pub converged: bool,
    pub trace: Vec<IterationRecord>,
    pub sinr: Vec<f64>,
    pub transmit_power_w: f64,
    pub violations: Vec<String>,
}

impl DesignArtifact {
    pub fn new(scene: &Scene, d: &Design) -> Self {
        Self {
            strategy: d.strategy,
            config: scene.config.clone(),
            a: d.a.iter().copied().collect(),
            w: ComplexMatrix::from(d.w()),
            weighted_bcrb: d.bcrb.weighted,
            per_parameter_bcrb: d.bcrb.per_parameter.iter().copied().collect(),
            root_bcrb_deg: d.root_bcrb_deg(),
            converged: d.converged,
            trace: d.trace.clone(),
            sinr: scene.sinr(&d.a, d.w()),
            transmit_power_w: scene.transmit_power(&d.a, d.w()),
            violations: constraint_violations(scene, &d.a, &d.beamformer),
        }
    }
}

/// Designs one strategy for a scenario file and writes
/// `<out_dir>/design_<strategy>.json`.
pub fn run_design(config_path: &Path, strategy: Strategy, out_dir: &Path) -> Result<(DesignArtifact, PathBuf)> {
    let cfg = ScenarioConfig::load(config_path)?;
    let scene = Scene::from_config(&cfg)?;
    let d = design(&scene, strategy, DesignParams::from_scene(&scene))?;
    let artifact = DesignArtifact::new(&scene, &d);
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join(format!("design_{strategy}.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&artifact)? + "\n")?;
    Ok((artifact, path))
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
    /// Relative error between the closed-form likelihood FIM and the
    /// finite-difference oracle on a shrunken copy of the scenario.
    pub fim_oracle_rel_error: Option<f64>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Oracle agreement required by [`validate`].
pub const ORACLE_TOLERANCE: f64 = 1e-4;

/// Static checks plus a FIM oracle smoke test.
pub fn validate(cfg: &ScenarioConfig) -> ValidationReport {
    let mut violations = cfg.violations();
    if !violations.is_empty() {
        return ValidationReport { violations, fim_oracle_rel_error: None };
    }
    let mut small = cfg.clone();
    small.antennas = cfg.antennas.min(8);
    if let TargetConfig::Extended { bins, offsets, .. } = &mut small.target {
        *bins = (*bins).min(3);
        *offsets = None;
    }
    let rel = (|| -> Result<f64> {
        small.validate()?;
        let scene = Scene::from_config(&small)?;
        let n = scene.n;
        let a = RVec::from_element(n, 0.5);
        let r_w = CMat::identity(n, n) * c(scene.power / n as f64, 0.0);
        let r_n = scene.noise_covariance(&a, &CMat::zeros(n, 1));
        let psi = relaxed_noise_precision(&r_n, &a, scene.radar_noise)?;
        let pr = &scene.priors;
        let pm = param_matrices(&scene.target, pr.mean_theta.as_slice(), &pr.mean_alpha, n);
        let b = a.map(|v| 1.0 - v);
        let closed = likelihood_fim_general(&pm, &a, &b, &psi, &r_w, scene.snapshots);
        let oracle =
            fim_fd_oracle(&scene.target, &pr.mean_theta, &pr.mean_alpha, &a, &r_w, &psi, scene.snapshots, 1e-6)?;
        Ok((&closed - &oracle).norm() / closed.norm().max(f64::MIN_POSITIVE))
    })();
    let fim_oracle_rel_error = match rel {
        Ok(r) => {
            if !(r <= ORACLE_TOLERANCE) {
                violations.push(format!("closed-form FIM disagrees with the oracle (rel {r:.3e})"));
            }
            Some(r)
        }
        Err(e) => {
            violations.push(format!("FIM smoke test failed: {e}"));
            None
        }
    };
    ValidationReport { violations, fim_oracle_rel_error }
}
