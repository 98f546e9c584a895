//! Joint array partitioning and transmit beamforming.

mod algorithm;
mod randomize;
mod subproblems;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fim::{bcrb, likelihood_fim_general, noise_precision, scene_param_matrices, Bcrb, FimBlocks, PriorSpec};
use crate::linalg::{CMat, RVec};
use crate::scene::{DesignConfig, Scene};
use crate::sdp::SolverOptions;

pub use algorithm::{
    design, finalize_partition, local_search, run_algorithm1, solve_beamformer_at, Design, IterationRecord,
};
pub use randomize::{recover_vector, repair_cardinality, Recovered};
pub use subproblems::{
    penalty, penalty_matrix_a, penalty_matrix_b, rank_one_beam, update_a, update_b, update_dual, update_w, AdmmState,
    Beamformer, DesignContext, FimScaling, LiftedUpdate,
};

/// Partition strategy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Algorithm 1.
    Prop,
    /// Contiguous halves.
    Even,
    /// Transmit at both ends, receive in the middle.
    Heu,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Prop, Strategy::Even, Strategy::Heu];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Prop => "prop",
            Strategy::Even => "even",
            Strategy::Heu => "heu",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "prop" => Ok(Strategy::Prop),
            "even" => Ok(Strategy::Even),
            "heu" | "heuristic" => Ok(Strategy::Heu),
            other => Err(Error::InvalidConfig(format!("unknown strategy '{other}'"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct DesignParams {
    pub rho1: f64,
    pub rho2: f64,
    /// Diagonal of `Lambda`.
    pub weights: RVec,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub randomization_samples: usize,
    pub threshold: f64,
    pub rank_one_ratio: f64,
    pub seed: u64,
    /// `R_n` refresh passes when solving for `W` at a binary partition.
    pub refresh_passes: usize,
    pub local_search: bool,
    pub solver: SolverOptions,
}

impl DesignParams {
    pub fn new(cfg: &DesignConfig, weights: RVec) -> Self {
        Self {
            rho1: cfg.rho1,
            rho2: cfg.rho2,
            weights,
            max_iterations: cfg.max_iterations,
            tolerance: cfg.tolerance,
            randomization_samples: cfg.randomization_samples,
            threshold: cfg.threshold,
            rank_one_ratio: cfg.rank_one_ratio,
            seed: cfg.seed,
            refresh_passes: 4,
            local_search: cfg.local_search,
            solver: SolverOptions::default(),
        }
    }

    pub fn from_scene(scene: &Scene) -> Self {
        Self::new(&scene.config.design, scene.weights.clone())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho1 > 0.0 && self.rho2 > 0.0) {
            return Err(Error::InvalidConfig("penalty weights must be positive".into()));
        }
        if self.weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::InvalidConfig("BCRB weights must be positive".into()));
        }
        if self.max_iterations == 0 || !(self.tolerance > 0.0) {
            return Err(Error::InvalidConfig("need at least one iteration and a positive tolerance".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::InvalidConfig("rounding threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// First `floor(N/2)` antennas transmit.
pub fn even_partition(n: usize) -> RVec {
    RVec::from_fn(n, |i, _| if i < n / 2 { 1.0 } else { 0.0 })
}

/// `ceil(N/4)` transmit antennas at the start, `floor(N/4)` at the end.
pub fn heuristic_partition(n: usize) -> RVec {
    let head = n.div_ceil(4);
    let tail = n / 4;
    RVec::from_fn(n, |i, _| if i < head || i >= n - tail { 1.0 } else { 0.0 })
}

pub fn benchmark_partition(strategy: Strategy, n: usize) -> Option<RVec> {
    match strategy {
        Strategy::Prop => None,
        Strategy::Even => Some(even_partition(n)),
        Strategy::Heu => Some(heuristic_partition(n)),
    }
}

/// BCRB of a realized design, with `R_n` taken from the design itself.
pub fn evaluate_design(scene: &Scene, priors: &PriorSpec, a: &RVec, w: &CMat) -> Result<Bcrb> {
    let pm = scene_param_matrices(scene, priors);
    let r_n = scene.noise_covariance(a, w);
    let precision = noise_precision(&r_n, a, scene.radar_noise)?;
    let b = a.map(|v| 1.0 - v);
    let r_w = w * w.adjoint();
    let fl = likelihood_fim_general(&pm, a, &b, &precision, &r_w, scene.snapshots);
    bcrb(&FimBlocks::new(fl, priors)?, &scene.weights)
}

/// Every violated design constraint, as readable messages; empty when the
/// design is feasible.
pub fn constraint_violations(scene: &Scene, a: &RVec, bf: &Beamformer) -> Vec<String> {
    let mut out = Vec::new();
    if let Some(i) = a.iter().position(|&v| v != 0.0 && v != 1.0) {
        out.push(format!("a[{i}] = {} is not binary", a[i]));
    }
    let ones = a.iter().filter(|&&v| v == 1.0).count();
    let (lo, hi) = (scene.k(), scene.n - scene.min_receive());
    if ones < lo || ones > hi {
        out.push(format!("{ones} transmit antennas outside [{lo}, {hi}]"));
    }
    for (k, (s, u)) in scene.sinr(a, &bf.w).iter().zip(&scene.users).enumerate() {
        if *s < u.sinr_min * (1.0 - 1e-4) {
            out.push(format!("user {k}: SINR {s:.6} below {:.6}", u.sinr_min));
        }
    }
    let p = scene.transmit_power(a, &bf.w);
    if p > scene.power * (1.0 + 1e-6) {
        out.push(format!("transmit power {p:.6e} exceeds {:.6e}", scene.power));
    }
    let residual = bf.r_k.iter().fold(bf.r_w.clone(), |acc, r| acc - r);
    let min = crate::linalg::min_eig_herm(&crate::linalg::herm_part(&residual)) / scene.power;
    if min < -1e-8 {
        out.push(format!("R_w - sum R_k has eigenvalue {min:.3e} P"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmark_examples() {
        assert_eq!(even_partition(8).as_slice(), &[1., 1., 1., 1., 0., 0., 0., 0.]);
        assert_eq!(heuristic_partition(8).as_slice(), &[1., 1., 0., 0., 0., 0., 1., 1.]);
        assert_eq!(heuristic_partition(6).as_slice(), &[1., 1., 0., 0., 0., 1.]);
        assert_eq!(even_partition(7).sum(), 3.0);
    }

    #[test]
    fn strategy_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert!("best".parse::<Strategy>().is_err());
    }
}
