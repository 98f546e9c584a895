//! JSON scenario schema.
//!
//! Every quantity is stored in the units a human writes in a config file
//! (degrees, dB, dBm, meters). [`crate::scene::Scene::from_config`] converts
//! them once to radians and linear scale.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Number of ULA elements.
    pub antennas: usize,
    /// Snapshots per coherent interval.
    pub snapshots: usize,
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    /// Transmit power budget in dBW.
    pub power_db: f64,
    /// Linear power budget in watts; overrides `power_db` when present.
    pub power_w: Option<f64>,
    pub radar_noise_dbm: f64,
    pub pathloss: PathLossConfig,
    pub users: UserConfig,
    pub target: TargetConfig,
    pub self_interference: SelfInterferenceConfig,
    /// Diagonal of the BCRB weighting matrix; `None` means identity.
    pub weights: Option<Vec<f64>>,
    /// Seed for the user channel realizations.
    pub channel_seed: u64,
    pub design: DesignConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PathLossConfig {
    pub c0_db: f64,
    pub d0_m: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct UserConfig {
    pub angles_deg: Vec<f64>,
    pub distance_m: f64,
    pub pathloss_exponent: f64,
    pub rician_k_db: f64,
    pub noise_dbm: f64,
    pub sinr_db: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetConfig {
    Point {
        angles_deg: Vec<f64>,
        #[serde(default = "default_target_distance")]
        distance_m: f64,
        #[serde(default = "default_target_exponent")]
        pathloss_exponent: f64,
        /// Prior variance of each DOA in deg².
        #[serde(default = "default_angle_var")]
        angle_var_deg2: f64,
        /// Prior mean of every RCS as `[re, im]`.
        #[serde(default = "default_rcs_mean")]
        rcs_mean: [f64; 2],
        #[serde(default = "default_point_rcs_var")]
        rcs_var: f64,
    },
    Extended {
        #[serde(default = "default_center")]
        center_deg: f64,
        #[serde(default = "default_spread")]
        spread_deg: f64,
        #[serde(default = "default_bins")]
        bins: usize,
        /// Scatterer positions in [-1, 1]; evenly spaced when omitted.
        #[serde(default)]
        offsets: Option<Vec<f64>>,
        #[serde(default = "default_target_distance")]
        distance_m: f64,
        #[serde(default = "default_target_exponent")]
        pathloss_exponent: f64,
        #[serde(default = "default_angle_var")]
        center_var_deg2: f64,
        #[serde(default = "default_angle_var")]
        spread_var_deg2: f64,
        #[serde(default = "default_rcs_mean")]
        rcs_mean: [f64; 2],
        #[serde(default = "default_et_rcs_var")]
        rcs_var: f64,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SelfInterferenceConfig {
    /// `||H_SI||_F^2 / ||h_t h_t^T||_F^2` in dB. Ignored when `amplitude` is set.
    pub ratio_db: f64,
    /// Explicit linear amplitude of every SI channel entry.
    pub amplitude: Option<f64>,
    /// Echo delay in samples used by the synthesizer.
    pub delay: usize,
    /// Shift symbols forward (`s[l + tau]`) instead of delaying them.
    pub advance: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DesignConfig {
    pub rho1: f64,
    pub rho2: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub randomization_samples: usize,
    pub threshold: f64,
    pub rank_one_ratio: f64,
    pub seed: u64,
    /// Flip/swap local search on the finalized partition.
    pub local_search: bool,
}

fn default_target_distance() -> f64 {
    50.0
}
fn default_target_exponent() -> f64 {
    2.0
}
fn default_angle_var() -> f64 {
    0.09
}
fn default_rcs_mean() -> [f64; 2] {
    [1.0, 1.0]
}
fn default_point_rcs_var() -> f64 {
    0.01
}
fn default_et_rcs_var() -> f64 {
    1.0
}
fn default_center() -> f64 {
    30.0
}
fn default_spread() -> f64 {
    3.0
}
fn default_bins() -> usize {
    5
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            antennas: 16,
            snapshots: 32,
            carrier_hz: 3.5e9,
            bandwidth_hz: 100e6,
            power_db: 20.0,
            power_w: None,
            radar_noise_dbm: -80.0,
            pathloss: PathLossConfig::default(),
            users: UserConfig::default(),
            target: TargetConfig::Point {
                angles_deg: vec![50.0, 60.0],
                distance_m: default_target_distance(),
                pathloss_exponent: default_target_exponent(),
                angle_var_deg2: default_angle_var(),
                rcs_mean: default_rcs_mean(),
                rcs_var: default_point_rcs_var(),
            },
            self_interference: SelfInterferenceConfig::default(),
            weights: None,
            channel_seed: 1,
            design: DesignConfig::default(),
        }
    }
}

impl Default for PathLossConfig {
    fn default() -> Self {
        Self { c0_db: -30.0, d0_m: 1.0 }
    }
}

impl Default for UserConfig {
    fn default() -> Self {
        Self {
            angles_deg: vec![-30.0, -10.0],
            distance_m: 100.0,
            pathloss_exponent: 2.6,
            rician_k_db: 3.0,
            noise_dbm: -80.0,
            sinr_db: 10.0,
        }
    }
}

impl Default for SelfInterferenceConfig {
    fn default() -> Self {
        Self { ratio_db: 0.0, amplitude: None, delay: 4, advance: false }
    }
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            rho1: 1.0,
            rho2: 10.0,
            max_iterations: 30,
            tolerance: 1e-3,
            randomization_samples: 100,
            threshold: 0.5,
            rank_one_ratio: 1e4,
            seed: 7,
            local_search: true,
        }
    }
}

impl TargetConfig {
    /// Default extended target: center 30°, spread 3°, five bins.
    pub fn extended_default() -> Self {
        TargetConfig::Extended {
            center_deg: default_center(),
            spread_deg: default_spread(),
            bins: default_bins(),
            offsets: None,
            distance_m: default_target_distance(),
            pathloss_exponent: default_target_exponent(),
            center_var_deg2: default_angle_var(),
            spread_var_deg2: default_angle_var(),
            rcs_mean: default_rcs_mean(),
            rcs_var: default_et_rcs_var(),
        }
    }

    /// Number of angle parameters to estimate.
    pub fn n_theta(&self) -> usize {
        match self {
            TargetConfig::Point { angles_deg, .. } => angles_deg.len(),
            TargetConfig::Extended { .. } => 2,
        }
    }

    /// Minimum number of receive antennas implied by the target model.
    pub fn min_receive(&self) -> usize {
        match self {
            TargetConfig::Point { angles_deg, .. } => angles_deg.len(),
            TargetConfig::Extended { .. } => 1,
        }
    }
}

impl ScenarioConfig {
    /// Power budget in watts.
    pub fn power_watts(&self) -> f64 {
        self.power_w.unwrap_or_else(|| 10f64.powf(self.power_db / 10.0))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// Static checks. Returns every violation rather than the first one.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let n = self.antennas;
        let k = self.users.angles_deg.len();
        let t = self.target.min_receive();
        if n == 0 {
            out.push("antenna count must be positive".into());
        }
        if n < k + t {
            out.push(format!("cardinality constraint K <= 1^T a <= N - T unsatisfiable: N = {n}, K = {k}, T = {t}"));
        }
        if self.snapshots == 0 {
            out.push("snapshot count must be positive".into());
        }
        match self.power_w {
            Some(p) if !(p > 0.0 && p.is_finite()) => out.push(format!("power budget must be positive, got {p} W")),
            None if !self.power_db.is_finite() => out.push("power budget is not finite".into()),
            _ => {}
        }
        if !(self.carrier_hz > 0.0) {
            out.push("carrier frequency must be positive".into());
        }
        if !(self.pathloss.d0_m > 0.0) {
            out.push("reference distance d0 must be positive".into());
        }
        if !(self.users.distance_m > 0.0) {
            out.push("user distance must be positive".into());
        }
        match &self.target {
            TargetConfig::Point { angles_deg, distance_m, angle_var_deg2, rcs_var, .. } => {
                if angles_deg.is_empty() {
                    out.push("at least one point target is required".into());
                }
                if !(*distance_m > 0.0) {
                    out.push("target distance must be positive".into());
                }
                if !(*angle_var_deg2 > 0.0) {
                    out.push("DOA prior variance must be positive".into());
                }
                if !(*rcs_var > 0.0) {
                    out.push("RCS prior variance must be positive".into());
                }
            }
            TargetConfig::Extended { bins, offsets, distance_m, center_var_deg2, spread_var_deg2, rcs_var, .. } => {
                if *bins == 0 {
                    out.push("extended target needs at least one bin".into());
                }
                if let Some(w) = offsets {
                    if w.len() != *bins {
                        out.push(format!("offsets has {} entries, bins = {bins}", w.len()));
                    }
                    if w.iter().any(|v| !(-1.0..=1.0).contains(v)) {
                        out.push("offsets must lie in [-1, 1]".into());
                    }
                }
                if !(*distance_m > 0.0) {
                    out.push("target distance must be positive".into());
                }
                if !(*center_var_deg2 > 0.0 && *spread_var_deg2 > 0.0) {
                    out.push("angle prior variances must be positive".into());
                }
                if !(*rcs_var > 0.0) {
                    out.push("RCS prior variance must be positive".into());
                }
            }
        }
        if let Some(w) = &self.weights {
            if w.len() != self.target.n_theta() {
                out.push(format!("weights has {} entries, expected {}", w.len(), self.target.n_theta()));
            }
            if w.iter().any(|v| !(*v > 0.0)) {
                out.push("weights must be positive".into());
            }
        }
        let d = &self.design;
        if !(d.rho1 >= 0.0 && d.rho2 > 0.0) {
            out.push("penalty weights need rho1 >= 0 and rho2 > 0".into());
        }
        if d.max_iterations == 0 {
            out.push("design needs at least one outer iteration".into());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(v.join("; ")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ScenarioConfig::default().validate().unwrap();
        let et = ScenarioConfig { target: TargetConfig::extended_default(), ..Default::default() };
        et.validate().unwrap();
    }

    #[test]
    fn cardinality_violation_reported() {
        let mut cfg = ScenarioConfig { antennas: 3, ..Default::default() };
        cfg.users.angles_deg = vec![-20.0, 20.0];
        let v = cfg.violations();
        assert!(v.iter().any(|m| m.contains("cardinality")), "{v:?}");
    }

    #[test]
    fn partial_json_fills_defaults() {
        let cfg =
            ScenarioConfig::from_json(r#"{"antennas": 8, "target": {"kind": "point", "angles_deg": [40.0]}}"#).unwrap();
        assert_eq!(cfg.antennas, 8);
        assert_eq!(cfg.snapshots, 32);
        match cfg.target {
            TargetConfig::Point { angle_var_deg2, .. } => assert_eq!(angle_var_deg2, 0.09),
            _ => unreachable!(),
        }
    }

    #[test]
    fn negative_power_rejected() {
        let cfg = ScenarioConfig { power_w: Some(-1.0), ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unknown_field_rejected() {
        assert!(ScenarioConfig::from_json(r#"{"antenas": 8}"#).is_err());
    }
}
