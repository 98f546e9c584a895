//! Sweep specifications and how a swept value rewrites a scenario.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::designer::Strategy;
use crate::error::{Error, Result};
use crate::scene::{ScenarioConfig, TargetConfig};

/// Width of one angular bin, in degrees, held fixed by angular-spread sweeps.
pub const BIN_WIDTH_DEG: f64 = 1.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    /// Transmit power in dBW.
    Power,
    /// Number of users, placed evenly over [-30°, -10°].
    NumUsers,
    /// Prior standard deviation of every angle parameter, in degrees.
    PriorStd,
    /// Mean direction of the first point target, in degrees.
    Target1Doa,
    /// SI power ratio in dB.
    SiStrength,
    /// Extended-target angular spread in degrees; the bin count follows.
    AngularSpread,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Power => "power",
            SweepParam::NumUsers => "num_users",
            SweepParam::PriorStd => "prior_std",
            SweepParam::Target1Doa => "target1_doa",
            SweepParam::SiStrength => "si_strength",
            SweepParam::AngularSpread => "angular_spread",
        }
    }

    pub fn default_grid(self) -> Vec<f64> {
        match self {
            SweepParam::Power => vec![5.0, 10.0, 15.0, 20.0],
            SweepParam::NumUsers => vec![1.0, 2.0, 3.0, 4.0],
            SweepParam::PriorStd => vec![0.1, 0.3, 0.5, 0.7],
            SweepParam::Target1Doa => vec![50.0, 52.0, 54.0, 56.0, 58.0, 60.0],
            SweepParam::SiStrength => vec![-20.0, -10.0, 0.0, 10.0, 20.0],
            SweepParam::AngularSpread => vec![1.5, 3.0, 4.5, 6.0],
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::InvalidConfig(format!("unknown sweep parameter '{s}'")))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub param: SweepParam,
    /// Grid of swept values; empty means the parameter's default grid.
    #[serde(default)]
    pub values: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<Strategy>,
    #[serde(default)]
    pub base: ScenarioConfig,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_trials() -> usize {
    100
}

fn default_strategies() -> Vec<Strategy> {
    Strategy::ALL.to_vec()
}

fn default_seed() -> u64 {
    1
}

impl SweepSpec {
    pub fn new(param: SweepParam, base: ScenarioConfig) -> Self {
        Self {
            param,
            values: Vec::new(),
            trials: default_trials(),
            strategies: default_strategies(),
            base,
            seed: default_seed(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn grid(&self) -> Vec<f64> {
        if self.values.is_empty() {
            self.param.default_grid()
        } else {
            self.values.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be at least 1".into()));
        }
        if self.strategies.is_empty() {
            return Err(Error::InvalidConfig("no strategies selected".into()));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("sweep values must be finite".into()));
        }
        let extended = matches!(self.base.target, TargetConfig::Extended { .. });
        match self.param {
            SweepParam::Target1Doa if extended => {
                return Err(Error::InvalidConfig("target1_doa needs point targets".into()))
            }
            SweepParam::AngularSpread if !extended => {
                return Err(Error::InvalidConfig("angular_spread needs an extended target".into()))
            }
            _ => {}
        }
        for v in self.grid() {
            apply(&self.base, self.param, v)?;
        }
        Ok(())
    }
}

/// User directions for a user-count sweep.
pub fn user_angles(k: usize) -> Vec<f64> {
    match k {
        0 => Vec::new(),
        1 => vec![-20.0],
        _ => (0..k).map(|i| -30.0 + 20.0 * i as f64 / (k - 1) as f64).collect(),
    }
}

/// Bin count that keeps bins `BIN_WIDTH_DEG` wide over `[-spread, spread]`.
pub fn bins_for_spread(spread_deg: f64) -> usize {
    (2.0 * spread_deg / BIN_WIDTH_DEG).round() as usize + 1
}

/// Scenario at one sweep point.
pub fn apply(base: &ScenarioConfig, param: SweepParam, value: f64) -> Result<ScenarioConfig> {
    let mut cfg = base.clone();
    match param {
        SweepParam::Power => {
            cfg.power_db = value;
            cfg.power_w = None;
        }
        SweepParam::NumUsers => {
            if value < 0.0 || value.fract() != 0.0 {
                return Err(Error::InvalidConfig(format!("user count must be a whole number, got {value}")));
            }
            cfg.users.angles_deg = user_angles(value as usize);
        }
        SweepParam::PriorStd => {
            if !(value > 0.0) {
                return Err(Error::InvalidConfig(format!("prior std must be positive, got {value}")));
            }
            match &mut cfg.target {
                TargetConfig::Point { angle_var_deg2, .. } => *angle_var_deg2 = value * value,
                TargetConfig::Extended { center_var_deg2, spread_var_deg2, .. } => {
                    *center_var_deg2 = value * value;
                    *spread_var_deg2 = value * value;
                }
            }
        }
        SweepParam::Target1Doa => match &mut cfg.target {
            TargetConfig::Point { angles_deg, .. } if !angles_deg.is_empty() => angles_deg[0] = value,
            _ => return Err(Error::InvalidConfig("target1_doa needs at least one point target".into())),
        },
        SweepParam::SiStrength => {
            cfg.self_interference.ratio_db = value;
            cfg.self_interference.amplitude = None;
        }
        SweepParam::AngularSpread => match &mut cfg.target {
            TargetConfig::Extended { spread_deg, bins, offsets, .. } => {
                if !(value > 0.0) {
                    return Err(Error::InvalidConfig(format!("angular spread must be positive, got {value}")));
                }
                *spread_deg = value;
                *bins = bins_for_spread(value);
                *offsets = None;
            }
            TargetConfig::Point { .. } => {
                return Err(Error::InvalidConfig("angular_spread needs an extended target".into()))
            }
        },
    }
    cfg.validate()?;
    Ok(cfg)
}
