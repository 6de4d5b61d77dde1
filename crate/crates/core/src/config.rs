//! TOML configuration files.
//!
//! An instance file looks like
//!
//! ```toml
//! Q = 10.0
//! seed = 7
//! realizations = 100
//!
//! [[requests]]
//! id = 1
//! a = 1
//! d = 4
//! w = 9.5
//!
//! [[t1]]
//! pi1 = 0.5058
//!
//! [[t2]]
//! pi2 = 0.6324
//! pf = 0.6595
//! pm = 0.2218
//! ```
//!
//! `H` defaults to the largest deadline and `deadline` to `"exclusive"`.
//! Experiment files deserialize directly into [`ExperimentSpec`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::harness::ExperimentSpec;
use crate::model::{DeadlineMode, Instance, Request, Slot, T1Channel, T2Channel};

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceConfig {
    #[serde(default)]
    pub requests: Vec<Request>,
    #[serde(default)]
    pub t1: Vec<T1Channel>,
    #[serde(default)]
    pub t2: Vec<T2Channel>,
    #[serde(rename = "Q", alias = "penalty")]
    pub penalty: f64,
    #[serde(rename = "H", alias = "horizon", default)]
    pub horizon: Option<Slot>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub deadline: DeadlineMode,
    /// Number of sample paths to simulate, starting at `seed`.
    #[serde(default = "one")]
    pub realizations: usize,
}

impl InstanceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::from_toml(&read(path.as_ref())?)
    }

    pub fn instance(&self) -> Result<Instance, ConfigError> {
        let horizon = self
            .horizon
            .unwrap_or_else(|| self.requests.iter().map(|r| r.deadline).max().unwrap_or(1).max(1));
        Ok(Instance::with_horizon(
            self.requests.clone(),
            self.t1.clone(),
            self.t2.clone(),
            self.penalty,
            horizon,
            self.deadline,
        )?)
    }
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })
}

pub fn experiment_from_toml(text: &str) -> Result<ExperimentSpec, ConfigError> {
    let spec: ExperimentSpec = toml::from_str(text)?;
    spec.validate()?;
    Ok(spec)
}

pub fn load_experiment(path: impl AsRef<Path>) -> Result<ExperimentSpec, ConfigError> {
    experiment_from_toml(&read(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auction::Reservation;
    use crate::harness::Sweep;

    const SAMPLE: &str = r#"
Q = 10.0
seed = 3

[[requests]]
id = 1
a = 1
d = 4
w = 9.5

[[requests]]
id = 2
a = 2
d = 3
w = 4

[[t1]]
pi1 = 0.5058

[[t2]]
pi2 = 0.6324
pf = 0.6595
pm = 0.2218
"#;

    #[test]
    fn parses_instance() {
        let cfg = InstanceConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.realizations, 1);
        let inst = cfg.instance().unwrap();
        assert_eq!(inst.horizon(), 4);
        assert_eq!(inst.requests()[0], Request::new(1, 1, 4, 9.5));
        assert_eq!(inst.t1()[0].idle_prob, 0.5058);
        assert!((inst.t2_stats()[0].cost - 3.786).abs() < 1e-3);
        assert_eq!(inst.deadline_mode(), DeadlineMode::Exclusive);
    }

    #[test]
    fn explicit_horizon_and_mode() {
        let text = format!("H = 9\ndeadline = \"inclusive\"\n{SAMPLE}");
        let inst = InstanceConfig::from_toml(&text).unwrap().instance().unwrap();
        assert_eq!(inst.horizon(), 9);
        assert_eq!(inst.deadline_mode(), DeadlineMode::Inclusive);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(InstanceConfig::from_toml("Q = 1\nbogus = 2"), Err(ConfigError::Parse(_))));
        assert!(matches!(InstanceConfig::from_toml("seed = 1"), Err(ConfigError::Parse(_))));
        let bad = InstanceConfig::from_toml("Q = 1\n[[t2]]\npi2 = 1.5\npf = 0\npm = 0").unwrap();
        assert!(matches!(bad.instance(), Err(ConfigError::Model(_))));
        let short = format!("H = 2\n{SAMPLE}");
        assert!(InstanceConfig::from_toml(&short).unwrap().instance().is_err());
    }

    #[test]
    fn parses_experiment() {
        let text = r#"
groups = 5
realizations = 10
seed = 42
auction_reservation = "auto-q0"

[channels]
Q = 10.0
t2 = [
  { pi2 = 0.6324, pf = 0.6595, pm = 0.2218 },
  { pi2 = 0.6324, pf = 0.6595, pm = 0.2218 },
]

[requests]
count = 20
inter_arrival_mean = 3.0
duration_mean = 6.0
valuation_lo = 1.0
valuation_hi = 15.0

[sweep]
var = "reservation"
values = [2.0, 3.8, 8.0]
"#;
        let spec = experiment_from_toml(text).unwrap();
        assert_eq!(spec.groups, 5);
        assert_eq!(spec.auction_reservation, Reservation::AutoQ0);
        assert_eq!(spec.online_theta, Reservation::CostBased);
        assert_eq!(spec.sweep, Sweep::Reservation(vec![2.0, 3.8, 8.0]));
        assert!(spec.offline);

        let numeric = text.replace("\"auto-q0\"", "4.5");
        assert_eq!(experiment_from_toml(&numeric).unwrap().auction_reservation, Reservation::Flat(4.5));
        let zero = text.replace("groups = 5", "groups = 0");
        assert!(experiment_from_toml(&zero).is_err());
    }
}
