use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::domain::{AirlineId, AirportId, FeatureVector, Instance, LegDirection};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BanditConfig {
    pub alpha0: f64,
    pub beta0: f64,
}

impl Default for BanditConfig {
    fn default() -> Self {
        Self { alpha0: 1.0, beta0: 1.0 }
    }
}

type Arm = (AirportId, AirportId, AirlineId, LegDirection);

/// Beta-Bernoulli posterior mean per (origin, destination, airline, direction) arm.
///
/// Arms never seen in training fall back to the global posterior mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "BanditRepr", into = "BanditRepr")]
pub struct Bandit {
    pub config: BanditConfig,
    arms: HashMap<Arm, (u32, u32)>,
    global: (u64, u64),
}

#[derive(Serialize, Deserialize)]
pub(crate) struct BanditParams {
    arms: Vec<(Arm, u32, u32)>,
    global_positives: u64,
    global_count: u64,
}

#[derive(Serialize, Deserialize)]
struct BanditRepr {
    config: BanditConfig,
    #[serde(flatten)]
    parameters: BanditParams,
}

impl From<BanditRepr> for Bandit {
    fn from(r: BanditRepr) -> Self {
        let p = r.parameters;
        Self {
            config: r.config,
            arms: p.arms.into_iter().map(|(k, s, n)| (k, (s, n))).collect(),
            global: (p.global_positives, p.global_count),
        }
    }
}

impl From<Bandit> for BanditRepr {
    fn from(b: Bandit) -> Self {
        Self { config: b.config, parameters: b.parameters() }
    }
}

impl Bandit {
    pub fn train(instances: &[Instance], config: BanditConfig) -> Result<Self, ModelError> {
        if instances.is_empty() {
            return Err(ModelError::EmptyTrainingSet);
        }
        if !(config.alpha0 > 0.0 && config.beta0 > 0.0) {
            return Err(ModelError::InvalidConfig("prior parameters must be positive".into()));
        }
        let mut arms: HashMap<Arm, (u32, u32)> = HashMap::new();
        let mut global = (0u64, 0u64);
        for inst in instances {
            let f = &inst.features;
            let e = arms.entry((f.origin, f.destination, f.airline, f.direction)).or_default();
            e.0 += inst.label as u32;
            e.1 += 1;
            global.0 += inst.label as u64;
            global.1 += 1;
        }
        Ok(Self { config, arms, global })
    }

    fn mean(&self, s: f64, n: f64) -> f64 {
        (s + self.config.alpha0) / (n + self.config.alpha0 + self.config.beta0)
    }

    pub fn score(&self, f: &FeatureVector) -> f64 {
        match self.arms.get(&(f.origin, f.destination, f.airline, f.direction)) {
            Some(&(s, n)) => self.mean(s as f64, n as f64),
            None => self.mean(self.global.0 as f64, self.global.1 as f64),
        }
    }

    pub(crate) fn parameters(&self) -> BanditParams {
        let mut arms: Vec<(Arm, u32, u32)> = self.arms.iter().map(|(k, v)| (*k, v.0, v.1)).collect();
        arms.sort_by(|a, b| a.0.cmp(&b.0));
        BanditParams { arms, global_positives: self.global.0, global_count: self.global.1 }
    }
}
