//! Experiment configuration: one TOML document covering every stage.

use std::path::Path;

use farecombo::pipeline::PipelineConfig;
use farecombo::simgen::SimConfig;
use farecombo::zoo::ZooConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub sim: SimConfig,
    pub models: ZooConfig,
    pub pipeline: PipelineConfig,
    pub experiments: Experiments,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            models: ZooConfig::default(),
            pipeline: PipelineConfig::default(),
            experiments: Experiments::default(),
        }
    }
}

/// Knobs for the reporting experiments layered on top of the core stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Experiments {
    /// Competitiveness cutoff used when labeling days.
    pub top_k: usize,
    /// Training days before the evaluation day in `eval-models`.
    pub eval_window_days: usize,
    pub window_sizes: Vec<usize>,
    /// Training queries shared across each window-sweep point.
    pub window_total_queries: usize,
    pub staleness_horizon: usize,
    pub embed_neighbors: usize,
    /// Most popular airports whose neighbors `embed` prints.
    pub embed_sample_airports: usize,
}

impl Default for Experiments {
    fn default() -> Self {
        Self {
            top_k: 10,
            eval_window_days: 7,
            window_sizes: vec![1, 2, 3, 5, 7, 10, 14],
            window_total_queries: 2800,
            staleness_horizon: 6,
            embed_neighbors: 5,
            embed_sample_airports: 5,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::InvalidConfig(format!("{}: {e}", path.display())))
    }

    /// Apply a command-line seed to every stage.
    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(seed) = seed {
            self.sim.seed = seed;
            self.models = self.models.seeded(seed);
            self.pipeline.seed = seed;
        }
        self
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.sim.validate().map_err(|e| CliError::InvalidConfig(e.to_string()))?;
        self.pipeline.validate().map_err(|e| CliError::InvalidConfig(e.to_string()))?;
        let x = &self.experiments;
        if x.top_k == 0 {
            return Err(CliError::InvalidConfig("experiments.top_k must be positive".into()));
        }
        if x.eval_window_days == 0 || x.staleness_horizon == 0 || x.embed_neighbors == 0 {
            return Err(CliError::InvalidConfig(
                "experiments.eval_window_days, staleness_horizon and embed_neighbors must be positive".into(),
            ));
        }
        if x.window_sizes.contains(&0) {
            return Err(CliError::InvalidConfig("experiments.window_sizes must be positive".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string_pretty(self).map_err(|e| CliError::InvalidConfig(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolved_config_round_trips() {
        let cfg = ExperimentConfig::default().with_seed(Some(9));
        let back: ExperimentConfig = toml::from_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.pipeline.seed, 9);
        assert_eq!(back.sim.seed, 9);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<ExperimentConfig>("[sim]\nn_dayz = 3\n").is_err());
        assert!(toml::from_str::<ExperimentConfig>("colour = 1\n").is_err());
        let ok: ExperimentConfig = toml::from_str("[sim]\nn_days = 3\n").unwrap();
        assert_eq!(ok.sim.n_days, 3);
    }
}
