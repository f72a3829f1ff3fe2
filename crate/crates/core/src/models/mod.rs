//! Scorers that rank (query, airline, direction) instances by how likely
//! they are to take part in a competitive combination.

mod bandit;
mod forest;
mod logreg;
mod popularity;

use std::collections::HashSet;

use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::construct::LabeledDay;
use crate::domain::{Instance, InstanceKey};
use crate::embed::{EmbedError, EmbedNet};
use crate::features::FeatureMode;

pub use bandit::{Bandit, BanditConfig};
pub use forest::{best_split_exhaustive, Forest, ForestConfig, ForestScoring, Node, Tree};
pub use logreg::{logreg_loss_and_grad, LogReg, LogRegConfig};
pub use popularity::Popularity;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("loss became non-finite at epoch {0}")]
    NonFiniteLoss(usize),
    #[error("feature mode {0} needs an embedding table")]
    MissingEmbeddingTable(FeatureMode),
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Popularity,
    LogReg,
    Bandit,
    RandomForest,
    EmbedNet,
    Oracle,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Popularity => "popularity",
            ModelKind::LogReg => "log_reg",
            ModelKind::Bandit => "bandit",
            ModelKind::RandomForest => "random_forest",
            ModelKind::EmbedNet => "embed_net",
            ModelKind::Oracle => "oracle",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Perfect-knowledge scorer: 1 for the evaluation day's positives, 0 otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Oracle {
    #[serde(with = "sorted_keys")]
    positives: HashSet<InstanceKey>,
}

mod sorted_keys {
    use super::*;
    use serde::Deserializer;

    pub fn serialize<S: Serializer>(set: &HashSet<InstanceKey>, s: S) -> Result<S::Ok, S::Error> {
        let mut keys: Vec<&InstanceKey> = set.iter().collect();
        keys.sort();
        keys.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<HashSet<InstanceKey>, D::Error> {
        Ok(Vec::<InstanceKey>::deserialize(d)?.into_iter().collect())
    }
}

impl Oracle {
    pub fn new(day: &LabeledDay) -> Self {
        Self { positives: day.instances.iter().filter(|i| i.label).map(Instance::key).collect() }
    }

    pub fn score(&self, instance: &Instance) -> f64 {
        if self.positives.contains(&instance.key()) {
            1.0
        } else {
            0.0
        }
    }
}

pub fn make_oracle(day: &LabeledDay) -> Scorer {
    Scorer::Oracle(Oracle::new(day))
}

/// Any trained model behind one scoring interface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Scorer {
    Popularity(Popularity),
    LogReg(LogReg),
    Bandit(Bandit),
    Forest(Forest),
    EmbedNet(EmbedNet),
    Oracle(Oracle),
}

impl Scorer {
    pub fn kind(&self) -> ModelKind {
        match self {
            Scorer::Popularity(_) => ModelKind::Popularity,
            Scorer::LogReg(_) => ModelKind::LogReg,
            Scorer::Bandit(_) => ModelKind::Bandit,
            Scorer::Forest(_) => ModelKind::RandomForest,
            Scorer::EmbedNet(_) => ModelKind::EmbedNet,
            Scorer::Oracle(_) => ModelKind::Oracle,
        }
    }

    /// Airport representation used by feature-based models.
    pub fn feature_mode(&self) -> Option<FeatureMode> {
        match self {
            Scorer::LogReg(m) => Some(m.encoder.mode()),
            Scorer::Forest(m) => Some(m.encoder.mode()),
            Scorer::EmbedNet(_) => Some(FeatureMode::CoTrainedEmbed),
            _ => None,
        }
    }

    pub fn score(&self, instance: &Instance) -> f64 {
        match self {
            Scorer::Popularity(m) => m.score(&instance.features),
            Scorer::LogReg(m) => m.score(&instance.features),
            Scorer::Bandit(m) => m.score(&instance.features),
            Scorer::Forest(m) => m.score(&instance.features),
            Scorer::EmbedNet(m) => m.score(&instance.features),
            Scorer::Oracle(m) => m.score(instance),
        }
    }

    pub fn score_all(&self, instances: &[Instance]) -> Vec<f64> {
        match self {
            Scorer::Forest(m) => m.score_all(instances),
            Scorer::EmbedNet(m) => m.score_all(instances),
            _ => instances.iter().map(|i| self.score(i)).collect(),
        }
    }

    /// Export view: `{kind, feature_mode, config, parameters}`.
    pub fn envelope(&self) -> Envelope<'_> {
        Envelope(self)
    }
}

/// Serializes a scorer as `{kind, feature_mode, config, parameters}`.
pub struct Envelope<'a>(&'a Scorer);

impl Serialize for Envelope<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let scorer = self.0;
        let mut st = s.serialize_struct("Envelope", 4)?;
        st.serialize_field("kind", &scorer.kind())?;
        st.serialize_field("feature_mode", &scorer.feature_mode())?;
        match scorer {
            Scorer::Popularity(m) => {
                st.serialize_field("config", &())?;
                st.serialize_field("parameters", m)?;
            }
            Scorer::LogReg(m) => {
                st.serialize_field("config", &m.config)?;
                st.serialize_field("parameters", &m.parameters())?;
            }
            Scorer::Bandit(m) => {
                st.serialize_field("config", &m.config)?;
                st.serialize_field("parameters", &m.parameters())?;
            }
            Scorer::Forest(m) => {
                st.serialize_field("config", &m.config)?;
                st.serialize_field("parameters", &m.parameters())?;
            }
            Scorer::EmbedNet(m) => {
                st.serialize_field("config", &m.config)?;
                st.serialize_field("parameters", &m.params)?;
            }
            Scorer::Oracle(m) => {
                st.serialize_field("config", &())?;
                st.serialize_field("parameters", m)?;
            }
        }
        st.end()
    }
}
