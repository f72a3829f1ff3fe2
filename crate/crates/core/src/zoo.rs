//! Train every model on a window of labeled days and compare them on the next day.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::construct::LabeledDay;
use crate::domain::{Instance, SearchQuery};
use crate::embed::{
    build_traces, train_skipgram, EmbedError, EmbedNet, EmbedNetConfig, EmbeddingTable, SkipGramConfig,
};
use crate::eval::{self, CostRecallCurve, EvalError};
use crate::features::{FeatureEncoder, FeatureMode};
use crate::models::{
    make_oracle, Bandit, BanditConfig, Forest, ForestConfig, LogReg, LogRegConfig, ModelError, ModelKind,
    Popularity, Scorer,
};
use crate::rng;

#[derive(Debug, Error)]
pub enum ZooError {
    #[error("need at least one training day")]
    NoHistory,
    #[error("the oracle cannot be trained; it reads the evaluation day's labels")]
    UntrainableOracle,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZooConfig {
    /// Queries sampled per training day; `None` keeps every query.
    pub train_queries_per_day: Option<usize>,
    pub curve_cap: usize,
    pub seed: u64,
    pub logreg: LogRegConfig,
    pub bandit: BanditConfig,
    pub forest: ForestConfig,
    pub embed_net: EmbedNetConfig,
    pub skipgram: SkipGramConfig,
}

impl Default for ZooConfig {
    fn default() -> Self {
        Self {
            train_queries_per_day: Some(400),
            curve_cap: eval::DEFAULT_CURVE_CAP,
            seed: 0,
            logreg: LogRegConfig::default(),
            bandit: BanditConfig::default(),
            forest: ForestConfig::default(),
            embed_net: EmbedNetConfig::default(),
            skipgram: SkipGramConfig::default(),
        }
    }
}

impl ZooConfig {
    /// Copy with every model seed derived from `seed`.
    pub fn seeded(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.logreg.seed = rng::mix_seed(seed, 1);
        self.forest.seed = rng::mix_seed(seed, 2);
        self.embed_net.seed = rng::mix_seed(seed, 3);
        self.skipgram.seed = rng::mix_seed(seed, 4);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelResult {
    pub model: ModelKind,
    pub feature_mode: Option<FeatureMode>,
    pub auc: f64,
    pub curve: CostRecallCurve,
}

impl ModelResult {
    /// Row label such as `random_forest/one_hot`.
    pub fn label(&self) -> String {
        match self.feature_mode {
            Some(m) if self.model == ModelKind::RandomForest => format!("{}/{}", self.model, m),
            _ => self.model.to_string(),
        }
    }
}

/// Which model to train, and on which airport representation.
///
/// The feature mode only matters for logistic regression and the forest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    #[serde(default = "default_mode")]
    pub feature_mode: FeatureMode,
}

fn default_mode() -> FeatureMode {
    FeatureMode::OneHot
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self { kind: ModelKind::RandomForest, feature_mode: FeatureMode::OneHot }
    }
}

impl ModelSpec {
    pub fn forest(feature_mode: FeatureMode) -> Self {
        Self { kind: ModelKind::RandomForest, feature_mode }
    }
}

/// Train a single model. `trace_queries` feeds the skip-gram corpus when the
/// trace representation is requested.
pub fn train_model<'a>(
    spec: ModelSpec,
    train: &[Instance],
    trace_queries: impl IntoIterator<Item = &'a SearchQuery>,
    n_airports: usize,
    n_airlines: usize,
    config: &ZooConfig,
) -> Result<Scorer, ZooError> {
    Ok(fit(spec, train, trace_queries, n_airports, n_airlines, config, false)?.0)
}

/// Like [`train_model`], also returning a score for every training instance.
///
/// Forests score their training rows out of bag, since their in-sample votes
/// saturate; other models score them directly.
pub fn train_model_scored<'a>(
    spec: ModelSpec,
    train: &[Instance],
    trace_queries: impl IntoIterator<Item = &'a SearchQuery>,
    n_airports: usize,
    n_airlines: usize,
    config: &ZooConfig,
) -> Result<(Scorer, Vec<f64>), ZooError> {
    let (scorer, oob) = fit(spec, train, trace_queries, n_airports, n_airlines, config, true)?;
    let scores = oob.unwrap_or_else(|| scorer.score_all(train));
    Ok((scorer, scores))
}

fn fit<'a>(
    spec: ModelSpec,
    train: &[Instance],
    trace_queries: impl IntoIterator<Item = &'a SearchQuery>,
    n_airports: usize,
    n_airlines: usize,
    config: &ZooConfig,
    oob: bool,
) -> Result<(Scorer, Option<Vec<f64>>), ZooError> {
    let encoder = |mode: FeatureMode| -> Result<FeatureEncoder, ZooError> {
        Ok(match mode {
            FeatureMode::OneHot => FeatureEncoder::one_hot(n_airports, n_airlines),
            FeatureMode::TraceEmbed => {
                let corpus = build_traces(trace_queries);
                let table = train_skipgram(&corpus, n_airports, &config.skipgram)?.table;
                FeatureEncoder::trace(n_airlines, table)
            }
            FeatureMode::CoTrainedEmbed => {
                let net = EmbedNet::train(train, n_airports, n_airlines, &config.embed_net)?.net;
                FeatureEncoder::co_trained(n_airlines, net.origin_table(), net.destination_table())
            }
        })
    };
    if spec.kind == ModelKind::RandomForest && oob {
        let (forest, scores) = Forest::train_with_oob(train, encoder(spec.feature_mode)?, config.forest)?;
        return Ok((Scorer::Forest(forest), Some(scores)));
    }
    let scorer = match spec.kind {
        ModelKind::Popularity => Scorer::Popularity(Popularity::train(train)?),
        ModelKind::Bandit => Scorer::Bandit(Bandit::train(train, config.bandit)?),
        ModelKind::LogReg => Scorer::LogReg(LogReg::train(train, encoder(spec.feature_mode)?, config.logreg)?),
        ModelKind::RandomForest => {
            Scorer::Forest(Forest::train(train, encoder(spec.feature_mode)?, config.forest)?)
        }
        ModelKind::EmbedNet => Scorer::EmbedNet(EmbedNet::train(train, n_airports, n_airlines, &config.embed_net)?.net),
        ModelKind::Oracle => return Err(ZooError::UntrainableOracle),
    };
    Ok((scorer, None))
}

/// Training instances from a per-day query sample.
pub fn sample_instances(days: &[LabeledDay], per_day: Option<usize>, seed: u64) -> Vec<Instance> {
    let mut out = Vec::new();
    for day in days {
        match per_day {
            Some(k) if k < day.queries.len() => {
                let frac = k as f64 / day.queries.len() as f64;
                let sub = day.filter_queries(|q| rng::hash_unit(seed ^ 0x5A3_91E, q.query_id.0) < frac);
                out.extend(sub.instances);
            }
            _ => out.extend_from_slice(&day.instances),
        }
    }
    out
}

/// Everything trained on one window, reusable for scoring several days.
pub struct TrainedZoo {
    pub scorers: Vec<Scorer>,
    pub trace_table: EmbeddingTable,
}

pub fn train_zoo(
    history: &[LabeledDay],
    n_airports: usize,
    n_airlines: usize,
    config: &ZooConfig,
) -> Result<TrainedZoo, ZooError> {
    if history.is_empty() {
        return Err(ZooError::NoHistory);
    }
    let train = sample_instances(history, config.train_queries_per_day, config.seed);
    let corpus = build_traces(history.iter().flat_map(|d| d.queries.iter()));
    let trace_table = train_skipgram(&corpus, n_airports, &config.skipgram)?.table;
    let net = EmbedNet::train(&train, n_airports, n_airlines, &config.embed_net)?.net;

    let one_hot = FeatureEncoder::one_hot(n_airports, n_airlines);
    let trace = FeatureEncoder::trace(n_airlines, trace_table.clone());
    let co = FeatureEncoder::co_trained(n_airlines, net.origin_table(), net.destination_table());
    let scorers = vec![
        Scorer::Popularity(Popularity::train(&train)?),
        Scorer::LogReg(LogReg::train(&train, one_hot.clone(), config.logreg)?),
        Scorer::Bandit(Bandit::train(&train, config.bandit)?),
        Scorer::Forest(Forest::train(&train, one_hot, config.forest)?),
        Scorer::Forest(Forest::train(&train, trace, config.forest)?),
        Scorer::Forest(Forest::train(&train, co, config.forest)?),
        Scorer::EmbedNet(net),
    ];
    Ok(TrainedZoo { scorers, trace_table })
}

/// Score every trained model plus the oracle on `target`.
pub fn evaluate_zoo(zoo: &TrainedZoo, target: &LabeledDay, curve_cap: usize) -> Result<Vec<ModelResult>, ZooError> {
    let oracle = make_oracle(target);
    zoo.scorers
        .iter()
        .chain(std::iter::once(&oracle))
        .map(|s| {
            let scores = s.score_all(&target.instances);
            let curve = eval::sweep_curve(&scores, target, Some(curve_cap))?;
            Ok(ModelResult { model: s.kind(), feature_mode: s.feature_mode(), auc: curve.auc, curve })
        })
        .collect()
}

/// Train on `history` and evaluate on `target`.
pub fn evaluate_models(
    history: &[LabeledDay],
    target: &LabeledDay,
    n_airports: usize,
    n_airlines: usize,
    config: &ZooConfig,
) -> Result<Vec<ModelResult>, ZooError> {
    let zoo = train_zoo(history, n_airports, n_airlines, config)?;
    evaluate_zoo(&zoo, target, config.curve_cap)
}

/// `model,feature_mode,auc` rows.
pub fn auc_csv(results: &[ModelResult]) -> String {
    let mut out = String::from("model,feature_mode,auc\n");
    for r in results {
        let mode = r.feature_mode.map_or(String::new(), |m| m.to_string());
        out.push_str(&format!("{},{},{:.6}\n", r.model, mode, r.auc));
    }
    out
}
