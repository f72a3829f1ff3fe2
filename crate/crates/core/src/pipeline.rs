//! Day-by-day production simulation.
//!
//! Each day's traffic is split into a ground-truth sample (every quote
//! requested), a challenger slice and the served remainder. A model is
//! retrained daily on the ground-truth sample of the preceding window,
//! turned into `(origin, destination, airline)` rules at the quote budget,
//! checked by a validation gate and then served on the day's traffic.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::construct::LabeledDay;
use crate::domain::{AirportId, Catalog, Instance, QueryId, RuleTriple, SearchQuery};
use crate::eval::{self, EvalError};
use crate::models::Scorer;
use crate::rng;
use crate::zoo::{sample_instances, train_model, train_model_scored, ModelSpec, ZooConfig, ZooError};

const TRAFFIC_SALT: u64 = 0x7AFF_1C;
const VALIDATION_SALT: u64 = 0x5A11_DA7E;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("need {needed} days of history, have {available}")]
    InsufficientHistory { needed: usize, available: usize },
    #[error("invalid traffic fractions: {0}")]
    InvalidFractions(String),
    #[error("invalid pipeline configuration: {0}")]
    InvalidConfig(String),
    #[error("the previous rule set is empty")]
    EmptyPreviousRules,
    #[error("no day served any rules")]
    NoServedDays,
    #[error(transparent)]
    Zoo(#[from] ZooError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Checks a freshly trained model must pass before its rules are served.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateConfig {
    /// Floor on the validation-slice AUC, in percent.
    pub min_auc: f64,
    /// The validation prediction rate must lie in `[min, max] * budget`.
    pub min_rate_factor: f64,
    pub max_rate_factor: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self { min_auc: 55.0, min_rate_factor: 0.5, max_rate_factor: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub train_window_days: usize,
    /// Share of instances we are willing to request quotes for.
    pub budget: f64,
    pub ground_truth_traffic: f64,
    pub challenger_traffic: f64,
    /// Share of the most recent ground-truth day held out for the gate.
    pub validation_fraction: f64,
    pub carry_over: bool,
    /// Pseudo-count pulling each triple's mean score toward the overall mean.
    pub rule_prior_weight: f64,
    pub model: ModelSpec,
    /// Optional second model evaluated on the challenger slice.
    pub challenger: Option<ModelSpec>,
    pub gate: GateConfig,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            train_window_days: 7,
            budget: 0.05,
            ground_truth_traffic: 0.05,
            challenger_traffic: 0.05,
            validation_fraction: 0.05,
            carry_over: true,
            rule_prior_weight: 100.0,
            model: ModelSpec::default(),
            challenger: None,
            gate: GateConfig::default(),
            seed: 0,
        }
    }
}

fn unit(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let (g, c) = (self.ground_truth_traffic, self.challenger_traffic);
        if !unit(g) || !unit(c) || g + c > 1.0 {
            return Err(PipelineError::InvalidFractions(format!(
                "ground truth {g} and challenger {c} must be in [0, 1] and sum to at most 1"
            )));
        }
        if g == 0.0 {
            return Err(PipelineError::InvalidFractions("ground-truth traffic must be positive".into()));
        }
        if self.train_window_days == 0 {
            return Err(PipelineError::InvalidConfig("train_window_days must be at least 1".into()));
        }
        if !(self.budget > 0.0 && self.budget <= 1.0) {
            return Err(PipelineError::InvalidConfig(format!("budget must lie in (0, 1], got {}", self.budget)));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(PipelineError::InvalidConfig("validation_fraction must lie in (0, 1)".into()));
        }
        if !(self.rule_prior_weight >= 0.0 && self.rule_prior_weight.is_finite()) {
            return Err(PipelineError::InvalidConfig("rule_prior_weight must be finite and non-negative".into()));
        }
        let gate = &self.gate;
        if !(gate.min_rate_factor <= gate.max_rate_factor) || !gate.min_auc.is_finite() {
            return Err(PipelineError::InvalidConfig("gate bounds are inconsistent".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    GroundTruth,
    Challenger,
    Serving,
}

/// Which slice of traffic a query falls into; a pure function of its id.
pub fn partition_of(query_id: QueryId, config: &PipelineConfig, seed: u64) -> Partition {
    let u = rng::hash_unit(rng::mix_seed(seed, TRAFFIC_SALT), query_id.0);
    if u < config.ground_truth_traffic {
        Partition::GroundTruth
    } else if u < config.ground_truth_traffic + config.challenger_traffic {
        Partition::Challenger
    } else {
        Partition::Serving
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrafficSplit {
    pub ground_truth: Vec<SearchQuery>,
    pub challenger: Vec<SearchQuery>,
    pub serving: Vec<SearchQuery>,
}

pub fn allocate_traffic(
    queries: &[SearchQuery],
    config: &PipelineConfig,
    seed: u64,
) -> Result<TrafficSplit, PipelineError> {
    config.validate()?;
    let mut split = TrafficSplit::default();
    for q in queries {
        match partition_of(q.query_id, config, seed) {
            Partition::GroundTruth => split.ground_truth.push(*q),
            Partition::Challenger => split.challenger.push(*q),
            Partition::Serving => split.serving.push(*q),
        }
    }
    Ok(split)
}

fn partition_day(day: &LabeledDay, part: Partition, config: &PipelineConfig) -> LabeledDay {
    day.filter_queries(|q| partition_of(q.query_id, config, config.seed) == part)
}

/// Training rows and validation slice for a run on `day`.
pub struct TrainingSplit {
    /// Ground-truth samples of the window days, validation queries removed.
    pub train: LabeledDay,
    pub validation: LabeledDay,
}

/// The validation slice is the `validation_fraction` of the most recent
/// ground-truth day with the smallest hash, at least one query.
pub fn training_split(days: &[LabeledDay], day: usize, config: &PipelineConfig) -> Result<TrainingSplit, PipelineError> {
    let w = config.train_window_days;
    if day < w {
        return Err(PipelineError::InsufficientHistory { needed: w, available: day });
    }
    if day > days.len() {
        return Err(PipelineError::InsufficientHistory { needed: day, available: days.len() });
    }
    let gt: Vec<LabeledDay> = days[day - w..day]
        .iter()
        .map(|d| partition_day(d, Partition::GroundTruth, config))
        .collect();
    let latest = gt.last().expect("window is non-empty");
    let val_seed = rng::mix_seed(config.seed, VALIDATION_SALT);
    let mut ranked: Vec<(f64, QueryId)> = latest
        .queries
        .iter()
        .map(|q| (rng::hash_unit(val_seed, q.query_id.0), q.query_id))
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let n_val = ((config.validation_fraction * ranked.len() as f64).ceil() as usize).clamp(1, ranked.len().max(1));
    let held: BTreeSet<QueryId> = ranked.iter().take(n_val).map(|r| r.1).collect();

    let validation = latest.filter_queries(|q| held.contains(&q.query_id));
    let parts: Vec<LabeledDay> = gt
        .iter()
        .map(|d| d.filter_queries(|q| !held.contains(&q.query_id)))
        .collect();
    Ok(TrainingSplit { train: LabeledDay::concat(&parts), validation })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub triple: RuleTriple,
    /// Highest score among the instances that produced the rule.
    pub score: f64,
}

/// Rules in triple order with the threshold and budget that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSet {
    pub day: u32,
    pub rules: Vec<Rule>,
    pub source_threshold: f64,
    pub budget: f64,
}

impl RuleSet {
    /// Triples whose shrunk mean score (see [`triple_scores`]) reaches `threshold`.
    pub fn extract(
        day: u32,
        instances: &[Instance],
        scores: &[f64],
        threshold: f64,
        budget: f64,
        prior_weight: f64,
    ) -> Self {
        let rules = triple_scores(instances, scores, prior_weight)
            .into_iter()
            .filter(|(_, (mean, _))| *mean >= threshold)
            .map(|(triple, (score, _))| Rule { triple, score })
            .collect();
        Self { day, rules, source_threshold: threshold, budget }
    }

    pub fn triples(&self) -> BTreeSet<RuleTriple> {
        self.rules.iter().map(|r| r.triple).collect()
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }
}

/// Mean score and instance count per triple.
///
/// Means are shrunk toward the overall mean as if `prior_weight` extra
/// instances scored exactly that, so thinly observed triples rank lower.
pub fn triple_scores(
    instances: &[Instance],
    scores: &[f64],
    prior_weight: f64,
) -> BTreeMap<RuleTriple, (f64, usize)> {
    let mut sums: BTreeMap<RuleTriple, (f64, usize)> = BTreeMap::new();
    for (inst, &s) in instances.iter().zip(scores) {
        let e = sums.entry(inst.features.triple()).or_insert((0.0, 0));
        e.0 += s;
        e.1 += 1;
    }
    let m = scores.iter().sum::<f64>() / scores.len().max(1) as f64;
    sums.values_mut()
        .for_each(|(sum, n)| *sum = (*sum + prior_weight * m) / (*n as f64 + prior_weight));
    sums
}

/// Lowest threshold whose rule set still fits the budget on `instances`.
///
/// A rule requests quotes for every instance of its triple, so a threshold
/// costs the share of instances whose triple's mean score reaches it.
/// `None` when even the best-scoring triples are over budget.
pub fn rule_threshold(instances: &[Instance], scores: &[f64], budget: f64, prior_weight: f64) -> Option<f64> {
    let mut ranked: Vec<(f64, usize)> = triple_scores(instances, scores, prior_weight).into_values().collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
    let n = instances.len() as f64;
    let (mut spent, mut best) = (0usize, None);
    for group in ranked.chunk_by(|a, b| a.0 == b.0) {
        spent += group.iter().map(|g| g.1).sum::<usize>();
        if spent as f64 / n > budget {
            break;
        }
        best = Some(group[0].0);
    }
    best
}

fn to_rules(map: BTreeMap<RuleTriple, f64>) -> Vec<Rule> {
    map.into_iter().map(|(triple, score)| Rule { triple, score }).collect()
}

/// Union keeping the higher score for shared triples.
fn union(a: &[Rule], b: &[Rule]) -> Vec<Rule> {
    let mut map: BTreeMap<RuleTriple, f64> = a.iter().map(|r| (r.triple, r.score)).collect();
    for r in b {
        let e = map.entry(r.triple).or_insert(r.score);
        *e = e.max(r.score);
    }
    to_rules(map)
}

/// `origin,destination,airline,score` rows, using airport and airline codes.
pub fn rules_csv(rules: &[Rule], catalog: &Catalog) -> String {
    let airport = |id: AirportId| catalog.airport(id).map_or_else(|| id.0.to_string(), |a| a.code.clone());
    let mut out = String::from("origin,destination,airline,score\n");
    for r in rules {
        let t = r.triple;
        let airline = catalog.airline(t.airline).map_or_else(|| t.airline.0.to_string(), |a| a.code.clone());
        let _ = writeln!(out, "{},{},{},{:.6}", airport(t.origin), airport(t.destination), airline, r.score);
    }
    out
}

/// How much of yesterday's rule set survived into today's.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub day: u32,
    pub retained_frac: f64,
    pub dropped_frac: f64,
    /// New rules, relative to the previous set's size.
    pub added_frac: f64,
}

pub fn stability_report(
    day: u32,
    prev: &BTreeSet<RuleTriple>,
    curr: &BTreeSet<RuleTriple>,
) -> Result<StabilityReport, PipelineError> {
    if prev.is_empty() {
        return Err(PipelineError::EmptyPreviousRules);
    }
    let n = prev.len() as f64;
    Ok(StabilityReport {
        day,
        retained_frac: prev.intersection(curr).count() as f64 / n,
        dropped_frac: prev.difference(curr).count() as f64 / n,
        added_frac: curr.difference(prev).count() as f64 / n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateOutcome {
    pub passed: bool,
    pub auc: Option<f64>,
    pub rate: Option<f64>,
    pub reason: Option<String>,
}

fn run_gate(trained: &Trained, validation: &LabeledDay, config: &PipelineConfig) -> GateOutcome {
    let scores = trained.scorer.score_all(&validation.instances);
    let auc = eval::sweep_curve(&scores, validation, None).ok().map(|c| c.auc);
    let mask = mask_for(validation, &trained.rules.triples());
    let rate = eval::quote_request_rate(&mask, validation).ok();
    let g = &config.gate;
    let (lo, hi) = (g.min_rate_factor * config.budget, g.max_rate_factor * config.budget);
    let reason = match (trained.threshold, auc, rate) {
        (None, _, _) => Some("no operating point fits the budget".to_string()),
        (_, None, _) => Some("validation slice has no competitive combinations".to_string()),
        (_, _, None) => Some("validation slice is empty".to_string()),
        (_, Some(a), _) if a < g.min_auc => Some(format!("validation AUC {a:.2} below {:.2}", g.min_auc)),
        (_, _, Some(r)) if r < lo || r > hi => Some(format!("prediction rate {r:.4} outside [{lo:.4}, {hi:.4}]")),
        _ => None,
    };
    GateOutcome { passed: reason.is_none(), auc, rate, reason }
}

/// What one day's run did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayReport {
    pub day: u32,
    pub released: bool,
    pub gate: GateOutcome,
    pub threshold: Option<f64>,
    pub rules_fresh: usize,
    pub rules_served: usize,
    /// Served rules' recall on the validation slice.
    pub offline_recall: Option<f64>,
    /// Served rules' recall on the day's served traffic.
    pub served_recall: Option<f64>,
    pub served_cost: f64,
    pub challenger_recall: Option<f64>,
    pub challenger_cost: Option<f64>,
    pub stability: Option<StabilityReport>,
    pub n_train_instances: usize,
    pub n_validation_queries: usize,
    pub n_ground_truth: usize,
    pub n_challenger: usize,
    pub n_serving: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayOutput {
    pub report: DayReport,
    pub fresh: RuleSet,
    pub served: Vec<Rule>,
}

/// What carries over from one day to the next.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineState {
    /// Rules extracted yesterday, released or not.
    pub last_extracted: Option<BTreeSet<RuleTriple>>,
    /// Rules extracted and released yesterday.
    pub carried: Vec<Rule>,
    pub served: Vec<Rule>,
}

fn mask_for(day: &LabeledDay, rules: &BTreeSet<RuleTriple>) -> Vec<bool> {
    day.instances.iter().map(|i| rules.contains(&i.features.triple())).collect()
}

struct Trained {
    scorer: Scorer,
    threshold: Option<f64>,
    rules: RuleSet,
}

fn train_and_extract(
    spec: ModelSpec,
    days: &[LabeledDay],
    day: usize,
    train: &LabeledDay,
    n_airports: usize,
    models: &ZooConfig,
    config: &PipelineConfig,
) -> Result<Trained, PipelineError> {
    let window = &days[day - config.train_window_days..day];
    let traces = window.iter().flat_map(|d| d.queries.iter());
    let (scorer, scores) = train_model_scored(spec, &train.instances, traces, n_airports, train.n_airlines, models)?;
    let threshold = rule_threshold(&train.instances, &scores, config.budget, config.rule_prior_weight);
    let rules = RuleSet::extract(
        days[day].day,
        &train.instances,
        &scores,
        threshold.unwrap_or(f64::INFINITY),
        config.budget,
        config.rule_prior_weight,
    );
    Ok(Trained { scorer, threshold, rules })
}

/// Train on the window before `day`, gate, extract rules and serve `day`.
pub fn run_day(
    state: &mut PipelineState,
    days: &[LabeledDay],
    day: usize,
    n_airports: usize,
    models: &ZooConfig,
    config: &PipelineConfig,
) -> Result<DayOutput, PipelineError> {
    config.validate()?;
    if day >= days.len() {
        return Err(PipelineError::InsufficientHistory { needed: day + 1, available: days.len() });
    }
    let split = training_split(days, day, config)?;
    let trained = train_and_extract(config.model, days, day, &split.train, n_airports, models, config)?;
    let gate = run_gate(&trained, &split.validation, config);

    let fresh = trained.rules;
    let served = if gate.passed {
        if config.carry_over {
            union(&fresh.rules, &state.carried)
        } else {
            fresh.rules.clone()
        }
    } else {
        state.served.clone()
    };
    let served_set: BTreeSet<RuleTriple> = served.iter().map(|r| r.triple).collect();
    let fresh_set = fresh.triples();

    let target = &days[day];
    let serving = partition_day(target, Partition::Serving, config);
    let serving_mask = mask_for(&serving, &served_set);
    let served_recall = eval::recall_at_10(&serving_mask, &serving).ok();
    let served_cost = eval::quote_request_rate(&serving_mask, &serving).unwrap_or(0.0);
    let offline_recall = eval::recall_at_10(&mask_for(&split.validation, &served_set), &split.validation).ok();

    let challenger_part = partition_day(target, Partition::Challenger, config);
    let (challenger_recall, challenger_cost) = match config.challenger {
        Some(spec) => {
            let ch = train_and_extract(spec, days, day, &split.train, n_airports, models, config)?;
            let mask = mask_for(&challenger_part, &ch.rules.triples());
            (
                eval::recall_at_10(&mask, &challenger_part).ok(),
                eval::quote_request_rate(&mask, &challenger_part).ok(),
            )
        }
        None => (None, None),
    };

    let stability = match &state.last_extracted {
        Some(prev) if !prev.is_empty() => Some(stability_report(target.day, prev, &fresh_set)?),
        _ => None,
    };

    let report = DayReport {
        day: target.day,
        released: gate.passed,
        threshold: trained.threshold,
        gate,
        rules_fresh: fresh.len(),
        rules_served: served.len(),
        offline_recall,
        served_recall,
        served_cost,
        challenger_recall,
        challenger_cost,
        stability,
        n_train_instances: split.train.instances.len(),
        n_validation_queries: split.validation.queries.len(),
        n_ground_truth: split_len(target, Partition::GroundTruth, config),
        n_challenger: challenger_part.queries.len(),
        n_serving: serving.queries.len(),
    };

    state.carried = if report.released { fresh.rules.clone() } else { Vec::new() };
    state.last_extracted = Some(fresh_set);
    state.served = served.clone();
    Ok(DayOutput { report, fresh, served })
}

fn split_len(day: &LabeledDay, part: Partition, config: &PipelineConfig) -> usize {
    day.queries.iter().filter(|q| partition_of(q.query_id, config, config.seed) == part).count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRun {
    pub config: PipelineConfig,
    pub days: Vec<DayOutput>,
}

/// Run every day that has a full training window behind it.
pub fn run_pipeline(
    days: &[LabeledDay],
    n_airports: usize,
    models: &ZooConfig,
    config: &PipelineConfig,
) -> Result<PipelineRun, PipelineError> {
    config.validate()?;
    let w = config.train_window_days;
    if days.len() <= w {
        return Err(PipelineError::InsufficientHistory { needed: w + 1, available: days.len() });
    }
    let mut state = PipelineState::default();
    let outputs = (w..days.len())
        .map(|d| run_day(&mut state, days, d, n_airports, models, config))
        .collect::<Result<_, _>>()?;
    Ok(PipelineRun { config: config.clone(), days: outputs })
}

fn opt(x: Option<f64>) -> String {
    x.map_or(String::new(), |v| format!("{v:.6}"))
}

pub fn run_summary_csv(run: &PipelineRun) -> String {
    let mut out = String::from(
        "day,released,val_auc,val_rate,threshold,rules_fresh,rules_served,offline_recall,served_recall,\
         served_cost,challenger_recall,challenger_cost,retained,dropped,added,n_ground_truth,n_challenger,n_serving\n",
    );
    for d in &run.days {
        let r = &d.report;
        let s = r.stability;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{:.6},{},{},{},{},{},{},{},{}",
            r.day,
            r.released,
            opt(r.gate.auc),
            opt(r.gate.rate),
            opt(r.threshold),
            r.rules_fresh,
            r.rules_served,
            opt(r.offline_recall),
            opt(r.served_recall),
            r.served_cost,
            opt(r.challenger_recall),
            opt(r.challenger_cost),
            opt(s.map(|s| s.retained_frac)),
            opt(s.map(|s| s.dropped_frac)),
            opt(s.map(|s| s.added_frac)),
            r.n_ground_truth,
            r.n_challenger,
            r.n_serving,
        );
    }
    out
}

pub fn stability_csv(run: &PipelineRun) -> String {
    let mut out = String::from("day,retained,dropped,added\n");
    for s in run.days.iter().filter_map(|d| d.report.stability) {
        let _ = writeln!(out, "{},{:.6},{:.6},{:.6}", s.day, s.retained_frac, s.dropped_frac, s.added_frac);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub day: u32,
    pub offline_recall: f64,
    pub served_recall: f64,
    /// `(served - offline) / offline`.
    pub relative_gap: f64,
}

/// Offline expectation against realized recall for every day that served rules.
pub fn production_gap_report(run: &PipelineRun) -> Result<Vec<GapRow>, PipelineError> {
    let rows: Vec<GapRow> = run
        .days
        .iter()
        .filter(|d| !d.served.is_empty())
        .filter_map(|d| {
            let r = &d.report;
            let (off, srv) = (r.offline_recall?, r.served_recall?);
            Some(GapRow {
                day: r.day,
                offline_recall: off,
                served_recall: srv,
                relative_gap: if off > 0.0 { (srv - off) / off } else { 0.0 },
            })
        })
        .collect();
    if rows.is_empty() {
        return Err(PipelineError::NoServedDays);
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowPoint {
    pub window_days: usize,
    pub queries_per_day: usize,
    pub auc: f64,
}

/// AUC on the last day for models trained on equal-sized samples spread over
/// the previous `N` days.
pub fn sweep_training_window(
    history: &[LabeledDay],
    windows: &[usize],
    total_queries: usize,
    spec: ModelSpec,
    n_airports: usize,
    models: &ZooConfig,
) -> Result<Vec<WindowPoint>, PipelineError> {
    let Some((target, past)) = history.split_last() else {
        return Err(PipelineError::InsufficientHistory { needed: 1, available: 0 });
    };
    let mut out = Vec::with_capacity(windows.len());
    for &n in windows {
        if n == 0 {
            return Err(PipelineError::InvalidConfig("window sizes must be positive".into()));
        }
        if n > past.len() {
            return Err(PipelineError::InsufficientHistory { needed: n + 1, available: history.len() });
        }
        let days = &past[past.len() - n..];
        let per_day = total_queries / n;
        let train = sample_instances(days, Some(per_day), models.seed);
        let traces = days.iter().flat_map(|d| d.queries.iter());
        let scorer = train_model(spec, &train, traces, n_airports, target.n_airlines, models)?;
        let curve = eval::sweep_curve(&scorer.score_all(&target.instances), target, Some(models.curve_cap))?;
        out.push(WindowPoint { window_days: n, queries_per_day: per_day, auc: curve.auc });
    }
    Ok(out)
}

pub fn window_csv(points: &[WindowPoint]) -> String {
    let mut out = String::from("window_days,queries_per_day,auc\n");
    for p in points {
        let _ = writeln!(out, "{},{},{:.6}", p.window_days, p.queries_per_day, p.auc);
    }
    out
}

/// A model trained once against one retrained every day, on the same days.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StalenessReport {
    pub days: Vec<u32>,
    pub one_off: Vec<f64>,
    pub daily: Vec<f64>,
    /// `daily - one_off` per day.
    pub delta: Vec<f64>,
}

impl StalenessReport {
    /// Mean of `daily - one_off` over the last `k` days.
    pub fn tail_gap(&self, k: usize) -> Option<f64> {
        let k = k.min(self.delta.len());
        (k > 0).then(|| self.delta[self.delta.len() - k..].iter().sum::<f64>() / k as f64)
    }
}

/// Evaluates the last `horizon` days of `history`. The one-off model is
/// trained on the `window` days before them; the daily model on the `window`
/// days before each evaluated day.
pub fn staleness_experiment(
    history: &[LabeledDay],
    window: usize,
    horizon: usize,
    spec: ModelSpec,
    n_airports: usize,
    models: &ZooConfig,
) -> Result<StalenessReport, PipelineError> {
    if window == 0 {
        return Err(PipelineError::InvalidConfig("window must be positive".into()));
    }
    if history.len() < window + horizon {
        return Err(PipelineError::InsufficientHistory { needed: window + horizon, available: history.len() });
    }
    if horizon == 0 {
        return Ok(StalenessReport::default());
    }
    let first = history.len() - horizon;
    let fit = |end: usize| -> Result<Scorer, PipelineError> {
        let days = &history[end - window..end];
        let train = sample_instances(days, models.train_queries_per_day, models.seed);
        let traces = days.iter().flat_map(|d| d.queries.iter());
        Ok(train_model(spec, &train, traces, n_airports, history[0].n_airlines, models)?)
    };
    let auc = |scorer: &Scorer, day: &LabeledDay| -> Result<f64, PipelineError> {
        Ok(eval::sweep_curve(&scorer.score_all(&day.instances), day, Some(models.curve_cap))?.auc)
    };
    let one_off = fit(first)?;
    let mut report = StalenessReport::default();
    for e in first..history.len() {
        let day = &history[e];
        let a = auc(&one_off, day)?;
        let b = if e == first { a } else { auc(&fit(e)?, day)? };
        report.days.push(day.day);
        report.one_off.push(a);
        report.daily.push(b);
        report.delta.push(b - a);
    }
    Ok(report)
}

pub fn staleness_csv(report: &StalenessReport) -> String {
    let mut out = String::from("day,one_off_auc,daily_auc,delta\n");
    for i in 0..report.days.len() {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6}",
            report.days[i], report.one_off[i], report.daily[i], report.delta[i]
        );
    }
    out
}
