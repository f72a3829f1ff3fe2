//! Recall, quote-request cost, cost-recall curves and their area.
//!
//! Recall is counted over competitive combinations: a combination is
//! constructed only when both its outbound and inbound instances are
//! predicted positive. Cost is the share of instances predicted positive.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::construct::LabeledDay;
use crate::domain::{InstanceKey, LegDirection};

/// Default cap on stored curve points before quantile thinning.
pub const DEFAULT_CURVE_CAP: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("day has no competitive combinations, recall is undefined")]
    NoCompetitiveCombos,
    #[error("day has no instances")]
    EmptyInstanceSet,
    #[error("mask or score length {got} does not match {expected} instances")]
    LengthMismatch { got: usize, expected: usize },
    #[error("competitive combination references a missing instance")]
    MissingInstance,
    #[error("score at instance {0} is not finite")]
    InvalidScore(usize),
    #[error("curve cost must be strictly increasing within [0, 1]")]
    MalformedCurve,
    #[error("no non-empty point fits a budget of {0}")]
    BudgetTooSmall(f64),
    #[error("budget must lie in (0, 1], got {0}")]
    InvalidBudget(f64),
}

/// Instance positions of each competitive combination's two legs.
pub fn combo_legs(day: &LabeledDay) -> Result<Vec<(usize, usize)>, EvalError> {
    let index = day.instance_index();
    day.competitive_combos
        .iter()
        .map(|c| {
            let out = InstanceKey {
                query_id: c.query_id,
                airline: c.outbound_airline,
                direction: LegDirection::Outbound,
            };
            let inb = InstanceKey {
                query_id: c.query_id,
                airline: c.inbound_airline,
                direction: LegDirection::Inbound,
            };
            match (index.get(&out), index.get(&inb)) {
                (Some(&o), Some(&i)) => Ok((o, i)),
                _ => Err(EvalError::MissingInstance),
            }
        })
        .collect()
}

fn check_len(got: usize, day: &LabeledDay) -> Result<(), EvalError> {
    if got != day.instances.len() {
        return Err(EvalError::LengthMismatch { got, expected: day.instances.len() });
    }
    Ok(())
}

/// Share of competitive combinations whose two legs are both predicted.
pub fn recall_at_10(predicted: &[bool], day: &LabeledDay) -> Result<f64, EvalError> {
    check_len(predicted.len(), day)?;
    if day.competitive_combos.is_empty() {
        return Err(EvalError::NoCompetitiveCombos);
    }
    let legs = combo_legs(day)?;
    let hit = legs.iter().filter(|&&(o, i)| predicted[o] && predicted[i]).count();
    Ok(hit as f64 / legs.len() as f64)
}

/// Share of all instances predicted positive.
pub fn quote_request_rate(predicted: &[bool], day: &LabeledDay) -> Result<f64, EvalError> {
    check_len(predicted.len(), day)?;
    if day.instances.is_empty() {
        return Err(EvalError::EmptyInstanceSet);
    }
    Ok(predicted.iter().filter(|&&p| p).count() as f64 / predicted.len() as f64)
}

/// Boolean mask aligned with `day.instances` from a set of instance keys.
pub fn mask_from_keys<'a>(
    day: &LabeledDay,
    keys: impl IntoIterator<Item = &'a InstanceKey>,
) -> Vec<bool> {
    let index: HashMap<InstanceKey, usize> = day.instance_index();
    let mut mask = vec![false; day.instances.len()];
    for k in keys {
        if let Some(&i) = index.get(k) {
            mask[i] = true;
        }
    }
    mask
}

/// One threshold of a sweep: predict every instance scoring at least `threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub cost: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRecallCurve {
    pub points: Vec<CurvePoint>,
    /// Area in percent, padded at (0, 0) and at cost 1.
    pub auc: f64,
}

impl CostRecallCurve {
    pub fn from_points(points: Vec<CurvePoint>) -> Result<Self, EvalError> {
        let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.cost, p.recall)).collect();
        let auc = auc(&pairs)?;
        Ok(Self { points, auc })
    }

    /// Recall reached by the first point with cost at least `cost`.
    pub fn recall_at_or_beyond(&self, cost: f64) -> f64 {
        self.points
            .iter()
            .find(|p| p.cost >= cost)
            .or(self.points.last())
            .map_or(0.0, |p| p.recall)
    }

    /// Linearly interpolated recall at `cost`, with the same padding as the area.
    pub fn interpolate(&self, cost: f64) -> f64 {
        let mut prev = (0.0, 0.0);
        for p in &self.points {
            if cost <= p.cost {
                let span = p.cost - prev.0;
                if span <= 0.0 {
                    return p.recall;
                }
                return prev.1 + (p.recall - prev.1) * (cost - prev.0) / span;
            }
            prev = (p.cost, p.recall);
        }
        prev.1
    }
}

/// Trapezoidal area under `(cost, recall)` points, in percent.
///
/// The curve starts at (0, 0) and is extended to cost 1 at its final recall.
pub fn auc(points: &[(f64, f64)]) -> Result<f64, EvalError> {
    let mut area = 0.0;
    let mut prev = (0.0, 0.0);
    for (k, &(c, r)) in points.iter().enumerate() {
        let increasing = c > prev.0 || (k == 0 && c >= 0.0);
        if !c.is_finite() || !r.is_finite() || !increasing || c > 1.0 {
            return Err(EvalError::MalformedCurve);
        }
        area += (c - prev.0) * (r + prev.1) / 2.0;
        prev = (c, r);
    }
    area += (1.0 - prev.0) * prev.1;
    Ok(100.0 * area)
}

/// Sweep every distinct score from high to low.
///
/// When there are more than `cap` distinct scores the stored points are
/// thinned to `cap` evenly spaced ranks, always keeping the last one.
pub fn sweep_curve(
    scores: &[f64],
    day: &LabeledDay,
    cap: Option<usize>,
) -> Result<CostRecallCurve, EvalError> {
    check_len(scores.len(), day)?;
    if day.instances.is_empty() {
        return Err(EvalError::EmptyInstanceSet);
    }
    if day.competitive_combos.is_empty() {
        return Err(EvalError::NoCompetitiveCombos);
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(EvalError::InvalidScore(i));
    }
    let legs = combo_legs(day)?;

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    // group[i]: rank of instance i's distinct score, 0 for the highest.
    let mut group = vec![0usize; scores.len()];
    let mut thresholds = Vec::new();
    let mut sizes = Vec::new();
    for &i in &order {
        if thresholds.last() != Some(&scores[i]) {
            thresholds.push(scores[i]);
            sizes.push(0usize);
        }
        group[i] = thresholds.len() - 1;
        *sizes.last_mut().expect("pushed above") += 1;
    }
    let mut completed = vec![0usize; thresholds.len()];
    for &(o, i) in &legs {
        completed[group[o].max(group[i])] += 1;
    }

    let n = scores.len() as f64;
    let total = legs.len() as f64;
    let mut all = Vec::with_capacity(thresholds.len());
    let (mut inst, mut hit) = (0usize, 0usize);
    for g in 0..thresholds.len() {
        inst += sizes[g];
        hit += completed[g];
        all.push(CurvePoint {
            threshold: thresholds[g],
            cost: inst as f64 / n,
            recall: hit as f64 / total,
        });
    }
    let points = match cap {
        Some(cap) if cap >= 1 && all.len() > cap => thin(&all, cap),
        _ => all,
    };
    CostRecallCurve::from_points(points)
}

fn thin(points: &[CurvePoint], cap: usize) -> Vec<CurvePoint> {
    let last = points.len() - 1;
    let mut kept: Vec<CurvePoint> = (1..=cap)
        .map(|k| points[(k * last).div_ceil(cap)])
        .collect();
    kept.dedup_by(|a, b| a.cost == b.cost);
    kept
}

/// Operating point chosen for a quote-request budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetDecision {
    pub threshold: f64,
    pub cost: f64,
    pub recall: f64,
}

impl BudgetDecision {
    /// Instances predicted positive at this threshold.
    pub fn predicted_mask(&self, scores: &[f64]) -> Vec<bool> {
        scores.iter().map(|&s| s >= self.threshold).collect()
    }
}

/// The point with the most spend that still fits within `budget`.
pub fn pick_budget(curve: &CostRecallCurve, budget: f64) -> Result<BudgetDecision, EvalError> {
    if !(budget > 0.0 && budget <= 1.0) {
        return Err(EvalError::InvalidBudget(budget));
    }
    curve
        .points
        .iter()
        .take_while(|p| p.cost <= budget)
        .filter(|p| p.cost > 0.0)
        .last()
        .map(|p| BudgetDecision { threshold: p.threshold, cost: p.cost, recall: p.recall })
        .ok_or(EvalError::BudgetTooSmall(budget))
}

/// Area of the perfect scorer's ramp for a positive instance rate `p`, in percent.
pub fn oracle_auc(positive_rate: f64) -> f64 {
    100.0 * (1.0 - positive_rate / 2.0)
}

/// Scores that rank every positive instance above every negative one.
pub fn oracle_scores(day: &LabeledDay) -> Vec<f64> {
    day.instances.iter().map(|i| if i.label { 1.0 } else { 0.0 }).collect()
}

/// Whether the oracle's curve is at least `curve` at every swept cost.
///
/// Compared against the first oracle point at or beyond each cost.
pub fn oracle_dominates(oracle: &CostRecallCurve, curve: &CostRecallCurve) -> bool {
    curve
        .points
        .iter()
        .all(|p| oracle.recall_at_or_beyond(p.cost) + 1e-12 >= p.recall)
}

/// Competitive-combination-weighted mean of per-day recalls, skipping undefined days.
pub fn weighted_recall(per_day: &[(Result<f64, EvalError>, usize)]) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0usize);
    for (r, w) in per_day {
        if let Ok(r) = r {
            num += r * *w as f64;
            den += w;
        }
    }
    (den > 0).then(|| num / den as f64)
}

/// Render a curve as `cost,recall` CSV.
pub fn curve_csv(curve: &CostRecallCurve) -> String {
    let mut out = String::from("cost,recall\n");
    for p in &curve.points {
        out.push_str(&format!("{},{}\n", p.cost, p.recall));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construct::LabeledDay;
    use crate::domain::{
        AirlineId, AirportId, CombinationItinerary, FeatureVector, Instance, QueryId,
        SearchQuery, UserId,
    };

    /// A one-query day over `n_al` airlines with the given competitive combos.
    fn toy_day(n_al: u16, combos: &[(u16, u16)]) -> LabeledDay {
        let q = SearchQuery::new(
            QueryId(1),
            UserId(0),
            AirportId(0),
            AirportId(1),
            0,
            3,
            6,
        )
        .unwrap();
        let mut instances = Vec::new();
        for a in 0..n_al {
            for direction in LegDirection::ALL {
                let label = combos.iter().any(|&(o, i)| match direction {
                    LegDirection::Outbound => o == a,
                    LegDirection::Inbound => i == a,
                });
                instances.push(Instance {
                    query_id: q.query_id,
                    airline: AirlineId(a),
                    direction,
                    label,
                    features: FeatureVector::for_query(&q, AirlineId(a), direction, 1.0),
                });
            }
        }
        LabeledDay {
            day: 0,
            n_airlines: n_al as usize,
            queries: vec![q],
            instances,
            competitive_combos: combos
                .iter()
                .map(|&(o, i)| CombinationItinerary {
                    query_id: q.query_id,
                    outbound_airline: AirlineId(o),
                    inbound_airline: AirlineId(i),
                    price: 1.0,
                })
                .collect(),
            all_combos_count: (n_al * (n_al - 1)) as usize,
            top_k_combo_slots: vec![combos.len() as u32],
        }
    }

    fn key(a: u16, d: LegDirection) -> InstanceKey {
        InstanceKey { query_id: QueryId(1), airline: AirlineId(a), direction: d }
    }

    #[test]
    fn both_legs_rule() {
        // Combos (A,B) and (C,D); predicting A-out, B-in, C-out builds only (A,B).
        let day = toy_day(4, &[(0, 1), (2, 3)]);
        let mask = mask_from_keys(
            &day,
            &[
                key(0, LegDirection::Outbound),
                key(1, LegDirection::Inbound),
                key(2, LegDirection::Outbound),
            ],
        );
        assert_eq!(recall_at_10(&mask, &day).unwrap(), 0.5);
        assert_eq!(quote_request_rate(&mask, &day).unwrap(), 3.0 / 8.0);
    }

    #[test]
    fn trivial_masks() {
        let day = toy_day(4, &[(0, 1), (2, 3)]);
        let n = day.instances.len();
        assert_eq!(recall_at_10(&vec![true; n], &day).unwrap(), 1.0);
        assert_eq!(recall_at_10(&vec![false; n], &day).unwrap(), 0.0);
        assert_eq!(quote_request_rate(&vec![true; n], &day).unwrap(), 1.0);
        assert_eq!(quote_request_rate(&vec![false; n], &day).unwrap(), 0.0);
    }

    #[test]
    fn undefined_recall_and_empty_days() {
        let day = toy_day(3, &[]);
        let n = day.instances.len();
        assert_eq!(recall_at_10(&vec![true; n], &day), Err(EvalError::NoCompetitiveCombos));
        let mut empty = toy_day(3, &[(0, 1)]);
        empty.instances.clear();
        assert_eq!(quote_request_rate(&[], &empty), Err(EvalError::EmptyInstanceSet));
        assert!(matches!(
            recall_at_10(&[true], &toy_day(3, &[(0, 1)])),
            Err(EvalError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn hundred_of_two_thousand() {
        let mut mask = vec![false; 2000];
        mask[..100].iter_mut().for_each(|m| *m = true);
        let rate = mask.iter().filter(|&&m| m).count() as f64 / mask.len() as f64;
        assert_eq!(rate, 0.05);
    }

    #[test]
    fn auc_geometry() {
        assert_eq!(auc(&[(0.0, 0.0), (1.0, 1.0)]).unwrap(), 50.0);
        assert!((auc(&[(0.0, 0.0), (0.1, 1.0), (1.0, 1.0)]).unwrap() - 95.0).abs() < 1e-12);
        assert_eq!(auc(&[(1.0, 1.0)]).unwrap(), 50.0);
        assert_eq!(auc(&[(0.5, 0.2), (0.4, 0.3)]), Err(EvalError::MalformedCurve));
        assert_eq!(auc(&[(0.5, 0.2), (0.5, 0.3)]), Err(EvalError::MalformedCurve));
        assert_eq!(auc(&[]).unwrap(), 0.0);
    }

    #[test]
    fn oracle_curve_is_ramp() {
        let day = toy_day(5, &[(0, 1), (2, 1)]);
        let curve = sweep_curve(&oracle_scores(&day), &day, None).unwrap();
        let p = day.positive_rate();
        assert_eq!(curve.points[0].cost, p);
        assert_eq!(curve.points[0].recall, 1.0);
        assert!((curve.auc - oracle_auc(p)).abs() < 1e-9);
        // Illustrative value: p = 0.068 gives 96.6.
        assert!((oracle_auc(0.068) - 96.6).abs() < 1e-9);
    }

    #[test]
    fn pick_budget_rule() {
        let pts = |costs: &[f64]| {
            CostRecallCurve::from_points(
                costs
                    .iter()
                    .enumerate()
                    .map(|(k, &c)| CurvePoint {
                        threshold: 1.0 - k as f64 / 10.0,
                        cost: c,
                        recall: (k + 1) as f64 / costs.len() as f64,
                    })
                    .collect(),
            )
            .unwrap()
        };
        let curve = pts(&[0.02, 0.049, 0.07, 1.0]);
        assert_eq!(pick_budget(&curve, 0.05).unwrap().cost, 0.049);
        let last = pick_budget(&curve, 1.0).unwrap();
        assert_eq!((last.cost, last.recall), (1.0, 1.0));
        assert_eq!(pick_budget(&curve, 0.01), Err(EvalError::BudgetTooSmall(0.01)));
        assert!(matches!(pick_budget(&curve, 0.0), Err(EvalError::InvalidBudget(_))));
    }

    #[test]
    fn thinning_keeps_endpoint_and_order() {
        let day = toy_day(6, &[(0, 1), (2, 3), (4, 5)]);
        let scores: Vec<f64> = (0..day.instances.len()).map(|i| i as f64).collect();
        let full = sweep_curve(&scores, &day, None).unwrap();
        let thin = sweep_curve(&scores, &day, Some(4)).unwrap();
        assert_eq!(full.points.len(), 12);
        assert!(thin.points.len() <= 4);
        assert_eq!(thin.points.last(), full.points.last());
        assert!(thin.points.windows(2).all(|w| w[0].cost < w[1].cost));
    }

    #[test]
    fn random_scorer_on_balanced_toy() {
        use rand::Rng;
        // Half the instances are positive. Under the both-legs rule a random
        // scorer recalls about c^2 at cost c, so the area is near 100/3.
        let combos: Vec<(u16, u16)> = (0..10u16)
            .flat_map(|o| (10..20u16).map(move |i| (o, i)))
            .collect();
        let day = toy_day(20, &combos);
        let mut aucs = Vec::new();
        for seed in 0..20 {
            let mut rng = crate::rng::stream(seed, 11);
            let scores: Vec<f64> = (0..day.instances.len()).map(|_| rng.random()).collect();
            aucs.push(sweep_curve(&scores, &day, None).unwrap().auc);
        }
        let mean = aucs.iter().sum::<f64>() / aucs.len() as f64;
        assert!(day.positive_rate() == 0.5);
        assert!((mean - 100.0 / 3.0).abs() < 5.0, "mean {mean}");
    }
}
