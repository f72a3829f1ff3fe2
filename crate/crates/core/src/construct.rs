//! Combination building, price ranking and top-k competitiveness labels.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    AirlineId, AirportId, CombinationItinerary, DomainError, FeatureVector, Instance, InstanceKey,
    LegDirection, LegQuote, QueryId, RoundTripQuote, SearchQuery,
};
use crate::simgen::{GroundTruthDay, World};

pub const DEFAULT_TOP_K: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstructError {
    #[error("query {0:?} is missing quotes for {1}")]
    IncompleteQuotes(QueryId, String),
    #[error("query {0:?} has no offers to rank")]
    NoOffers(QueryId),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OfferKind {
    RoundTrip,
    Combination,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Offer {
    pub kind: OfferKind,
    pub outbound_airline: AirlineId,
    pub inbound_airline: AirlineId,
    pub price: f64,
}

impl Offer {
    fn cmp_rank(&self, other: &Self) -> Ordering {
        self.price
            .total_cmp(&other.price)
            .then(self.kind.cmp(&other.kind))
            .then(self.outbound_airline.cmp(&other.outbound_airline))
            .then(self.inbound_airline.cmp(&other.inbound_airline))
    }
}

/// All offers of one search, cheapest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResultPage {
    pub query_id: QueryId,
    pub offers: Vec<Offer>,
    pub top_k: usize,
}

impl SearchResultPage {
    pub fn top(&self) -> &[Offer] {
        &self.offers[..self.top_k.min(self.offers.len())]
    }
}

/// Every cross-airline pairing of an outbound and an inbound leg.
pub fn build_combinations(
    query_id: QueryId,
    leg_quotes: &[LegQuote],
    n_airlines: usize,
) -> Result<Vec<CombinationItinerary>, ConstructError> {
    let legs = leg_table(query_id, leg_quotes, n_airlines)?;
    let mut combos = Vec::with_capacity(n_airlines * n_airlines.saturating_sub(1));
    for out in &legs {
        for inb in &legs {
            if out[0].airline != inb[1].airline {
                combos.push(CombinationItinerary::from_legs(&out[0], &inb[1])?);
            }
        }
    }
    Ok(combos)
}

fn leg_table(
    query_id: QueryId,
    leg_quotes: &[LegQuote],
    n_airlines: usize,
) -> Result<Vec<[LegQuote; 2]>, ConstructError> {
    let mut slots: Vec<[Option<LegQuote>; 2]> = vec![[None, None]; n_airlines];
    for q in leg_quotes.iter().filter(|q| q.query_id == query_id) {
        let slot = slots.get_mut(q.airline.index()).ok_or_else(|| {
            ConstructError::IncompleteQuotes(query_id, format!("unknown {}", q.airline))
        })?;
        slot[q.direction.index()] = Some(*q);
    }
    slots
        .into_iter()
        .enumerate()
        .map(|(a, s)| match s {
            [Some(o), Some(i)] => Ok([o, i]),
            _ => Err(ConstructError::IncompleteQuotes(
                query_id,
                format!("legs of {}", AirlineId(a as u16)),
            )),
        })
        .collect()
}

/// Sort round trips and combinations by price; ties put round trips first,
/// then ascending (outbound, inbound) airline ids.
pub fn rank_results(
    query_id: QueryId,
    roundtrips: &[RoundTripQuote],
    combinations: &[CombinationItinerary],
    top_k: usize,
) -> Result<SearchResultPage, ConstructError> {
    let mut offers: Vec<Offer> = roundtrips
        .iter()
        .map(|q| Offer {
            kind: OfferKind::RoundTrip,
            outbound_airline: q.airline,
            inbound_airline: q.airline,
            price: q.price,
        })
        .chain(combinations.iter().map(|c| Offer {
            kind: OfferKind::Combination,
            outbound_airline: c.outbound_airline,
            inbound_airline: c.inbound_airline,
            price: c.price,
        }))
        .collect();
    if offers.is_empty() {
        return Err(ConstructError::NoOffers(query_id));
    }
    offers.sort_by(Offer::cmp_rank);
    Ok(SearchResultPage {
        query_id,
        offers,
        top_k,
    })
}

/// One day's classifier instances with their ground-truth witnesses.
///
/// Instances are laid out query by query, and within a query airline by
/// airline with the outbound instance first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDay {
    pub day: u32,
    pub n_airlines: usize,
    pub queries: Vec<SearchQuery>,
    pub instances: Vec<Instance>,
    pub competitive_combos: Vec<CombinationItinerary>,
    pub all_combos_count: usize,
    /// Number of combinations among each query's top-k slots, aligned with `queries`.
    pub top_k_combo_slots: Vec<u32>,
}

impl LabeledDay {
    pub fn positive_rate(&self) -> f64 {
        if self.instances.is_empty() {
            return 0.0;
        }
        self.instances.iter().filter(|i| i.label).count() as f64 / self.instances.len() as f64
    }

    pub fn instance_index(&self) -> HashMap<InstanceKey, usize> {
        self.instances
            .iter()
            .enumerate()
            .map(|(i, inst)| (inst.key(), i))
            .collect()
    }

    /// Keep only the queries accepted by `keep`, along with their instances and combos.
    pub fn filter_queries(&self, mut keep: impl FnMut(&SearchQuery) -> bool) -> LabeledDay {
        let mut kept = std::collections::HashSet::new();
        let mut queries = Vec::new();
        let mut slots = Vec::new();
        for (q, &s) in self.queries.iter().zip(&self.top_k_combo_slots) {
            if keep(q) {
                kept.insert(q.query_id);
                queries.push(*q);
                slots.push(s);
            }
        }
        let n_al = self.n_airlines;
        LabeledDay {
            day: self.day,
            n_airlines: n_al,
            instances: self
                .instances
                .iter()
                .filter(|i| kept.contains(&i.query_id))
                .copied()
                .collect(),
            competitive_combos: self
                .competitive_combos
                .iter()
                .filter(|c| kept.contains(&c.query_id))
                .copied()
                .collect(),
            all_combos_count: queries.len() * n_al * n_al.saturating_sub(1),
            top_k_combo_slots: slots,
            queries,
        }
    }

    /// Several days stacked into one evaluation set, stamped with the last day.
    pub fn concat(days: &[LabeledDay]) -> LabeledDay {
        let mut out = LabeledDay {
            day: days.last().map_or(0, |d| d.day),
            n_airlines: days.first().map_or(0, |d| d.n_airlines),
            queries: Vec::new(),
            instances: Vec::new(),
            competitive_combos: Vec::new(),
            all_combos_count: 0,
            top_k_combo_slots: Vec::new(),
        };
        for d in days {
            out.queries.extend_from_slice(&d.queries);
            out.instances.extend_from_slice(&d.instances);
            out.competitive_combos.extend_from_slice(&d.competitive_combos);
            out.all_combos_count += d.all_combos_count;
            out.top_k_combo_slots.extend_from_slice(&d.top_k_combo_slots);
        }
        out
    }

    pub fn summary(&self) -> DaySummary {
        let with_combo: std::collections::HashSet<QueryId> =
            self.competitive_combos.iter().map(|c| c.query_id).collect();
        let slots: u32 = self.top_k_combo_slots.iter().sum();
        let top_k_total = self.queries.len() * DEFAULT_TOP_K;
        DaySummary {
            day: self.day,
            n_queries: self.queries.len(),
            n_instances: self.instances.len(),
            positive_rate: self.positive_rate(),
            competitive_combos: self.competitive_combos.len(),
            all_combos: self.all_combos_count,
            combo_share_top_k: if top_k_total == 0 {
                0.0
            } else {
                slots as f64 / top_k_total as f64
            },
            query_share_with_competitive: if self.queries.is_empty() {
                0.0
            } else {
                with_combo.len() as f64 / self.queries.len() as f64
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DaySummary {
    pub day: u32,
    pub n_queries: usize,
    pub n_instances: usize,
    pub positive_rate: f64,
    pub competitive_combos: usize,
    pub all_combos: usize,
    pub combo_share_top_k: f64,
    pub query_share_with_competitive: f64,
}

/// Label every query of a day; `route_popularity` feeds the feature vectors.
pub fn label_day(
    ground_truth: &GroundTruthDay,
    n_airlines: usize,
    top_k: usize,
    route_popularity: impl Fn(AirportId, AirportId) -> f64,
) -> Result<LabeledDay, ConstructError> {
    let n_q = ground_truth.records.len();
    let mut queries = Vec::with_capacity(n_q);
    let mut instances = Vec::with_capacity(n_q * 2 * n_airlines);
    let mut competitive = Vec::new();
    let mut slots = Vec::with_capacity(n_q);
    for record in &ground_truth.records {
        let query = record.query;
        let qid = query.query_id;
        let mut rts: Vec<Option<RoundTripQuote>> = vec![None; n_airlines];
        for rt in record.roundtrip_quotes.iter().filter(|q| q.query_id == qid) {
            if let Some(slot) = rts.get_mut(rt.airline.index()) {
                *slot = Some(*rt);
            }
        }
        let rts: Vec<RoundTripQuote> = rts
            .into_iter()
            .enumerate()
            .map(|(a, q)| {
                q.ok_or_else(|| {
                    ConstructError::IncompleteQuotes(
                        qid,
                        format!("round trip of {}", AirlineId(a as u16)),
                    )
                })
            })
            .collect::<Result<_, _>>()?;
        let combos = build_combinations(qid, &record.leg_quotes, n_airlines)?;
        let page = rank_results(qid, &rts, &combos, top_k)?;

        let mut positive = vec![[false; 2]; n_airlines];
        let mut n_slots = 0;
        for offer in page.top().iter().filter(|o| o.kind == OfferKind::Combination) {
            n_slots += 1;
            positive[offer.outbound_airline.index()][LegDirection::Outbound.index()] = true;
            positive[offer.inbound_airline.index()][LegDirection::Inbound.index()] = true;
            competitive.push(CombinationItinerary {
                query_id: qid,
                outbound_airline: offer.outbound_airline,
                inbound_airline: offer.inbound_airline,
                price: offer.price,
            });
        }
        let popularity = route_popularity(query.origin, query.destination);
        for (a, flags) in positive.iter().enumerate() {
            let airline = AirlineId(a as u16);
            for direction in LegDirection::ALL {
                instances.push(Instance {
                    query_id: qid,
                    airline,
                    direction,
                    label: flags[direction.index()],
                    features: FeatureVector::for_query(&query, airline, direction, popularity),
                });
            }
        }
        slots.push(n_slots);
        queries.push(query);
    }
    Ok(LabeledDay {
        day: ground_truth.day,
        n_airlines,
        all_combos_count: n_q * n_airlines * n_airlines.saturating_sub(1),
        queries,
        instances,
        competitive_combos: competitive,
        top_k_combo_slots: slots,
    })
}

impl World {
    pub fn label_day(&self, ground_truth: &GroundTruthDay, top_k: usize) -> Result<LabeledDay, ConstructError> {
        label_day(ground_truth, self.catalog.n_airlines(), top_k, |o, d| {
            self.route_popularity(o, d)
        })
    }
}

/// Horizon buckets used for competitiveness shares.
pub const HORIZON_BUCKETS: [&str; 3] = ["0-3", "4-10", "11+"];

pub fn horizon_bucket(horizon: u32) -> usize {
    match horizon {
        0..=3 => 0,
        4..=10 => 1,
        _ => 2,
    }
}

/// Marketplace statistics over a run of labeled days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketStats {
    pub n_days: usize,
    pub n_queries: usize,
    pub n_instances: usize,
    pub positive_rate: f64,
    pub competitive_combos: usize,
    /// Per horizon bucket, share of queries whose top-k holds a combination.
    pub horizon_share: [f64; 3],
    pub horizon_queries: [usize; 3],
    /// Share of competitive combinations with a combo-prone airline on either leg.
    pub prone_combo_share: f64,
    /// Share of competitive-combination legs sold by each airline.
    pub airline_leg_share: Vec<f64>,
}

impl MarketStats {
    /// `combo_prone[a]` flags airline `a`.
    pub fn compute(days: &[LabeledDay], combo_prone: &[bool]) -> Self {
        let n_al = combo_prone.len();
        let (mut pos, mut n_inst, mut n_q, mut combos, mut prone) = (0, 0, 0, 0, 0);
        let mut buckets = [(0usize, 0usize); 3];
        let mut legs = vec![0usize; n_al];
        let is_prone = |a: AirlineId| combo_prone.get(a.index()).copied().unwrap_or(false);
        for day in days {
            pos += day.instances.iter().filter(|i| i.label).count();
            n_inst += day.instances.len();
            n_q += day.queries.len();
            combos += day.competitive_combos.len();
            for c in &day.competitive_combos {
                for a in [c.outbound_airline, c.inbound_airline] {
                    if a.index() < n_al {
                        legs[a.index()] += 1;
                    }
                }
                prone += (is_prone(c.outbound_airline) || is_prone(c.inbound_airline)) as usize;
            }
            for (q, &slots) in day.queries.iter().zip(&day.top_k_combo_slots) {
                let b = &mut buckets[horizon_bucket(q.horizon())];
                b.0 += 1;
                b.1 += (slots > 0) as usize;
            }
        }
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        MarketStats {
            n_days: days.len(),
            n_queries: n_q,
            n_instances: n_inst,
            positive_rate: ratio(pos, n_inst),
            competitive_combos: combos,
            horizon_share: buckets.map(|(n, k)| ratio(k, n)),
            horizon_queries: buckets.map(|(n, _)| n),
            prone_combo_share: ratio(prone, combos),
            airline_leg_share: legs.iter().map(|&l| ratio(l, 2 * combos)).collect(),
        }
    }

    /// Whether competitiveness never rises with the horizon bucket.
    pub fn horizon_monotone(&self) -> bool {
        self.horizon_share.windows(2).all(|w| w[0] >= w[1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::UserId;
    use crate::simgen::QueryRecord;

    fn leg(a: u16, dir: LegDirection, price: f64) -> LegQuote {
        LegQuote {
            query_id: QueryId(1),
            airline: AirlineId(a),
            direction: dir,
            price,
        }
    }

    fn legs(out: &[f64], inb: &[f64]) -> Vec<LegQuote> {
        let mut v = Vec::new();
        for (a, (&o, &i)) in out.iter().zip(inb).enumerate() {
            v.push(leg(a as u16, LegDirection::Outbound, o));
            v.push(leg(a as u16, LegDirection::Inbound, i));
        }
        v
    }

    fn rt(a: u16, price: f64) -> RoundTripQuote {
        RoundTripQuote {
            query_id: QueryId(1),
            airline: AirlineId(a),
            price,
        }
    }

    fn combo(o: u16, i: u16, price: f64) -> CombinationItinerary {
        CombinationItinerary {
            query_id: QueryId(1),
            outbound_airline: AirlineId(o),
            inbound_airline: AirlineId(i),
            price,
        }
    }

    #[test]
    fn combination_counts() {
        let three = build_combinations(QueryId(1), &legs(&[1.0; 3], &[1.0; 3]), 3).unwrap();
        assert_eq!(three.len(), 6);
        let one = build_combinations(QueryId(1), &legs(&[1.0], &[1.0]), 1).unwrap();
        assert!(one.is_empty());
    }

    #[test]
    fn cheapest_combination_matches_enumeration() {
        let out = [50.0, 60.0, 70.0];
        let inb = [55.0, 40.0, 90.0];
        let combos = build_combinations(QueryId(1), &legs(&out, &inb), 3).unwrap();
        let cheapest = combos
            .iter()
            .min_by(|a, b| a.price.total_cmp(&b.price))
            .unwrap();
        let mut brute = (f64::INFINITY, 0, 0);
        for o in 0..3 {
            for i in 0..3 {
                if o != i && out[o] + inb[i] < brute.0 {
                    brute = (out[o] + inb[i], o, i);
                }
            }
        }
        assert_eq!(brute, (90.0, 0, 1));
        assert_eq!(cheapest.price, brute.0);
        assert_eq!(
            (cheapest.outbound_airline, cheapest.inbound_airline),
            (AirlineId(0), AirlineId(1))
        );
    }

    #[test]
    fn missing_leg_is_incomplete() {
        let mut v = legs(&[1.0, 2.0], &[1.0, 2.0]);
        v.pop();
        assert!(matches!(
            build_combinations(QueryId(1), &v, 2),
            Err(ConstructError::IncompleteQuotes(..))
        ));
    }

    #[test]
    fn ranking_sorts_by_price() {
        let page = rank_results(
            QueryId(1),
            &[rt(0, 100.0), rt(1, 120.0)],
            &[combo(0, 1, 90.0), combo(1, 0, 150.0)],
            10,
        )
        .unwrap();
        let prices: Vec<f64> = page.offers.iter().map(|o| o.price).collect();
        assert_eq!(prices, vec![90.0, 100.0, 120.0, 150.0]);
    }

    #[test]
    fn ties_favor_round_trips() {
        let page = rank_results(QueryId(1), &[rt(3, 100.0)], &[combo(0, 1, 100.0)], 10).unwrap();
        assert_eq!(page.offers[0].kind, OfferKind::RoundTrip);
    }

    #[test]
    fn page_keeps_all_offers() {
        let rts: Vec<_> = (0..5).map(|a| rt(a, 100.0 + a as f64)).collect();
        let combos: Vec<_> = (0..20).map(|k| combo(k % 5, (k + 1) % 5, 50.0 + k as f64)).collect();
        let page = rank_results(QueryId(1), &rts, &combos, 10).unwrap();
        assert_eq!(page.offers.len(), 25);
        assert_eq!(page.top().len(), 10);
    }

    #[test]
    fn no_offers_is_an_error() {
        assert_eq!(
            rank_results(QueryId(1), &[], &[], 10).unwrap_err(),
            ConstructError::NoOffers(QueryId(1))
        );
    }

    fn day_with(out: &[f64], inb: &[f64], rts: &[f64], top_k: usize) -> LabeledDay {
        let query = SearchQuery::new(QueryId(1), UserId(0), AirportId(0), AirportId(1), 0, 3, 5)
            .unwrap();
        let gt = GroundTruthDay {
            day: 0,
            records: vec![QueryRecord {
                query,
                leg_quotes: legs(out, inb),
                roundtrip_quotes: rts.iter().enumerate().map(|(a, &p)| rt(a as u16, p)).collect(),
            }],
        };
        label_day(&gt, out.len(), top_k, |_, _| 0.5).unwrap()
    }

    #[test]
    fn single_competitive_combo_labels_its_two_legs() {
        // Only (A out, B in) = 20 beats the cheapest round trip with top_k = 1.
        let day = day_with(&[10.0, 50.0, 50.0], &[50.0, 10.0, 50.0], &[30.0, 40.0, 45.0], 1);
        assert_eq!(day.competitive_combos.len(), 1);
        let positives: Vec<(u16, LegDirection)> = day
            .instances
            .iter()
            .filter(|i| i.label)
            .map(|i| (i.airline.0, i.direction))
            .collect();
        assert_eq!(
            positives,
            vec![(0, LegDirection::Outbound), (1, LegDirection::Inbound)]
        );
        assert_eq!(day.instances.len(), 6);
    }

    #[test]
    fn no_competitive_combos_means_all_negative() {
        let day = day_with(&[50.0, 50.0], &[50.0, 50.0], &[10.0, 11.0], 2);
        assert!(day.competitive_combos.is_empty());
        assert!(day.instances.iter().all(|i| !i.label));
        assert_eq!(day.instances.len(), 4);
    }

    #[test]
    fn market_stats_by_hand() {
        let a = day_with(&[10.0, 50.0, 50.0], &[50.0, 10.0, 50.0], &[30.0, 40.0, 45.0], 1);
        let b = day_with(&[50.0, 50.0], &[50.0, 50.0], &[10.0, 11.0], 2);
        let s = MarketStats::compute(&[a, b], &[false, true, false]);
        assert_eq!((s.n_days, s.n_queries, s.n_instances, s.competitive_combos), (2, 2, 10, 1));
        assert_eq!(s.positive_rate, 0.2);
        assert_eq!(s.prone_combo_share, 1.0);
        // Both queries have a 3-day horizon; one of them shows a combination.
        assert_eq!(s.horizon_queries, [2, 0, 0]);
        assert_eq!(s.horizon_share, [0.5, 0.0, 0.0]);
        assert!(s.horizon_monotone());
        assert_eq!(s.airline_leg_share, vec![0.5, 0.5, 0.0]);
        assert_eq!([horizon_bucket(3), horizon_bucket(4), horizon_bucket(10), horizon_bucket(11)], [0, 1, 1, 2]);
    }
}
