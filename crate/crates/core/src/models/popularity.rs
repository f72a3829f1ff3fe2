use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::domain::{FeatureVector, Instance, RuleTriple};

/// Training frequency of each (origin, destination, airline) triple; labels are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "PopularityParams", into = "PopularityParams")]
pub struct Popularity {
    frequency: HashMap<RuleTriple, f64>,
}

#[derive(Serialize, Deserialize)]
struct PopularityParams {
    triples: Vec<(RuleTriple, f64)>,
}

impl From<PopularityParams> for Popularity {
    fn from(p: PopularityParams) -> Self {
        Self { frequency: p.triples.into_iter().collect() }
    }
}

impl From<Popularity> for PopularityParams {
    fn from(p: Popularity) -> Self {
        let mut triples: Vec<(RuleTriple, f64)> = p.frequency.into_iter().collect();
        triples.sort_by(|a, b| a.0.cmp(&b.0));
        Self { triples }
    }
}

impl Popularity {
    pub fn train(instances: &[Instance]) -> Result<Self, ModelError> {
        if instances.is_empty() {
            return Err(ModelError::EmptyTrainingSet);
        }
        let mut counts: HashMap<RuleTriple, usize> = HashMap::new();
        for inst in instances {
            *counts.entry(inst.features.triple()).or_default() += 1;
        }
        let n = instances.len() as f64;
        Ok(Self { frequency: counts.into_iter().map(|(k, c)| (k, c as f64 / n)).collect() })
    }

    pub fn score(&self, f: &FeatureVector) -> f64 {
        self.frequency.get(&f.triple()).copied().unwrap_or(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{AirlineId, AirportId, LegDirection, QueryId};

    fn inst(o: u16, a: u16, label: bool) -> Instance {
        let features = FeatureVector {
            origin: AirportId(o),
            destination: AirportId(9),
            airline: AirlineId(a),
            direction: LegDirection::Outbound,
            horizon: 1,
            trip_length: 1,
            search_day_of_week: 0,
            departure_day_of_week: 1,
            route_popularity: 0.0,
        };
        Instance { query_id: QueryId(0), airline: AirlineId(a), direction: features.direction, label, features }
    }

    #[test]
    fn frequency_and_unseen() {
        let mut data: Vec<Instance> = (0..30).map(|_| inst(1, 2, false)).collect();
        data.extend((0..70).map(|i| inst(3, (i % 5) as u16, true)));
        let m = Popularity::train(&data).unwrap();
        assert!((m.score(&inst(1, 2, true).features) - 0.30).abs() < 1e-12);
        assert_eq!(m.score(&inst(7, 7, true).features), 0.0);
    }

    #[test]
    fn labels_do_not_matter() {
        let data: Vec<Instance> = (0..40).map(|i| inst(i % 4, i % 3, i % 2 == 0)).collect();
        let flipped: Vec<Instance> =
            data.iter().map(|i| Instance { label: !i.label, ..*i }).collect();
        let a = Popularity::train(&data).unwrap();
        let b = Popularity::train(&flipped).unwrap();
        assert!(data.iter().all(|i| a.score(&i.features) == b.score(&i.features)));
        assert_eq!(Popularity::train(&[]), Err(ModelError::EmptyTrainingSet));
    }
}
