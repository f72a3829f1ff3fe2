//! Airport representations learned from search traces or co-trained with a
//! classifier, and similarity diagnostics over them.

mod net;
mod skipgram;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{AirportId, SearchQuery, UserId};

pub use net::{EmbedNet, EmbedNetConfig, NetParams, TrainedEmbedNet};
pub use skipgram::{sgns_pair_grad, sgns_pair_loss, train_skipgram, SkipGramConfig, TrainedSkipGram};

/// Users with fewer searches than this are left out of the trace corpus.
pub const MIN_SEARCHES_PER_USER: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("trace corpus is empty")]
    EmptyCorpus,
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("loss became non-finite at epoch {0}")]
    NonFiniteLoss(usize),
    #[error("airport {0} is not in the embedding table")]
    UnknownAirport(AirportId),
    #[error("invalid embedding configuration: {0}")]
    InvalidConfig(String),
    #[error("embedding vectors must share one dimension and be finite")]
    MalformedTable,
}

/// Per-user chronological airport sequences.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceCorpus {
    pub sequences: Vec<Vec<AirportId>>,
}

impl TraceCorpus {
    pub fn is_empty(&self) -> bool {
        self.sequences.iter().all(|s| s.len() < 2)
    }

    pub fn n_tokens(&self) -> usize {
        self.sequences.iter().map(Vec::len).sum()
    }
}

/// Drop consecutive repeats, keeping order.
pub fn dedupe_consecutive(seq: &[AirportId]) -> Vec<AirportId> {
    let mut out: Vec<AirportId> = Vec::with_capacity(seq.len());
    for &a in seq {
        if out.last() != Some(&a) {
            out.push(a);
        }
    }
    out
}

/// Flatten each user's searches into `[o, d, o, d, ...]` by search day.
///
/// Repeats of the previous search are collapsed before flattening, then
/// consecutive equal airports are collapsed. Users with fewer than
/// [`MIN_SEARCHES_PER_USER`] searches are dropped; the threshold counts
/// searches, not the deduplicated sequence length.
pub fn build_traces<'a>(queries: impl IntoIterator<Item = &'a SearchQuery>) -> TraceCorpus {
    let mut by_user: BTreeMap<UserId, Vec<&SearchQuery>> = BTreeMap::new();
    for q in queries {
        by_user.entry(q.user_id).or_default().push(q);
    }
    let sequences = by_user
        .into_values()
        .filter(|qs| qs.len() >= MIN_SEARCHES_PER_USER)
        .map(|mut qs| {
            qs.sort_by_key(|q| (q.search_day, q.query_id));
            qs.dedup_by_key(|q| (q.origin, q.destination));
            let flat: Vec<AirportId> = qs.iter().flat_map(|q| [q.origin, q.destination]).collect();
            dedupe_consecutive(&flat)
        })
        .collect();
    TraceCorpus { sequences }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingSource {
    TraceSkipGram,
    CoTrained,
}

/// One vector per airport, indexed by airport id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub source: EmbeddingSource,
    vectors: Vec<Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(vectors: Vec<Vec<f64>>, source: EmbeddingSource) -> Result<Self, EmbedError> {
        let dim = vectors.first().map_or(0, Vec::len);
        let ok = vectors
            .iter()
            .all(|v| v.len() == dim && v.iter().all(|x| x.is_finite()));
        if !ok {
            return Err(EmbedError::MalformedTable);
        }
        Ok(Self { dim, source, vectors })
    }

    /// Build from a flat row-major buffer of `n * dim` values.
    pub fn from_flat(flat: &[f64], dim: usize, source: EmbeddingSource) -> Result<Self, EmbedError> {
        if dim == 0 || flat.len() % dim != 0 {
            return Err(EmbedError::MalformedTable);
        }
        Self::new(flat.chunks(dim).map(<[f64]>::to_vec).collect(), source)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vector(&self, airport: AirportId) -> Option<&[f64]> {
        self.vectors.get(airport.index()).map(Vec::as_slice)
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }
}

/// Cosine similarity; zero when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// The `k` most cosine-similar airports, most similar first, excluding `airport`.
pub fn nearest_neighbors(
    table: &EmbeddingTable,
    airport: AirportId,
    k: usize,
) -> Result<Vec<(AirportId, f64)>, EmbedError> {
    let v = table.vector(airport).ok_or(EmbedError::UnknownAirport(airport))?;
    let mut sims: Vec<(AirportId, f64)> = table
        .vectors
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != airport.index())
        .map(|(i, w)| (AirportId(i as u16), cosine(v, w)))
        .collect();
    sims.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    sims.truncate(k);
    Ok(sims)
}

/// Mean cosine over same-region pairs and over cross-region pairs.
pub fn region_cosine_means(table: &EmbeddingTable, regions: &[u32]) -> (f64, f64) {
    let (mut intra, mut n_intra, mut inter, mut n_inter) = (0.0, 0usize, 0.0, 0usize);
    let n = table.len().min(regions.len());
    for i in 0..n {
        for j in i + 1..n {
            let c = cosine(&table.vectors[i], &table.vectors[j]);
            if regions[i] == regions[j] {
                intra += c;
                n_intra += 1;
            } else {
                inter += c;
                n_inter += 1;
            }
        }
    }
    let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
    (mean(intra, n_intra), mean(inter, n_inter))
}

/// For each airport, the share of its `k` nearest neighbors in its own region.
pub fn neighbor_region_agreement(table: &EmbeddingTable, regions: &[u32], k: usize) -> Vec<f64> {
    (0..table.len().min(regions.len()))
        .map(|i| {
            let nn = nearest_neighbors(table, AirportId(i as u16), k).unwrap_or_default();
            if nn.is_empty() {
                return 0.0;
            }
            let same = nn.iter().filter(|(a, _)| regions[a.index()] == regions[i]).count();
            same as f64 / nn.len() as f64
        })
        .collect()
}

/// Render a table as `airport_code,v0,...` CSV lines using `code` for labels.
pub fn table_csv(table: &EmbeddingTable, code: impl Fn(AirportId) -> String) -> String {
    let mut out = String::from("airport_code");
    for k in 0..table.dim {
        out.push_str(&format!(",v{k}"));
    }
    out.push('\n');
    for (i, v) in table.vectors.iter().enumerate() {
        out.push_str(&code(AirportId(i as u16)));
        for x in v {
            out.push_str(&format!(",{x}"));
        }
        out.push('\n');
    }
    out
}
