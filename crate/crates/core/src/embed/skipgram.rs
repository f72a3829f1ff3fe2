//! Skip-gram with negative sampling over airport trace sequences.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{EmbedError, EmbeddingSource, EmbeddingTable, TraceCorpus};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        Self { dim: 16, window: 2, negatives: 5, epochs: 10, learning_rate: 0.025, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedSkipGram {
    /// Input (center-word) vectors.
    pub table: EmbeddingTable,
    /// Mean per-pair loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn log_sigmoid(x: f64) -> f64 {
    // Stable for large |x|.
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Negative-sampling loss of one (center, context) pair:
/// `-log s(u.v+) - sum log s(-u.v-)`.
pub fn sgns_pair_loss(center: &[f64], positive: &[f64], negatives: &[&[f64]]) -> f64 {
    -log_sigmoid(dot(center, positive))
        - negatives.iter().map(|n| log_sigmoid(-dot(center, n))).sum::<f64>()
}

/// Gradients of [`sgns_pair_loss`] with respect to center, positive and each negative.
pub fn sgns_pair_grad(
    center: &[f64],
    positive: &[f64],
    negatives: &[&[f64]],
) -> (Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
    let gp = sigmoid(dot(center, positive)) - 1.0;
    let mut g_center: Vec<f64> = positive.iter().map(|v| gp * v).collect();
    let g_pos: Vec<f64> = center.iter().map(|u| gp * u).collect();
    let mut g_negs = Vec::with_capacity(negatives.len());
    for n in negatives {
        let gn = sigmoid(dot(center, n));
        for (g, v) in g_center.iter_mut().zip(n.iter()) {
            *g += gn * v;
        }
        g_negs.push(center.iter().map(|u| gn * u).collect());
    }
    (g_center, g_pos, g_negs)
}

/// Train airport vectors over a vocabulary of `n_airports` ids.
///
/// Noise words follow the unigram distribution raised to 0.75. The learning
/// rate decays linearly to a small floor over all epochs.
pub fn train_skipgram(
    corpus: &TraceCorpus,
    n_airports: usize,
    config: &SkipGramConfig,
) -> Result<TrainedSkipGram, EmbedError> {
    if config.dim == 0 || config.window == 0 || config.epochs == 0 || config.learning_rate <= 0.0 {
        return Err(EmbedError::InvalidConfig("dim, window, epochs and rate must be positive".into()));
    }
    let mut counts = vec![0usize; n_airports];
    for s in &corpus.sequences {
        for a in s {
            if a.index() >= n_airports {
                return Err(EmbedError::UnknownAirport(*a));
            }
            counts[a.index()] += 1;
        }
    }
    if corpus.is_empty() {
        return Err(EmbedError::EmptyCorpus);
    }
    let noise = WeightedIndex::new(counts.iter().map(|&c| (c as f64).powf(0.75)))
        .map_err(|_| EmbedError::EmptyCorpus)?;

    let dim = config.dim;
    let mut rng = rng::stream(config.seed, 0x5EED_5EED);
    let bound = 0.5 / dim as f64;
    let mut w_in: Vec<f64> = (0..n_airports * dim).map(|_| rng.random_range(-bound..bound)).collect();
    let mut w_out = vec![0.0; n_airports * dim];

    let pairs_per_epoch: usize = corpus
        .sequences
        .iter()
        .map(|s| {
            (0..s.len())
                .map(|i| (i.saturating_sub(config.window)..(i + config.window + 1).min(s.len())).len() - 1)
                .sum::<usize>()
        })
        .sum();
    let total = (pairs_per_epoch * config.epochs).max(1) as f64;
    let mut step = 0usize;
    let mut order: Vec<usize> = (0..corpus.sequences.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut g_center = vec![0.0; dim];
    let mut negs = Vec::with_capacity(config.negatives);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut n_pairs = 0usize;
        for &s in &order {
            let seq = &corpus.sequences[s];
            for i in 0..seq.len() {
                let c = seq[i].index();
                let lo = i.saturating_sub(config.window);
                let hi = (i + config.window + 1).min(seq.len());
                for j in lo..hi {
                    if j == i {
                        continue;
                    }
                    let o = seq[j].index();
                    let lr = config.learning_rate * (1.0 - step as f64 / total).max(1e-4);
                    step += 1;
                    negs.clear();
                    negs.extend(
                        (0..config.negatives)
                            .map(|_| noise.sample(&mut rng))
                            .filter(|&k| k != o),
                    );
                    g_center.iter_mut().for_each(|g| *g = 0.0);
                    let u = &w_in[c * dim..(c + 1) * dim];
                    let mut loss = 0.0;
                    for (t, label) in std::iter::once((o, 1.0)).chain(negs.iter().map(|&k| (k, 0.0))) {
                        let v = &mut w_out[t * dim..(t + 1) * dim];
                        let z = dot(u, v);
                        loss -= if label > 0.0 { log_sigmoid(z) } else { log_sigmoid(-z) };
                        let g = sigmoid(z) - label;
                        for k in 0..dim {
                            g_center[k] += g * v[k];
                            v[k] -= lr * g * u[k];
                        }
                    }
                    let u = &mut w_in[c * dim..(c + 1) * dim];
                    for k in 0..dim {
                        u[k] -= lr * g_center[k];
                    }
                    loss_sum += loss;
                    n_pairs += 1;
                }
            }
        }
        let mean = loss_sum / n_pairs.max(1) as f64;
        if !mean.is_finite() {
            return Err(EmbedError::NonFiniteLoss(epoch));
        }
        epoch_losses.push(mean);
    }
    let table = EmbeddingTable::from_flat(&w_in, dim, EmbeddingSource::TraceSkipGram)?;
    Ok(TrainedSkipGram { table, epoch_losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::AirportId;
    use crate::embed::{nearest_neighbors, region_cosine_means};

    fn two_region_corpus(seed: u64) -> TraceCorpus {
        // Airports 0..6 form region 0, 6..12 region 1; users stay home.
        let mut rng = rng::stream(seed, 3);
        let sequences = (0..200)
            .map(|u| {
                let base = if u % 2 == 0 { 0 } else { 6 };
                let raw: Vec<AirportId> =
                    (0..30).map(|_| AirportId(base + rng.random_range(0..6))).collect();
                crate::embed::dedupe_consecutive(&raw)
            })
            .collect();
        TraceCorpus { sequences }
    }

    #[test]
    fn pair_gradient_matches_finite_differences() {
        let mut rng = rng::stream(1, 2);
        let dim = 6;
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
        let u = draw(dim);
        let p = draw(dim);
        let n1 = draw(dim);
        let n2 = draw(dim);
        let (gu, gp, gn) = sgns_pair_grad(&u, &p, &[&n1, &n2]);
        // Flatten all parameters and check 20 of them by central differences.
        let flat: Vec<f64> = [u.clone(), p.clone(), n1.clone(), n2.clone()].concat();
        let grad: Vec<f64> = [gu, gp, gn[0].clone(), gn[1].clone()].concat();
        let loss = |x: &[f64]| {
            sgns_pair_loss(&x[..dim], &x[dim..2 * dim], &[&x[2 * dim..3 * dim], &x[3 * dim..]])
        };
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for k in 0..20 {
            let mut plus = flat.clone();
            let mut minus = flat.clone();
            plus[k] += h;
            minus[k] -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let rel = (fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-8);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-4, "relative error {worst}");
    }

    #[test]
    fn loss_decreases_and_training_is_deterministic() {
        let corpus = two_region_corpus(5);
        let cfg = SkipGramConfig { epochs: 5, seed: 3, ..SkipGramConfig::default() };
        let a = train_skipgram(&corpus, 12, &cfg).unwrap();
        let b = train_skipgram(&corpus, 12, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.epoch_losses.last() < a.epoch_losses.first());
    }

    #[test]
    fn two_regions_separate() {
        let corpus = two_region_corpus(9);
        let cfg = SkipGramConfig { seed: 4, ..SkipGramConfig::default() };
        let trained = train_skipgram(&corpus, 12, &cfg).unwrap();
        let regions: Vec<u32> = (0..12).map(|i| (i / 6) as u32).collect();
        let (intra, inter) = region_cosine_means(&trained.table, &regions);
        assert!(intra > inter, "intra {intra} inter {inter}");
        let nn = nearest_neighbors(&trained.table, AirportId(0), 3).unwrap();
        assert!(nn.iter().all(|(a, _)| a.index() < 6));
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let err = train_skipgram(&TraceCorpus::default(), 4, &SkipGramConfig::default());
        assert_eq!(err.unwrap_err(), EmbedError::EmptyCorpus);
    }
}
