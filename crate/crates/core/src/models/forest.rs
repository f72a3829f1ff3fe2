//! Bagged CART trees over binned features.
//!
//! Each column is cut into at most `max_bins` bins: exactly at midpoints
//! between distinct values when there are few of them, at quantiles
//! otherwise. Splits send `x < threshold` left.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::domain::{FeatureVector, Instance};
use crate::features::{FeatureEncoder, Matrix};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features examined per split; `None` means the square root of the width.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub max_bins: usize,
    pub scoring: ForestScoring,
    pub seed: u64,
}

/// How tree outputs combine into a score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForestScoring {
    /// Fraction of trees whose leaf votes positive.
    Vote,
    /// Mean positive share of the reached leaves.
    LeafMean,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 50,
            max_depth: 20,
            min_samples_leaf: 5,
            max_features: None,
            bootstrap: true,
            max_bins: 255,
            scoring: ForestScoring::Vote,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    Split { feature: u32, threshold: f64, left: u32, right: u32 },
    Leaf { value: f64, samples: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
    /// Positive share of the tree's training sample.
    pub base_rate: f64,
}

impl Tree {
    /// Positive share of the leaf reached by `row`.
    pub fn leaf_value(&self, row: &[f64]) -> f64 {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value, .. } => return *value,
                Node::Split { feature, threshold, left, right } => {
                    at = if row[*feature as usize] < *threshold { *left } else { *right } as usize;
                }
            }
        }
    }

    /// A leaf votes positive when its positive share reaches the tree's base rate.
    pub fn vote(&self, row: &[f64]) -> bool {
        let v = self.leaf_value(row);
        v > 0.0 && v >= self.base_rate
    }

    pub fn is_stump(&self) -> bool {
        self.nodes.len() == 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub config: ForestConfig,
    pub encoder: FeatureEncoder,
    pub trees: Vec<Tree>,
}

#[derive(Serialize)]
pub(crate) struct ForestParams<'a> {
    encoder: &'a FeatureEncoder,
    columns: Vec<String>,
    trees: &'a [Tree],
}

struct Binned {
    /// Column-major bin indices.
    cols: Vec<Vec<u8>>,
    thresholds: Vec<Vec<f64>>,
}

fn bin_matrix(x: &Matrix, max_bins: usize) -> Binned {
    let max_bins = max_bins.clamp(2, 256);
    let mut cols = Vec::with_capacity(x.cols);
    let mut thresholds = Vec::with_capacity(x.cols);
    let mut values = Vec::with_capacity(x.rows);
    for j in 0..x.cols {
        values.clear();
        values.extend((0..x.rows).map(|i| x.data[i * x.cols + j]));
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let mut distinct = sorted.clone();
        distinct.dedup();
        let t: Vec<f64> = if distinct.len() <= max_bins {
            distinct.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0).collect()
        } else {
            let mut t: Vec<f64> = (1..max_bins)
                .map(|k| sorted[k * sorted.len() / max_bins])
                .filter(|&v| v > sorted[0])
                .collect();
            t.dedup();
            t
        };
        cols.push(values.iter().map(|&v| t.partition_point(|&c| c <= v) as u8).collect());
        thresholds.push(t);
    }
    Binned { cols, thresholds }
}

struct Grower<'a> {
    binned: &'a Binned,
    y: &'a [bool],
    config: &'a ForestConfig,
    max_features: usize,
    nodes: Vec<Node>,
    features: Vec<usize>,
    cnt: [u32; 256],
    pos: [u32; 256],
}

/// `n * gini` for a node with `p` positives out of `n`.
fn weighted_gini(n: f64, p: f64) -> f64 {
    if n == 0.0 {
        0.0
    } else {
        2.0 * p * (n - p) / n
    }
}

impl Grower<'_> {
    fn leaf(&mut self, n: usize, p: usize) -> u32 {
        self.nodes.push(Node::Leaf { value: p as f64 / n.max(1) as f64, samples: n as u32 });
        (self.nodes.len() - 1) as u32
    }

    fn build(&mut self, idx: &mut [u32], depth: usize, rng: &mut impl Rng) -> u32 {
        let n = idx.len();
        let p = idx.iter().filter(|&&i| self.y[i as usize]).count();
        let min_leaf = self.config.min_samples_leaf.max(1);
        if depth >= self.config.max_depth || n < 2 * min_leaf || p == 0 || p == n {
            return self.leaf(n, p);
        }
        let parent = weighted_gini(n as f64, p as f64);
        let mut best: Option<(f64, usize, usize)> = None;
        let mut informative = 0;
        let n_cols = self.features.len();
        // Partial Fisher-Yates: keep drawing features until enough vary here.
        for k in 0..n_cols {
            if informative >= self.max_features {
                break;
            }
            let pick = rng.random_range(k..n_cols);
            self.features.swap(k, pick);
            let f = self.features[k];
            let col = &self.binned.cols[f];
            let nb = self.binned.thresholds[f].len() + 1;
            self.cnt[..nb].fill(0);
            self.pos[..nb].fill(0);
            for &i in idx.iter() {
                let b = col[i as usize] as usize;
                self.cnt[b] += 1;
                self.pos[b] += self.y[i as usize] as u32;
            }
            if self.cnt[..nb].iter().filter(|&&c| c > 0).count() < 2 {
                continue;
            }
            informative += 1;
            let (mut ln, mut lp) = (0usize, 0usize);
            for b in 0..nb - 1 {
                ln += self.cnt[b] as usize;
                lp += self.pos[b] as usize;
                if ln < min_leaf {
                    continue;
                }
                let rn = n - ln;
                if rn < min_leaf {
                    break;
                }
                let imp = weighted_gini(ln as f64, lp as f64)
                    + weighted_gini(rn as f64, (p - lp) as f64);
                if best.is_none_or(|(bi, _, _)| imp < bi) {
                    best = Some((imp, f, b));
                }
            }
        }
        let Some((imp, f, b)) = best else {
            return self.leaf(n, p);
        };
        if parent - imp <= 1e-12 * n as f64 {
            return self.leaf(n, p);
        }
        let col = &self.binned.cols[f];
        let mut split = 0;
        for k in 0..n {
            if (col[idx[k] as usize] as usize) <= b {
                idx.swap(k, split);
                split += 1;
            }
        }
        let me = self.nodes.len();
        self.nodes.push(Node::Leaf { value: 0.0, samples: 0 });
        let (left_idx, right_idx) = idx.split_at_mut(split);
        let left = self.build(left_idx, depth + 1, rng);
        let right = self.build(right_idx, depth + 1, rng);
        self.nodes[me] = Node::Split {
            feature: f as u32,
            threshold: self.binned.thresholds[f][b],
            left,
            right,
        };
        me as u32
    }
}

impl Forest {
    pub fn train(
        instances: &[Instance],
        encoder: FeatureEncoder,
        config: ForestConfig,
    ) -> Result<Self, ModelError> {
        Ok(Self::fit(instances, encoder, config, false)?.0)
    }

    /// Train and also score every training instance using only the trees
    /// that did not see it. Instances in every bootstrap sample fall back
    /// to the full forest.
    pub fn train_with_oob(
        instances: &[Instance],
        encoder: FeatureEncoder,
        config: ForestConfig,
    ) -> Result<(Self, Vec<f64>), ModelError> {
        let (forest, x, bags) = Self::fit(instances, encoder, config, true)?;
        let oob = (0..x.rows)
            .into_par_iter()
            .map(|i| {
                let row = x.row(i);
                let unseen = || forest.trees.iter().zip(&bags).filter(|(_, b)| !b[i]).map(|(t, _)| t);
                if unseen().next().is_none() {
                    forest.score_row(row)
                } else {
                    forest.combine(unseen(), row)
                }
            })
            .collect();
        Ok((forest, oob))
    }

    fn fit(
        instances: &[Instance],
        encoder: FeatureEncoder,
        config: ForestConfig,
        keep_bags: bool,
    ) -> Result<(Self, Matrix, Vec<Vec<bool>>), ModelError> {
        if instances.is_empty() {
            return Err(ModelError::EmptyTrainingSet);
        }
        if config.n_trees == 0 || config.max_bins < 2 || config.max_features == Some(0) {
            return Err(ModelError::InvalidConfig("trees, bins and features must be positive".into()));
        }
        let x = encoder.matrix(instances);
        let y: Vec<bool> = instances.iter().map(|i| i.label).collect();
        let binned = bin_matrix(&x, config.max_bins);
        let width = x.cols;
        let max_features = config
            .max_features
            .unwrap_or_else(|| ((width as f64).sqrt().round() as usize).max(1))
            .min(width);

        let (trees, bags): (Vec<Tree>, Vec<Vec<bool>>) = (0..config.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = rng::stream(config.seed, 0xF0_0000 + t as u64);
                let n = y.len();
                let mut idx: Vec<u32> = if config.bootstrap {
                    (0..n).map(|_| rng.random_range(0..n) as u32).collect()
                } else {
                    (0..n as u32).collect()
                };
                let mut bag = Vec::new();
                if keep_bags {
                    bag = vec![false; n];
                    idx.iter().for_each(|&i| bag[i as usize] = true);
                }
                let base_rate = idx.iter().filter(|&&i| y[i as usize]).count() as f64 / n as f64;
                let mut features: Vec<usize> = (0..width).collect();
                features.shuffle(&mut rng);
                let mut g = Grower {
                    binned: &binned,
                    y: &y,
                    config: &config,
                    max_features,
                    nodes: Vec::new(),
                    features,
                    cnt: [0; 256],
                    pos: [0; 256],
                };
                g.build(&mut idx, 0, &mut rng);
                (Tree { nodes: g.nodes, base_rate }, bag)
            })
            .unzip();
        Ok((Self { config, encoder, trees }, x, bags))
    }

    fn combine<'a>(&self, trees: impl Iterator<Item = &'a Tree>, row: &[f64]) -> f64 {
        let (mut n, mut total) = (0usize, 0.0);
        for t in trees {
            n += 1;
            total += match self.config.scoring {
                ForestScoring::Vote => t.vote(row) as u8 as f64,
                ForestScoring::LeafMean => t.leaf_value(row),
            };
        }
        total / n as f64
    }

    /// Fraction of trees voting positive for an encoded row.
    pub fn score_row(&self, row: &[f64]) -> f64 {
        self.combine(self.trees.iter(), row)
    }

    pub fn score(&self, f: &FeatureVector) -> f64 {
        self.score_row(&self.encoder.encode(f))
    }

    pub fn score_all(&self, instances: &[Instance]) -> Vec<f64> {
        instances
            .par_chunks(1024)
            .flat_map_iter(|chunk| {
                let mut row = vec![0.0; self.encoder.width()];
                chunk
                    .iter()
                    .map(|i| {
                        self.encoder.encode_into(&i.features, &mut row);
                        self.score_row(&row)
                    })
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    pub(crate) fn parameters(&self) -> ForestParams<'_> {
        ForestParams { encoder: &self.encoder, columns: self.encoder.column_names(), trees: &self.trees }
    }
}

/// Best single threshold on one feature by scanning every midpoint.
///
/// Returns `(threshold, n-weighted child gini)`; ties keep the lowest threshold.
pub fn best_split_exhaustive(xs: &[f64], ys: &[bool], min_leaf: usize) -> Option<(f64, f64)> {
    let mut distinct: Vec<f64> = xs.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut best: Option<(f64, f64)> = None;
    for w in distinct.windows(2) {
        let t = w[0] + (w[1] - w[0]) / 2.0;
        let (mut ln, mut lp, mut rn, mut rp) = (0.0, 0.0, 0.0, 0.0);
        for (&x, &y) in xs.iter().zip(ys) {
            if x < t {
                ln += 1.0;
                lp += y as u8 as f64;
            } else {
                rn += 1.0;
                rp += y as u8 as f64;
            }
        }
        if ln < min_leaf as f64 || rn < min_leaf as f64 {
            continue;
        }
        let imp = weighted_gini(ln, lp) + weighted_gini(rn, rp);
        if best.is_none_or(|(_, b)| imp < b) {
            best = Some((t, imp));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{AirlineId, AirportId, LegDirection, QueryId};

    fn inst(horizon: u32, label: bool) -> Instance {
        let features = FeatureVector {
            origin: AirportId(0),
            destination: AirportId(1),
            airline: AirlineId(0),
            direction: LegDirection::Outbound,
            horizon,
            trip_length: 2,
            search_day_of_week: 0,
            departure_day_of_week: 0,
            route_popularity: 0.1,
        };
        Instance { query_id: QueryId(0), airline: AirlineId(0), direction: features.direction, label, features }
    }

    fn stump_config() -> ForestConfig {
        ForestConfig {
            n_trees: 1,
            max_depth: 1,
            min_samples_leaf: 1,
            max_features: Some(usize::MAX),
            bootstrap: false,
            ..ForestConfig::default()
        }
    }

    #[test]
    fn stump_matches_exhaustive_scan() {
        for seed in 0..25 {
            let mut r = rng::stream(seed, 77);
            let n = r.random_range(4..=20);
            let data: Vec<Instance> =
                (0..n).map(|_| inst(r.random_range(0..12), r.random_bool(0.4))).collect();
            let xs: Vec<f64> = data.iter().map(|i| i.features.horizon as f64).collect();
            let ys: Vec<bool> = data.iter().map(|i| i.label).collect();
            let forest = Forest::train(&data, FeatureEncoder::one_hot(2, 1), stump_config()).unwrap();
            let oracle = best_split_exhaustive(&xs, &ys, 1);
            let horizon_col = forest.encoder.numeric_offset() + 1;
            match (&forest.trees[0].nodes[0], oracle) {
                (Node::Split { feature, threshold, .. }, Some((t, _))) => {
                    assert_eq!(*feature as usize, horizon_col);
                    assert_eq!(*threshold, t, "seed {seed}");
                }
                (Node::Leaf { .. }, None) => {}
                (Node::Leaf { .. }, Some((t, imp))) => {
                    // A leaf is only right when no split lowers impurity.
                    let p = ys.iter().filter(|&&y| y).count() as f64;
                    assert!(weighted_gini(n as f64, p) - imp <= 1e-9, "seed {seed} missed {t}");
                }
                (node, None) => panic!("unexpected split {node:?}"),
            }
        }
    }

    #[test]
    fn identical_labels_give_stumps() {
        let data: Vec<Instance> = (0..60).map(|i| inst(i % 7, false)).collect();
        let forest = Forest::train(&data, FeatureEncoder::one_hot(2, 1), ForestConfig::default()).unwrap();
        assert!(forest.trees.iter().all(Tree::is_stump));
        let scores = forest.score_all(&data);
        assert!(scores.iter().all(|&s| s == scores[0]));
    }

    #[test]
    fn votes_have_tree_granularity_and_are_deterministic() {
        let data: Vec<Instance> = (0..400).map(|i| inst(i % 30, i % 30 < 5)).collect();
        let cfg = ForestConfig { n_trees: 8, min_samples_leaf: 5, seed: 3, ..ForestConfig::default() };
        let a = Forest::train(&data, FeatureEncoder::one_hot(2, 1), cfg).unwrap();
        let b = Forest::train(&data, FeatureEncoder::one_hot(2, 1), cfg).unwrap();
        assert_eq!(a, b);
        let scores = a.score_all(&data);
        for (s, d) in scores.iter().zip(&data) {
            assert!((s * 8.0 - (s * 8.0).round()).abs() < 1e-12);
            assert!((0.0..=1.0).contains(s));
            assert_eq!(*s, a.score(&d.features));
        }
        // The planted short-horizon rule is recovered.
        assert!(a.score(&inst(1, true).features) > a.score(&inst(20, false).features));
    }

    #[test]
    fn out_of_bag_scores_use_unseen_trees() {
        let data: Vec<Instance> = (0..300).map(|i| inst(i % 30, (i * 7) % 11 == 0)).collect();
        let enc = FeatureEncoder::one_hot(2, 1);
        let cfg = ForestConfig { n_trees: 10, min_samples_leaf: 2, seed: 5, ..ForestConfig::default() };
        let (forest, oob) = Forest::train_with_oob(&data, enc.clone(), cfg).unwrap();
        assert_eq!(forest, Forest::train(&data, enc.clone(), cfg).unwrap());
        assert_eq!(oob.len(), data.len());
        assert!(oob.iter().all(|s| (0.0..=1.0).contains(s)));
        // Noise labels: the full forest memorizes them, out-of-bag votes cannot.
        let full = forest.score_all(&data);
        let gap = |s: &[f64]| {
            let mean = |l: bool| {
                let v: Vec<f64> = s.iter().zip(&data).filter(|(_, d)| d.label == l).map(|(x, _)| *x).collect();
                v.iter().sum::<f64>() / v.len() as f64
            };
            mean(true) - mean(false)
        };
        assert!(gap(&full) > gap(&oob));

        // Without bootstrap every tree saw every row, so scores fall back to the full forest.
        let cfg = ForestConfig { bootstrap: false, ..cfg };
        let (forest, oob) = Forest::train_with_oob(&data, enc, cfg).unwrap();
        assert_eq!(oob, forest.score_all(&data));
    }

    #[test]
    fn quantile_bins_cap_width() {
        let x = Matrix { rows: 1000, cols: 1, data: (0..1000).map(|i| i as f64).collect() };
        let b = bin_matrix(&x, 16);
        assert!(b.thresholds[0].len() <= 15);
        assert!(b.cols[0].windows(2).all(|w| w[0] <= w[1]));
    }
}
