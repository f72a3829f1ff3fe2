//! Feedforward classifier with origin and destination embedding layers.
//!
//! Input is `origin embedding ++ destination embedding ++ standardized tail`
//! where the tail is the airline one-hot plus the numeric features. Hidden
//! layers use rectifiers; the output is a single logistic unit.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{EmbedError, EmbeddingSource, EmbeddingTable};
use crate::domain::{FeatureVector, Instance};
use crate::features::{encode_tail, tail_width, Matrix, Standardizer};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedNetConfig {
    pub embedding_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for EmbedNetConfig {
    fn default() -> Self {
        Self {
            embedding_dim: 16,
            hidden_widths: vec![64, 32, 16, 8],
            epochs: 6,
            batch_size: 64,
            learning_rate: 0.02,
            momentum: 0.9,
            l2: 1e-5,
            seed: 0,
        }
    }
}

impl EmbedNetConfig {
    fn validate(&self) -> Result<(), EmbedError> {
        let bad = |m: &str| Err(EmbedError::InvalidConfig(m.into()));
        if self.embedding_dim == 0 || self.hidden_widths.contains(&0) {
            return bad("widths must be positive");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch size must be positive");
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.momentum) || self.l2 < 0.0 {
            return bad("learning rate must be positive, momentum in [0, 1), l2 non-negative");
        }
        Ok(())
    }
}

/// Fully connected layer, weights row-major `n_out x n_in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

/// Every trainable parameter; also used as the gradient and momentum buffers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetParams {
    pub origin: Vec<f64>,
    pub destination: Vec<f64>,
    pub layers: Vec<Layer>,
}

impl NetParams {
    fn zeros_like(other: &NetParams) -> Self {
        let mut z = other.clone();
        z.fill(0.0);
        z
    }

    fn fill(&mut self, v: f64) {
        self.slices_mut().into_iter().for_each(|s| s.iter_mut().for_each(|x| *x = v));
    }

    fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![&self.origin, &self.destination];
        for l in &self.layers {
            out.push(&l.w);
            out.push(&l.b);
        }
        out
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![&mut self.origin, &mut self.destination];
        for l in &mut self.layers {
            out.push(&mut l.w);
            out.push(&mut l.b);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flat(&self) -> Vec<f64> {
        self.slices().concat()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut at = 0;
        for s in self.slices_mut() {
            s.copy_from_slice(&flat[at..at + s.len()]);
            at += s.len();
        }
    }
}

/// One encoded example: airport indices plus the standardized tail.
#[derive(Debug, Clone, PartialEq)]
pub struct NetInput {
    pub origin: usize,
    pub destination: usize,
    pub tail: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedNet {
    pub config: EmbedNetConfig,
    pub n_airports: usize,
    pub n_airlines: usize,
    pub standardizer: Standardizer,
    pub params: NetParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedEmbedNet {
    pub net: EmbedNet,
    pub epoch_losses: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Log-loss of a logit against a 0/1 label, stable for large logits.
fn log_loss(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

/// Reusable forward/backward buffers.
struct Scratch {
    acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

impl Scratch {
    fn new(params: &NetParams) -> Self {
        let mut acts = vec![vec![0.0; params.layers[0].n_in]];
        acts.extend(params.layers.iter().map(|l| vec![0.0; l.n_out]));
        let deltas = acts.clone();
        Self { acts, deltas }
    }
}

impl NetParams {
    fn init(
        n_airports: usize,
        dim: usize,
        tail: usize,
        hidden: &[usize],
        base_rate: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let mut normal = |sd: f64| -> f64 { sd * rng.sample::<f64, _>(StandardNormal) };
        let origin = (0..n_airports * dim).map(|_| normal(0.1)).collect();
        let destination = (0..n_airports * dim).map(|_| normal(0.1)).collect();
        let mut widths = vec![2 * dim + tail];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let n_layers = widths.len() - 1;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let (n_in, n_out) = (w[0], w[1]);
                let gain = if k + 1 == n_layers { 1.0 } else { 2.0 };
                let sd = (gain / n_in as f64).sqrt();
                let b = if k + 1 == n_layers {
                    let p = base_rate.clamp(1e-3, 1.0 - 1e-3);
                    vec![(p / (1.0 - p)).ln()]
                } else {
                    vec![0.0; n_out]
                };
                Layer { n_in, n_out, w: (0..n_in * n_out).map(|_| normal(sd)).collect(), b }
            })
            .collect();
        Self { origin, destination, layers }
    }

    fn dim(&self, n_airports: usize) -> usize {
        self.origin.len() / n_airports.max(1)
    }

    /// Output logit; fills `s.acts`.
    fn forward(&self, x: &NetInput, dim: usize, s: &mut Scratch) -> f64 {
        let a0 = &mut s.acts[0];
        a0[..dim].copy_from_slice(&self.origin[x.origin * dim..(x.origin + 1) * dim]);
        a0[dim..2 * dim]
            .copy_from_slice(&self.destination[x.destination * dim..(x.destination + 1) * dim]);
        a0[2 * dim..].copy_from_slice(&x.tail);
        let last = self.layers.len() - 1;
        for (k, l) in self.layers.iter().enumerate() {
            let (prev, next) = s.acts.split_at_mut(k + 1);
            let input = &prev[k];
            let out = &mut next[0];
            for o in 0..l.n_out {
                let row = &l.w[o * l.n_in..(o + 1) * l.n_in];
                let z = l.b[o] + row.iter().zip(input).map(|(w, a)| w * a).sum::<f64>();
                out[o] = if k == last { z } else { z.max(0.0) };
            }
        }
        s.acts[last + 1][0]
    }

    /// Accumulate `scale * d(loss)/d(params)` for one example into `grad`.
    fn backward(&self, x: &NetInput, dim: usize, dlogit: f64, s: &mut Scratch, grad: &mut NetParams) {
        let n = self.layers.len();
        s.deltas[n][0] = dlogit;
        for k in (0..n).rev() {
            let l = &self.layers[k];
            let g = &mut grad.layers[k];
            let (lower, upper) = s.deltas.split_at_mut(k + 1);
            let delta = &upper[0];
            let below = &mut lower[k];
            below.iter_mut().for_each(|d| *d = 0.0);
            let input = &s.acts[k];
            for o in 0..l.n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                g.b[o] += d;
                let row = &l.w[o * l.n_in..(o + 1) * l.n_in];
                let grow = &mut g.w[o * l.n_in..(o + 1) * l.n_in];
                for i in 0..l.n_in {
                    grow[i] += d * input[i];
                    below[i] += d * row[i];
                }
            }
            if k > 0 {
                // Rectifier derivative of the layer below.
                for (d, a) in below.iter_mut().zip(&s.acts[k]) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
        }
        let d0 = &s.deltas[0];
        for k in 0..dim {
            grad.origin[x.origin * dim + k] += d0[k];
            grad.destination[x.destination * dim + k] += d0[dim + k];
        }
    }

    /// Mean log-loss plus `l2/2 * |W|^2`, and its gradient.
    pub fn loss_and_grad(&self, inputs: &[NetInput], labels: &[f64], l2: f64, n_airports: usize) -> (f64, NetParams) {
        let dim = self.dim(n_airports);
        let mut grad = NetParams::zeros_like(self);
        let mut s = Scratch::new(self);
        let scale = 1.0 / inputs.len().max(1) as f64;
        let mut loss = 0.0;
        for (x, &y) in inputs.iter().zip(labels) {
            let z = self.forward(x, dim, &mut s);
            loss += log_loss(z, y) * scale;
            self.backward(x, dim, (sigmoid(z) - y) * scale, &mut s, &mut grad);
        }
        for (l, g) in self.layers.iter().zip(&mut grad.layers) {
            loss += 0.5 * l2 * l.w.iter().map(|w| w * w).sum::<f64>();
            for (gw, w) in g.w.iter_mut().zip(&l.w) {
                *gw += l2 * w;
            }
        }
        (loss, grad)
    }
}

impl EmbedNet {
    /// Encode an example with this network's standardizer.
    pub fn input(&self, f: &FeatureVector) -> NetInput {
        let mut tail = vec![0.0; tail_width(self.n_airlines)];
        encode_tail(f, self.n_airlines, &mut tail);
        self.standardizer.apply(&mut tail);
        NetInput {
            origin: f.origin.index().min(self.n_airports - 1),
            destination: f.destination.index().min(self.n_airports - 1),
            tail,
        }
    }

    pub fn score(&self, f: &FeatureVector) -> f64 {
        let mut s = Scratch::new(&self.params);
        sigmoid(self.params.forward(&self.input(f), self.config.embedding_dim, &mut s))
    }

    pub fn score_all(&self, instances: &[Instance]) -> Vec<f64> {
        let mut s = Scratch::new(&self.params);
        instances
            .iter()
            .map(|i| {
                let x = self.input(&i.features);
                sigmoid(self.params.forward(&x, self.config.embedding_dim, &mut s))
            })
            .collect()
    }

    pub fn origin_table(&self) -> EmbeddingTable {
        EmbeddingTable::from_flat(&self.params.origin, self.config.embedding_dim, EmbeddingSource::CoTrained)
            .expect("trained parameters are finite")
    }

    pub fn destination_table(&self) -> EmbeddingTable {
        EmbeddingTable::from_flat(
            &self.params.destination,
            self.config.embedding_dim,
            EmbeddingSource::CoTrained,
        )
        .expect("trained parameters are finite")
    }

    /// Fit by mini-batch gradient descent with momentum on log-loss.
    pub fn train(
        instances: &[Instance],
        n_airports: usize,
        n_airlines: usize,
        config: &EmbedNetConfig,
    ) -> Result<TrainedEmbedNet, EmbedError> {
        config.validate()?;
        if instances.is_empty() {
            return Err(EmbedError::EmptyTrainingSet);
        }
        if n_airports == 0 {
            return Err(EmbedError::InvalidConfig("no airports".into()));
        }
        let tw = tail_width(n_airlines);
        let mut tails = Matrix { rows: instances.len(), cols: tw, data: vec![0.0; instances.len() * tw] };
        for (row, inst) in tails.data.chunks_mut(tw).zip(instances) {
            encode_tail(&inst.features, n_airlines, row);
        }
        // Airline one-hot columns stay 0/1; only the numeric block is rescaled.
        let standardizer = Standardizer::fit(&tails, n_airlines);
        standardizer.apply_matrix(&mut tails);

        let inputs: Vec<NetInput> = instances
            .iter()
            .enumerate()
            .map(|(i, inst)| NetInput {
                origin: inst.features.origin.index().min(n_airports - 1),
                destination: inst.features.destination.index().min(n_airports - 1),
                tail: tails.row(i).to_vec(),
            })
            .collect();
        let labels: Vec<f64> = instances.iter().map(|i| if i.label { 1.0 } else { 0.0 }).collect();
        let base_rate = labels.iter().sum::<f64>() / labels.len() as f64;

        let mut rng = rng::stream(config.seed, 0xE3B);
        let dim = config.embedding_dim;
        let mut params =
            NetParams::init(n_airports, dim, tw, &config.hidden_widths, base_rate, &mut rng);
        let mut velocity = NetParams::zeros_like(&params);
        let mut grad = NetParams::zeros_like(&params);
        let mut s = Scratch::new(&params);
        let mut order: Vec<usize> = (0..inputs.len()).collect();
        let mut epoch_losses = Vec::with_capacity(config.epochs);

        for epoch in 0..config.epochs {
            order.shuffle(&mut rng);
            let mut loss_sum = 0.0;
            for batch in order.chunks(config.batch_size) {
                grad.fill(0.0);
                let scale = 1.0 / batch.len() as f64;
                for &i in batch {
                    let z = params.forward(&inputs[i], dim, &mut s);
                    loss_sum += log_loss(z, labels[i]);
                    params.backward(&inputs[i], dim, (sigmoid(z) - labels[i]) * scale, &mut s, &mut grad);
                }
                for (l, g) in params.layers.iter().zip(&mut grad.layers) {
                    for (gw, w) in g.w.iter_mut().zip(&l.w) {
                        *gw += config.l2 * w;
                    }
                }
                for ((p, v), g) in params
                    .slices_mut()
                    .into_iter()
                    .zip(velocity.slices_mut())
                    .zip(grad.slices())
                {
                    for k in 0..p.len() {
                        v[k] = config.momentum * v[k] - config.learning_rate * g[k];
                        p[k] += v[k];
                    }
                }
            }
            let mean = loss_sum / inputs.len() as f64;
            if !mean.is_finite() {
                return Err(EmbedError::NonFiniteLoss(epoch));
            }
            epoch_losses.push(mean);
        }
        let net = EmbedNet { config: config.clone(), n_airports, n_airlines, standardizer, params };
        Ok(TrainedEmbedNet { net, epoch_losses })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{AirlineId, AirportId, LegDirection, QueryId};

    fn toy_inputs(n: usize, n_airports: usize, tail: usize, seed: u64) -> (Vec<NetInput>, Vec<f64>) {
        let mut rng = rng::stream(seed, 1);
        let inputs: Vec<NetInput> = (0..n)
            .map(|_| NetInput {
                origin: rng.random_range(0..n_airports),
                destination: rng.random_range(0..n_airports),
                tail: (0..tail).map(|_| rng.random_range(-1.0..1.0)).collect(),
            })
            .collect();
        let labels = (0..n).map(|_| if rng.random_bool(0.4) { 1.0 } else { 0.0 }).collect();
        (inputs, labels)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        // Three weight layers: two hidden plus the output unit.
        let mut rng = rng::stream(7, 7);
        let params = NetParams::init(4, 3, 2, &[5, 4], 0.4, &mut rng);
        let (inputs, labels) = toy_inputs(6, 4, 2, 2);
        let l2 = 1e-3;
        let (_, grad) = params.loss_and_grad(&inputs, &labels, l2, 4);
        let g = grad.flat();
        let theta = params.flat();
        let mut probe = params.clone();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for k in 0..theta.len() {
            let mut t = theta.clone();
            t[k] += h;
            probe.set_flat(&t);
            let up = probe.loss_and_grad(&inputs, &labels, l2, 4).0;
            t[k] -= 2.0 * h;
            probe.set_flat(&t);
            let down = probe.loss_and_grad(&inputs, &labels, l2, 4).0;
            let fd = (up - down) / (2.0 * h);
            // Parameters behind dead rectifiers have zero gradient on both sides.
            if fd.abs() < 1e-9 && g[k].abs() < 1e-9 {
                continue;
            }
            let rel = (fd - g[k]).abs() / fd.abs().max(g[k].abs());
            worst = worst.max(rel);
        }
        assert!(worst < 1e-4, "relative error {worst}");
    }

    fn instance(o: u16, d: u16, a: u16, label: bool) -> Instance {
        Instance {
            query_id: QueryId(0),
            airline: AirlineId(a),
            direction: LegDirection::Outbound,
            label,
            features: FeatureVector {
                origin: AirportId(o),
                destination: AirportId(d),
                airline: AirlineId(a),
                direction: LegDirection::Outbound,
                horizon: (o * 3 + d) as u32,
                trip_length: 2,
                search_day_of_week: 1,
                departure_day_of_week: 3,
                route_popularity: 0.1,
            },
        }
    }

    #[test]
    fn constant_labels_give_constant_output() {
        let data: Vec<Instance> = (0..200).map(|i| instance(i % 5, (i + 1) % 5, i % 3, false)).collect();
        let cfg = EmbedNetConfig { epochs: 3, hidden_widths: vec![8, 4], ..EmbedNetConfig::default() };
        let trained = EmbedNet::train(&data, 5, 3, &cfg).unwrap();
        let scores = trained.net.score_all(&data);
        assert!(scores.iter().all(|&s| s < 0.01), "max {:?}", scores.iter().cloned().fold(0.0, f64::max));
        assert!(trained.net.origin_table().vectors().iter().flatten().all(|x| x.is_finite()));
    }

    #[test]
    fn learns_planted_origin_rule() {
        // Label is positive exactly when the origin is airport 0 or 1.
        let data: Vec<Instance> = (0..1200u16)
            .map(|i| {
                let o = i % 6;
                instance(o, (i / 6) % 6, i % 4, o < 2)
            })
            .collect();
        let cfg = EmbedNetConfig { epochs: 20, seed: 2, ..EmbedNetConfig::default() };
        let trained = EmbedNet::train(&data, 6, 4, &cfg).unwrap();
        assert!(trained.epoch_losses.last() < trained.epoch_losses.first());
        let net = &trained.net;
        let pos = net.score(&instance(0, 3, 1, true).features);
        let neg = net.score(&instance(4, 3, 1, false).features);
        assert!(pos > 0.8 && neg < 0.2, "pos {pos} neg {neg}");
        let again = EmbedNet::train(&data, 6, 4, &cfg).unwrap();
        assert_eq!(again.net, trained.net);
    }

    #[test]
    fn empty_training_set_rejected() {
        let err = EmbedNet::train(&[], 3, 2, &EmbedNetConfig::default()).unwrap_err();
        assert_eq!(err, EmbedError::EmptyTrainingSet);
    }
}
