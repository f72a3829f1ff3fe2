use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::domain::{FeatureVector, Instance};
use crate::features::{FeatureEncoder, Matrix, Standardizer};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogRegConfig {
    pub l2: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        Self { l2: 1e-4, learning_rate: 0.2, epochs: 8, batch_size: 128, seed: 0 }
    }
}

/// `sigmoid(w.x + b)` over encoded features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogReg {
    pub config: LogRegConfig,
    pub encoder: FeatureEncoder,
    pub standardizer: Standardizer,
    pub weights: Vec<f64>,
    pub bias: f64,
}

#[derive(Serialize)]
pub(crate) struct LogRegParams<'a> {
    encoder: &'a FeatureEncoder,
    columns: Vec<String>,
    standardizer: &'a Standardizer,
    weights: &'a [f64],
    bias: f64,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn log_loss(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

/// Mean log-loss over `rows` plus `l2/2 * |w|^2`, with gradients for `w` and `b`.
pub fn logreg_loss_and_grad(
    w: &[f64],
    b: f64,
    x: &Matrix,
    rows: &[usize],
    y: &[f64],
    l2: f64,
) -> (f64, Vec<f64>, f64) {
    let mut gw: Vec<f64> = w.iter().map(|wi| l2 * wi).collect();
    let mut gb = 0.0;
    let mut loss = 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>();
    let scale = 1.0 / rows.len().max(1) as f64;
    for &i in rows {
        let row = x.row(i);
        let z = b + row.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
        loss += log_loss(z, y[i]) * scale;
        let g = (sigmoid(z) - y[i]) * scale;
        gb += g;
        for (gj, xj) in gw.iter_mut().zip(row) {
            *gj += g * xj;
        }
    }
    (loss, gw, gb)
}

impl LogReg {
    pub fn train(
        instances: &[Instance],
        encoder: FeatureEncoder,
        config: LogRegConfig,
    ) -> Result<Self, ModelError> {
        if instances.is_empty() {
            return Err(ModelError::EmptyTrainingSet);
        }
        if config.epochs == 0 || config.batch_size == 0 || !(config.learning_rate > 0.0) || config.l2 < 0.0 {
            return Err(ModelError::InvalidConfig("epochs, batch size and rate must be positive".into()));
        }
        // Airline effects differ by leg; give the linear model a block for that.
        let encoder = encoder.with_leg_airlines();
        let mut x = encoder.matrix(instances);
        let standardizer = Standardizer::fit(&x, encoder.numeric_offset());
        standardizer.apply_matrix(&mut x);
        let y: Vec<f64> = instances.iter().map(|i| i.label as u8 as f64).collect();
        let mut w = vec![0.0; x.cols];
        let mut b = {
            let p = (y.iter().sum::<f64>() / y.len() as f64).clamp(1e-3, 1.0 - 1e-3);
            (p / (1.0 - p)).ln()
        };
        let mut rng = rng::stream(config.seed, 0x10C);
        let mut order: Vec<usize> = (0..x.rows).collect();
        for epoch in 0..config.epochs {
            order.shuffle(&mut rng);
            let mut loss = 0.0;
            for batch in order.chunks(config.batch_size) {
                let (l, gw, gb) = logreg_loss_and_grad(&w, b, &x, batch, &y, config.l2);
                loss += l * batch.len() as f64;
                for (wj, g) in w.iter_mut().zip(&gw) {
                    *wj -= config.learning_rate * g;
                }
                b -= config.learning_rate * gb;
            }
            if !loss.is_finite() {
                return Err(ModelError::NonFiniteLoss(epoch));
            }
        }
        Ok(Self { config, encoder, standardizer, weights: w, bias: b })
    }

    pub fn score(&self, f: &FeatureVector) -> f64 {
        let mut row = self.encoder.encode(f);
        self.standardizer.apply(&mut row);
        sigmoid(self.bias + row.iter().zip(&self.weights).map(|(a, c)| a * c).sum::<f64>())
    }

    pub(crate) fn parameters(&self) -> LogRegParams<'_> {
        LogRegParams {
            encoder: &self.encoder,
            columns: self.encoder.column_names(),
            standardizer: &self.standardizer,
            weights: &self.weights,
            bias: self.bias,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{AirlineId, AirportId, LegDirection, QueryId};
    use rand::Rng;

    fn inst(o: u16, horizon: u32, label: bool) -> Instance {
        let features = FeatureVector {
            origin: AirportId(o),
            destination: AirportId(3),
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

    #[test]
    fn separable_toy_set() {
        let data = vec![inst(0, 1, true), inst(0, 2, true), inst(1, 1, false), inst(1, 2, false)];
        let cfg = LogRegConfig { epochs: 200, batch_size: 4, l2: 0.0, ..LogRegConfig::default() };
        let m = LogReg::train(&data, FeatureEncoder::one_hot(4, 1), cfg).unwrap();
        for d in &data {
            assert_eq!(m.score(&d.features) >= 0.5, d.label);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = rng::stream(4, 4);
        let x = Matrix { rows: 12, cols: 5, data: (0..60).map(|_| rng.random_range(-1.0..1.0)).collect() };
        let y: Vec<f64> = (0..12).map(|i| (i % 3 == 0) as u8 as f64).collect();
        let rows: Vec<usize> = (0..12).collect();
        let l2 = 0.05;
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for _ in 0..10 {
            let w: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
            let b = rng.random_range(-1.0..1.0);
            let (_, gw, gb) = logreg_loss_and_grad(&w, b, &x, &rows, &y, l2);
            for j in 0..=5 {
                let eval = |delta: f64| {
                    let mut w2 = w.clone();
                    let mut b2 = b;
                    if j < 5 {
                        w2[j] += delta;
                    } else {
                        b2 += delta;
                    }
                    logreg_loss_and_grad(&w2, b2, &x, &rows, &y, l2).0
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let g = if j < 5 { gw[j] } else { gb };
                worst = worst.max((fd - g).abs() / fd.abs().max(g.abs()).max(1e-8));
            }
        }
        assert!(worst < 1e-6, "relative error {worst}");
    }

    #[test]
    fn heavy_penalty_flattens_weights() {
        let data: Vec<Instance> = (0..40).map(|i| inst(i % 4, i as u32, i % 4 == 0)).collect();
        let cfg = LogRegConfig { l2: 1e6, learning_rate: 5e-7, epochs: 50, batch_size: 8, seed: 1 };
        let m = LogReg::train(&data, FeatureEncoder::one_hot(4, 1), cfg).unwrap();
        assert!(m.weights.iter().all(|w| w.abs() < 1e-5));
        let s = m.score(&data[0].features);
        assert!((s - 1.0 / (1.0 + (-m.bias).exp())).abs() < 1e-6);
    }
}
