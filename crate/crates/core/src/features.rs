//! Dense encoding of feature vectors for the learned models.

use serde::{Deserialize, Serialize};

use crate::domain::{FeatureVector, Instance, LegDirection};
use crate::embed::EmbeddingTable;

/// How origin and destination airports are represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    OneHot,
    TraceEmbed,
    CoTrainedEmbed,
}

impl FeatureMode {
    pub const ALL: [FeatureMode; 3] =
        [FeatureMode::OneHot, FeatureMode::TraceEmbed, FeatureMode::CoTrainedEmbed];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureMode::OneHot => "one_hot",
            FeatureMode::TraceEmbed => "trace_embed",
            FeatureMode::CoTrainedEmbed => "co_trained_embed",
        }
    }
}

impl std::fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FeatureMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "one_hot" | "onehot" | "one-hot" => Ok(FeatureMode::OneHot),
            "trace_embed" | "trace" => Ok(FeatureMode::TraceEmbed),
            "co_trained_embed" | "cotrained" | "co_trained" => Ok(FeatureMode::CoTrainedEmbed),
            other => Err(format!("unknown feature mode `{other}`")),
        }
    }
}

/// Numeric columns shared by every mode, after the airport and airline blocks.
pub const NUMERIC_COLUMNS: [&str; 6] = [
    "inbound",
    "horizon",
    "trip_length",
    "search_day_of_week",
    "departure_day_of_week",
    "route_popularity",
];

/// Width of the airline one-hot plus numeric block.
pub fn tail_width(n_airlines: usize) -> usize {
    n_airlines + NUMERIC_COLUMNS.len()
}

/// Airline one-hot followed by [`NUMERIC_COLUMNS`]; `out` must be zeroed.
pub fn encode_tail(f: &FeatureVector, n_airlines: usize, out: &mut [f64]) {
    if f.airline.index() < n_airlines {
        out[f.airline.index()] = 1.0;
    }
    encode_numeric(f, &mut out[n_airlines..]);
}

fn encode_numeric(f: &FeatureVector, num: &mut [f64]) {
    num[0] = if f.direction == LegDirection::Inbound { 1.0 } else { 0.0 };
    num[1] = f.horizon as f64;
    num[2] = f.trip_length as f64;
    num[3] = f.search_day_of_week as f64;
    num[4] = f.departure_day_of_week as f64;
    num[5] = f.route_popularity;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum AirportBlock {
    OneHot { n_airports: usize },
    Embedded { origin: EmbeddingTable, destination: EmbeddingTable },
}

/// Maps a [`FeatureVector`] to a fixed-width row of reals.
///
/// Layout: origin block, destination block, airline one-hot, then
/// [`NUMERIC_COLUMNS`]. Airports are one-hot or embedded; airlines are
/// always one-hot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEncoder {
    mode: FeatureMode,
    n_airlines: usize,
    airports: AirportBlock,
    /// Adds an airline one-hot that is only set on inbound legs.
    #[serde(default)]
    leg_airlines: bool,
}

impl FeatureEncoder {
    pub fn one_hot(n_airports: usize, n_airlines: usize) -> Self {
        Self {
            mode: FeatureMode::OneHot,
            n_airlines,
            airports: AirportBlock::OneHot { n_airports },
            leg_airlines: false,
        }
    }

    /// One table serves both origin and destination.
    pub fn trace(n_airlines: usize, table: EmbeddingTable) -> Self {
        Self {
            mode: FeatureMode::TraceEmbed,
            n_airlines,
            airports: AirportBlock::Embedded { origin: table.clone(), destination: table },
            leg_airlines: false,
        }
    }

    pub fn co_trained(n_airlines: usize, origin: EmbeddingTable, destination: EmbeddingTable) -> Self {
        Self {
            mode: FeatureMode::CoTrainedEmbed,
            n_airlines,
            airports: AirportBlock::Embedded { origin, destination },
            leg_airlines: false,
        }
    }

    pub fn mode(&self) -> FeatureMode {
        self.mode
    }

    fn airport_width(&self) -> usize {
        match &self.airports {
            AirportBlock::OneHot { n_airports } => *n_airports,
            AirportBlock::Embedded { origin, .. } => origin.dim,
        }
    }

    pub fn width(&self) -> usize {
        self.numeric_offset() + NUMERIC_COLUMNS.len()
    }

    /// First column of the numeric block.
    pub fn numeric_offset(&self) -> usize {
        2 * self.airport_width() + self.airline_width()
    }

    fn airline_width(&self) -> usize {
        if self.leg_airlines {
            2 * self.n_airlines
        } else {
            self.n_airlines
        }
    }

    /// Same encoder with a second airline block set only on inbound legs, so
    /// a linear model can weigh an airline differently per leg.
    pub fn with_leg_airlines(mut self) -> Self {
        self.leg_airlines = true;
        self
    }

    pub fn column_names(&self) -> Vec<String> {
        let w = self.airport_width();
        let mut names = Vec::with_capacity(self.width());
        let tag = if self.mode == FeatureMode::OneHot { "is" } else { "emb" };
        for side in ["origin", "destination"] {
            names.extend((0..w).map(|k| format!("{side}_{tag}_{k}")));
        }
        names.extend((0..self.n_airlines).map(|a| format!("airline_is_{a}")));
        if self.leg_airlines {
            names.extend((0..self.n_airlines).map(|a| format!("inbound_airline_is_{a}")));
        }
        names.extend(NUMERIC_COLUMNS.iter().map(|s| s.to_string()));
        names
    }

    /// Write the encoding of `f` into `out`, which must be `width()` long.
    ///
    /// Airports or airlines outside the encoder's range leave their block zero.
    pub fn encode_into(&self, f: &FeatureVector, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.width());
        out.iter_mut().for_each(|x| *x = 0.0);
        let w = self.airport_width();
        match &self.airports {
            AirportBlock::OneHot { n_airports } => {
                if f.origin.index() < *n_airports {
                    out[f.origin.index()] = 1.0;
                }
                if f.destination.index() < *n_airports {
                    out[w + f.destination.index()] = 1.0;
                }
            }
            AirportBlock::Embedded { origin, destination } => {
                if let Some(v) = origin.vector(f.origin) {
                    out[..w].copy_from_slice(v);
                }
                if let Some(v) = destination.vector(f.destination) {
                    out[w..2 * w].copy_from_slice(v);
                }
            }
        }
        let (n_al, a) = (self.n_airlines, f.airline.index());
        if a < n_al {
            out[2 * w + a] = 1.0;
            if self.leg_airlines && f.direction == LegDirection::Inbound {
                out[2 * w + n_al + a] = 1.0;
            }
        }
        let off = self.numeric_offset();
        encode_numeric(f, &mut out[off..]);
    }

    pub fn encode(&self, f: &FeatureVector) -> Vec<f64> {
        let mut row = vec![0.0; self.width()];
        self.encode_into(f, &mut row);
        row
    }

    /// Row-major matrix of encoded instances.
    pub fn matrix(&self, instances: &[Instance]) -> Matrix {
        let cols = self.width();
        let mut data = vec![0.0; instances.len() * cols];
        for (row, inst) in data.chunks_mut(cols.max(1)).zip(instances) {
            self.encode_into(&inst.features, row);
        }
        Matrix { rows: instances.len(), cols, data }
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// Per-column affine rescaling to zero mean and unit variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Fit on columns `from..` of `m`; earlier columns pass through unchanged.
    pub fn fit(m: &Matrix, from: usize) -> Self {
        let mut mean = vec![0.0; m.cols];
        let mut scale = vec![1.0; m.cols];
        if m.rows == 0 {
            return Self { mean, scale };
        }
        for j in from..m.cols {
            let mu = (0..m.rows).map(|i| m.data[i * m.cols + j]).sum::<f64>() / m.rows as f64;
            let var = (0..m.rows)
                .map(|i| (m.data[i * m.cols + j] - mu).powi(2))
                .sum::<f64>()
                / m.rows as f64;
            mean[j] = mu;
            scale[j] = if var > 1e-12 { var.sqrt() } else { 1.0 };
        }
        Self { mean, scale }
    }

    pub fn apply(&self, row: &mut [f64]) {
        for ((x, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
            *x = (*x - m) / s;
        }
    }

    pub fn apply_matrix(&self, m: &mut Matrix) {
        for row in m.data.chunks_mut(m.cols.max(1)) {
            self.apply(row);
        }
    }
}
