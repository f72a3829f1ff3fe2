//! Predictive construction of cheap combination flight itineraries.
//!
//! The crate covers a synthetic fare marketplace ([`simgen`]), top-k
//! competitiveness labeling ([`construct`]), location embeddings ([`embed`]),
//! scoring models ([`models`]), cost-recall evaluation ([`eval`]) and a
//! day-sliced retraining pipeline ([`pipeline`]).

pub mod construct;
pub mod domain;
pub mod embed;
pub mod eval;
pub mod features;
pub mod models;
pub mod pipeline;
pub mod rng;
pub mod simgen;
pub mod zoo;
