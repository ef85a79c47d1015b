//! Effort-aware active learning for bug report identification.
//!
//! The crate covers the whole offline pipeline: loading and preprocessing
//! report corpora ([`corpus`]), effort metrics ([`textmetrics`]), model
//! backends ([`model`]), query selection ([`sampling`]), nearest-neighbor
//! pseudo-labeling ([`pseudolabel`]), the timestep loop ([`engine`]) and
//! the statistics used to compare runs ([`evalstats`]). [`api`] holds the
//! wire types of the run service.

pub mod api;
pub mod corpus;
pub mod engine;
pub mod evalstats;
pub mod model;
pub mod pseudolabel;
pub mod sampling;
pub mod stopwords;
pub mod synth;
pub mod textmetrics;
