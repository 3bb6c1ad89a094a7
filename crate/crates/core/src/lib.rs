//! Decomposition-driven short-term wind-speed forecasting.
//!
//! The pipeline decomposes a wind-speed series with ensemble empirical mode
//! decomposition, merges intrinsic mode functions that share a PACF-optimal
//! lag, scores each merged component with sample entropy, and forecasts each
//! component with either a standard stacked LSTM (regular components) or a
//! two-branch LSTM over bidirectional features (irregular components). The
//! final forecast is the sum of the per-component forecasts.

pub mod emd;
pub mod metrics;
pub mod nets;
pub mod pipeline;
pub mod seeding;
pub mod series;
pub mod stats;

pub(crate) mod util;
