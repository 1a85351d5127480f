//! Monthly cattle weight forecasting from voluntary in-paddock weigh events,
//! animal background records and daily weather.
//!
//! The pipeline reads raw CSV sources through a column manifest
//! ([`ingest`]), cleans and aggregates them into a monthly panel
//! ([`preprocess`], [`pipeline`]), builds lagged feature rows
//! ([`features`]), and compares random forest, support vector and LSTM
//! regressors ([`models`]) under k-fold cross-validation ([`evaluate`]).

pub mod calendar;
pub mod error;
pub mod evaluate;
pub mod features;
pub mod fsutil;
pub mod ingest;
pub mod matrix;
pub mod models;
pub mod pipeline;
pub mod preprocess;
pub mod scaling;
pub mod stats;
pub mod synth;

pub use calendar::YearMonth;
pub use error::{Error, Result};
pub use matrix::Matrix;
