//! Tabular regression toolkit for predicting video ad views.
//!
//! The pipeline runs CSV ingestion ([`dataset`]), feature encoding
//! ([`features`]), MinMax scaling and seeded splitting ([`preprocess`]), five
//! regressors ([`models`]) and RMSE comparison ([`analysis`]). [`testkit`]
//! holds synthetic data and brute-force oracles used by the test suites.

pub mod analysis;
pub mod dataset;
pub mod features;
pub mod models;
pub mod preprocess;
pub mod rng;
pub mod testkit;
