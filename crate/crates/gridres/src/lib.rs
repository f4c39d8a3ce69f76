//! Resilience-oriented evaluation and ranking of distribution-grid expansion
//! plans.
//!
//! The crate covers the full pipeline:
//!
//! - [`grid`]: grid/plan data model, validation, JSON serialization
//! - [`sim`]: annual outage simulation and CVaR-of-loss-of-load labeling
//! - [`paths`] / [`features`]: simple-path enumeration, U-scores, classical
//!   graph metrics, node/edge feature matrices
//! - [`hyper`]: hyperedge/hypernode incidence construction
//! - [`tensor`] / [`optim`]: a minimal reverse-mode autodiff engine and Adam
//! - [`model`] / [`train`]: the multi-branch graph classifier that learns to
//!   approximate the simulation labels, plus training/evaluation/ranking
//! - [`dataset`]: CSV/JSON artifact formats shared by the CLI stages
//! - [`cli`]: the `gridres` command-line pipeline

pub mod cli;
pub mod dataset;
pub mod features;
pub mod grid;
pub mod hyper;
pub mod model;
pub mod optim;
pub mod paths;
pub mod seeds;
pub mod sim;
pub mod tensor;
pub mod train;
