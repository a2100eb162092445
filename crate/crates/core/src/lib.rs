//! Frequency estimation of correlated multi-attribute categorical data under
//! local differential privacy.
//!
//! Clients perturb their records with one of four mechanisms (`mechanisms`)
//! and the server inverts the reports into per-attribute marginals
//! (`aggregation`). The two-phase correlated randomized response picks its copy
//! probability from an analytic error model (`pyopt`). The `harness` module
//! runs seeded Monte-Carlo sweeps over synthetic or ingested datasets.

pub mod aggregation;
pub mod domain;
pub mod error;
pub mod grr;
pub mod harness;
pub mod ingest;
pub mod mechanisms;
pub mod pyopt;
pub mod rng;
pub mod synth;

pub use domain::{clamp_normalize, validate_dataset, CategoricalDomain, Dataset, MarginalTable, PrivacyBudget};
pub use error::{Error, Result};
pub use rng::RngStream;
