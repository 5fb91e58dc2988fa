//! Simulator and estimator suite for intergenerational transmission under a
//! latent multi-factor model.
//!
//! * [`model`]: the transmission model and its closed-form estimands.
//! * [`sim`]: pedigree simulation with surnames, spouses and extended kin.
//! * [`estimators`]: sample counterparts of every estimand.
//! * [`ingest`]: loading external pedigree tables.
//! * [`harness`]: scenario configuration, replication and verification.

pub mod error;
pub mod harness;
pub mod estimators;
pub mod ingest;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
pub use model::{AncestorDistanceDistribution, InstrumentSpec, LineageMode, TransmissionModel, WeightDecomposition};
pub use sim::{simulate, Population, Relation, SimConfig};
