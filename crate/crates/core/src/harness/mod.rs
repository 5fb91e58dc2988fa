//! Scenario configuration, Monte Carlo replication and verification against
//! the closed-form estimands.
//!
//! Replication `r` of a scenario with master seed `m` simulates with seed
//! [`replication_seed`]`(m, r)`, the first eight bytes (little endian) of
//! SHA-256 over `m` and `r` as little-endian `u64`s.

mod config;
mod files;
mod run;
pub mod stats;
mod sweep;
mod verify;

pub use config::{EstimatorRequest, FaultInjection, IngestConfig, Scenario, SweepConfig, VerifyConfig};
pub use files::{
    estimate_tables, input_tables, model_hash, population_file, write_populations, Manifest, ManifestEntry, MANIFEST_FILE,
};
pub use run::{
    estimate_population, realize_instrument, replication_seed, simulate_replication, with_threads, Cell,
    RealizedInstrument,
};
pub use sweep::{characteristics, run_sweep, write_sweep, SweepOutput, SweepPoint};
pub use verify::{aggregate, run_replications, verify, write_verification, Verification, VerificationRow, VERIFICATION_HEADER};
