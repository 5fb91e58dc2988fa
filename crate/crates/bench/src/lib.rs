//! Shared inputs for the benchmarks.

use kinlab::estimators::SurnameOptions;
use kinlab::{simulate, InstrumentSpec, Population, SimConfig, TransmissionModel};

/// Two factors with unequal persistence plus noise.
pub fn model() -> TransmissionModel {
    TransmissionModel::orthogonal(&[1.0, 1.0], &[0.8, 0.2], &[0.5, 0.5], 0.5)
}

/// Same model with assortative mating and sibling correlation.
pub fn two_parent_model() -> TransmissionModel {
    model().with_two_parent(&[0.6, 0.2], &[0.85, 0.3])
}

pub fn instrument() -> InstrumentSpec {
    InstrumentSpec::new(&[1.0, 0.0], 0.5).discretized(10)
}

pub fn config(founders: u64, generations: u32) -> SimConfig {
    SimConfig::new(founders, generations, 1.2, 7)
}

/// Two sons per father, every generation the same shape.
pub fn kin_config(founders: u64, generations: u32) -> SimConfig {
    SimConfig::new(founders, generations, 2.0, 7).fixed()
}

pub fn population(founders: u64, generations: u32) -> Population {
    simulate(&model(), &config(founders, generations)).expect("simulate")
}

pub fn surname_options(pop: &Population) -> SurnameOptions {
    SurnameOptions::full(pop.generation_count() - 1)
}
