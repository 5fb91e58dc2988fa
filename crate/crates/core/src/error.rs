use thiserror::Error;

use crate::ingest::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by model evaluation, simulation, estimation and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid instrument: {0}")]
    InvalidInstrument(String),

    #[error("invalid distance distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid sample: {0}")]
    InvalidSample(String),

    #[error("zero outcome variance")]
    ZeroOutcomeVariance,

    #[error("degenerate instrument: instrument variance is zero")]
    DegenerateInstrument,

    #[error("instrument irrelevant: all instrument weights are zero")]
    InstrumentIrrelevant,

    #[error("surnames uninformative: all surname weights are zero")]
    SurnamesUninformative,

    #[error("no transmitted variance")]
    NoTransmittedVariance,

    #[error("no assortative signal: all spousal correlations are zero")]
    NoAssortativeSignal,

    #[error("no sibling signal: all persistence times sibling correlation terms are zero")]
    NoSiblingSignal,

    #[error("division by zero: {0}")]
    DivisionByZero(String),

    #[error("bias decomposition requires orthogonal factors")]
    NonOrthogonalFactors,

    #[error("operation requires {0} lineage mode")]
    WrongLineageMode(&'static str),

    #[error("infeasible (γ, r, λ) combination: {0}")]
    Infeasible(String),

    #[error("expected population {expected} exceeds cap {cap}")]
    PopulationCap { expected: f64, cap: u64 },

    #[error("zero regressor variance")]
    ZeroRegressorVariance,

    #[error("instrument has no variation: {0}")]
    NoVariation(String),

    #[error("auxiliary sample is missing instrument categories {0:?}")]
    MissingCategories(Vec<u32>),

    #[error("no overlapping surnames between child sample and parent sample")]
    NoOverlap,

    #[error("too few groups: {0}")]
    TooFewGroups(String),

    #[error("invalid relation query: {0}")]
    InvalidRelation(String),

    #[error("ingest aborted: {fatal} of {total} rows had fatal defects")]
    IngestAborted {
        fatal: usize,
        total: usize,
        report: Box<ValidationReport>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable code used in flagged report rows.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidModel(_) => "invalid_model",
            Error::InvalidInstrument(_) => "invalid_instrument",
            Error::InvalidDistribution(_) => "invalid_distribution",
            Error::InvalidConfig(_) => "invalid_config",
            Error::InvalidSample(_) => "invalid_sample",
            Error::ZeroOutcomeVariance => "zero_outcome_variance",
            Error::DegenerateInstrument => "degenerate_instrument",
            Error::InstrumentIrrelevant => "instrument_irrelevant",
            Error::SurnamesUninformative => "surnames_uninformative",
            Error::NoTransmittedVariance => "no_transmitted_variance",
            Error::NoAssortativeSignal => "no_assortative_signal",
            Error::NoSiblingSignal => "no_sibling_signal",
            Error::DivisionByZero(_) => "division_by_zero",
            Error::NonOrthogonalFactors => "non_orthogonal_factors",
            Error::WrongLineageMode(_) => "wrong_lineage_mode",
            Error::Infeasible(_) => "infeasible",
            Error::PopulationCap { .. } => "population_cap",
            Error::ZeroRegressorVariance => "zero_regressor_variance",
            Error::NoVariation(_) => "no_variation",
            Error::MissingCategories(_) => "missing_categories",
            Error::NoOverlap => "no_overlap",
            Error::TooFewGroups(_) => "too_few_groups",
            Error::InvalidRelation(_) => "invalid_relation",
            Error::IngestAborted { .. } => "ingest_aborted",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
