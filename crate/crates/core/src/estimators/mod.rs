//! Sample counterparts of the closed-form estimands.
//!
//! Slope-type estimators are ratios of sample covariances (see [`moments`]).
//! Kin-based estimators work on outcomes standardized within generation.

pub mod moments;
mod iv;
mod kin;
mod ols;
mod report;
mod surname;

pub use iv::{category_means, grandparent_iv, grandparent_iv_population, tsls, tstsls, FirstStage};
pub use kin::{decay_rate_sample, kin_beta_sample, kin_ratio, KinRatio};
pub use moments::{cov_ratio, cov_ratio_bootstrap, CovInput, CovRatio};
pub use ols::{ols_slope, parent_child_sample, percentile_ranks, rank_slope};
pub use report::{write_reports, REPORT_HEADER};
pub use surname::{
    decile_cutoffs, ics, member_size_cutoffs, realized_distances, surname_grouping, surname_sample_direct,
    surname_size_sweep, weight_diagnostic, DistanceWeight, IcsReport, SizeSweepRow, SurnameOptions, SurnameRegime,
    WeightDiagnosticRow,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::Population;

/// Default number of bootstrap replicates.
pub const DEFAULT_BOOTSTRAP_REPLICATES: u32 = 200;

/// Child outcomes paired with a regressor, plus ids and clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    pub child_outcome: Vec<f64>,
    pub regressor: Vec<f64>,
    pub ids: Vec<u64>,
    /// Cluster key per observation; defaults to the id.
    pub clusters: Vec<u64>,
}

impl PairedSample {
    pub fn new(child_outcome: Vec<f64>, regressor: Vec<f64>, ids: Vec<u64>) -> Result<Self> {
        let clusters = ids.clone();
        Self::with_clusters(child_outcome, regressor, ids, clusters)
    }

    pub fn with_clusters(child_outcome: Vec<f64>, regressor: Vec<f64>, ids: Vec<u64>, clusters: Vec<u64>) -> Result<Self> {
        let n = child_outcome.len();
        if regressor.len() != n || ids.len() != n || clusters.len() != n {
            return Err(Error::InvalidSample("columns differ in length".into()));
        }
        if n < 3 {
            return Err(Error::InvalidSample(format!("{n} observations, need at least 3")));
        }
        if child_outcome.iter().chain(&regressor).any(|v| !v.is_finite()) {
            return Err(Error::InvalidSample("non-finite value".into()));
        }
        Ok(PairedSample { child_outcome, regressor, ids, clusters })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// How standard errors are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum SeMethod {
    /// Cluster-robust influence-function formula.
    #[default]
    Analytic,
    /// Cluster bootstrap.
    Bootstrap { replicates: u32, seed: u64 },
}

impl SeMethod {
    pub fn bootstrap(seed: u64) -> Self {
        SeMethod::Bootstrap { replicates: DEFAULT_BOOTSTRAP_REPLICATES, seed }
    }
}

/// Which estimator produced a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Ols,
    RankSlope,
    Tsls,
    Tstsls,
    SurnameGrouping,
    SurnameDirect,
    GrandparentIv,
    KinBeta,
    DecayRate,
    InlawSpouseRatio,
    CousinUncleRatio,
    Ics,
    WeightDiagnostic,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::Ols => "ols",
            Estimator::RankSlope => "rank_slope",
            Estimator::Tsls => "tsls",
            Estimator::Tstsls => "tstsls",
            Estimator::SurnameGrouping => "surname_grouping",
            Estimator::SurnameDirect => "surname_direct",
            Estimator::GrandparentIv => "grandparent_iv",
            Estimator::KinBeta => "kin_beta",
            Estimator::DecayRate => "decay_rate",
            Estimator::InlawSpouseRatio => "inlaw_spouse_ratio",
            Estimator::CousinUncleRatio => "cousin_uncle_ratio",
            Estimator::Ics => "ics",
            Estimator::WeightDiagnostic => "weight_diagnostic",
        }
    }
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One estimate with its dispersion and labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimator: Estimator,
    pub value: f64,
    pub se: Option<f64>,
    pub n: usize,
    pub scenario: String,
    pub regime: String,
    pub bin: String,
    pub first_stage_r2: Option<f64>,
    pub flags: Vec<String>,
}

impl EstimateReport {
    pub fn new(estimator: Estimator, value: f64, se: Option<f64>, n: usize) -> Self {
        EstimateReport {
            estimator,
            value,
            se,
            n,
            scenario: String::new(),
            regime: String::new(),
            bin: String::new(),
            first_stage_r2: None,
            flags: Vec::new(),
        }
    }

    pub fn scenario(mut self, scenario: impl Into<String>) -> Self {
        self.scenario = scenario.into();
        self
    }

    pub fn regime(mut self, regime: impl Into<String>) -> Self {
        self.regime = regime.into();
        self
    }

    pub fn bin(mut self, bin: impl Into<String>) -> Self {
        self.bin = bin.into();
        self
    }

    pub fn flag(mut self, flag: impl Into<String>) -> Self {
        self.flags.push(flag.into());
        self
    }

    /// Standard error, or NaN when absent.
    pub fn se_or_nan(&self) -> f64 {
        self.se.unwrap_or(f64::NAN)
    }
}

/// Flag added when a ratio's denominator has t below this.
pub const WEAK_DENOMINATOR_T: f64 = 4.0;

/// Ratio of covariances with the requested standard error.
pub(crate) fn ratio_with_se(num: CovInput<'_>, den: CovInput<'_>, se: SeMethod) -> Result<(CovRatio, f64)> {
    let r = cov_ratio(num, den)?;
    let s = match se {
        SeMethod::Analytic => r.se,
        SeMethod::Bootstrap { replicates, seed } => cov_ratio_bootstrap(num, den, replicates, seed)?,
    };
    Ok((r, s))
}

/// Cluster key for kin-based estimators: the surname of the lineage the row
/// belongs to, else its family cluster.
pub(crate) fn lineage_cluster(pop: &Population, i: u32) -> u64 {
    let k = match pop.spouse(i) {
        Some(s) if pop.surname(i).is_none() && pop.surname(s).is_some() => s,
        _ => i,
    };
    match pop.surname(k) {
        Some(s) => u64::from(s),
        None => (1 << 63) | pop.family_cluster(k),
    }
}
