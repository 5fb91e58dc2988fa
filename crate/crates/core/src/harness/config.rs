use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{Estimator, SeMethod, SurnameRegime};
use crate::ingest::IngestSchema;
use crate::model::{InstrumentSpec, TransmissionModel};
use crate::sim::SimConfig;

/// A scenario document: model, simulation, instruments and requests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<TransmissionModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimConfig>,
    #[serde(default = "one")]
    pub replications: u32,
    #[serde(default)]
    pub instruments: BTreeMap<String, InstrumentSpec>,
    #[serde(default)]
    pub estimators: Vec<EstimatorRequest>,
    #[serde(default)]
    pub se: SeMethod,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ingest: Option<IngestConfig>,
    /// Output directory; `--out` overrides.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn one() -> u32 {
    1
}

/// One requested estimate. `generation` is the child (ego) generation and
/// defaults to the last one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EstimatorRequest {
    Ols {
        #[serde(default)]
        generation: Option<u32>,
    },
    RankSlope {
        #[serde(default)]
        generation: Option<u32>,
    },
    /// `instrument` names an entry of `instruments` or a covariate column;
    /// covariates are cut into `bins` quantile categories when given.
    Tsls {
        instrument: String,
        #[serde(default)]
        bins: Option<u32>,
        #[serde(default)]
        generation: Option<u32>,
    },
    Tstsls {
        instrument: String,
        auxiliary_per_category: Vec<u64>,
        #[serde(default)]
        generation: Option<u32>,
    },
    SurnameGrouping {
        regime: SurnameRegime,
        #[serde(default = "full_fraction")]
        sample_fraction: f64,
        #[serde(default)]
        size_filter: Option<(usize, usize)>,
        #[serde(default)]
        generation: Option<u32>,
    },
    /// Child-on-father slope over the children a grouping request would use.
    SurnameDirect {
        regime: SurnameRegime,
        #[serde(default = "full_fraction")]
        sample_fraction: f64,
        #[serde(default)]
        size_filter: Option<(usize, usize)>,
        #[serde(default)]
        generation: Option<u32>,
    },
    GrandparentIv {
        #[serde(default)]
        generation: Option<u32>,
    },
    KinBeta {
        g: Vec<u32>,
        #[serde(default)]
        generation: Option<u32>,
    },
    DecayRate {
        g: Vec<u32>,
        #[serde(default)]
        generation: Option<u32>,
    },
    InlawSpouseRatio {
        #[serde(default)]
        generation: Option<u32>,
    },
    CousinUncleRatio {
        #[serde(default)]
        generation: Option<u32>,
    },
    Ics {
        #[serde(default)]
        generation: Option<u32>,
    },
}

fn full_fraction() -> f64 {
    1.0
}

impl EstimatorRequest {
    pub fn estimator(&self) -> Estimator {
        match self {
            EstimatorRequest::Ols { .. } => Estimator::Ols,
            EstimatorRequest::RankSlope { .. } => Estimator::RankSlope,
            EstimatorRequest::Tsls { .. } => Estimator::Tsls,
            EstimatorRequest::Tstsls { .. } => Estimator::Tstsls,
            EstimatorRequest::SurnameGrouping { .. } => Estimator::SurnameGrouping,
            EstimatorRequest::SurnameDirect { .. } => Estimator::SurnameDirect,
            EstimatorRequest::GrandparentIv { .. } => Estimator::GrandparentIv,
            EstimatorRequest::KinBeta { .. } => Estimator::KinBeta,
            EstimatorRequest::DecayRate { .. } => Estimator::DecayRate,
            EstimatorRequest::InlawSpouseRatio { .. } => Estimator::InlawSpouseRatio,
            EstimatorRequest::CousinUncleRatio { .. } => Estimator::CousinUncleRatio,
            EstimatorRequest::Ics { .. } => Estimator::Ics,
        }
    }
}

/// Deliberate offset added to estimates, used to check that verification fails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultInjection {
    /// Estimator to corrupt; all when absent.
    #[serde(default)]
    pub estimator: Option<Estimator>,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "default_z")]
    pub z_threshold: f64,
    #[serde(default = "default_fail_fraction")]
    pub max_fail_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault_injection: Option<FaultInjection>,
}

fn default_z() -> f64 {
    4.0
}

fn default_fail_fraction() -> f64 {
    0.01
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig { z_threshold: 4.0, max_fail_fraction: 0.01, fault_injection: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Child generation of the size sweep; the last one by default.
    #[serde(default)]
    pub generation: Option<u32>,
    /// Fixed cumulative size cutoffs; deciles of the first replication by default.
    #[serde(default)]
    pub cutoffs: Option<Vec<usize>>,
    /// Fixed cutoffs for the weight diagnostic (member-weighted deciles by default).
    #[serde(default)]
    pub weight_cutoffs: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestConfig {
    /// Tables loaded in place of simulated replications; relative to the config file.
    pub paths: Vec<PathBuf>,
    #[serde(default)]
    pub schema: IngestSchema,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Scenario> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    /// Reads a scenario; ingest paths are resolved against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Scenario> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut s = Scenario::from_json(&text)?;
        if let (Some(ingest), Some(dir)) = (s.ingest.as_mut(), path.parent()) {
            for p in &mut ingest.paths {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        if let Some(sim) = &self.sim {
            sim.validate()?;
        }
        if let Some(model) = &self.model {
            model.validate()?;
            for (name, spec) in &self.instruments {
                spec.validate(model.factor_count)
                    .map_err(|e| Error::InvalidConfig(format!("instrument {name}: {e}")))?;
            }
        }
        if self.model.is_some() != self.sim.is_some() {
            return bad("model and sim must be given together".into());
        }
        if self.model.is_none() && self.ingest.is_none() {
            return bad("scenario needs model and sim, or ingest paths".into());
        }
        for req in &self.estimators {
            match req {
                EstimatorRequest::Tsls { instrument, .. } => {
                    if !self.instruments.contains_key(instrument) && !instrument.starts_with("c_") {
                        return bad(format!("unknown instrument {instrument:?}"));
                    }
                }
                EstimatorRequest::Tstsls { instrument, auxiliary_per_category, .. } => {
                    let Some(spec) = self.instruments.get(instrument) else {
                        return bad(format!("unknown instrument {instrument:?}"));
                    };
                    if spec.discretization.is_none() {
                        return bad(format!("tstsls needs a discretized instrument, {instrument:?} is continuous"));
                    }
                    if auxiliary_per_category.is_empty() || auxiliary_per_category.contains(&0) {
                        return bad("auxiliary sizes must be positive".into());
                    }
                }
                EstimatorRequest::KinBeta { g, .. } | EstimatorRequest::DecayRate { g, .. } if g.is_empty() => {
                    return bad("kin requests need at least one distance".into());
                }
                _ => {}
            }
        }
        if !(self.verify.z_threshold > 0.0) || !(0.0..=1.0).contains(&self.verify.max_fail_fraction) {
            return bad("verify thresholds out of range".into());
        }
        Ok(())
    }

    /// Master seed, overridden by `seed` when given.
    pub fn master_seed(&self) -> u64 {
        self.sim.as_ref().map_or(0, |s| s.seed)
    }
}
