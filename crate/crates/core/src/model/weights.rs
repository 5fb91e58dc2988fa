use serde::{Deserialize, Serialize};

use super::instrument::discretized_variance_fraction;
use super::{AncestorDistanceDistribution, InstrumentSpec, LineageMode, TransmissionModel};
use crate::error::{Error, Result};

/// Which estimand a set of weights belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    Direct,
    Instrument,
    Surname,
    KinRatio,
}

/// Per-factor weights `ω_j` plus the weight of the idiosyncratic term `ω_u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightDecomposition {
    pub weights: Vec<f64>,
    pub noise_weight: f64,
    pub kind: WeightKind,
}

impl WeightDecomposition {
    pub fn total(&self) -> f64 {
        self.weights.iter().sum::<f64>() + self.noise_weight
    }

    /// `Σ λ_j^p ω_j`.
    pub fn persistence_moment(&self, persistence: &[f64], power: i32) -> f64 {
        self.weights.iter().zip(persistence).map(|(w, l)| l.powi(power) * w).sum()
    }
}

/// Variance contributions to the parental outcome:
/// `ω_j = ρ_j² V_j + ρ_j Σ_{k≠j} ρ_k Cov(X^j, X^k)`, `ω_u = V(u)`.
pub fn direct_weights(model: &TransmissionModel) -> Result<WeightDecomposition> {
    model.validate()?;
    let weights = covariance_weights(model, |j, k| model.factor_covariance[j][k]);
    Ok(WeightDecomposition { weights, noise_weight: model.noise_variance, kind: WeightKind::Direct })
}

/// Weights of an instrument: the same form as [`direct_weights`] with the
/// factor covariance replaced by that of the linear projections `E[X^j | Z]`.
///
/// For a discretized instrument the projections are computed on the bins;
/// under Gaussian factors this scales every weight by the retained variance
/// fraction of the cut, see [`discretized_variance_fraction`].
pub fn instrument_weights(model: &TransmissionModel, z: &InstrumentSpec) -> Result<WeightDecomposition> {
    model.validate()?;
    z.validate(model.factor_count)?;
    let vz = z.variance(model);
    if vz <= 0.0 {
        return Err(Error::DegenerateInstrument);
    }
    let cov = z.factor_covariances(model);
    let retained = z.discretization.map_or(1.0, discretized_variance_fraction);
    let weights = covariance_weights(model, |j, k| cov[j] * cov[k] / vz * retained);
    Ok(WeightDecomposition { weights, noise_weight: 0.0, kind: WeightKind::Instrument })
}

/// Between-surname weights for founders at ancestor distance `d`:
/// `ω^S_j = ρ_j² E[λ_j^{2d}] V_j + ρ_j Σ_{k≠j} ρ_k E[λ_j^d λ_k^d] Cov(X^j, X^k)`.
///
/// Assumes the founder's traits are independent of how far back he lived.
pub fn surname_weights(
    model: &TransmissionModel,
    dist: &AncestorDistanceDistribution,
) -> Result<WeightDecomposition> {
    model.validate()?;
    dist.validate()?;
    let lam = &model.persistence;
    let weights = covariance_weights(model, |j, k| {
        let decay = dist.expect(|d| lam[j].powi(d as i32) * lam[k].powi(d as i32));
        decay * model.factor_covariance[j][k]
    });
    Ok(WeightDecomposition { weights, noise_weight: 0.0, kind: WeightKind::Surname })
}

/// Diagonal weights `ρ_j² V_j γ_j` of the parent-in-law / spouse ratio.
pub fn in_law_weights(model: &TransmissionModel) -> Result<WeightDecomposition> {
    require_two_parent(model)?;
    let weights = (0..model.factor_count)
        .map(|j| model.returns[j].powi(2) * model.variance(j) * model.assortative[j])
        .collect();
    Ok(WeightDecomposition { weights, noise_weight: 0.0, kind: WeightKind::KinRatio })
}

/// Diagonal weights `ρ_j² V_j λ_j r_j` of the cousin / uncle ratio.
pub fn cousin_weights(model: &TransmissionModel) -> Result<WeightDecomposition> {
    require_two_parent(model)?;
    let weights = (0..model.factor_count)
        .map(|j| model.returns[j].powi(2) * model.variance(j) * model.persistence[j] * model.sibling_corr[j])
        .collect();
    Ok(WeightDecomposition { weights, noise_weight: 0.0, kind: WeightKind::KinRatio })
}

fn require_two_parent(model: &TransmissionModel) -> Result<()> {
    model.validate()?;
    if model.lineage_mode != LineageMode::TwoParent {
        return Err(Error::WrongLineageMode("two_parent"));
    }
    Ok(())
}

/// `ω_j = ρ_j² C_jj + ρ_j Σ_{k≠j} ρ_k C_jk` for a covariance accessor `C`.
fn covariance_weights(model: &TransmissionModel, cov: impl Fn(usize, usize) -> f64) -> Vec<f64> {
    let rho = &model.returns;
    (0..model.factor_count)
        .map(|j| {
            let own = rho[j] * rho[j] * cov(j, j);
            let cross: f64 = (0..model.factor_count).filter(|&k| k != j).map(|k| rho[k] * cov(j, k)).sum();
            own + rho[j] * cross
        })
        .collect()
}
