use serde::{Deserialize, Serialize};

use super::weights::{cousin_weights, direct_weights, in_law_weights, instrument_weights, surname_weights};
use super::{AncestorDistanceDistribution, InstrumentSpec, TransmissionModel, WeightDecomposition};
use crate::error::{Error, Result};

/// Population correlation between a father and his descendant `g` generations down:
/// `β_g = Σ λ_j^g ω_j / (Σ ω_j + ω_u)`.
///
/// In two-parent mode `persistence` already holds `λ = λ̃(1+γ)/2`, so the
/// same expression applies without branching.
pub fn kin_beta(model: &TransmissionModel, g: u32) -> Result<f64> {
    if g == 0 {
        return Err(Error::InvalidConfig("genealogical distance must be at least 1".into()));
    }
    let w = direct_weights(model)?;
    let total = w.total();
    if total == 0.0 {
        return Err(Error::ZeroOutcomeVariance);
    }
    Ok(w.persistence_moment(&model.persistence, g as i32) / total)
}

/// `β_g / β_{g−1}`.
pub fn decay_rate(model: &TransmissionModel, g: u32) -> Result<f64> {
    if g < 2 {
        return Err(Error::InvalidConfig("decay rate needs g ≥ 2".into()));
    }
    let prev = kin_beta(model, g - 1)?;
    if prev == 0.0 {
        return Err(Error::DivisionByZero(format!("β_{} is zero", g - 1)));
    }
    Ok(kin_beta(model, g)? / prev)
}

/// Probability limit of TSLS with instrument `z`: `Σ λ_j ω^Z_j / Σ ω^Z_j`.
pub fn tsls_estimand(model: &TransmissionModel, z: &InstrumentSpec) -> Result<f64> {
    let w = instrument_weights(model, z)?;
    ratio(&w, &model.persistence, 0.0, Error::InstrumentIrrelevant)
}

/// Two-sample TSLS limit when the auxiliary first stage adds prediction
/// errors `ν^j` of variance `nu_variances[j]`:
/// `Σ λ_j ω^Z_j / Σ (ω^Z_j + ρ_j² V(ν^j))`.
pub fn tstsls_estimand(model: &TransmissionModel, z: &InstrumentSpec, nu_variances: &[f64]) -> Result<f64> {
    if nu_variances.len() != model.factor_count {
        return Err(Error::InvalidConfig(format!(
            "{} ν variances for {} factors",
            nu_variances.len(),
            model.factor_count
        )));
    }
    if nu_variances.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::InvalidConfig("ν variances must be nonnegative".into()));
    }
    let w = instrument_weights(model, z)?;
    if w.weights.iter().all(|&x| x == 0.0) {
        return Err(Error::InstrumentIrrelevant);
    }
    let extra: f64 = model.returns.iter().zip(nu_variances).map(|(r, v)| r * r * v).sum();
    if extra.is_infinite() {
        return Ok(0.0);
    }
    ratio(&w, &model.persistence, extra, Error::InstrumentIrrelevant)
}

/// Limit of the surname grouping estimator: `Σ λ_j ω^S_j / Σ ω^S_j`.
pub fn surname_estimand(model: &TransmissionModel, dist: &AncestorDistanceDistribution) -> Result<f64> {
    let w = surname_weights(model, dist)?;
    ratio(&w, &model.persistence, 0.0, Error::SurnamesUninformative)
}

/// Grandparent outcome as an instrument for the parent outcome:
/// `Σ λ_j² ω_j / Σ λ_j ω_j`.
pub fn grandparent_iv_estimand(model: &TransmissionModel) -> Result<f64> {
    let w = direct_weights(model)?;
    let den = w.persistence_moment(&model.persistence, 1);
    if den == 0.0 {
        return Err(Error::NoTransmittedVariance);
    }
    Ok(w.persistence_moment(&model.persistence, 2) / den)
}

/// Ratio of the parent-in-law correlation to the spouse correlation.
pub fn inlaw_spouse_ratio_estimand(model: &TransmissionModel) -> Result<f64> {
    let w = in_law_weights(model)?;
    ratio(&w, &model.persistence, 0.0, Error::NoAssortativeSignal)
}

/// Ratio of the cousin correlation to the uncle/aunt correlation.
pub fn cousin_uncle_ratio_estimand(model: &TransmissionModel) -> Result<f64> {
    let w = cousin_weights(model)?;
    ratio(&w, &model.persistence, 0.0, Error::NoSiblingSignal)
}

/// Splits the TSLS limit into the direct coefficient plus a bias term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TslsBiasDecomposition {
    pub beta_ige: f64,
    pub beta_tsls: f64,
    /// `Σ (λ_j − β) ω^Z_j / Σ ω^Z_j`, so `beta_tsls = beta_ige + bias`.
    pub bias: f64,
    /// `Σ ρ_j² (λ_j − β) V(E[X^j|Z]) / Σ ω^Z_j`. Equal to `bias` whenever
    /// the projections are uncorrelated, e.g. when Z moves a single factor.
    pub bias_diagonal: f64,
    /// −1, 0 or 1.
    pub sign: i8,
}

pub fn tsls_bias_decomposition(model: &TransmissionModel, z: &InstrumentSpec) -> Result<TslsBiasDecomposition> {
    model.validate()?;
    if !model.is_orthogonal() {
        return Err(Error::NonOrthogonalFactors);
    }
    let beta = kin_beta(model, 1)?;
    let w = instrument_weights(model, z)?;
    let den: f64 = w.weights.iter().sum();
    if den == 0.0 {
        return Err(Error::InstrumentIrrelevant);
    }
    let lam = &model.persistence;
    let bias = w.weights.iter().zip(lam).map(|(w, l)| (l - beta) * w).sum::<f64>() / den;

    let vz = z.variance(model);
    let cov = z.factor_covariances(model);
    let retained = z.discretization.map_or(1.0, super::discretized_variance_fraction);
    let bias_diagonal = (0..model.factor_count)
        .map(|j| model.returns[j].powi(2) * (lam[j] - beta) * cov[j] * cov[j] / vz * retained)
        .sum::<f64>()
        / den;

    let sign = if bias.abs() <= 1e-12 { 0 } else if bias > 0.0 { 1 } else { -1 };
    Ok(TslsBiasDecomposition { beta_ige: beta, beta_tsls: beta + bias, bias, bias_diagonal, sign })
}

fn ratio(w: &WeightDecomposition, persistence: &[f64], extra: f64, err: Error) -> Result<f64> {
    if w.weights.iter().all(|&x| x == 0.0) {
        return Err(err);
    }
    let den = w.weights.iter().sum::<f64>() + extra;
    if den == 0.0 {
        return Err(err);
    }
    Ok(w.persistence_moment(persistence, 1) / den)
}
