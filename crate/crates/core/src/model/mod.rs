//! The latent-factor transmission model and its closed-form estimands.
//!
//! Outcomes are `y = β₀ + Σ ρ_j X^j + u` and each factor is passed from
//! parent to child as `X^j_child = λ_j X^j_parent + ε^j`. Everything in this
//! module is a pure function of the model parameters and serves as the
//! analytic reference for the simulator and the estimators.

mod distance;
mod estimands;
mod instrument;
mod weights;

pub use distance::AncestorDistanceDistribution;
pub use estimands::{
    cousin_uncle_ratio_estimand, decay_rate, grandparent_iv_estimand, inlaw_spouse_ratio_estimand, kin_beta,
    surname_estimand, tsls_bias_decomposition, tsls_estimand, tstsls_estimand, TslsBiasDecomposition,
};
pub use instrument::{discretized_variance_fraction, standard_bin_means, InstrumentSpec};
pub use weights::{
    cousin_weights, direct_weights, in_law_weights, instrument_weights, surname_weights, WeightDecomposition,
    WeightKind,
};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// How children inherit factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LineageMode {
    /// `X_child = λ X_father + ε`.
    #[default]
    SingleParent,
    /// Midparent transmission `X_child = λ̃ (X_father + X_mother)/2 + f + e` with
    /// `λ = λ̃ (1 + γ)/2`, spouses correlated at `γ` and siblings at `r`.
    TwoParent,
}

/// Parameters of the transmission model.
///
/// `persistence` always holds the effective parent-child rate `λ_j`; in
/// two-parent mode the midparent rate is recovered as `λ̃_j = 2λ_j/(1+γ_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelDoc")]
pub struct TransmissionModel {
    pub factor_count: usize,
    pub intercept: f64,
    pub returns: Vec<f64>,
    pub persistence: Vec<f64>,
    /// Steady-state factor covariance, row-major.
    pub factor_covariance: Vec<Vec<f64>>,
    pub noise_variance: f64,
    pub assortative: Vec<f64>,
    pub sibling_corr: Vec<f64>,
    pub lineage_mode: LineageMode,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    factor_count: usize,
    #[serde(default)]
    intercept: f64,
    returns: Vec<f64>,
    persistence: Vec<f64>,
    factor_covariance: Vec<Vec<f64>>,
    noise_variance: f64,
    #[serde(default)]
    assortative: Vec<f64>,
    #[serde(default)]
    sibling_corr: Vec<f64>,
    #[serde(default)]
    lineage_mode: LineageMode,
}

impl TryFrom<ModelDoc> for TransmissionModel {
    type Error = Error;

    fn try_from(doc: ModelDoc) -> Result<Self> {
        let fill = |v: Vec<f64>| if v.is_empty() { vec![0.0; doc.factor_count] } else { v };
        let model = TransmissionModel {
            factor_count: doc.factor_count,
            intercept: doc.intercept,
            returns: doc.returns,
            persistence: doc.persistence,
            factor_covariance: doc.factor_covariance,
            noise_variance: doc.noise_variance,
            assortative: fill(doc.assortative),
            sibling_corr: fill(doc.sibling_corr),
            lineage_mode: doc.lineage_mode,
        };
        model.validate()?;
        Ok(model)
    }
}

/// Innovation structure that keeps the factor distribution stationary.
///
/// All matrices are lower Cholesky factors (`L Lᵀ = Σ`) of J×J covariances.
#[derive(Debug, Clone)]
pub struct Dynamics {
    pub factor_chol: DMatrix<f64>,
    /// Diagonal of `λ` (single parent) or `λ̃` (two parent) applied to the
    /// father's (or midparent's) factors.
    pub transmission: Vec<f64>,
    /// Single parent: per-child innovation `V − ΛVΛ`.
    pub innovation_chol: DMatrix<f64>,
    /// Two parent: spouse factors are `Γ X + ξ`, `ξ ~ N(0, V − ΓVΓ)`.
    pub spouse_chol: DMatrix<f64>,
    /// Two parent: shock shared by siblings.
    pub family_chol: DMatrix<f64>,
    /// Two parent: individual shock.
    pub individual_chol: DMatrix<f64>,
    /// Two parent: parent-in-law factors are `B X_spouse + e` with `Cov(X_spouse, X_pil) = ΛV`.
    pub in_law_map: DMatrix<f64>,
    pub in_law_chol: DMatrix<f64>,
}

impl TransmissionModel {
    /// Single-parent model with orthogonal factors of the given variances.
    pub fn orthogonal(returns: &[f64], persistence: &[f64], variances: &[f64], noise: f64) -> Self {
        let j = returns.len();
        let cov = (0..j)
            .map(|a| (0..j).map(|b| if a == b { variances[a] } else { 0.0 }).collect())
            .collect();
        TransmissionModel {
            factor_count: j,
            intercept: 0.0,
            returns: returns.to_vec(),
            persistence: persistence.to_vec(),
            factor_covariance: cov,
            noise_variance: noise,
            assortative: vec![0.0; j],
            sibling_corr: vec![0.0; j],
            lineage_mode: LineageMode::SingleParent,
        }
    }

    /// Switches to two-parent transmission with spousal correlations `γ` and sibling correlations `r`.
    pub fn with_two_parent(mut self, assortative: &[f64], sibling_corr: &[f64]) -> Self {
        self.assortative = assortative.to_vec();
        self.sibling_corr = sibling_corr.to_vec();
        self.lineage_mode = LineageMode::TwoParent;
        self
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        linalg::from_rows(&self.factor_covariance)
    }

    pub fn variance(&self, j: usize) -> f64 {
        self.factor_covariance[j][j]
    }

    /// Midparent transmission rate `λ̃_j = 2λ_j / (1 + γ_j)`.
    pub fn midparent_persistence(&self, j: usize) -> f64 {
        2.0 * self.persistence[j] / (1.0 + self.assortative[j])
    }

    /// Family-shock variance `(r_j − λ̃_j²(1+γ_j)/2) V_j` in two-parent mode.
    pub fn family_shock_variance(&self, j: usize) -> f64 {
        let lt = self.midparent_persistence(j);
        (self.sibling_corr[j] - lt * lt * (1.0 + self.assortative[j]) / 2.0) * self.variance(j)
    }

    pub fn is_orthogonal(&self) -> bool {
        linalg::is_diagonal(&self.covariance(), 1e-12)
    }

    pub fn validate(&self) -> Result<()> {
        let j = self.factor_count;
        let bad = |msg: String| Err(Error::InvalidModel(msg));
        if j == 0 {
            return bad("factor_count must be positive".into());
        }
        for (name, v) in [
            ("returns", &self.returns),
            ("persistence", &self.persistence),
            ("assortative", &self.assortative),
            ("sibling_corr", &self.sibling_corr),
        ] {
            if v.len() != j {
                return bad(format!("{name} has {} entries, expected {j}", v.len()));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return bad(format!("{name} contains non-finite values"));
            }
        }
        if let Some(l) = self.persistence.iter().find(|&&l| !(0.0..=1.0).contains(&l)) {
            return bad(format!("persistence {l} outside [0, 1]; negative or explosive transmission is not supported"));
        }
        if let Some(g) = self.assortative.iter().find(|&&g| !(0.0..=1.0).contains(&g)) {
            return bad(format!("assortative {g} outside [0, 1]"));
        }
        if let Some(r) = self.sibling_corr.iter().find(|&&r| !(0.0..=1.0).contains(&r)) {
            return bad(format!("sibling_corr {r} outside [0, 1]"));
        }
        if !self.intercept.is_finite() {
            return bad("intercept is not finite".into());
        }
        if !(self.noise_variance.is_finite() && self.noise_variance >= 0.0) {
            return bad(format!("noise_variance {} must be a nonnegative real", self.noise_variance));
        }
        if self.factor_covariance.len() != j || self.factor_covariance.iter().any(|r| r.len() != j) {
            return bad(format!("factor_covariance must be {j}x{j}"));
        }
        if self.factor_covariance.iter().flatten().any(|x| !x.is_finite()) {
            return bad("factor_covariance contains non-finite values".into());
        }
        let cov = self.covariance();
        if !linalg::is_symmetric(&cov, linalg::PSD_TOL) {
            return bad("factor_covariance is not symmetric".into());
        }
        let min_eig = linalg::min_eigenvalue(&cov);
        if min_eig < -linalg::PSD_TOL {
            return bad(format!("factor_covariance has negative eigenvalue {min_eig:.3e}"));
        }
        if self.lineage_mode == LineageMode::TwoParent {
            for k in 0..j {
                let fam = self.family_shock_variance(k);
                if fam < -1e-12 {
                    return Err(Error::Infeasible(format!(
                        "factor {k}: family shock variance {fam:.4} < 0 (λ={}, γ={}, r={})",
                        self.persistence[k], self.assortative[k], self.sibling_corr[k]
                    )));
                }
            }
        }
        Ok(())
    }

    /// Stationary innovation structure used by the simulator.
    pub fn dynamics(&self) -> Result<Dynamics> {
        self.validate()?;
        let j = self.factor_count;
        let v = self.covariance();
        let factor_chol = linalg::psd_cholesky(&v, "factor covariance")?;
        let lam = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(self.persistence.clone()));
        let zero = DMatrix::<f64>::zeros(j, j);
        match self.lineage_mode {
            LineageMode::SingleParent => {
                let innov = &v - &lam * &v * &lam;
                let innovation_chol = linalg::psd_cholesky(&innov, "innovation covariance V − ΛVΛ")?;
                Ok(Dynamics {
                    factor_chol,
                    transmission: self.persistence.clone(),
                    innovation_chol,
                    spouse_chol: zero.clone(),
                    family_chol: zero.clone(),
                    individual_chol: zero.clone(),
                    in_law_map: zero.clone(),
                    in_law_chol: zero,
                })
            }
            LineageMode::TwoParent => {
                let lt: Vec<f64> = (0..j).map(|k| self.midparent_persistence(k)).collect();
                let gamma = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(self.assortative.clone()));
                let spouse = &v - &gamma * &v * &gamma;
                let spouse_chol = linalg::psd_cholesky(&spouse, "spouse noise covariance V − ΓVΓ")
                    .map_err(|e| Error::Infeasible(format!("(γ, r, λ): {e}")))?;
                // Cov of the midparent term: Λ̃ (2V + VΓ + ΓV) Λ̃ / 4.
                let ltm = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(lt.clone()));
                let mid = &ltm * (&v * 2.0 + &v * &gamma + &gamma * &v) * &ltm / 4.0;
                let sib = DMatrix::from_fn(j, j, |a, b| {
                    (self.sibling_corr[a] * self.sibling_corr[b]).sqrt() * v[(a, b)]
                });
                let family = &sib - &mid;
                let individual = &v - &sib;
                let family_chol = linalg::psd_cholesky(&family, "family shock covariance")
                    .map_err(|e| Error::Infeasible(format!("(γ, r, λ): {e}")))?;
                let individual_chol = linalg::psd_cholesky(&individual, "individual shock covariance")
                    .map_err(|e| Error::Infeasible(format!("(γ, r, λ): {e}")))?;
                let in_law_map = &v * &lam * linalg::psd_pseudo_inverse(&v);
                let in_law = &v - &in_law_map * &v * in_law_map.transpose();
                let in_law_chol = linalg::psd_cholesky(&in_law, "parent-in-law innovation covariance")?;
                Ok(Dynamics {
                    factor_chol,
                    transmission: lt,
                    innovation_chol: zero,
                    spouse_chol,
                    family_chol,
                    individual_chol,
                    in_law_map,
                    in_law_chol,
                })
            }
        }
    }

    /// Outcome `β₀ + Σ ρ_j x_j + u`, summed left to right.
    #[inline]
    pub fn outcome(&self, factors: &[f64], noise: f64) -> f64 {
        let mut y = self.intercept;
        for (r, x) in self.returns.iter().zip(factors) {
            y += r * x;
        }
        y + noise
    }
}
