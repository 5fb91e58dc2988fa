use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::TransmissionModel;
use crate::error::{Error, Result};

/// An observable instrument `Z = Σ a_j X^j + η`, optionally cut into `K`
/// equal-probability categories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstrumentSpec {
    pub loadings: Vec<f64>,
    #[serde(default)]
    pub instrument_noise_variance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discretization: Option<u32>,
}

impl InstrumentSpec {
    pub fn new(loadings: &[f64], instrument_noise_variance: f64) -> Self {
        InstrumentSpec { loadings: loadings.to_vec(), instrument_noise_variance, discretization: None }
    }

    pub fn discretized(mut self, bins: u32) -> Self {
        self.discretization = Some(bins);
        self
    }

    pub fn validate(&self, factor_count: usize) -> Result<()> {
        if self.loadings.len() != factor_count {
            return Err(Error::InvalidInstrument(format!(
                "{} loadings for {factor_count} factors",
                self.loadings.len()
            )));
        }
        if self.loadings.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidInstrument("non-finite loading".into()));
        }
        if !(self.instrument_noise_variance.is_finite() && self.instrument_noise_variance >= 0.0) {
            return Err(Error::InvalidInstrument("noise variance must be nonnegative".into()));
        }
        if self.loadings.iter().all(|&a| a == 0.0) && self.instrument_noise_variance == 0.0 {
            return Err(Error::InvalidInstrument(
                "needs a nonzero loading or positive noise variance".into(),
            ));
        }
        if let Some(k) = self.discretization {
            if k < 2 {
                return Err(Error::InvalidInstrument(format!("discretization K={k} must be at least 2")));
            }
        }
        Ok(())
    }

    /// `Cov(X^j, Z)` for every factor.
    pub fn factor_covariances(&self, model: &TransmissionModel) -> Vec<f64> {
        (0..model.factor_count)
            .map(|j| {
                (0..model.factor_count)
                    .map(|k| model.factor_covariance[j][k] * self.loadings[k])
                    .sum()
            })
            .collect()
    }

    /// `V(Z)` of the continuous instrument.
    pub fn variance(&self, model: &TransmissionModel) -> f64 {
        let c = self.factor_covariances(model);
        self.loadings.iter().zip(&c).map(|(a, c)| a * c).sum::<f64>() + self.instrument_noise_variance
    }

    /// Category boundaries (K−1 interior cut points) of the discretized instrument.
    pub fn cut_points(&self, model: &TransmissionModel) -> Vec<f64> {
        let Some(k) = self.discretization else { return Vec::new() };
        let sd = self.variance(model).sqrt();
        let normal = Normal::standard();
        (1..k).map(|i| sd * normal.inverse_cdf(f64::from(i) / f64::from(k))).collect()
    }

    /// Category of a realized continuous value (left-closed bins).
    pub fn categorize(cut_points: &[f64], z: f64) -> u32 {
        cut_points.partition_point(|&c| c <= z) as u32
    }
}

/// `V(E[Z | bin]) / V(Z)` for a Gaussian `Z` cut into `K` equal-probability bins.
///
/// Within bin `(a, b]` of a standard normal the mean is `(φ(a) − φ(b)) / p`
/// with `p = 1/K`, so the retained fraction is `K Σ (φ(a) − φ(b))²`.
pub fn discretized_variance_fraction(bins: u32) -> f64 {
    let normal = Normal::standard();
    let k = f64::from(bins);
    let mut edges = vec![0.0];
    edges.extend((1..bins).map(|i| normal.pdf(normal.inverse_cdf(f64::from(i) / k))));
    edges.push(0.0);
    k * edges.windows(2).map(|w| (w[0] - w[1]).powi(2)).sum::<f64>()
}

/// Mean of a standard normal within each equal-probability bin.
pub fn standard_bin_means(bins: u32) -> Vec<f64> {
    let normal = Normal::standard();
    let k = f64::from(bins);
    let mut dens = vec![0.0];
    dens.extend((1..bins).map(|i| normal.pdf(normal.inverse_cdf(f64::from(i) / k))));
    dens.push(0.0);
    dens.windows(2).map(|w| (w[0] - w[1]) * k).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_bins_keep_two_over_pi() {
        // E|Z| = sqrt(2/π) so the retained fraction is 2/π.
        let f = discretized_variance_fraction(2);
        assert!((f - 2.0 / std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn fraction_increases_with_bins_towards_one() {
        let fs: Vec<f64> = [2, 3, 5, 10, 50].iter().map(|&k| discretized_variance_fraction(k)).collect();
        assert!(fs.windows(2).all(|w| w[1] > w[0]));
        assert!(fs[4] > 0.99 && fs[4] < 1.0);
    }

    #[test]
    fn fraction_matches_brute_force_quadrature() {
        // Oracle: midpoint-rule integration of the bin means.
        let k = 5u32;
        let normal = Normal::standard();
        let mut total = 0.0;
        for b in 0..k {
            let lo = if b == 0 { -10.0 } else { normal.inverse_cdf(f64::from(b) / f64::from(k)) };
            let hi = if b == k - 1 { 10.0 } else { normal.inverse_cdf(f64::from(b + 1) / f64::from(k)) };
            let steps = 200_000;
            let h = (hi - lo) / f64::from(steps);
            let mut mass = 0.0;
            let mut first = 0.0;
            for s in 0..steps {
                let x = lo + (f64::from(s) + 0.5) * h;
                mass += normal.pdf(x) * h;
                first += x * normal.pdf(x) * h;
            }
            total += mass * (first / mass).powi(2);
        }
        assert!((total - discretized_variance_fraction(k)).abs() < 1e-6);
    }

    #[test]
    fn categorize_is_left_closed() {
        let cuts = [-1.0, 0.0, 1.0];
        assert_eq!(InstrumentSpec::categorize(&cuts, -2.0), 0);
        assert_eq!(InstrumentSpec::categorize(&cuts, -1.0), 1);
        assert_eq!(InstrumentSpec::categorize(&cuts, 0.5), 2);
        assert_eq!(InstrumentSpec::categorize(&cuts, 1.0), 3);
    }

    #[test]
    fn validation() {
        assert!(InstrumentSpec::new(&[0.0, 0.0], 0.0).validate(2).is_err());
        assert!(InstrumentSpec::new(&[0.0, 0.0], 1.0).validate(2).is_ok());
        assert!(InstrumentSpec::new(&[1.0], 0.0).validate(2).is_err());
        assert!(InstrumentSpec::new(&[1.0], 0.0).discretized(1).validate(1).is_err());
    }
}
