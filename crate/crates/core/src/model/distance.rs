use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distribution of the number of generations between a father and the
/// founder of his surname.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AncestorDistanceDistribution {
    pub support: Vec<u32>,
    pub probabilities: Vec<f64>,
}

impl AncestorDistanceDistribution {
    pub fn new(support: Vec<u32>, probabilities: Vec<f64>) -> Result<Self> {
        let dist = AncestorDistanceDistribution { support, probabilities };
        dist.validate()?;
        Ok(dist)
    }

    pub fn point_mass(distance: u32) -> Self {
        AncestorDistanceDistribution { support: vec![distance], probabilities: vec![1.0] }
    }

    /// Empirical distribution of observed distances.
    pub fn from_observations(distances: impl IntoIterator<Item = u32>) -> Result<Self> {
        let mut counts = BTreeMap::<u32, u64>::new();
        for d in distances {
            *counts.entry(d).or_default() += 1;
        }
        let total: u64 = counts.values().sum();
        if total == 0 {
            return Err(Error::InvalidDistribution("no observations".into()));
        }
        let support = counts.keys().copied().collect();
        let probabilities = counts.values().map(|&c| c as f64 / total as f64).collect();
        Self::new(support, probabilities)
    }

    pub fn validate(&self) -> Result<()> {
        if self.support.is_empty() {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        if self.support.len() != self.probabilities.len() {
            return Err(Error::InvalidDistribution("support and probabilities differ in length".into()));
        }
        if self.probabilities.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidDistribution("probabilities must be nonnegative".into()));
        }
        let total: f64 = self.probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!("probabilities sum to {total}")));
        }
        let mut sorted = self.support.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidDistribution("support entries must be distinct".into()));
        }
        Ok(())
    }

    /// `E[f(d)]`.
    pub fn expect(&self, f: impl Fn(u32) -> f64) -> f64 {
        self.support.iter().zip(&self.probabilities).map(|(&d, &p)| p * f(d)).sum()
    }
}
