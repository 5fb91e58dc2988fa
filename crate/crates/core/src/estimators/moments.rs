//! Ratios of sample covariances with cluster-robust standard errors.
//!
//! Every slope-type estimator in this crate is `Cov(a, b) / Cov(c, d)` over
//! one or two sets of observations: OLS is `Cov(y, x)/Cov(x, x)`, TSLS is
//! `Cov(y, ŷ)/Cov(x, ŷ)`, kin ratios take the numerator and denominator from
//! different pair sets. The analytic standard error comes from the
//! influence function summed within clusters.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

/// Observations entering one covariance.
#[derive(Debug, Clone, Copy)]
pub struct CovInput<'a> {
    pub a: &'a [f64],
    pub b: &'a [f64],
    pub cluster: &'a [u64],
    /// Unordered pairs: both orderings count, so the two columns share a mean.
    pub symmetric: bool,
}

impl<'a> CovInput<'a> {
    pub fn new(a: &'a [f64], b: &'a [f64], cluster: &'a [u64]) -> Self {
        CovInput { a, b, cluster, symmetric: false }
    }

    pub fn symmetric(mut self, yes: bool) -> Self {
        self.symmetric = yes;
        self
    }

    fn check(&self) -> Result<()> {
        if self.a.len() != self.b.len() || self.a.len() != self.cluster.len() {
            return Err(Error::InvalidSample("columns differ in length".into()));
        }
        if self.a.len() < 3 {
            return Err(Error::InvalidSample(format!("{} observations, need at least 3", self.a.len())));
        }
        if self.a.iter().chain(self.b).any(|v| !v.is_finite()) {
            return Err(Error::InvalidSample("non-finite value".into()));
        }
        Ok(())
    }

    fn means(&self) -> (f64, f64) {
        let n = self.a.len() as f64;
        let ma = self.a.iter().sum::<f64>() / n;
        let mb = self.b.iter().sum::<f64>() / n;
        if self.symmetric {
            let m = 0.5 * (ma + mb);
            (m, m)
        } else {
            (ma, mb)
        }
    }

    /// Covariance with divisor `n`.
    pub fn covariance(&self) -> f64 {
        let (ma, mb) = self.means();
        self.a.iter().zip(self.b).map(|(a, b)| (a - ma) * (b - mb)).sum::<f64>() / self.a.len() as f64
    }
}

/// Covariance ratio with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovRatio {
    pub value: f64,
    pub se: f64,
    pub numerator: f64,
    pub denominator: f64,
    /// `denominator / se(denominator)`.
    pub denominator_t: f64,
    pub clusters: usize,
}

/// Sums `(cluster, value)` contributions per cluster in a fixed order.
fn cluster_sums(mut items: Vec<(u64, f64, f64)>) -> Vec<(f64, f64)> {
    items.sort_by_key(|x| x.0);
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut last = None;
    for (c, p, q) in items {
        if last == Some(c) {
            let t = out.last_mut().expect("nonempty");
            t.0 += p;
            t.1 += q;
        } else {
            out.push((p, q));
            last = Some(c);
        }
    }
    out
}

/// `Cov_N(a, b) / Cov_D(c, d)` with a cluster-robust influence-function SE.
pub fn cov_ratio(num: CovInput<'_>, den: CovInput<'_>) -> Result<CovRatio> {
    num.check()?;
    den.check()?;
    let cn = num.covariance();
    let cd = den.covariance();
    if cd == 0.0 || !cd.is_finite() {
        return Err(Error::DivisionByZero("denominator covariance is zero".into()));
    }
    let theta = cn / cd;
    let (na, nb) = num.means();
    let (da, db) = den.means();
    let nn = num.a.len() as f64;
    let nd = den.a.len() as f64;

    // Per-observation influence on the numerator and denominator covariances.
    let mut items = Vec::with_capacity(num.a.len() + den.a.len());
    for i in 0..num.a.len() {
        items.push((num.cluster[i], ((num.a[i] - na) * (num.b[i] - nb) - cn) / nn, 0.0));
    }
    for i in 0..den.a.len() {
        items.push((den.cluster[i], 0.0, ((den.a[i] - da) * (den.b[i] - db) - cd) / nd));
    }
    let sums = cluster_sums(items);
    let g = sums.len() as f64;
    let adj = if g > 1.0 { g / (g - 1.0) } else { 1.0 };
    let mut var_theta = 0.0;
    let mut var_den = 0.0;
    for (pn, pd) in &sums {
        let psi = (pn - theta * pd) / cd;
        var_theta += psi * psi;
        var_den += pd * pd;
    }
    let se = (adj * var_theta).sqrt();
    let se_den = (adj * var_den).sqrt();
    Ok(CovRatio {
        value: theta,
        se,
        numerator: cn,
        denominator: cd,
        denominator_t: if se_den > 0.0 { cd / se_den } else { f64::INFINITY },
        clusters: sums.len(),
    })
}

/// Per-cluster sums for resampling.
#[derive(Debug, Clone, Copy, Default)]
struct Suff {
    n: f64,
    a: f64,
    b: f64,
    ab: f64,
}

impl Suff {
    fn add(&mut self, o: &Suff, w: f64) {
        self.n += w * o.n;
        self.a += w * o.a;
        self.b += w * o.b;
        self.ab += w * o.ab;
    }

    fn cov(&self, symmetric: bool) -> f64 {
        let (mut ma, mut mb) = (self.a / self.n, self.b / self.n);
        if symmetric {
            ma = 0.5 * (ma + mb);
            mb = ma;
        }
        self.ab / self.n - ma * self.b / self.n - mb * self.a / self.n + ma * mb
    }
}

/// Cluster bootstrap standard error of [`cov_ratio`]: clusters are drawn with
/// replacement and the ratio is recomputed from per-cluster sums.
pub fn cov_ratio_bootstrap(num: CovInput<'_>, den: CovInput<'_>, replicates: u32, seed: u64) -> Result<f64> {
    num.check()?;
    den.check()?;
    let mut items: Vec<(u64, bool, Suff)> = Vec::with_capacity(num.a.len() + den.a.len());
    for (set, input) in [(false, &num), (true, &den)] {
        for i in 0..input.a.len() {
            let (a, b) = (input.a[i], input.b[i]);
            items.push((input.cluster[i], set, Suff { n: 1.0, a, b, ab: a * b }));
        }
    }
    items.sort_by_key(|x| x.0);
    let mut clusters: Vec<(Suff, Suff)> = Vec::new();
    let mut last = None;
    for (c, set, s) in items {
        if last != Some(c) {
            clusters.push(Default::default());
            last = Some(c);
        }
        let slot = clusters.last_mut().expect("nonempty");
        if set { slot.1.add(&s, 1.0) } else { slot.0.add(&s, 1.0) }
    }
    let g = clusters.len();
    if g < 2 {
        return Err(Error::TooFewGroups("bootstrap needs at least 2 clusters".into()));
    }
    let draws: Vec<f64> = (0..u64::from(replicates))
        .into_par_iter()
        .filter_map(|r| {
            let mut rng = stream(seed, Purpose::Bootstrap, 0, r);
            let mut sn = Suff::default();
            let mut sd = Suff::default();
            for _ in 0..g {
                let k = rng.random_range(0..g);
                sn.add(&clusters[k].0, 1.0);
                sd.add(&clusters[k].1, 1.0);
            }
            let d = sd.cov(den.symmetric);
            (sn.n > 0.0 && sd.n > 0.0 && d != 0.0).then(|| sn.cov(num.symmetric) / d)
        })
        .collect();
    if draws.len() < 2 {
        return Err(Error::DivisionByZero("bootstrap replicates degenerate".into()));
    }
    let m = draws.iter().sum::<f64>() / draws.len() as f64;
    let v = draws.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
    Ok(v.sqrt())
}
