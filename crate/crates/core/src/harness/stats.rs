//! Summaries across Monte Carlo replications.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::estimators::percentile_ranks;

/// Mean and standard error of the mean over finite values; the SE is NaN
/// with fewer than two values.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, f64::NAN);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Mean and SE of the per-replication differences `a − b`.
pub fn paired_difference(a: &[f64], b: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    mean_se(&d)
}

/// Spearman rank correlation.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let rx = percentile_ranks(x, None);
    let ry = percentile_ranks(y, None);
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

/// One-sided p-value for a positive Spearman trend over `n` points, from the
/// t approximation with `n − 2` degrees of freedom.
pub fn spearman_trend_p(rho: f64, n: usize) -> f64 {
    if n < 3 {
        return 1.0;
    }
    if rho >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = rho * (df / (1.0 - rho * rho)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    1.0 - dist.cdf(t)
}

/// Direction of a series across bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trend {
    Rising,
    Falling,
}

/// Whether per-replication series (`series[r][b]`) move in `trend` across
/// bins: no step goes the wrong way by more than `k` SEs of the paired step,
/// and last versus first moves the right way by more than `k` SEs.
pub fn monotone(series: &[Vec<f64>], trend: Trend, k: f64) -> bool {
    let bins = series.first().map_or(0, Vec::len);
    if bins < 2 {
        return false;
    }
    let sign = if trend == Trend::Rising { 1.0 } else { -1.0 };
    let col = |b: usize| -> Vec<f64> { series.iter().map(|r| r[b]).collect() };
    for b in 1..bins {
        let (m, se) = paired_difference(&col(b), &col(b - 1));
        if sign * m < -k * se.max(0.0) || !m.is_finite() {
            return false;
        }
    }
    let (m, se) = paired_difference(&col(bins - 1), &col(0));
    sign * m > k * se
}
