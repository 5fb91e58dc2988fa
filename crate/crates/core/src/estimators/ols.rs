use std::collections::BTreeMap;

use super::{lineage_cluster, ratio_with_se, CovInput, EstimateReport, Estimator, PairedSample, SeMethod};
use crate::error::{Error, Result};
use crate::sim::Population;

/// Slope of child outcome on the regressor with a cluster-robust SE.
pub fn ols_slope(s: &PairedSample, se: SeMethod) -> Result<EstimateReport> {
    let num = CovInput::new(&s.child_outcome, &s.regressor, &s.clusters);
    let den = CovInput::new(&s.regressor, &s.regressor, &s.clusters);
    let (r, se) = ratio_with_se(num, den, se).map_err(|e| match e {
        Error::DivisionByZero(_) => Error::ZeroRegressorVariance,
        e => e,
    })?;
    Ok(EstimateReport::new(Estimator::Ols, r.value, Some(se), s.len()))
}

/// Percentile ranks `(rank − 0.5)/n` within each group, ties at their average rank.
pub fn percentile_ranks(values: &[f64], groups: Option<&[u64]>) -> Vec<f64> {
    let mut by_group = BTreeMap::<u64, Vec<usize>>::new();
    for i in 0..values.len() {
        by_group.entry(groups.map_or(0, |g| g[i])).or_default().push(i);
    }
    let mut out = vec![0.0; values.len()];
    for mut idx in by_group.into_values() {
        idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let n = idx.len() as f64;
        let mut start = 0;
        while start < idx.len() {
            let mut end = start + 1;
            while end < idx.len() && values[idx[end]] == values[idx[start]] {
                end += 1;
            }
            // 1-based ranks start+1..=end share their mean.
            let rank = (start + end + 1) as f64 / 2.0;
            for &i in &idx[start..end] {
                out[i] = (rank - 0.5) / n;
            }
            start = end;
        }
    }
    out
}

/// Rank-rank slope; ranks are taken within `groups` when given.
pub fn rank_slope(s: &PairedSample, groups: Option<&[u64]>, se: SeMethod) -> Result<EstimateReport> {
    if groups.is_some_and(|g| g.len() != s.len()) {
        return Err(Error::InvalidSample("group keys differ in length".into()));
    }
    let ranked = PairedSample {
        child_outcome: percentile_ranks(&s.child_outcome, groups),
        regressor: percentile_ranks(&s.regressor, groups),
        ids: s.ids.clone(),
        clusters: s.clusters.clone(),
    };
    let mut r = ols_slope(&ranked, se)?;
    r.estimator = Estimator::RankSlope;
    Ok(r)
}

/// Members of `generation` with a recorded father, paired with the father's outcome.
pub fn parent_child_sample(pop: &Population, generation: u32) -> Result<PairedSample> {
    if generation == 0 || generation >= pop.generation_count() {
        return Err(Error::InvalidRelation(format!("no parent generation for generation {generation}")));
    }
    let (mut y, mut x, mut ids, mut cl) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for &i in pop.generation(generation) {
        if let Some(f) = pop.father(i) {
            y.push(pop.outcome(i));
            x.push(pop.outcome(f));
            ids.push(pop.id(i));
            cl.push(lineage_cluster(pop, i));
        }
    }
    PairedSample::with_clusters(y, x, ids, cl)
}
