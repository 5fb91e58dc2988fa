use std::collections::BTreeMap;

use super::{lineage_cluster, ratio_with_se, CovInput, EstimateReport, Estimator, SeMethod, WEAK_DENOMINATOR_T};
use crate::error::{Error, Result};
use crate::sim::Population;

/// First stage of a TSLS regression.
#[derive(Debug, Clone, Copy)]
pub enum FirstStage<'a> {
    /// Instrument categories; fitted values are category means.
    Categorical(&'a [u32]),
    /// Continuous instrument; fitted values from a linear fit.
    Continuous(&'a [f64]),
}

/// Mean and count of `values` per category.
pub fn category_means(values: &[f64], categories: &[u32]) -> BTreeMap<u32, (f64, usize)> {
    let mut acc = BTreeMap::<u32, (f64, usize)>::new();
    for (v, c) in values.iter().zip(categories) {
        let e = acc.entry(*c).or_default();
        e.0 += v;
        e.1 += 1;
    }
    for e in acc.values_mut() {
        e.0 /= e.1 as f64;
    }
    acc
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
}

fn check_len(n: usize, others: &[usize]) -> Result<()> {
    if others.iter().any(|&m| m != n) {
        return Err(Error::InvalidSample("columns differ in length".into()));
    }
    Ok(())
}

/// Fitted values and first-stage R².
fn first_stage(parent: &[f64], z: FirstStage<'_>) -> Result<(Vec<f64>, f64)> {
    let vx = variance(parent);
    let fitted: Vec<f64> = match z {
        FirstStage::Categorical(cats) => {
            let means = category_means(parent, cats);
            if means.len() < 2 {
                return Err(Error::NoVariation("a single instrument category".into()));
            }
            cats.iter().map(|c| means[c].0).collect()
        }
        FirstStage::Continuous(zs) => {
            let (mz, mx) = (mean(zs), mean(parent));
            let vz = variance(zs);
            if vz == 0.0 {
                return Err(Error::NoVariation("instrument is constant".into()));
            }
            let czx = zs.iter().zip(parent).map(|(z, x)| (z - mz) * (x - mx)).sum::<f64>() / zs.len() as f64;
            let b = czx / vz;
            zs.iter().map(|z| mx + b * (z - mz)).collect()
        }
    };
    let vf = variance(&fitted);
    if vf == 0.0 {
        return Err(Error::NoVariation("fitted values are constant".into()));
    }
    Ok((fitted, if vx > 0.0 { vf / vx } else { f64::NAN }))
}

/// One-sample TSLS of child outcome on parent outcome instrumented by `z`.
pub fn tsls(child: &[f64], parent: &[f64], z: FirstStage<'_>, clusters: &[u64], se: SeMethod) -> Result<EstimateReport> {
    let zl = match z {
        FirstStage::Categorical(c) => c.len(),
        FirstStage::Continuous(c) => c.len(),
    };
    check_len(child.len(), &[parent.len(), zl, clusters.len()])?;
    if child.len() < 3 {
        return Err(Error::InvalidSample("fewer than 3 observations".into()));
    }
    let (fitted, r2) = first_stage(parent, z)?;
    let num = CovInput::new(child, &fitted, clusters);
    let den = CovInput::new(parent, &fitted, clusters);
    let (r, s) = ratio_with_se(num, den, se)?;
    let mut rep = EstimateReport::new(Estimator::Tsls, r.value, Some(s), child.len());
    rep.first_stage_r2 = Some(r2);
    if r.denominator_t.abs() < WEAK_DENOMINATOR_T {
        rep.flags.push("weak_instrument".into());
    }
    Ok(rep)
}

/// Two-sample TSLS: category means of the auxiliary parents predict the
/// parent outcome of the main sample.
pub fn tstsls(
    main_child: &[f64],
    main_z: &[u32],
    aux_parent: &[f64],
    aux_z: &[u32],
    clusters: &[u64],
    se: SeMethod,
) -> Result<EstimateReport> {
    check_len(main_child.len(), &[main_z.len(), clusters.len()])?;
    check_len(aux_parent.len(), &[aux_z.len()])?;
    if main_child.len() < 3 {
        return Err(Error::InvalidSample("fewer than 3 observations".into()));
    }
    let means = category_means(aux_parent, aux_z);
    let mut missing: Vec<u32> = main_z.iter().copied().filter(|c| !means.contains_key(c)).collect();
    missing.sort_unstable();
    missing.dedup();
    if !missing.is_empty() {
        return Err(Error::MissingCategories(missing));
    }
    let (_, r2) = first_stage(aux_parent, FirstStage::Categorical(aux_z))?;
    let fitted: Vec<f64> = main_z.iter().map(|c| means[c].0).collect();
    let num = CovInput::new(main_child, &fitted, clusters);
    let den = CovInput::new(&fitted, &fitted, clusters);
    let (r, s) = ratio_with_se(num, den, se).map_err(|e| match e {
        Error::DivisionByZero(_) => Error::NoVariation("predicted parent outcome is constant".into()),
        e => e,
    })?;
    let mut rep = EstimateReport::new(Estimator::Tstsls, r.value, Some(s), main_child.len());
    rep.first_stage_r2 = Some(r2);
    Ok(rep)
}

/// `Cov(child, grandparent) / Cov(parent, grandparent)`.
pub fn grandparent_iv(
    child: &[f64],
    parent: &[f64],
    grandparent: &[f64],
    clusters: &[u64],
    se: SeMethod,
) -> Result<EstimateReport> {
    check_len(child.len(), &[parent.len(), grandparent.len(), clusters.len()])?;
    let num = CovInput::new(child, grandparent, clusters);
    let den = CovInput::new(parent, grandparent, clusters);
    let (r, s) = ratio_with_se(num, den, se)?;
    let mut rep = EstimateReport::new(Estimator::GrandparentIv, r.value, Some(s), child.len());
    if r.denominator_t.abs() < WEAK_DENOMINATOR_T {
        rep.flags.push("weak_instrument".into());
    }
    Ok(rep)
}

/// Grandparent IV on every member of `generation` with a recorded paternal grandfather.
pub fn grandparent_iv_population(pop: &Population, generation: u32, se: SeMethod) -> Result<EstimateReport> {
    let pairs = pop.kin_index_pairs(crate::sim::Relation::Grandparent, generation)?;
    let mut cols = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (i, g) in pairs {
        let f = pop.father(i).expect("grandparent implies father");
        cols.0.push(pop.outcome(i));
        cols.1.push(pop.outcome(f));
        cols.2.push(pop.outcome(g));
        cols.3.push(lineage_cluster(pop, i));
    }
    grandparent_iv(&cols.0, &cols.1, &cols.2, &cols.3, se)
}
