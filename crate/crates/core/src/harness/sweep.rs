use std::io::Write;

use rayon::prelude::*;

use super::config::Scenario;
use super::run::simulate_replication;
use super::stats::{mean_se, monotone, paired_difference, spearman, spearman_trend_p, Trend};
use crate::error::{Error, Result};
use crate::estimators::{
    decile_cutoffs, member_size_cutoffs, surname_grouping, surname_sample_direct, weight_diagnostic, SurnameOptions,
};
use crate::sim::Population;

/// One (bin, series) point of the sweep output.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub bin: usize,
    pub cutoff: usize,
    pub series: String,
    pub value: f64,
    pub se: f64,
    pub flags: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub points: Vec<SweepPoint>,
    pub cutoffs: Vec<usize>,
    pub weight_cutoffs: Vec<usize>,
    /// Per replication and bin.
    pub grouping: Vec<Vec<f64>>,
    pub direct: Vec<Vec<f64>>,
    pub pooled_direct: Vec<f64>,
    /// Characteristic name and normalized ratios per replication and bin.
    pub weights: Vec<(String, Vec<Vec<f64>>)>,
    pub grouping_trend_p: f64,
    pub grouping_increasing: bool,
    pub direct_flat: bool,
}

/// Per-row characteristic contributions `ρ_j X^j` and the noise term,
/// skipping any that are zero throughout.
pub fn characteristics(pop: &Population, returns: &[f64]) -> Result<Vec<(String, Vec<f64>)>> {
    if !pop.has_factors() {
        return Err(Error::InvalidConfig("weight diagnostic needs factor columns".into()));
    }
    let n = pop.len() as u32;
    let mut out: Vec<(String, Vec<f64>)> = (0..pop.factor_count())
        .map(|j| (format!("x_{}", j + 1), (0..n).map(|i| returns[j] * pop.factors(i).expect("factors")[j]).collect()))
        .collect();
    out.push(("noise".into(), (0..n).map(|i| pop.noise(i).unwrap_or(f64::NAN)).collect()));
    // A characteristic that is identically zero has no weight to diagnose.
    out.retain(|(_, v)| v.iter().any(|&x| x != 0.0));
    Ok(out)
}

struct RepSweep {
    grouping: Vec<f64>,
    direct: Vec<f64>,
    pooled: f64,
    weights: Vec<(String, Vec<f64>)>,
}

fn sweep_one(s: &Scenario, pop: &Population, gen: u32, cutoffs: &[usize], wcut: &[usize]) -> Result<RepSweep> {
    let se = s.se;
    let mut grouping = Vec::new();
    let mut direct = Vec::new();
    for &c in cutoffs {
        let o = SurnameOptions::full(gen).with_size_filter(1, c);
        grouping.push(surname_grouping(pop, &o, se).map_or(f64::NAN, |r| r.value));
        direct.push(surname_sample_direct(pop, &o, se).map_or(f64::NAN, |r| r.value));
    }
    let pooled = surname_sample_direct(pop, &SurnameOptions::full(gen), se)?.value;
    let model = s.model.as_ref().ok_or_else(|| Error::InvalidConfig("sweep needs a model".into()))?;
    let chars = characteristics(pop, &model.returns)?;
    let rows = weight_diagnostic(pop, gen - 1, &chars, wcut)?;
    let weights = chars
        .iter()
        .map(|(name, _)| {
            let v = rows.iter().filter(|r| &r.characteristic == name).map(|r| r.normalized).collect();
            (name.clone(), v)
        })
        .collect();
    Ok(RepSweep { grouping, direct, pooled, weights })
}

/// Surname-size sweep and weight diagnostic across replications.
pub fn run_sweep(s: &Scenario, master: u64) -> Result<SweepOutput> {
    let cfg = s.sweep.clone().unwrap_or_default();
    let first = simulate_replication(s, master, 0)?;
    let gen = cfg.generation.unwrap_or(first.generation_count() - 1);
    if gen < 1 {
        return Err(Error::InvalidConfig("sweep needs a parent generation".into()));
    }
    let cutoffs = match &cfg.cutoffs {
        Some(c) => c.clone(),
        None => {
            let sizes = first.surname_index_groups(gen - 1);
            let mut child_sizes = Vec::new();
            for &i in first.generation(gen) {
                if let (Some(sn), Some(_)) = (first.surname(i), first.father(i)) {
                    child_sizes.push(sizes.get(&sn).map_or(0, Vec::len));
                }
            }
            decile_cutoffs(child_sizes.into_iter().filter(|&x| x > 0).collect())
        }
    };
    let wcut = cfg.weight_cutoffs.clone().unwrap_or_else(|| member_size_cutoffs(&first, gen - 1));
    if cutoffs.len() < 2 || wcut.len() < 2 {
        return Err(Error::TooFewGroups("fewer than 2 size bins".into()));
    }
    let first_sweep = sweep_one(s, &first, gen, &cutoffs, &wcut)?;
    drop(first);
    let rest: Vec<Result<RepSweep>> = (1..s.replications)
        .into_par_iter()
        .map(|r| sweep_one(s, &simulate_replication(s, master, r)?, gen, &cutoffs, &wcut))
        .collect();
    let mut reps = vec![first_sweep];
    for r in rest {
        reps.push(r?);
    }

    let grouping: Vec<Vec<f64>> = reps.iter().map(|r| r.grouping.clone()).collect();
    let direct: Vec<Vec<f64>> = reps.iter().map(|r| r.direct.clone()).collect();
    let pooled_direct: Vec<f64> = reps.iter().map(|r| r.pooled).collect();
    let names: Vec<String> = reps[0].weights.iter().map(|w| w.0.clone()).collect();
    let weights: Vec<(String, Vec<Vec<f64>>)> = names
        .iter()
        .enumerate()
        .map(|(k, n)| (n.clone(), reps.iter().map(|r| r.weights[k].1.clone()).collect()))
        .collect();

    let col = |m: &[Vec<f64>], b: usize| -> Vec<f64> { m.iter().map(|r| r[b]).collect() };
    let gmeans: Vec<f64> = (0..cutoffs.len()).map(|b| mean_se(&col(&grouping, b)).0).collect();
    let xs: Vec<f64> = (0..cutoffs.len()).map(|b| b as f64).collect();
    let rho = spearman(&xs, &gmeans);
    let grouping_trend_p = spearman_trend_p(rho, cutoffs.len());
    let grouping_increasing = grouping_trend_p < 0.01;
    let (pooled_mean, _) = mean_se(&pooled_direct);
    let direct_flat = (0..cutoffs.len()).all(|b| {
        let (m, se) = mean_se(&col(&direct, b));
        (m - pooled_mean).abs() <= 3.0 * se
    });

    let mut points = Vec::new();
    for (b, &c) in cutoffs.iter().enumerate() {
        let (m, se) = mean_se(&col(&grouping, b));
        let flag = format!("spearman_p={grouping_trend_p};{}", if grouping_increasing { "increasing" } else { "not_increasing" });
        points.push(SweepPoint { bin: b, cutoff: c, series: "grouping".into(), value: m, se, flags: flag });
        let (m, se) = mean_se(&col(&direct, b));
        let (d, dse) = paired_difference(&col(&direct, b), &pooled_direct);
        let flag = format!("diff_from_pooled={d};diff_se={dse};{}", if direct_flat { "flat" } else { "not_flat" });
        points.push(SweepPoint { bin: b, cutoff: c, series: "direct".into(), value: m, se, flags: flag });
    }
    for (name, series) in &weights {
        let trend = if monotone(series, Trend::Rising, 3.0) {
            "rising"
        } else if monotone(series, Trend::Falling, 3.0) {
            "falling"
        } else {
            "none"
        };
        for (b, &c) in wcut.iter().enumerate() {
            let (m, se) = mean_se(&col(series, b));
            points.push(SweepPoint {
                bin: b,
                cutoff: c,
                series: format!("weight:{name}"),
                value: m,
                se,
                flags: trend.into(),
            });
        }
    }
    Ok(SweepOutput {
        points,
        cutoffs,
        weight_cutoffs: wcut,
        grouping,
        direct,
        pooled_direct,
        weights,
        grouping_trend_p,
        grouping_increasing,
        direct_flat,
    })
}

pub fn write_sweep<W: Write>(writer: W, out: &SweepOutput) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["bin", "cutoff", "series", "value", "se", "flags"])?;
    for p in &out.points {
        w.write_record([
            p.bin.to_string(),
            p.cutoff.to_string(),
            p.series.clone(),
            p.value.to_string(),
            p.se.to_string(),
            p.flags.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
