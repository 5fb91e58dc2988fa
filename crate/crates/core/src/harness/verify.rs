use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;

use super::config::{Scenario, VerifyConfig};
use super::run::{estimate_population, replication_seed, simulate_replication, Cell};
use super::stats::{mean_se, paired_difference};
use crate::error::Result;

/// Monte Carlo summary of one (estimator, regime, bin) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationRow {
    pub scenario: String,
    pub estimator: String,
    pub regime: String,
    pub bin: String,
    /// Mean analytic value across replications (it varies only when it
    /// depends on the realized pedigree or auxiliary sample).
    pub analytic: Option<f64>,
    pub mc_mean: f64,
    /// SE of `mc_mean − analytic` across replications.
    pub mc_se: f64,
    pub z: Option<f64>,
    pub pass: Option<bool>,
    pub replications: usize,
    pub errors: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verification {
    pub rows: Vec<VerificationRow>,
    pub cells: usize,
    pub failed: usize,
    pub passed: bool,
}

/// Simulates and estimates every replication. Replications run in parallel
/// and are returned in index order.
pub fn run_replications(s: &Scenario, master: u64) -> Result<Vec<Cell>> {
    let per: Vec<Result<Vec<Cell>>> = (0..s.replications)
        .into_par_iter()
        .map(|r| {
            let pop = simulate_replication(s, master, r)?;
            Ok(estimate_population(s, &pop, r, replication_seed(master, r)))
        })
        .collect();
    let mut cells = Vec::new();
    for c in per {
        cells.extend(c?);
    }
    Ok(cells)
}

/// Groups cells across replications and compares them with their analytic values.
pub fn aggregate(cells: &[Cell], cfg: &VerifyConfig) -> Verification {
    let mut order: Vec<(String, String, String)> = Vec::new();
    let mut groups: HashMap<(String, String, String), Vec<&Cell>> = HashMap::new();
    for c in cells {
        let k = c.key();
        if !groups.contains_key(&k) {
            order.push(k.clone());
        }
        groups.entry(k).or_default().push(c);
    }
    let mut rows = Vec::new();
    for key in order {
        let cs = &groups[&key];
        let errors = cs.iter().filter(|c| c.is_error()).count();
        let ok: Vec<&&Cell> = cs.iter().filter(|c| !c.is_error()).collect();
        let est: Vec<f64> = ok.iter().map(|c| c.report.value).collect();
        let (mc_mean, est_se) = mean_se(&est);
        let with_analytic = ok.iter().all(|c| c.analytic.is_some()) && !ok.is_empty();
        let (analytic, mc_se, z) = if with_analytic {
            let a: Vec<f64> = ok.iter().map(|c| c.analytic.expect("checked")).collect();
            let (am, _) = mean_se(&a);
            let (dm, mut dse) = paired_difference(&est, &a);
            if ok.len() < 2 {
                dse = ok[0].report.se_or_nan();
            }
            (Some(am), dse, Some(dm / dse))
        } else {
            let se = if ok.len() < 2 { ok.first().map_or(f64::NAN, |c| c.report.se_or_nan()) } else { est_se };
            (None, se, None)
        };
        let pass = if errors > 0 {
            Some(false)
        } else {
            z.map(|z| z.is_finite() && z.abs() <= cfg.z_threshold || z.is_nan() && mc_se == 0.0)
        };
        rows.push(VerificationRow {
            scenario: cs[0].report.scenario.clone(),
            estimator: key.0,
            regime: key.1,
            bin: key.2,
            analytic,
            mc_mean,
            mc_se,
            z,
            pass,
            replications: cs.len(),
            errors,
        });
    }
    let checked = rows.iter().filter(|r| r.pass.is_some()).count();
    let failed = rows.iter().filter(|r| r.pass == Some(false)).count();
    let passed = failed as f64 <= cfg.max_fail_fraction * checked as f64;
    Verification { rows, cells: checked, failed, passed }
}

/// Full verification of a scenario.
pub fn verify(s: &Scenario, master: u64) -> Result<(Verification, Vec<Cell>)> {
    let cells = run_replications(s, master)?;
    Ok((aggregate(&cells, &s.verify), cells))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const VERIFICATION_HEADER: [&str; 12] = [
    "scenario", "estimator", "regime", "bin", "analytic", "mc_mean", "mc_se", "z", "pass", "replications", "errors",
    "checked",
];

pub fn write_verification<W: Write>(writer: W, v: &Verification) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(VERIFICATION_HEADER)?;
    for r in &v.rows {
        w.write_record([
            r.scenario.clone(),
            r.estimator.clone(),
            r.regime.clone(),
            r.bin.clone(),
            opt(r.analytic),
            r.mc_mean.to_string(),
            r.mc_se.to_string(),
            opt(r.z),
            r.pass.map(|p| if p { "pass" } else { "fail" }.to_string()).unwrap_or_default(),
            r.replications.to_string(),
            r.errors.to_string(),
            r.pass.is_some().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
