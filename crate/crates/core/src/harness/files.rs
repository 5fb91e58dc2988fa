use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::Scenario;
use super::run::{estimate_population, replication_seed, simulate_replication, Cell};
use crate::error::{Error, Result};
use crate::ingest::{self, ValidationReport};
use crate::sim::Population;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub replication: u32,
    pub seed: u64,
    pub file: String,
    pub rows: usize,
}

/// Written next to simulated populations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub scenario: String,
    pub master_seed: u64,
    /// SHA-256 of the model's JSON serialization.
    pub model_hash: String,
    pub replications: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn population_file(r: u32) -> String {
    format!("population_rep{r}.csv")
}

pub fn model_hash(s: &Scenario) -> Result<String> {
    let text = serde_json::to_string(&s.model)?;
    Ok(Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect())
}

/// Simulates every replication and writes one CSV each plus the manifest.
pub fn write_populations(s: &Scenario, master: u64, dir: &Path) -> Result<Manifest> {
    std::fs::create_dir_all(dir)?;
    let entries: Vec<Result<ManifestEntry>> = (0..s.replications)
        .into_par_iter()
        .map(|r| {
            let pop = simulate_replication(s, master, r)?;
            let file = population_file(r);
            let mut w = BufWriter::new(File::create(dir.join(&file))?);
            pop.write_csv(&mut w)?;
            w.flush()?;
            Ok(ManifestEntry { replication: r, seed: replication_seed(master, r), file, rows: pop.len() })
        })
        .collect();
    let manifest = Manifest {
        scenario: s.name.clone(),
        master_seed: master,
        model_hash: model_hash(s)?,
        replications: entries.into_iter().collect::<Result<_>>()?,
    };
    let mut w = BufWriter::new(File::create(dir.join(MANIFEST_FILE))?);
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(manifest)
}

/// Inputs for estimation: ingest paths when configured, otherwise the
/// populations listed in `dir`'s manifest.
pub fn input_tables(s: &Scenario, master: u64, dir: &Path) -> Result<Vec<(u32, u64, PathBuf)>> {
    if let Some(ing) = &s.ingest {
        return Ok(ing
            .paths
            .iter()
            .enumerate()
            .map(|(k, p)| (k as u32, replication_seed(master, k as u32), p.clone()))
            .collect());
    }
    let f = File::open(dir.join(MANIFEST_FILE))?;
    let manifest: Manifest = serde_json::from_reader(BufReader::new(f))?;
    Ok(manifest.replications.into_iter().map(|e| (e.replication, e.seed, dir.join(e.file))).collect())
}

/// Loads each input table and runs the estimators on it.
pub fn estimate_tables(s: &Scenario, master: u64, dir: &Path) -> Result<(Vec<Cell>, Vec<ValidationReport>)> {
    let inputs = input_tables(s, master, dir)?;
    for (_, _, p) in &inputs {
        if !p.exists() {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("missing input {}", p.display()),
            )));
        }
    }
    let schema = s.ingest.as_ref().map(|i| i.schema.clone()).unwrap_or_default();
    let per: Vec<Result<(Vec<Cell>, ValidationReport)>> = inputs
        .par_iter()
        .map(|(r, seed, p)| {
            let (pop, report): (Population, ValidationReport) = ingest::load(p, &schema)?;
            Ok((estimate_population(s, &pop, *r, *seed), report))
        })
        .collect();
    let mut cells = Vec::new();
    let mut reports = Vec::new();
    for x in per {
        let (c, v) = x?;
        cells.extend(c);
        reports.push(v);
    }
    Ok((cells, reports))
}
