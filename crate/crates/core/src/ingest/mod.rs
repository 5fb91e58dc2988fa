//! Loading external pedigree tables.
//!
//! Structural defects (unparseable ids or numbers, duplicate ids) drop the
//! row. Referential defects (links to missing ids, parents whose generation
//! does not precede the child's) clear the link and keep the row.

use std::collections::HashMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{Population, PopulationParts};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestSchema {
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    /// Token that marks an absent value.
    #[serde(default)]
    pub missing: String,
    /// Abort when more than this fraction of rows is dropped.
    #[serde(default = "default_max_fatal")]
    pub max_fatal_fraction: f64,
}

fn default_delimiter() -> char {
    ','
}

fn default_max_fatal() -> f64 {
    0.5
}

impl Default for IngestSchema {
    fn default() -> Self {
        IngestSchema { delimiter: ',', missing: String::new(), max_fatal_fraction: 0.5 }
    }
}

/// What went wrong while loading, with exact counts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub total_rows: usize,
    pub retained_rows: usize,
    /// Rows dropped for structural defects.
    pub dropped_rows: usize,
    pub duplicate_ids: usize,
    pub unparseable: usize,
    /// Links to ids that are not in the table (cleared).
    pub dangling: usize,
    pub dangling_father: usize,
    pub dangling_mother: usize,
    pub dangling_spouse: usize,
    /// Parent links where the child's generation is not the parent's plus one (cleared).
    pub generation_inconsistent: usize,
    /// Rows whose surname differs from the father's.
    pub surname_violations: usize,
    /// First few problems, for humans.
    pub messages: Vec<String>,
}

impl ValidationReport {
    const MAX_MESSAGES: usize = 20;

    fn note(&mut self, msg: impl FnOnce() -> String) {
        if self.messages.len() < Self::MAX_MESSAGES {
            self.messages.push(msg());
        }
    }

    pub fn is_clean(&self) -> bool {
        self.dropped_rows == 0
            && self.dangling == 0
            && self.generation_inconsistent == 0
            && self.surname_violations == 0
    }
}

#[derive(Clone, Copy)]
enum Column {
    Id,
    Generation,
    Father,
    Mother,
    Spouse,
    Surname,
    Outcome,
    Factor(usize),
    Noise,
    Covariate(usize),
}

struct Layout {
    columns: Vec<Column>,
    factor_count: usize,
    covariates: Vec<String>,
    has_noise: bool,
}

fn layout(header: &csv::StringRecord) -> Result<Layout> {
    let mut columns = Vec::with_capacity(header.len());
    let mut factors = Vec::new();
    let mut covariates = Vec::new();
    let mut has_noise = false;
    let mut seen = std::collections::HashSet::new();
    for name in header.iter() {
        let name = name.trim();
        if !seen.insert(name.to_string()) {
            return Err(Error::InvalidConfig(format!("duplicate column {name:?}")));
        }
        let col = match name {
            "id" => Column::Id,
            "generation" => Column::Generation,
            "father_id" => Column::Father,
            "mother_id" => Column::Mother,
            "spouse_id" => Column::Spouse,
            "surname" => Column::Surname,
            "y" => Column::Outcome,
            "u" => {
                has_noise = true;
                Column::Noise
            }
            _ if name.starts_with("c_") => {
                covariates.push(name.to_string());
                Column::Covariate(covariates.len() - 1)
            }
            _ if name.starts_with("x_") => {
                let k: usize = name[2..]
                    .parse()
                    .ok()
                    .filter(|&k| k >= 1)
                    .ok_or_else(|| Error::InvalidConfig(format!("bad factor column {name:?}")))?;
                factors.push(k);
                Column::Factor(k - 1)
            }
            _ => return Err(Error::InvalidConfig(format!("unexpected column {name:?}"))),
        };
        columns.push(col);
    }
    for required in ["id", "generation", "y"] {
        if !seen.contains(required) {
            return Err(Error::InvalidConfig(format!("missing required column {required:?}")));
        }
    }
    let mut sorted = factors.clone();
    sorted.sort_unstable();
    if sorted.iter().enumerate().any(|(i, &k)| k != i + 1) {
        return Err(Error::InvalidConfig("factor columns must be x_1..x_J".into()));
    }
    Ok(Layout { columns, factor_count: factors.len(), covariates, has_noise })
}

struct RawRow {
    id: u64,
    generation: u32,
    father: Option<u64>,
    mother: Option<u64>,
    spouse: Option<u64>,
    surname: Option<String>,
    y: f64,
    x: Vec<f64>,
    u: Option<f64>,
    c: Vec<f64>,
}

fn parse_row(rec: &csv::StringRecord, lay: &Layout, missing: &str) -> std::result::Result<RawRow, String> {
    let mut row = RawRow {
        id: 0,
        generation: 0,
        father: None,
        mother: None,
        spouse: None,
        surname: None,
        y: f64::NAN,
        x: vec![f64::NAN; lay.factor_count],
        u: None,
        c: vec![f64::NAN; lay.covariates.len()],
    };
    if rec.len() != lay.columns.len() {
        return Err(format!("{} fields, expected {}", rec.len(), lay.columns.len()));
    }
    let absent = |s: &str| s == missing || (missing.is_empty() && s.trim().is_empty());
    let num = |s: &str, what: &str| -> std::result::Result<f64, String> {
        s.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| format!("unparseable {what} {s:?}"))
    };
    let link = |s: &str, what: &str| -> std::result::Result<Option<u64>, String> {
        if absent(s) {
            Ok(None)
        } else {
            s.trim().parse().map(Some).map_err(|_| format!("unparseable {what} {s:?}"))
        }
    };
    let mut has_id = false;
    let mut has_gen = false;
    for (field, col) in rec.iter().zip(&lay.columns) {
        match *col {
            Column::Id => {
                row.id = field.trim().parse().map_err(|_| format!("unparseable id {field:?}"))?;
                has_id = true;
            }
            Column::Generation => {
                row.generation = field.trim().parse().map_err(|_| format!("unparseable generation {field:?}"))?;
                has_gen = true;
            }
            Column::Father => row.father = link(field, "father_id")?,
            Column::Mother => row.mother = link(field, "mother_id")?,
            Column::Spouse => row.spouse = link(field, "spouse_id")?,
            Column::Surname => row.surname = (!absent(field)).then(|| field.to_string()),
            Column::Outcome => row.y = num(field, "y")?,
            Column::Factor(k) => row.x[k] = num(field, "factor")?,
            Column::Noise => row.u = Some(num(field, "u")?),
            Column::Covariate(k) => {
                row.c[k] = if absent(field) { f64::NAN } else { num(field, "covariate")? };
            }
        }
    }
    debug_assert!(has_id && has_gen);
    Ok(row)
}

/// Reads a pedigree CSV from `path`.
pub fn load(path: impl AsRef<Path>, schema: &IngestSchema) -> Result<(Population, ValidationReport)> {
    let file = File::open(path.as_ref())?;
    load_reader(file, schema)
}

/// Reads a pedigree CSV from any reader.
pub fn load_reader<R: Read>(reader: R, schema: &IngestSchema) -> Result<(Population, ValidationReport)> {
    if !schema.delimiter.is_ascii() {
        return Err(Error::InvalidConfig("delimiter must be a single ASCII character".into()));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter as u8)
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let lay = layout(rdr.headers()?)?;
    let mut report = ValidationReport::default();

    let mut rows = Vec::new();
    let mut seen = HashMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        report.total_rows += 1;
        match parse_row(&rec, &lay, &schema.missing) {
            Ok(r) => {
                if seen.insert(r.id, ()).is_some() {
                    report.duplicate_ids += 1;
                    report.dropped_rows += 1;
                    report.note(|| format!("row {}: duplicate id {}", line + 2, r.id));
                } else {
                    rows.push(r);
                }
            }
            Err(msg) => {
                report.unparseable += 1;
                report.dropped_rows += 1;
                report.note(|| format!("row {}: {msg}", line + 2));
            }
        }
    }
    report.retained_rows = rows.len();
    if report.total_rows > 0 && report.dropped_rows as f64 > schema.max_fatal_fraction * report.total_rows as f64 {
        return Err(Error::IngestAborted {
            fatal: report.dropped_rows,
            total: report.total_rows,
            report: Box::new(report),
        });
    }

    let index: HashMap<u64, u32> = rows.iter().enumerate().map(|(i, r)| (r.id, i as u32)).collect();
    let n = rows.len();
    let mut parts = PopulationParts {
        factor_count: lay.factor_count,
        ids: Vec::with_capacity(n),
        generation: Vec::with_capacity(n),
        father: Vec::with_capacity(n),
        mother: Vec::with_capacity(n),
        spouse: Vec::with_capacity(n),
        surname: Vec::with_capacity(n),
        surname_tokens: Vec::new(),
        factors: (lay.factor_count > 0).then(|| Vec::with_capacity(n * lay.factor_count)),
        noise: lay.has_noise.then(|| Vec::with_capacity(n)),
        outcome: Vec::with_capacity(n),
        covariates: lay.covariates.iter().map(|c| (c.clone(), Vec::with_capacity(n))).collect(),
    };
    let mut tokens = HashMap::<String, u32>::new();
    for r in &rows {
        parts.ids.push(r.id);
        parts.generation.push(r.generation);
        parts.outcome.push(r.y);
        if let Some(f) = parts.factors.as_mut() {
            f.extend_from_slice(&r.x);
        }
        if let Some(u) = parts.noise.as_mut() {
            u.push(r.u.unwrap_or(f64::NAN));
        }
        for (name, v) in lay.covariates.iter().zip(&r.c) {
            parts.covariates.get_mut(name).expect("declared").push(*v);
        }
        parts.surname.push(r.surname.as_ref().map(|s| {
            let next = tokens.len() as u32;
            *tokens.entry(s.clone()).or_insert_with(|| {
                parts.surname_tokens.push(s.clone());
                next
            })
        }));
    }

    for r in &rows {
        let mut resolve = |target: Option<u64>, kind: &str, counter: fn(&mut ValidationReport) -> &mut usize| {
            let t = target?;
            match index.get(&t) {
                Some(&k) => Some(k),
                None => {
                    report.dangling += 1;
                    *counter(&mut report) += 1;
                    report.note(|| format!("id {}: dangling {kind} {t}", r.id));
                    None
                }
            }
        };
        let father = resolve(r.father, "father_id", |r| &mut r.dangling_father);
        let mother = resolve(r.mother, "mother_id", |r| &mut r.dangling_mother);
        let spouse = resolve(r.spouse, "spouse_id", |r| &mut r.dangling_spouse);
        let mut check_gen = |p: Option<u32>, kind: &str| {
            let p = p?;
            if rows[p as usize].generation + 1 != r.generation {
                report.generation_inconsistent += 1;
                report.note(|| format!("id {}: {kind} generation is not one above", r.id));
                None
            } else {
                Some(p)
            }
        };
        let father = check_gen(father, "father");
        let mother = check_gen(mother, "mother");
        if let (Some(f), Some(s)) = (father, &r.surname) {
            if rows[f as usize].surname.as_ref().is_some_and(|fs| fs != s) {
                report.surname_violations += 1;
                report.note(|| format!("id {}: surname differs from father's", r.id));
            }
        }
        parts.father.push(father);
        parts.mother.push(mother);
        parts.spouse.push(spouse);
    }
    Ok((Population::from_parts(parts)?, report))
}

/// Quantile bins of a covariate.
#[derive(Debug, Clone, PartialEq)]
pub struct InstrumentCategories {
    /// Category per row, `None` where the covariate is missing.
    pub categories: Vec<Option<u32>>,
    /// Interior cut points; bins are left-closed.
    pub cut_points: Vec<f64>,
    pub bins: u32,
}

/// Cuts a covariate into `bins` quantile categories labelled `0..bins`.
pub fn derive_instrument(pop: &Population, covariate: &str, bins: u32) -> Result<InstrumentCategories> {
    let values = pop
        .covariate(covariate)
        .ok_or_else(|| Error::InvalidConfig(format!("covariate {covariate:?} not present")))?;
    bin_values(values, bins)
}

/// Quantile binning of raw values (NaN = missing).
pub fn bin_values(values: &[f64], bins: u32) -> Result<InstrumentCategories> {
    if bins < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 bins, got {bins}")));
    }
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() < bins as usize {
        return Err(Error::NoVariation(format!(
            "{} distinct values for {bins} bins; use a smaller K",
            distinct.len()
        )));
    }
    let n = sorted.len();
    let mut cut_points: Vec<f64> = (1..bins).map(|k| sorted[k as usize * n / bins as usize]).collect();
    cut_points.dedup();
    if cut_points.len() + 1 < bins as usize || cut_points[0] <= sorted[0] {
        return Err(Error::NoVariation(format!("too many ties for {bins} quantile bins; use a smaller K")));
    }
    let categories = values
        .iter()
        .map(|&v| (!v.is_nan()).then(|| cut_points.partition_point(|&c| c <= v) as u32))
        .collect();
    Ok(InstrumentCategories { categories, cut_points, bins })
}
