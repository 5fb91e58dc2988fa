//! Pedigree simulation.
//!
//! Generation 0 is drawn from the stationary factor distribution with one
//! surname per founder. Each later generation is built family by family from
//! counter-based streams, so the result does not depend on how many threads
//! run the families.

mod population;

pub use population::{Individual, Population, PopulationParts, Relation};

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{Dynamics, LineageMode, TransmissionModel};
use crate::rng::{stream, Purpose};

pub const DEFAULT_POPULATION_CAP: u64 = 100_000_000;

/// Families handled per parallel work item.
const FAMILY_CHUNK: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OffspringDistribution {
    #[default]
    Poisson,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub founder_count: u64,
    pub generations: u32,
    pub mean_offspring: f64,
    #[serde(default)]
    pub offspring_distribution: OffspringDistribution,
    #[serde(default)]
    pub seed: u64,
    /// Per-transition means overriding `mean_offspring`; entry `t−1` is used
    /// for the sons of generation `t−1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offspring_schedule: Option<Vec<f64>>,
    #[serde(default = "default_cap")]
    pub population_cap: u64,
}

fn default_cap() -> u64 {
    DEFAULT_POPULATION_CAP
}

impl SimConfig {
    pub fn new(founder_count: u64, generations: u32, mean_offspring: f64, seed: u64) -> Self {
        SimConfig {
            founder_count,
            generations,
            mean_offspring,
            offspring_distribution: OffspringDistribution::Poisson,
            seed,
            offspring_schedule: None,
            population_cap: DEFAULT_POPULATION_CAP,
        }
    }

    pub fn fixed(mut self) -> Self {
        self.offspring_distribution = OffspringDistribution::Fixed;
        self
    }

    pub fn with_schedule(mut self, schedule: &[f64]) -> Self {
        self.offspring_schedule = Some(schedule.to_vec());
        self
    }

    /// Mean number of sons per father of generation `t − 1`.
    pub fn mean_at(&self, t: u32) -> f64 {
        self.offspring_schedule.as_ref().map_or(self.mean_offspring, |s| s[t as usize - 1])
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.founder_count == 0 {
            return bad("founder_count must be at least 1".into());
        }
        if self.generations < 2 {
            return bad("generations must be at least 2".into());
        }
        if let Some(s) = &self.offspring_schedule {
            if s.len() != self.generations as usize - 1 {
                return bad(format!(
                    "offspring_schedule needs {} entries, got {}",
                    self.generations - 1,
                    s.len()
                ));
            }
        }
        for t in 1..self.generations {
            let m = self.mean_at(t);
            if !(m.is_finite() && m > 0.0) {
                return bad(format!("mean offspring {m} must be positive"));
            }
            if self.offspring_distribution == OffspringDistribution::Fixed && m.fract() != 0.0 {
                return bad(format!("fixed offspring needs an integer mean, got {m}"));
            }
        }
        Ok(())
    }

    /// Expected number of rows, counting synthesized spouses and in-laws.
    pub fn expected_size(&self, mode: LineageMode) -> f64 {
        let mut lineage = self.founder_count as f64;
        let mut total = lineage;
        for t in 1..self.generations {
            lineage *= self.mean_at(t);
            total += lineage;
        }
        match mode {
            LineageMode::SingleParent => total,
            LineageMode::TwoParent => 3.0 * total - self.founder_count as f64,
        }
    }
}

/// Simulated rows of one family (or of one founder).
#[derive(Default)]
struct Batch {
    counts: Vec<u32>,
    child_x: Vec<f64>,
    child_u: Vec<f64>,
    spouse_x: Vec<f64>,
    spouse_u: Vec<f64>,
    in_law_x: Vec<f64>,
    in_law_u: Vec<f64>,
}

struct Ctx<'a> {
    model: &'a TransmissionModel,
    dyn_: &'a Dynamics,
    seed: u64,
    j: usize,
    sd_u: f64,
    two_parent: bool,
}

impl Ctx<'_> {
    fn normals(&self, rng: &mut ChaCha8Rng, z: &mut [f64]) {
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
    }

    fn shock(&self, rng: &mut ChaCha8Rng, l: &nalgebra::DMatrix<f64>, z: &mut [f64], out: &mut [f64]) {
        self.normals(rng, z);
        linalg::lower_mul(l, z, out);
    }

    fn noise(&self, rng: &mut ChaCha8Rng) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.sd_u * z
    }

    /// Spouse of an individual with factors `x`, plus the spouse's father when `with_in_law`.
    fn partner(&self, rng: &mut ChaCha8Rng, x: &[f64], with_in_law: bool, b: &mut Batch, z: &mut [f64], e: &mut [f64]) {
        self.shock(rng, &self.dyn_.spouse_chol, z, e);
        let start = b.spouse_x.len();
        for k in 0..self.j {
            b.spouse_x.push(self.model.assortative[k] * x[k] + e[k]);
        }
        b.spouse_u.push(self.noise(rng));
        if with_in_law {
            self.shock(rng, &self.dyn_.in_law_chol, z, e);
            let xs = &b.spouse_x[start..start + self.j];
            for r in 0..self.j {
                let mut v = e[r];
                for c in 0..self.j {
                    v += self.dyn_.in_law_map[(r, c)] * xs[c];
                }
                b.in_law_x.push(v);
            }
            b.in_law_u.push(self.noise(rng));
        }
    }

    fn founder(&self, f: u64, b: &mut Batch) {
        let mut rng = stream(self.seed, Purpose::Founder, 0, f);
        let (mut z, mut x) = (vec![0.0; self.j], vec![0.0; self.j]);
        self.shock(&mut rng, &self.dyn_.factor_chol, &mut z, &mut x);
        b.child_x.extend_from_slice(&x);
        b.child_u.push(self.noise(&mut rng));
        if self.two_parent {
            let mut e = vec![0.0; self.j];
            self.partner(&mut rng, &x, false, b, &mut z, &mut e);
        }
    }

    fn family(&self, t: u32, f: u64, count: u32, father_x: &[f64], mother_x: Option<&[f64]>, b: &mut Batch) {
        let mut rng = stream(self.seed, Purpose::Family, t, f);
        let j = self.j;
        let (mut z, mut e, mut fam) = (vec![0.0; j], vec![0.0; j], vec![0.0; j]);
        let mut base = vec![0.0; j];
        match mother_x {
            Some(m) => {
                self.shock(&mut rng, &self.dyn_.family_chol, &mut z, &mut fam);
                for k in 0..j {
                    base[k] = self.dyn_.transmission[k] * 0.5 * (father_x[k] + m[k]) + fam[k];
                }
            }
            None => {
                for k in 0..j {
                    base[k] = self.dyn_.transmission[k] * father_x[k];
                }
            }
        }
        let innov = if self.two_parent { &self.dyn_.individual_chol } else { &self.dyn_.innovation_chol };
        let mut x = vec![0.0; j];
        for _ in 0..count {
            self.shock(&mut rng, innov, &mut z, &mut e);
            for k in 0..j {
                x[k] = base[k] + e[k];
            }
            b.child_x.extend_from_slice(&x);
            b.child_u.push(self.noise(&mut rng));
            if self.two_parent {
                self.partner(&mut rng, &x, true, b, &mut z, &mut e);
            }
        }
    }
}

fn offspring_count(seed: u64, t: u32, f: u64, mean: f64, dist: OffspringDistribution) -> u32 {
    match dist {
        OffspringDistribution::Fixed => mean as u32,
        OffspringDistribution::Poisson => {
            let mut rng = stream(seed, Purpose::Offspring, t, f);
            Poisson::new(mean).expect("positive mean").sample(&mut rng) as u32
        }
    }
}

struct Builder {
    parts: PopulationParts,
    next_id: u64,
}

impl Builder {
    fn push(&mut self, generation: u32, father: Option<u32>, mother: Option<u32>, surname: Option<u32>, x: &[f64], u: f64, model: &TransmissionModel) -> u32 {
        let p = &mut self.parts;
        let row = p.ids.len() as u32;
        p.ids.push(self.next_id);
        self.next_id += 1;
        p.generation.push(generation);
        p.father.push(father);
        p.mother.push(mother);
        p.spouse.push(None);
        p.surname.push(surname);
        p.factors.as_mut().expect("simulated").extend_from_slice(x);
        p.noise.as_mut().expect("simulated").push(u);
        p.outcome.push(model.outcome(x, u));
        row
    }

    fn marry(&mut self, a: u32, b: u32) {
        self.parts.spouse[a as usize] = Some(b);
        self.parts.spouse[b as usize] = Some(a);
    }
}

/// Simulates a pedigree from `model` under `cfg`.
///
/// Rows of each generation are appended as: lineage members (sons carrying
/// the paternal surname) in family order, then in two-parent mode their
/// spouses in the same order, then each spouse's father. Spouses and their
/// fathers carry no surname; the father sits one generation above the spouse.
pub fn simulate(model: &TransmissionModel, cfg: &SimConfig) -> Result<Population> {
    cfg.validate()?;
    let dyn_ = model.dynamics()?;
    let expected = cfg.expected_size(model.lineage_mode);
    if expected > cfg.population_cap as f64 {
        return Err(Error::PopulationCap { expected, cap: cfg.population_cap });
    }
    let j = model.factor_count;
    let two_parent = model.lineage_mode == LineageMode::TwoParent;
    let ctx = Ctx { model, dyn_: &dyn_, seed: cfg.seed, j, sd_u: model.noise_variance.sqrt(), two_parent };

    let capacity = expected.min(cfg.population_cap as f64) as usize;
    let mut b = Builder {
        parts: PopulationParts {
            factor_count: j,
            factors: Some(Vec::with_capacity(capacity * j)),
            noise: Some(Vec::with_capacity(capacity)),
            covariates: BTreeMap::new(),
            ..Default::default()
        },
        next_id: 0,
    };

    // Generation 0.
    let founders: Vec<u64> = (0..cfg.founder_count).collect();
    let batches: Vec<Batch> = founders
        .par_chunks(FAMILY_CHUNK)
        .map(|chunk| {
            let mut batch = Batch::default();
            for &f in chunk {
                ctx.founder(f, &mut batch);
            }
            batch
        })
        .collect();
    let mut lineage = Vec::with_capacity(cfg.founder_count as usize);
    for batch in &batches {
        for (k, x) in batch.child_x.chunks(j).enumerate() {
            let surname = b.parts.surname_tokens.len() as u32;
            b.parts.surname_tokens.push(b.next_id.to_string());
            lineage.push(b.push(0, None, None, Some(surname), x, batch.child_u[k], model));
        }
    }
    if two_parent {
        let mut li = 0;
        for batch in &batches {
            for (k, x) in batch.spouse_x.chunks(j).enumerate() {
                let s = b.push(0, None, None, None, x, batch.spouse_u[k], model);
                b.marry(lineage[li], s);
                li += 1;
            }
        }
    }

    for t in 1..cfg.generations {
        let mean = cfg.mean_at(t);
        let fathers = lineage;
        let counts: Vec<u32> = (0..fathers.len() as u64)
            .into_par_iter()
            .map(|f| offspring_count(cfg.seed, t, f, mean, cfg.offspring_distribution))
            .collect();
        let parts = &b.parts;
        let factors = parts.factors.as_ref().expect("simulated");
        let row_x = |r: u32| &factors[r as usize * j..(r as usize + 1) * j];
        let family_ids: Vec<u64> = (0..fathers.len() as u64).collect();
        let batches: Vec<Batch> = family_ids
            .par_chunks(FAMILY_CHUNK)
            .map(|chunk| {
                let mut batch = Batch::default();
                for &f in chunk {
                    let father = fathers[f as usize];
                    let count = counts[f as usize];
                    batch.counts.push(count);
                    let mother = parts.spouse[father as usize].map(row_x);
                    ctx.family(t, f, count, row_x(father), mother, &mut batch);
                }
                batch
            })
            .collect();

        let mut next = Vec::new();
        let mut fi = 0usize;
        for batch in &batches {
            let mut k = 0usize;
            for &count in &batch.counts {
                let father = fathers[fi];
                let mother = b.parts.spouse[father as usize];
                let surname = b.parts.surname[father as usize];
                for _ in 0..count {
                    let x = &batch.child_x[k * j..(k + 1) * j];
                    next.push(b.push(t, Some(father), mother, surname, x, batch.child_u[k], model));
                    k += 1;
                }
                fi += 1;
            }
        }
        if two_parent {
            let mut spouses = Vec::with_capacity(next.len());
            let mut li = 0usize;
            for batch in &batches {
                for (k, x) in batch.spouse_x.chunks(j).enumerate() {
                    let s = b.push(t, None, None, None, x, batch.spouse_u[k], model);
                    b.marry(next[li], s);
                    spouses.push(s);
                    li += 1;
                }
            }
            let mut si = 0usize;
            for batch in &batches {
                for (k, x) in batch.in_law_x.chunks(j).enumerate() {
                    let p = b.push(t - 1, None, None, None, x, batch.in_law_u[k], model);
                    b.parts.father[spouses[si] as usize] = Some(p);
                    si += 1;
                }
            }
        }
        lineage = next;
    }
    Population::from_parts(b.parts)
}
