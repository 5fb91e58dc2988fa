use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kin relation between an ego and a relative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// Ego and father.
    Parent,
    /// Ego and father's father.
    Grandparent,
    Spouse,
    /// Children of the same father.
    Sibling,
    /// Ego and a brother or sister of the father.
    UncleAunt,
    /// Children of two siblings on the father's side.
    Cousin,
    /// Ego and the spouse's father.
    ParentInLaw,
}

impl Relation {
    pub const ALL: [Relation; 7] = [
        Relation::Parent,
        Relation::Grandparent,
        Relation::Spouse,
        Relation::Sibling,
        Relation::UncleAunt,
        Relation::Cousin,
        Relation::ParentInLaw,
    ];

    /// Unordered relations are emitted once per pair.
    pub fn is_symmetric(self) -> bool {
        matches!(self, Relation::Spouse | Relation::Sibling | Relation::Cousin)
    }

    fn min_generation(self) -> u32 {
        match self {
            Relation::Parent | Relation::UncleAunt | Relation::Cousin | Relation::ParentInLaw => 1,
            Relation::Grandparent => 2,
            Relation::Spouse | Relation::Sibling => 0,
        }
    }

    pub fn parse(name: &str) -> Result<Relation> {
        serde_json::from_value(serde_json::Value::String(name.to_string()))
            .map_err(|_| Error::InvalidRelation(format!("unknown relation {name:?}")))
    }
}

/// Everything needed to assemble a [`Population`]; links are row indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PopulationParts {
    pub factor_count: usize,
    pub ids: Vec<u64>,
    pub generation: Vec<u32>,
    pub father: Vec<Option<u32>>,
    pub mother: Vec<Option<u32>>,
    pub spouse: Vec<Option<u32>>,
    pub surname: Vec<Option<u32>>,
    pub surname_tokens: Vec<String>,
    /// Row-major `n × factor_count`, absent for ingested data without factor columns.
    pub factors: Option<Vec<f64>>,
    pub noise: Option<Vec<f64>>,
    pub outcome: Vec<f64>,
    pub covariates: BTreeMap<String, Vec<f64>>,
}

/// Read-only view of one row.
#[derive(Debug, Clone, PartialEq)]
pub struct Individual<'a> {
    pub id: u64,
    pub generation: u32,
    pub surname: Option<&'a str>,
    pub father_id: Option<u64>,
    pub mother_id: Option<u64>,
    pub spouse_id: Option<u64>,
    pub factors: Option<&'a [f64]>,
    pub noise: Option<f64>,
    pub outcome: f64,
}

/// An immutable multigenerational pedigree stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    parts: PopulationParts,
    by_generation: Vec<Vec<u32>>,
    child_offsets: Vec<u32>,
    children: Vec<u32>,
    id_index: HashMap<u64, u32>,
}

impl Population {
    /// Builds the kin indexes. Links must point at existing rows.
    pub fn from_parts(parts: PopulationParts) -> Result<Population> {
        let n = parts.ids.len();
        let same = |len: usize, what: &str| {
            if len == n {
                Ok(())
            } else {
                Err(Error::InvalidSample(format!("{what} has {len} rows, expected {n}")))
            }
        };
        same(parts.generation.len(), "generation")?;
        same(parts.father.len(), "father")?;
        same(parts.mother.len(), "mother")?;
        same(parts.spouse.len(), "spouse")?;
        same(parts.surname.len(), "surname")?;
        same(parts.outcome.len(), "outcome")?;
        if let Some(f) = &parts.factors {
            if f.len() != n * parts.factor_count {
                return Err(Error::InvalidSample(format!(
                    "factors have {} values, expected {n} × {}",
                    f.len(),
                    parts.factor_count
                )));
            }
        }
        if let Some(u) = &parts.noise {
            same(u.len(), "noise")?;
        }
        for (name, c) in &parts.covariates {
            same(c.len(), name)?;
        }
        if n > u32::MAX as usize {
            return Err(Error::InvalidSample("too many rows".into()));
        }
        let mut id_index = HashMap::with_capacity(n);
        for (i, &id) in parts.ids.iter().enumerate() {
            if id_index.insert(id, i as u32).is_some() {
                return Err(Error::InvalidSample(format!("duplicate id {id}")));
            }
        }
        let links = [&parts.father, &parts.mother, &parts.spouse];
        if links.iter().any(|l| l.iter().flatten().any(|&k| k as usize >= n)) {
            return Err(Error::InvalidSample("link points outside the table".into()));
        }
        if parts.surname.iter().flatten().any(|&s| s as usize >= parts.surname_tokens.len()) {
            return Err(Error::InvalidSample("surname index outside the token table".into()));
        }

        let gens = parts.generation.iter().copied().max().map_or(0, |g| g as usize + 1);
        let mut by_generation = vec![Vec::new(); gens];
        for (i, &g) in parts.generation.iter().enumerate() {
            by_generation[g as usize].push(i as u32);
        }

        let mut child_offsets = vec![0u32; n + 1];
        for f in parts.father.iter().flatten() {
            child_offsets[*f as usize + 1] += 1;
        }
        for i in 0..n {
            child_offsets[i + 1] += child_offsets[i];
        }
        let mut fill = child_offsets.clone();
        let mut children = vec![0u32; child_offsets[n] as usize];
        for (i, f) in parts.father.iter().enumerate() {
            if let Some(f) = f {
                let slot = &mut fill[*f as usize];
                children[*slot as usize] = i as u32;
                *slot += 1;
            }
        }
        Ok(Population { parts, by_generation, child_offsets, children, id_index })
    }

    pub fn parts(&self) -> &PopulationParts {
        &self.parts
    }

    pub fn into_parts(self) -> PopulationParts {
        self.parts
    }

    pub fn len(&self) -> usize {
        self.parts.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.ids.is_empty()
    }

    pub fn factor_count(&self) -> usize {
        self.parts.factor_count
    }

    pub fn generation_count(&self) -> u32 {
        self.by_generation.len() as u32
    }

    /// Row indices of a generation in row order.
    pub fn generation(&self, g: u32) -> &[u32] {
        self.by_generation.get(g as usize).map_or(&[], Vec::as_slice)
    }

    pub fn index_of(&self, id: u64) -> Option<u32> {
        self.id_index.get(&id).copied()
    }

    pub fn id(&self, i: u32) -> u64 {
        self.parts.ids[i as usize]
    }

    pub fn generation_of(&self, i: u32) -> u32 {
        self.parts.generation[i as usize]
    }

    pub fn father(&self, i: u32) -> Option<u32> {
        self.parts.father[i as usize]
    }

    pub fn mother(&self, i: u32) -> Option<u32> {
        self.parts.mother[i as usize]
    }

    pub fn spouse(&self, i: u32) -> Option<u32> {
        self.parts.spouse[i as usize]
    }

    pub fn surname(&self, i: u32) -> Option<u32> {
        self.parts.surname[i as usize]
    }

    pub fn surname_count(&self) -> usize {
        self.parts.surname_tokens.len()
    }

    pub fn surname_token(&self, s: u32) -> &str {
        &self.parts.surname_tokens[s as usize]
    }

    pub fn outcome(&self, i: u32) -> f64 {
        self.parts.outcome[i as usize]
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.parts.outcome
    }

    pub fn has_factors(&self) -> bool {
        self.parts.factors.is_some()
    }

    pub fn factors(&self, i: u32) -> Option<&[f64]> {
        let j = self.parts.factor_count;
        self.parts.factors.as_ref().map(|f| &f[i as usize * j..(i as usize + 1) * j])
    }

    pub fn noise(&self, i: u32) -> Option<f64> {
        self.parts.noise.as_ref().map(|u| u[i as usize])
    }

    pub fn covariate(&self, name: &str) -> Option<&[f64]> {
        self.parts.covariates.get(name).map(Vec::as_slice)
    }

    /// Children linked through their father.
    pub fn children(&self, i: u32) -> &[u32] {
        let a = self.child_offsets[i as usize] as usize;
        let b = self.child_offsets[i as usize + 1] as usize;
        &self.children[a..b]
    }

    pub fn individual(&self, i: u32) -> Individual<'_> {
        let p = &self.parts;
        let k = i as usize;
        Individual {
            id: p.ids[k],
            generation: p.generation[k],
            surname: p.surname[k].map(|s| p.surname_tokens[s as usize].as_str()),
            father_id: p.father[k].map(|f| p.ids[f as usize]),
            mother_id: p.mother[k].map(|f| p.ids[f as usize]),
            spouse_id: p.spouse[k].map(|f| p.ids[f as usize]),
            factors: self.factors(i),
            noise: self.noise(i),
            outcome: p.outcome[k],
        }
    }

    /// Father's father, else father, else self: the family cluster used for
    /// standard errors of kin-based estimators. A spouse without a surname
    /// married into a surnamed line is clustered with that line.
    pub fn family_cluster(&self, i: u32) -> u64 {
        let i = match self.spouse(i) {
            Some(s) if self.surname(i).is_none() && self.surname(s).is_some() => s,
            _ => i,
        };
        match self.father(i) {
            Some(f) => self.id(self.father(f).unwrap_or(f)),
            None => self.id(i),
        }
    }

    /// Outcomes standardized to mean 0, variance 1 within each generation.
    pub fn standardized_outcomes(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for rows in &self.by_generation {
            if rows.is_empty() {
                continue;
            }
            let n = rows.len() as f64;
            let mean = rows.iter().map(|&i| self.outcome(i)).sum::<f64>() / n;
            let var = rows.iter().map(|&i| (self.outcome(i) - mean).powi(2)).sum::<f64>() / n;
            let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
            for &i in rows {
                out[i as usize] = (self.outcome(i) - mean) / sd;
            }
        }
        out
    }

    /// Kin pairs `(ego, relative)` as row indices for egos in `generation`.
    pub fn kin_index_pairs(&self, relation: Relation, generation: u32) -> Result<Vec<(u32, u32)>> {
        if generation < relation.min_generation() {
            return Err(Error::InvalidRelation(format!(
                "{relation:?} needs generation ≥ {}, got {generation}",
                relation.min_generation()
            )));
        }
        if generation >= self.generation_count() {
            return Err(Error::InvalidRelation(format!(
                "generation {generation} not in population ({} generations)",
                self.generation_count()
            )));
        }
        let mut out = Vec::new();
        let ego_rows = self.generation(generation);
        match relation {
            Relation::Parent => {
                out.extend(ego_rows.iter().filter_map(|&i| self.father(i).map(|f| (i, f))));
            }
            Relation::Grandparent => {
                out.extend(ego_rows.iter().filter_map(|&i| {
                    let g = self.father(self.father(i)?)?;
                    Some((i, g))
                }));
            }
            Relation::Spouse => {
                for &i in ego_rows {
                    if let Some(s) = self.spouse(i) {
                        // Each couple once: from the partner with the lower row, or
                        // from the only side that records the link.
                        if i < s || self.spouse(s) != Some(i) {
                            out.push((i, s));
                        }
                    }
                }
            }
            Relation::Sibling => {
                for &i in ego_rows {
                    if let Some(f) = self.father(i) {
                        out.extend(self.children(f).iter().filter(|&&k| k > i).map(|&k| (i, k)));
                    }
                }
            }
            Relation::UncleAunt => {
                for &i in ego_rows {
                    let Some(f) = self.father(i) else { continue };
                    let Some(g) = self.father(f) else { continue };
                    out.extend(self.children(g).iter().filter(|&&u| u != f).map(|&u| (i, u)));
                }
            }
            Relation::Cousin => {
                for &i in ego_rows {
                    let Some(f) = self.father(i) else { continue };
                    let Some(g) = self.father(f) else { continue };
                    for &u in self.children(g).iter().filter(|&&u| u != f) {
                        out.extend(self.children(u).iter().filter(|&&k| k > i).map(|&k| (i, k)));
                    }
                }
            }
            Relation::ParentInLaw => {
                out.extend(ego_rows.iter().filter_map(|&i| {
                    let p = self.father(self.spouse(i)?)?;
                    Some((i, p))
                }));
            }
        }
        Ok(out)
    }

    /// Kin pairs as ids.
    pub fn kin_pairs(&self, relation: Relation, generation: u32) -> Result<Vec<(u64, u64)>> {
        Ok(self
            .kin_index_pairs(relation, generation)?
            .into_iter()
            .map(|(a, b)| (self.id(a), self.id(b)))
            .collect())
    }

    /// Kin pairs over every generation where the relation is defined.
    pub fn kin_pairs_all(&self, relation: Relation) -> Vec<(u64, u64)> {
        (relation.min_generation()..self.generation_count())
            .flat_map(|g| self.kin_pairs(relation, g).unwrap_or_default())
            .collect()
    }

    /// Surname → member ids for one generation. Rows without a surname are
    /// not grouped.
    pub fn surname_groups(&self, generation: u32) -> BTreeMap<u32, Vec<u64>> {
        let mut out = BTreeMap::<u32, Vec<u64>>::new();
        for &i in self.generation(generation) {
            if let Some(s) = self.surname(i) {
                out.entry(s).or_default().push(self.id(i));
            }
        }
        out
    }

    /// Surname → member row indices for one generation.
    pub fn surname_index_groups(&self, generation: u32) -> BTreeMap<u32, Vec<u32>> {
        let mut out = BTreeMap::<u32, Vec<u32>>::new();
        for &i in self.generation(generation) {
            if let Some(s) = self.surname(i) {
                out.entry(s).or_default().push(i);
            }
        }
        out
    }

    /// Generations from `generation` back to the most recent common patrilineal
    /// ancestor of each surname group, with the group size. Groups whose members
    /// do not trace back to a single ancestor are skipped.
    pub fn ancestor_distances(&self, generation: u32) -> BTreeMap<u32, (u32, usize)> {
        let mut out = BTreeMap::new();
        for (s, members) in self.surname_index_groups(generation) {
            let size = members.len();
            let mut level = members;
            let mut d = 0u32;
            loop {
                level.sort_unstable();
                level.dedup();
                if level.len() == 1 {
                    out.insert(s, (d, size));
                    break;
                }
                let up: Option<Vec<u32>> = level.iter().map(|&i| self.father(i)).collect();
                match up {
                    Some(next) => {
                        level = next;
                        d += 1;
                    }
                    None => break,
                }
            }
        }
        out
    }

    /// Writes the population as CSV: `id, generation, father_id, mother_id,
    /// spouse_id, surname, y, x_1..x_J, u` followed by covariate columns.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let j = self.parts.factor_count;
        let mut header: Vec<String> =
            ["id", "generation", "father_id", "mother_id", "spouse_id", "surname", "y"].map(String::from).to_vec();
        if self.has_factors() {
            header.extend((1..=j).map(|k| format!("x_{k}")));
        }
        if self.parts.noise.is_some() {
            header.push("u".into());
        }
        header.extend(self.parts.covariates.keys().cloned());
        w.write_record(&header)?;

        let link = |l: Option<u32>| l.map_or(String::new(), |k| self.id(k).to_string());
        let mut row = Vec::with_capacity(header.len());
        for i in 0..self.len() as u32 {
            row.clear();
            row.push(self.id(i).to_string());
            row.push(self.generation_of(i).to_string());
            row.push(link(self.father(i)));
            row.push(link(self.mother(i)));
            row.push(link(self.spouse(i)));
            row.push(self.surname(i).map_or(String::new(), |s| self.surname_token(s).to_string()));
            row.push(self.outcome(i).to_string());
            if let Some(x) = self.factors(i) {
                row.extend(x.iter().map(f64::to_string));
            }
            if let Some(u) = self.noise(i) {
                row.push(u.to_string());
            }
            for c in self.parts.covariates.values() {
                let v = c[i as usize];
                row.push(if v.is_nan() { String::new() } else { v.to_string() });
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}
