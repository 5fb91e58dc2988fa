use serde::{Deserialize, Serialize};

use super::{ols_slope, EstimateReport, Estimator, PairedSample, SeMethod};
use crate::error::{Error, Result};
use crate::model::AncestorDistanceDistribution;
use crate::rng::{uniform_at, Purpose};
use crate::sim::Population;

/// Which parents enter the surname averages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurnameRegime {
    /// Every member of the parent generation.
    FullPopulation,
    /// Only the fathers of sampled children.
    OverlappingSubsample,
    /// A parent sample drawn independently of the children.
    IndependentSubsample,
}

impl SurnameRegime {
    pub fn name(self) -> &'static str {
        match self {
            SurnameRegime::FullPopulation => "full_population",
            SurnameRegime::OverlappingSubsample => "overlapping_subsample",
            SurnameRegime::IndependentSubsample => "independent_subsample",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurnameOptions {
    pub child_generation: u32,
    pub regime: SurnameRegime,
    pub sample_fraction: f64,
    /// Inclusive bounds on the parent-generation surname size.
    pub size_filter: Option<(usize, usize)>,
    pub seed: u64,
}

impl SurnameOptions {
    pub fn full(child_generation: u32) -> Self {
        SurnameOptions {
            child_generation,
            regime: SurnameRegime::FullPopulation,
            sample_fraction: 1.0,
            size_filter: None,
            seed: 0,
        }
    }

    pub fn sampled(child_generation: u32, regime: SurnameRegime, sample_fraction: f64, seed: u64) -> Self {
        SurnameOptions { child_generation, regime, sample_fraction, size_filter: None, seed }
    }

    pub fn with_size_filter(mut self, min: usize, max: usize) -> Self {
        self.size_filter = Some((min, max));
        self
    }

    fn bin_label(&self) -> String {
        self.size_filter.map(|(a, b)| format!("{a}-{b}")).unwrap_or_default()
    }
}

/// Surname → number of surnamed members in `generation`.
fn group_sizes(pop: &Population, generation: u32) -> Vec<usize> {
    let mut sizes = vec![0usize; pop.surname_count()];
    for &i in pop.generation(generation) {
        if let Some(s) = pop.surname(i) {
            sizes[s as usize] += 1;
        }
    }
    sizes
}

/// Children entering the estimate, and parent-generation group sizes.
fn select_children(pop: &Population, o: &SurnameOptions) -> Result<(Vec<u32>, Vec<usize>)> {
    if !(o.sample_fraction > 0.0 && o.sample_fraction <= 1.0) {
        return Err(Error::InvalidConfig(format!("sample fraction {} not in (0, 1]", o.sample_fraction)));
    }
    if o.regime == SurnameRegime::FullPopulation && o.sample_fraction != 1.0 {
        return Err(Error::InvalidConfig("full_population needs sample fraction 1".into()));
    }
    if o.child_generation == 0 || o.child_generation >= pop.generation_count() {
        return Err(Error::InvalidRelation(format!("no parent generation for generation {}", o.child_generation)));
    }
    let sizes = group_sizes(pop, o.child_generation - 1);
    let (lo, hi) = o.size_filter.unwrap_or((1, usize::MAX));
    let children = pop
        .generation(o.child_generation)
        .iter()
        .copied()
        .filter(|&i| {
            let (Some(s), Some(_)) = (pop.surname(i), pop.father(i)) else { return false };
            let size = sizes[s as usize];
            size >= lo.max(1) && size <= hi
        })
        .filter(|&i| {
            o.regime == SurnameRegime::FullPopulation
                || uniform_at(o.seed, Purpose::Sample(1), pop.id(i)) < o.sample_fraction
        })
        .collect();
    Ok((children, sizes))
}

fn count_groups(pop: &Population, rows: &[u32]) -> usize {
    let mut s: Vec<u32> = rows.iter().filter_map(|&i| pop.surname(i)).collect();
    s.sort_unstable();
    s.dedup();
    s.len()
}

/// Regression of child outcome on the parent-generation surname average.
pub fn surname_grouping(pop: &Population, o: &SurnameOptions, se: SeMethod) -> Result<EstimateReport> {
    let (children, _) = select_children(pop, o)?;
    let parent_gen = o.child_generation - 1;
    let mut sum = vec![0.0; pop.surname_count()];
    let mut count = vec![0usize; pop.surname_count()];
    let mut add = |i: u32| {
        let s = pop.surname(i).expect("surnamed") as usize;
        sum[s] += pop.outcome(i);
        count[s] += 1;
    };
    match o.regime {
        SurnameRegime::FullPopulation => {
            pop.generation(parent_gen).iter().filter(|&&i| pop.surname(i).is_some()).for_each(|&i| add(i));
        }
        SurnameRegime::OverlappingSubsample => {
            let mut fathers: Vec<u32> = children.iter().filter_map(|&i| pop.father(i)).collect();
            fathers.sort_unstable();
            fathers.dedup();
            fathers.into_iter().filter(|&f| pop.surname(f).is_some()).for_each(&mut add);
        }
        SurnameRegime::IndependentSubsample => {
            pop.generation(parent_gen)
                .iter()
                .filter(|&&i| {
                    pop.surname(i).is_some() && uniform_at(o.seed, Purpose::Sample(2), pop.id(i)) < o.sample_fraction
                })
                .for_each(|&i| add(i));
        }
    }
    let (mut y, mut x, mut ids, mut cl) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut dropped = 0usize;
    for &i in &children {
        let s = pop.surname(i).expect("surnamed") as usize;
        if count[s] == 0 {
            dropped += 1;
            continue;
        }
        y.push(pop.outcome(i));
        x.push(sum[s] / count[s] as f64);
        ids.push(pop.id(i));
        cl.push(s as u64);
    }
    if y.is_empty() && o.regime == SurnameRegime::IndependentSubsample {
        return Err(Error::NoOverlap);
    }
    let groups = cl.iter().collect::<std::collections::BTreeSet<_>>().len();
    if groups < 2 {
        return Err(Error::TooFewGroups(format!("{groups} surname groups after filtering")));
    }
    let mut rep = ols_slope(&PairedSample::with_clusters(y, x, ids, cl)?, se)?;
    rep.estimator = Estimator::SurnameGrouping;
    rep.regime = o.regime.name().into();
    rep.bin = o.bin_label();
    if dropped > 0 {
        rep.flags.push(format!("dropped={dropped}"));
    }
    Ok(rep)
}

/// Child-on-father slope over the same children as [`surname_grouping`],
/// clustered by surname.
pub fn surname_sample_direct(pop: &Population, o: &SurnameOptions, se: SeMethod) -> Result<EstimateReport> {
    let (children, _) = select_children(pop, o)?;
    if count_groups(pop, &children) < 2 {
        return Err(Error::TooFewGroups("fewer than 2 surname groups after filtering".into()));
    }
    let y = children.iter().map(|&i| pop.outcome(i)).collect();
    let x = children.iter().map(|&i| pop.outcome(pop.father(i).expect("has father"))).collect();
    let ids = children.iter().map(|&i| pop.id(i)).collect();
    let cl = children.iter().map(|&i| u64::from(pop.surname(i).expect("surnamed"))).collect();
    let mut rep = ols_slope(&PairedSample::with_clusters(y, x, ids, cl)?, se)?;
    rep.regime = o.regime.name().into();
    rep.bin = o.bin_label();
    Ok(rep)
}

/// Decile cutoffs of a size distribution (one entry per weighted unit), deduplicated.
pub fn decile_cutoffs(mut sizes: Vec<usize>) -> Vec<usize> {
    if sizes.is_empty() {
        return Vec::new();
    }
    sizes.sort_unstable();
    let n = sizes.len();
    let mut out: Vec<usize> = (1..=10).map(|k| sizes[(k * n).div_ceil(10) - 1]).collect();
    out.dedup();
    out
}

/// One cumulative bin of the surname-size sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeSweepRow {
    /// Largest parent-generation surname size in the bin.
    pub cutoff: usize,
    pub grouping: EstimateReport,
    pub direct: EstimateReport,
}

/// Cumulative bins of surname size (decile cutoffs of the child-weighted
/// size distribution) with grouping and direct estimates in each.
pub fn surname_size_sweep(pop: &Population, child_generation: u32, se: SeMethod) -> Result<Vec<SizeSweepRow>> {
    let (children, sizes) = select_children(pop, &SurnameOptions::full(child_generation))?;
    let cutoffs = decile_cutoffs(children.iter().map(|&i| sizes[pop.surname(i).expect("surnamed") as usize]).collect());
    let mut rows = Vec::new();
    for cutoff in cutoffs {
        let o = SurnameOptions::full(child_generation).with_size_filter(1, cutoff);
        match (surname_grouping(pop, &o, se), surname_sample_direct(pop, &o, se)) {
            (Ok(g), Ok(d)) => rows.push(SizeSweepRow {
                cutoff,
                grouping: g.bin(cutoff.to_string()),
                direct: d.bin(cutoff.to_string()),
            }),
            (Err(Error::TooFewGroups(_)), _) | (_, Err(Error::TooFewGroups(_))) => continue,
            (Err(e), _) | (_, Err(e)) => return Err(e),
        }
    }
    if rows.len() < 2 {
        return Err(Error::TooFewGroups(format!("{} nonempty size bins", rows.len())));
    }
    Ok(rows)
}

/// Surname R² and adjusted R².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcsReport {
    pub r2: f64,
    pub adjusted_r2: f64,
    pub groups: usize,
    pub n: usize,
}

/// Share of outcome variance in `generation` explained by surname indicators.
pub fn ics(pop: &Population, generation: u32) -> Result<IcsReport> {
    if generation >= pop.generation_count() {
        return Err(Error::InvalidRelation(format!("generation {generation} not in population")));
    }
    let mut sum = vec![0.0; pop.surname_count()];
    let mut count = vec![0usize; pop.surname_count()];
    let rows: Vec<u32> = pop.generation(generation).iter().copied().filter(|&i| pop.surname(i).is_some()).collect();
    for &i in &rows {
        let s = pop.surname(i).expect("surnamed") as usize;
        sum[s] += pop.outcome(i);
        count[s] += 1;
    }
    let groups = count.iter().filter(|&&c| c > 0).count();
    if groups < 2 {
        return Err(Error::TooFewGroups(format!("{groups} surname groups")));
    }
    let n = rows.len();
    let mean = rows.iter().map(|&i| pop.outcome(i)).sum::<f64>() / n as f64;
    let total: f64 = rows.iter().map(|&i| (pop.outcome(i) - mean).powi(2)).sum();
    if total == 0.0 {
        return Err(Error::ZeroOutcomeVariance);
    }
    let within: f64 = rows
        .iter()
        .map(|&i| {
            let s = pop.surname(i).expect("surnamed") as usize;
            (pop.outcome(i) - sum[s] / count[s] as f64).powi(2)
        })
        .sum();
    let r2 = 1.0 - within / total;
    let adjusted_r2 = if n > groups {
        1.0 - (within / (n - groups) as f64) / (total / (n - 1) as f64)
    } else {
        f64::NAN
    };
    Ok(IcsReport { r2, adjusted_r2, groups, n })
}

/// How surname groups are weighted in a realized distance distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceWeight {
    /// One unit per member of the group.
    Members,
    /// One unit per child of the group's members.
    Children,
}

/// Empirical distribution of the distance from `generation` back to each
/// surname group's most recent common patrilineal ancestor.
pub fn realized_distances(pop: &Population, generation: u32, weight: DistanceWeight) -> Result<AncestorDistanceDistribution> {
    let dist = pop.ancestor_distances(generation);
    let mut obs = Vec::new();
    match weight {
        DistanceWeight::Members => {
            for (d, size) in dist.values() {
                obs.extend(std::iter::repeat_n(*d, *size));
            }
        }
        DistanceWeight::Children => {
            if generation + 1 < pop.generation_count() {
                for &i in pop.generation(generation + 1) {
                    if let (Some(s), Some(_)) = (pop.surname(i), pop.father(i)) {
                        if let Some((d, _)) = dist.get(&s) {
                            obs.push(*d);
                        }
                    }
                }
            }
        }
    }
    AncestorDistanceDistribution::from_observations(obs)
}

/// Normalized variance ratio of one characteristic in one cumulative size bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightDiagnosticRow {
    pub cutoff: usize,
    pub characteristic: String,
    /// Var(surname average of the characteristic) / Var(surname average outcome).
    pub ratio: f64,
    /// `ratio` relative to the first bin.
    pub normalized: f64,
}

/// Member-weighted variance of group averages.
fn between_variance(rows: &[u32], values: &[f64], pop: &Population) -> f64 {
    let mut sum = vec![0.0; pop.surname_count()];
    let mut count = vec![0usize; pop.surname_count()];
    for &i in rows {
        let s = pop.surname(i).expect("surnamed") as usize;
        sum[s] += values[i as usize];
        count[s] += 1;
    }
    let n = rows.len() as f64;
    let mean = rows.iter().map(|&i| values[i as usize]).sum::<f64>() / n;
    rows.iter()
        .map(|&i| {
            let s = pop.surname(i).expect("surnamed") as usize;
            (sum[s] / count[s] as f64 - mean).powi(2)
        })
        .sum::<f64>()
        / n
}

/// Share of the between-surname outcome variance carried by each
/// characteristic, per cumulative size bin, relative to the first bin.
/// `characteristics` holds one value per population row.
pub fn weight_diagnostic(
    pop: &Population,
    generation: u32,
    characteristics: &[(String, Vec<f64>)],
    cutoffs: &[usize],
) -> Result<Vec<WeightDiagnosticRow>> {
    if generation >= pop.generation_count() {
        return Err(Error::InvalidRelation(format!("generation {generation} not in population")));
    }
    if characteristics.iter().any(|(_, v)| v.len() != pop.len()) {
        return Err(Error::InvalidSample("characteristic length differs from population".into()));
    }
    if cutoffs.is_empty() {
        return Err(Error::InvalidConfig("no size bins".into()));
    }
    let sizes = group_sizes(pop, generation);
    let mut out = Vec::new();
    let mut first = vec![f64::NAN; characteristics.len()];
    for (b, &cutoff) in cutoffs.iter().enumerate() {
        let rows: Vec<u32> = pop
            .generation(generation)
            .iter()
            .copied()
            .filter(|&i| pop.surname(i).is_some_and(|s| sizes[s as usize] <= cutoff))
            .collect();
        if count_groups(pop, &rows) < 2 {
            return Err(Error::TooFewGroups(format!("bin with cutoff {cutoff}")));
        }
        let vy = between_variance(&rows, pop.outcomes(), pop);
        if vy == 0.0 {
            return Err(Error::DivisionByZero(format!("no between-surname outcome variance at cutoff {cutoff}")));
        }
        for (k, (name, values)) in characteristics.iter().enumerate() {
            let ratio = between_variance(&rows, values, pop) / vy;
            if b == 0 {
                if ratio == 0.0 {
                    return Err(Error::DivisionByZero(format!("first-bin ratio of {name} is zero")));
                }
                first[k] = ratio;
            }
            out.push(WeightDiagnosticRow { cutoff, characteristic: name.clone(), ratio, normalized: ratio / first[k] });
        }
    }
    Ok(out)
}

/// Decile cutoffs of the member-weighted surname size distribution in `generation`.
pub fn member_size_cutoffs(pop: &Population, generation: u32) -> Vec<usize> {
    let sizes = group_sizes(pop, generation);
    decile_cutoffs(
        pop.generation(generation).iter().filter_map(|&i| pop.surname(i)).map(|s| sizes[s as usize]).collect(),
    )
}
