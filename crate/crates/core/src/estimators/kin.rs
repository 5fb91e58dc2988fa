use super::{lineage_cluster, ratio_with_se, CovInput, EstimateReport, Estimator, SeMethod, WEAK_DENOMINATOR_T};
use crate::error::{Error, Result};
use crate::sim::{Population, Relation};

fn ancestor(pop: &Population, i: u32, g: u32) -> Option<u32> {
    (0..g).try_fold(i, |k, _| pop.father(k))
}

/// Members of `generation` with a `g`-th patrilineal ancestor, with the
/// ancestors at distances `g` and `g − 1`.
fn lineages(pop: &Population, generation: u32, g: u32) -> Result<Vec<(u32, u32, u32)>> {
    if g == 0 {
        return Err(Error::InvalidConfig("genealogical distance must be at least 1".into()));
    }
    if generation >= pop.generation_count() || generation < g {
        return Err(Error::InvalidRelation(format!("generation {generation} has no ancestors {g} generations back")));
    }
    Ok(pop
        .generation(generation)
        .iter()
        .filter_map(|&i| {
            let near = ancestor(pop, i, g - 1)?;
            Some((i, near, pop.father(near)?))
        })
        .collect())
}

/// Slope of the standardized outcome on that of the `g`-th patrilineal ancestor.
pub fn kin_beta_sample(pop: &Population, g: u32, generation: u32, se: SeMethod) -> Result<EstimateReport> {
    let rows = lineages(pop, generation, g)?;
    let z = pop.standardized_outcomes();
    let ego: Vec<f64> = rows.iter().map(|r| z[r.0 as usize]).collect();
    let anc: Vec<f64> = rows.iter().map(|r| z[r.2 as usize]).collect();
    let cl: Vec<u64> = rows.iter().map(|r| lineage_cluster(pop, r.0)).collect();
    let (r, s) = ratio_with_se(CovInput::new(&ego, &anc, &cl), CovInput::new(&anc, &anc, &cl), se)?;
    Ok(EstimateReport::new(Estimator::KinBeta, r.value, Some(s), rows.len()).bin(format!("g={g}")))
}

/// `Cov(ego, ancestor g) / Cov(ego, ancestor g−1)` on standardized outcomes.
pub fn decay_rate_sample(pop: &Population, g: u32, generation: u32, se: SeMethod) -> Result<EstimateReport> {
    if g < 2 {
        return Err(Error::InvalidConfig("decay rate needs distance at least 2".into()));
    }
    let rows = lineages(pop, generation, g)?;
    let z = pop.standardized_outcomes();
    let ego: Vec<f64> = rows.iter().map(|r| z[r.0 as usize]).collect();
    let far: Vec<f64> = rows.iter().map(|r| z[r.2 as usize]).collect();
    let near: Vec<f64> = rows.iter().map(|r| z[r.1 as usize]).collect();
    let cl: Vec<u64> = rows.iter().map(|r| lineage_cluster(pop, r.0)).collect();
    let (r, s) = ratio_with_se(CovInput::new(&ego, &far, &cl), CovInput::new(&ego, &near, &cl), se)?;
    let mut rep = EstimateReport::new(Estimator::DecayRate, r.value, Some(s), rows.len()).bin(format!("g={g}"));
    if r.denominator_t.abs() < WEAK_DENOMINATOR_T {
        rep.flags.push("weak_denominator".into());
    }
    Ok(rep)
}

/// Named kin ratios.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KinRatio {
    /// Parent-in-law over spouse.
    InlawSpouse,
    /// Cousin over uncle/aunt.
    CousinUncle,
}

impl KinRatio {
    pub fn relations(self) -> (Relation, Relation) {
        match self {
            KinRatio::InlawSpouse => (Relation::ParentInLaw, Relation::Spouse),
            KinRatio::CousinUncle => (Relation::Cousin, Relation::UncleAunt),
        }
    }

    pub fn estimator(self) -> Estimator {
        match self {
            KinRatio::InlawSpouse => Estimator::InlawSpouseRatio,
            KinRatio::CousinUncle => Estimator::CousinUncleRatio,
        }
    }
}

/// Ratio of kin covariances of standardized outcomes for egos in `generation`.
pub fn kin_ratio(pop: &Population, ratio: KinRatio, generation: u32, se: SeMethod) -> Result<EstimateReport> {
    let (num_rel, den_rel) = ratio.relations();
    let z = pop.standardized_outcomes();
    let column = |rel: Relation| -> Result<(Vec<f64>, Vec<f64>, Vec<u64>)> {
        let pairs = pop.kin_index_pairs(rel, generation)?;
        if pairs.is_empty() {
            return Err(Error::InvalidSample(format!("no {rel:?} pairs in generation {generation}")));
        }
        Ok((
            pairs.iter().map(|p| z[p.0 as usize]).collect(),
            pairs.iter().map(|p| z[p.1 as usize]).collect(),
            pairs.iter().map(|p| lineage_cluster(pop, p.0)).collect(),
        ))
    };
    let n = column(num_rel)?;
    let d = column(den_rel)?;
    let num = CovInput::new(&n.0, &n.1, &n.2).symmetric(num_rel.is_symmetric());
    let den = CovInput::new(&d.0, &d.1, &d.2).symmetric(den_rel.is_symmetric());
    let (r, s) = ratio_with_se(num, den, se)?;
    let mut rep = EstimateReport::new(ratio.estimator(), r.value, Some(s), n.0.len() + d.0.len());
    if r.denominator_t.abs() < WEAK_DENOMINATOR_T {
        rep.flags.push("weak_denominator".into());
    }
    Ok(rep)
}
