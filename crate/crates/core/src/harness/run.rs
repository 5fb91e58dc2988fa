//! Running requested estimators on one population.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::config::{EstimatorRequest, Scenario};
use crate::error::{Error, Result};
use crate::estimators::{
    self, decay_rate_sample, grandparent_iv_population, ics, kin_beta_sample, kin_ratio, lineage_cluster,
    ols_slope, parent_child_sample, rank_slope, realized_distances, surname_grouping, surname_sample_direct, tsls,
    tstsls, DistanceWeight, EstimateReport, Estimator, FirstStage, KinRatio, SeMethod, SurnameOptions, SurnameRegime,
};
use crate::ingest::derive_instrument;
use crate::linalg;
use crate::model::{self, standard_bin_means, InstrumentSpec, LineageMode, TransmissionModel};
use crate::rng::{derive_seed, label_hash, stream, Purpose};
use crate::sim::{simulate, Population};

/// One estimate of one replication, with its analytic counterpart.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub replication: u32,
    pub report: EstimateReport,
    pub analytic: Option<f64>,
}

impl Cell {
    /// Identity of the cell across replications.
    pub fn key(&self) -> (String, String, String) {
        (self.report.estimator.name().to_string(), self.report.regime.clone(), self.report.bin.clone())
    }

    pub fn is_error(&self) -> bool {
        self.report.flags.iter().any(|f| f.starts_with("error:"))
    }
}

/// Seed of replication `r`.
pub fn replication_seed(master: u64, r: u32) -> u64 {
    derive_seed(master, u64::from(r))
}

/// Simulates replication `r` of a scenario.
pub fn simulate_replication(s: &Scenario, master: u64, r: u32) -> Result<Population> {
    let (Some(model), Some(sim)) = (&s.model, &s.sim) else {
        return Err(Error::InvalidConfig("scenario has no model/sim section".into()));
    };
    let mut cfg = sim.clone();
    cfg.seed = replication_seed(master, r);
    simulate(model, &cfg)
}

/// Draws of a realized instrument, one per population row.
pub struct RealizedInstrument {
    pub values: Vec<f64>,
    pub categories: Option<Vec<u32>>,
}

/// `Z = Σ a_j X^j + η` for every row, with `η` keyed by the row id so that
/// reloaded populations reproduce the same instrument.
pub fn realize_instrument(
    pop: &Population,
    model: &TransmissionModel,
    label: &str,
    spec: &InstrumentSpec,
    seed: u64,
) -> Result<RealizedInstrument> {
    if !pop.has_factors() || pop.factor_count() != spec.loadings.len() {
        return Err(Error::InvalidConfig(format!("instrument {label} needs factor columns")));
    }
    let h = label_hash(label);
    let sd = spec.instrument_noise_variance.sqrt();
    let values: Vec<f64> = (0..pop.len() as u32)
        .into_par_iter()
        .map(|i| {
            let x = pop.factors(i).expect("factors present");
            let mut z: f64 = x.iter().zip(&spec.loadings).map(|(x, a)| x * a).sum();
            if sd > 0.0 {
                let e: f64 = stream(seed, Purpose::Instrument(h), 0, pop.id(i)).sample(StandardNormal);
                z += sd * e;
            }
            z
        })
        .collect();
    let categories = spec.discretization.map(|_| {
        let cuts = spec.cut_points(model);
        values.iter().map(|&z| InstrumentSpec::categorize(&cuts, z)).collect()
    });
    Ok(RealizedInstrument { values, categories })
}

/// Auxiliary parent sample for two-sample TSLS: fresh stationary draws of
/// `(outcome, instrument category)`.
fn auxiliary_sample(
    model: &TransmissionModel,
    label: &str,
    spec: &InstrumentSpec,
    size: u64,
    step: u32,
    seed: u64,
) -> Result<(Vec<f64>, Vec<u32>)> {
    const CHUNK: u64 = 4096;
    let dynamics = model.dynamics()?;
    let cuts = spec.cut_points(model);
    let j = model.factor_count;
    let sd_u = model.noise_variance.sqrt();
    let sd_eta = spec.instrument_noise_variance.sqrt();
    let h = label_hash(label);
    let chunks: Vec<(Vec<f64>, Vec<u32>)> = (0..size.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(seed, Purpose::Auxiliary(h), step, c);
            let n = CHUNK.min(size - c * CHUNK) as usize;
            let (mut y, mut cat) = (Vec::with_capacity(n), Vec::with_capacity(n));
            let (mut z, mut x) = (vec![0.0; j], vec![0.0; j]);
            for _ in 0..n {
                for v in z.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                linalg::lower_mul(&dynamics.factor_chol, &z, &mut x);
                let u: f64 = rng.sample::<f64, _>(StandardNormal) * sd_u;
                let eta: f64 = rng.sample::<f64, _>(StandardNormal) * sd_eta;
                let zi: f64 = x.iter().zip(&spec.loadings).map(|(x, a)| x * a).sum::<f64>() + eta;
                y.push(model.outcome(&x, u));
                cat.push(InstrumentSpec::categorize(&cuts, zi));
            }
            (y, cat)
        })
        .collect();
    let mut y = Vec::with_capacity(size as usize);
    let mut cat = Vec::with_capacity(size as usize);
    for (a, b) in chunks {
        y.extend(a);
        cat.extend(b);
    }
    Ok((y, cat))
}

/// Two-sample estimand with the auxiliary first-stage error measured against
/// the exact category means of the parent outcome.
fn tstsls_measured_estimand(model: &TransmissionModel, spec: &InstrumentSpec, aux_y: &[f64], aux_z: &[u32]) -> Result<f64> {
    let k = spec.discretization.expect("validated as discretized");
    let w = model::instrument_weights(model, spec)?;
    let c = spec.factor_covariances(model);
    let slope: f64 = model.returns.iter().zip(&c).map(|(r, c)| r * c).sum::<f64>() / spec.variance(model).sqrt();
    let truth: Vec<f64> = standard_bin_means(k).iter().map(|m| model.intercept + slope * m).collect();
    let means = estimators::category_means(aux_y, aux_z);
    let nu: Vec<f64> = (0..k).map(|b| means.get(&b).map_or(f64::NAN, |m| m.0) - truth[b as usize]).collect();
    let nu_mean = nu.iter().sum::<f64>() / f64::from(k);
    let nu_var = nu.iter().map(|v| (v - nu_mean).powi(2)).sum::<f64>() / f64::from(k);
    let num = w.persistence_moment(&model.persistence, 1);
    Ok(num / (w.total() + nu_var))
}

/// Whether the surname weights apply: single-parent transmission, or equal
/// persistence where every version of the ratio collapses.
fn surname_analytic_applies(model: &TransmissionModel) -> bool {
    model.lineage_mode == LineageMode::SingleParent || model.persistence.windows(2).all(|w| w[0] == w[1])
}

/// Smallest parent-generation surname group for which the grouping estimate
/// is compared with the large-group surname estimand. Smaller groups add
/// within-group sampling noise to the regressor and attenuate the estimate.
pub const SURNAME_LIMIT_MIN_GROUP: usize = 1000;

fn surname_groups_large(pop: &Population, generation: u32) -> bool {
    let groups = pop.surname_index_groups(generation);
    !groups.is_empty() && groups.values().all(|g| g.len() >= SURNAME_LIMIT_MIN_GROUP)
}

type Row = (EstimateReport, Option<f64>);

struct Ctx<'a> {
    s: &'a Scenario,
    pop: &'a Population,
    seed: u64,
    se: SeMethod,
}

impl Ctx<'_> {
    fn model(&self) -> Option<&TransmissionModel> {
        self.s.model.as_ref()
    }

    fn last(&self) -> u32 {
        self.pop.generation_count().saturating_sub(1)
    }

    fn analytic<T>(&self, f: impl FnOnce(&TransmissionModel) -> Result<T>) -> Option<T> {
        self.model().and_then(|m| f(m).ok())
    }

    fn beta1(&self) -> Option<f64> {
        self.analytic(|m| model::kin_beta(m, 1))
    }

    fn run(&self, req: &EstimatorRequest) -> Vec<Result<Row>> {
        let pop = self.pop;
        let se = self.se;
        let gen = |g: &Option<u32>| g.unwrap_or(self.last());
        match req {
            EstimatorRequest::Ols { generation } => vec![parent_child_sample(pop, gen(generation))
                .and_then(|s| ols_slope(&s, se))
                .map(|r| (r, self.beta1()))],
            EstimatorRequest::RankSlope { generation } => {
                let g = gen(generation);
                vec![parent_child_sample(pop, g).and_then(|s| rank_slope(&s, None, se)).map(|r| {
                    let spearman = self.beta1().map(|b| 6.0 / std::f64::consts::PI * (b / 2.0).asin());
                    (r, spearman)
                })]
            }
            EstimatorRequest::Tsls { instrument, bins, generation } => {
                vec![self.tsls(instrument, *bins, gen(generation)).map(|r| (r.0.bin(instrument.clone()), r.1))]
            }
            EstimatorRequest::Tstsls { instrument, auxiliary_per_category, generation } => {
                self.tstsls(instrument, auxiliary_per_category, gen(generation))
            }
            EstimatorRequest::SurnameGrouping { regime, sample_fraction, size_filter, generation }
            | EstimatorRequest::SurnameDirect { regime, sample_fraction, size_filter, generation } => {
                let o = SurnameOptions {
                    child_generation: gen(generation),
                    regime: *regime,
                    sample_fraction: *sample_fraction,
                    size_filter: *size_filter,
                    seed: self.seed,
                };
                if matches!(req, EstimatorRequest::SurnameDirect { .. }) {
                    return vec![surname_sample_direct(pop, &o, se).map(|mut r| {
                        r.estimator = Estimator::SurnameDirect;
                        (r, self.beta1())
                    })];
                }
                vec![surname_grouping(pop, &o, se).map(|r| {
                    // Under equal persistence and no noise the grouping ratio is
                    // exact for any group size.
                    let exact = self.model().is_some_and(|m| {
                        m.noise_variance == 0.0 && m.persistence.windows(2).all(|w| w[0] == w[1])
                    });
                    let analytic = (*regime == SurnameRegime::FullPopulation
                        && size_filter.is_none()
                        && (exact || surname_groups_large(pop, o.child_generation - 1)))
                        .then(|| {
                            self.analytic(|m| {
                                if !surname_analytic_applies(m) {
                                    return Err(Error::WrongLineageMode("single_parent"));
                                }
                                let d = realized_distances(pop, o.child_generation - 1, DistanceWeight::Children)?;
                                model::surname_estimand(m, &d)
                            })
                        })
                        .flatten();
                    (r, analytic)
                })]
            }
            EstimatorRequest::GrandparentIv { generation } => vec![grandparent_iv_population(pop, gen(generation), se)
                .map(|r| (r, self.analytic(model::grandparent_iv_estimand)))],
            EstimatorRequest::KinBeta { g, generation } => g
                .iter()
                .map(|&d| {
                    kin_beta_sample(pop, d, gen(generation), se).map(|r| (r, self.analytic(|m| model::kin_beta(m, d))))
                })
                .collect(),
            EstimatorRequest::DecayRate { g, generation } => g
                .iter()
                .map(|&d| {
                    decay_rate_sample(pop, d, gen(generation), se)
                        .map(|r| (r, self.analytic(|m| model::decay_rate(m, d))))
                })
                .collect(),
            EstimatorRequest::InlawSpouseRatio { generation } => vec![kin_ratio(pop, KinRatio::InlawSpouse, gen(generation), se)
                .map(|r| (r, self.analytic(model::inlaw_spouse_ratio_estimand)))],
            EstimatorRequest::CousinUncleRatio { generation } => vec![kin_ratio(pop, KinRatio::CousinUncle, gen(generation), se)
                .map(|r| (r, self.analytic(model::cousin_uncle_ratio_estimand)))],
            EstimatorRequest::Ics { generation } => {
                let g = gen(generation);
                vec![ics(pop, g).map(|i| {
                    let mut r = EstimateReport::new(Estimator::Ics, i.r2, None, i.n);
                    r.flags.push(format!("adjusted_r2={}", i.adjusted_r2));
                    r.flags.push(format!("groups={}", i.groups));
                    let analytic = self.analytic(|m| {
                        if m.lineage_mode != LineageMode::SingleParent {
                            return Err(Error::WrongLineageMode("single_parent"));
                        }
                        if !surname_groups_large(pop, g) {
                            return Err(Error::InvalidSample("surname groups too small for the limit".into()));
                        }
                        let d = realized_distances(pop, g, DistanceWeight::Members)?;
                        Ok(model::surname_weights(m, &d)?.total() / model::direct_weights(m)?.total())
                    });
                    (r, analytic)
                })]
            }
        }
    }

    /// Children of `generation` with a father, and the father rows.
    fn father_pairs(&self, generation: u32) -> Result<Vec<(u32, u32)>> {
        self.pop.kin_index_pairs(crate::sim::Relation::Parent, generation)
    }

    fn tsls(&self, name: &str, bins: Option<u32>, generation: u32) -> Result<Row> {
        let pop = self.pop;
        let pairs = self.father_pairs(generation)?;
        if let Some(spec) = self.s.instruments.get(name) {
            let model = self.model().ok_or_else(|| Error::InvalidConfig("instrument needs a model".into()))?;
            let z = realize_instrument(pop, model, name, spec, self.seed)?;
            let y: Vec<f64> = pairs.iter().map(|p| pop.outcome(p.0)).collect();
            let x: Vec<f64> = pairs.iter().map(|p| pop.outcome(p.1)).collect();
            let cl: Vec<u64> = pairs.iter().map(|p| lineage_cluster(pop, p.0)).collect();
            let r = match &z.categories {
                Some(c) => {
                    let cats: Vec<u32> = pairs.iter().map(|p| c[p.1 as usize]).collect();
                    tsls(&y, &x, FirstStage::Categorical(&cats), &cl, self.se)?
                }
                None => {
                    let zs: Vec<f64> = pairs.iter().map(|p| z.values[p.1 as usize]).collect();
                    tsls(&y, &x, FirstStage::Continuous(&zs), &cl, self.se)?
                }
            };
            return Ok((r, self.analytic(|m| model::tsls_estimand(m, spec))));
        }
        // Covariate of the father, binned or used as a continuous instrument.
        let values = pop.covariate(name).ok_or_else(|| Error::InvalidConfig(format!("no covariate {name:?}")))?;
        let cats = bins.map(|k| derive_instrument(pop, name, k)).transpose()?;
        let keep: Vec<&(u32, u32)> = pairs.iter().filter(|p| !values[p.1 as usize].is_nan()).collect();
        let y: Vec<f64> = keep.iter().map(|p| pop.outcome(p.0)).collect();
        let x: Vec<f64> = keep.iter().map(|p| pop.outcome(p.1)).collect();
        let cl: Vec<u64> = keep.iter().map(|p| lineage_cluster(pop, p.0)).collect();
        let r = match cats {
            Some(c) => {
                let cs: Vec<u32> = keep.iter().map(|p| c.categories[p.1 as usize].expect("not missing")).collect();
                tsls(&y, &x, FirstStage::Categorical(&cs), &cl, self.se)?
            }
            None => {
                let zs: Vec<f64> = keep.iter().map(|p| values[p.1 as usize]).collect();
                tsls(&y, &x, FirstStage::Continuous(&zs), &cl, self.se)?
            }
        };
        Ok((r, None))
    }

    fn tstsls(&self, name: &str, sizes: &[u64], generation: u32) -> Vec<Result<Row>> {
        let prepared = (|| -> Result<_> {
            let model = self.model().ok_or_else(|| Error::InvalidConfig("tstsls needs a model".into()))?;
            let spec = &self.s.instruments[name];
            let z = realize_instrument(self.pop, model, name, spec, self.seed)?;
            let pairs = self.father_pairs(generation)?;
            let cats = z.categories.expect("validated as discretized");
            let y: Vec<f64> = pairs.iter().map(|p| self.pop.outcome(p.0)).collect();
            let zc: Vec<u32> = pairs.iter().map(|p| cats[p.1 as usize]).collect();
            let cl: Vec<u64> = pairs.iter().map(|p| lineage_cluster(self.pop, p.0)).collect();
            Ok((model, spec, y, zc, cl))
        })();
        let (model, spec, y, zc, cl) = match prepared {
            Ok(p) => p,
            Err(e) => return sizes.iter().map(|_| Err(clone_error(&e))).collect(),
        };
        let k = u64::from(spec.discretization.expect("validated"));
        sizes
            .iter()
            .enumerate()
            .map(|(step, &per)| {
                let (ay, az) = auxiliary_sample(model, name, spec, per * k, step as u32, self.seed)?;
                let r = tstsls(&y, &zc, &ay, &az, &cl, self.se)?;
                let analytic = tstsls_measured_estimand(model, spec, &ay, &az).ok();
                Ok((r.bin(format!("{name}:{per}")), analytic))
            })
            .collect()
    }
}

fn clone_error(e: &Error) -> Error {
    match e {
        Error::InvalidConfig(m) => Error::InvalidConfig(m.clone()),
        other => Error::InvalidSample(other.to_string()),
    }
}

/// Runs every requested estimator on one population. Failures become
/// flagged rows carrying the error code.
pub fn estimate_population(s: &Scenario, pop: &Population, replication: u32, seed: u64) -> Vec<Cell> {
    let ctx = Ctx { s, pop, seed, se: s.se };
    let mut cells = Vec::new();
    for req in &s.estimators {
        for res in ctx.run(req) {
            let (mut report, analytic) = match res {
                Ok(row) => row,
                Err(e) => {
                    let r = EstimateReport::new(req.estimator(), f64::NAN, None, 0)
                        .flag(format!("error:{}", e.code()))
                        .flag(e.to_string().replace([',', ';', '\n'], " "));
                    (r, None)
                }
            };
            if let Some(f) = &s.verify.fault_injection {
                if f.estimator.is_none_or(|e| e == report.estimator) && report.value.is_finite() {
                    report.value += f.offset;
                    report.flags.push("fault_injected".into());
                }
            }
            report.scenario = s.name.clone();
            cells.push(Cell { replication, report, analytic });
        }
    }
    cells
}

/// Runs `f` on a pool with `threads` workers (the global pool when `None`).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}
