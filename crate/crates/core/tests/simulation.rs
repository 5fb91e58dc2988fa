//! Simulator calibration against closed-form moments, and kin indexes
//! against independent re-derivations from raw links.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use kinlab::model::{self, AncestorDistanceDistribution, TransmissionModel};
use kinlab::sim::{simulate, Population, Relation, SimConfig};

fn corr(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

/// Large-sample SE of a Pearson correlation from independent pairs.
fn corr_se(rho: f64, n: usize) -> f64 {
    (1.0 - rho * rho) / (n as f64).sqrt()
}

fn factor_pairs(pop: &Population, rel: Relation, g: u32, k: usize) -> (Vec<f64>, Vec<f64>) {
    pop.kin_index_pairs(rel, g)
        .unwrap()
        .into_iter()
        .map(|(a, b)| (pop.factors(a).unwrap()[k], pop.factors(b).unwrap()[k]))
        .unzip()
}

#[test]
fn parent_child_correlation_over_a_million_lineages() {
    let m = TransmissionModel::orthogonal(&[1.0], &[0.6], &[1.0], 0.5);
    let pop = simulate(&m, &SimConfig::new(1_000_000, 3, 1.0, 5).fixed()).unwrap();
    for g in 1..3 {
        let (c, f) = factor_pairs(&pop, Relation::Parent, g, 0);
        let r = corr(&c, &f);
        assert!((r - 0.6).abs() < 3.0 * corr_se(0.6, c.len()), "generation {g}: {r}");
    }
}

#[test]
fn spouse_and_sibling_correlations_hit_their_targets() {
    let m = TransmissionModel::orthogonal(&[1.0, 1.0], &[0.5, 0.2], &[1.0, 0.5], 0.3)
        .with_two_parent(&[0.5, 0.2], &[0.6, 0.4]);
    let pop = simulate(&m, &SimConfig::new(100_000, 3, 2.0, 6).fixed()).unwrap();
    for k in 0..2 {
        for g in 1..3 {
            let (a, b) = factor_pairs(&pop, Relation::Spouse, g, k);
            let r = corr(&a, &b);
            let target = m.assortative[k];
            assert!((r - target).abs() < 3.0 * corr_se(target, a.len()), "spouse factor {k} gen {g}: {r}");

            let (a, b) = factor_pairs(&pop, Relation::Sibling, g, k);
            let r = corr(&a, &b);
            let target = m.sibling_corr[k];
            assert!((r - target).abs() < 3.0 * corr_se(target, a.len()), "sibling factor {k} gen {g}: {r}");
        }
    }
}

#[test]
fn factor_distribution_stays_stationary() {
    let m = TransmissionModel::from_json(
        r#"{"factor_count": 2, "returns": [1, 0.5], "persistence": [0.7, 0.4],
            "factor_covariance": [[1.0, 0.3], [0.3, 0.8]], "noise_variance": 0.2}"#,
    )
    .unwrap();
    let pop = simulate(&m, &SimConfig::new(200_000, 6, 1.0, 8).fixed()).unwrap();
    for g in 1..6 {
        let rows = pop.generation(g);
        let n = rows.len() as f64;
        for (j, k) in [(0, 0), (1, 1), (0, 1)] {
            let xs: Vec<(f64, f64)> = rows.iter().map(|&i| (pop.factors(i).unwrap()[j], pop.factors(i).unwrap()[k])).collect();
            let mj = xs.iter().map(|x| x.0).sum::<f64>() / n;
            let mk = xs.iter().map(|x| x.1).sum::<f64>() / n;
            let prods: Vec<f64> = xs.iter().map(|x| (x.0 - mj) * (x.1 - mk)).collect();
            let c = prods.iter().sum::<f64>() / n;
            let se = (prods.iter().map(|p| (p - c).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
            let target = m.factor_covariance[j][k];
            assert!((c - target).abs() < 4.0 * se, "generation {g} cov({j},{k}) = {c}");
        }
    }
}

#[test]
fn surname_weight_from_cross_branch_covariance() {
    // Members of one surname whose lines split at the founder share only the
    // founder's contribution, λ^d X_0 each: their covariance is λ^{2d} V.
    let m = TransmissionModel::orthogonal(&[1.0], &[0.8], &[1.0], 0.0);
    let pop = simulate(&m, &SimConfig::new(100_000, 4, 2.0, 10).fixed()).unwrap();
    let branch = |mut i: u32| {
        while pop.generation_of(pop.father(i).unwrap()) > 0 {
            i = pop.father(i).unwrap();
        }
        i
    };
    let mut per_surname = Vec::new();
    for members in pop.surname_index_groups(3).values() {
        let mut sum = 0.0;
        let mut count = 0.0;
        for (a, &i) in members.iter().enumerate() {
            for &k in &members[a + 1..] {
                if branch(i) != branch(k) {
                    sum += pop.outcome(i) * pop.outcome(k);
                    count += 1.0;
                }
            }
        }
        per_surname.push(sum / count);
    }
    let n = per_surname.len() as f64;
    let mean = per_surname.iter().sum::<f64>() / n;
    let se = (per_surname.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
    let w = model::surname_weights(&m, &AncestorDistanceDistribution::point_mass(3)).unwrap();
    assert!((w.weights[0] - 0.8f64.powi(6)).abs() < 1e-12);
    assert!((mean - w.weights[0]).abs() < 3.0 * se, "{mean} ± {se}");
}

/// Paternal cousins from raw father links: distinct fathers who are brothers.
fn brute_force_cousins(pop: &Population, g: u32) -> BTreeSet<(u64, u64)> {
    let father: HashMap<u64, u64> =
        (0..pop.len() as u32).filter_map(|i| pop.father(i).map(|f| (pop.id(i), pop.id(f)))).collect();
    let ego: Vec<u64> = pop.generation(g).iter().map(|&i| pop.id(i)).collect();
    let mut out = BTreeSet::new();
    for (a, &i) in ego.iter().enumerate() {
        for &k in &ego[a + 1..] {
            let (Some(fi), Some(fk)) = (father.get(&i), father.get(&k)) else { continue };
            let (Some(gi), Some(gk)) = (father.get(fi), father.get(fk)) else { continue };
            if fi != fk && gi == gk {
                out.insert((i.min(k), i.max(k)));
            }
        }
    }
    out
}

fn indexed(pop: &Population, rel: Relation, g: u32) -> BTreeSet<(u64, u64)> {
    pop.kin_pairs(rel, g).unwrap().into_iter().map(|(a, b)| (a.min(b), a.max(b))).collect()
}

#[test]
fn cousin_index_matches_graph_walk() {
    let m = TransmissionModel::orthogonal(&[1.0], &[0.5], &[1.0], 0.5).with_two_parent(&[0.4], &[0.5]);
    let pop = simulate(&m, &SimConfig::new(12, 4, 2.0, 12)).unwrap();
    assert!((200..1500).contains(&pop.len()), "{} people", pop.len());
    let mut total = 0;
    for g in 2..4 {
        let expect = brute_force_cousins(&pop, g);
        assert_eq!(indexed(&pop, Relation::Cousin, g), expect);
        assert_eq!(pop.kin_pairs(Relation::Cousin, g).unwrap().len(), expect.len(), "pairs emitted once");
        total += expect.len();
    }
    assert!(total > 20);
}

#[test]
fn sibling_count_for_two_children_per_couple() {
    let m = TransmissionModel::orthogonal(&[1.0], &[0.5], &[1.0], 0.5);
    let pop = simulate(&m, &SimConfig::new(500, 3, 2.0, 13).fixed()).unwrap();
    for g in 1..3 {
        assert_eq!(pop.kin_pairs(Relation::Sibling, g).unwrap().len(), pop.generation(g).len() / 2);
    }
    assert!(pop.kin_pairs(Relation::Grandparent, 1).is_err());
}

/// Two-sample χ² test of equal distributions over the given size bins.
fn homogeneity_p(a: &BTreeMap<usize, f64>, b: &BTreeMap<usize, f64>) -> f64 {
    let na: f64 = a.values().sum();
    let nb: f64 = b.values().sum();
    // Merge sizes from the top until every expected count is at least 5.
    let keys: BTreeSet<usize> = a.keys().chain(b.keys()).copied().collect();
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut cur = (0.0, 0.0);
    for k in keys {
        cur.0 += a.get(&k).copied().unwrap_or(0.0);
        cur.1 += b.get(&k).copied().unwrap_or(0.0);
        let pooled = cur.0 + cur.1;
        if pooled * na.min(nb) / (na + nb) >= 5.0 {
            bins.push(cur);
            cur = (0.0, 0.0);
        }
    }
    if let Some(last) = bins.last_mut() {
        last.0 += cur.0;
        last.1 += cur.1;
    }
    let mut stat = 0.0;
    for (x, y) in &bins {
        let pooled = x + y;
        let ea = pooled * na / (na + nb);
        let eb = pooled * nb / (na + nb);
        stat += (x - ea).powi(2) / ea + (y - eb).powi(2) / eb;
    }
    let df = (bins.len() - 1) as f64;
    1.0 - ChiSquared::new(df).unwrap().cdf(stat)
}

#[test]
fn surname_sizes_follow_the_branching_process() {
    let m = TransmissionModel::orthogonal(&[1.0], &[0.5], &[1.0], 0.5);
    let founders = 20_000;
    let pop = simulate(&m, &SimConfig::new(founders, 5, 2.0, 14)).unwrap();
    let mut simulated = BTreeMap::new();
    for members in pop.surname_groups(4).values() {
        *simulated.entry(members.len()).or_insert(0.0) += 1.0;
    }

    // Independent Galton-Watson process with Poisson(2) sons.
    let mut r = ChaCha8Rng::seed_from_u64(99);
    let poisson = Poisson::new(2.0).unwrap();
    let mut reference = BTreeMap::new();
    for _ in 0..founders {
        let mut size = 1u64;
        for _ in 0..4 {
            size = (0..size).map(|_| poisson.sample(&mut r) as u64).sum();
        }
        if size > 0 {
            *reference.entry(size as usize).or_insert(0.0) += 1.0;
        }
    }
    let p = homogeneity_p(&simulated, &reference);
    assert!(p > 0.05, "chi-square p = {p}");
}
