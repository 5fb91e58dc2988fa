//! Monte Carlo checks of the closed-form weights and estimands. Every
//! sample here is drawn directly in the test from the stationary Gaussian
//! model; nothing goes through the simulator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use kinlab::model::{self, InstrumentSpec, TransmissionModel};

const BATCHES: usize = 100;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn n01(r: &mut ChaCha8Rng) -> f64 {
    r.sample(StandardNormal)
}

/// Batch-means estimate: a statistic computed on each batch, averaged.
fn batch_mean(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let v = values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

fn assert_within(label: &str, (m, se): (f64, f64), target: f64) {
    assert!((m - target).abs() <= 3.0 * se, "{label}: {m} ± {se} vs {target}");
}

fn cov(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n
}

#[test]
fn correlated_factors_share_weight() {
    let m = TransmissionModel::from_json(
        r#"{"factor_count": 2, "returns": [1, 1], "persistence": [0.8, 0.2],
            "factor_covariance": [[0.5, 0.1], [0.1, 0.5]], "noise_variance": 0.3}"#,
    )
    .unwrap();
    let w = model::direct_weights(&m).unwrap();

    // Cov(y, ρ_j X^j) over 10⁷ draws.
    let mut r = rng(1);
    let per = 100_000;
    let (a, b) = (0.5f64.sqrt(), 0.1 / 0.5f64.sqrt());
    let c = (0.5 - b * b).sqrt();
    let mut w1 = Vec::new();
    let mut w2 = Vec::new();
    for _ in 0..BATCHES {
        let (mut x1, mut x2, mut y) = (vec![0.0; per], vec![0.0; per], vec![0.0; per]);
        for i in 0..per {
            let (z1, z2) = (n01(&mut r), n01(&mut r));
            x1[i] = a * z1;
            x2[i] = b * z1 + c * z2;
            y[i] = x1[i] + x2[i] + 0.3f64.sqrt() * n01(&mut r);
        }
        w1.push(cov(&y, &x1));
        w2.push(cov(&y, &x2));
    }
    assert!((w.weights[0] - 0.6).abs() < 1e-12 && (w.weights[1] - 0.6).abs() < 1e-12);
    assert_within("omega_1", batch_mean(&w1), w.weights[0]);
    assert_within("omega_2", batch_mean(&w2), w.weights[1]);
}

/// Outcomes of `generations` consecutive members of stationary lineages.
fn lineages(m: &TransmissionModel, n: usize, generations: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    let j = m.factor_count;
    let sd: Vec<f64> = (0..j).map(|k| m.variance(k).sqrt()).collect();
    let mut out = vec![vec![0.0; n]; generations];
    let mut x = vec![0.0; j];
    for i in 0..n {
        for k in 0..j {
            x[k] = sd[k] * n01(&mut r);
        }
        for g in 0..generations {
            if g > 0 {
                for k in 0..j {
                    let l = m.persistence[k];
                    x[k] = l * x[k] + sd[k] * (1.0 - l * l).sqrt() * n01(&mut r);
                }
            }
            let u = m.noise_variance.sqrt() * n01(&mut r);
            out[g][i] = m.outcome(&x, u);
        }
    }
    out
}

fn corr(a: &[f64], b: &[f64]) -> f64 {
    cov(a, b) / (cov(a, a) * cov(b, b)).sqrt()
}

#[test]
fn multigenerational_correlations_and_grandparent_iv() {
    let m = TransmissionModel::orthogonal(&[1.0, 1.0], &[0.8, 0.2], &[0.5, 0.5], 0.0);
    let per = 100_000;
    let mut beta = vec![Vec::new(); 4];
    let mut decay = vec![Vec::new(); 4];
    let mut gp_iv = Vec::new();
    for batch in 0..BATCHES {
        let y = lineages(&m, per, 4, 100 + batch as u64);
        let b: Vec<f64> = (0..4).map(|g| corr(&y[g], &y[0])).collect();
        for g in 1..4 {
            beta[g].push(b[g]);
            if g > 1 {
                decay[g].push(b[g] / b[g - 1]);
            }
        }
        gp_iv.push(cov(&y[2], &y[0]) / cov(&y[1], &y[0]));
    }
    assert!((model::kin_beta(&m, 1).unwrap() - 0.5).abs() < 1e-12);
    assert!((model::kin_beta(&m, 2).unwrap() - 0.34).abs() < 1e-12);
    for g in 1..4u32 {
        assert_within(&format!("beta_{g}"), batch_mean(&beta[g as usize]), model::kin_beta(&m, g).unwrap());
    }
    for g in 2..4u32 {
        assert_within(&format!("decay_{g}"), batch_mean(&decay[g as usize]), model::decay_rate(&m, g).unwrap());
    }
    let gp = model::grandparent_iv_estimand(&m).unwrap();
    assert!((gp - 0.68).abs() < 1e-12);
    assert_within("grandparent iv", batch_mean(&gp_iv), gp);
    // Ordering: direct slope below the IV, the IV below the largest persistence.
    assert!(0.5 < gp && gp < 0.8);
}

#[test]
fn projection_variance_of_a_noisy_instrument() {
    let m = TransmissionModel::orthogonal(&[1.0, 1.0], &[0.8, 0.2], &[1.0, 1.0], 0.0);
    let z = InstrumentSpec::new(&[1.0, 0.0], 1.0);
    let w = model::instrument_weights(&m, &z).unwrap();
    assert_eq!(w.weights[1], 0.0);

    let mut r = rng(7);
    let per = 100_000;
    let mut v = Vec::new();
    for _ in 0..BATCHES {
        let (mut x, mut zz) = (vec![0.0; per], vec![0.0; per]);
        for i in 0..per {
            x[i] = n01(&mut r);
            zz[i] = x[i] + n01(&mut r);
        }
        // Variance of the linear projection of X on Z.
        let c = cov(&x, &zz);
        v.push(c * c / cov(&zz, &zz));
    }
    assert!((w.weights[0] - 0.5).abs() < 1e-12);
    assert_within("V(E[X|Z])", batch_mean(&v), w.weights[0]);
}

/// Parent and child outcomes plus the parent's instrument, for orthogonal
/// stationary factors.
struct Pairs {
    parent: Vec<f64>,
    child: Vec<f64>,
    z: Vec<f64>,
}

fn pairs(m: &TransmissionModel, loadings: &[f64], eta: f64, n: usize, r: &mut ChaCha8Rng) -> Pairs {
    let j = m.factor_count;
    let sd: Vec<f64> = (0..j).map(|k| m.variance(k).sqrt()).collect();
    let mut out = Pairs { parent: vec![0.0; n], child: vec![0.0; n], z: vec![0.0; n] };
    let (mut xp, mut xc) = (vec![0.0; j], vec![0.0; j]);
    for i in 0..n {
        for k in 0..j {
            let l = m.persistence[k];
            xp[k] = sd[k] * n01(r);
            xc[k] = l * xp[k] + sd[k] * (1.0 - l * l).sqrt() * n01(r);
        }
        let nu = m.noise_variance.sqrt();
        out.parent[i] = m.outcome(&xp, nu * n01(r));
        out.child[i] = m.outcome(&xc, nu * n01(r));
        out.z[i] = xp.iter().zip(loadings).map(|(x, a)| x * a).sum::<f64>() + eta.sqrt() * n01(r);
    }
    out
}

fn tsls_continuous(p: &Pairs) -> f64 {
    cov(&p.child, &p.z) / cov(&p.parent, &p.z)
}

#[test]
fn tsls_weights_follow_the_instrument() {
    let m = TransmissionModel::orthogonal(&[1.0, 1.0], &[0.8, 0.2], &[0.5, 0.5], 0.0);
    let mut r = rng(11);
    let cases: [(&[f64], f64, f64); 3] = [(&[1.0, 1.0], 0.0, 0.5), (&[1.0, 0.0], 1.0, 0.8), (&[1.0, 0.0], 0.0, 0.8)];
    for (loadings, eta, expected) in cases {
        let spec = InstrumentSpec::new(loadings, eta);
        let analytic = model::tsls_estimand(&m, &spec).unwrap();
        assert!((analytic - expected).abs() < 1e-12);
        let est: Vec<f64> = (0..BATCHES).map(|_| tsls_continuous(&pairs(&m, loadings, eta, 20_000, &mut r))).collect();
        assert_within(&format!("tsls {loadings:?}"), batch_mean(&est), analytic);
    }
}

/// Lower and upper standard-normal cut points of `k` equiprobable bins.
fn bin_edges(k: u32) -> Vec<(f64, f64)> {
    let n = Normal::standard();
    (0..k)
        .map(|b| {
            let lo = if b == 0 { f64::NEG_INFINITY } else { n.inverse_cdf(f64::from(b) / f64::from(k)) };
            let hi = if b + 1 == k { f64::INFINITY } else { n.inverse_cdf(f64::from(b + 1) / f64::from(k)) };
            (lo, hi)
        })
        .collect()
}

fn bin_of(edges: &[(f64, f64)], z: f64) -> usize {
    edges.partition_point(|e| e.1 <= z)
}

#[test]
fn discretized_instrument_matches_simulated_reference() {
    let m = TransmissionModel::orthogonal(&[1.0, 0.7], &[0.8, 0.3], &[0.5, 0.8], 0.4);
    let loadings = [1.0, 0.5];
    let eta = 0.6;
    let spec = InstrumentSpec::new(&loadings, eta).discretized(5);
    let analytic = model::tsls_estimand(&m, &spec).unwrap();
    let sd_z = spec.variance(&m).sqrt();
    let edges = bin_edges(5);
    let mut r = rng(12);
    let mut est = Vec::new();
    for _ in 0..BATCHES {
        let p = pairs(&m, &loadings, eta, 100_000, &mut r);
        // First stage: category means of the parent outcome.
        let cat: Vec<usize> = p.z.iter().map(|z| bin_of(&edges, z / sd_z)).collect();
        let mut sum = [0.0; 5];
        let mut count = [0.0; 5];
        for (c, y) in cat.iter().zip(&p.parent) {
            sum[*c] += y;
            count[*c] += 1.0;
        }
        let fitted: Vec<f64> = cat.iter().map(|c| sum[*c] / count[*c]).collect();
        est.push(cov(&p.child, &fitted) / cov(&p.parent, &fitted));
    }
    assert_within("discretized tsls", batch_mean(&est), analytic);
}

#[test]
fn two_sample_attenuation_with_first_stage_error() {
    // Z = X + η with V(X) = V(η) = 1, so ω^Z = 1/2 and the one-sample value is λ.
    let m = TransmissionModel::orthogonal(&[1.0], &[0.8], &[1.0], 0.0);
    let z = InstrumentSpec::new(&[1.0], 1.0);
    assert!((model::tstsls_estimand(&m, &z, &[0.5]).unwrap() - 0.4).abs() < 1e-12);

    // Auxiliary first stage known up to an error ν_k with V(ν) = 0.5 per category.
    let k = 2000u32;
    let edges = bin_edges(k);
    let normal = Normal::standard();
    let sd_z = 2f64.sqrt();
    let slope = 1.0 / sd_z; // Cov(y, Z) / sd(Z)
    let truth: Vec<f64> = edges
        .iter()
        .map(|&(lo, hi)| {
            let dens = |x: f64| if x.is_finite() { normal.pdf(x) } else { 0.0 };
            slope * (dens(lo) - dens(hi)) * f64::from(k)
        })
        .collect();
    let discretized = z.clone().discretized(k);
    let reference = model::tstsls_estimand(&m, &discretized, &[0.5]).unwrap();

    let mut r = rng(13);
    let mut est = Vec::new();
    for _ in 0..40 {
        let fitted: Vec<f64> = truth.iter().map(|t| t + 0.5f64.sqrt() * n01(&mut r)).collect();
        let p = pairs(&m, &[1.0], 1.0, 250_000, &mut r);
        let yhat: Vec<f64> = p.z.iter().map(|z| fitted[bin_of(&edges, z / sd_z)]).collect();
        est.push(cov(&p.child, &yhat) / cov(&yhat, &yhat));
    }
    assert_within("tstsls", batch_mean(&est), reference);
    assert!((reference - 0.4).abs() < 2e-3);
}

#[test]
fn tsls_bias_sign_matches_simulated_gap() {
    let m = TransmissionModel::orthogonal(&[1.0, 1.0], &[0.8, 0.2], &[0.5, 0.5], 0.3);
    let mut r = rng(14);
    for (loadings, sign) in [([1.0, 0.0], 1i8), ([0.0, 1.0], -1i8)] {
        let spec = InstrumentSpec::new(&loadings, 0.5);
        let d = model::tsls_bias_decomposition(&m, &spec).unwrap();
        assert_eq!(d.sign, sign);
        let gap: Vec<f64> = (0..BATCHES)
            .map(|_| {
                let p = pairs(&m, &loadings, 0.5, 20_000, &mut r);
                tsls_continuous(&p) - cov(&p.child, &p.parent) / cov(&p.parent, &p.parent)
            })
            .collect();
        let (g, se) = batch_mean(&gap);
        assert!(f64::from(sign) * g > 3.0 * se, "{loadings:?}: gap {g} ± {se}");
        assert_within("bias", (g, se), d.bias);
    }
}
