use proptest::prelude::*;

use kinlab::estimators::{cov_ratio, CovInput};
use kinlab::ingest::bin_values;
use kinlab::model::{self, InstrumentSpec, TransmissionModel};

fn orthogonal_model() -> impl Strategy<Value = TransmissionModel> {
    (1usize..5).prop_flat_map(|j| {
        (
            prop::collection::vec(0.1f64..2.0, j),
            prop::collection::vec(0.0f64..0.95, j),
            prop::collection::vec(0.1f64..2.0, j),
            0.0f64..2.0,
        )
            .prop_map(|(rho, lambda, v, noise)| TransmissionModel::orthogonal(&rho, &lambda, &v, noise))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn tsls_estimand_is_a_weighted_average_of_persistence(
        m in orthogonal_model(),
        seed in prop::collection::vec(0.0f64..1.0, 5),
        eta in 0.0f64..3.0,
    ) {
        let j = m.factor_count;
        let loadings: Vec<f64> = (0..j).map(|k| seed[k] + 0.05).collect();
        let z = InstrumentSpec::new(&loadings, eta);
        let b = model::tsls_estimand(&m, &z).unwrap();
        let lo = m.persistence.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = m.persistence.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(b >= lo - 1e-12 && b <= hi + 1e-12, "{b} outside [{lo}, {hi}]");
    }

    #[test]
    fn kin_beta_never_exceeds_the_largest_persistence_power(m in orthogonal_model(), g in 1u32..5) {
        let b = model::kin_beta(&m, g).unwrap();
        let hi = m.persistence.iter().copied().fold(0.0, f64::max);
        prop_assert!(b >= -1e-12 && b <= hi.powi(g as i32) + 1e-12);
    }

    #[test]
    fn quantile_bins_are_ordered_and_balanced(
        values in prop::collection::vec(-1e6f64..1e6, 50..400),
        bins in 2u32..8,
    ) {
        if let Ok(c) = bin_values(&values, bins) {
            let mut pairs: Vec<(f64, u32)> = values.iter().zip(&c.categories).map(|(&v, k)| (v, k.unwrap())).collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            prop_assert!(pairs.windows(2).all(|w| w[0].1 <= w[1].1));
            prop_assert!(pairs.iter().all(|p| p.1 < bins));
            // Distinct draws: every bin is populated.
            let mut seen = vec![false; bins as usize];
            for p in &pairs {
                seen[p.1 as usize] = true;
            }
            prop_assert!(seen.iter().all(|&s| s));
        }
    }

    #[test]
    fn covariance_ratio_scales_with_its_numerator(
        xy in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 10..200),
        scale in -5.0f64..5.0,
    ) {
        let (x, y): (Vec<f64>, Vec<f64>) = xy.into_iter().unzip();
        let ids: Vec<u64> = (0..x.len() as u64).collect();
        let scaled: Vec<f64> = y.iter().map(|v| v * scale).collect();
        let base = cov_ratio(CovInput::new(&y, &x, &ids), CovInput::new(&x, &x, &ids));
        let moved = cov_ratio(CovInput::new(&scaled, &x, &ids), CovInput::new(&x, &x, &ids));
        if let (Ok(a), Ok(b)) = (base, moved) {
            prop_assert!((b.value - scale * a.value).abs() <= 1e-9 * (1.0 + a.value.abs() * scale.abs()));
            prop_assert!((b.se - scale.abs() * a.se).abs() <= 1e-9 * (1.0 + a.se * scale.abs()));
        }
    }
}
