use proptest::prelude::*;

use unseen_core::distributions::{rng_from_seed, ClassGroups, SampleProfile};
use unseen_core::estimators::{good_turing, minimal_bias, GtVariant};
use unseen_core::ga::mutate;
use unseen_core::ground_truth::{expected_mass, g_value};
use unseen_core::harness::{read_csv, vargha_delaney_a12, write_csv, Method, Metric, RowKey};
use unseen_core::moments::MomentContext;
use unseen_core::representations::{initial_representation, instantiate, validate_representation, LinearEstimator};

fn probabilities(max_support: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..1.0, 2..=max_support).prop_map(|w| {
        let total: f64 = w.iter().sum();
        w.into_iter().map(|x| x / total).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mutation_keeps_representations_valid(seed in any::<u64>(), n in 2u32..40, k in 0u32..3, steps in 1usize..30) {
        prop_assume!(k < n);
        let mut rng = rng_from_seed(seed);
        let mut rep = initial_representation(n, k);
        for _ in 0..steps {
            rep = mutate(&rep, &mut rng, 20, 16);
            prop_assert!(rep.term_count() <= 20);
        }
        prop_assert!(validate_representation(&rep).is_valid());
    }

    #[test]
    fn estimates_ignore_draw_order(tokens in prop::collection::vec(0u8..8, 2..60), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let a = SampleProfile::from_tokens(tokens.iter().map(|t| t.to_string()));
        let mut shuffled = tokens.clone();
        shuffled.shuffle(&mut rng_from_seed(seed));
        let b = SampleProfile::from_tokens(shuffled.iter().map(|t| t.to_string()));
        for k in 0..3u64.min(a.n() - 1) {
            prop_assert_eq!(
                good_turing(&a, k, GtVariant::Standard).unwrap(),
                good_turing(&b, k, GtVariant::Standard).unwrap()
            );
            let (x, y) = (minimal_bias(&a, k).unwrap(), minimal_bias(&b, k).unwrap());
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn moments_ignore_class_order(mut probs in probabilities(6), n in 2u64..25, seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let est = LinearEstimator::minimal_bias(n as u32, 0);
        let before = MomentContext::new(ClassGroups::<f64>::from_values(&probs), n)
            .estimator_mse(&est.betas_as::<f64>(), 0).unwrap().mse;
        probs.shuffle(&mut rng_from_seed(seed));
        let after = MomentContext::new(ClassGroups::<f64>::from_values(&probs), n)
            .estimator_mse(&est.betas_as::<f64>(), 0).unwrap().mse;
        prop_assert!((before - after).abs() <= 1e-10 * before.abs().max(1e-12));
    }

    #[test]
    fn initial_representation_is_expected_mass(probs in probabilities(8), n in 1u64..40, k in 0u64..4) {
        prop_assume!(k <= n);
        let groups = ClassGroups::<f64>::from_values(&probs);
        let r0 = initial_representation(n as u32, k as u32);
        let value: f64 = r0.coeffs().iter().map(|(&(i, j), &a)| a * g_value(&groups, j.into(), i.into())).sum();
        let mass = expected_mass(&groups, n, k);
        prop_assert!((value - mass).abs() <= 1e-12 * mass.max(1e-300));
        // g_{n+1}(n+1) has no plug-in statistic
        prop_assert_eq!(instantiate(&r0).term_count(), usize::from(k < n));
    }

    #[test]
    fn a12_is_complementary(xs in prop::collection::vec(-5i32..5, 1..20), ys in prop::collection::vec(-5i32..5, 1..20)) {
        let xs: Vec<f64> = xs.into_iter().map(f64::from).collect();
        let ys: Vec<f64> = ys.into_iter().map(f64::from).collect();
        let a = vargha_delaney_a12(&xs, &ys).unwrap();
        let b = vargha_delaney_a12(&ys, &xs).unwrap();
        prop_assert!((a + b - 1.0).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn csv_rows_round_trip(values in prop::collection::vec(-1e3f64..1e3, 1..12), n in 1u64..500) {
        let key = RowKey {
            experiment: "p".into(),
            distribution: "zipf-0.5".into(),
            support: 20,
            n,
            k: 0,
            replications: 3,
            seed: 1,
        };
        let rows: Vec<_> = values.iter().map(|&v| key.row("GT", Metric::Variance, Method::MonteCarlo, v)).collect();
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        prop_assert_eq!(read_csv(buf.as_slice()).unwrap(), rows);
    }
}
