use proptest::prelude::*;

use secretary_core::evaluator::{accept_probability, delta, expected_value, second_delta};
use secretary_core::montecarlo::{simulate, SimConfig, Variant};
use secretary_core::optimizer::{optimal_cutoff, optimal_cutoff_scan};
use secretary_core::sweep::{fit_power_law, SweepRecord};
use secretary_core::topk::{enumerate_rank_table, success_probability, success_probability_closed_form, success_probability_exact};
use secretary_core::utility::{lipschitz_near_zero, w_hat, Lipschitz, VALIDATION_GRID};
use secretary_core::{QuadratureConfig, UtilityFunction};

fn q() -> QuadratureConfig {
    QuadratureConfig::default()
}

/// Nonincreasing piecewise-linear utilities with 2 to 6 knots.
fn pwl_utility() -> impl Strategy<Value = UtilityFunction> {
    (
        prop::collection::btree_set(1u32..999, 0..5),
        prop::collection::vec(0.0f64..2.0, 6),
        -3.0f64..3.0,
    )
        .prop_map(|(inner, drops, top)| {
            let mut xs = vec![0.0];
            xs.extend(inner.into_iter().map(|x| x as f64 / 1000.0));
            xs.push(1.0);
            let mut y = top;
            let knots = xs
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    if i > 0 {
                        y -= drops[i - 1];
                    }
                    (x, y)
                })
                .collect();
            UtilityFunction::piecewise_linear(knots).unwrap()
        })
}

fn any_utility() -> impl Strategy<Value = UtilityFunction> {
    prop_oneof![
        Just(UtilityFunction::linear()),
        (0.25f64..4.0).prop_map(|p| UtilityFunction::power(p).unwrap()),
        Just(UtilityFunction::negated_sqrt()),
        (0.05f64..0.95).prop_map(|t| UtilityFunction::step(t).unwrap()),
        (-2.0f64..2.0).prop_map(|v| UtilityFunction::constant(v).unwrap()),
        pwl_utility(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn acceptance_probabilities_sum_to_one(n in 2usize..400, c_frac in 0.0f64..1.0) {
        let c = 2 + ((n - 2) as f64 * c_frac) as usize;
        let s: f64 = (c..=n).map(|t| accept_probability(n, c, t).unwrap()).sum();
        prop_assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shift_equivariance(w in any_utility(), k in -5.0f64..5.0, n in 2usize..150, c_frac in 0.0f64..1.0) {
        let c = 1 + ((n - 1) as f64 * c_frac) as usize;
        let base = expected_value(&w, n, c, &q()).unwrap();
        let moved = expected_value(&w.shifted(k).unwrap(), n, c, &q()).unwrap();
        prop_assert!((moved - base - k).abs() < 1e-9, "{} vs {}", moved, base + k);
    }

    #[test]
    fn delta_is_the_first_difference(w in any_utility(), n in 2usize..200, c_frac in 0.0f64..1.0) {
        let c = 2 + ((n - 2) as f64 * c_frac) as usize;
        let d = delta(&w, n, c, &q()).unwrap();
        let fd = expected_value(&w, n, c, &q()).unwrap() - expected_value(&w, n, c - 1, &q()).unwrap();
        prop_assert!((d - fd).abs() < 1e-9, "{} vs {}", d, fd);
    }

    #[test]
    fn concavity(w in any_utility(), c in 3usize..2000) {
        prop_assert!(second_delta(&w, c, &q()).unwrap() <= 1e-9);
    }

    #[test]
    fn second_delta_is_n_independent(w in any_utility(), n in 5usize..150, c_frac in 0.0f64..1.0) {
        let c = 3 + ((n - 3) as f64 * c_frac) as usize;
        let fd = delta(&w, n, c, &q()).unwrap() - delta(&w, n, c - 1, &q()).unwrap();
        prop_assert!((second_delta(&w, c, &q()).unwrap() - fd).abs() < 1e-8);
    }

    #[test]
    fn pwl_generator_is_monotone(w in pwl_utility()) {
        prop_assert!(w.validate(VALIDATION_GRID).is_ok());
    }

    #[test]
    fn rising_segments_are_rejected(x in 0.01f64..0.99, rise in 1e-6f64..1.0) {
        let knots = vec![(0.0, 0.0), (x, -1.0), (1.0, -1.0 + rise)];
        prop_assert!(UtilityFunction::piecewise_linear(knots).is_err());
    }

    #[test]
    fn normalize_is_idempotent(w in any_utility()) {
        let once = w.normalize();
        let twice = once.normalize();
        for i in 0..=VALIDATION_GRID {
            let x = i as f64 / VALIDATION_GRID as f64;
            prop_assert_eq!(once.value(x), twice.value(x));
            prop_assert!(once.value(x) <= 1e-12);
        }
        prop_assert_eq!(once.value(0.0), 0.0);
    }

    #[test]
    fn lipschitz_is_shift_invariant(w in any_utility(), k in -5.0f64..5.0) {
        // ε below any step keeps the estimate on the continuous part.
        let a = lipschitz_near_zero(&w, 0.04, 1024).unwrap();
        let b = lipschitz_near_zero(&w.shifted(k).unwrap(), 0.04, 1024).unwrap();
        match (a, b) {
            (Lipschitz::Bounded(x), Lipschitz::Bounded(y)) => prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x)),
            (Lipschitz::Unbounded, Lipschitz::Unbounded) => {}
            other => prop_assert!(false, "{:?}", other),
        }
        let nb = lipschitz_near_zero(&w.normalize(), 0.04, 1024).unwrap();
        prop_assert_eq!(a.bounded().is_some(), nb.bounded().is_some());
    }

    #[test]
    fn step_mean_gap(t in 0.01f64..0.99, m in 0.1f64..5.0) {
        let w = UtilityFunction::step(t).unwrap().affine(m, 0.0).unwrap();
        prop_assert!((w_hat(&w, 1e-12).unwrap() - m * (1.0 - t)).abs() < 1e-10);
    }

    #[test]
    fn argmax_is_affine_invariant(w in any_utility(), a in 0.1f64..10.0, b in -10.0f64..10.0, n in 2usize..120) {
        let base = optimal_cutoff(&w, n, &q()).unwrap().c_opt;
        let mapped = optimal_cutoff(&w.affine(a, b).unwrap(), n, &q()).unwrap().c_opt;
        prop_assert_eq!(base, mapped);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn binary_search_matches_scan(w in any_utility(), n in 2usize..200) {
        let bs = optimal_cutoff(&w, n, &q()).unwrap();
        let scan = optimal_cutoff_scan(&w, n, &q()).unwrap();
        prop_assert_eq!(bs.c_opt, scan.c_opt);
        prop_assert!((bs.value - scan.value).abs() < 1e-9);
    }

    #[test]
    fn first_difference_changes_sign_once(w in any_utility(), n in 3usize..150) {
        let mut seen_nonpositive = false;
        for c in 2..=n {
            let d = delta(&w, n, c, &q()).unwrap();
            if d <= 1e-11 {
                seen_nonpositive = true;
            } else {
                prop_assert!(!seen_nonpositive, "ΔE turns positive again at c = {}", c);
            }
        }
    }

    #[test]
    fn topk_monotone_in_k(n in 3usize..=10) {
        let table = enumerate_rank_table(n).unwrap();
        for c in 2..=n {
            for k in 1..n {
                prop_assert!(table.success(k, c) <= table.success(k + 1, c) + 1e-15);
            }
        }
        prop_assert_eq!(success_probability_exact(n, n - 1, 2).unwrap(), table.success(n - 1, 2));
    }

    #[test]
    fn topk_closed_form_monotone_in_k(n in 3usize..3000, c_frac in 0.0f64..1.0, k in 1usize..5) {
        let c = 2 + ((n - 2) as f64 * c_frac) as usize;
        prop_assume!(k + 1 < n);
        let (lo, hi) = (
            success_probability_closed_form(n, k, c).unwrap(),
            success_probability_closed_form(n, k + 1, c).unwrap(),
        );
        prop_assert!(lo <= hi + 1e-12);
    }

    /// The model only counts wins at the first good applicant, so a larger k
    /// moves mass into the skipped prefix; monotonicity holds for small c/n.
    #[test]
    fn topk_model_monotone_in_k_for_small_cutoffs(n in 100usize..3000, c_frac in 0.0f64..1.0, k in 1usize..5) {
        let c = 2 + ((n / 20 - 2) as f64 * c_frac) as usize;
        prop_assert!(success_probability(n, k, c).unwrap() <= success_probability(n, k + 1, c).unwrap() + 1e-9);
    }

    #[test]
    fn topk_model_stays_in_range(n in 100usize..3000, c_frac in 0.0f64..1.0, k in 1usize..4) {
        let c = 2 + ((n - 2) as f64 * c_frac) as usize;
        let p = success_probability(n, k, c).unwrap();
        prop_assert!((0.0..=1.0 + secretary_core::topk::MODEL_SLACK).contains(&p));
    }

    #[test]
    fn simulation_is_reproducible(seed in any::<u64>(), n in 2usize..40, c_frac in 0.0f64..1.0, p1 in any::<bool>()) {
        let c = 1 + ((n - 1) as f64 * c_frac) as usize;
        let cfg = SimConfig {
            variant: if p1 { Variant::P1 } else { Variant::P2 },
            n,
            c,
            k: None,
            trials: 2000,
            seed,
            debug_checks: true,
        };
        let w = UtilityFunction::linear();
        let a = simulate(Some(&w), &cfg).unwrap();
        let b = simulate(Some(&w), &cfg).unwrap();
        prop_assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        prop_assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
        prop_assert!(a.stderr >= 0.0);
    }

    #[test]
    fn fit_recovers_exact_power_laws(b in 0.2f64..1.2, a in 10.0f64..100.0) {
        // c_opt is an integer; a large prefactor keeps the rounding small.
        let records: Vec<SweepRecord> = [1e6, 4e6, 1.6e7, 6.4e7]
            .iter()
            .map(|&n: &f64| SweepRecord {
                objective: "test".into(),
                n: n as usize,
                c_opt: (a * n.powf(b)).round() as usize,
                value: 0.0,
                bound: None,
                exact_value: None,
            })
            .collect();
        let fit = fit_power_law(&records).unwrap();
        prop_assert!((fit.exponent - b).abs() < 2e-3);
        prop_assert!((0.0..=1.0).contains(&fit.r_squared));
    }
}
