//! Acceptance criteria. Runs without the libtest harness so every criterion
//! prints one PASS/FAIL line; exits nonzero if any criterion fails.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use secretary_core::evaluator::{accept_probability, delta, expected_value_curve, second_delta};
use secretary_core::montecarlo::{order_stat_deviation, p1_p2_gap, simulate, SimConfig, Variant};
use secretary_core::optimizer::{optimal_cutoff, optimal_cutoff_scan};
use secretary_core::sweep::{check_bound, fit_power_law, run_sweep, Objective};
use secretary_core::topk::{enumerate_rank_table, optimal_cutoff_topk, success_probability};
use secretary_core::{QuadratureConfig, UtilityFunction};

const CORPUS: [&str; 7] = [
    "linear",
    "power:2",
    "nsqrt",
    "step:0.3",
    "pwl:0,0;0.5,-0.2;1,-1",
    "pwl:0,0;0.1,-0.5;1,-1",
    "const:-1",
];

const INV_E: f64 = 0.367_879_441_171_442_3;

fn corpus() -> Vec<UtilityFunction> {
    CORPUS.iter().map(|s| s.parse().unwrap()).collect()
}

fn q() -> QuadratureConfig {
    QuadratureConfig::default()
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed <= Duration::from_secs(limit_secs)
}

fn concavity() -> Outcome {
    let start = Instant::now();
    let mut worst = (f64::NEG_INFINITY, String::new());
    for (spec, w) in CORPUS.iter().zip(corpus()) {
        for n in [10usize, 100, 1000] {
            for c in 3..=n {
                let d2 = second_delta(&w, c, &q()).unwrap();
                if d2 > worst.0 {
                    worst = (d2, format!("{spec} n={n} c={c}"));
                }
            }
        }
    }
    let t = start.elapsed();
    outcome(
        worst.0 <= 1e-9 && within(t, 60),
        format!("max second_delta {:.3e} at {} ({:.1?})", worst.0, worst.1, t),
    )
}

fn difference_consistency() -> Outcome {
    let start = Instant::now();
    let (mut worst1, mut worst2) = (0f64, 0f64);
    for w in corpus() {
        for n in [10usize, 100, 1000] {
            let e = expected_value_curve(&w, n, &q()).unwrap();
            let d: Vec<f64> = (2..=n).map(|c| delta(&w, n, c, &q()).unwrap()).collect();
            for c in 2..=n {
                worst1 = worst1.max((d[c - 2] - (e[c - 1] - e[c - 2])).abs());
                if c >= 3 {
                    let fd = d[c - 2] - d[c - 3];
                    worst2 = worst2.max((second_delta(&w, c, &q()).unwrap() - fd).abs());
                }
            }
        }
    }
    let t = start.elapsed();
    outcome(
        worst1 <= 1e-9 && worst2 <= 1e-8 && within(t, 60),
        format!("max |delta - dE| {worst1:.3e}, max |second_delta - d(delta)| {worst2:.3e} ({t:.1?})"),
    )
}

fn probability_normalization() -> Outcome {
    let mut worst = 0f64;
    for n in [5usize, 50, 500] {
        for c in 2..=n {
            let s: f64 = (c..=n).map(|t| accept_probability(n, c, t).unwrap()).sum();
            worst = worst.max((s - 1.0).abs());
        }
    }
    outcome(worst <= 1e-12, format!("max |sum P_c(t) - 1| {worst:.3e}"))
}

fn oracle_equivalence() -> Outcome {
    let mut mismatches = Vec::new();
    let mut checked = 0;
    for (spec, w) in CORPUS.iter().zip(corpus()) {
        for n in [5usize, 10, 50, 100, 500] {
            let bs = optimal_cutoff(&w, n, &q()).unwrap().c_opt;
            let scan = optimal_cutoff_scan(&w, n, &q()).unwrap().c_opt;
            checked += 1;
            if bs != scan {
                mismatches.push(format!("{spec} n={n}: {bs} vs {scan}"));
            }
        }
    }
    outcome(
        mismatches.is_empty(),
        format!("{checked} instances, mismatches: {mismatches:?}"),
    )
}

fn classical_recovery() -> Outcome {
    let start = Instant::now();
    let r = optimal_cutoff_topk(10_000, 1).unwrap();
    let t = start.elapsed();
    let ratio = r.c_opt as f64 / 10_000.0;
    let p = r.model_probability;
    outcome(
        (0.36..=0.38).contains(&ratio) && (0.367..=0.372).contains(&p) && within(t, 60),
        format!("c_opt/n = {ratio:.4}, P = {p:.6} ({t:.1?})"),
    )
}

fn small_n_topk() -> Outcome {
    let mut worst_k1 = 0f64;
    let mut tables = Vec::new();
    for n in 2..=12usize {
        let table = enumerate_rank_table(n).unwrap();
        if n <= 10 {
            for c in 2..=n {
                worst_k1 = worst_k1.max((success_probability(n, 1, c).unwrap() - table.success(1, c)).abs());
            }
        }
        if [8, 10, 12].contains(&n) {
            tables.push(table);
        }
    }
    let mut gaps = Vec::new();
    let mut worst_gap = 0f64;
    for table in &tables {
        let n = table.n;
        for k in [2usize, 3] {
            let g = (2..=n)
                .map(|c| (success_probability(n, k, c).unwrap() - table.success(k, c)).abs())
                .fold(0.0, f64::max);
            let best = (2..=n)
                .map(|c| (success_probability(n, k, c).unwrap() - table.success(k, c)).abs())
                .fold(f64::INFINITY, f64::min);
            worst_gap = worst_gap.max(g);
            gaps.push(format!("n={n} k={k}: max {g:.3} min {best:.3}"));
        }
    }
    outcome(
        worst_k1 <= 1e-12 && worst_gap <= 0.1,
        format!("k=1 max error {worst_k1:.2e}; k>1 model gaps [{}]", gaps.join(", ")),
    )
}

fn sqrt_scaling() -> Outcome {
    let start = Instant::now();
    let rs = run_sweep(
        &Objective::Utility(UtilityFunction::linear()),
        &[100, 1000, 10_000, 100_000],
        &q(),
    )
    .unwrap();
    let fit = fit_power_law(&rs).unwrap();
    let bounded = check_bound(&rs, 2.0).iter().all(|&ok| ok) && rs.iter().all(|r| r.bound.is_some());
    let t = start.elapsed();
    let points: Vec<String> = rs
        .iter()
        .map(|r| format!("{}:{}<=2*{:.1}", r.n, r.c_opt, r.bound.unwrap_or(f64::NAN)))
        .collect();
    outcome(
        (0.45..=0.55).contains(&fit.exponent) && bounded && within(t, 600),
        format!("exponent {:.4}, c_opt vs bound [{}] ({t:.1?})", fit.exponent, points.join(" ")),
    )
}

fn linear_scaling() -> Outcome {
    let start = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for k in 1..=3 {
        let rs = run_sweep(&Objective::TopK(k), &[200, 400, 800, 1600, 3200], &q()).unwrap();
        let fit = fit_power_law(&rs).unwrap();
        let last = rs.last().unwrap();
        let exact = last.exact_value.unwrap();
        pass &= (0.9..=1.1).contains(&fit.exponent) && exact >= INV_E - 0.01;
        parts.push(format!(
            "k={k}: exponent {:.4}, P(c_opt={}) exact {:.4} (model {:.4})",
            fit.exponent, last.c_opt, exact, last.value
        ));
    }
    let t = start.elapsed();
    outcome(pass && within(t, 300), format!("{} ({t:.1?})", parts.join("; ")))
}

fn monte_carlo_agreement() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_229);
    let utilities: Vec<UtilityFunction> = corpus().into_iter().filter(|w| !w.is_constant()).collect();
    let mut pass = true;
    let mut worst = 0f64;
    for j in 0..10u64 {
        let w = &utilities[rng.random_range(0..utilities.len())];
        let n = rng.random_range(2..=100usize);
        let c = rng.random_range(1..=n);
        let cfg = SimConfig {
            variant: Variant::P2,
            n,
            c,
            k: None,
            trials: 1_000_000,
            seed: 1000 + j,
            debug_checks: false,
        };
        let r = simulate(Some(w), &cfg).unwrap();
        let again = simulate(Some(w), &cfg).unwrap();
        let exact = secretary_core::evaluator::expected_value(w, n, c, &q()).unwrap();
        let z = (r.mean - exact).abs() / r.stderr;
        worst = worst.max(z);
        pass &= (r.mean - exact).abs() <= 4.0 * r.stderr;
        pass &= r.mean.to_bits() == again.mean.to_bits() && r.stderr.to_bits() == again.stderr.to_bits();
    }
    outcome(pass, format!("10 triples, max |mean - E_c| / stderr = {worst:.2}, reruns bit-identical"))
}

fn concentration() -> Outcome {
    let frac = order_stat_deviation(10_000, 1_000, 1).unwrap();
    let w = UtilityFunction::linear();
    let mean_gap = |n: usize, c: usize| -> f64 {
        (0..5u64).map(|s| p1_p2_gap(&w, n, c, 200_000, 77 + s).unwrap().0).sum::<f64>() / 5.0
    };
    let (small, large) = (mean_gap(10, 3), mean_gap(1000, 32));
    outcome(
        frac <= 0.01 && large < small,
        format!("violation fraction {frac:.4}; mean P1-P2 gap n=10 {small:.5}, n=1000 {large:.5}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("concavity of E_c", concavity),
        ("difference consistency", difference_consistency),
        ("probability normalization", probability_normalization),
        ("binary search equals full scan", oracle_equivalence),
        ("classical secretary recovery", classical_recovery),
        ("exact small-n top-k", small_n_topk),
        ("sqrt(n) scaling for linear w", sqrt_scaling),
        ("linear scaling for top-k", linear_scaling),
        ("Monte Carlo agreement", monte_carlo_agreement),
        ("order-statistic concentration", concentration),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        println!(
            "criterion {:>2} {}: {name}: {}",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        if !o.pass {
            failed.push(i + 1);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all 10 criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
