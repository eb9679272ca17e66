//! Exact expected utility of cutoff policies in the uniform-type model.
//!
//! With `n` applicants and cutoff `c >= 2`, applicant `t` (`c <= t < n`) is
//! accepted with probability `(c-1)/(t(t-1))` and pays the expected utility
//! of the best of `t` uniform types, `t ∫ w(x)(1-x)^(t-1) dx`; the last
//! applicant is reached with probability `(c-1)/(n-1)` and pays `∫ w`.
//! Writing `I_m = ∫ w(x)(1-x)^m dx`,
//!
//! ```text
//! E_c    = Σ_{t=c}^{n-1} (c-1)/(t-1) I_{t-1} + (c-1)/(n-1) I_0
//! ΔE_c   = Σ_{t=c}^{n-1} I_{t-1}/(t-1) - I_{c-2} + I_0/(n-1)
//! Δ²E_c  = 1/(c-2) ∫ w(x)(1-x)^(c-3)((c-1)x - 1) dx
//! ```
//!
//! Cutoff `c = 1` accepts applicant 1 unconditionally, so `E_1 = I_0`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::quadrature::{dyadic_breakpoints, integrate_with_breaks, CompensatedSum};
use crate::utility::UtilityFunction;

pub use crate::quadrature::{integrate, QuadratureConfig, SumStrategy};

/// Exact evaluation of one cutoff policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyEval {
    pub n: usize,
    pub c: usize,
    pub expected_utility: f64,
    /// `(t, P_c(t))` for `t = c..=n`; empty for `c = 1`.
    pub accept_probs: Vec<(usize, f64)>,
}

/// `(1 - x)^m`, via `exp(m log1p(-x))` so large powers do not underflow
/// through repeated multiplication.
pub(crate) fn pow_one_minus(x: f64, m: usize) -> f64 {
    if m == 0 {
        1.0
    } else if x >= 1.0 {
        0.0
    } else {
        (m as f64 * (-x).ln_1p()).exp()
    }
}

/// `Σ_{m=from}^{to} (1-x)^m / m` for `from >= 1`, stopping once the geometric
/// tail bound `(1-x)^m / (m x)` falls below `tail_tol`.
pub(crate) fn harmonic_kernel(x: f64, from: usize, to: usize, tail_tol: f64) -> f64 {
    debug_assert!(from >= 1);
    if from > to {
        return 0.0;
    }
    let y = 1.0 - x;
    let mut sum = CompensatedSum::default();
    let mut power = pow_one_minus(x, from);
    for m in from..=to {
        // Re-anchor the running power periodically to bound drift.
        if (m - from) % 64 == 0 {
            power = pow_one_minus(x, m);
        }
        let term = power / m as f64;
        sum.add(term);
        if x > 0.0 && term / x < tail_tol {
            break;
        }
        power *= y;
    }
    sum.value()
}

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        return Err(domain(format!("need at least two applicants, got n = {n}")));
    }
    Ok(())
}

/// Probability that the cutoff-`c` rule accepts applicant `t`.
pub fn accept_probability(n: usize, c: usize, t: usize) -> Result<f64> {
    check_n(n)?;
    if c < 2 || c > n {
        return Err(domain(format!("cutoff must lie in [2, n] = [2, {n}], got {c}")));
    }
    if t < c || t > n {
        return Err(domain(format!("position must lie in [c, n] = [{c}, {n}], got {t}")));
    }
    let skipped = (c - 1) as f64;
    Ok(if t < n {
        skipped / (t as f64 * (t - 1) as f64)
    } else {
        skipped / (n - 1) as f64
    })
}

/// Panel boundaries for integrands carrying `(1-x)^m` factors up to `m`.
fn edges(w: &UtilityFunction, m: usize) -> Vec<f64> {
    let mut e = w.breakpoints();
    e.extend(dyadic_breakpoints(m));
    e
}

/// `∫ w(x)(1-x)^m dx`.
fn moment(w: &UtilityFunction, m: usize, q: &QuadratureConfig) -> Result<f64> {
    integrate_with_breaks(|x| w.value(x) * pow_one_minus(x, m), 0.0, 1.0, &edges(w, m), q)
}

/// Expected utility of the best of `t` uniform types: `t ∫ w(x)(1-x)^(t-1) dx`.
pub fn best_of_t_expectation(w: &UtilityFunction, t: usize, q: &QuadratureConfig) -> Result<f64> {
    if t < 1 {
        return Err(domain("t must be at least 1"));
    }
    let tf = t as f64;
    Ok(tf * moment(w, t - 1, &q.with_tol(q.abs_tol / tf))?)
}

fn kernel_tol(q: &QuadratureConfig, scale: f64) -> f64 {
    q.abs_tol / (10.0 * scale.max(1.0))
}

/// `E_c` alone, without the acceptance distribution.
pub fn expected_value(w: &UtilityFunction, n: usize, c: usize, q: &QuadratureConfig) -> Result<f64> {
    check_n(n)?;
    q.validate()?;
    if c < 1 || c > n {
        return Err(domain(format!("cutoff must lie in [1, n] = [1, {n}], got {c}")));
    }
    if c == 1 || c == n {
        return integrate_with_breaks(|x| w.value(x), 0.0, 1.0, &w.breakpoints(), q);
    }
    let breaks = edges(w, n);
    let skipped = (c - 1) as f64;
    let last = 1.0 / (n - 1) as f64;
    match q.inner_sum_strategy {
        SumStrategy::SwappedKernel => {
            // The weight integrates to 1/(c-1), so E_c = w(0) + (c-1) ∫ (w - w(0)) (K + last).
            let top = w.value(0.0);
            let tail_tol = kernel_tol(q, skipped * w.normalize().sup_abs());
            let gap = integrate_with_breaks(
                |x| {
                    let g = w.value(x) - top;
                    if g == 0.0 {
                        return 0.0;
                    }
                    skipped * g * (harmonic_kernel(x, c - 1, n - 2, tail_tol) + last)
                },
                0.0,
                1.0,
                &breaks,
                q,
            )?;
            Ok(top + gap)
        }
        SumStrategy::PerTerm => {
            // Acceptance probabilities sum to one, so per-term errors of
            // abs_tol / 2 keep the total within abs_tol.
            let term_q = q.with_tol(0.5 * q.abs_tol);
            let mut sum = CompensatedSum::default();
            for t in c..n {
                let p = accept_probability(n, c, t)?;
                sum.add(p * best_of_t_expectation(w, t, &term_q)?);
            }
            sum.add(skipped * last * moment(w, 0, &term_q)?);
            Ok(sum.value())
        }
    }
}

/// Expected utility `E_c` of the cutoff-`c` policy with its acceptance distribution.
pub fn expected_utility(w: &UtilityFunction, n: usize, c: usize, q: &QuadratureConfig) -> Result<PolicyEval> {
    let value = expected_value(w, n, c, q)?;
    let accept_probs = if c >= 2 {
        (c..=n)
            .map(|t| accept_probability(n, c, t).map(|p| (t, p)))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    Ok(PolicyEval {
        n,
        c,
        expected_utility: value,
        accept_probs,
    })
}

/// `ΔE_c = E_c - E_{c-1}`: closed form for `c >= 3`, direct difference at `c = 2`.
pub fn delta(w: &UtilityFunction, n: usize, c: usize, q: &QuadratureConfig) -> Result<f64> {
    check_n(n)?;
    q.validate()?;
    if c < 2 || c > n {
        return Err(domain(format!("delta needs c in [2, n] = [2, {n}], got {c}")));
    }
    if c == 2 {
        let half = q.with_tol(0.5 * q.abs_tol);
        return Ok(expected_value(w, n, 2, &half)? - expected_value(w, n, 1, &half)?);
    }
    let last = 1.0 / (n - 1) as f64;
    match q.inner_sum_strategy {
        SumStrategy::SwappedKernel => {
            // The weight integrates to zero, so w may be replaced by w - w(0).
            let top = w.value(0.0);
            let tail_tol = kernel_tol(q, w.normalize().sup_abs());
            integrate_with_breaks(
                |x| {
                    let g = w.value(x) - top;
                    if g == 0.0 {
                        return 0.0;
                    }
                    g * (harmonic_kernel(x, c - 1, n - 2, tail_tol) - pow_one_minus(x, c - 2) + last)
                },
                0.0,
                1.0,
                &edges(w, n),
                q,
            )
        }
        SumStrategy::PerTerm => {
            let weight: f64 = (c..n).map(|t| 1.0 / (t - 1) as f64).sum::<f64>() + 1.0 + last;
            let term_q = q.with_tol(q.abs_tol / weight);
            let mut sum = CompensatedSum::default();
            for t in c..n {
                sum.add(moment(w, t - 1, &term_q)? / (t - 1) as f64);
            }
            sum.add(-moment(w, c - 2, &term_q)?);
            sum.add(last * moment(w, 0, &term_q)?);
            Ok(sum.value())
        }
    }
}

/// `Δ²E_c`, which does not depend on `n`. Requires `c >= 3`.
pub fn second_delta(w: &UtilityFunction, c: usize, q: &QuadratureConfig) -> Result<f64> {
    q.validate()?;
    if c < 3 {
        return Err(domain(format!("second difference needs c >= 3, got {c}")));
    }
    let span = (c - 2) as f64;
    let cm1 = (c - 1) as f64;
    let integral = integrate_with_breaks(
        |x| w.value(x) * pow_one_minus(x, c - 3) * (cm1 * x - 1.0),
        0.0,
        1.0,
        &edges(w, c),
        &q.with_tol(q.abs_tol * span),
    )?;
    Ok(integral / span)
}

/// One row of a cutoff table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffRow {
    pub c: usize,
    pub expected_utility: f64,
    /// `None` at `c = 1`.
    pub delta: Option<f64>,
    /// `None` for `c < 3`.
    pub second_delta: Option<f64>,
}

/// Evaluates `E_c`, `ΔE_c` and `Δ²E_c` for each requested cutoff, in parallel.
/// Output order follows `cutoffs`.
pub fn cutoff_table(w: &UtilityFunction, n: usize, cutoffs: &[usize], q: &QuadratureConfig) -> Result<Vec<CutoffRow>> {
    cutoffs
        .par_iter()
        .map(|&c| {
            Ok(CutoffRow {
                c,
                expected_utility: expected_value(w, n, c, q)?,
                delta: if c >= 2 { Some(delta(w, n, c, q)?) } else { None },
                second_delta: if c >= 3 { Some(second_delta(w, c, q)?) } else { None },
            })
        })
        .collect()
}

/// `E_c` for every `c` in `1..=n`, indexed by `c - 1`.
pub fn expected_value_curve(w: &UtilityFunction, n: usize, q: &QuadratureConfig) -> Result<Vec<f64>> {
    check_n(n)?;
    (1..=n).into_par_iter().map(|c| expected_value(w, n, c, q)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    fn minus_x() -> UtilityFunction {
        UtilityFunction::power(1.0).unwrap()
    }

    #[test]
    fn accept_probability_examples() {
        assert_eq!(accept_probability(10, 2, 2).unwrap(), 0.5);
        assert!((accept_probability(10, 2, 10).unwrap() - 1.0 / 9.0).abs() < 1e-16);
        assert!((accept_probability(5, 3, 4).unwrap() - 1.0 / 6.0).abs() < 1e-16);
    }

    #[test]
    fn accept_probability_domain() {
        assert!(accept_probability(10, 1, 3).is_err());
        assert!(accept_probability(10, 4, 3).is_err());
        assert!(accept_probability(10, 4, 11).is_err());
        assert!(accept_probability(1, 1, 1).is_err());
    }

    #[test]
    fn accept_probabilities_telescope() {
        for n in [2, 5, 50, 500] {
            for c in 2..=n {
                let mut s = CompensatedSum::default();
                for t in c..=n {
                    s.add(accept_probability(n, c, t).unwrap());
                }
                assert!((s.value() - 1.0).abs() < 1e-12, "n={n} c={c}");
            }
        }
    }

    #[test]
    fn best_of_t_examples() {
        assert!((best_of_t_expectation(&minus_x(), 1, &q()).unwrap() + 0.5).abs() < 1e-12);
        let neg_one = UtilityFunction::constant(-1.0).unwrap();
        for t in [1, 7, 400] {
            assert!((best_of_t_expectation(&neg_one, t, &q()).unwrap() + 1.0).abs() < 1e-10);
        }
        // Beta integral: t ∫ x (1-x)^(t-1) dx = 1/(t+1)
        assert!((best_of_t_expectation(&minus_x(), 3, &q()).unwrap() + 0.25).abs() < 1e-12);
        assert!(best_of_t_expectation(&minus_x(), 0, &q()).is_err());
    }

    #[test]
    fn expected_utility_examples() {
        let neg_one = UtilityFunction::constant(-1.0).unwrap();
        let e = expected_utility(&neg_one, 50, 17, &q()).unwrap();
        assert!((e.expected_utility + 1.0).abs() < 1e-10);
        assert_eq!(e.accept_probs.len(), 34);

        let e = expected_utility(&minus_x(), 3, 2, &q()).unwrap();
        assert!((e.expected_utility + 5.0 / 12.0).abs() < 1e-12);
        let e = expected_utility(&minus_x(), 2, 2, &q()).unwrap();
        assert!((e.expected_utility + 0.5).abs() < 1e-12);

        let e1 = expected_utility(&minus_x(), 3, 1, &q()).unwrap();
        assert!((e1.expected_utility + 0.5).abs() < 1e-12);
        assert!(e1.accept_probs.is_empty());
    }

    #[test]
    fn expected_utility_domain() {
        assert!(expected_utility(&minus_x(), 1, 1, &q()).is_err());
        assert!(expected_utility(&minus_x(), 5, 0, &q()).is_err());
        assert!(expected_utility(&minus_x(), 5, 6, &q()).is_err());
    }

    #[test]
    fn strategies_agree() {
        let per_term = QuadratureConfig {
            inner_sum_strategy: SumStrategy::PerTerm,
            ..q()
        };
        for w in [minus_x(), UtilityFunction::negated_sqrt(), UtilityFunction::step(0.3).unwrap()] {
            for (n, c) in [(10, 3), (40, 7), (200, 15), (200, 199)] {
                let a = expected_value(&w, n, c, &q()).unwrap();
                let b = expected_value(&w, n, c, &per_term).unwrap();
                assert!((a - b).abs() < 1e-9, "{w} n={n} c={c}: {a} vs {b}");
                let a = delta(&w, n, c, &q()).unwrap();
                let b = delta(&w, n, c, &per_term).unwrap();
                assert!((a - b).abs() < 1e-9, "{w} n={n} c={c}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn delta_examples() {
        let k = UtilityFunction::constant(2.5).unwrap();
        assert!(delta(&k, 20, 5, &q()).unwrap().abs() < 1e-10);
        assert!((delta(&minus_x(), 3, 3, &q()).unwrap() + 1.0 / 12.0).abs() < 1e-12);
        assert!(delta(&minus_x(), 3, 1, &q()).is_err());
    }

    #[test]
    fn second_delta_examples() {
        let k = UtilityFunction::constant(4.0).unwrap();
        assert!(second_delta(&k, 7, &q()).unwrap().abs() < 1e-10);
        assert!(second_delta(&minus_x(), 3, &q()).unwrap() <= 0.0);
        for n in [6, 10, 100] {
            let fd = delta(&minus_x(), n, 4, &q()).unwrap() - delta(&minus_x(), n, 3, &q()).unwrap();
            assert!((second_delta(&minus_x(), 4, &q()).unwrap() - fd).abs() < 1e-8);
        }
        assert!(second_delta(&minus_x(), 2, &q()).is_err());
    }

    #[test]
    fn kernel_integrates_to_zero() {
        for c in 3..=100usize {
            let cm1 = (c - 1) as f64;
            let v = integrate(|x| pow_one_minus(x, c - 3) * (cm1 * x - 1.0), 0.0, 1.0, &q()).unwrap();
            assert!(v.abs() < 1e-10, "c={c}: {v}");
        }
    }

    #[test]
    fn harmonic_kernel_matches_direct_sum() {
        for &x in &[0.0, 1e-4, 0.01, 0.3, 1.0] {
            let direct: f64 = (5..=3000).map(|m| (1.0f64 - x).powi(m as i32) / m as f64).sum();
            let k = harmonic_kernel(x, 5, 3000, 1e-16);
            assert!((k - direct).abs() < 1e-11 * direct.max(1.0), "x={x}");
        }
    }

    #[test]
    fn table_rows_follow_request_order() {
        let rows = cutoff_table(&minus_x(), 10, &[4, 1, 2], &q()).unwrap();
        assert_eq!(rows.iter().map(|r| r.c).collect::<Vec<_>>(), vec![4, 1, 2]);
        assert!(rows[1].delta.is_none() && rows[2].second_delta.is_none());
        assert!(rows[0].second_delta.is_some());
    }
}
