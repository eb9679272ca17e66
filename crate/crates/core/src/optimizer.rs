//! Optimal cutoff search.
//!
//! `E_c` is concave in `c` for nonincreasing `w` (`Δ²E_c <= 0`), so `ΔE_c` is
//! nonincreasing and the optimum is the largest `c` with `ΔE_c > 0`. That `c`
//! is located by binary search on the sign of `ΔE_c`; a full scan of `E_c`
//! serves as the oracle.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::evaluator::{delta, expected_value};
use crate::quadrature::QuadratureConfig;
use crate::utility::{constants, default_epsilon, Lipschitz, UtilityFunction};

/// Differences within this band of zero count as ties.
pub const SIGN_TOL: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutoffMethod {
    BinarySearch,
    FullScan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffResult {
    pub c_opt: usize,
    /// `E_{c_opt}`.
    pub value: f64,
    pub method: CutoffMethod,
    /// `sqrt((L / ŵ) n)` when the constants give a usable bound.
    pub bound: Option<f64>,
}

/// Why no finite cutoff bound exists for a utility.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundInapplicable {
    /// `w` is not Lipschitz at the top.
    UnboundedLipschitz,
    /// `ŵ = 0`: `w` is constant.
    ZeroMeanGap,
    /// `L = 0`: `w` is flat near the top and the leading-order bound vanishes.
    ZeroLipschitz,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutoffBound {
    Finite(f64),
    Inapplicable(BoundInapplicable),
}

impl CutoffBound {
    pub fn finite(self) -> Option<f64> {
        match self {
            CutoffBound::Finite(b) => Some(b),
            CutoffBound::Inapplicable(_) => None,
        }
    }
}

/// Asymptotic upper bound `sqrt((L / ŵ) n)` on the optimal cutoff, with `L`
/// measured on `[0, epsilon]` of the normalized utility.
pub fn cutoff_upper_bound(w: &UtilityFunction, n: usize, epsilon: f64) -> Result<CutoffBound> {
    if n < 2 {
        return Err(domain(format!("need at least two applicants, got n = {n}")));
    }
    let k = constants(w, epsilon, 1e-12)?;
    let lipschitz = match k.lipschitz {
        Lipschitz::Unbounded => return Ok(CutoffBound::Inapplicable(BoundInapplicable::UnboundedLipschitz)),
        Lipschitz::Bounded(l) => l,
    };
    if k.w_hat <= 1e-12 {
        return Ok(CutoffBound::Inapplicable(BoundInapplicable::ZeroMeanGap));
    }
    if lipschitz <= 1e-12 {
        return Ok(CutoffBound::Inapplicable(BoundInapplicable::ZeroLipschitz));
    }
    Ok(CutoffBound::Finite((lipschitz / k.w_hat * n as f64).sqrt()))
}

fn bound_for(w: &UtilityFunction, n: usize) -> Result<Option<f64>> {
    Ok(cutoff_upper_bound(w, n, default_epsilon(w))?.finite())
}

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        return Err(domain(format!("need at least two applicants, got n = {n}")));
    }
    Ok(())
}

/// Evaluates `E_c` for every `c ∈ [1, n]` and returns the argmax. A later
/// cutoff replaces the incumbent only if it is better by more than
/// [`SIGN_TOL`], so ties go to the smallest `c`.
pub fn optimal_cutoff_scan(w: &UtilityFunction, n: usize, q: &QuadratureConfig) -> Result<CutoffResult> {
    check_n(n)?;
    let values: Vec<f64> = (1..=n)
        .into_par_iter()
        .map(|c| expected_value(w, n, c, q))
        .collect::<Result<_>>()?;
    let (mut best_c, mut best) = (1, values[0]);
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > best + SIGN_TOL {
            best_c = i + 1;
            best = v;
        }
    }
    Ok(CutoffResult {
        c_opt: best_c,
        value: best,
        method: CutoffMethod::FullScan,
        bound: bound_for(w, n)?,
    })
}

/// Binary search for the largest `c` with `ΔE_c > SIGN_TOL`, using
/// `O(log n)` evaluations of `ΔE_c`.
///
/// When no such `c` exists the optimum is `c = 1`. When the difference just
/// past the optimum is within [`SIGN_TOL`] of zero the tie plateau is scanned
/// and its smallest maximizer returned.
pub fn optimal_cutoff(w: &UtilityFunction, n: usize, q: &QuadratureConfig) -> Result<CutoffResult> {
    check_n(n)?;
    let rising = |c: usize| -> Result<bool> { Ok(delta(w, n, c, q)? > SIGN_TOL) };

    let c_star = if !rising(2)? {
        1
    } else if rising(n)? {
        n
    } else {
        // rising(lo) holds, rising(hi) does not.
        let (mut lo, mut hi) = (2, n);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if rising(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };

    let mut c_opt = c_star;
    let mut value = expected_value(w, n, c_star, q)?;
    let mut c = c_star + 1;
    while c <= n && delta(w, n, c, q)?.abs() <= SIGN_TOL {
        let v = expected_value(w, n, c, q)?;
        if v > value + SIGN_TOL {
            c_opt = c;
            value = v;
        }
        c += 1;
    }

    Ok(CutoffResult {
        c_opt,
        value,
        method: CutoffMethod::BinarySearch,
        bound: bound_for(w, n)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    #[test]
    fn constant_utility_ties_to_first_cutoff() {
        let w = UtilityFunction::constant(-1.0).unwrap();
        let scan = optimal_cutoff_scan(&w, 10, &q()).unwrap();
        assert_eq!(scan.c_opt, 1);
        assert!((scan.value + 1.0).abs() < 1e-10);
        assert_eq!(optimal_cutoff(&w, 10, &q()).unwrap().c_opt, 1);
        assert_eq!(scan.bound, None);
    }

    #[test]
    fn tiny_linear_instance() {
        let w = UtilityFunction::power(1.0).unwrap();
        let scan = optimal_cutoff_scan(&w, 3, &q()).unwrap();
        assert_eq!(scan.c_opt, 2);
        assert!((scan.value + 5.0 / 12.0).abs() < 1e-12);
        assert_eq!(optimal_cutoff(&w, 3, &q()).unwrap().c_opt, 2);
    }

    #[test]
    fn linear_n100_near_sqrt_n() {
        let w = UtilityFunction::power(1.0).unwrap();
        let scan = optimal_cutoff_scan(&w, 100, &q()).unwrap();
        assert_eq!(scan.c_opt, 10);
        let bs = optimal_cutoff(&w, 100, &q()).unwrap();
        assert_eq!(bs.c_opt, scan.c_opt);
        assert_eq!(bs.method, CutoffMethod::BinarySearch);
        assert!((bs.value - scan.value).abs() < 1e-10);
    }

    #[test]
    fn step_utility_matches_scan() {
        let w = UtilityFunction::step(0.5).unwrap();
        let scan = optimal_cutoff_scan(&w, 50, &q()).unwrap();
        assert_eq!(optimal_cutoff(&w, 50, &q()).unwrap().c_opt, scan.c_opt);
    }

    #[test]
    fn bound_examples() {
        let minus_x = UtilityFunction::power(1.0).unwrap();
        let b = cutoff_upper_bound(&minus_x, 100, 0.1).unwrap().finite().unwrap();
        assert!((b - 200f64.sqrt()).abs() < 1e-6, "{b}");
        let zero = UtilityFunction::constant(0.0).unwrap();
        assert_eq!(
            cutoff_upper_bound(&zero, 100, 0.1).unwrap(),
            CutoffBound::Inapplicable(BoundInapplicable::ZeroMeanGap)
        );
        assert_eq!(
            cutoff_upper_bound(&UtilityFunction::negated_sqrt(), 100, 0.1).unwrap(),
            CutoffBound::Inapplicable(BoundInapplicable::UnboundedLipschitz)
        );
        assert_eq!(
            cutoff_upper_bound(&UtilityFunction::step(0.3).unwrap(), 100, 0.1).unwrap(),
            CutoffBound::Inapplicable(BoundInapplicable::ZeroLipschitz)
        );
        assert!(cutoff_upper_bound(&minus_x, 1, 0.1).is_err());
    }

    #[test]
    fn rejects_single_applicant() {
        let w = UtilityFunction::linear();
        assert!(optimal_cutoff(&w, 1, &q()).is_err());
        assert!(optimal_cutoff_scan(&w, 1, &q()).is_err());
    }
}
