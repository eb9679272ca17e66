//! Adaptive Gauss-Legendre quadrature.
//!
//! Each panel is integrated with a 10-point Gauss-Legendre rule; the error of
//! a panel is estimated by comparing it with the sum of its two halves and the
//! panel is bisected until the estimate drops below its share of the
//! tolerance. Callers may pass interior breakpoints (discontinuities or kinks
//! of the integrand), which are always used as panel boundaries.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// How the `t`-sum in the expected-utility formulas is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SumStrategy {
    /// One quadrature per term of the sum.
    PerTerm,
    /// Exchange sum and integral: integrate `w` against the summed kernel once.
    SwappedKernel,
}

impl std::fmt::Display for SumStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SumStrategy::PerTerm => "per-term",
            SumStrategy::SwappedKernel => "swapped-kernel",
        })
    }
}

impl std::str::FromStr for SumStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-term" => Ok(SumStrategy::PerTerm),
            "swapped-kernel" => Ok(SumStrategy::SwappedKernel),
            other => Err(Error::Parse {
                token: other.to_string(),
                reason: "expected `per-term` or `swapped-kernel`".into(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    /// Target absolute error of each integral.
    pub abs_tol: f64,
    /// Maximum bisection depth of a panel.
    pub max_depth: u32,
    pub inner_sum_strategy: SumStrategy,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            max_depth: 40,
            inner_sum_strategy: SumStrategy::SwappedKernel,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0) || !self.abs_tol.is_finite() {
            return Err(domain(format!("abs_tol must be positive, got {}", self.abs_tol)));
        }
        if self.max_depth < 1 {
            return Err(domain("max_depth must be at least 1"));
        }
        Ok(())
    }

    /// Same configuration with a different tolerance.
    pub fn with_tol(&self, abs_tol: f64) -> Self {
        Self { abs_tol, ..*self }
    }

    /// Stable textual key, used to tag cached results.
    pub fn cache_key(&self) -> String {
        format!(
            "abs_tol={:e};max_depth={};strategy={}",
            self.abs_tol, self.max_depth, self.inner_sum_strategy
        )
    }
}

/// Value of an integral together with its estimated absolute error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
}

// Positive nodes and weights of the 10-point Gauss-Legendre rule on [-1, 1].
const GL10: [(f64, f64); 5] = [
    (0.148_874_338_981_631_210_88, 0.295_524_224_714_752_870_17),
    (0.433_395_394_129_247_190_8, 0.269_266_719_309_996_355_09),
    (0.679_409_568_299_024_406_23, 0.219_086_362_515_982_044),
    (0.865_063_366_688_984_510_73, 0.149_451_349_150_580_593_15),
    (0.973_906_528_517_171_720_08, 0.066_671_344_308_688_137_594),
];

fn panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut sum = 0.0;
    for &(x, w) in &GL10 {
        let dx = half * x;
        sum += w * (f(mid - dx) + f(mid + dx));
    }
    sum * half
}

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

struct Accumulator {
    value: CompensatedSum,
    error: f64,
    unconverged: bool,
}

fn adapt<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    max_depth: u32,
    acc: &mut Accumulator,
) {
    let mid = 0.5 * (a + b);
    let left = panel(f, a, mid);
    let right = panel(f, mid, b);
    let refined = left + right;
    let err = (refined - whole).abs();
    // Below this the difference is rounding noise.
    let floor = 64.0 * f64::EPSILON * (left.abs() + right.abs());
    if err <= tol.max(floor) || !refined.is_finite() {
        acc.value.add(refined);
        acc.error += err;
        return;
    }
    if depth >= max_depth || mid <= a || mid >= b {
        acc.value.add(refined);
        acc.error += err;
        acc.unconverged = true;
        return;
    }
    adapt(f, a, mid, left, 0.5 * tol, depth + 1, max_depth, acc);
    adapt(f, mid, b, right, 0.5 * tol, depth + 1, max_depth, acc);
}

/// Integrates `f` over `[a, b]`, returning the value and its error estimate
/// without failing on non-convergence.
pub fn integrate_estimate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    q: &QuadratureConfig,
) -> Result<(Integral, bool)> {
    q.validate()?;
    if !(a <= b) || !a.is_finite() || !b.is_finite() {
        return Err(domain(format!("invalid integration interval [{a}, {b}]")));
    }
    if a == b {
        return Ok((Integral { value: 0.0, error: 0.0 }, true));
    }
    let mut edges = Vec::with_capacity(breakpoints.len() + 2);
    edges.push(a);
    edges.extend(breakpoints.iter().copied().filter(|&x| x > a && x < b));
    edges.push(b);
    edges.sort_by(f64::total_cmp);
    edges.dedup();

    let mut acc = Accumulator {
        value: CompensatedSum::default(),
        error: 0.0,
        unconverged: false,
    };
    let width = b - a;
    for seg in edges.windows(2) {
        let (lo, hi) = (seg[0], seg[1]);
        let tol = q.abs_tol * (hi - lo) / width;
        let whole = panel(&f, lo, hi);
        adapt(&f, lo, hi, whole, tol, 1, q.max_depth, &mut acc);
    }
    let value = acc.value.value();
    if !value.is_finite() {
        return Err(Error::Numeric(format!("integrand not finite on [{a}, {b}]")));
    }
    let converged = !acc.unconverged || acc.error <= q.abs_tol;
    Ok((Integral { value, error: acc.error }, converged))
}

/// Dyadic points `1/2, 1/4, ...` down to `1/(16 m)`.
///
/// Integrands like `(1-x)^m` live in `[0, O(1/m)]`, where no node of a panel
/// spanning `[0, 1]` may land; these boundaries make the adaptive scheme see
/// the peak.
pub fn dyadic_breakpoints(m: usize) -> Vec<f64> {
    let floor = 1.0 / (16.0 * m.max(1) as f64);
    std::iter::successors(Some(0.5f64), |x| Some(0.5 * x))
        .take_while(|&x| x >= floor)
        .collect()
}

/// Adaptive quadrature of `f` over `[a, b]` to absolute tolerance `q.abs_tol`.
///
/// Fails with [`Error::Quadrature`] (carrying the best estimate and its error
/// bound) when `q.max_depth` bisections are not enough.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, q: &QuadratureConfig) -> Result<f64> {
    integrate_with_breaks(f, a, b, &[], q)
}

/// Like [`integrate`], with mandatory interior panel boundaries.
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    q: &QuadratureConfig,
) -> Result<f64> {
    let (integral, converged) = integrate_estimate(f, a, b, breakpoints, q)?;
    if converged {
        Ok(integral.value)
    } else {
        Err(Error::Quadrature {
            estimate: integral.value,
            error_bound: integral.error,
            tolerance: q.abs_tol,
        })
    }
}
