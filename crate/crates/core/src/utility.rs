//! Nonincreasing utility functions over relative rank.
//!
//! Relative rank lives in `[0, 1]` and **`x = 0` is the best applicant**: a
//! utility `w` pays `w(x)` for accepting an applicant of relative rank `x`, and
//! must be nonincreasing. A rank problem with `n` applicants pays
//! `v(r) = w(r / n)` for overall rank `r` (1 = best).
//!
//! # Textual form
//!
//! | spec                      | utility                                  |
//! |---------------------------|------------------------------------------|
//! | `linear`                  | `1 - x`                                  |
//! | `const:<v>`               | `v`                                      |
//! | `power:<p>`               | `-x^p`, `p > 0`                          |
//! | `nsqrt`                   | `-sqrt(x)`                               |
//! | `step:<q>`                | `0` for `x < q`, `-1` otherwise          |
//! | `pwl:x0,y0;x1,y1;...`     | piecewise linear through the knots       |
//! | `poly:a0,a1,...`          | `a0 + a1 x + a2 x^2 + ...`               |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::quadrature::{integrate_with_breaks, QuadratureConfig};

/// Default density of the monotonicity validation grid.
pub const VALIDATION_GRID: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum UtilityKind {
    /// `1 - x`.
    Linear,
    Constant { value: f64 },
    /// `-x^exponent`.
    Power { exponent: f64 },
    /// `-sqrt(x)`; not Lipschitz at the top.
    NegatedSqrt,
    /// `0` below `threshold`, `-1` from `threshold` on.
    Step { threshold: f64 },
    PiecewiseLinear { knots: Vec<(f64, f64)> },
    /// Coefficients in increasing degree.
    Polynomial { coefficients: Vec<f64> },
}

/// A validated nonincreasing utility `x ↦ scale * kind(x) + offset` on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityFunction {
    kind: UtilityKind,
    scale: f64,
    offset: f64,
}

impl UtilityFunction {
    fn from_kind(kind: UtilityKind) -> Result<Self> {
        let w = Self {
            kind,
            scale: 1.0,
            offset: 0.0,
        };
        w.validate(VALIDATION_GRID)?;
        Ok(w)
    }

    pub fn linear() -> Self {
        Self::from_kind(UtilityKind::Linear).expect("linear utility is valid")
    }

    pub fn constant(value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(domain(format!("constant utility must be finite, got {value}")));
        }
        Self::from_kind(UtilityKind::Constant { value })
    }

    pub fn power(exponent: f64) -> Result<Self> {
        if !(exponent > 0.0) || !exponent.is_finite() {
            return Err(domain(format!("power exponent must be positive, got {exponent}")));
        }
        Self::from_kind(UtilityKind::Power { exponent })
    }

    pub fn negated_sqrt() -> Self {
        Self::from_kind(UtilityKind::NegatedSqrt).expect("-sqrt(x) is valid")
    }

    pub fn step(threshold: f64) -> Result<Self> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(domain(format!("step threshold must lie in (0, 1), got {threshold}")));
        }
        Self::from_kind(UtilityKind::Step { threshold })
    }

    /// Piecewise-linear utility. Knots must start at `x = 0`, end at `x = 1`,
    /// be strictly increasing in `x` and nonincreasing in `y`.
    pub fn piecewise_linear(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(domain("piecewise-linear utility needs at least two knots"));
        }
        if knots.iter().any(|&(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(domain("piecewise-linear knots must be finite"));
        }
        if knots[0].0 != 0.0 || knots[knots.len() - 1].0 != 1.0 {
            return Err(domain("piecewise-linear knots must start at x = 0 and end at x = 1"));
        }
        for pair in knots.windows(2) {
            let ((x0, y0), (x1, y1)) = (pair[0], pair[1]);
            if x1 <= x0 {
                return Err(domain(format!("knot x values must be strictly increasing ({x0} then {x1})")));
            }
            if y1 > y0 {
                return Err(domain(format!(
                    "utility must be nonincreasing, but rises from {y0} at x = {x0} to {y1} at x = {x1}"
                )));
            }
        }
        Self::from_kind(UtilityKind::PiecewiseLinear { knots })
    }

    /// Polynomial utility; monotonicity is checked on the validation grid.
    pub fn polynomial(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.is_empty() || coefficients.iter().any(|a| !a.is_finite()) {
            return Err(domain("polynomial needs at least one finite coefficient"));
        }
        Self::from_kind(UtilityKind::Polynomial { coefficients })
    }

    /// `scale * self + offset`. Negative scales would make the utility increasing.
    pub fn affine(&self, scale: f64, offset: f64) -> Result<Self> {
        if !(scale >= 0.0) || !scale.is_finite() || !offset.is_finite() {
            return Err(domain(format!("affine map needs finite scale >= 0, got scale {scale}")));
        }
        Ok(Self {
            kind: self.kind.clone(),
            scale: self.scale * scale,
            offset: self.offset * scale + offset,
        })
    }

    /// `self + shift`.
    pub fn shifted(&self, shift: f64) -> Result<Self> {
        self.affine(1.0, shift)
    }

    pub fn kind(&self) -> &UtilityKind {
        &self.kind
    }

    /// `w(x)`, rejecting `x` outside `[0, 1]`.
    pub fn evaluate(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(domain(format!("relative rank must lie in [0, 1], got {x}")));
        }
        Ok(self.value(x))
    }

    /// `w(x)` without the domain check; `x` must lie in `[0, 1]`.
    pub fn value(&self, x: f64) -> f64 {
        let raw = match &self.kind {
            UtilityKind::Linear => 1.0 - x,
            UtilityKind::Constant { value } => *value,
            UtilityKind::Power { exponent } => -x.powf(*exponent),
            UtilityKind::NegatedSqrt => -x.sqrt(),
            UtilityKind::Step { threshold } => {
                if x < *threshold {
                    0.0
                } else {
                    -1.0
                }
            }
            UtilityKind::PiecewiseLinear { knots } => interpolate(knots, x),
            UtilityKind::Polynomial { coefficients } => {
                coefficients.iter().rev().fold(0.0, |acc, a| acc * x + a)
            }
        };
        self.scale * raw + self.offset
    }

    /// Checks that `w` is nonincreasing on a uniform grid of `grid + 1` points.
    pub fn validate(&self, grid: usize) -> Result<()> {
        if grid < 1 {
            return Err(domain("validation grid must have at least one cell"));
        }
        let mut prev = self.value(0.0);
        if !prev.is_finite() {
            return Err(domain("utility is not finite at x = 0"));
        }
        for i in 1..=grid {
            let x = i as f64 / grid as f64;
            let y = self.value(x);
            if !y.is_finite() {
                return Err(domain(format!("utility is not finite at x = {x}")));
            }
            if y > prev + 1e-12 * (1.0 + prev.abs()) {
                return Err(domain(format!("utility must be nonincreasing, but rises to {y} at x = {x}")));
            }
            prev = y;
        }
        Ok(())
    }

    /// `w - w(0)`: zero at the top and nonpositive everywhere.
    pub fn normalize(&self) -> Self {
        Self {
            kind: self.kind.clone(),
            scale: self.scale,
            offset: self.offset - self.value(0.0),
        }
    }

    /// Interior points where `w` is discontinuous.
    pub fn discontinuities(&self) -> Vec<f64> {
        match &self.kind {
            UtilityKind::Step { threshold } if self.scale != 0.0 => vec![*threshold],
            _ => Vec::new(),
        }
    }

    /// Interior points where `w` is discontinuous or not smooth; quadrature
    /// uses them as mandatory panel boundaries.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.kind {
            UtilityKind::Step { threshold } => vec![*threshold],
            UtilityKind::PiecewiseLinear { knots } => knots[1..knots.len() - 1].iter().map(|k| k.0).collect(),
            _ => Vec::new(),
        }
    }

    /// `sup |w|` on `[0, 1]`; attained at an endpoint since `w` is monotone.
    pub fn sup_abs(&self) -> f64 {
        self.value(0.0).abs().max(self.value(1.0).abs())
    }

    pub fn is_constant(&self) -> bool {
        self.value(0.0) == self.value(1.0)
    }
}

fn interpolate(knots: &[(f64, f64)], x: f64) -> f64 {
    let idx = knots.partition_point(|k| k.0 <= x);
    if idx == 0 {
        return knots[0].1;
    }
    if idx >= knots.len() {
        return knots[knots.len() - 1].1;
    }
    let (x0, y0) = knots[idx - 1];
    let (x1, y1) = knots[idx];
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

impl fmt::Display for UtilityFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            UtilityKind::Linear => write!(f, "linear")?,
            UtilityKind::Constant { value } => write!(f, "const:{value}")?,
            UtilityKind::Power { exponent } => write!(f, "power:{exponent}")?,
            UtilityKind::NegatedSqrt => write!(f, "nsqrt")?,
            UtilityKind::Step { threshold } => write!(f, "step:{threshold}")?,
            UtilityKind::PiecewiseLinear { knots } => {
                let parts: Vec<String> = knots.iter().map(|(x, y)| format!("{x},{y}")).collect();
                write!(f, "pwl:{}", parts.join(";"))?
            }
            UtilityKind::Polynomial { coefficients } => {
                let parts: Vec<String> = coefficients.iter().map(|a| a.to_string()).collect();
                write!(f, "poly:{}", parts.join(","))?
            }
        }
        if self.scale != 1.0 || self.offset != 0.0 {
            write!(f, "*{}+{}", self.scale, self.offset)?;
        }
        Ok(())
    }
}

fn parse_number(token: &str) -> Result<f64> {
    let t = token.trim();
    t.parse::<f64>().map_err(|_| Error::Parse {
        token: t.to_string(),
        reason: "expected a number".into(),
    })
}

fn with_token(token: &str, err: Error) -> Error {
    match err {
        Error::Domain(reason) => Error::Parse {
            token: token.to_string(),
            reason,
        },
        other => other,
    }
}

impl FromStr for UtilityFunction {
    type Err = Error;

    fn from_str(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        let (head, arg) = match spec.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (spec, None),
        };
        let need_arg = || {
            arg.ok_or_else(|| Error::Parse {
                token: spec.to_string(),
                reason: format!("`{head}` needs an argument after `:`"),
            })
        };
        let parsed = match head {
            "linear" if arg.is_none() => Ok(Self::linear()),
            "nsqrt" if arg.is_none() => Ok(Self::negated_sqrt()),
            "const" => Self::constant(parse_number(need_arg()?)?),
            "power" => Self::power(parse_number(need_arg()?)?),
            "step" => Self::step(parse_number(need_arg()?)?),
            "pwl" => {
                let mut knots = Vec::new();
                for pair in need_arg()?.split(';').filter(|p| !p.trim().is_empty()) {
                    let (x, y) = pair.split_once(',').ok_or_else(|| Error::Parse {
                        token: pair.to_string(),
                        reason: "expected a knot `x,y`".into(),
                    })?;
                    knots.push((parse_number(x)?, parse_number(y)?));
                }
                Self::piecewise_linear(knots)
            }
            "poly" => {
                let coefficients = need_arg()?
                    .split(',')
                    .map(parse_number)
                    .collect::<Result<Vec<_>>>()?;
                Self::polynomial(coefficients)
            }
            _ => {
                return Err(Error::Parse {
                    token: spec.to_string(),
                    reason: "unknown utility; expected linear, const:<v>, power:<p>, nsqrt, step:<q>, pwl:<knots> or poly:<coeffs>".into(),
                })
            }
        };
        parsed.map_err(|e| with_token(spec, e))
    }
}

/// Lipschitz estimate of `w` near the top.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "value", rename_all = "kebab-case")]
pub enum Lipschitz {
    Bounded(f64),
    /// The slope estimate keeps growing as the grid is refined.
    Unbounded,
}

impl Lipschitz {
    pub fn bounded(self) -> Option<f64> {
        match self {
            Lipschitz::Bounded(l) => Some(l),
            Lipschitz::Unbounded => None,
        }
    }
}

/// Grid refinement settings for [`lipschitz_near_zero_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzConfig {
    pub grid: usize,
    pub refinement_factor: usize,
    /// Slope growth above which the estimate is declared divergent.
    pub growth_ratio: f64,
    pub refinements: u32,
}

impl Default for LipschitzConfig {
    fn default() -> Self {
        Self {
            grid: 1024,
            refinement_factor: 2,
            growth_ratio: 1.5,
            refinements: 3,
        }
    }
}

fn max_slope(w: &UtilityFunction, epsilon: f64, cells: usize) -> f64 {
    let h = epsilon / cells as f64;
    let (mut px, mut py) = (0.0, w.value(0.0));
    let mut best = 0.0f64;
    for i in 1..=cells {
        let x = h * i as f64;
        let y = w.value(x);
        best = best.max((y - py).abs() / (x - px));
        (px, py) = (x, y);
    }
    best
}

/// Grid estimate of the Lipschitz constant of `w` on `[0, epsilon]`.
pub fn lipschitz_near_zero(w: &UtilityFunction, epsilon: f64, grid: usize) -> Result<Lipschitz> {
    lipschitz_near_zero_with(
        w,
        epsilon,
        &LipschitzConfig {
            grid,
            ..LipschitzConfig::default()
        },
    )
}

/// Max adjacent-pair slope on `[0, epsilon]`, refined `cfg.refinements` times.
///
/// The estimate is `Unbounded` when a single refinement, or all refinements
/// together, grow it by more than `cfg.growth_ratio`; otherwise the finest
/// estimate is returned.
pub fn lipschitz_near_zero_with(w: &UtilityFunction, epsilon: f64, cfg: &LipschitzConfig) -> Result<Lipschitz> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(domain(format!("epsilon must lie in (0, 1], got {epsilon}")));
    }
    if cfg.grid < 2 {
        return Err(domain(format!("grid must be at least 2, got {}", cfg.grid)));
    }
    if cfg.refinement_factor < 2 || !(cfg.growth_ratio > 1.0) {
        return Err(domain("refinement factor must be >= 2 and growth ratio > 1"));
    }
    let mut cells = cfg.grid;
    let first = max_slope(w, epsilon, cells);
    let mut last = first;
    for _ in 0..cfg.refinements {
        cells *= cfg.refinement_factor;
        let next = max_slope(w, epsilon, cells);
        if next > cfg.growth_ratio * last && next > 1e-12 {
            return Ok(Lipschitz::Unbounded);
        }
        last = next;
    }
    if last > cfg.growth_ratio * first && last > 1e-12 {
        return Ok(Lipschitz::Unbounded);
    }
    Ok(Lipschitz::Bounded(last))
}

/// `ŵ = ∫₀¹ (w(0) - w(x)) dx`, the mean utility gap to the top.
pub fn w_hat(w: &UtilityFunction, tol: f64) -> Result<f64> {
    let top = w.value(0.0);
    let q = QuadratureConfig::default().with_tol(tol);
    let v = integrate_with_breaks(|x| top - w.value(x), 0.0, 1.0, &w.breakpoints(), &q)?;
    Ok(v.max(0.0))
}

/// Constants of the normalized utility that enter the cutoff bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityConstants {
    /// Lipschitz constant of `w` on `[0, epsilon]`.
    pub lipschitz: Lipschitz,
    pub epsilon: f64,
    /// `w - w(0)` takes values in `[-bound, 0]`.
    pub bound: f64,
    pub w_hat: f64,
}

/// Largest neighbourhood of the top used for the Lipschitz estimate: `0.1`,
/// or half the first discontinuity when that is closer.
pub fn default_epsilon(w: &UtilityFunction) -> f64 {
    w.discontinuities()
        .into_iter()
        .fold(0.1, |eps: f64, d| eps.min(0.5 * d))
}

/// Extracts the constants from `normalize(w)`. `epsilon` must stay below the
/// first discontinuity of `w`.
pub fn constants(w: &UtilityFunction, epsilon: f64, tol: f64) -> Result<UtilityConstants> {
    if let Some(d) = w.discontinuities().into_iter().find(|&d| d <= epsilon) {
        return Err(domain(format!(
            "epsilon {epsilon} reaches the discontinuity at x = {d}; choose epsilon < {d}"
        )));
    }
    let normalized = w.normalize();
    let lipschitz = lipschitz_near_zero(&normalized, epsilon, LipschitzConfig::default().grid)?;
    Ok(UtilityConstants {
        lipschitz,
        epsilon,
        bound: -normalized.value(1.0),
        w_hat: w_hat(&normalized, tol)?,
    })
}
