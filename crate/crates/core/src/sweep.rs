//! Asymptotics experiments: optimal cutoffs over a grid of `n` and log-log
//! power-law fits of `c_opt` against `n`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::format::{fmt_g12, fmt_opt};
use crate::optimizer::optimal_cutoff;
use crate::quadrature::QuadratureConfig;
use crate::topk::optimal_cutoff_topk;
use crate::utility::UtilityFunction;

pub const DEFAULT_UTILITY_GRID: [usize; 6] = [100, 316, 1000, 3162, 10_000, 100_000];
pub const DEFAULT_TOPK_GRID: [usize; 5] = [200, 400, 800, 1600, 3200];

pub const CSV_HEADER: [&str; 6] = ["objective", "n", "c_opt", "value", "bound", "exponent_running"];

/// What is being optimized at each grid point.
#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    Utility(UtilityFunction),
    TopK(usize),
}

impl Objective {
    pub fn default_grid(&self) -> Vec<usize> {
        match self {
            Objective::Utility(_) => DEFAULT_UTILITY_GRID.to_vec(),
            Objective::TopK(_) => DEFAULT_TOPK_GRID.to_vec(),
        }
    }
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Objective::Utility(w) => write!(f, "utility:{w}"),
            Objective::TopK(k) => write!(f, "topk:{k}"),
        }
    }
}

impl std::str::FromStr for Objective {
    type Err = Error;

    /// `utility:<w-spec>` or `topk:<k>`.
    fn from_str(s: &str) -> Result<Self> {
        if let Some(spec) = s.strip_prefix("utility:") {
            return Ok(Objective::Utility(spec.parse()?));
        }
        if let Some(k) = s.strip_prefix("topk:") {
            return match k.parse::<usize>() {
                Ok(k) if k >= 1 => Ok(Objective::TopK(k)),
                _ => Err(Error::Parse {
                    token: k.to_string(),
                    reason: "k must be a positive integer".into(),
                }),
            };
        }
        Err(Error::Parse {
            token: s.to_string(),
            reason: "expected `utility:<w-spec>` or `topk:<k>`".into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    /// Display form of the [`Objective`].
    pub objective: String,
    pub n: usize,
    pub c_opt: usize,
    /// `E_{c_opt}` for utilities, the model `P(c_opt)` for top-k.
    pub value: f64,
    /// Cutoff upper bound; utilities with finite `L > 0` and `ŵ > 0` only.
    pub bound: Option<f64>,
    /// Exact top-k success probability at `c_opt`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_value: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub log_intercept: f64,
    pub r_squared: f64,
}

impl PowerLawFit {
    pub fn predict(&self, n: f64) -> f64 {
        (self.log_intercept + self.exponent * n.ln()).exp()
    }
}

fn check_grid(grid: &[usize]) -> Result<()> {
    if grid.is_empty() {
        return Err(domain("empty n grid"));
    }
    if let Some(&n) = grid.iter().find(|&&n| n < 3) {
        return Err(domain(format!("grid points must be at least 3, got {n}")));
    }
    if grid.windows(2).any(|p| p[0] >= p[1]) {
        return Err(domain("n grid must be strictly increasing"));
    }
    Ok(())
}

/// One grid point.
pub fn sweep_point(objective: &Objective, n: usize, q: &QuadratureConfig) -> Result<SweepRecord> {
    let label = objective.to_string();
    match objective {
        Objective::Utility(w) => {
            let r = optimal_cutoff(w, n, q)?;
            Ok(SweepRecord {
                objective: label,
                n,
                c_opt: r.c_opt,
                value: r.value,
                bound: r.bound,
                exact_value: None,
            })
        }
        Objective::TopK(k) => {
            let r = optimal_cutoff_topk(n, *k)?;
            Ok(SweepRecord {
                objective: label,
                n,
                c_opt: r.c_opt,
                value: r.model_probability,
                bound: None,
                exact_value: Some(r.exact_probability),
            })
        }
    }
}

/// One record per grid point, in grid order.
pub fn run_sweep(objective: &Objective, grid: &[usize], q: &QuadratureConfig) -> Result<Vec<SweepRecord>> {
    check_grid(grid)?;
    q.validate()?;
    grid.par_iter().map(|&n| sweep_point(objective, n, q)).collect()
}

/// [`run_sweep`] that reuses and extends `cache`.
pub fn run_sweep_cached(
    objective: &Objective,
    grid: &[usize],
    q: &QuadratureConfig,
    cache: &mut SweepCache,
) -> Result<Vec<SweepRecord>> {
    check_grid(grid)?;
    q.validate()?;
    let missing: Vec<usize> = grid
        .iter()
        .copied()
        .filter(|&n| cache.get(objective, n, q).is_none())
        .collect();
    let fresh: Vec<SweepRecord> = missing
        .par_iter()
        .map(|&n| sweep_point(objective, n, q))
        .collect::<Result<_>>()?;
    for r in fresh {
        cache.insert(objective, q, r);
    }
    Ok(grid
        .iter()
        .map(|&n| cache.get(objective, n, q).cloned().expect("filled above"))
        .collect())
}

/// Least-squares fit of `ln c_opt = a + b ln n`.
pub fn fit_power_law(records: &[SweepRecord]) -> Result<PowerLawFit> {
    fit_power_law_with(records, false)
}

/// [`fit_power_law`], optionally ignoring the record with the smallest `n`.
pub fn fit_power_law_with(records: &[SweepRecord], drop_smallest: bool) -> Result<PowerLawFit> {
    let mut points: Vec<(f64, f64)> = records.iter().map(|r| (r.n as f64, r.c_opt as f64)).collect();
    if drop_smallest && !points.is_empty() {
        let smallest = (0..points.len())
            .min_by(|&i, &j| points[i].0.total_cmp(&points[j].0))
            .expect("nonempty");
        points.remove(smallest);
    }
    fit_points(&points)
}

/// Least-squares power-law fit of raw `(n, c)` pairs.
pub fn fit_points(points: &[(f64, f64)]) -> Result<PowerLawFit> {
    if points.len() < 3 {
        return Err(domain(format!("power-law fit needs at least 3 points, got {}", points.len())));
    }
    if points.iter().any(|&(n, c)| !(n > 0.0) || !(c >= 1.0)) {
        return Err(domain("power-law fit needs n > 0 and c_opt >= 1"));
    }
    if points.iter().all(|&(_, c)| c == 1.0) {
        return Err(Error::Numeric("constant series".into()));
    }
    let m = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::Numeric("power-law fit needs at least two distinct n".into()));
    }
    let exponent = sxy / sxx;
    let log_intercept = my - exponent * mx;
    let r_squared = if syy <= 0.0 {
        1.0
    } else {
        let ss_res: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (y - log_intercept - exponent * x).powi(2))
            .sum();
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    Ok(PowerLawFit {
        exponent,
        log_intercept,
        r_squared,
    })
}

/// `true` where `c_opt <= slack * bound`; records without a bound pass.
pub fn check_bound(records: &[SweepRecord], slack: f64) -> Vec<bool> {
    records
        .iter()
        .map(|r| match r.bound {
            Some(b) => r.c_opt as f64 <= slack * b,
            None => true,
        })
        .collect()
}

/// Exponent of the fit over the first `i + 1` records, where one exists.
pub fn running_exponents(records: &[SweepRecord]) -> Vec<Option<f64>> {
    (0..records.len())
        .map(|i| fit_power_law(&records[..=i]).ok().map(|f| f.exponent))
        .collect()
}

/// Writes the records as CSV with the [`CSV_HEADER`] columns.
pub fn write_csv<W: Write>(out: W, records: &[SweepRecord]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Numeric(format!("writing CSV: {e}"));
    wr.write_record(CSV_HEADER).map_err(io)?;
    for (r, exp) in records.iter().zip(running_exponents(records)) {
        wr.write_record([
            r.objective.clone(),
            r.n.to_string(),
            r.c_opt.to_string(),
            fmt_g12(r.value),
            fmt_opt(r.bound),
            fmt_opt(exp),
        ])
        .map_err(io)?;
    }
    wr.flush().map_err(|e| Error::Numeric(format!("writing CSV: {e}")))?;
    Ok(())
}

/// Persisted sweep results keyed by objective, `n` and quadrature settings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepCache {
    pub entries: BTreeMap<String, SweepRecord>,
}

impl SweepCache {
    fn key(objective: &Objective, n: usize, q: &QuadratureConfig) -> String {
        match objective {
            Objective::Utility(_) => format!("{objective}|{n}|{}", q.cache_key()),
            // Top-k results do not depend on the quadrature.
            Objective::TopK(_) => format!("{objective}|{n}"),
        }
    }

    pub fn get(&self, objective: &Objective, n: usize, q: &QuadratureConfig) -> Option<&SweepRecord> {
        self.entries.get(&Self::key(objective, n, q))
    }

    pub fn insert(&mut self, objective: &Objective, q: &QuadratureConfig, record: SweepRecord) {
        self.entries.insert(Self::key(objective, record.n, q), record);
    }

    /// Loads a cache file; a missing file gives an empty cache.
    pub fn load(path: &Path) -> Result<Self> {
        match std::fs::read_to_string(path) {
            Ok(text) => serde_json::from_str(&text)
                .map_err(|e| domain(format!("corrupt sweep cache {}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(domain(format!("reading {}: {e}", path.display()))),
        }
    }

    /// Writes through a temporary file so an interrupted save keeps the old cache.
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("cache serializes");
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, text).map_err(|e| domain(format!("writing {}: {e}", tmp.display())))?;
        std::fs::rename(&tmp, path).map_err(|e| domain(format!("writing {}: {e}", path.display())))
    }
}
