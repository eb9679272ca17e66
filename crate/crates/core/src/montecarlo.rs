//! Seeded Monte Carlo simulation of cutoff policies.
//!
//! Every trial draws from its own ChaCha8 stream: the key is expanded from
//! the run seed with `ChaCha8Rng::seed_from_u64` and the stream number is the
//! trial index. A trial's randomness is therefore a pure function of
//! `(seed, trial)`, and trials are accumulated in fixed-size chunks whose
//! partial statistics are merged in chunk order, so results do not depend on
//! how rayon schedules the chunks.
//!
//! Variants:
//!
//! - `P1`: a uniformly random order of ranks `1..=n` (Fisher-Yates); accepting
//!   rank `r` pays `w(r / n)`.
//! - `P2`: `n` i.i.d. uniform types on `[0, 1]`; accepting type `t` pays
//!   `w(t)`. Ties have probability zero and would be broken by arrival order.
//! - `TopK`: rank orders as in `P1`; pays 1 when the accepted rank is `<= k`.
//!
//! The last applicant is always accepted if reached.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::utility::UtilityFunction;

const CHUNK: u64 = 4096;

/// Seed offset separating the `P2` run from the `P1` run in [`p1_p2_gap`].
const PAIRED_STREAM_TAG: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    P1,
    P2,
    TopK,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "p1" => Ok(Variant::P1),
            "p2" => Ok(Variant::P2),
            "topk" => Ok(Variant::TopK),
            other => Err(Error::Parse {
                token: other.to_string(),
                reason: "expected p1, p2 or topk".into(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub variant: Variant,
    pub n: usize,
    pub c: usize,
    /// Required for, and only for, `TopK`.
    pub k: Option<usize>,
    pub trials: u64,
    pub seed: u64,
    /// Verify every sampled rank order is a permutation.
    #[serde(default)]
    pub debug_checks: bool,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(domain("need at least one applicant"));
        }
        if self.c < 1 || self.c > self.n {
            return Err(domain(format!("cutoff must lie in [1, n] = [1, {}], got {}", self.n, self.c)));
        }
        if self.trials < 1 {
            return Err(domain("need at least one trial"));
        }
        match (self.variant, self.k) {
            (Variant::TopK, Some(k)) if k >= 1 => Ok(()),
            (Variant::TopK, _) => Err(domain("top-k simulation needs k >= 1")),
            (_, Some(_)) => Err(domain("k is only meaningful for the top-k variant")),
            (_, None) => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub mean: f64,
    /// Standard error of the mean.
    pub stderr: f64,
    pub trials: u64,
    pub seed: u64,
}

/// Single-pass mean/variance accumulator.
#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, other: Welford) -> Welford {
        if self.count == 0 {
            return other;
        }
        if other.count == 0 {
            return self;
        }
        let count = self.count + other.count;
        let d = other.mean - self.mean;
        let (na, nb) = (self.count as f64, other.count as f64);
        Welford {
            count,
            mean: self.mean + d * nb / count as f64,
            m2: self.m2 + other.m2 + d * d * na * nb / count as f64,
        }
    }

    fn stderr(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let var = (self.m2 / (self.count - 1) as f64).max(0.0);
        (var / self.count as f64).sqrt()
    }
}

/// RNG for one trial: key from `seed`, stream `trial`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Runs `trials` trials of `episode` in chunks and merges in chunk order.
fn run_trials<F>(trials: u64, seed: u64, episode: F) -> Result<Welford>
where
    F: Fn(&mut ChaCha8Rng, &mut Vec<usize>) -> Result<f64> + Sync,
{
    let chunks = trials.div_ceil(CHUNK);
    let parts: Vec<Welford> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut acc = Welford::default();
            let mut scratch = Vec::new();
            let end = ((chunk + 1) * CHUNK).min(trials);
            for trial in chunk * CHUNK..end {
                let mut rng = trial_rng(seed, trial);
                acc.push(episode(&mut rng, &mut scratch)?);
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    Ok(parts.into_iter().fold(Welford::default(), Welford::merge))
}

/// Accepted rank under the cutoff-`c` rule for a freshly shuffled order.
/// The Fisher-Yates shuffle is run front to back and stopped once a rank is
/// accepted, unless `full` asks for the whole permutation.
fn rank_episode(rng: &mut ChaCha8Rng, ranks: &mut Vec<usize>, n: usize, c: usize, full: bool) -> Result<usize> {
    ranks.clear();
    ranks.extend(1..=n);
    let mut best = usize::MAX;
    let mut accepted = None;
    for i in 0..n {
        let j = rng.random_range(i..n);
        ranks.swap(i, j);
        if accepted.is_some() {
            continue;
        }
        let r = ranks[i];
        let position = i + 1;
        if position >= c && (r < best || position == n) {
            accepted = Some(r);
            if !full {
                break;
            }
        }
        best = best.min(r);
    }
    if full {
        let mut seen = vec![false; n + 1];
        for &r in ranks.iter() {
            if r == 0 || r > n || std::mem::replace(&mut seen[r], true) {
                return Err(Error::Invariant(format!("rank order is not a permutation of 1..={n}")));
            }
        }
    }
    accepted.ok_or_else(|| Error::Invariant("no applicant accepted".into()))
}

fn uniform_episode(rng: &mut ChaCha8Rng, w: &UtilityFunction, n: usize, c: usize) -> f64 {
    let mut best = f64::INFINITY;
    for position in 1..=n {
        let t: f64 = rng.random();
        if position >= c && (t < best || position == n) {
            return w.value(t);
        }
        best = best.min(t);
    }
    unreachable!("position n is always accepted")
}

/// Simulates `cfg.trials` episodes of the cutoff rule.
pub fn simulate(w: Option<&UtilityFunction>, cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate()?;
    let (n, c) = (cfg.n, cfg.c);
    let acc = match cfg.variant {
        Variant::P1 => {
            let w = w.ok_or_else(|| domain("P1 simulation needs a utility"))?;
            let nf = n as f64;
            run_trials(cfg.trials, cfg.seed, |rng, scratch| {
                let r = rank_episode(rng, scratch, n, c, cfg.debug_checks)?;
                Ok(w.value(r as f64 / nf))
            })?
        }
        Variant::P2 => {
            let w = w.ok_or_else(|| domain("P2 simulation needs a utility"))?;
            run_trials(cfg.trials, cfg.seed, |rng, _| Ok(uniform_episode(rng, w, n, c)))?
        }
        Variant::TopK => {
            let k = cfg.k.expect("validated");
            run_trials(cfg.trials, cfg.seed, |rng, scratch| {
                let r = rank_episode(rng, scratch, n, c, cfg.debug_checks)?;
                Ok(if r <= k { 1.0 } else { 0.0 })
            })?
        }
    };
    Ok(SimResult {
        mean: acc.mean,
        stderr: acc.stderr(),
        trials: cfg.trials,
        seed: cfg.seed,
    })
}

/// `|mean_P1 - mean_P2|` from independent runs: `P1` uses `seed`, `P2` a
/// seed derived from it.
pub fn p1_p2_gap(w: &UtilityFunction, n: usize, c: usize, trials: u64, seed: u64) -> Result<(f64, f64)> {
    let p1 = simulate(
        Some(w),
        &SimConfig {
            variant: Variant::P1,
            n,
            c,
            k: None,
            trials,
            seed,
            debug_checks: false,
        },
    )?;
    let p2 = simulate(
        Some(w),
        &SimConfig {
            variant: Variant::P2,
            n,
            c,
            k: None,
            trials,
            seed: seed ^ PAIRED_STREAM_TAG,
            debug_checks: false,
        },
    )?;
    let combined_stderr = (p1.stderr * p1.stderr + p2.stderr * p2.stderr).sqrt();
    Ok(((p1.mean - p2.mean).abs(), combined_stderr))
}

/// Sorted sample of `n` uniforms for one trial.
fn sorted_uniforms(seed: u64, trial: u64, n: usize, buf: &mut Vec<f64>) {
    let mut rng = trial_rng(seed, trial);
    buf.clear();
    buf.extend((0..n).map(|_| rng.random::<f64>()));
    buf.sort_unstable_by(f64::total_cmp);
}

fn count_trials<F>(trials: u64, seed: u64, n: usize, hit: F) -> u64
where
    F: Fn(&[f64]) -> bool + Sync,
{
    let chunks = trials.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut buf = Vec::with_capacity(n);
            let end = ((chunk + 1) * CHUNK).min(trials);
            (chunk * CHUNK..end)
                .filter(|&trial| {
                    sorted_uniforms(seed, trial, n, &mut buf);
                    hit(&buf)
                })
                .count() as u64
        })
        .sum()
}

/// Fraction of trials in which some order statistic strays from its rank:
/// `max_i |s_(n,i) - i/n| > ln(n)/sqrt(n)`.
pub fn order_stat_deviation(n: usize, trials: u64, seed: u64) -> Result<f64> {
    if n < 2 || trials < 1 {
        return Err(domain("order-statistic check needs n >= 2 and trials >= 1"));
    }
    let nf = n as f64;
    let radius = nf.ln() / nf.sqrt();
    let violations = count_trials(trials, seed, n, |s| {
        s.iter()
            .enumerate()
            .any(|(i, &x)| (x - (i + 1) as f64 / nf).abs() > radius)
    });
    Ok(violations as f64 / trials as f64)
}

/// Empirical `Pr[s_(n,i) < i/n - eps]` for the `i`-th smallest of `n` uniforms.
pub fn order_stat_lower_tail(n: usize, i: usize, eps: f64, trials: u64, seed: u64) -> Result<f64> {
    if n < 1 || i < 1 || i > n || trials < 1 || !(eps >= 0.0) {
        return Err(domain("lower-tail check needs 1 <= i <= n, eps >= 0, trials >= 1"));
    }
    let cut = i as f64 / n as f64 - eps;
    let hits = count_trials(trials, seed, n, |s| s[i - 1] < cut);
    Ok(hits as f64 / trials as f64)
}
