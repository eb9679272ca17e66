//! The "accept one of the best `k`" objective.
//!
//! Three routes to the success probability of the cutoff-`c` rule:
//!
//! - [`success_probability`]: the asymptotic model
//!   `P(c) = Σ_{i=c}^{n} C(n-i, k-1)/C(n, k) · (c-1)/(i-1)`, which counts only
//!   runs where the first top-`k` applicant arrives after the cutoff. It is
//!   exact for `k = 1` and undercounts otherwise.
//! - [`success_probability_exact`]: brute-force enumeration of all `n!`
//!   arrival orders (`n <= 12`).
//! - [`success_probability_closed_form`]: an exact expression valid for any
//!   `n`. Accepting at `t < n` happens with probability `(c-1)/(t(t-1))`
//!   and depends only on the relative order of the first `t` arrivals, so the
//!   accepted applicant is the best of a uniformly random `t`-subset and is
//!   top-`k` with probability `1 - C(n-k, t)/C(n, t)`; the last applicant is
//!   reached with probability `(c-1)/(n-1)` and is top-`k` with probability
//!   `k/n`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::quadrature::CompensatedSum;

/// Largest `n` accepted by the enumeration oracle.
pub const MAX_ENUMERATION_N: usize = 12;

/// Largest `n` for which binomial ratios are formed from exact integers.
const EXACT_BINOMIAL_N: usize = 30;

/// Slack allowed above 1 for model probabilities at `n >= 100`.
pub const MODEL_SLACK: f64 = 0.05;

fn binomial_u128(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, j| acc * (n - j) as u128 / (j + 1) as u128)
}

fn ln_binomial(n: usize, k: usize) -> f64 {
    libm::lgamma(n as f64 + 1.0) - libm::lgamma(k as f64 + 1.0) - libm::lgamma((n - k) as f64 + 1.0)
}

/// `C(n-i, k-1) / C(n, k)`: probability that position `i` holds the first of
/// the top-`k` applicants.
fn first_good_at(n: usize, k: usize, i: usize) -> f64 {
    if n - i < k - 1 {
        return 0.0;
    }
    if n <= EXACT_BINOMIAL_N {
        binomial_u128(n - i, k - 1) as f64 / binomial_u128(n, k) as f64
    } else {
        (ln_binomial(n - i, k - 1) - ln_binomial(n, k)).exp()
    }
}

fn check_model_args(n: usize, k: usize) -> Result<()> {
    if n < 2 {
        return Err(domain(format!("need at least two applicants, got n = {n}")));
    }
    if k < 1 || k > n - 1 {
        return Err(domain(format!("k must lie in [1, n-1] = [1, {}], got {k}", n - 1)));
    }
    Ok(())
}

fn check_cutoff(n: usize, c: usize) -> Result<()> {
    if c < 2 || c > n {
        return Err(domain(format!("cutoff must lie in [2, n] = [2, {n}], got {c}")));
    }
    Ok(())
}

/// Model success probability `Σ_{i=c}^{n} C(n-i, k-1)/C(n, k) · (c-1)/(i-1)`.
pub fn success_probability(n: usize, k: usize, c: usize) -> Result<f64> {
    check_model_args(n, k)?;
    check_cutoff(n, c)?;
    let skipped = (c - 1) as f64;
    let mut sum = CompensatedSum::default();
    for i in c..=n {
        sum.add(first_good_at(n, k, i) * skipped / (i - 1) as f64);
    }
    Ok(sum.value())
}

/// Model success probabilities for every `c` in `2..=n`, via suffix sums.
/// Entry `j` holds `P(j + 2)`.
pub fn success_curve(n: usize, k: usize) -> Result<Vec<f64>> {
    check_model_args(n, k)?;
    let mut out = vec![0.0; n - 1];
    let mut suffix = CompensatedSum::default();
    for c in (2..=n).rev() {
        suffix.add(first_good_at(n, k, c) / (c - 1) as f64);
        out[c - 2] = (c - 1) as f64 * suffix.value();
    }
    Ok(out)
}

/// Displayed approximation of `P(c) - P(c-1)`:
/// `1/(nk) · (Σ_{i=c}^{n} (1-i/n)^(k-1)/(i-1) - (1-(c-1)/n)^(k-1))`.
pub fn success_delta(n: usize, k: usize, c: usize) -> Result<f64> {
    check_model_args(n, k)?;
    if c < 3 || c > n {
        return Err(domain(format!("cutoff must lie in [3, n] = [3, {n}], got {c}")));
    }
    let nf = n as f64;
    let exp = (k - 1) as i32;
    let mut sum = CompensatedSum::default();
    for i in c..=n {
        sum.add((1.0 - i as f64 / nf).powi(exp) / (i - 1) as f64);
    }
    let edge = (1.0 - (c - 1) as f64 / nf).powi(exp);
    Ok((sum.value() - edge) / (nf * k as f64))
}

/// Exact success probability for any `n`, `1 <= c <= n`, `k >= 1`.
pub fn success_probability_closed_form(n: usize, k: usize, c: usize) -> Result<f64> {
    if n < 2 {
        return Err(domain(format!("need at least two applicants, got n = {n}")));
    }
    if k < 1 {
        return Err(domain("k must be at least 1"));
    }
    if c < 1 || c > n {
        return Err(domain(format!("cutoff must lie in [1, n] = [1, {n}], got {c}")));
    }
    if k >= n {
        return Ok(1.0);
    }
    let nf = n as f64;
    let top_last = k as f64 / nf;
    if c == 1 {
        return Ok(top_last);
    }
    let skipped = (c - 1) as f64;
    // miss_t = C(n-k, t)/C(n, t) = C(n-t, k)/C(n, k), advanced incrementally in t.
    let mut miss = 1.0;
    for t in 0..c {
        miss *= (n - t).saturating_sub(k) as f64 / (n - t) as f64;
    }
    let mut sum = CompensatedSum::default();
    for t in c..n {
        sum.add(skipped / (t as f64 * (t - 1) as f64) * (1.0 - miss));
        miss *= (n - t).saturating_sub(k) as f64 / (n - t) as f64;
    }
    sum.add(skipped / (nf - 1.0) * top_last);
    Ok(sum.value())
}

/// Counts of accepted overall ranks, for every cutoff, over all `n!` orders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankTable {
    pub n: usize,
    /// `counts[c][r]`: orders in which cutoff `c` accepts the applicant of
    /// overall rank `r` (1 = best). Rows `0` and `1`, and column `0`, unused.
    pub counts: Vec<Vec<u64>>,
    pub total: u64,
}

impl RankTable {
    /// Probability that cutoff `c` accepts one of the best `k`.
    pub fn success(&self, k: usize, c: usize) -> f64 {
        let hits: u64 = self.counts[c][1..=k.min(self.n)].iter().sum();
        hits as f64 / self.total as f64
    }
}

struct Enumerator {
    n: usize,
    order: Vec<usize>,
    used: Vec<bool>,
    // diff[r][c]: difference array over cutoffs for accepted rank r.
    diff: Vec<Vec<i64>>,
}

impl Enumerator {
    fn new(n: usize) -> Self {
        Self {
            n,
            order: Vec::with_capacity(n),
            used: vec![false; n + 1],
            diff: vec![vec![0; n + 2]; n + 1],
        }
    }

    fn descend(&mut self) {
        if self.order.len() == self.n {
            self.record_leaf();
            return;
        }
        for r in 1..=self.n {
            if !self.used[r] {
                self.used[r] = true;
                self.order.push(r);
                self.descend();
                self.order.pop();
                self.used[r] = false;
            }
        }
    }

    fn record_leaf(&mut self) {
        let n = self.n;
        // Cutoff c accepts the first record at a position >= c, or position n.
        // A record at position p (1-based) is accepted by every c in
        // (previous record, p].
        let mut best = self.order[0];
        let mut prev_record = 1;
        for p in 2..=n {
            let r = self.order[p - 1];
            if r < best {
                best = r;
                self.diff[r][prev_record + 1] += 1;
                self.diff[r][p + 1] -= 1;
                prev_record = p;
            }
        }
        if prev_record < n {
            let last = self.order[n - 1];
            self.diff[last][prev_record + 1] += 1;
            self.diff[last][n + 1] -= 1;
        }
    }
}

/// Enumerates every arrival order of `n <= 12` applicants and tabulates the
/// accepted rank for every cutoff `c ∈ [2, n]`.
pub fn enumerate_rank_table(n: usize) -> Result<RankTable> {
    if n > MAX_ENUMERATION_N {
        return Err(Error::Capacity(format!(
            "exact enumeration supports n <= {MAX_ENUMERATION_N}, got {n}; use the Monte Carlo simulator"
        )));
    }
    if n < 2 {
        return Err(domain(format!("need at least two applicants, got n = {n}")));
    }
    // One subtree per first arrival; subtrees are independent.
    let diffs: Vec<Vec<Vec<i64>>> = (1..=n)
        .into_par_iter()
        .map(|first| {
            let mut e = Enumerator::new(n);
            e.used[first] = true;
            e.order.push(first);
            e.descend();
            e.diff
        })
        .collect();

    let mut counts = vec![vec![0u64; n + 1]; n + 1];
    for r in 1..=n {
        let mut running = 0i64;
        for c in 2..=n {
            running += diffs.iter().map(|d| d[r][c]).sum::<i64>();
            counts[c][r] = running as u64;
        }
    }
    let total = (1..=n as u64).product();
    Ok(RankTable { n, counts, total })
}

/// Exact success probability by enumerating all `n!` orders. Position `n`,
/// when reached, is accepted and counts as a success if its rank is `<= k`.
pub fn success_probability_exact(n: usize, k: usize, c: usize) -> Result<f64> {
    let table = enumerate_rank_table(n)?;
    if k < 1 {
        return Err(domain("k must be at least 1"));
    }
    check_cutoff(n, c)?;
    Ok(table.success(k, c))
}

/// Model success probabilities for one `(n, k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopKModel {
    pub n: usize,
    pub k: usize,
    pub success_probs: Vec<(usize, f64)>,
}

pub fn model(n: usize, k: usize) -> Result<TopKModel> {
    let curve = success_curve(n, k)?;
    Ok(TopKModel {
        n,
        k,
        success_probs: curve.into_iter().enumerate().map(|(j, p)| (j + 2, p)).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopKOptimum {
    pub n: usize,
    pub k: usize,
    /// Maximizer of the model probability over `c ∈ [2, n]`, smallest on ties.
    pub c_opt: usize,
    /// Model probability at `c_opt`.
    pub model_probability: f64,
    /// Exact success probability of the cutoff `c_opt`.
    pub exact_probability: f64,
}

/// Full scan of the model over `c ∈ [2, n]`; no concavity is assumed.
pub fn optimal_cutoff_topk(n: usize, k: usize) -> Result<TopKOptimum> {
    if n < 3 {
        return Err(domain(format!("need at least three applicants, got n = {n}")));
    }
    let curve = success_curve(n, k)?;
    let (mut best_j, mut best) = (0, curve[0]);
    for (j, &p) in curve.iter().enumerate().skip(1) {
        if p > best {
            best_j = j;
            best = p;
        }
    }
    let c_opt = best_j + 2;
    Ok(TopKOptimum {
        n,
        k,
        c_opt,
        model_probability: best,
        exact_probability: success_probability_closed_form(n, k, c_opt)?,
    })
}
