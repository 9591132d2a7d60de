//! Network-coded broadcast: the degrees-of-freedom chain, its expected
//! completion time, and batch-size optimization.
//!
//! Dof state `i` means the receiver still needs `i` innovative packets. In
//! state `i` the sender broadcasts `N_i` coded packets followed by one ACK
//! carrying the receiver's remaining dof.

pub mod gf;

use serde::{Deserialize, Serialize};

use crate::chain::AbsorbingChain;
use crate::delay::LinkReliability;
use crate::error::{Error, Result};
use crate::timing::TimingProfile;

pub use gf::{gf_rank_oracle, Field};

/// `C(n, k)` as a float; zero when `k > n`.
pub fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

/// Probability that exactly `k` of `n` packets survive erasure.
fn received_exactly(n: u32, k: u32, p_e: f64) -> f64 {
    binomial(n, k) * (1.0 - p_e).powi(k as i32) * p_e.powi((n - k) as i32)
}

/// Probability that a batch of `n_batch` packets gets at least one packet
/// through and its ACK back.
pub fn batch_success_prob(n_batch: u32, link: &LinkReliability) -> f64 {
    (1.0 - link.p_e.powi(n_batch as i32)) * (1.0 - link.p_ack)
}

/// Term-by-term binomial form of [`batch_success_prob`].
pub fn batch_success_prob_binomial(n_batch: u32, link: &LinkReliability) -> f64 {
    (1..=n_batch)
        .map(|j| received_exactly(n_batch, j, link.p_e) * (1.0 - link.p_ack))
        .sum()
}

/// Probability of moving from dof state `i` to `j < i` with a batch of `n_i`.
pub fn dof_transition_prob(i: u32, j: u32, n_i: u32, link: &LinkReliability) -> Result<f64> {
    if j >= i {
        return Err(Error::InvalidParameter(format!(
            "dof transition requires j < i, got i={i}, j={j}"
        )));
    }
    let received = i - j;
    if received > n_i {
        return Ok(0.0);
    }
    Ok(received_exactly(n_i, received, link.p_e) * (1.0 - link.p_ack))
}

/// Probability that a dof state repeats: every packet erased or the ACK lost.
pub fn dof_selfloop_prob(n_i: u32, link: &LinkReliability) -> f64 {
    (1.0 - link.p_ack) * link.p_e.powi(n_i as i32) + link.p_ack
}

/// Probability of decoding from state `i`: at least `i` packets arrive and
/// the ACK gets back.
fn dof_absorb_prob(i: u32, n_i: u32, link: &LinkReliability) -> f64 {
    let tail: f64 = (i..=n_i).map(|k| received_exactly(n_i, k, link.p_e)).sum();
    tail * (1.0 - link.p_ack)
}

/// How many coded packets to send in each dof state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchRule {
    /// `N_i = i`
    MissingDof,
    Fixed(u32),
    /// Entry `i - 1` is `N_i`.
    PerState(Vec<u32>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodedPlan {
    pub n_c: u32,
    /// Entry `i - 1` is the batch size used in dof state `i`.
    pub batch_sizes: Vec<u32>,
    pub constrained_total: Option<u32>,
}

impl CodedPlan {
    pub fn from_rule(n_c: u32, rule: &BatchRule) -> Result<Self> {
        if n_c == 0 {
            return Err(Error::InvalidParameter("n_c must be at least 1".into()));
        }
        let batch_sizes = match rule {
            BatchRule::MissingDof => (1..=n_c).collect(),
            BatchRule::Fixed(n) => vec![*n; n_c as usize],
            BatchRule::PerState(sizes) => {
                if sizes.len() != n_c as usize {
                    return Err(Error::InvalidParameter(format!(
                        "batch rule covers {} states, expected {n_c}",
                        sizes.len()
                    )));
                }
                sizes.clone()
            }
        };
        if batch_sizes.contains(&0) {
            return Err(Error::InvalidParameter(
                "batch sizes must be at least 1".into(),
            ));
        }
        Ok(CodedPlan {
            n_c,
            batch_sizes,
            constrained_total: None,
        })
    }

    pub fn missing_dof(n_c: u32) -> Result<Self> {
        Self::from_rule(n_c, &BatchRule::MissingDof)
    }

    pub fn with_total(mut self, total: u32) -> Result<Self> {
        let sum: u32 = self.batch_sizes.iter().sum();
        if sum != total {
            return Err(Error::Infeasible(format!(
                "batch sizes sum to {sum}, constraint requires {total}"
            )));
        }
        self.constrained_total = Some(total);
        Ok(self)
    }

    /// `N_i` for dof state `i` (1-based).
    pub fn batch_for(&self, i: u32) -> u32 {
        self.batch_sizes[(i - 1) as usize]
    }
}

/// Airtime of one round in dof state `i`: the batch, its spacing, one
/// contention and the ACK wait.
pub fn round_airtime(n_i: u32, profile: &TimingProfile) -> f64 {
    let n = f64::from(n_i);
    n * profile.t_p + profile.cw1_time() + profile.difs + profile.t_w() + n * profile.sifs
}

fn check_reachable(plan: &CodedPlan, link: &LinkReliability) -> Result<()> {
    if batch_success_prob(plan.batch_for(1), link) <= 0.0 {
        return Err(Error::Diverges(
            "coded batches never deliver a degree of freedom".into(),
        ));
    }
    Ok(())
}

/// The dof chain; transient index `i - 1` is dof state `i`, starting at `n_c`.
pub fn build_nc_chain(
    plan: &CodedPlan,
    profile: &TimingProfile,
    link: &LinkReliability,
) -> Result<AbsorbingChain> {
    check_reachable(plan, link)?;
    let n = plan.n_c as usize;
    let mut q = vec![vec![0.0; n]; n];
    let mut absorb = vec![0.0; n];
    let mut sojourn = vec![0.0; n];
    for i in 1..=plan.n_c {
        let row = (i - 1) as usize;
        let n_i = plan.batch_for(i);
        for j in 1..i {
            q[row][(j - 1) as usize] = dof_transition_prob(i, j, n_i, link)?;
        }
        q[row][row] = dof_selfloop_prob(n_i, link);
        absorb[row] = dof_absorb_prob(i, n_i, link);
        sojourn[row] = round_airtime(n_i, profile);
    }
    AbsorbingChain::new(q, absorb, sojourn, n - 1)
}

/// Expected completion time from every dof state (index `i - 1`).
///
/// The dof chain only moves downward, so the fundamental system is
/// triangular and solves by forward recursion:
/// `E_i = T_i + sum_j p_ij E_j / ((1 - p_e^N_i)(1 - p_ack))`.
pub fn expected_times_coded(
    plan: &CodedPlan,
    profile: &TimingProfile,
    link: &LinkReliability,
) -> Result<Vec<f64>> {
    check_reachable(plan, link)?;
    let mut times: Vec<f64> = Vec::with_capacity(plan.n_c as usize);
    for i in 1..=plan.n_c {
        let n_i = plan.batch_for(i);
        times.push(state_time(i, n_i, &times, profile, link)?);
    }
    Ok(times)
}

/// `E_i` given `E_1..E_{i-1}` in `lower`.
fn state_time(
    i: u32,
    n_i: u32,
    lower: &[f64],
    profile: &TimingProfile,
    link: &LinkReliability,
) -> Result<f64> {
    let leave = batch_success_prob(n_i, link);
    if leave <= 0.0 {
        return Ok(f64::INFINITY);
    }
    let mut onward = 0.0;
    for j in 1..i {
        let p = dof_transition_prob(i, j, n_i, link)?;
        if p > 0.0 {
            onward += p * lower[(j - 1) as usize];
        }
    }
    Ok((round_airtime(n_i, profile) + onward) / leave)
}

pub fn expected_time_coded(
    plan: &CodedPlan,
    profile: &TimingProfile,
    link: &LinkReliability,
) -> Result<f64> {
    let times = expected_times_coded(plan, profile, link)?;
    let t = times[(plan.n_c - 1) as usize];
    if !t.is_finite() {
        return Err(Error::Diverges("coded completion time is unbounded".into()));
    }
    Ok(t)
}

fn literal_round_time(n: u32, profile: &TimingProfile, link: &LinkReliability) -> Result<f64> {
    let denom = batch_success_prob(n, link);
    if denom <= 0.0 {
        return Err(Error::Diverges("degenerate round denominator".into()));
    }
    Ok(round_airtime(n, profile) / denom)
}

/// Single-step completion-time expression with the erasure exponent
/// `N_i + i - j` and per-round times `T_j` substituted for the downstream
/// expected times, evaluated as written. It is not the exact chain solution;
/// see [`compare_literal`].
pub fn expected_time_coded_literal(
    plan: &CodedPlan,
    profile: &TimingProfile,
    link: &LinkReliability,
) -> Result<f64> {
    let i = plan.n_c;
    let n_i = plan.batch_for(i);
    let t_i = literal_round_time(n_i, profile, link)?;
    let mut numer = 0.0;
    for j in 1..i {
        let d = i - j;
        let coeff = binomial(n_i, d);
        if coeff == 0.0 {
            continue;
        }
        let t_j = literal_round_time(plan.batch_for(j), profile, link)?;
        numer += coeff * (1.0 - link.p_e).powi(d as i32) * link.p_e.powi((n_i + d) as i32) * t_j;
    }
    Ok(t_i + numer / batch_success_prob(n_i, link))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiteralComparison {
    pub literal: f64,
    pub chain_exact: f64,
    /// `(literal - chain_exact) / chain_exact`
    pub relative_deviation: f64,
}

pub fn compare_literal(
    plan: &CodedPlan,
    profile: &TimingProfile,
    link: &LinkReliability,
) -> Result<LiteralComparison> {
    let literal = expected_time_coded_literal(plan, profile, link)?;
    let chain_exact = build_nc_chain(plan, profile, link)?.expected_absorption_time()?;
    Ok(LiteralComparison {
        literal,
        chain_exact,
        relative_deviation: (literal - chain_exact) / chain_exact,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizedPlan {
    pub plan: CodedPlan,
    pub expected_time: f64,
}

/// Exhaustive search over constrained plans is used up to this many states.
pub const EXHAUSTIVE_CONSTRAINED_MAX_NC: u32 = 6;

/// Default per-state search bound: `4 * n_c`.
pub fn default_search_bound(n_c: u32) -> u32 {
    4 * n_c
}

/// Choose per-state batch sizes minimizing the expected completion time.
///
/// Without a total, states are optimized in increasing dof order; since
/// every `E_i` is increasing in the lower-state times, the state-by-state
/// optimum is also the joint optimum over `1..=n_max`. With a total, the
/// plan must spend exactly `total` packets across the `n_c` states.
pub fn optimize_batch_sizes(
    n_c: u32,
    profile: &TimingProfile,
    link: &LinkReliability,
    total: Option<u32>,
    n_max: u32,
) -> Result<OptimizedPlan> {
    if n_c == 0 {
        return Err(Error::InvalidParameter("n_c must be at least 1".into()));
    }
    if n_max == 0 {
        return Err(Error::InvalidParameter(
            "search bound must be at least 1".into(),
        ));
    }
    if batch_success_prob(n_max, link) <= 0.0 {
        return Err(Error::Diverges(
            "coded batches never deliver a degree of freedom".into(),
        ));
    }
    match total {
        None => optimize_greedy(n_c, profile, link, n_max),
        Some(total) => {
            if total < n_c {
                return Err(Error::Infeasible(format!(
                    "total of {total} packets cannot cover {n_c} dof states"
                )));
            }
            let best = if n_c <= EXHAUSTIVE_CONSTRAINED_MAX_NC {
                optimize_constrained_exhaustive(n_c, total, profile, link)?
            } else {
                optimize_constrained_greedy(n_c, total, profile, link)?
            };
            Ok(OptimizedPlan {
                plan: best.plan.with_total(total)?,
                expected_time: best.expected_time,
            })
        }
    }
}

fn optimize_greedy(
    n_c: u32,
    profile: &TimingProfile,
    link: &LinkReliability,
    n_max: u32,
) -> Result<OptimizedPlan> {
    let mut sizes = Vec::with_capacity(n_c as usize);
    let mut times = Vec::with_capacity(n_c as usize);
    for i in 1..=n_c {
        let (n_best, t_best) = best_batch(i, 1..=n_max, &times, profile, link)?;
        sizes.push(n_best);
        times.push(t_best);
    }
    finish(n_c, sizes, times)
}

/// Smallest batch in `candidates` minimizing `E_i`.
fn best_batch(
    i: u32,
    candidates: std::ops::RangeInclusive<u32>,
    lower: &[f64],
    profile: &TimingProfile,
    link: &LinkReliability,
) -> Result<(u32, f64)> {
    let mut best = (*candidates.start(), f64::INFINITY);
    for n in candidates {
        let t = state_time(i, n, lower, profile, link)?;
        if t < best.1 {
            best = (n, t);
        }
    }
    Ok(best)
}

fn finish(n_c: u32, sizes: Vec<u32>, times: Vec<f64>) -> Result<OptimizedPlan> {
    let expected_time = times[(n_c - 1) as usize];
    if !expected_time.is_finite() {
        return Err(Error::Diverges("no plan delivers in finite time".into()));
    }
    Ok(OptimizedPlan {
        plan: CodedPlan::from_rule(n_c, &BatchRule::PerState(sizes))?,
        expected_time,
    })
}

fn optimize_constrained_exhaustive(
    n_c: u32,
    total: u32,
    profile: &TimingProfile,
    link: &LinkReliability,
) -> Result<OptimizedPlan> {
    // Depth-first over compositions of `total` into `n_c` positive parts,
    // reusing the lower-state times along each prefix.
    #[allow(clippy::too_many_arguments)]
    fn walk(
        i: u32,
        n_c: u32,
        remaining: u32,
        sizes: &mut Vec<u32>,
        times: &mut Vec<f64>,
        best: &mut Option<(Vec<u32>, f64)>,
        profile: &TimingProfile,
        link: &LinkReliability,
    ) -> Result<()> {
        let still_needed = n_c - i;
        let candidates: Vec<u32> = if i == n_c {
            vec![remaining]
        } else {
            (1..=remaining - still_needed).collect()
        };
        for n in candidates {
            let t = state_time(i, n, times, profile, link)?;
            sizes.push(n);
            times.push(t);
            if i == n_c {
                if best.as_ref().is_none_or(|(_, b)| t < *b) {
                    *best = Some((sizes.clone(), t));
                }
            } else {
                walk(i + 1, n_c, remaining - n, sizes, times, best, profile, link)?;
            }
            sizes.pop();
            times.pop();
        }
        Ok(())
    }

    let mut best = None;
    walk(
        1,
        n_c,
        total,
        &mut Vec::new(),
        &mut Vec::new(),
        &mut best,
        profile,
        link,
    )?;
    let (sizes, t) = best.ok_or_else(|| Error::Infeasible("no feasible composition".into()))?;
    if !t.is_finite() {
        return Err(Error::Diverges("no plan delivers in finite time".into()));
    }
    Ok(OptimizedPlan {
        plan: CodedPlan::from_rule(n_c, &BatchRule::PerState(sizes))?,
        expected_time: t,
    })
}

fn optimize_constrained_greedy(
    n_c: u32,
    total: u32,
    profile: &TimingProfile,
    link: &LinkReliability,
) -> Result<OptimizedPlan> {
    let mut sizes = Vec::with_capacity(n_c as usize);
    let mut times = Vec::with_capacity(n_c as usize);
    let mut remaining = total;
    for i in 1..=n_c {
        let still_needed = n_c - i;
        let range = if i == n_c {
            remaining..=remaining
        } else {
            1..=remaining - still_needed
        };
        let (n, t) = best_batch(i, range, &times, profile, link)?;
        remaining -= n;
        sizes.push(n);
        times.push(t);
    }
    finish(n_c, sizes, times)
}
