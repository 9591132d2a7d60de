//! Self-check suite: closed forms against exact chains and Monte-Carlo,
//! probability identities, channel curves and the coded-packet rank oracle.

use std::fmt;

use rayon::prelude::*;

use super::config::ScenarioConfig;
use crate::channel::{
    ber_bpsk_awgn, ber_bpsk_rayleigh, ber_bpsk_rayleigh_mc, ber_conv_rayleigh, DistanceSpectrum,
};
use crate::delay::{self, best_case_times, build_mode_chain, LinkReliability, Mode};
use crate::error::Result;
use crate::nc::{self, BatchRule, CodedPlan, Field};
use crate::timing::{BackoffPolicy, TimingProfile};

/// Signature of the closed-form expected time under test.
pub type ClosedForm =
    fn(Mode, &TimingProfile, &BackoffPolicy, &LinkReliability, u32) -> Result<f64>;

const P_E_GRID: [f64; 5] = [0.0, 0.1, 0.3, 0.5, 0.8];
const P_ACK_GRID: [f64; 2] = [0.0, 0.1];
const N_GRID: [u32; 3] = [1, 5, 10];
/// Standard errors allowed between a Monte-Carlo mean and its exact value.
const MC_SIGMAS: f64 = 4.0;
const RANK_TRIALS: u64 = 20_000;
const BER_SAMPLES: u64 = 100_000;

#[derive(Clone, Copy)]
pub struct ValidateOptions {
    pub closed_form: ClosedForm,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        ValidateOptions {
            closed_form: delay::expected_time,
        }
    }
}

impl ValidateOptions {
    /// Unicast closed form that ignores ACK loss; used to check that the
    /// suite catches a wrong formula.
    pub fn with_injected_fault() -> Self {
        fn faulty(
            mode: Mode,
            profile: &TimingProfile,
            policy: &BackoffPolicy,
            link: &LinkReliability,
            n: u32,
        ) -> Result<f64> {
            let link = match mode {
                Mode::Unicast => LinkReliability::new(link.p_e, 0.0)?,
                _ => *link,
            };
            delay::expected_time(mode, profile, policy, &link, n)
        }
        ValidateOptions {
            closed_form: faulty,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub seed: u64,
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self
            .checks
            .iter()
            .map(|c| c.name.len())
            .max()
            .unwrap_or(5)
            .max(5);
        writeln!(f, "{:<width$}  result  detail", "check")?;
        for c in &self.checks {
            let verdict = if c.passed { "PASS" } else { "FAIL" };
            writeln!(f, "{:<width$}  {verdict:<6}  {}", c.name, c.detail)?;
        }
        let passed = self.checks.iter().filter(|c| c.passed).count();
        writeln!(
            f,
            "summary: {passed}/{} passed (seed {})",
            self.checks.len(),
            self.seed
        )
    }
}

fn check(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult {
        name,
        passed,
        detail,
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn grid() -> Vec<(f64, f64, u32)> {
    let mut cells = Vec::new();
    for p_e in P_E_GRID {
        for p_ack in P_ACK_GRID {
            for n in N_GRID {
                cells.push((p_e, p_ack, n));
            }
        }
    }
    cells
}

/// Run every check. Randomness is derived from `cfg.seed` only.
pub fn cmd_validate(cfg: &ScenarioConfig, opts: &ValidateOptions) -> Result<ValidationReport> {
    let checks = vec![
        closed_form_vs_chain(cfg, opts)?,
        monte_carlo_vs_chain(cfg)?,
        binomial_identity(),
        best_case_gaps(&cfg.profile)?,
        rayleigh_ber_mc(cfg.seed),
        ber_monotone(),
        coded_recursion_vs_chain(&cfg.profile)?,
        batch_optimizer(&cfg.profile)?,
        gf256_rank(cfg.seed),
    ];
    Ok(ValidationReport {
        seed: cfg.seed,
        checks,
    })
}

fn closed_form_vs_chain(cfg: &ScenarioConfig, opts: &ValidateOptions) -> Result<CheckResult> {
    let mut worst = 0.0f64;
    let mut cells = 0;
    for (p_e, p_ack, n) in grid() {
        let link = LinkReliability::new(p_e, p_ack)?;
        for mode in Mode::ALL {
            let closed = (opts.closed_form)(mode, &cfg.profile, &cfg.backoff, &link, n)?;
            let exact = build_mode_chain(mode, &cfg.profile, &cfg.backoff, &link, n)?
                .expected_absorption_time()?;
            worst = worst.max(rel_err(closed, exact));
            cells += 1;
        }
    }
    Ok(check(
        "closed_form_vs_chain",
        worst <= 1e-9,
        format!("cells={cells} max_rel_err={worst:.3e} tol=1e-9"),
    ))
}

fn monte_carlo_vs_chain(cfg: &ScenarioConfig) -> Result<CheckResult> {
    let jobs: Vec<_> = grid()
        .into_iter()
        .flat_map(|cell| Mode::ALL.map(|m| (cell, m)))
        .collect();
    let results = jobs
        .par_iter()
        .enumerate()
        .map(|(k, &((p_e, p_ack, n), mode))| {
            let link = LinkReliability::new(p_e, p_ack)?;
            let chain = build_mode_chain(mode, &cfg.profile, &cfg.backoff, &link, n)?;
            let exact = chain.expected_absorption_time()?;
            let mc = chain.simulate_absorption(cfg.mc_trials, cfg.seed.wrapping_add(k as u64))?;
            Ok(mc.z_score(exact, chain.absorption_time_variance()?))
        })
        .collect::<Result<Vec<f64>>>()?;
    let worst = results.iter().copied().fold(0.0, f64::max);
    Ok(check(
        "monte_carlo_vs_chain",
        worst <= MC_SIGMAS,
        format!(
            "cells={} trials={} max_z={worst:.3} tol={MC_SIGMAS}",
            results.len(),
            cfg.mc_trials
        ),
    ))
}

fn binomial_identity() -> CheckResult {
    let mut worst = 0.0f64;
    for p_e in P_E_GRID {
        for p_ack in P_ACK_GRID {
            let link = LinkReliability { p_e, p_ack };
            for n in 1..=20 {
                let sum = nc::batch_success_prob_binomial(n, &link);
                worst = worst.max((sum - nc::batch_success_prob(n, &link)).abs());
            }
        }
    }
    check(
        "binomial_identity",
        worst <= 1e-12,
        format!("max_abs_err={worst:.3e} tol=1e-12"),
    )
}

fn best_case_gaps(profile: &TimingProfile) -> Result<CheckResult> {
    let mut worst = 0.0f64;
    for n in 1..=20u32 {
        let b = best_case_times(profile, n)?;
        let nf = f64::from(n);
        let ack_gap = b.unicast - b.broadcast - (nf * profile.ack_duration() + profile.sifs);
        let frag_gap = b.unicast_frag - b.unicast - (nf - 1.0) * profile.sifs;
        worst = worst.max(ack_gap.abs().max(frag_gap.abs()) / b.unicast_frag);
    }
    // A handful of roundings in sums of a few terms.
    let tol = 16.0 * f64::EPSILON;
    Ok(check(
        "best_case_gaps",
        worst <= tol,
        format!("max_rel_err={worst:.3e} tol={tol:.3e}"),
    ))
}

fn rayleigh_ber_mc(seed: u64) -> CheckResult {
    let mut worst = 0.0f64;
    for (k, snr) in [0.5, 1.0, 5.0, 20.0].into_iter().enumerate() {
        let (mean, se) = ber_bpsk_rayleigh_mc(snr, BER_SAMPLES, seed.wrapping_add(k as u64));
        worst = worst.max((mean - ber_bpsk_rayleigh(snr)).abs() / se);
    }
    check(
        "rayleigh_ber_mc",
        worst <= MC_SIGMAS,
        format!("samples={BER_SAMPLES} max_z={worst:.3} tol={MC_SIGMAS}"),
    )
}

fn log_snr_grid() -> Vec<f64> {
    (0..100)
        .map(|k| 10f64.powf(-2.0 + 5.0 * f64::from(k) / 99.0))
        .collect()
}

type BerCurve = Box<dyn Fn(f64) -> f64>;

fn ber_monotone() -> CheckResult {
    let spec = DistanceSpectrum::ieee80211();
    let curves: [(&str, BerCurve); 3] = [
        ("awgn", Box::new(ber_bpsk_awgn)),
        ("rayleigh", Box::new(ber_bpsk_rayleigh)),
        ("coded", Box::new(move |s| ber_conv_rayleigh(s, &spec))),
    ];
    let grid = log_snr_grid();
    let bad: Vec<&str> = curves
        .iter()
        .filter(|(_, f)| grid.windows(2).any(|w| f(w[1]) > f(w[0])))
        .map(|(name, _)| *name)
        .collect();
    let detail = if bad.is_empty() {
        "curves=3 points=100".to_string()
    } else {
        format!("increasing: {}", bad.join(" "))
    };
    check("ber_monotone", bad.is_empty(), detail)
}

fn coded_recursion_vs_chain(profile: &TimingProfile) -> Result<CheckResult> {
    let mut worst = 0.0f64;
    for (p_e, p_ack, _) in grid() {
        let link = LinkReliability::new(p_e, p_ack)?;
        for n_c in 1..=6 {
            for rule in [BatchRule::MissingDof, BatchRule::Fixed(n_c + 2)] {
                let plan = CodedPlan::from_rule(n_c, &rule)?;
                let recursion = nc::expected_time_coded(&plan, profile, &link)?;
                let chain =
                    nc::build_nc_chain(&plan, profile, &link)?.expected_absorption_time()?;
                worst = worst.max(rel_err(recursion, chain));
            }
        }
    }
    Ok(check(
        "coded_recursion_vs_chain",
        worst <= 1e-9,
        format!("max_rel_err={worst:.3e} tol=1e-9"),
    ))
}

fn batch_optimizer(profile: &TimingProfile) -> Result<CheckResult> {
    const BOUND: u32 = 8;
    let mut worst = 0.0f64;
    for p_e in [0.1, 0.3, 0.5, 0.7] {
        let link = LinkReliability::new(p_e, 0.0)?;
        for n_c in 1..=3u32 {
            let greedy = nc::optimize_batch_sizes(n_c, profile, &link, None, BOUND)?.expected_time;
            let mut best = f64::INFINITY;
            for code in 0..BOUND.pow(n_c) {
                let sizes: Vec<u32> = (0..n_c).map(|k| code / BOUND.pow(k) % BOUND + 1).collect();
                let plan = CodedPlan::from_rule(n_c, &BatchRule::PerState(sizes))?;
                best = best
                    .min(nc::build_nc_chain(&plan, profile, &link)?.expected_absorption_time()?);
            }
            worst = worst.max(rel_err(greedy, best));
        }
    }
    Ok(check(
        "batch_optimizer",
        worst <= 1e-9,
        format!("greedy_vs_exhaustive max_rel_err={worst:.3e} tol=1e-9"),
    ))
}

fn gf256_rank(seed: u64) -> CheckResult {
    let mut worst = 0.0f64;
    for n_c in [4usize, 8] {
        let p = nc::gf_rank_oracle(n_c, n_c, RANK_TRIALS, seed, Field::Gf256);
        let expected: f64 = (1..=n_c as i32).map(|k| 1.0 - 256f64.powi(-k)).product();
        let se = (expected * (1.0 - expected) / RANK_TRIALS as f64).sqrt();
        worst = worst.max((p - expected).abs() / se);
    }
    check(
        "gf256_rank",
        worst <= MC_SIGMAS,
        format!("trials={RANK_TRIALS} max_z={worst:.3} tol={MC_SIGMAS}"),
    )
}
