//! Acceptance run: one PASS/FAIL line per criterion, followed by the
//! handover comparison table. Exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use nchandover::channel::{
    ber_bpsk_awgn, ber_bpsk_rayleigh, ber_bpsk_rayleigh_mc, ber_conv_rayleigh, DistanceSpectrum,
};
use nchandover::cli::{cmd_validate, ScenarioConfig, ValidateOptions};
use nchandover::delay::{self, best_case_times, build_mode_chain, throughput};
use nchandover::handover::{
    optimize_switch, optimize_switch_time, rate_at, stationarity_residual, Ap, PathKind,
    SwitchWindow,
};
use nchandover::nc::{self, gf_rank_oracle, Field};
use nchandover::{
    BackoffPolicy, BatchRule, ChannelModel, CodedPlan, HandoverScenario, LinkReliability,
    MobilityPath, Mode, Point, RateMode, Scheme, TimingProfile, Variant,
};

const SEED: u64 = 20_240_601;

const P_E_GRID: [f64; 5] = [0.0, 0.1, 0.3, 0.5, 0.8];
const P_ACK_GRID: [f64; 2] = [0.0, 0.1];
const N_GRID: [u32; 3] = [1, 5, 10];

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn profile() -> TimingProfile {
    TimingProfile::preset(Variant::GLegacy)
}

fn policy() -> BackoffPolicy {
    BackoffPolicy::linear(6)
}

fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn grid() -> impl Iterator<Item = (LinkReliability, u32)> {
    P_E_GRID.into_iter().flat_map(|p_e| {
        P_ACK_GRID.into_iter().flat_map(move |p_ack| {
            N_GRID
                .into_iter()
                .map(move |n| (LinkReliability::new(p_e, p_ack).unwrap(), n))
        })
    })
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut worst = (0.0f64, String::new());
    let mut cells = 0;
    for (link, n) in grid() {
        for mode in Mode::ALL {
            let closed = delay::expected_time(mode, &profile(), &policy(), &link, n).unwrap();
            let chain = build_mode_chain(mode, &profile(), &policy(), &link, n)
                .unwrap()
                .expected_absorption_time()
                .unwrap();
            let e = rel_err(closed, chain);
            if e > worst.0 || worst.1.is_empty() {
                worst = (
                    e,
                    format!("{mode} p_e={} p_ack={} N={n}", link.p_e, link.p_ack),
                );
            }
            cells += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst.0 <= 1e-9 && secs < 10.0,
        format!(
            "{cells} cells, max rel err {:.2e} at {} (tol 1e-9), {secs:.2} s (limit 10 s)",
            worst.0, worst.1
        ),
    )
}

fn monte_carlo_agreement() -> Outcome {
    const TRIALS: u64 = 100_000;
    let start = Instant::now();
    let mut worst = (0.0f64, String::new());
    let mut worst_sample = 0.0f64;
    let mut cells = 0;
    for (k, (link, n)) in grid().enumerate() {
        for (m, mode) in Mode::ALL.into_iter().enumerate() {
            let chain = build_mode_chain(mode, &profile(), &policy(), &link, n).unwrap();
            let exact = chain.expected_absorption_time().unwrap();
            let var = chain.absorption_time_variance().unwrap();
            let mc = chain
                .simulate_absorption(TRIALS, SEED + (k * Mode::ALL.len() + m) as u64)
                .unwrap();
            let z = mc.z_score(exact, var);
            if z > worst.0 || worst.1.is_empty() {
                worst = (
                    z,
                    format!("{mode} p_e={} p_ack={} N={n}", link.p_e, link.p_ack),
                );
            }
            if mc.std_err > 0.0 {
                worst_sample = worst_sample.max((mc.mean - exact).abs() / mc.std_err);
            }
            cells += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst.0 <= 3.0 && secs < 60.0,
        format!(
            "{cells} cells x {TRIALS} trials, max |z| {:.2} at {} (tol 3; sample-SE max {worst_sample:.2}), {secs:.2} s (limit 60 s)",
            worst.0, worst.1
        ),
    )
}

/// `(1 - p_e^n)(1 - p_ack)` against a term-by-term binomial sum with exact
/// integer coefficients.
fn binomial_identity() -> Outcome {
    fn choose(n: u32, k: u32) -> u128 {
        (0..k).fold(1u128, |acc, i| acc * u128::from(n - i) / u128::from(i + 1))
    }
    let mut worst = 0.0f64;
    for p_e in P_E_GRID {
        for p_ack in P_ACK_GRID {
            let link = LinkReliability::new(p_e, p_ack).unwrap();
            for n in 1..=20u32 {
                let oracle: f64 = (1..=n)
                    .map(|j| {
                        choose(n, j) as f64
                            * (1.0 - p_e).powi(j as i32)
                            * p_e.powi((n - j) as i32)
                            * (1.0 - p_ack)
                    })
                    .sum();
                let lib_sum = nc::batch_success_prob_binomial(n, &link);
                let lib_closed = nc::batch_success_prob(n, &link);
                let closed = (1.0 - p_e.powi(n as i32)) * (1.0 - p_ack);
                for v in [
                    (oracle - closed).abs(),
                    (lib_sum - closed).abs(),
                    (lib_closed - closed).abs(),
                ] {
                    worst = worst.max(v);
                }
            }
        }
    }
    outcome(
        worst <= 1e-12,
        format!("n <= 20 over the grid, max abs err {worst:.2e} (tol 1e-12)"),
    )
}

fn best_case_gaps() -> Outcome {
    let p = profile();
    let mut worst_ulps = 0.0f64;
    for n in 1..=20u32 {
        let b = best_case_times(&p, n).unwrap();
        let nf = f64::from(n);
        let ulp = b.unicast_frag * f64::EPSILON;
        let ack_gap = (b.unicast - b.broadcast) - (nf * p.ack_duration() + p.sifs);
        let frag_gap = (b.unicast_frag - b.unicast) - (nf - 1.0) * p.sifs;
        worst_ulps = worst_ulps
            .max(ack_gap.abs() / ulp)
            .max(frag_gap.abs() / ulp);
    }
    // Gaps are differences of sums of a few terms; a handful of ulps is exact
    // up to floating-point rounding.
    outcome(
        worst_ulps <= 8.0,
        format!("N = 1..20, max deviation {worst_ulps:.1} ulp of the largest time (tol 8 ulp)"),
    )
}

fn channel_closed_forms() -> Outcome {
    const SAMPLES: u64 = 1_000_000;
    let mut worst_z = 0.0f64;
    for (k, snr) in [0.5, 1.0, 5.0, 20.0].into_iter().enumerate() {
        let (mean, se) = ber_bpsk_rayleigh_mc(snr, SAMPLES, SEED + k as u64);
        worst_z = worst_z.max((mean - ber_bpsk_rayleigh(snr)).abs() / se);
    }
    let mc_ok = worst_z <= 3.0;

    let spec = DistanceSpectrum::ieee80211();
    let grid: Vec<f64> = (0..100)
        .map(|k| 10f64.powf(-2.0 + 6.0 * f64::from(k) / 99.0))
        .collect();
    let curves: [&dyn Fn(f64) -> f64; 3] = [&ber_bpsk_awgn, &ber_bpsk_rayleigh, &|s| {
        ber_conv_rayleigh(s, &spec)
    }];
    let monotone = curves.iter().all(|f| {
        grid.windows(2).all(|w| f(w[1]) <= f(w[0]))
            && grid.iter().all(|&s| (0.0..=0.5).contains(&f(s)))
    });

    let high: Vec<f64> = grid.iter().copied().filter(|&s| s >= 10.0).collect();
    let violations = high
        .iter()
        .filter(|&&s| ber_conv_rayleigh(s, &spec) >= ber_bpsk_rayleigh(s))
        .count();
    let ratio_10 = ber_conv_rayleigh(10.0, &spec) / ber_bpsk_rayleigh(10.0);
    let ratio_1e4 = ber_conv_rayleigh(1e4, &spec) / ber_bpsk_rayleigh(1e4);
    let coded_ok = violations == 0;
    let verdict = |ok: bool| if ok { "pass" } else { "FAIL" };
    outcome(
        mc_ok && monotone && coded_ok,
        format!(
            "(a) MC 1e6 samples max |z| {worst_z:.2} {}; (b) 3 curves monotone on 100-pt log grid {}; \
             (c) coded < uncoded at snr >= 10: {violations}/{} grid points violate, coded/uncoded = {ratio_10:.1} at snr 10, {ratio_1e4:.1} at snr 1e4 {}",
            verdict(mc_ok),
            verdict(monotone),
            high.len(),
            verdict(coded_ok)
        ),
    )
}

fn optimized_nc_time(link: &LinkReliability, n: u32) -> Option<f64> {
    nc::optimize_batch_sizes(n, &profile(), link, None, nc::default_search_bound(n))
        .ok()
        .map(|p| p.expected_time)
}

fn mode_ordering() -> Outcome {
    const N: u32 = 10;
    let mut order_failures = Vec::new();
    for k in 1..=7 {
        let p_e = f64::from(k) / 10.0;
        let link = LinkReliability::new(p_e, 0.0).unwrap();
        let t = |m| delay::expected_time(m, &profile(), &policy(), &link, N).unwrap();
        let (b, ba, u) = (t(Mode::Broadcast), t(Mode::BroadcastAck), t(Mode::Unicast));
        if !(b < ba && ba < u) {
            order_failures.push(format!("p_e={p_e}: bc {b:.4e} bc_ack {ba:.4e} uc {u:.4e}"));
        }
    }
    let mut nc_failures = Vec::new();
    for k in 0..=8 {
        let p_e = f64::from(k) / 10.0;
        let link = LinkReliability::new(p_e, 0.0).unwrap();
        let ack = throughput(
            N,
            delay::expected_time(Mode::BroadcastAck, &profile(), &policy(), &link, N).unwrap(),
        )
        .unwrap();
        let coded = optimized_nc_time(&link, N).map_or(0.0, |t| throughput(N, t).unwrap());
        if coded < ack {
            nc_failures.push(format!("p_e={p_e}: nc {coded:.1} < bc_ack {ack:.1} pkt/s"));
        }
    }
    let first = |v: &Vec<String>| v.first().cloned().unwrap_or_default();
    outcome(
        order_failures.is_empty() && nc_failures.is_empty(),
        format!(
            "bc < bc_ack < uc fails at {}/7 p_e values (first: {}); nc >= bc_ack throughput fails at {}/9 (first: {})",
            order_failures.len(),
            first(&order_failures),
            nc_failures.len(),
            first(&nc_failures)
        ),
    )
}

/// Exhaustive joint search over every plan with batch sizes in `1..=bound`.
fn exhaustive_best(n_c: u32, link: &LinkReliability, bound: u32) -> f64 {
    let mut best = f64::INFINITY;
    let mut sizes = vec![1u32; n_c as usize];
    loop {
        let plan = CodedPlan::from_rule(n_c, &BatchRule::PerState(sizes.clone())).unwrap();
        let t = nc::build_nc_chain(&plan, &profile(), link)
            .unwrap()
            .expected_absorption_time()
            .unwrap();
        best = best.min(t);
        let Some(pos) = sizes.iter().position(|&s| s < bound) else {
            return best;
        };
        sizes[pos] += 1;
        sizes[..pos].iter_mut().for_each(|s| *s = 1);
    }
}

fn batch_optimizer() -> Outcome {
    const BOUND: u32 = 12;
    let start = Instant::now();
    let mut worst = 0.0f64;
    for p_e in [0.1, 0.3, 0.5, 0.7] {
        let link = LinkReliability::new(p_e, 0.0).unwrap();
        for n_c in 1..=4 {
            let greedy = nc::optimize_batch_sizes(n_c, &profile(), &link, None, BOUND).unwrap();
            worst = worst.max(rel_err(
                greedy.expected_time,
                exhaustive_best(n_c, &link, BOUND),
            ));
        }
    }
    let clean = LinkReliability::new(0.0, 0.0).unwrap();
    let single_round = (1..=8).all(|n_c| {
        let best = nc::optimize_batch_sizes(n_c, &profile(), &clean, None, 4 * n_c).unwrap();
        best.plan.batch_for(n_c) == n_c && best.expected_time == nc::round_airtime(n_c, &profile())
    });
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-9 && single_round && secs < 30.0,
        format!(
            "greedy vs exhaustive (N_i <= {BOUND}, n_c <= 4) max rel err {worst:.2e} (tol 1e-9); \
             p_e=0 single round of n_c: {single_round}; {secs:.2} s (limit 30 s)"
        ),
    )
}

fn gf_rank() -> Outcome {
    const TRIALS: u64 = 100_000;
    let mut parts = Vec::new();
    let mut ok = true;
    for n_c in [4usize, 8, 16] {
        let expected: f64 = (1..=n_c as i32).map(|k| 1.0 - 256f64.powi(-k)).product();
        let got = gf_rank_oracle(n_c, n_c, TRIALS, SEED, Field::Gf256);
        let se = (expected * (1.0 - expected) / TRIALS as f64).sqrt();
        let z = (got - expected).abs() / se;
        let extra = gf_rank_oracle(n_c, n_c + 2, TRIALS, SEED + 1, Field::Gf256);
        ok &= z <= 3.0 && extra >= 0.999;
        parts.push(format!(
            "n_c={n_c}: {got:.5} vs {expected:.5} |z| {z:.2}, +2 -> {extra:.5}"
        ));
    }
    outcome(ok, parts.join("; "))
}

fn scenario(
    ap1: Point,
    ap2: Point,
    path: MobilityPath,
    tau: f64,
    rate_mode: RateMode,
) -> HandoverScenario {
    HandoverScenario {
        ap1,
        ap2,
        path,
        tau,
        channel: ChannelModel::free_space(Scheme::BpskRayleigh, 8640, 100_000.0).unwrap(),
        rate_mode,
        n_c: 10,
        p_ack: 0.0,
        profile: profile(),
    }
}

fn straight(t2: f64) -> MobilityPath {
    MobilityPath::new(
        PathKind::Line {
            origin: Point::new(0.0, 0.0),
            heading: 0.0,
        },
        1.0,
        0.0,
        t2,
    )
    .unwrap()
}

fn handover_optimizer(table: &mut Vec<String>) -> Outcome {
    // (a) station moves from AP1 to AP2 along the line joining them.
    let mut sym_err = 0.0f64;
    for rate_mode in [RateMode::Shannon, RateMode::NcThroughput] {
        let sc = scenario(
            Point::new(0.0, 0.0),
            Point::new(20.0, 0.0),
            straight(20.0),
            0.0,
            rate_mode,
        );
        let d = optimize_switch_time(&sc).unwrap();
        let step = SwitchWindow::new(0.0, 20.0, 0.0).unwrap().grid_step();
        sym_err = sym_err.max((d.t_star - 10.0).abs() / step);
    }
    let sym_ok = sym_err <= 2.0;

    // (b) with tau = 2 the interior optimum balances R1(t) and R2(t + tau).
    let sc = scenario(
        Point::new(0.0, 0.0),
        Point::new(20.0, 0.0),
        straight(20.0),
        2.0,
        RateMode::Shannon,
    );
    let window = SwitchWindow::new(0.0, 20.0, 2.0).unwrap();
    let r1 = |t: f64| rate_at(&sc, Ap::First, t).unwrap();
    let r2 = |t: f64| rate_at(&sc, Ap::Second, t).unwrap();
    let opt = optimize_switch(r1, r2, &window).unwrap();
    let residual = stationarity_residual(r1, r2, opt.t_star, 2.0) / r1(opt.t_star);
    let stat_ok = residual <= 1e-3 && (opt.t_star - 9.0).abs() <= 2.0 * window.grid_step();

    // (c) comparison table.
    table
        .push("t2_s  t_star_s  d1_m     d2_m     start_coding_m  objective    ref_t_star_s".into());
    let mut ran = true;
    for t2 in [15.0, 20.0, 25.0, 30.0] {
        let sc = scenario(
            Point::new(0.0, 0.0),
            Point::new(25.0, 0.0),
            MobilityPath::diagonal(2.0, 0.0, t2).unwrap(),
            10.0,
            RateMode::NcThroughput,
        );
        match optimize_switch_time(&sc) {
            Ok(d) => table.push(format!(
                "{t2:<5} {:<9.4} {:<8.3} {:<8.3} {:<15.3} {:<12.3} 11.5",
                d.t_star,
                d.d1_at_t_star,
                d.d2_at_t_star,
                d.coded_tx_start_distance,
                d.objective_value
            )),
            Err(e) => {
                ran = false;
                table.push(format!("{t2:<5} error: {e}"));
            }
        }
    }
    outcome(
        sym_ok && stat_ok && ran,
        format!(
            "(a) symmetric t* off midpoint by {sym_err:.2} grid steps (tol 2); \
             (b) t*={:.4}, relative residual |R1(t*)-R2(t*+tau)|/R1 = {residual:.2e} (tol 1e-3); \
             (c) comparison table below",
            opt.t_star
        ),
    )
}

fn determinism() -> Outcome {
    let cfg = ScenarioConfig {
        seed: SEED,
        ..ScenarioConfig::default()
    };
    let a = cmd_validate(&cfg, &ValidateOptions::default())
        .unwrap()
        .to_string();
    let b = cmd_validate(&cfg, &ValidateOptions::default())
        .unwrap()
        .to_string();
    outcome(
        a == b,
        format!(
            "two validate runs, {} bytes each, identical: {}",
            a.len(),
            a == b
        ),
    )
}

fn main() -> ExitCode {
    let mut table = Vec::new();
    let criteria: Vec<(&str, Outcome)> = vec![
        ("oracle equivalence", oracle_equivalence()),
        ("monte-carlo agreement", monte_carlo_agreement()),
        ("batch success identity", binomial_identity()),
        ("best-case gaps", best_case_gaps()),
        ("channel closed forms", channel_closed_forms()),
        ("mode ordering", mode_ordering()),
        ("batch optimizer", batch_optimizer()),
        ("gf(256) rank", gf_rank()),
        ("handover optimizer", handover_optimizer(&mut table)),
        ("determinism", determinism()),
    ];
    let mut failed = 0;
    for (k, (name, o)) in criteria.iter().enumerate() {
        let verdict = if o.passed { "PASS" } else { "FAIL" };
        println!("[{verdict}] {:>2} {name}: {}", k + 1, o.detail);
        failed += usize::from(!o.passed);
    }
    println!();
    println!("handover comparison (v = 2 m/s, tau = 10 s, APs (0,0) and (25,0), path y = x):");
    for line in &table {
        println!("  {line}");
    }
    println!();
    println!(
        "{}/{} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
