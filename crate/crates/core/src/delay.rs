//! Closed-form expected delivery times for the DCF transmission modes, and
//! the Markov chains whose absorption times they summarize.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::chain::AbsorbingChain;
use crate::error::{Error, Result};
use crate::nc::{self, CodedPlan};
use crate::timing::{BackoffPolicy, TimingProfile};

/// Data-packet erasure and ACK loss probabilities of a link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkReliability {
    pub p_e: f64,
    pub p_ack: f64,
}

impl LinkReliability {
    pub fn new(p_e: f64, p_ack: f64) -> Result<Self> {
        for (name, p) in [("p_e", p_e), ("p_ack", p_ack)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!(
                    "{name} = {p} is not a probability"
                )));
            }
        }
        Ok(LinkReliability { p_e, p_ack })
    }

    /// Per-attempt success probability of an acknowledged unicast frame.
    pub fn p_s(&self) -> f64 {
        (1.0 - self.p_e) * (1.0 - self.p_ack)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Unicast,
    UnicastFrag,
    Broadcast,
    BroadcastAck,
    NcBroadcast,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::Unicast,
        Mode::UnicastFrag,
        Mode::Broadcast,
        Mode::BroadcastAck,
        Mode::NcBroadcast,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Unicast => "unicast",
            Mode::UnicastFrag => "unicast_frag",
            Mode::Broadcast => "broadcast",
            Mode::BroadcastAck => "broadcast_ack",
            Mode::NcBroadcast => "nc_broadcast",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown mode `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeliveryEstimate {
    pub mode: Mode,
    pub n_packets: u32,
    pub expected_time: f64,
    /// Packets per second of expected completion time.
    pub throughput: f64,
}

impl DeliveryEstimate {
    pub fn new(mode: Mode, n_packets: u32, expected_time: f64) -> Result<Self> {
        Ok(DeliveryEstimate {
            mode,
            n_packets,
            expected_time,
            throughput: throughput(n_packets, expected_time)?,
        })
    }
}

pub fn throughput(n_packets: u32, expected_time: f64) -> Result<f64> {
    if !(expected_time > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "expected time must be positive, got {expected_time}"
        )));
    }
    Ok(f64::from(n_packets) / expected_time)
}

fn require_packets(n: u32) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "at least one packet is required".into(),
        ));
    }
    Ok(())
}

fn require_success(p_s: f64, what: &str) -> Result<()> {
    if p_s <= 0.0 {
        return Err(Error::Diverges(format!(
            "{what} success probability is zero"
        )));
    }
    Ok(())
}

/// Expected time until the first packet of a contention is acknowledged.
pub fn time_first_packet(
    profile: &TimingProfile,
    policy: &BackoffPolicy,
    link: &LinkReliability,
) -> Result<f64> {
    let p_s = link.p_s();
    require_success(p_s, "unicast")?;
    let fail = 1.0 - p_s;
    let cycle = profile.mean_frame_cycle();
    let stages = policy.max_stage;

    let mut total = 0.0;
    for i in 0..stages - 1 {
        let w = fail.powi(i as i32);
        total += cycle * w + policy.backoff_time(i + 1, profile) * w;
    }
    Ok(total + fail.powi(stages as i32 - 1) / p_s * (cycle + policy.backoff_time(stages, profile)))
}

/// `n` packets, each contending from the first backoff stage.
pub fn time_unicast(
    profile: &TimingProfile,
    policy: &BackoffPolicy,
    link: &LinkReliability,
    n: u32,
) -> Result<f64> {
    require_packets(n)?;
    Ok(f64::from(n) * time_first_packet(profile, policy, link)?)
}

/// Expected time for a follow-up fragment sent `SIFS` after the previous ACK.
pub fn time_second_packet_frag(
    profile: &TimingProfile,
    policy: &BackoffPolicy,
    link: &LinkReliability,
) -> Result<f64> {
    let p_s = link.p_s();
    require_success(p_s, "fragment")?;
    let fail = 1.0 - p_s;
    let cycle = profile.mean_frame_cycle();
    let stages = policy.max_stage;

    let mut total = 0.0;
    for i in 1..stages {
        let w = fail.powi(i as i32);
        total += cycle * w + policy.backoff_time(i, profile) * w;
    }
    total += fail.powi(stages as i32) / p_s * (cycle + policy.backoff_time(stages, profile));
    Ok(total + 2.0 * profile.sifs + profile.t_p + profile.ack_duration())
}

pub fn time_unicast_frag(
    profile: &TimingProfile,
    policy: &BackoffPolicy,
    link: &LinkReliability,
    n: u32,
) -> Result<f64> {
    require_packets(n)?;
    let first = time_first_packet(profile, policy, link)?;
    if n == 1 {
        return Ok(first);
    }
    Ok(first + f64::from(n - 1) * time_second_packet_frag(profile, policy, link)?)
}

/// Unacknowledged broadcast of `n` packets after one contention.
pub fn time_broadcast(profile: &TimingProfile, link: &LinkReliability, n: u32) -> Result<f64> {
    require_packets(n)?;
    require_success(1.0 - link.p_e, "broadcast")?;
    let n = f64::from(n);
    let airtime = n * profile.t_p + (n - 1.0) * profile.sifs + profile.difs + profile.cw1_time();
    Ok(airtime / (1.0 - link.p_e))
}

/// Broadcast of a batch of `n` packets closed by a single ACK.
pub fn time_broadcast_ack(profile: &TimingProfile, link: &LinkReliability, n: u32) -> Result<f64> {
    require_packets(n)?;
    let p_batch = batch_ack_success(link, n);
    require_success(p_batch, "acknowledged batch")?;
    Ok(batch_ack_airtime(profile, n) / p_batch)
}

fn batch_ack_success(link: &LinkReliability, n: u32) -> f64 {
    (1.0 - link.p_e.powi(n as i32)) * (1.0 - link.p_ack)
}

fn batch_ack_airtime(profile: &TimingProfile, n: u32) -> f64 {
    let n = f64::from(n);
    n * profile.t_p + n * profile.sifs + profile.difs + profile.cw1_time() + profile.t_w()
}

/// Erasure-free delivery times once the station holds the medium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BestCase {
    pub broadcast: f64,
    pub unicast: f64,
    pub unicast_frag: f64,
}

pub fn best_case_times(profile: &TimingProfile, n: u32) -> Result<BestCase> {
    require_packets(n)?;
    let nf = f64::from(n);
    let access = profile.difs + profile.cw1_time();
    let payload = nf * profile.t_p;
    let acks = nf * profile.ack_duration();
    Ok(BestCase {
        broadcast: payload + (nf - 1.0) * profile.sifs + access,
        unicast: payload + nf * profile.sifs + acks + access,
        unicast_frag: payload + (2.0 * nf - 1.0) * profile.sifs + acks + access,
    })
}

/// Closed-form expected completion time for any mode.
///
/// `NcBroadcast` uses the default batch rule: one packet per missing degree
/// of freedom, starting with `n` packets.
pub fn expected_time(
    mode: Mode,
    profile: &TimingProfile,
    policy: &BackoffPolicy,
    link: &LinkReliability,
    n: u32,
) -> Result<f64> {
    match mode {
        Mode::Unicast => time_unicast(profile, policy, link, n),
        Mode::UnicastFrag => time_unicast_frag(profile, policy, link, n),
        Mode::Broadcast => time_broadcast(profile, link, n),
        Mode::BroadcastAck => time_broadcast_ack(profile, link, n),
        Mode::NcBroadcast => nc::expected_time_coded(&CodedPlan::missing_dof(n)?, profile, link),
    }
}

pub fn estimate(
    mode: Mode,
    profile: &TimingProfile,
    policy: &BackoffPolicy,
    link: &LinkReliability,
    n: u32,
) -> Result<DeliveryEstimate> {
    DeliveryEstimate::new(mode, n, expected_time(mode, profile, policy, link, n)?)
}

/// Row builder for chains assembled from consecutive blocks of states.
struct ChainBuilder {
    q: Vec<Vec<f64>>,
    absorb: Vec<f64>,
    sojourn: Vec<f64>,
}

impl ChainBuilder {
    fn new(n: usize) -> Self {
        ChainBuilder {
            q: vec![vec![0.0; n]; n],
            absorb: vec![0.0; n],
            sojourn: vec![0.0; n],
        }
    }

    /// `to = None` means absorption.
    fn edge(&mut self, from: usize, to: Option<usize>, p: f64) {
        match to {
            Some(j) => self.q[from][j] += p,
            None => self.absorb[from] += p,
        }
    }

    fn build(self) -> Result<AbsorbingChain> {
        AbsorbingChain::new(self.q, self.absorb, self.sojourn, 0)
    }
}

/// Backoff ladder: stage `i` retries into stage `i + 1`, the last stage loops.
fn add_backoff_ladder(
    b: &mut ChainBuilder,
    first: usize,
    profile: &TimingProfile,
    policy: &BackoffPolicy,
    p_s: f64,
    on_success: Option<usize>,
) {
    let stages = policy.max_stage as usize;
    for k in 0..stages {
        let state = first + k;
        b.sojourn[state] = profile.mean_frame_cycle() + policy.backoff_time(k as u32 + 1, profile);
        b.edge(state, Some(first + (k + 1).min(stages - 1)), 1.0 - p_s);
        b.edge(state, on_success, p_s);
    }
}

/// Markov chain whose exact absorption time equals the mode's closed form.
pub fn build_mode_chain(
    mode: Mode,
    profile: &TimingProfile,
    policy: &BackoffPolicy,
    link: &LinkReliability,
    n: u32,
) -> Result<AbsorbingChain> {
    require_packets(n)?;
    let packets = n as usize;
    let stages = policy.max_stage as usize;
    match mode {
        Mode::Unicast => {
            let p_s = link.p_s();
            require_success(p_s, "unicast")?;
            let mut b = ChainBuilder::new(packets * stages);
            for k in 0..packets {
                let next = (k + 1 < packets).then_some((k + 1) * stages);
                add_backoff_ladder(&mut b, k * stages, profile, policy, p_s, next);
            }
            b.build()
        }
        Mode::UnicastFrag => {
            let p_s = link.p_s();
            require_success(p_s, "unicast")?;
            // First fragment: full ladder. Each later fragment: one direct
            // attempt followed by its own ladder on failure.
            let block = stages + 1;
            let mut b = ChainBuilder::new(stages + (packets - 1) * block);
            let fragment_start = |k: usize| stages + (k - 1) * block;
            let after = |k: usize| (k + 1 < packets).then(|| fragment_start(k + 1));
            add_backoff_ladder(&mut b, 0, profile, policy, p_s, after(0));
            for k in 1..packets {
                let direct = fragment_start(k);
                b.sojourn[direct] = 2.0 * profile.sifs + profile.t_p + profile.ack_duration();
                b.edge(direct, after(k), p_s);
                b.edge(direct, Some(direct + 1), 1.0 - p_s);
                add_backoff_ladder(&mut b, direct + 1, profile, policy, p_s, after(k));
            }
            b.build()
        }
        Mode::Broadcast => {
            require_success(1.0 - link.p_e, "broadcast")?;
            let mut b = ChainBuilder::new(packets);
            for k in 0..packets {
                b.sojourn[k] = if k == 0 {
                    profile.difs + profile.cw1_time() + profile.t_p
                } else {
                    profile.sifs + profile.t_p
                };
                b.edge(k, Some(k), link.p_e);
                b.edge(k, (k + 1 < packets).then_some(k + 1), 1.0 - link.p_e);
            }
            b.build()
        }
        Mode::BroadcastAck => {
            let p_batch = batch_ack_success(link, n);
            require_success(p_batch, "acknowledged batch")?;
            let mut b = ChainBuilder::new(1);
            b.sojourn[0] = batch_ack_airtime(profile, n);
            b.edge(0, Some(0), 1.0 - p_batch);
            b.edge(0, None, p_batch);
            b.build()
        }
        Mode::NcBroadcast => nc::build_nc_chain(&CodedPlan::missing_dof(n)?, profile, link),
    }
}
