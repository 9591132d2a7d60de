//! Command implementations behind the `nchandover` binary. Each command
//! takes a parsed [`ScenarioConfig`] and returns CSV text, so the binary
//! only handles argument parsing, file output and exit codes.

pub mod config;
pub mod validate;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::channel::to_db;
use crate::delay::{self, LinkReliability, Mode};
use crate::error::{Error, Result};
use crate::handover::{optimize_switch_time, HandoverDecision};
use crate::nc;
use crate::timing::{BackoffPolicy, TimingProfile};

pub use config::{ScenarioConfig, Sweep, SweepAxis};
pub use validate::{cmd_validate, ValidateOptions, ValidationReport};

pub const DELAY_HEADER: &str = "p_e,mode,expected_time_s,throughput_pps";
pub const DISTANCE_HEADER: &str = "d_m,snr_db,p_e,mode,expected_time_s,throughput_pps";

/// Shortest round-trip representation; exponent form outside `[1e-5, 1e15)`.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else if x == 0.0 || (1e-5..1e15).contains(&x.abs()) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// Expected time and throughput of one mode; a diverging mode gives
/// `(inf, 0)`. `NcBroadcast` uses the optimized batch plan.
pub fn mode_performance(
    mode: Mode,
    profile: &TimingProfile,
    policy: &BackoffPolicy,
    link: &LinkReliability,
    packets: u32,
    nc_search_bound: Option<u32>,
) -> Result<(f64, f64)> {
    let time = match mode {
        Mode::NcBroadcast => {
            let bound = nc_search_bound.unwrap_or_else(|| nc::default_search_bound(packets));
            nc::optimize_batch_sizes(packets, profile, link, None, bound).map(|p| p.expected_time)
        }
        _ => delay::expected_time(mode, profile, policy, link, packets),
    };
    match time {
        Ok(t) => Ok((t, delay::throughput(packets, t)?)),
        Err(Error::Diverges(_)) => Ok((f64::INFINITY, 0.0)),
        Err(e) => Err(e),
    }
}

fn mode_rows(cfg: &ScenarioConfig, link: &LinkReliability, prefix: &str) -> Result<String> {
    let mut out = String::new();
    for &mode in cfg.require_modes()? {
        let (time, rate) = mode_performance(
            mode,
            &cfg.profile,
            &cfg.backoff,
            link,
            cfg.packets,
            cfg.nc_search_bound,
        )?;
        writeln!(
            out,
            "{prefix},{},{},{}",
            mode.name(),
            fmt_float(time),
            fmt_float(rate)
        )
        .unwrap();
    }
    Ok(out)
}

/// Expected delivery time of every configured mode across the `p_e` sweep.
pub fn cmd_delay_sweep(cfg: &ScenarioConfig) -> Result<String> {
    let sweep = cfg.require_sweep(SweepAxis::ErasureProb)?;
    cfg.require_modes()?;
    let blocks = sweep
        .points()
        .into_par_iter()
        .map(|p_e| {
            let link = LinkReliability::new(p_e, cfg.p_ack)?;
            mode_rows(cfg, &link, &fmt_float(p_e))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(format!("{DELAY_HEADER}\n{}", blocks.concat()))
}

/// Expected delivery time versus distance through the configured channel.
/// In mirror mode a negative distance `-d` is `d` metres from the second AP.
pub fn cmd_distance_sweep(cfg: &ScenarioConfig) -> Result<String> {
    let sweep = cfg.require_sweep(SweepAxis::Distance)?;
    let channel = cfg.require_channel()?;
    cfg.require_modes()?;
    let points = sweep.points();
    for &d in &points {
        if d == 0.0 {
            return Err(Error::InvalidParameter(
                "distance sweep includes d = 0; start the range above zero".into(),
            ));
        }
        if d < 0.0 && !sweep.mirror {
            return Err(Error::InvalidParameter(format!(
                "negative distance {d} needs `mirror = true`"
            )));
        }
    }
    let blocks = points
        .into_par_iter()
        .map(|d| {
            let snr = channel.snr_from_distance(d.abs())?;
            let link = channel.link_from_distance(d.abs(), cfg.p_ack)?;
            let prefix = format!(
                "{},{},{}",
                fmt_float(d),
                fmt_float(to_db(snr)),
                fmt_float(link.p_e)
            );
            mode_rows(cfg, &link, &prefix)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(format!("{DISTANCE_HEADER}\n{}", blocks.concat()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HandoverOutput {
    pub summary: String,
    /// Objective at every grid switch time.
    pub curve: String,
    pub decisions: Vec<(f64, HandoverDecision)>,
}

/// Optimal switch time for the configured scenario. A `time` sweep runs the
/// optimizer once per window end `t2` and adds a leading `t2_s` column.
pub fn cmd_handover(cfg: &ScenarioConfig) -> Result<HandoverOutput> {
    let h = cfg
        .handover
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("this command needs a [handover] section".into()))?;
    let t2_sweep = match &cfg.sweep {
        Some(s) if s.axis == SweepAxis::Time => Some(s.points()),
        Some(s) => {
            return Err(Error::InvalidParameter(format!(
                "handover accepts only a `time` sweep, config has `{}`",
                s.axis.name()
            )));
        }
        None => None,
    };
    let t2_values = t2_sweep.clone().unwrap_or_else(|| vec![h.t2]);
    let decisions = t2_values
        .iter()
        .map(|&t2| Ok((t2, optimize_switch_time(&cfg.handover_scenario(Some(t2))?)?)))
        .collect::<Result<Vec<_>>>()?;

    let references = [
        ("ref_t_star_s", h.reference_t_star),
        ("ref_d1_m", h.reference_d1),
        ("ref_d2_m", h.reference_d2),
    ];
    let mut header = Vec::new();
    if t2_sweep.is_some() {
        header.push("t2_s");
    }
    header.extend([
        "t_star_s",
        "d1_m",
        "d2_m",
        "objective",
        "coded_tx_start_distance_m",
    ]);
    header.extend(references.iter().filter(|r| r.1.is_some()).map(|r| r.0));

    let mut summary = header.join(",") + "\n";
    let mut curve = String::from("t2_s,t_switch_s,objective\n");
    for (t2, d) in &decisions {
        let mut fields = Vec::new();
        if t2_sweep.is_some() {
            fields.push(fmt_float(*t2));
        }
        fields.extend(
            [
                d.t_star,
                d.d1_at_t_star,
                d.d2_at_t_star,
                d.objective_value,
                d.coded_tx_start_distance,
            ]
            .map(fmt_float),
        );
        fields.extend(references.iter().filter_map(|r| r.1).map(fmt_float));
        summary += &(fields.join(",") + "\n");
        for (t, value) in &d.curve {
            writeln!(
                curve,
                "{},{},{}",
                fmt_float(*t2),
                fmt_float(*t),
                fmt_float(*value)
            )
            .unwrap();
        }
    }
    Ok(HandoverOutput {
        summary,
        curve,
        decisions,
    })
}

/// `run.csv` -> `run.curve.csv`.
pub fn curve_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}.curve.csv"))
}
