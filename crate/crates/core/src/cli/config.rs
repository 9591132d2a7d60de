//! Scenario configuration files.
//!
//! The format is flat `key = value` lines grouped under `[section]` headers.
//! `#` starts a comment. Every section is optional; commands check for the
//! pieces they need. Durations in the `[profile]` section are microseconds.
//!
//! ```text
//! [profile]
//! variant = g_legacy
//! t_p_us = 1000
//!
//! [backoff]
//! max_stage = 6
//! growth = linear
//!
//! [link]
//! p_e = 0.1
//! p_ack = 0
//!
//! [channel]
//! scheme = bpsk_rayleigh
//! pathloss_c = 100000
//! pathloss_exp = 2
//! packet_bits = 8000
//!
//! [traffic]
//! packets = 10
//! modes = unicast, unicast_frag, broadcast, broadcast_ack, nc_broadcast
//!
//! [sweep]
//! axis = p_e
//! start = 0
//! stop = 0.8
//! step = 0.1
//!
//! [handover]
//! ap1 = 0, 0
//! ap2 = 25, 0
//! path = diagonal
//! speed = 2
//! t1 = 0
//! t2 = 20
//! tau = 10
//! rate = nc_throughput
//!
//! [run]
//! seed = 1
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::channel::{ChannelModel, DistanceSpectrum, Scheme};
use crate::delay::{LinkReliability, Mode};
use crate::error::{Error, Result};
use crate::handover::{HandoverScenario, MobilityPath, PathKind, Point, RateMode};
use crate::timing::{BackoffPolicy, TimingProfile, Variant, WindowGrowth};

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_PACKET_BITS: u32 = 8000;
pub const DEFAULT_PACKETS: u32 = 10;

/// Sweep grid values are rounded to this resolution so that accumulated
/// step error never shows up in the output.
const GRID_RESOLUTION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    ErasureProb,
    Distance,
    Time,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::ErasureProb => "p_e",
            SweepAxis::Distance => "distance",
            SweepAxis::Time => "time",
        }
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "p_e" => Ok(SweepAxis::ErasureProb),
            "distance" => Ok(SweepAxis::Distance),
            "time" => Ok(SweepAxis::Time),
            other => Err(Error::InvalidParameter(format!(
                "unknown sweep axis `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
    /// Distance sweeps only: negative values are distances from the second AP.
    pub mirror: bool,
}

impl Sweep {
    pub fn new(axis: SweepAxis, start: f64, stop: f64, step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sweep step {step} must be positive"
            )));
        }
        if !(start.is_finite() && stop.is_finite() && start <= stop) {
            return Err(Error::InvalidParameter(format!(
                "sweep range [{start}, {stop}] is empty"
            )));
        }
        Ok(Sweep {
            axis,
            start,
            stop,
            step,
            mirror: false,
        })
    }

    /// `start, start + step, ...` up to and including `stop`.
    pub fn points(&self) -> Vec<f64> {
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|k| {
                let x = self.start + k as f64 * self.step;
                (x * GRID_RESOLUTION).round() / GRID_RESOLUTION
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct HandoverConfig {
    pub ap1: Point,
    pub ap2: Point,
    pub path: PathKind,
    pub speed: f64,
    pub t1: f64,
    pub t2: f64,
    pub tau: f64,
    pub rate_mode: RateMode,
    /// Figures quoted elsewhere, echoed next to the computed ones.
    pub reference_t_star: Option<f64>,
    pub reference_d1: Option<f64>,
    pub reference_d2: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub profile: TimingProfile,
    pub backoff: BackoffPolicy,
    pub link: Option<LinkReliability>,
    pub p_ack: f64,
    pub channel: Option<ChannelModel>,
    pub packets: u32,
    /// Per-state search bound for the batch optimizer; `None` uses the default.
    pub nc_search_bound: Option<u32>,
    pub modes: Vec<Mode>,
    pub sweep: Option<Sweep>,
    pub handover: Option<HandoverConfig>,
    pub out: Option<PathBuf>,
    pub seed: u64,
    /// Monte-Carlo trials per cell for `validate`.
    pub mc_trials: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            profile: TimingProfile::preset(Variant::GLegacy),
            backoff: BackoffPolicy::default(),
            link: None,
            p_ack: 0.0,
            channel: None,
            packets: DEFAULT_PACKETS,
            nc_search_bound: None,
            modes: Mode::ALL.to_vec(),
            sweep: None,
            handover: None,
            out: None,
            seed: DEFAULT_SEED,
            mc_trials: 20_000,
        }
    }
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
        text.parse()
    }

    pub fn require_sweep(&self, axis: SweepAxis) -> Result<&Sweep> {
        match &self.sweep {
            Some(s) if s.axis == axis => Ok(s),
            Some(s) => Err(Error::InvalidParameter(format!(
                "this command needs a `{}` sweep, config has `{}`",
                axis.name(),
                s.axis.name()
            ))),
            None => Err(Error::InvalidParameter(format!(
                "this command needs a [sweep] section with axis = {}",
                axis.name()
            ))),
        }
    }

    pub fn require_channel(&self) -> Result<&ChannelModel> {
        self.channel
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("this command needs a [channel] section".into()))
    }

    pub fn require_modes(&self) -> Result<&[Mode]> {
        if self.modes.is_empty() {
            return Err(Error::InvalidParameter("mode list is empty".into()));
        }
        Ok(&self.modes)
    }

    /// Handover scenario with the window end replaced by `t2` if given.
    pub fn handover_scenario(&self, t2: Option<f64>) -> Result<HandoverScenario> {
        let h = self.handover.as_ref().ok_or_else(|| {
            Error::InvalidParameter("this command needs a [handover] section".into())
        })?;
        let path = MobilityPath::new(h.path.clone(), h.speed, h.t1, t2.unwrap_or(h.t2))?;
        let scenario = HandoverScenario {
            ap1: h.ap1,
            ap2: h.ap2,
            path,
            tau: h.tau,
            channel: self.require_channel()?.clone(),
            rate_mode: h.rate_mode,
            n_c: self.packets,
            p_ack: self.p_ack,
            profile: self.profile,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

impl FromStr for ScenarioConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut doc = Document::parse(text)?;
        let mut cfg = ScenarioConfig::default();

        if let Some(mut s) = doc.take("profile") {
            let variant: Variant = s.parse_or("variant", Variant::GLegacy)?;
            let mut p = TimingProfile::preset(variant);
            for (key, field) in [
                ("t_slot_us", &mut p.t_slot),
                ("sifs_us", &mut p.sifs),
                ("difs_us", &mut p.difs),
                ("t_p_us", &mut p.t_p),
                ("t_rt_us", &mut p.t_rt),
            ] {
                if let Some(us) = s.get::<f64>(key)? {
                    *field = us / 1e6;
                }
            }
            p.ack_bytes = s.parse_or("ack_bytes", p.ack_bytes)?;
            p.ack_rate = s.parse_or("ack_rate", p.ack_rate)?;
            p.cw_min = s.parse_or("cw_min", p.cw_min)?;
            p.cw_max = s.parse_or("cw_max", p.cw_max)?;
            p.validate().map_err(|e| s.section_error(e))?;
            cfg.profile = p;
            s.finish()?;
        }

        if let Some(mut s) = doc.take("backoff") {
            let stages = s.parse_or("max_stage", cfg.backoff.max_stage)?;
            let growth: WindowGrowth = s.parse_or("growth", cfg.backoff.growth)?;
            cfg.backoff = BackoffPolicy::new(stages, growth).map_err(|e| s.section_error(e))?;
            s.finish()?;
        }

        if let Some(mut s) = doc.take("link") {
            cfg.p_ack = s.parse_or("p_ack", 0.0)?;
            if let Some(p_e) = s.get::<f64>("p_e")? {
                cfg.link =
                    Some(LinkReliability::new(p_e, cfg.p_ack).map_err(|e| s.section_error(e))?);
            } else {
                LinkReliability::new(0.0, cfg.p_ack).map_err(|e| s.section_error(e))?;
            }
            s.finish()?;
        }

        if let Some(mut s) = doc.take("channel") {
            let scheme: Scheme = s.require("scheme")?;
            let packet_bits = match (s.get::<u32>("packet_bits")?, s.get::<f64>("data_rate")?) {
                (Some(_), Some(_)) => {
                    return Err(s.section_error(Error::InvalidParameter(
                        "give packet_bits or data_rate, not both".into(),
                    )));
                }
                (Some(bits), None) => bits,
                // Payload airtime times the data rate.
                (None, Some(rate)) => (cfg.profile.t_p * rate).round() as u32,
                (None, None) => DEFAULT_PACKET_BITS,
            };
            let pathloss_c = s.require("pathloss_c")?;
            let pathloss_exp = s.parse_or("pathloss_exp", 2.0)?;
            let spectrum = match s.get::<String>("spectrum")? {
                Some(name) if name == "ieee80211" => Some(DistanceSpectrum::ieee80211()),
                Some(file) => {
                    let text = std::fs::read_to_string(&file).map_err(|e| {
                        s.section_error(Error::Parse(format!(
                            "cannot read spectrum table {file}: {e}"
                        )))
                    })?;
                    Some(DistanceSpectrum::parse_table(&text)?)
                }
                None => (scheme == Scheme::ConvBpskRayleigh).then(DistanceSpectrum::ieee80211),
            };
            cfg.channel = Some(
                ChannelModel::new(scheme, packet_bits, pathloss_c, pathloss_exp, spectrum)
                    .map_err(|e| s.section_error(e))?,
            );
            s.finish()?;
        }

        if let Some(mut s) = doc.take("traffic") {
            cfg.packets = s.parse_or("packets", cfg.packets)?;
            if cfg.packets == 0 {
                return Err(s.key_error("packets", "must be at least 1"));
            }
            cfg.nc_search_bound = s.get("nc_search_bound")?;
            if cfg.nc_search_bound == Some(0) {
                return Err(s.key_error("nc_search_bound", "must be at least 1"));
            }
            if let Some((raw, line)) = s.raw("modes") {
                cfg.modes = raw
                    .split(',')
                    .map(str::trim)
                    .filter(|m| !m.is_empty())
                    .map(|m| {
                        m.parse()
                            .map_err(|e: Error| line_error(line, &e.to_string()))
                    })
                    .collect::<Result<_>>()?;
            }
            s.finish()?;
        }

        if let Some(mut s) = doc.take("sweep") {
            let axis: SweepAxis = s.require("axis")?;
            let mut sweep = Sweep::new(
                axis,
                s.require("start")?,
                s.require("stop")?,
                s.require("step")?,
            )
            .map_err(|e| s.section_error(e))?;
            sweep.mirror = s.parse_or("mirror", false)?;
            if sweep.mirror && axis != SweepAxis::Distance {
                return Err(s.key_error("mirror", "only applies to distance sweeps"));
            }
            cfg.sweep = Some(sweep);
            s.finish()?;
        }

        if let Some(mut s) = doc.take("handover") {
            let ap1 = s.require::<PointValue>("ap1")?.0;
            let ap2 = s.require::<PointValue>("ap2")?.0;
            let path = match s.get::<String>("path")?.as_deref().unwrap_or("diagonal") {
                "diagonal" => PathKind::Line {
                    origin: Point::new(0.0, 0.0),
                    heading: std::f64::consts::FRAC_PI_4,
                },
                "line" => PathKind::Line {
                    origin: s.parse_or("origin", PointValue(Point::new(0.0, 0.0)))?.0,
                    heading: s.require::<f64>("heading_deg")?.to_radians(),
                },
                "waypoints" => PathKind::Waypoints(s.require::<WaypointList>("waypoints")?.0),
                other => return Err(s.key_error("path", &format!("unknown path `{other}`"))),
            };
            cfg.handover = Some(HandoverConfig {
                ap1,
                ap2,
                path,
                speed: s.require("speed")?,
                t1: s.parse_or("t1", 0.0)?,
                t2: s.require("t2")?,
                tau: s.require("tau")?,
                rate_mode: s.parse_or("rate", RateMode::NcThroughput)?,
                reference_t_star: s.get("reference_t_star")?,
                reference_d1: s.get("reference_d1")?,
                reference_d2: s.get("reference_d2")?,
            });
            s.finish()?;
        }

        if let Some(mut s) = doc.take("run") {
            cfg.seed = s.parse_or("seed", cfg.seed)?;
            cfg.out = s.get::<String>("out")?.map(PathBuf::from);
            cfg.mc_trials = s.parse_or("mc_trials", cfg.mc_trials)?;
            if cfg.mc_trials < 2 {
                return Err(s.key_error("mc_trials", "must be at least 2"));
            }
            s.finish()?;
        }

        doc.finish()?;
        Ok(cfg)
    }
}

fn line_error(line: usize, msg: &str) -> Error {
    Error::Parse(format!("line {line}: {msg}"))
}

/// `x, y`
struct PointValue(Point);

impl FromStr for PointValue {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        match parts.as_slice() {
            [x, y] => {
                let parse = |v: &str| {
                    v.parse::<f64>()
                        .map_err(|_| Error::InvalidParameter(format!("bad coordinate `{v}`")))
                };
                Ok(PointValue(Point::new(parse(x)?, parse(y)?)))
            }
            _ => Err(Error::InvalidParameter(format!(
                "expected `x, y`, got `{s}`"
            ))),
        }
    }
}

/// `x, y; x, y; ...`
struct WaypointList(Vec<Point>);

impl FromStr for WaypointList {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.split(';')
            .filter(|p| !p.trim().is_empty())
            .map(|p| p.parse::<PointValue>().map(|v| v.0))
            .collect::<Result<_>>()
            .map(WaypointList)
    }
}

/// Parsed but not yet interpreted file: sections of `key -> (value, line)`.
struct Document {
    sections: BTreeMap<String, Section>,
}

struct Section {
    name: String,
    line: usize,
    entries: BTreeMap<String, (String, usize)>,
}

const SECTIONS: [&str; 8] = [
    "profile", "backoff", "link", "channel", "traffic", "sweep", "handover", "run",
];

impl Document {
    fn parse(text: &str) -> Result<Self> {
        let mut sections: BTreeMap<String, Section> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| line_error(line, "unterminated section header"))?
                    .trim()
                    .to_string();
                if !SECTIONS.contains(&name.as_str()) {
                    return Err(line_error(line, &format!("unknown section [{name}]")));
                }
                if sections.contains_key(&name) {
                    return Err(line_error(line, &format!("section [{name}] repeated")));
                }
                sections.insert(
                    name.clone(),
                    Section {
                        name: name.clone(),
                        line,
                        entries: BTreeMap::new(),
                    },
                );
                current = Some(name);
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| line_error(line, "expected `key = value`"))?;
            let section = current
                .as_ref()
                .ok_or_else(|| line_error(line, "key outside of any [section]"))?;
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(line_error(line, "empty key"));
            }
            let entries = &mut sections.get_mut(section).expect("section inserted").entries;
            if entries.contains_key(&key) {
                return Err(line_error(
                    line,
                    &format!("key `{key}` repeated in [{section}]"),
                ));
            }
            entries.insert(key, (value.trim().to_string(), line));
        }
        Ok(Document { sections })
    }

    fn take(&mut self, name: &str) -> Option<Section> {
        self.sections.remove(name)
    }

    fn finish(self) -> Result<()> {
        match self.sections.into_values().next() {
            Some(s) => Err(line_error(
                s.line,
                &format!("section [{}] was not used", s.name),
            )),
            None => Ok(()),
        }
    }
}

impl Section {
    fn raw(&mut self, key: &str) -> Option<(String, usize)> {
        self.entries.remove(key)
    }

    fn get<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((value, line)) => value
                .parse()
                .map(Some)
                .map_err(|e| line_error(line, &format!("{key}: {e}"))),
        }
    }

    fn parse_or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn require<T: FromStr>(&mut self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)?
            .ok_or_else(|| line_error(self.line, &format!("[{}] needs `{key}`", self.name)))
    }

    fn key_error(&self, key: &str, msg: &str) -> Error {
        line_error(self.line, &format!("[{}] {key}: {msg}", self.name))
    }

    fn section_error(&self, e: Error) -> Error {
        line_error(self.line, &format!("[{}] {e}", self.name))
    }

    /// Reject leftover keys.
    fn finish(self) -> Result<()> {
        match self.entries.into_iter().min_by_key(|(_, (_, line))| *line) {
            Some((key, (_, line))) => Err(line_error(
                line,
                &format!("unknown key `{key}` in [{}]", self.name),
            )),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_without_sections() {
        let cfg: ScenarioConfig = "# nothing\n".parse().unwrap();
        assert_eq!(cfg.profile, TimingProfile::preset(Variant::GLegacy));
        assert_eq!(cfg.modes.len(), 5);
        assert_eq!(cfg.seed, DEFAULT_SEED);
        assert!(cfg.sweep.is_none());
    }

    #[test]
    fn full_file() {
        let text = "\
[profile]
variant = b
t_p_us = 500
[backoff]
max_stage = 4
growth = binary_exponential
[link]
p_e = 0.2
p_ack = 0.05
[traffic]
packets = 7
modes = unicast, nc_broadcast
[sweep]
axis = p_e
start = 0
stop = 0.3
step = 0.1
[run]
seed = 99
";
        let cfg: ScenarioConfig = text.parse().unwrap();
        assert_eq!(cfg.profile.t_p, 500e-6);
        assert_eq!(cfg.profile.cw_min, 31);
        assert_eq!(cfg.backoff.max_stage, 4);
        assert_eq!(cfg.link.unwrap().p_e, 0.2);
        assert_eq!(cfg.p_ack, 0.05);
        assert_eq!(cfg.modes, vec![Mode::Unicast, Mode::NcBroadcast]);
        assert_eq!(cfg.sweep.unwrap().points(), vec![0.0, 0.1, 0.2, 0.3]);
        assert_eq!(cfg.seed, 99);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            ("[profile]\nvariant = z\n", "line 2"),
            ("[link]\np_e = 0.1\nbogus = 1\n", "line 3"),
            ("x = 1\n", "line 1"),
            ("[nope]\n", "line 1"),
            ("[link]\np_e = 2\n", "line 1"),
            (
                "[sweep]\naxis = p_e\nstart = 0\nstop = 1\nstep = 0\n",
                "line 1",
            ),
            ("[link]\np_e = 0.1\np_e = 0.2\n", "line 3"),
            ("[traffic]\n\n\nmodes = unicast, multicast\n", "line 4"),
        ];
        for (text, expect) in cases {
            match text.parse::<ScenarioConfig>() {
                Err(Error::Parse(msg)) => assert!(msg.starts_with(expect), "{text:?}: {msg}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn empty_mode_list() {
        let cfg: ScenarioConfig = "[traffic]\nmodes =\n".parse().unwrap();
        assert!(cfg.require_modes().is_err());
    }

    #[test]
    fn grid_points_are_clean() {
        let s = Sweep::new(SweepAxis::Distance, 1.0, 30.0, 0.1).unwrap();
        let pts = s.points();
        assert_eq!(pts.len(), 291);
        assert_eq!(pts[2], 1.2);
        assert_eq!(*pts.last().unwrap(), 30.0);
        assert_eq!(
            Sweep::new(SweepAxis::Time, 5.0, 5.0, 1.0).unwrap().points(),
            vec![5.0]
        );
        assert!(Sweep::new(SweepAxis::Time, 5.0, 4.0, 1.0).is_err());
    }

    #[test]
    fn channel_and_handover() {
        let text = "\
[channel]
scheme = conv_bpsk_rayleigh
pathloss_c = 100000
data_rate = 6000000
[handover]
ap1 = 0, 0
ap2 = 25, 0
speed = 2
t2 = 20
tau = 10
rate = shannon
";
        let cfg: ScenarioConfig = text.parse().unwrap();
        let ch = cfg.channel.as_ref().unwrap();
        assert_eq!(ch.packet_bits, (cfg.profile.t_p * 6e6).round() as u32);
        assert!(ch.spectrum.is_some());
        let sc = cfg.handover_scenario(Some(25.0)).unwrap();
        assert_eq!(sc.path.t2, 25.0);
        assert_eq!(sc.rate_mode, RateMode::Shannon);
        let bad = cfg.handover_scenario(Some(10.0));
        assert!(matches!(bad, Err(Error::Infeasible(_))));
    }
}
