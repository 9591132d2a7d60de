//! Two-AP handover: station mobility, per-AP rate functions, the sum-rate
//! objective over the switch time, and its optimizer.

pub mod protocol;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelModel;
use crate::error::{Error, Result};
use crate::nc::{self, CodedPlan};
use crate::numeric::{adaptive_simpson, golden_section_max};
use crate::timing::TimingProfile;

/// Smallest distance fed to the path-loss model.
pub const D_MIN: f64 = 0.1;
/// Grid points per observation window.
pub const GRID_STEPS: usize = 1000;
/// Golden-section stopping width (s).
pub const REFINE_TOL: f64 = 1e-4;
pub const QUAD_REL_TOL: f64 = 1e-8;
/// Grid points within this fraction of the optimum count as near-optimal.
pub const NEAR_OPTIMAL_FRACTION: f64 = 0.01;

const WINDOW_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

pub type ParametricFn = Arc<dyn Fn(f64) -> Point + Send + Sync>;

#[derive(Clone)]
pub enum PathKind {
    /// Straight line from `origin` along `heading` (radians from the x axis).
    Line { origin: Point, heading: f64 },
    /// Polyline traversed at constant speed; continues along the last
    /// segment past the final waypoint.
    Waypoints(Vec<Point>),
    /// Caller-supplied position as a function of time. The caller is
    /// responsible for keeping the speed consistent with `speed`.
    Parametric(ParametricFn),
}

impl fmt::Debug for PathKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PathKind::Line { origin, heading } => f
                .debug_struct("Line")
                .field("origin", origin)
                .field("heading", heading)
                .finish(),
            PathKind::Waypoints(points) => f.debug_tuple("Waypoints").field(points).finish(),
            PathKind::Parametric(_) => f.write_str("Parametric(..)"),
        }
    }
}

/// Station trajectory, parameterized by arc length `speed * t`.
#[derive(Debug, Clone)]
pub struct MobilityPath {
    pub kind: PathKind,
    pub speed: f64,
    pub t1: f64,
    pub t2: f64,
}

impl MobilityPath {
    pub fn new(kind: PathKind, speed: f64, t1: f64, t2: f64) -> Result<Self> {
        if !(t1 < t2) || !t1.is_finite() || !t2.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "observation window [{t1}, {t2}] is empty"
            )));
        }
        if !(speed >= 0.0 && speed.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "speed {speed} must be non-negative"
            )));
        }
        if let PathKind::Waypoints(points) = &kind {
            if points.len() < 2 {
                return Err(Error::InvalidParameter(
                    "a waypoint path needs two points".into(),
                ));
            }
            if points.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidParameter(
                    "consecutive waypoints coincide".into(),
                ));
            }
        }
        Ok(MobilityPath {
            kind,
            speed,
            t1,
            t2,
        })
    }

    /// The `y = x` diagonal from the origin.
    pub fn diagonal(speed: f64, t1: f64, t2: f64) -> Result<Self> {
        Self::new(
            PathKind::Line {
                origin: Point::new(0.0, 0.0),
                heading: std::f64::consts::FRAC_PI_4,
            },
            speed,
            t1,
            t2,
        )
    }

    pub fn distance_traveled(&self, t: f64) -> f64 {
        self.speed * t
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t1 - WINDOW_SLACK && t <= self.t2 + WINDOW_SLACK
    }

    pub fn position(&self, t: f64) -> Result<Point> {
        if !self.contains(t) {
            return Err(Error::OutOfWindow {
                t,
                t1: self.t1,
                t2: self.t2,
            });
        }
        Ok(self.position_unchecked(t))
    }

    fn position_unchecked(&self, t: f64) -> Point {
        let s = self.distance_traveled(t);
        match &self.kind {
            PathKind::Line { origin, heading } => {
                Point::new(origin.x + s * heading.cos(), origin.y + s * heading.sin())
            }
            PathKind::Waypoints(points) => along_polyline(points, s),
            PathKind::Parametric(f) => f(t),
        }
    }
}

fn along_polyline(points: &[Point], s: f64) -> Point {
    let mut remaining = s;
    let last = points.len() - 2;
    for (k, seg) in points.windows(2).enumerate() {
        let len = seg[0].distance(&seg[1]);
        if remaining <= len || k == last {
            let f = remaining / len;
            return Point::new(
                seg[0].x + f * (seg[1].x - seg[0].x),
                seg[0].y + f * (seg[1].y - seg[0].y),
            );
        }
        remaining -= len;
    }
    unreachable!("polyline has at least one segment")
}

/// Euclidean distance from an AP to the station at time `t`.
pub fn distance_to_ap(ap: Point, path: &MobilityPath, t: f64) -> Result<f64> {
    Ok(ap.distance(&path.position(t)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMode {
    /// Delivered coded packets per second of expected completion time.
    NcThroughput,
    /// `ln(1 + snr)` with unit bandwidth.
    Shannon,
}

impl FromStr for RateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "nc_throughput" => Ok(RateMode::NcThroughput),
            "shannon" => Ok(RateMode::Shannon),
            other => Err(Error::InvalidParameter(format!(
                "unknown rate mode `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ap {
    First,
    Second,
}

#[derive(Debug, Clone)]
pub struct HandoverScenario {
    pub ap1: Point,
    pub ap2: Point,
    pub path: MobilityPath,
    /// Re-association delay after switching.
    pub tau: f64,
    pub channel: ChannelModel,
    pub rate_mode: RateMode,
    /// Coded packets per delivery for [`RateMode::NcThroughput`].
    pub n_c: u32,
    pub p_ack: f64,
    pub profile: TimingProfile,
}

impl HandoverScenario {
    pub fn validate(&self) -> Result<()> {
        if self.ap1 == self.ap2 {
            return Err(Error::InvalidParameter("access points coincide".into()));
        }
        if !(self.tau >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tau {} must be non-negative",
                self.tau
            )));
        }
        if self.path.t1 + self.tau >= self.path.t2 {
            return Err(Error::Infeasible(format!(
                "re-association delay {} does not fit in window [{}, {}]",
                self.tau, self.path.t1, self.path.t2
            )));
        }
        if self.rate_mode == RateMode::NcThroughput && self.n_c == 0 {
            return Err(Error::InvalidParameter("n_c must be at least 1".into()));
        }
        Ok(())
    }

    pub fn ap(&self, which: Ap) -> Point {
        match which {
            Ap::First => self.ap1,
            Ap::Second => self.ap2,
        }
    }

    pub fn distance(&self, which: Ap, t: f64) -> Result<f64> {
        distance_to_ap(self.ap(which), &self.path, t)
    }
}

/// Rate received from one AP at time `t`; distances are clamped to [`D_MIN`].
pub fn rate_at(scenario: &HandoverScenario, which: Ap, t: f64) -> Result<f64> {
    let d = scenario.distance(which, t)?.max(D_MIN);
    rate_at_distance(scenario, d)
}

pub fn rate_at_distance(scenario: &HandoverScenario, d: f64) -> Result<f64> {
    let d = d.max(D_MIN);
    match scenario.rate_mode {
        RateMode::Shannon => Ok(scenario.channel.snr_from_distance(d)?.ln_1p()),
        RateMode::NcThroughput => {
            let link = scenario.channel.link_from_distance(d, scenario.p_ack)?;
            let plan = CodedPlan::missing_dof(scenario.n_c)?;
            match nc::expected_time_coded(&plan, &scenario.profile, &link) {
                Ok(time) => Ok(f64::from(scenario.n_c) / time),
                Err(Error::Diverges(_)) => Ok(0.0),
                Err(e) => Err(e),
            }
        }
    }
}

/// Observation window and re-association delay of a switch-time problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchWindow {
    pub t1: f64,
    pub t2: f64,
    pub tau: f64,
}

impl SwitchWindow {
    pub fn new(t1: f64, t2: f64, tau: f64) -> Result<Self> {
        if !(tau >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tau {tau} must be non-negative"
            )));
        }
        if !(t1 + tau < t2) {
            return Err(Error::Infeasible(format!(
                "re-association delay {tau} does not fit in window [{t1}, {t2}]"
            )));
        }
        Ok(SwitchWindow { t1, t2, tau })
    }

    pub fn latest_switch(&self) -> f64 {
        self.t2 - self.tau
    }

    pub fn grid_step(&self) -> f64 {
        (self.t2 - self.t1) / GRID_STEPS as f64
    }

    fn check(&self, t: f64) -> Result<()> {
        if t < self.t1 - WINDOW_SLACK || t > self.latest_switch() + WINDOW_SLACK {
            return Err(Error::OutOfWindow {
                t,
                t1: self.t1,
                t2: self.latest_switch(),
            });
        }
        Ok(())
    }

    /// Grid over `[t1, t2 - tau]` with the window's step, endpoint included.
    pub fn grid(&self) -> Vec<f64> {
        let step = self.grid_step();
        let last = self.latest_switch();
        let mut points: Vec<f64> = (0..=GRID_STEPS)
            .map(|k| self.t1 + k as f64 * step)
            .take_while(|&t| t < last - 1e-12 * step)
            .collect();
        points.push(last);
        points
    }
}

/// Rate-time collected when switching at `t_switch`:
/// `int_{t1}^{t} R1 + int_{t+tau}^{t2} R2`.
pub fn switch_objective<R1, R2>(r1: R1, r2: R2, window: &SwitchWindow, t_switch: f64) -> Result<f64>
where
    R1: Fn(f64) -> f64,
    R2: Fn(f64) -> f64,
{
    window.check(t_switch)?;
    let t = t_switch.clamp(window.t1, window.latest_switch());
    let before = adaptive_simpson(&r1, window.t1, t, QUAD_REL_TOL);
    let after = adaptive_simpson(&r2, t + window.tau, window.t2, QUAD_REL_TOL);
    Ok(before + after)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchOptimum {
    pub t_star: f64,
    pub objective: f64,
    /// `(t, objective)` at every grid point.
    pub curve: Vec<(f64, f64)>,
    /// Grid times whose objective is within 1% of the optimum.
    pub near_optimal: Vec<f64>,
}

/// Grid search over the feasible switch times, refined by golden section
/// around the best grid point. Never returns worse than the best grid point.
pub fn optimize_switch<R1, R2>(r1: R1, r2: R2, window: &SwitchWindow) -> Result<SwitchOptimum>
where
    R1: Fn(f64) -> f64,
    R2: Fn(f64) -> f64,
{
    let objective = |t: f64| switch_objective(&r1, &r2, window, t);
    let curve = window
        .grid()
        .into_iter()
        .map(|t| Ok((t, objective(t)?)))
        .collect::<Result<Vec<_>>>()?;

    let (mut t_star, mut best) =
        curve
            .iter()
            .copied()
            .fold((window.t1, f64::NEG_INFINITY), |acc, p| {
                if p.1 > acc.1 {
                    p
                } else {
                    acc
                }
            });

    let step = window.grid_step();
    let lo = (t_star - step).max(window.t1);
    let hi = (t_star + step).min(window.latest_switch());
    if hi - lo > REFINE_TOL {
        let (t, value) = golden_section_max(
            |t| objective(t).unwrap_or(f64::NEG_INFINITY),
            lo,
            hi,
            REFINE_TOL,
        );
        if value > best {
            t_star = t;
            best = value;
        }
    }

    let threshold = best - NEAR_OPTIMAL_FRACTION * best.abs();
    let near_optimal = curve
        .iter()
        .filter(|p| p.1 >= threshold)
        .map(|p| p.0)
        .collect();
    Ok(SwitchOptimum {
        t_star,
        objective: best,
        curve,
        near_optimal,
    })
}

/// `|R1(t) - R2(t + tau)|`, zero at an interior optimum.
pub fn stationarity_residual<R1, R2>(r1: R1, r2: R2, t: f64, tau: f64) -> f64
where
    R1: Fn(f64) -> f64,
    R2: Fn(f64) -> f64,
{
    (r1(t) - r2(t + tau)).abs()
}

pub fn sum_rate_objective(scenario: &HandoverScenario, t_switch: f64) -> Result<f64> {
    scenario.validate()?;
    let window = SwitchWindow::new(scenario.path.t1, scenario.path.t2, scenario.tau)?;
    let (r1, r2) = scenario_rates(scenario);
    switch_objective(r1, r2, &window, t_switch)
}

fn scenario_rates(
    scenario: &HandoverScenario,
) -> (impl Fn(f64) -> f64 + '_, impl Fn(f64) -> f64 + '_) {
    // Window checks are done by the caller; clamp tiny overshoots from the
    // quadrature nodes instead of failing.
    let clamp = |t: f64| t.clamp(scenario.path.t1, scenario.path.t2);
    let r1 = move |t: f64| rate_at(scenario, Ap::First, clamp(t)).unwrap_or(0.0);
    let r2 = move |t: f64| rate_at(scenario, Ap::Second, clamp(t)).unwrap_or(0.0);
    (r1, r2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HandoverDecision {
    pub t_star: f64,
    pub d1_at_t_star: f64,
    pub d2_at_t_star: f64,
    /// `v * t_star - v * tau`: where along the path AP1 starts coded
    /// transmission. Negative when `t_star < tau`.
    pub coded_tx_start_distance: f64,
    pub objective_value: f64,
    pub near_optimal: Vec<f64>,
    pub curve: Vec<(f64, f64)>,
}

pub fn optimize_switch_time(scenario: &HandoverScenario) -> Result<HandoverDecision> {
    scenario.validate()?;
    let window = SwitchWindow::new(scenario.path.t1, scenario.path.t2, scenario.tau)?;
    let (r1, r2) = scenario_rates(scenario);
    let opt = optimize_switch(r1, r2, &window)?;
    let path = &scenario.path;
    Ok(HandoverDecision {
        t_star: opt.t_star,
        d1_at_t_star: scenario.distance(Ap::First, opt.t_star)?,
        d2_at_t_star: scenario.distance(Ap::Second, opt.t_star)?,
        coded_tx_start_distance: path.distance_traveled(opt.t_star)
            - path.distance_traveled(scenario.tau),
        objective_value: opt.objective,
        near_optimal: opt.near_optimal,
        curve: opt.curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::Scheme;
    use crate::timing::Variant;

    fn shannon(ap1: Point, ap2: Point, path: MobilityPath, tau: f64) -> HandoverScenario {
        HandoverScenario {
            ap1,
            ap2,
            path,
            tau,
            channel: ChannelModel::free_space(Scheme::BpskRayleigh, 8000, 100_000.0).unwrap(),
            rate_mode: RateMode::Shannon,
            n_c: 4,
            p_ack: 0.0,
            profile: TimingProfile::preset(Variant::GLegacy),
        }
    }

    fn east(t2: f64) -> MobilityPath {
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

    #[test]
    fn distances() {
        let path = MobilityPath::new(
            PathKind::Waypoints(vec![
                Point::new(0.0, 0.0),
                Point::new(3.0, 0.0),
                Point::new(3.0, 4.0),
            ]),
            1.0,
            0.0,
            10.0,
        )
        .unwrap();
        assert_eq!(
            distance_to_ap(Point::new(3.0, 4.0), &path, 7.0).unwrap(),
            0.0
        );
        assert_eq!(
            distance_to_ap(Point::new(0.0, 0.0), &path, 7.0).unwrap(),
            5.0
        );
        assert!(distance_to_ap(Point::new(0.0, 0.0), &path, 10.5).is_err());

        let diag = MobilityPath::diagonal(2.0, 0.0, 30.0).unwrap();
        let p = diag.position(5.0).unwrap();
        let expect = 10.0 / 2f64.sqrt();
        assert!((p.x - expect).abs() < 1e-12 && (p.y - expect).abs() < 1e-12);
        let d = distance_to_ap(Point::new(25.0, 0.0), &diag, 5.0).unwrap();
        assert!((d - ((25.0 - expect).powi(2) + expect * expect).sqrt()).abs() < 1e-12);
        assert!((distance_to_ap(Point::new(0.0, 0.0), &diag, 5.0).unwrap() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn shannon_rates() {
        let s = shannon(Point::new(0.0, 0.0), Point::new(20.0, 0.0), east(20.0), 0.0);
        assert!((rate_at_distance(&s, 10.0).unwrap() - 1001f64.ln()).abs() < 1e-12);
        assert!((rate_at_distance(&s, 10.0).unwrap() - 6.9088).abs() < 1e-4);
        let near = rate_at(&s, Ap::First, 0.0).unwrap();
        assert!((near - (1.0 + 100_000.0 / (D_MIN * D_MIN)).ln()).abs() < 1e-12);
        let r1 = rate_at(&s, Ap::First, 10.0).unwrap();
        let r2 = rate_at(&s, Ap::Second, 10.0).unwrap();
        assert_eq!(r1, r2);
    }

    #[test]
    fn nc_rates_fall_with_distance() {
        let mut s = shannon(Point::new(0.0, 0.0), Point::new(20.0, 0.0), east(20.0), 0.0);
        s.rate_mode = RateMode::NcThroughput;
        s.channel = ChannelModel::free_space(Scheme::ConvBpskRayleigh, 8000, 100_000.0).unwrap();
        let near = rate_at_distance(&s, 1.0).unwrap();
        let far = rate_at_distance(&s, 15.0).unwrap();
        assert!(near > far && far >= 0.0);
        assert_eq!(rate_at_distance(&s, 1e6).unwrap(), 0.0);
    }

    #[test]
    fn constant_rates_make_objective_flat() {
        let w = SwitchWindow::new(1.0, 9.0, 0.0).unwrap();
        for t in [1.0, 3.3, 9.0] {
            let v = switch_objective(|_| 2.5, |_| 2.5, &w, t).unwrap();
            assert!((v - 20.0).abs() < 1e-12);
        }
        let w = SwitchWindow::new(0.0, 10.0, 2.0).unwrap();
        let v = switch_objective(|_| 1.0, |_| 3.0, &w, 8.0).unwrap();
        assert!((v - 8.0).abs() < 1e-12);
        assert!(switch_objective(|_| 1.0, |_| 1.0, &w, 8.5).is_err());
        assert!(SwitchWindow::new(0.0, 10.0, 10.0).is_err());
    }

    #[test]
    fn silent_second_ap_keeps_station_on_first() {
        let w = SwitchWindow::new(0.0, 12.0, 0.0).unwrap();
        let opt = optimize_switch(|t| 1.0 / (1.0 + t), |_| 0.0, &w).unwrap();
        assert_eq!(opt.t_star, 12.0);
    }

    #[test]
    fn symmetric_scenario_switches_at_midpoint() {
        let s = shannon(Point::new(0.0, 5.0), Point::new(20.0, 5.0), east(20.0), 0.0);
        let decision = optimize_switch_time(&s).unwrap();
        let step = 20.0 / GRID_STEPS as f64;
        assert!(
            (decision.t_star - 10.0).abs() <= 2.0 * step,
            "{}",
            decision.t_star
        );
        assert!((decision.d1_at_t_star - decision.d2_at_t_star).abs() < 0.1);
        for &(_, v) in &decision.curve {
            assert!(decision.objective_value >= v);
        }
        assert!(decision.near_optimal.contains(&decision.curve[500].0));
    }

    #[test]
    fn scenario_validation() {
        let s = shannon(Point::new(0.0, 0.0), Point::new(0.0, 0.0), east(20.0), 0.0);
        assert!(optimize_switch_time(&s).is_err());
        let s = shannon(Point::new(0.0, 0.0), Point::new(5.0, 0.0), east(20.0), 25.0);
        assert!(matches!(
            optimize_switch_time(&s),
            Err(Error::Infeasible(_))
        ));
        let s = shannon(Point::new(0.0, 0.0), Point::new(5.0, 0.0), east(20.0), 5.0);
        assert!(sum_rate_objective(&s, 16.0).is_err());
        assert!(sum_rate_objective(&s, 15.0).is_ok());
    }
}
