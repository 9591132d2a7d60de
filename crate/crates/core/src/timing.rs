//! MAC timing constants for the 802.11 variants and the backoff arithmetic
//! consumed by every delay formula.
//!
//! All durations are stored in seconds.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const US_PER_S: f64 = 1e6;

/// Default payload airtime.
pub const DEFAULT_TP: f64 = 1.44e-3;

/// Legacy control rate used to turn the ACK length into airtime.
pub const DEFAULT_ACK_RATE: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    B,
    A,
    G,
    GLegacy,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::B, Variant::A, Variant::G, Variant::GLegacy];

    pub fn name(self) -> &'static str {
        match self {
            Variant::B => "b",
            Variant::A => "a",
            Variant::G => "g",
            Variant::GLegacy => "g_legacy",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "b" | "802.11b" => Ok(Variant::B),
            "a" | "802.11a" => Ok(Variant::A),
            "g" | "802.11g" => Ok(Variant::G),
            "g_legacy" | "g+legacy" | "802.11g+legacy" => Ok(Variant::GLegacy),
            other => Err(Error::UnknownVariant(other.to_string())),
        }
    }
}

/// MAC timing parameters plus the payload and ACK airtime inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingProfile {
    pub t_slot: f64,
    pub sifs: f64,
    pub difs: f64,
    pub ack_bytes: u32,
    /// Bit rate (bits/s) at which the ACK frame is sent.
    pub ack_rate: f64,
    /// Payload airtime of one packet.
    pub t_p: f64,
    pub cw_min: u32,
    pub cw_max: u32,
    /// Round-trip component added to the ACK wait of an acknowledged batch.
    pub t_rt: f64,
}

impl TimingProfile {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        t_slot: f64,
        sifs: f64,
        difs: f64,
        ack_bytes: u32,
        ack_rate: f64,
        t_p: f64,
        cw_min: u32,
        cw_max: u32,
        t_rt: f64,
    ) -> Result<Self> {
        let profile = TimingProfile {
            t_slot,
            sifs,
            difs,
            ack_bytes,
            ack_rate,
            t_p,
            cw_min,
            cw_max,
            t_rt,
        };
        profile.validate()?;
        Ok(profile)
    }

    pub fn validate(&self) -> Result<()> {
        let durations = [
            ("t_slot", self.t_slot),
            ("sifs", self.sifs),
            ("difs", self.difs),
            ("t_p", self.t_p),
            ("t_rt", self.t_rt),
        ];
        for (name, value) in durations {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be a finite non-negative duration, got {value}"
                )));
            }
        }
        if !(self.ack_rate.is_finite() && self.ack_rate > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "ack_rate must be positive, got {}",
                self.ack_rate
            )));
        }
        if self.cw_min > self.cw_max {
            return Err(Error::InvalidParameter(format!(
                "cw_min ({}) exceeds cw_max ({})",
                self.cw_min, self.cw_max
            )));
        }
        Ok(())
    }

    /// Preset for a standard variant, with the default payload airtime.
    pub fn preset(variant: Variant) -> Self {
        let (t_slot, sifs, difs, cw_min) = match variant {
            Variant::B => (20.0, 10.0, 50.0, 31),
            Variant::A => (9.0, 16.0, 34.0, 15),
            Variant::G => (9.0, 10.0, 28.0, 15),
            Variant::GLegacy => (20.0, 10.0, 50.0, 15),
        };
        TimingProfile {
            t_slot: t_slot / US_PER_S,
            sifs: sifs / US_PER_S,
            difs: difs / US_PER_S,
            ack_bytes: 14,
            ack_rate: DEFAULT_ACK_RATE,
            t_p: DEFAULT_TP,
            cw_min,
            cw_max: 1023,
            t_rt: 0.0,
        }
    }

    pub fn with_t_p(mut self, t_p: f64) -> Self {
        self.t_p = t_p;
        self
    }

    pub fn with_ack_rate(mut self, ack_rate: f64) -> Self {
        self.ack_rate = ack_rate;
        self
    }

    pub fn with_t_rt(mut self, t_rt: f64) -> Self {
        self.t_rt = t_rt;
        self
    }

    pub fn ack_duration(&self) -> f64 {
        f64::from(self.ack_bytes) * 8.0 / self.ack_rate
    }

    /// Mean frame cycle `DIFS + T_p + SIFS + ACK`.
    pub fn mean_frame_cycle(&self) -> f64 {
        self.difs + self.t_p + self.sifs + self.ack_duration()
    }

    /// Mean duration of the first contention window.
    pub fn cw1_time(&self) -> f64 {
        expected_backoff_slots(self.cw_min) * self.t_slot
    }

    /// ACK-plus-round-trip wait after an acknowledged batch.
    pub fn t_w(&self) -> f64 {
        self.ack_duration() + self.t_rt
    }
}

/// Load a preset by name.
pub fn load_profile(name: &str) -> Result<TimingProfile> {
    Ok(TimingProfile::preset(name.parse()?))
}

/// Mean of a uniform backoff draw over `0..=window_max` slots.
pub fn expected_backoff_slots(window_max: u32) -> f64 {
    f64::from(window_max) / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowGrowth {
    /// `W_i = i * cw_min`
    Linear,
    /// `W_i = 2^(i-1) * (cw_min + 1) - 1`
    BinaryExponential,
}

impl FromStr for WindowGrowth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linear" => Ok(WindowGrowth::Linear),
            "binary_exponential" | "binary-exponential" | "exponential" => {
                Ok(WindowGrowth::BinaryExponential)
            }
            other => Err(Error::InvalidParameter(format!(
                "unknown window growth `{other}`"
            ))),
        }
    }
}

/// Retry stages and the contention window used at each one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackoffPolicy {
    /// Number of backoff stages; the last one repeats indefinitely.
    pub max_stage: u32,
    pub growth: WindowGrowth,
}

impl BackoffPolicy {
    pub fn new(max_stage: u32, growth: WindowGrowth) -> Result<Self> {
        if max_stage == 0 {
            return Err(Error::InvalidParameter(
                "max_stage must be at least 1".into(),
            ));
        }
        Ok(BackoffPolicy { max_stage, growth })
    }

    pub fn linear(max_stage: u32) -> Self {
        BackoffPolicy {
            max_stage: max_stage.max(1),
            growth: WindowGrowth::Linear,
        }
    }

    /// Upper edge of the contention window at 1-based `stage`, capped at `cw_max`.
    pub fn window_of(&self, stage: u32, profile: &TimingProfile) -> u32 {
        let stage = stage.clamp(1, self.max_stage);
        let raw: u64 = match self.growth {
            WindowGrowth::Linear => u64::from(stage) * u64::from(profile.cw_min),
            WindowGrowth::BinaryExponential => {
                let shift = (stage - 1).min(40);
                (1u64 << shift) * (u64::from(profile.cw_min) + 1) - 1
            }
        };
        raw.min(u64::from(profile.cw_max)) as u32
    }

    /// Mean backoff airtime at `stage`.
    pub fn backoff_time(&self, stage: u32, profile: &TimingProfile) -> f64 {
        expected_backoff_slots(self.window_of(stage, profile)) * profile.t_slot
    }
}

impl Default for BackoffPolicy {
    fn default() -> Self {
        BackoffPolicy::linear(6)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * b.abs().max(1e-9)
    }

    #[test]
    fn backoff_mean_matches_explicit_sum() {
        for w in [0u32, 1, 2, 15, 31, 1023, 65535] {
            let explicit: f64 = (0..=w).map(f64::from).sum::<f64>() / f64::from(w + 1);
            assert_eq!(expected_backoff_slots(w), explicit, "W={w}");
        }
        assert_eq!(expected_backoff_slots(15), 7.5);
        assert_eq!(expected_backoff_slots(1023), 511.5);
    }

    #[test]
    fn presets_follow_table() {
        let b = TimingProfile::preset(Variant::B);
        assert!(close(b.t_slot, 20e-6) && close(b.difs, 50e-6));
        assert_eq!(b.cw_min, 31);
        let a = TimingProfile::preset(Variant::A);
        assert!(close(a.t_slot, 9e-6) && close(a.sifs, 16e-6) && close(a.difs, 34e-6));
        let g = TimingProfile::preset(Variant::G);
        assert!(close(g.difs, 28e-6));
        assert_eq!(g.cw_min, 15);
        let gl = load_profile("g_legacy").unwrap();
        assert!(close(gl.t_slot, 20e-6) && close(gl.sifs, 10e-6) && close(gl.difs, 50e-6));
        assert_eq!((gl.cw_min, gl.cw_max, gl.ack_bytes), (15, 1023, 14));
        assert_eq!(gl.t_p, 1.44e-3);
        assert_eq!(gl.t_rt, 0.0);
    }

    #[test]
    fn unknown_variant_is_rejected() {
        assert!(matches!(load_profile("n"), Err(Error::UnknownVariant(_))));
    }

    #[test]
    fn frame_cycle() {
        let gl = TimingProfile::preset(Variant::GLegacy);
        assert!(close(gl.ack_duration(), 112e-6));
        assert!(close(gl.mean_frame_cycle(), 1612e-6));
        assert!(close(gl.cw1_time(), 150e-6));

        let zero = TimingProfile::new(0.0, 0.0, 0.0, 0, 1e6, 0.0, 0, 0, 0.0).unwrap();
        assert_eq!(zero.mean_frame_cycle(), 0.0);

        let mut no_ack = gl;
        no_ack.ack_bytes = 0;
        assert!(close(no_ack.mean_frame_cycle(), 50e-6 + 1.44e-3 + 10e-6));
    }

    #[test]
    fn invalid_profiles() {
        assert!(TimingProfile::new(-1.0, 0.0, 0.0, 14, 1e6, 0.0, 15, 1023, 0.0).is_err());
        assert!(TimingProfile::new(1.0, 0.0, 0.0, 14, 0.0, 0.0, 15, 1023, 0.0).is_err());
        assert!(TimingProfile::new(1.0, 0.0, 0.0, 14, 1e6, 0.0, 32, 31, 0.0).is_err());
    }

    #[test]
    fn linear_windows_cap_at_cw_max() {
        let gl = TimingProfile::preset(Variant::GLegacy);
        let policy = BackoffPolicy::linear(100);
        for i in 1..=100 {
            let expected = (i * gl.cw_min).min(gl.cw_max);
            assert_eq!(policy.window_of(i, &gl), expected);
        }
        assert_eq!(policy.window_of(3, &gl), 45);
        assert_eq!(policy.window_of(69, &gl), 1023);
    }

    #[test]
    fn exponential_windows() {
        let gl = TimingProfile::preset(Variant::GLegacy);
        let policy = BackoffPolicy::new(8, WindowGrowth::BinaryExponential).unwrap();
        let got: Vec<u32> = (1..=8).map(|i| policy.window_of(i, &gl)).collect();
        assert_eq!(got, vec![15, 31, 63, 127, 255, 511, 1023, 1023]);
    }

    #[test]
    fn presets_round_trip_through_json() {
        for v in Variant::ALL {
            let p = TimingProfile::preset(v);
            let text = serde_json::to_string(&p).unwrap();
            let back: TimingProfile = serde_json::from_str(&text).unwrap();
            assert_eq!(p, back);
        }
    }
}
