//! Bit-error and packet-erasure models: BPSK over AWGN and flat Rayleigh
//! fading, the union bound for convolutionally coded BPSK, and free-space
//! path loss from distance to SNR.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::delay::LinkReliability;
use crate::error::{Error, Result};

/// Gaussian tail probability `P[Z > x]`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

pub fn ber_bpsk_awgn(snr: f64) -> f64 {
    q_function((2.0 * snr).sqrt())
}

/// Coherent BPSK averaged over unit-power Rayleigh fading.
pub fn ber_bpsk_rayleigh(snr: f64) -> f64 {
    pairwise_error_rayleigh(1, snr)
}

/// Pairwise error probability between codewords at Hamming distance `delta`
/// under Rayleigh fading.
pub fn pairwise_error_rayleigh(delta: u32, snr: f64) -> f64 {
    let x = f64::from(delta) * snr;
    if x.is_infinite() {
        return 0.0;
    }
    // 1 - sqrt(x/(1+x)) rewritten to avoid cancellation at high SNR
    let r = (x / (1.0 + x)).sqrt();
    0.5 * (1.0 / (1.0 + x)) / (1.0 + r)
}

/// Monte-Carlo average of `Q(sqrt(2 |h|^2 snr))` over `|h|^2 ~ Exp(1)`.
/// Returns the mean and its standard error.
pub fn ber_bpsk_rayleigh_mc(snr: f64, samples: u64, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        let u: f64 = rng.random();
        let gain = -(1.0 - u).ln();
        let q = ber_bpsk_awgn(gain * snr);
        sum += q;
        sum_sq += q * q;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Error-event spectrum of a convolutional code, indexed from `d_free`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceSpectrum {
    pub d_free: u32,
    pub constraint_length: u32,
    /// Input bits per trellis step.
    pub k_c: u32,
    /// Output bits per trellis step.
    pub n_c: u32,
    /// Number of error events at each distance.
    pub a: Vec<u64>,
    /// Information-bit error weight at each distance.
    pub c: Vec<u64>,
}

impl DistanceSpectrum {
    pub fn new(
        d_free: u32,
        constraint_length: u32,
        k_c: u32,
        n_c: u32,
        a: Vec<u64>,
        c: Vec<u64>,
    ) -> Result<Self> {
        if d_free == 0 || k_c == 0 || n_c == 0 || k_c > n_c {
            return Err(Error::InvalidParameter(format!(
                "bad code parameters d_free={d_free}, k={k_c}, n={n_c}"
            )));
        }
        if a.len() != c.len() || a.is_empty() {
            return Err(Error::InvalidParameter(
                "spectrum sequences must be non-empty and of equal length".into(),
            ));
        }
        Ok(DistanceSpectrum {
            d_free,
            constraint_length,
            k_c,
            n_c,
            a,
            c,
        })
    }

    /// Rate-1/2, K = 7 code with generators 133/171 (octal).
    pub fn ieee80211() -> Self {
        DistanceSpectrum {
            d_free: 10,
            constraint_length: 7,
            k_c: 1,
            n_c: 2,
            a: vec![11, 0, 38, 0, 193, 0, 1331, 0],
            c: vec![36, 0, 211, 0, 1404, 0, 11633, 0],
        }
    }

    pub fn code_rate(&self) -> f64 {
        f64::from(self.k_c) / f64::from(self.n_c)
    }

    /// `(delta, c(delta))` pairs kept by the `d_free + K` truncation.
    pub fn truncated_terms(&self) -> impl Iterator<Item = (u32, u64)> + '_ {
        let last = self.d_free + self.constraint_length;
        self.c
            .iter()
            .enumerate()
            .map(move |(k, &c)| (self.d_free + k as u32, c))
            .take_while(move |&(delta, _)| delta <= last)
    }

    /// Parse a plain-text table.
    ///
    /// ```text
    /// # comment
    /// constraint_length = 7
    /// k = 1
    /// n = 2
    /// # delta  a  c
    /// 10 11 36
    /// 11 0 0
    /// ```
    ///
    /// Distances must be consecutive; the first row sets `d_free`.
    pub fn parse_table(text: &str) -> Result<Self> {
        let mut constraint_length = None;
        let mut k_c = 1;
        let mut n_c = 2;
        let mut rows: Vec<(u32, u64, u64)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: &str| Error::Parse(format!("line {}: {msg}", lineno + 1));
            if let Some((key, value)) = line.split_once('=') {
                let value: u32 = value
                    .trim()
                    .parse()
                    .map_err(|_| err("expected an integer"))?;
                match key.trim() {
                    "constraint_length" | "K" => constraint_length = Some(value),
                    "k" => k_c = value,
                    "n" => n_c = value,
                    other => return Err(err(&format!("unknown key `{other}`"))),
                }
                continue;
            }
            let fields: Vec<&str> = line
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|s| !s.is_empty())
                .collect();
            if fields.len() != 3 {
                return Err(err("expected `delta a c`"));
            }
            let delta: u32 = fields[0].parse().map_err(|_| err("bad delta"))?;
            let a: u64 = fields[1].parse().map_err(|_| err("bad a(delta)"))?;
            let c: u64 = fields[2].parse().map_err(|_| err("bad c(delta)"))?;
            if let Some(&(prev, _, _)) = rows.last() {
                if delta != prev + 1 {
                    return Err(err("distances must be consecutive"));
                }
            }
            rows.push((delta, a, c));
        }
        let d_free = rows
            .first()
            .map(|r| r.0)
            .ok_or_else(|| Error::Parse("spectrum table has no rows".into()))?;
        let constraint_length = constraint_length
            .ok_or_else(|| Error::Parse("spectrum table lacks constraint_length".into()))?;
        Self::new(
            d_free,
            constraint_length,
            k_c,
            n_c,
            rows.iter().map(|r| r.1).collect(),
            rows.iter().map(|r| r.2).collect(),
        )
    }
}

/// Union bound on coded BPSK bit error rate under Rayleigh fading,
/// truncated at `d_free + K` and clamped to `[0, 1/2]`.
pub fn ber_conv_rayleigh(snr: f64, spectrum: &DistanceSpectrum) -> f64 {
    let k = f64::from(spectrum.k_c);
    let bound: f64 = spectrum
        .truncated_terms()
        .map(|(delta, c)| c as f64 / k * pairwise_error_rayleigh(delta, snr))
        .sum();
    bound.clamp(0.0, 0.5)
}

/// Packet erasure probability for `bits` independent bit errors.
pub fn per_from_ber(p_b: f64, bits: u32) -> f64 {
    -(f64::from(bits) * (-p_b).ln_1p()).exp_m1()
}

pub fn to_db(ratio: f64) -> f64 {
    10.0 * ratio.log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    BpskAwgn,
    BpskRayleigh,
    ConvBpskRayleigh,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::BpskAwgn => "bpsk_awgn",
            Scheme::BpskRayleigh => "bpsk_rayleigh",
            Scheme::ConvBpskRayleigh => "conv_bpsk_rayleigh",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "bpsk_awgn" => Ok(Scheme::BpskAwgn),
            "bpsk_rayleigh" => Ok(Scheme::BpskRayleigh),
            "conv_bpsk_rayleigh" => Ok(Scheme::ConvBpskRayleigh),
            other => Err(Error::InvalidParameter(format!("unknown scheme `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub scheme: Scheme,
    /// Packet length `B` in bits.
    pub packet_bits: u32,
    /// SNR at one metre.
    pub pathloss_c: f64,
    pub pathloss_exp: f64,
    pub spectrum: Option<DistanceSpectrum>,
}

impl ChannelModel {
    pub fn new(
        scheme: Scheme,
        packet_bits: u32,
        pathloss_c: f64,
        pathloss_exp: f64,
        spectrum: Option<DistanceSpectrum>,
    ) -> Result<Self> {
        if packet_bits == 0 {
            return Err(Error::InvalidParameter(
                "packet_bits must be at least 1".into(),
            ));
        }
        if !(pathloss_c > 0.0 && pathloss_c.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "path-loss constant {pathloss_c} must be positive"
            )));
        }
        if !(pathloss_exp > 0.0 && pathloss_exp.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "path-loss exponent {pathloss_exp} must be positive"
            )));
        }
        if (scheme == Scheme::ConvBpskRayleigh) != spectrum.is_some() {
            return Err(Error::InvalidParameter(
                "a distance spectrum is required exactly for the coded scheme".into(),
            ));
        }
        Ok(ChannelModel {
            scheme,
            packet_bits,
            pathloss_c,
            pathloss_exp,
            spectrum,
        })
    }

    /// Uncoded or coded model with free-space exponent 2.
    pub fn free_space(scheme: Scheme, packet_bits: u32, pathloss_c: f64) -> Result<Self> {
        let spectrum = (scheme == Scheme::ConvBpskRayleigh).then(DistanceSpectrum::ieee80211);
        Self::new(scheme, packet_bits, pathloss_c, 2.0, spectrum)
    }

    pub fn ber(&self, snr: f64) -> f64 {
        match self.scheme {
            Scheme::BpskAwgn => ber_bpsk_awgn(snr),
            Scheme::BpskRayleigh => ber_bpsk_rayleigh(snr),
            Scheme::ConvBpskRayleigh => ber_conv_rayleigh(
                snr,
                self.spectrum
                    .as_ref()
                    .expect("coded scheme carries a spectrum"),
            ),
        }
    }

    pub fn snr_from_distance(&self, d: f64) -> Result<f64> {
        if !(d > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "distance must be positive, got {d}"
            )));
        }
        Ok(self.pathloss_c * d.powf(-self.pathloss_exp))
    }

    pub fn erasure_at(&self, d: f64) -> Result<f64> {
        Ok(per_from_ber(
            self.ber(self.snr_from_distance(d)?),
            self.packet_bits,
        ))
    }

    pub fn link_from_distance(&self, d: f64, p_ack: f64) -> Result<LinkReliability> {
        LinkReliability::new(self.erasure_at(d)?, p_ack)
    }
}
