//! Expected delivery delay and throughput of 802.11 DCF unicast, broadcast
//! and network-coded broadcast, mapped onto fading channels and a two-AP
//! handover model.

// `!(x > 0.0)` style guards are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chain;
pub mod channel;
pub mod cli;
pub mod delay;
pub mod error;
pub mod handover;
pub mod nc;
pub mod numeric;
pub mod timing;

pub use chain::{AbsorbingChain, McEstimate};
pub use channel::{ChannelModel, DistanceSpectrum, Scheme};
pub use delay::{DeliveryEstimate, LinkReliability, Mode};
pub use error::{Error, Result};
pub use handover::{HandoverDecision, HandoverScenario, MobilityPath, Point, RateMode};
pub use nc::{BatchRule, CodedPlan};
pub use timing::{BackoffPolicy, TimingProfile, Variant, WindowGrowth};
