//! Python bindings for the `nchandover` crate.
//!
//! Expected times that diverge (no packet can ever get through) are returned
//! as `inf`; every other error becomes `ValueError`.

use std::collections::BTreeMap;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use nchandover::channel::{self, DistanceSpectrum};
use nchandover::cli::{cmd_validate, ScenarioConfig, ValidateOptions};
use nchandover::delay;
use nchandover::handover::protocol::{Action, ApId, Event, ProtocolState};
use nchandover::handover::{self as ho, PathKind};
use nchandover::nc::{self, Field};
use nchandover::{BatchRule, CodedPlan, Error, Mode, Point};

fn py_err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn time_or_inf(r: nchandover::Result<f64>) -> PyResult<f64> {
    match r {
        Ok(t) => Ok(t),
        Err(Error::Diverges(_)) => Ok(f64::INFINITY),
        Err(e) => Err(py_err(e)),
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(py_err)
}

#[pyclass(name = "TimingProfile", module = "nchandover_py", from_py_object)]
#[derive(Clone)]
struct PyTimingProfile {
    inner: nchandover::TimingProfile,
}

#[pymethods]
impl PyTimingProfile {
    /// All durations in seconds, `ack_rate` in bits per second.
    #[new]
    #[pyo3(signature = (t_slot, sifs, difs, t_p, cw_min, cw_max, ack_bytes=14, ack_rate=1e6, t_rt=0.0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        t_slot: f64,
        sifs: f64,
        difs: f64,
        t_p: f64,
        cw_min: u32,
        cw_max: u32,
        ack_bytes: u32,
        ack_rate: f64,
        t_rt: f64,
    ) -> PyResult<Self> {
        let inner = nchandover::TimingProfile::new(
            t_slot, sifs, difs, ack_bytes, ack_rate, t_p, cw_min, cw_max, t_rt,
        )
        .map_err(py_err)?;
        Ok(PyTimingProfile { inner })
    }

    /// Preset by name: `b`, `a`, `g` or `g_legacy`.
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        Ok(PyTimingProfile {
            inner: nchandover::timing::load_profile(name).map_err(py_err)?,
        })
    }

    fn with_t_p(&self, t_p: f64) -> PyResult<Self> {
        let inner = self.inner.with_t_p(t_p);
        inner.validate().map_err(py_err)?;
        Ok(PyTimingProfile { inner })
    }

    #[getter]
    fn t_slot(&self) -> f64 {
        self.inner.t_slot
    }
    #[getter]
    fn sifs(&self) -> f64 {
        self.inner.sifs
    }
    #[getter]
    fn difs(&self) -> f64 {
        self.inner.difs
    }
    #[getter]
    fn t_p(&self) -> f64 {
        self.inner.t_p
    }
    #[getter]
    fn cw_min(&self) -> u32 {
        self.inner.cw_min
    }
    #[getter]
    fn cw_max(&self) -> u32 {
        self.inner.cw_max
    }

    fn ack_duration(&self) -> f64 {
        self.inner.ack_duration()
    }

    fn mean_frame_cycle(&self) -> f64 {
        self.inner.mean_frame_cycle()
    }

    fn cw1_time(&self) -> f64 {
        self.inner.cw1_time()
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

#[pyclass(name = "BackoffPolicy", module = "nchandover_py", from_py_object)]
#[derive(Clone)]
struct PyBackoffPolicy {
    inner: nchandover::BackoffPolicy,
}

#[pymethods]
impl PyBackoffPolicy {
    #[new]
    #[pyo3(signature = (max_stage=6, growth="linear"))]
    fn new(max_stage: u32, growth: &str) -> PyResult<Self> {
        let inner = nchandover::BackoffPolicy::new(max_stage, parse(growth)?).map_err(py_err)?;
        Ok(PyBackoffPolicy { inner })
    }

    /// Contention window upper edge at 1-based `stage`.
    fn window_of(&self, stage: u32, profile: &PyTimingProfile) -> u32 {
        self.inner.window_of(stage, &profile.inner)
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

#[pyclass(name = "LinkReliability", module = "nchandover_py", from_py_object)]
#[derive(Clone)]
struct PyLink {
    inner: nchandover::LinkReliability,
}

#[pymethods]
impl PyLink {
    #[new]
    #[pyo3(signature = (p_e, p_ack=0.0))]
    fn new(p_e: f64, p_ack: f64) -> PyResult<Self> {
        Ok(PyLink {
            inner: nchandover::LinkReliability::new(p_e, p_ack).map_err(py_err)?,
        })
    }

    #[getter]
    fn p_e(&self) -> f64 {
        self.inner.p_e
    }
    #[getter]
    fn p_ack(&self) -> f64 {
        self.inner.p_ack
    }

    fn p_s(&self) -> f64 {
        self.inner.p_s()
    }

    fn __repr__(&self) -> String {
        format!(
            "LinkReliability(p_e={}, p_ack={})",
            self.inner.p_e, self.inner.p_ack
        )
    }
}

fn policy_or_default(policy: Option<&PyBackoffPolicy>) -> nchandover::BackoffPolicy {
    policy.map(|p| p.inner).unwrap_or_default()
}

/// Closed-form expected time to deliver `n` packets in `mode`.
#[pyfunction]
#[pyo3(signature = (mode, profile, link, n, policy=None))]
fn expected_time(
    mode: &str,
    profile: &PyTimingProfile,
    link: &PyLink,
    n: u32,
    policy: Option<&PyBackoffPolicy>,
) -> PyResult<f64> {
    let mode: Mode = parse(mode)?;
    time_or_inf(delay::expected_time(
        mode,
        &profile.inner,
        &policy_or_default(policy),
        &link.inner,
        n,
    ))
}

/// Expected time from the exact absorbing-chain solve.
#[pyfunction]
#[pyo3(signature = (mode, profile, link, n, policy=None))]
fn chain_time(
    mode: &str,
    profile: &PyTimingProfile,
    link: &PyLink,
    n: u32,
    policy: Option<&PyBackoffPolicy>,
) -> PyResult<f64> {
    let mode: Mode = parse(mode)?;
    time_or_inf(
        delay::build_mode_chain(
            mode,
            &profile.inner,
            &policy_or_default(policy),
            &link.inner,
            n,
        )
        .and_then(|c| c.expected_absorption_time()),
    )
}

/// Monte-Carlo `(mean, std_err)` of the delivery time.
#[pyfunction]
#[pyo3(signature = (mode, profile, link, n, trials, seed, policy=None))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    mode: &str,
    profile: &PyTimingProfile,
    link: &PyLink,
    n: u32,
    trials: u64,
    seed: u64,
    policy: Option<&PyBackoffPolicy>,
) -> PyResult<(f64, f64)> {
    let mode: Mode = parse(mode)?;
    let chain = delay::build_mode_chain(
        mode,
        &profile.inner,
        &policy_or_default(policy),
        &link.inner,
        n,
    )
    .map_err(py_err)?;
    let est = py
        .detach(|| chain.simulate_absorption(trials, seed))
        .map_err(py_err)?;
    Ok((est.mean, est.std_err))
}

#[pyfunction]
fn throughput(n: u32, expected_time: f64) -> PyResult<f64> {
    delay::throughput(n, expected_time).map_err(py_err)
}

/// Erasure-free times: `{"broadcast", "unicast", "unicast_frag"}`.
#[pyfunction]
fn best_case_times(profile: &PyTimingProfile, n: u32) -> PyResult<BTreeMap<&'static str, f64>> {
    let b = delay::best_case_times(&profile.inner, n).map_err(py_err)?;
    Ok(BTreeMap::from([
        ("broadcast", b.broadcast),
        ("unicast", b.unicast),
        ("unicast_frag", b.unicast_frag),
    ]))
}

/// Expected completion time of coded broadcast; `batch_sizes[i - 1]` is the
/// batch sent while `i` dof are missing.
#[pyfunction]
fn expected_time_coded(
    batch_sizes: Vec<u32>,
    profile: &PyTimingProfile,
    link: &PyLink,
) -> PyResult<f64> {
    let n_c = batch_sizes.len() as u32;
    let plan = CodedPlan::from_rule(n_c, &BatchRule::PerState(batch_sizes)).map_err(py_err)?;
    time_or_inf(nc::expected_time_coded(&plan, &profile.inner, &link.inner))
}

/// Optimal per-state batch sizes; returns `(batch_sizes, expected_time)`.
#[pyfunction]
#[pyo3(signature = (n_c, profile, link, total=None, n_max=None))]
fn optimize_batch_sizes(
    n_c: u32,
    profile: &PyTimingProfile,
    link: &PyLink,
    total: Option<u32>,
    n_max: Option<u32>,
) -> PyResult<(Vec<u32>, f64)> {
    let bound = n_max.unwrap_or_else(|| nc::default_search_bound(n_c));
    let best =
        nc::optimize_batch_sizes(n_c, &profile.inner, &link.inner, total, bound).map_err(py_err)?;
    Ok((best.plan.batch_sizes.clone(), best.expected_time))
}

/// Fraction of trials in which `n_sent` random coded packets have full rank.
#[pyfunction]
#[pyo3(signature = (n_c, n_sent, trials, seed, field="gf256"))]
fn gf_rank_oracle(
    py: Python<'_>,
    n_c: usize,
    n_sent: usize,
    trials: u64,
    seed: u64,
    field: &str,
) -> PyResult<f64> {
    let field = match field {
        "gf2" => Field::Gf2,
        "gf256" => Field::Gf256,
        other => return Err(PyValueError::new_err(format!("unknown field `{other}`"))),
    };
    Ok(py.detach(|| nc::gf_rank_oracle(n_c, n_sent, trials, seed, field)))
}

#[pyfunction]
fn q_function(x: f64) -> f64 {
    channel::q_function(x)
}

#[pyfunction]
fn ber_bpsk_awgn(snr: f64) -> f64 {
    channel::ber_bpsk_awgn(snr)
}

#[pyfunction]
fn ber_bpsk_rayleigh(snr: f64) -> f64 {
    channel::ber_bpsk_rayleigh(snr)
}

#[pyfunction]
fn pairwise_error_rayleigh(delta: u32, snr: f64) -> f64 {
    channel::pairwise_error_rayleigh(delta, snr)
}

/// Union bound for the rate-1/2, K = 7 code used by 802.11.
#[pyfunction]
fn ber_conv_rayleigh(snr: f64) -> f64 {
    channel::ber_conv_rayleigh(snr, &DistanceSpectrum::ieee80211())
}

#[pyfunction]
fn per_from_ber(p_b: f64, bits: u32) -> f64 {
    channel::per_from_ber(p_b, bits)
}

#[pyclass(name = "ChannelModel", module = "nchandover_py", from_py_object)]
#[derive(Clone)]
struct PyChannel {
    inner: nchandover::ChannelModel,
}

#[pymethods]
impl PyChannel {
    /// `scheme` is `bpsk_awgn`, `bpsk_rayleigh` or `conv_bpsk_rayleigh`.
    #[new]
    #[pyo3(signature = (scheme, packet_bits, pathloss_c, pathloss_exp=2.0))]
    fn new(scheme: &str, packet_bits: u32, pathloss_c: f64, pathloss_exp: f64) -> PyResult<Self> {
        let scheme: nchandover::Scheme = parse(scheme)?;
        let spectrum =
            (scheme == nchandover::Scheme::ConvBpskRayleigh).then(DistanceSpectrum::ieee80211);
        let inner =
            nchandover::ChannelModel::new(scheme, packet_bits, pathloss_c, pathloss_exp, spectrum)
                .map_err(py_err)?;
        Ok(PyChannel { inner })
    }

    fn snr_from_distance(&self, d: f64) -> PyResult<f64> {
        self.inner.snr_from_distance(d).map_err(py_err)
    }

    fn erasure_at(&self, d: f64) -> PyResult<f64> {
        self.inner.erasure_at(d).map_err(py_err)
    }

    #[pyo3(signature = (d, p_ack=0.0))]
    fn link_from_distance(&self, d: f64, p_ack: f64) -> PyResult<PyLink> {
        Ok(PyLink {
            inner: self.inner.link_from_distance(d, p_ack).map_err(py_err)?,
        })
    }
}

/// Optimal AP switch time for a station moving along a straight line
/// (`heading_deg` from the x axis, starting at `origin`).
///
/// Returns a dict with `t_star`, `d1`, `d2`, `objective`,
/// `coded_tx_start_distance`, `near_optimal` and `curve`.
#[pyfunction]
#[pyo3(signature = (ap1, ap2, speed, t1, t2, tau, channel, rate="nc_throughput", n_c=10, p_ack=0.0, profile=None, origin=(0.0, 0.0), heading_deg=45.0))]
#[allow(clippy::too_many_arguments)]
fn optimize_switch_time<'py>(
    py: Python<'py>,
    ap1: (f64, f64),
    ap2: (f64, f64),
    speed: f64,
    t1: f64,
    t2: f64,
    tau: f64,
    channel: &PyChannel,
    rate: &str,
    n_c: u32,
    p_ack: f64,
    profile: Option<&PyTimingProfile>,
    origin: (f64, f64),
    heading_deg: f64,
) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
    use pyo3::types::PyDict;
    let path = nchandover::MobilityPath::new(
        PathKind::Line {
            origin: Point::new(origin.0, origin.1),
            heading: heading_deg.to_radians(),
        },
        speed,
        t1,
        t2,
    )
    .map_err(py_err)?;
    let scenario = nchandover::HandoverScenario {
        ap1: Point::new(ap1.0, ap1.1),
        ap2: Point::new(ap2.0, ap2.1),
        path,
        tau,
        channel: channel.inner.clone(),
        rate_mode: parse(rate)?,
        n_c,
        p_ack,
        profile: profile.map_or_else(
            || nchandover::TimingProfile::preset(nchandover::Variant::GLegacy),
            |p| p.inner,
        ),
    };
    let d = py
        .detach(|| ho::optimize_switch_time(&scenario))
        .map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("t_star", d.t_star)?;
    out.set_item("d1", d.d1_at_t_star)?;
    out.set_item("d2", d.d2_at_t_star)?;
    out.set_item("objective", d.objective_value)?;
    out.set_item("coded_tx_start_distance", d.coded_tx_start_distance)?;
    out.set_item("near_optimal", d.near_optimal)?;
    out.set_item("curve", d.curve)?;
    Ok(out)
}

fn state_name(s: ProtocolState) -> &'static str {
    match s {
        ProtocolState::AssociatedAp1 => "associated_ap1",
        ProtocolState::Probing => "probing",
        ProtocolState::DualCoded => "dual_coded",
        ProtocolState::Reassociating => "reassociating",
        ProtocolState::AssociatedAp2 => "associated_ap2",
    }
}

fn ap_name(ap: ApId) -> &'static str {
    match ap {
        ApId::Ap1 => "ap1",
        ApId::Ap2 => "ap2",
    }
}

fn action_tuple(a: Action) -> (&'static str, Option<&'static str>, Option<u32>) {
    match a {
        Action::SendProbes => ("send_probes", None, None),
        Action::AckDof { ap, dof_needed } => ("ack_dof", Some(ap_name(ap)), Some(dof_needed)),
        Action::ActivateCodedBroadcast { ap, dof_needed } => (
            "activate_coded_broadcast",
            Some(ap_name(ap)),
            Some(dof_needed),
        ),
        Action::PreAssociate { ap } => ("pre_associate", Some(ap_name(ap)), None),
        Action::Detach { ap } => ("detach", Some(ap_name(ap)), None),
        Action::Rejected { .. } => ("rejected", None, None),
    }
}

/// `(action, ap, dof)` as returned by `HandoverProtocol.handle`.
type ActionTuple = (&'static str, Option<&'static str>, Option<u32>);

/// Station-side handover state machine.
#[pyclass(name = "HandoverProtocol", module = "nchandover_py")]
#[derive(Default)]
struct PyProtocol {
    inner: ho::protocol::HandoverProtocol,
}

#[pymethods]
impl PyProtocol {
    #[new]
    fn new() -> Self {
        Self::default()
    }

    #[getter]
    fn state(&self) -> &'static str {
        state_name(self.inner.state())
    }

    /// APs currently associated or pre-associated.
    fn associations(&self) -> Vec<&'static str> {
        self.inner
            .state()
            .associations()
            .iter()
            .map(|&a| ap_name(a))
            .collect()
    }

    /// Feed one event; returns `(action, ap, dof_needed)` tuples.
    ///
    /// Events: `signal_parity`, `probe_response`, `probe_timeout`,
    /// `dof_report` (needs `dof_needed`), `ap1_lost`, `association_complete`.
    #[pyo3(signature = (event, dof_needed=None))]
    fn handle(&mut self, event: &str, dof_needed: Option<u32>) -> PyResult<Vec<ActionTuple>> {
        let event = match (event, dof_needed) {
            ("signal_parity", None) => Event::SignalParity,
            ("probe_response", None) => Event::ProbeResponse,
            ("probe_timeout", None) => Event::ProbeTimeout,
            ("dof_report", Some(dof_needed)) => Event::DofReport { dof_needed },
            ("ap1_lost", None) => Event::Ap1Lost,
            ("association_complete", None) => Event::AssociationComplete,
            (other, _) => {
                return Err(PyValueError::new_err(format!(
                    "bad event `{other}` for these arguments"
                )))
            }
        };
        Ok(self
            .inner
            .handle(event)
            .into_iter()
            .map(action_tuple)
            .collect())
    }
}

/// Run the self-check suite; returns `(all_passed, report_text)`.
#[pyfunction]
#[pyo3(signature = (seed=1))]
fn validate(py: Python<'_>, seed: u64) -> PyResult<(bool, String)> {
    let cfg = ScenarioConfig {
        seed,
        ..ScenarioConfig::default()
    };
    let report = py
        .detach(|| cmd_validate(&cfg, &ValidateOptions::default()))
        .map_err(py_err)?;
    Ok((report.all_passed(), report.to_string()))
}

#[pymodule]
pub fn nchandover_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTimingProfile>()?;
    m.add_class::<PyBackoffPolicy>()?;
    m.add_class::<PyLink>()?;
    m.add_class::<PyChannel>()?;
    m.add_class::<PyProtocol>()?;
    m.add_function(wrap_pyfunction!(expected_time, m)?)?;
    m.add_function(wrap_pyfunction!(chain_time, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(throughput, m)?)?;
    m.add_function(wrap_pyfunction!(best_case_times, m)?)?;
    m.add_function(wrap_pyfunction!(expected_time_coded, m)?)?;
    m.add_function(wrap_pyfunction!(optimize_batch_sizes, m)?)?;
    m.add_function(wrap_pyfunction!(gf_rank_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(q_function, m)?)?;
    m.add_function(wrap_pyfunction!(ber_bpsk_awgn, m)?)?;
    m.add_function(wrap_pyfunction!(ber_bpsk_rayleigh, m)?)?;
    m.add_function(wrap_pyfunction!(pairwise_error_rayleigh, m)?)?;
    m.add_function(wrap_pyfunction!(ber_conv_rayleigh, m)?)?;
    m.add_function(wrap_pyfunction!(per_from_ber, m)?)?;
    m.add_function(wrap_pyfunction!(optimize_switch_time, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    Ok(())
}
