use pyo3::prelude::*;
use pyo3::types::PyDict;

fn with_module<F: FnOnce(Python<'_>, &Bound<'_, PyDict>)>(f: F) {
    use nchandover_py::nchandover_py;
    pyo3::append_to_inittab!(nchandover_py);
    Python::initialize();
    Python::attach(|py| {
        let globals = PyDict::new(py);
        py.run(c"import nchandover_py as nh", Some(&globals), None)
            .unwrap();
        f(py, &globals);
    });
}

#[test]
fn module_round_trip() {
    with_module(|py, g| {
        let eval = |src: &std::ffi::CStr| py.eval(src, Some(g), None).unwrap();
        let t: f64 = eval(c"nh.expected_time('broadcast', nh.TimingProfile.preset('g_legacy'), nh.LinkReliability(0.0), 1)")
            .extract()
            .unwrap();
        assert!((t - 1.64e-3).abs() < 1e-15);
        let chain: f64 = eval(c"nh.chain_time('unicast', nh.TimingProfile.preset('b'), nh.LinkReliability(0.2, 0.1), 4)")
            .extract()
            .unwrap();
        let closed: f64 = eval(c"nh.expected_time('unicast', nh.TimingProfile.preset('b'), nh.LinkReliability(0.2, 0.1), 4)")
            .extract()
            .unwrap();
        assert!((chain - closed).abs() <= 1e-12 * closed);
        let state: String =
            eval(c"(lambda p: (p.handle('signal_parity'), p.state)[1])(nh.HandoverProtocol())")
                .extract()
                .unwrap();
        assert_eq!(state, "probing");
        let err = py
            .eval(c"nh.LinkReliability(1.5)", Some(g), None)
            .unwrap_err();
        assert!(err.is_instance_of::<pyo3::exceptions::PyValueError>(py));
    });
}
