//! Drive the bindings through an embedded interpreter.

use pyo3::ffi::c_str;
use pyo3::prelude::*;

fn run(code: &std::ffi::CStr) {
    Python::attach(|py| {
        if let Err(e) = py.run(code, None, None) {
            e.print(py);
            panic!("python snippet failed");
        }
    });
}

fn setup() {
    static ONCE: std::sync::Once = std::sync::Once::new();
    ONCE.call_once(|| pyo3::append_to_inittab!(pymodeflux));
}

use pymodeflux::pymodeflux;

#[test]
fn bindings_cover_layout_coupling_and_transport() {
    setup();
    run(c_str!(
        r#"
import math, pymodeflux
assert abs(2 * pymodeflux.beta(2 * math.pi, 40, 20.25) - 1.97) <= 0.005
text = '''
[geometry]
z_m = 450.0
[geometry.profile]
kind = "piecewise-linear"
z = [-400.0, 0.0]
d = [1.9, 2.6]
[physics]
k = 6.283185307179586
sigma = 0.3
epsilon = 0.01
correlation_length = 1.0
[source]
rho_fraction = 0.2
[numerics]
delta = 5.0
output_points = 20
'''
cfg = pymodeflux.Config.from_text(text)
lay = cfg.layout()
assert (lay["n0"], lay["n_min"]) == (5, 3), lay
c = cfg.coupling(-10.0)
assert c.n_prop == 5 and len(c.gc) == 5
assert all(abs(sum(r)) < 1e-12 for r in c.gc)
assert len(c.amplitude_decay_rates()) == 5
res = cfg.transport()
assert abs(res["balance"]["relative_residual"]) < 1e-8
assert res["universal_limit"]["n_min"] == 3
assert pymodeflux.Config.from_text(cfg.to_text()).to_text() == cfg.to_text()
"#
    ));
}

#[test]
fn core_errors_become_python_exceptions_with_a_code() {
    setup();
    run(c_str!(
        r#"
import pymodeflux
try:
    pymodeflux.beta(6.283185307179586, 41, 20.25)
except pymodeflux.ModefluxError as e:
    assert e.code == "NotPropagating", e.code
else:
    raise AssertionError("evanescent mode accepted")
try:
    pymodeflux.Config.from_text("[physics]\nbogus = 1\n")
except pymodeflux.ModefluxError as e:
    assert e.code == "ParseError", e.code
else:
    raise AssertionError("unknown key accepted")
"#
    ));
}
