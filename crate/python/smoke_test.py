"""Smoke test of the pymodeflux bindings.

Build and install the extension first:

    pip install --no-build-isolation -e crates/modeflux-py

then run ``python python/smoke_test.py`` from the repository root.
"""

import math
import pathlib
import sys

import pymodeflux

PRESETS = pathlib.Path(__file__).resolve().parent.parent / "crates" / "modeflux" / "presets"


def main() -> int:
    two_beta = 2.0 * pymodeflux.beta(2.0 * math.pi, 40, 20.25)
    assert abs(two_beta - 1.97) <= 0.005, two_beta
    assert pymodeflux.mode_count(2.0 * math.pi, 20.25) == 40

    cfg = pymodeflux.Config.from_file(str(PRESETS / "narrowing-point-source.cfg"))
    layout = cfg.layout()
    assert layout["n0"] == 40 and layout["n_min"] == 39, layout
    assert abs(layout["left_turning_points"][0] + 1000.0) <= 1e-6

    coupling = cfg.coupling(-500.0)
    gc = coupling.gc
    n = coupling.n_prop
    assert max(abs(sum(row)) for row in gc) < 1e-12 * max(max(map(abs, row)) for row in gc)
    assert all(gc[j][l] == gc[l][j] for j in range(n) for l in range(n))
    scales = coupling.length_scales()
    assert scales["equipartition"] > 1000.0

    rows = pymodeflux.identity_suite(6, [1.0])
    assert max(r["residual"] for r in rows) < 1e-9

    # Scattering five-mode guide: fast transport with a conserved balance.
    text = (PRESETS / "toy-montecarlo.cfg").read_text()
    toy = pymodeflux.Config.from_text(text.replace("sigma = 0.022135943621178652", "sigma = 0.1"))
    result = toy.transport()
    assert abs(result["balance"]["relative_residual"]) < 1e-8, result["balance"]
    assert [s["n_modes"] for s in result["sectors"] if s["side"] == "left"][0] == 5

    mc = pymodeflux.Config.from_file(str(PRESETS / "toy-montecarlo.cfg")).montecarlo(trajectories=200, seed=3)
    assert mc["n_trajectories"] == 200 and len(mc["z"]) == 10

    try:
        pymodeflux.Config.from_text("[physics]\nk = -1.0\n")
    except pymodeflux.ModefluxError as e:
        assert e.code in ("ValidationError", "ParseError"), e.code
    else:
        raise AssertionError("invalid configuration accepted")

    print(f"pymodeflux {pymodeflux.__version__}: smoke test passed "
          f"(2*beta_40 = {two_beta:.4f}, balance residual {result['balance']['relative_residual']:.1e}, "
          f"Monte Carlo max |z| {mc['report']['max_abs_power_z']:.2f})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
