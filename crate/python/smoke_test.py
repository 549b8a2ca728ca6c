"""Smoke test for the pyrisradar extension.

Build and run from the repository root:

    cargo build --release -p risradar-py --features extension-module
    cp target/release/libpyrisradar.so python/pyrisradar.so
    python3 python/smoke_test.py
"""

import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import pyrisradar  # noqa: E402


def main():
    c = pyrisradar.constants()
    assert abs(c["delta_f_hz"] - 10e6) < 1e-3, c
    assert abs(c["unambiguous_range_m"] - 14.9896229) < 1e-6, c
    assert len(c["alias_warnings"]) == 2, c["alias_warnings"]

    grid, ris = pyrisradar.simulate(seed=3)
    assert (len(grid), len(grid[0])) == (20, 100)
    assert (len(ris), len(ris[0])) == (50, 100)
    assert all(abs(abs(v) - 1.0) < 1e-12 for row in ris for v in row)
    again, _ = pyrisradar.simulate(seed=3)
    assert grid == again

    tt, ti = pyrisradar.estimate_angles(seed=3)
    assert abs(tt - 20.0) < 0.05 and abs(ti - 50.0) < 0.05, (tt, ti)

    # An in-range target with the interferer switched off lands on its cell.
    cfg = pyrisradar.reference_config()
    cfg = cfg.replace("range_m = 30.0", "range_m = 6.0", 1)
    cfg = cfg.replace("gain = [3.1622776601683795, 0.0]", "gain = [0.0, 0.0]", 1)
    loc = pyrisradar.localize(config=cfg, seed=1)
    err = abs(loc["range_hat_m"] - loc["apparent_range_m"])
    # Velocity is not checked: a random surface re-phases every slot, which
    # spreads the target over Doppler.
    assert err < c["range_resolution_m"], loc

    t = pyrisradar.train(0.8)
    notch = t["interference_gain_db"] - t["convolved_interference_gain_db"]
    assert t["sinr_db"] > t["initial_sinr_db"], t
    assert notch >= 20.0, t
    assert all(math.isfinite(v) for v in t["theta_hat"])

    try:
        pyrisradar.constants(config="[scene]\n")
    except ValueError as e:
        assert "missing field" in str(e), e
    else:
        raise AssertionError("bad config accepted")

    print(f"constants: delta_f = {c['delta_f_hz']:.3e} Hz, R_max = {c['unambiguous_range_m']:.3f} m")
    print(f"angles: {tt:.4f}, {ti:.4f} deg")
    print(f"localize: {loc['range_hat_m']:.3f} m vs {loc['apparent_range_m']:.3f} m")
    print(f"train beta 0.8: SINR {t['initial_sinr_db']:.2f} -> {t['sinr_db']:.2f} dB, notch {notch:.1f} dB")
    print("smoke test passed")


if __name__ == "__main__":
    main()
