"""Smoke test for the qtraj extension module.

Build and install first:

    pip install --no-build-isolation ./crates/py
    python3 python/smoke_test.py
"""

import math
import sys

import qtraj


def check(name, ok, detail=""):
    print(f"{'ok  ' if ok else 'FAIL'} {name} {detail}")
    return ok


def main():
    results = []
    free = qtraj.Potential.free()
    grid = qtraj.Grid(-10.0, 10.0, 2001)
    c = qtraj.Constants(1.0, 1.0)

    s = qtraj.build_slice(free, 0.5, grid, qtraj.Microstate(), c)
    results.append(check("slice length", len(s.q) == len(grid)))
    r = s.qshje_residual()
    results.append(check("qshje residual", r["max"] <= 1e-9, f"{r['max']:.3e}"))
    w = s.script_w_residual(free)
    results.append(check("scriptW residual", w["max"] <= 1e-5, f"{w['max']:.3e}"))

    traj = qtraj.trajectory(free, 0.5, grid, constants=c)
    err = max(abs(q - t) for q, t in zip(traj.q, traj.t))
    results.append(check("free time equals position", err <= 1e-6, f"{err:.3e}"))
    results.append(check("energy identity", traj.identity_relative <= 1e-4, f"{traj.identity_relative:.3e}"))

    lin = qtraj.Potential.linear(1.0)
    lg = qtraj.legendre_check(lin, [1.0 + 0.005 * k for k in range(5)], -3.0, qtraj.Grid(-8.0, 4.0, 2401))
    results.append(check("legendre roundtrip", lg["roundtrip"]["max"] <= 1e-5, f"{lg['roundtrip']['max']:.3e}"))

    eh = qtraj.ehrenfest_check(free, -5.0, 1.0, 1.0, t_span=0.5, dt=1e-3)
    results.append(check("ehrenfest commutator", eh["commutator"]["max"] <= 1e-6, f"{eh['commutator']['max']:.3e}"))
    results.append(check("uncertainty margin", eh["min_margin"] >= 0.0))

    sv, kind = qtraj.solve_spin([0.0, 0.0, 1.0], [1.0, 0.0, 0.0])
    results.append(check("spin solution", sv is not None and kind == "isolated_pair", kind))
    res = qtraj.spin_constraints([0.0, 0.0, 1.0], [1.0, 0.0, 0.0], sv)
    results.append(check("spin constraints", max(abs(x) for x in res) <= 1e-10))

    v = qtraj.velocity_verdict("plane_wave", 0.5, (-0.5, 0.5, 9), (-0.5, 0.5, 9), (-0.5, 0.5, 9))
    results.append(check("plane wave verdict", math.isclose(v["mismatch_min"], 2.0, abs_tol=1e-6), f"{v['mismatch_min']}"))

    try:
        qtraj.Microstate(1.0, 2.0, 2.0, 4.0)
        results.append(check("degenerate microstate rejected", False))
    except ValueError as e:
        results.append(check("degenerate microstate rejected", "determinant" in str(e)))

    if not all(results):
        sys.exit(1)
    print("all smoke checks passed")


if __name__ == "__main__":
    main()
