"""Smoke test for the pykdv extension.

Build and install first:
    pip install maturin && maturin build --release -m crates/pykdv/Cargo.toml -o dist
    pip install dist/pykdv-*.whl
"""

import math
import sys
import tempfile
from pathlib import Path

import pykdv


def l2(v, h):
    return math.sqrt(h * sum(x * x for x in v))


def main():
    mesh = pykdv.Mesh(1.0, 1.0, 64, 128)
    u0 = [math.sin(math.pi * x) for x in mesh.nodes()]

    free = pykdv.simulate(mesh, u0)
    norms = [l2(v, mesh.h) for v in free.values]
    assert len(free.times) == mesh.m + 1
    assert all(b <= a * (1 + 1e-8) for a, b in zip(norms, norms[1:])), "norm grew"

    ctrl = pykdv.null_control(mesh, u0, omega=(0.3, 0.6))
    assert ctrl.converged
    assert ctrl.terminal_residual <= 1e-3 * l2(u0, mesh.h), ctrl.terminal_residual
    nodes = mesh.nodes()
    outside = max(abs(row[i]) for row in ctrl.forcing for i, x in enumerate(nodes) if x < 0.29 or x > 0.61)
    assert outside == 0.0
    assert abs(l2(ctrl.trajectory().terminal(), mesh.h) - ctrl.terminal_residual) < 1e-12

    small = [1e-2 * v for v in u0]
    nl, outer = pykdv.null_control_nonlinear(mesh, [0.0] * mesh.n, small)
    assert outer <= 20 and nl.relative_residual <= 1e-3

    crit = pykdv.critical_lengths(2)
    assert abs(crit[0] - 2 * math.pi) < 1e-12
    assert abs(pykdv.nearest_noncritical(2 * math.pi, 4, 0.1) - (2 * math.pi - 0.1)) < 1e-12
    assert pykdv.psi_violations(1.0, 0.3, 0.6) == 0

    try:
        pykdv.Mesh(1.0, 1.0, 2, 8)
    except ValueError:
        pass
    else:
        raise AssertionError("tiny mesh accepted")

    cfg = Path(__file__).resolve().parent.parent / "scenarios" / "hardy.cfg"
    with tempfile.TemporaryDirectory() as out:
        converged, summary = pykdv.run_scenario(str(cfg), out, seed=3)
        assert converged and (Path(out) / "hardy.csv").exists()
        assert summary["mode"] == "hardy-suite"

    for cid, name, passed, detail in pykdv.selftest(seed=1, ids=[1, 4, 11]):
        print(f"criterion {cid:>2} {'PASS' if passed else 'FAIL'} {name}")
        assert passed, detail

    print("pykdv smoke test ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
