"""Compiled versus numpy kernels: per-call timings and an end-to-end simulation.

Run with ``python3 benchmarks/bench_kernels.py``. The end-to-end rows run in
subprocesses so each picks its backend at import.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from coupledsys import _kernels_py
from coupledsys.models import split_cart

try:
    from coupledsys import _kernels as _kernels_c
except ImportError:
    _kernels_c = None

E2E = """
import time, numpy as np
from coupledsys import kernels
from coupledsys.models import split_cart
from coupledsys.reduction import IsolatedModel
from coupledsys.simulate import IntegratorConfig, io_linearizing_controller, simulate_isolated
sc = split_cart(); iso = IsolatedModel(sc.ccs, 1)
ctrl = io_linearizing_controller(iso, 2.0)
t = time.perf_counter()
simulate_isolated(iso, ctrl, np.array([0.1, -0.2]), np.array([0.0, 0.3]), IntegratorConfig(h=1e-3, T={T}))
print(kernels.BACKEND, time.perf_counter() - t)
"""


def cases(rng):
    A = rng.standard_normal((4, 4)) + 4 * np.eye(4)
    B = rng.standard_normal((4, 3))
    Az = A.copy()
    Az[1] = 0.0
    alpha = rng.standard_normal((1, 6))
    x0, xd0, x1, xd1 = (rng.standard_normal(6) for _ in range(4))
    t = {k: rng.standard_normal(s) for k, s in (
        ("fj", 2), ("gj", (2, 1)), ("gbj", (2, 1)), ("pj", 2), ("qj", (2, 1)), ("qbj", (2, 1)),
        ("pi", 2), ("qi", (2, 1)), ("qbi", (2, 1)))}
    t["gj"][0] = 0.0
    t["gbj"][0] = 0.0
    sc = split_cart()
    m, out = sc.parts[0], sc.outputs[0]
    vert = (np.array([0.1, -0.2]), np.array([0.0, 0.3]), m.D, m.H, np.hstack([m.B, m.J_couple.T]),
            m.n_u, np.atleast_2d(out.alpha), np.asarray(out.actuated), out.phase_index,
            *out.phase_range)
    return {
        "solve_rcond 4x4": lambda k: k.solve_rcond(A, B),
        "solve_reduced_rcond 4x4": lambda k: k.solve_reduced_rcond(Az[[0, 2, 3]][:, :3], B[[0, 2, 3]], 1e-14),
        "bernstein deg 5": lambda k: k.bernstein(alpha, 0.3),
        "hermite_midpoint n=6": lambda k: k.hermite_midpoint(x0, xd0, x1, xd1, 0.1),
        "coupling_point": lambda k: k.coupling_point(
            t["fj"], t["gj"], t["gbj"], t["pj"], t["qj"], t["qbj"], t["pi"], t["qi"], t["qbi"], 1e-14),
        "normal_form_vertex half-cart": lambda k: k.normal_form_vertex(*vert),
    }


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--number", type=int, default=20000)
    p.add_argument("--horizon", type=float, default=1.0)
    args = p.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'kernel':28s} {'python us':>10s} {'cython us':>10s} {'speedup':>8s}")
    for name, fn in cases(rng).items():
        tp = min(timeit.repeat(lambda: fn(_kernels_py), number=args.number, repeat=3)) / args.number
        if _kernels_c is None:
            print(f"{name:28s} {tp * 1e6:10.2f} {'n/a':>10s}")
            continue
        tc = min(timeit.repeat(lambda: fn(_kernels_c), number=args.number, repeat=3)) / args.number
        print(f"{name:28s} {tp * 1e6:10.2f} {tc * 1e6:10.2f} {tp / tc:8.1f}x")
    print(f"\nend to end: isolated split cart, h = 1e-3, T = {args.horizon} s")
    for pure in ("1", "0"):
        env = {**os.environ, "COUPLEDSYS_PURE_PYTHON": pure}
        res = subprocess.run([sys.executable, "-c", E2E.replace("{T}", repr(args.horizon))],
                             env=env, capture_output=True, text=True, check=True)
        backend, secs = res.stdout.split()
        print(f"  {backend:8s} {float(secs):.3f} s")


if __name__ == "__main__":
    main()
