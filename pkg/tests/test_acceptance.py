"""Acceptance suite: each test checks one numbered criterion and prints one result line.

Run with ``pytest tests/test_acceptance.py -v``; the result lines are written to
the terminal even when output capture is on.
"""
import gc
import time

import numpy as np
import pytest

from coupledsys.ccs import CcsModel, SubsystemModel
from coupledsys.cli import main as cli_main
from coupledsys.optimize import (
    DecisionLayout, Grid, NlpProblem, assemble, c3_colloc, central_jacobian, clearance,
    impact_reset, lambda_ceiling, solve,
)
from coupledsys.reduction import (
    IsolatedModel, build_relation, coupling_solve, manifold_residuals, zero_invariance_residual,
)
from coupledsys.simulate import (
    IntegratorConfig, constraint_drift, io_linearizing_controller, reconstruct_full,
    simulate_full_cds, simulate_isolated, trajectory_error, zero_dynamics_controller,
)
from coupledsys.mechanical import plastic_impact
from oracles import dense_relation

X0 = np.array([0.1, -0.2])
Z0 = np.array([0.0, 0.3])
EPS = 2.0


@pytest.fixture
def report(capsys):
    def emit(tag, ok, detail):
        with capsys.disabled():
            print(f"\n[{tag}] {'PASS' if ok else 'FAIL'} {detail}")
        return ok

    return emit


def _equivalence_run(cart, h, T=2.0):
    """Isolated and full runs from the same manifold state; returns discrepancy, drifts, time."""
    ccs = cart.ccs
    iso = IsolatedModel(ccs, 1)
    cfg = IntegratorConfig(h=h, T=T)
    # time the simulations, not garbage left behind by earlier tests
    gc.collect()
    t0 = time.perf_counter()
    iso_traj = simulate_isolated(iso, io_linearizing_controller(iso, EPS), X0, Z0, cfg)
    full = simulate_full_cds(
        ccs, {1: io_linearizing_controller(IsolatedModel(ccs, 1), EPS),
              2: zero_dynamics_controller(ccs, 2)},
        {1: X0, 2: np.zeros(2)}, Z0, cfg)
    wall = time.perf_counter() - t0
    err = trajectory_error(reconstruct_full(iso_traj, 1), full)
    return err["max"], constraint_drift(iso_traj), constraint_drift(full), wall, full


@pytest.fixture(scope="module")
def equivalence(cart):
    return _equivalence_run(cart, 1e-3)


def test_criterion_1_isolated_reconstructs_full(equivalence, report):
    disc, _, _, wall, _ = equivalence
    ok = disc <= 1e-5 and wall < 5.0
    assert report("criterion 1", ok,
                  f"isolated-vs-full discrepancy {disc:.3e} (tol 1e-5), runtime {wall:.2f} s (< 5 s)")


def test_criterion_2_constraint_preservation(cart, equivalence, report):
    disc, drift_iso, drift_full, _, full = equivalence
    disc_half, *_ = _equivalence_run(cart, 5e-4)
    ratio = disc / disc_half if disc_half > 0 else np.inf
    # Both runs integrate the same field, so the discrepancy can sit at the
    # rounding floor; there the shrink ratio is noise and the fourth-order
    # convergence of the shared trajectory is checked instead.
    floor = 1e-12
    at_floor = disc <= floor and disc_half <= floor
    coarse = _equivalence_run(cart, 2e-3)[4]
    fine = _equivalence_run(cart, 5e-4)[4]
    e_h = np.max(np.abs(full.state_matrix() - fine.state_matrix()[::2]))
    e_2h = np.max(np.abs(coarse.state_matrix() - fine.state_matrix()[::4]))
    order_ratio = e_2h / e_h
    shrink_ok = ratio >= 8.0 or (at_floor and order_ratio >= 8.0)
    ok = drift_iso <= 1e-6 and drift_full <= 1e-6 and shrink_ok
    assert report("criterion 2", ok,
                  f"drift isolated {drift_iso:.2e}, full {drift_full:.2e} (tol 1e-6); "
                  f"discrepancy h {disc:.2e} -> h/2 {disc_half:.2e} (ratio {ratio:.2f}"
                  f"{', rounding floor' if at_floor else ''}); "
                  f"trajectory error ratio on halving {order_ratio:.1f} (>= 8)")


def _relation_errors(ccs, n_x, n_z, n_u, rng, n=100):
    inv = cdot = dense = 0.0
    rel = build_relation(ccs, 1)
    iso = IsolatedModel(ccs, 1)
    for _ in range(n):
        x = 0.2 * rng.standard_normal(n_x)
        z = 0.2 * rng.standard_normal(n_z)
        zz = {1: z, 2: z.copy()}
        u = rng.standard_normal(n_u)
        inv = max(inv, np.max(np.abs(zero_invariance_residual(rel, x, zz, u))))
        cdot = max(cdot, np.max(np.abs(manifold_residuals(iso, x, z, z.copy(), u)[1])))
        uZ, lam = coupling_solve(ccs, 1, x, zz, u)
        uZ_d, lam_d = dense_relation(ccs, 1, x, zz, u)
        scale = max(1.0, np.abs(uZ_d).max(), np.abs(lam_d).max())
        dense = max(dense, np.max(np.abs(np.concatenate([uZ - uZ_d, lam - lam_d]))) / scale)
    return inv, cdot, dense


def test_criterion_3_relation_soundness(cart, affine, report):
    rng = np.random.default_rng(7)
    m_aff, _ = affine
    a = _relation_errors(m_aff, 2, 3, 2, rng)
    c = _relation_errors(cart.ccs, 2, 2, 1, rng)
    ok = max(a[0], a[1], c[0], c[1]) < 1e-10 and max(a[2], c[2]) <= 1e-12
    assert report("criterion 3", ok,
                  f"affine inv {a[0]:.1e} cdot {a[1]:.1e} dense {a[2]:.1e}; split_cart inv "
                  f"{c[0]:.1e} cdot {c[1]:.1e} dense {c[2]:.1e} (tol 1e-10 / 1e-12)")


def test_criterion_4_orbit_generation(tmp_path, report):
    import json

    t0 = time.perf_counter()
    code = cli_main(["optimize", "--model", "split_cart", "--K", "10", "--reset", "identity",
                     "--cost", "effort", "--out", str(tmp_path)])
    wall = time.perf_counter() - t0
    sol = json.loads((tmp_path / "solution.json").read_text())
    post = json.loads((tmp_path / "postcheck.json").read_text())
    ok = (code == 0 and sol["status"] == "converged" and sol["feasibility"] <= 1e-6
          and post["resim_gap_inf"] <= 1e-3 and post["full_periodicity_inf"] <= 1e-3 and wall < 60)
    assert report("criterion 4", ok,
                  f"status {sol['status']}, equality residual {sol['feasibility']:.1e} (tol 1e-6), "
                  f"re-simulation gap {post['resim_gap_inf']:.2e}, full periodicity "
                  f"{post['full_periodicity_inf']:.2e} (tol 1e-3), runtime {wall:.1f} s (< 60 s)")


def _linear_ode_ccs(A):
    """Vertex 1 follows xdot = A x; the coupled states stay at rest."""

    def vertex(drift):
        return SubsystemModel(
            n_x=2, n_z=2, n_u=1, n_lam=1,
            f=drift, g=lambda x, z: np.array([[0.0], [1.0]]),
            p=lambda x, z: np.array([z[1], 0.0]), q=lambda x, z: np.zeros((2, 1)),
            g_breve=lambda x, zi, zj: np.zeros((2, 1)),
            q_breve=lambda x, zi, zj: np.array([[0.0], [1.0]]))

    return CcsModel(sub={1: vertex(lambda x, z: A @ x), 2: vertex(lambda x, z: A @ x)})


def test_criterion_5_collocation_order(oracles, report):
    o = oracles["linear_ode"]
    A = np.array(o["A"])
    xs = np.array(o["x"])
    iso = IsolatedModel(_linear_ode_ccs(A), 1)
    T = o["t"][-1]

    def max_defect(K):
        stride = (len(xs) - 1) // K
        nodes = []
        for x in xs[::stride]:
            nodes.append({"x": x, "xd": A @ x, "zi": np.zeros(2), "zid": np.zeros(2),
                          "zj": np.zeros(2), "zjd": np.zeros(2), "u": np.zeros(1),
                          "uZ": np.zeros(1)})
        return max(np.max(np.abs(c3_colloc(iso, nodes[k], nodes[k + 1], T / K)))
                   for k in range(K))

    d10, d20 = max_defect(10), max_defect(20)
    ratio = d10 / d20
    assert report("criterion 5", ratio >= 10.0,
                  f"max collocation defect K=10 {d10:.3e}, K=20 {d20:.3e}, ratio {ratio:.2f} (>= 10)")


def test_criterion_6_impact_map(pendulum, report):
    m = pendulum.parts[0]
    rng = np.random.default_rng(11)
    worst_j, worst_gain = 0.0, -np.inf
    for _ in range(100):
        q, qd = rng.uniform(-np.pi, np.pi, 3), rng.standard_normal(3)
        qp = plastic_impact(m, q, qd)
        worst_j = max(worst_j, np.max(np.abs(m.J_contact(q) @ qp)))
        D = m.D(q)
        worst_gain = max(worst_gain, 0.5 * qp @ D @ qp - 0.5 * qd @ D @ qd)
    ok = worst_j <= 1e-12 and worst_gain <= 0.0
    assert report("criterion 6", ok,
                  f"max |J qd+| {worst_j:.1e} (tol 1e-12), max kinetic-energy change "
                  f"{worst_gain:.2e} (<= 0)")


def _jacobian_problems(cart, pendulum):
    iso_c = IsolatedModel(cart.ccs, 1)
    p1 = assemble(iso_c, Grid(4, 1.4), eps_contraction=2.0,
                  anchors=(("zi", 0, 0.0), ("x", 0, 0.1)),
                  path=(clearance("x", 0, -0.5), lambda_ceiling(50.0, 1)),
                  guess={"amplitude": 0.1, "base_velocity": 0.2})
    iso_p = IsolatedModel(pendulum.ccs, 1)
    reset = impact_reset(pendulum.parts[0], pendulum.outputs[0], iso_p)
    p2 = assemble(iso_p, Grid(3, 0.8), reset=reset, free_T=True,
                  guess={"amplitude": 0.05, "z0": np.array([0.0, -0.5, 0.2, 0.0])})
    return (p1, p2)


def test_criterion_7_jacobians(cart, pendulum, report):
    rng = np.random.default_rng(5)
    worst = {}
    for prob in _jacobian_problems(cart, pendulum):
        tr = prob.context["transcription"]
        for _ in range(10):
            X = prob.x0 + 0.02 * rng.standard_normal(prob.n)
            J = tr.eq_jac(X)
            R = central_jacobian(tr.eq, X, step=1e-7)
            for name, rows in prob.blocks.items():
                if rows.stop == rows.start:
                    continue
                scale = max(1.0, np.abs(R[rows]).max())
                err = np.abs(J[rows] - R[rows]).max() / scale
                worst[name] = max(worst.get(name, 0.0), err)
            if tr.n_ineq:
                Gi, Ri = tr.ineq_jac(X), central_jacobian(tr.ineq, X, step=1e-7)
                err = np.abs(Gi - Ri).max() / max(1.0, np.abs(Ri).max())
                worst["path"] = max(worst.get("path", 0.0), err)
    ok = max(worst.values()) <= 1e-5
    detail = ", ".join(f"{k} {v:.1e}" for k, v in sorted(worst.items()))
    assert report("criterion 7", ok, f"relative Jacobian error at 20 points: {detail} (tol 1e-5)")


def test_criterion_8_qp_oracle(oracles, report):
    worst = 0.0
    for d in oracles["qp"]:
        H, q, A, b = (np.array(d[k]) for k in ("H", "q", "A", "b"))
        prob = NlpProblem(
            n=H.shape[0], cost=lambda x, H=H, q=q: 0.5 * x @ H @ x + q @ x,
            cost_grad=lambda x, H=H, q=q: H @ x + q, cost_hess=lambda x, H=H: H,
            eq=lambda x, A=A, b=b: A @ x - b, eq_jac=lambda x, A=A: A, x0=np.zeros(H.shape[0]))
        sol = solve(prob)
        worst = max(worst, np.max(np.abs(sol.x - np.array(d["x"]))) if sol.converged else np.inf)
    assert report("criterion 8", worst <= 1e-8,
                  f"max deviation from the KKT solution over {len(oracles['qp'])} QPs "
                  f"{worst:.1e} (tol 1e-8)")
