import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coupledsys.optimize import (
    DecisionLayout, Grid, NlpProblem, SolverConfig, amplitude_bound, assemble, c1_zero,
    c2_dyn, c3_colloc, c5_path, c6_periodic, clearance, default_cost, equality_count,
    hermite_center, identity_reset, lambda_ceiling, seed_guess, solution_to_trajectory, solve,
)
from coupledsys.reduction import IsolatedModel
from coupledsys.simulate import IntegratorConfig, io_linearizing_controller, simulate_isolated


def _random_nodes(rng, layout):
    return [{name: rng.standard_normal(size) for name, size in layout.fields}
            for _ in range(layout.n_nodes)]


@settings(max_examples=25, deadline=None)
@given(K=st.integers(2, 6), free_T=st.booleans(), seed=st.integers(0, 1000))
def test_layout_pack_unpack_bijection(K, free_T, seed):
    from coupledsys.models import split_cart

    iso = IsolatedModel(split_cart().ccs, 1)
    lay = DecisionLayout(iso, K, free_T)
    rng = np.random.default_rng(seed)
    X = rng.standard_normal(lay.size)
    nodes, T = lay.unpack(X)
    assert np.array_equal(lay.pack(nodes, T), X)
    assert (T is not None) == free_T


def test_layout_sizes(cart_iso):
    lay = DecisionLayout(cart_iso, 4)
    assert lay.node_size == 2 + 2 + 2 + 2 + 2 + 2 + 1 + 1
    assert lay.size == 5 * lay.node_size and lay.n_chi == 6
    assert list(lay.index(1, "u")) == [lay.node_size + 12]


def test_grid_validation():
    assert Grid(4, 2.0).h == 0.5
    with pytest.raises(ValueError):
        Grid(1, 1.0)
    with pytest.raises(ValueError):
        Grid(4, 0.0)


def test_hermite_center_exact_on_cubics():
    h = 0.4
    x = lambda t: t**3 - 2 * t  # noqa: E731
    xd = lambda t: 3 * t**2 - 2  # noqa: E731
    xc, xdc = hermite_center(x(0.0), xd(0.0), x(h), xd(h), h)
    assert xc == pytest.approx(x(h / 2)) and xdc == pytest.approx(xd(h / 2))
    with pytest.raises(ValueError):
        hermite_center(0.0, 0.0, 0.0, 0.0, 0.0)


def test_seed_guess_zeroes_nodewise_blocks(cart_iso):
    grid = Grid(6, 1.4)
    lay = DecisionLayout(cart_iso, 6)
    X = seed_guess(cart_iso, grid, lay, amplitude=0.1)
    for nd in lay.unpack(X)[0]:
        assert np.max(np.abs(c1_zero(cart_iso, nd))) <= 1e-10
        assert np.max(np.abs(c2_dyn(cart_iso, nd))) <= 1e-12


def test_dyn_block_vanishes_on_simulated_trajectory(cart_iso):
    """Sampling a simulated trajectory with differenced derivatives leaves the dyn block small."""
    ctrl = io_linearizing_controller(cart_iso, 2.0)
    h = 1e-4
    traj = simulate_isolated(cart_iso, ctrl, np.array([0.1, 0.0]), np.array([0.0, 0.3]),
                             IntegratorConfig(h=h, T=0.5))
    S = np.hstack([traj.states["x_1"], traj.states["z_1"], traj.states["z_2"]])
    for k in (100, 2000, 4000):
        chid = (S[k - 2] - 8 * S[k - 1] + 8 * S[k + 1] - S[k + 2]) / (12 * h)
        nd = {"x": S[k, :2], "zi": S[k, 2:4], "zj": S[k, 4:], "xd": chid[:2], "zid": chid[2:4],
              "zjd": chid[4:], "u": traj.inputs["u_1"][k], "uZ": traj.inputs["uZ_2"][k]}
        assert np.max(np.abs(c2_dyn(cart_iso, nd))) <= 1e-6
        assert np.max(np.abs(c1_zero(cart_iso, nd))) <= 1e-9


def test_colloc_holds_left_input(cart_iso, rng):
    lay = DecisionLayout(cart_iso, 2)
    n0, n1 = _random_nodes(rng, lay)[:2]
    for nd in (n0, n1):
        nd["x"] *= 0.1
        nd["zi"] = nd["zj"] = 0.1 * nd["zi"]
    d = c3_colloc(cart_iso, n0, n1, 0.2)
    n1b = dict(n1, u=n1["u"] + 5.0, uZ=n1["uZ"] - 3.0)
    assert np.array_equal(d, c3_colloc(cart_iso, n0, n1b, 0.2))
    n0b = dict(n0, u=n0["u"] + 0.5)
    assert not np.allclose(d, c3_colloc(cart_iso, n0b, n1, 0.2))


def test_periodic_block(cart_iso):
    lay = DecisionLayout(cart_iso, 2)
    rng = np.random.default_rng(3)
    first = {name: rng.standard_normal(size) for name, size in lay.fields}
    r = c6_periodic(cart_iso, first, first, identity_reset, anchors=(("zi", 0, 0.5),))
    assert r.shape == (2 + 2 + 2 + 1,)
    assert np.all(r[:4] == 0)
    assert np.allclose(r[4:6], first["zj"] - first["zi"])
    assert r[6] == pytest.approx(first["zi"][0] - 0.5)


def test_path_constraints(cart_iso):
    nd = {"x": np.array([0.3, -0.1]), "zi": np.zeros(2), "zj": np.zeros(2), "u": np.zeros(1)}
    assert c5_path(cart_iso, nd, []).shape == (0,)
    vals = c5_path(cart_iso, nd, [clearance("x", 0, 0.1), amplitude_bound("x", 1, 0.5),
                                  lambda_ceiling(100.0, 1)])
    assert vals[0] == pytest.approx(0.2) and vals[1] == pytest.approx(0.4)
    lam = cart_iso.point(nd["x"], nd["zi"], nd["zj"]).lambda_e(nd["u"])
    assert vals[2] == pytest.approx(100.0 - abs(lam[0]))


def test_assemble_equality_count(cart_iso):
    for K in (3, 5):
        prob = assemble(cart_iso, Grid(K, 1.0))
        assert prob.eq(prob.x0).shape == (equality_count(cart_iso, K),)
        assert set(prob.blocks) >= {"zero", "dyn", "colloc", "periodic"}
    two = assemble(cart_iso, Grid(3, 1.0), anchors=(("zi", 0, 0.0), ("x", 0, 0.1)))
    assert two.eq(two.x0).shape == (equality_count(cart_iso, 3, n_anchors=2),)


def test_contraction_rows(cart_iso):
    prob = assemble(cart_iso, Grid(3, 1.0), eps_contraction=2.0)
    tr = prob.context["transcription"]
    lay = prob.context["layout"]
    r = prob.eq(prob.x0)[prob.blocks["contract"]]
    nd = lay.node(prob.x0, 1)
    assert np.allclose(r[2:4], nd["xd"] + 2.0 * nd["x"])
    assert tr.n_con == 2


def test_bound_violations_reported(cart_iso):
    prob = assemble(cart_iso, Grid(3, 1.0), bounds={"u": (-0.1, 0.1)},
                    guess={"amplitude": 0.1})
    X = prob.x0.copy()
    lay = prob.context["layout"]
    X[lay.index(2, "u")] = 0.5
    bad = prob.bound_violations(X)
    assert bad == [(int(lay.index(2, "u")[0]), 0.5, -0.1, 0.1)]
    with pytest.raises(KeyError):
        assemble(cart_iso, Grid(3, 1.0), bounds={"nope": (0, 1)})


def test_default_cost(cart_iso):
    grid = Grid(4, 2.0)
    lay = DecisionLayout(cart_iso, 4)
    X = np.zeros(lay.size)
    for k in range(5):
        X[lay.index(k, "u")] = 1.0
        X[lay.index(k, "zid")] = [7.0, 2.0]
    assert default_cost(lay, grid)(X) == pytest.approx(5 * 0.5)
    bc = default_cost(lay, grid, "base_accel")
    assert bc(X) == pytest.approx(5 * 4.0 * 0.5)
    assert np.allclose(bc.hess(X) @ X, bc.grad(X))
    with pytest.raises(ValueError):
        default_cost(lay, grid, "snap")


def _qp_problem(d):
    H, q, A, b = (np.array(d[k]) for k in ("H", "q", "A", "b"))
    return NlpProblem(
        n=H.shape[0], cost=lambda x: 0.5 * x @ H @ x + q @ x, cost_grad=lambda x: H @ x + q,
        cost_hess=lambda x: H, eq=lambda x: A @ x - b, eq_jac=lambda x: A,
        x0=np.zeros(H.shape[0]))


def test_frozen_qps(oracles):
    for d in oracles["qp"]:
        sol = solve(_qp_problem(d))
        assert sol.converged
        assert np.max(np.abs(sol.x - np.array(d["x"]))) <= 1e-8


def test_fd_fallbacks_match(oracles):
    d = oracles["qp"][1]
    p = _qp_problem(d)
    p.cost_grad = p.cost_hess = p.eq_jac = None
    sol = solve(p)
    assert sol.converged and np.max(np.abs(sol.x - np.array(d["x"]))) <= 1e-6


def test_infeasible_reports_non_convergence():
    p = NlpProblem(n=1, cost=lambda x: float(x[0] ** 2),
                   eq=lambda x: np.array([x[0] - 1.0, x[0] + 1.0]), x0=np.zeros(1))
    sol = solve(p, SolverConfig(max_outer=5, max_inner=10))
    assert not sol.converged and sol.status in ("max_iter", "line_search_failure")
    assert sol.feasibility >= 0.9


def test_inequality_and_bounds():
    p = NlpProblem(n=2, cost=lambda x: float((x[0] - 2) ** 2 + (x[1] + 1) ** 2),
                   eq=lambda x: np.array([x[0] + x[1] - 1.0]),
                   ineq=lambda x: np.array([1.5 - x[0]]), lb=np.array([-np.inf, -0.2]),
                   x0=np.zeros(2))
    sol = solve(p)
    assert sol.converged
    assert np.allclose(sol.x, [1.2, -0.2], atol=1e-6)


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(eq_tol=0.0)
    with pytest.raises(ValueError):
        SolverConfig(max_outer=0)


def test_solution_to_trajectory_fields(cart_iso):
    prob = assemble(cart_iso, Grid(4, 1.4), guess={"amplitude": 0.05})
    traj, report = solution_to_trajectory(prob.x0, prob, resim_substeps=5)
    assert traj.states["x_1"].shape == (5, 2)
    assert np.array_equal(traj.lambdas["lambda_ebar"], -traj.lambdas["lambda_e"])
    assert set(report) == {"node_periodicity_inf", "resim_gap_inf", "full_periodicity_inf",
                           "resim_h", "interpolation"}
    assert report["resim_h"] == pytest.approx(1.4 / 20)
