import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from coupledsys.ccs import (
    Box, CcsModel, CcsState, CouplingGraph, SubsystemModel, closed_loop_rhs, coupling_residual,
    coupling_velocity_residual, embed, eval_rhs, project,
)
from coupledsys.errors import DimensionError
from coupledsys.reduction import coupling_solve

finite = st.floats(-1e3, 1e3, allow_nan=False)


def zero_sub(n_x=2, n_z=2, n_u=1):
    return SubsystemModel(
        n_x=n_x, n_z=n_z, n_u=n_u,
        f=lambda x, z: np.zeros(n_x), g=lambda x, z: np.zeros((n_x, n_u)),
        p=lambda x, z: np.zeros(n_z), q=lambda x, z: np.zeros((n_z, n_u)),
        g_breve=lambda x, zi, zj: np.zeros((n_x, n_z)),
        q_breve=lambda x, zi, zj: np.zeros((n_z, n_z)),
    )


def test_graph_has_two_reversed_edges():
    g = CouplingGraph()
    assert g.edges == ((1, 2), (2, 1))
    assert g.edge(2) == (2, 1)
    with pytest.raises(ValueError):
        CouplingGraph(edges=((1, 2), (1, 2)))


def test_model_rejects_mismatched_coupled_dims():
    with pytest.raises(DimensionError):
        CcsModel(sub={1: zero_sub(n_z=2), 2: zero_sub(n_z=3)})


def test_state_enforces_antisymmetric_lambda():
    CcsState(x={}, z={}, lam={(1, 2): np.array([1.0]), (2, 1): np.array([-1.0])})
    with pytest.raises(ValueError):
        CcsState(x={}, z={}, lam={(1, 2): np.array([1.0]), (2, 1): np.array([1.0])})


def test_zero_maps_give_zero_rhs():
    m = CcsModel(sub={1: zero_sub(), 2: zero_sub()})
    xd, zd = eval_rhs(m, 1, [1, 2], [3, 4], [5, 6], [7], [8, 9])
    assert np.all(xd == 0) and np.all(zd == 0)


def test_eval_rhs_matches_stacked_product(affine, rng):
    m, d = affine
    x, z, u, lam = (rng.standard_normal(k) for k in (2, 3, 2, 3))
    zj = rng.standard_normal(3)
    xd, zd = eval_rhs(m, 2, x, z, zj, u, lam)
    assert np.allclose(xd, d.F[2] @ x + d.Cx[2] @ z + d.a[2] + d.G[2] @ u + d.GB[2] @ lam, atol=1e-14)
    assert np.allclose(zd, d.P[2] @ x + d.Rz[2] @ z + d.r[2] + d.Q[2] @ u + d.QB[2] @ lam, atol=1e-14)


def test_eval_rhs_names_bad_shape():
    bad = SubsystemModel(
        n_x=2, n_z=2, n_u=1, f=lambda x, z: np.zeros(3), g=lambda x, z: np.zeros((2, 1)),
        p=lambda x, z: np.zeros(2), q=lambda x, z: np.zeros((2, 1)),
        g_breve=lambda x, zi, zj: np.zeros((2, 2)), q_breve=lambda x, zi, zj: np.zeros((2, 2)),
        name="broken",
    )
    m = CcsModel(sub={1: bad, 2: zero_sub()})
    with pytest.raises(DimensionError, match="broken.f"):
        eval_rhs(m, 1, [0, 0], [0, 0], [0, 0], [0], [0, 0])
    with pytest.raises(DimensionError, match="u_i"):
        eval_rhs(m, 2, [0, 0], [0, 0], [0, 0], [0, 0], [0, 0])


def test_base_velocity_rows_are_kinematic(cart, rng):
    for _ in range(5):
        x, z = rng.standard_normal(2) * 0.1, rng.standard_normal(2) * 0.1
        _, zd = eval_rhs(cart.ccs, 1, x, z, z, rng.standard_normal(1), rng.standard_normal(1))
        assert zd[0] == z[1]


def test_eval_rhs_slope_in_u_is_g(cart, rng):
    x, z = 0.1 * rng.standard_normal(2), 0.1 * rng.standard_normal(2)
    u, lam, h = np.array([0.3]), np.array([0.2]), 1e-6
    xp, _ = eval_rhs(cart.ccs, 1, x, z, z, u + h, lam)
    xm, _ = eval_rhs(cart.ccs, 1, x, z, z, u - h, lam)
    g = cart.ccs.sub[1].eval_g(x, z)[:, 0]
    assert np.allclose((xp - xm) / (2 * h), g, rtol=1e-6, atol=1e-9)


def test_coupling_residual_examples():
    assert np.array_equal(coupling_residual([1, 2], [0, 5]), [1, -3])
    assert np.all(coupling_residual([3, 4], [3, 4]) == 0)
    with pytest.raises(DimensionError):
        coupling_residual([1, 2], [1, 2, 3])


@given(arrays(float, 4, elements=finite), arrays(float, 4, elements=finite))
def test_coupling_residual_antisymmetric(a, b):
    assert np.array_equal(coupling_residual(a, b), -coupling_residual(b, a))


def test_velocity_residual_symmetric_cancels(affine, rng):
    m, d = affine
    # identical subsystems: build vertex 2 from vertex 1's maps
    same = CcsModel(sub={1: m.sub[1], 2: m.sub[1]})
    x, z, u = rng.standard_normal(2), rng.standard_normal(3), rng.standard_normal(2)
    r = coupling_velocity_residual(same, {1: x, 2: x}, {1: z, 2: z}, {1: u, 2: u}, np.zeros(3))
    assert np.all(r == 0)


def test_velocity_residual_decoupled_formula(rng):
    def sub(p0, Q):
        return SubsystemModel(
            n_x=1, n_z=2, n_u=1, f=lambda x, z: np.zeros(1), g=lambda x, z: np.ones((1, 1)),
            p=lambda x, z: p0, q=lambda x, z: Q, g_breve=lambda x, zi, zj: np.zeros((1, 2)),
            q_breve=lambda x, zi, zj: np.zeros((2, 2)))
    p1, p2 = np.array([1.0, 2.0]), np.array([-1.0, 0.5])
    Q1, Q2 = np.array([[1.0], [2.0]]), np.array([[0.5], [-1.0]])
    m = CcsModel(sub={1: sub(p1, Q1), 2: sub(p2, Q2)})
    u = {1: np.array([0.7]), 2: np.array([-0.3])}
    z = {1: np.zeros(2), 2: np.zeros(2)}
    r = coupling_velocity_residual(m, {1: np.zeros(1), 2: np.zeros(1)}, z, u, np.array([5.0, 6.0]))
    assert np.allclose(r, p1 + Q1 @ u[1] - p2 - Q2 @ u[2])


def test_velocity_residual_vanishes_at_relation(affine, rng):
    m, _ = affine
    for _ in range(10):
        x1, z = rng.standard_normal(2), rng.standard_normal(3)
        u1 = rng.standard_normal(2)
        zz = {1: z, 2: z}
        uZ, lam = coupling_solve(m, 1, x1, zz, u1)
        r = coupling_velocity_residual(m, {1: x1, 2: np.zeros(2)}, zz, {1: u1, 2: uZ}, lam)
        assert np.max(np.abs(r)) <= 1e-10


@settings(max_examples=50)
@given(arrays(float, 2, elements=finite), arrays(float, 3, elements=finite),
       st.sampled_from([1, 2]))
def test_embed_project_roundtrip(x, z, which):
    xs, zs = embed(x, {1: z, 2: z}, which, n_x_other=4)
    assert np.array_equal(xs[3 - which], np.zeros(4))
    assert not np.signbit(xs[3 - which]).any()
    xb, zb = project(xs, zs, which)
    assert np.array_equal(xb, x) and np.array_equal(zb[1], z) and np.array_equal(zb[2], z)


def test_embed_zero_lies_in_both_manifolds():
    x, _ = embed(np.zeros(2), {1: np.ones(2), 2: np.ones(2)}, 1, n_x_other=2)
    assert np.all(x[1] == 0) and np.all(x[2] == 0)


def test_box_contains():
    b = Box(np.array([-1.0, 0.0]), np.array([1.0, 2.0]))
    assert b.contains([0, 1]) and not b.contains([2, 1])
    assert Box.unbounded(3).contains([1e300, -1e300, 0])


def test_closed_loop_zero_controllers(affine, rng):
    m, d = affine
    ctrl = {v: (lambda x, z: np.zeros(2)) for v in (1, 2)}
    rhs = closed_loop_rhs(m, ctrl, lambda x, z: np.zeros(3))
    x1, z1, x2, z2 = (rng.standard_normal(k) for k in (2, 3, 2, 3))
    out = rhs(m.pack({1: x1, 2: x2}, {1: z1, 2: z2}))
    expect = np.concatenate([
        m.sub[1].eval_f(x1, z1), m.sub[1].eval_p(x1, z1),
        m.sub[2].eval_f(x2, z2), m.sub[2].eval_p(x2, z2)])
    assert np.allclose(out, expect, atol=1e-14)


def test_closed_loop_keeps_zero_dynamics(cart, rng):
    """With the relation's uZ_j and lam_e, the x_j derivative vanishes at x_j = 0."""
    m = cart.ccs
    for _ in range(5):
        x1, z = 0.1 * rng.standard_normal(2), 0.1 * rng.standard_normal(2)
        u1 = rng.standard_normal(1)
        zz = {1: z, 2: z}
        uZ, lam = coupling_solve(m, 1, x1, zz, u1)
        ctrl = {1: lambda x, zz_, u1=u1: u1, 2: lambda x, zz_, uZ=uZ: uZ}
        rhs = closed_loop_rhs(m, ctrl, lambda x, zz_, lam=lam: lam)
        out = rhs(m.pack({1: x1, 2: np.zeros(2)}, zz))
        assert np.max(np.abs(out[4:6])) <= 1e-12
