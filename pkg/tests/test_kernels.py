import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coupledsys import _kernels_py as py
from coupledsys import kernels

cy = pytest.importorskip("coupledsys._kernels")


def test_dispatch_prefers_extension():
    assert kernels.BACKEND == ("python" if os.environ.get("COUPLEDSYS_PURE_PYTHON") == "1" else "cython")


def test_env_var_forces_fallback():
    code = "from coupledsys import kernels; print(kernels.BACKEND)"
    env = dict(os.environ, COUPLEDSYS_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 6), m=st.integers(1, 3), seed=st.integers(0, 10_000))
def test_solve_rcond_parity(n, m, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n)) + n * np.eye(n)
    B = rng.standard_normal((n, m))
    Xp, rp = py.solve_rcond(A, B)
    Xc, rc = cy.solve_rcond(A, B)
    assert np.allclose(Xp, Xc, rtol=1e-12, atol=1e-12)
    assert rp == pytest.approx(rc, rel=1e-10)
    assert np.allclose(A @ Xc, B, atol=1e-10)


def test_solve_rcond_singular_both():
    A = np.array([[1.0, 2.0], [2.0, 4.0]])
    for mod in (py, cy):
        X, rc = mod.solve_rcond(A, np.ones((2, 1)))
        assert X is None or rc < 1e-15


def test_solve_rcond_examples():
    for mod in (py, cy):
        X, rc = mod.solve_rcond(np.diag([2.0, 4.0]), np.array([[2.0], [2.0]]))
        assert np.allclose(X.ravel(), [1.0, 0.5])
        assert rc == pytest.approx(0.5)


def test_solve_reduced_drops_zero_rows():
    A = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 3.0]])
    B = np.array([[1.0], [0.0], [6.0]])
    for mod in (py, cy):
        X, rc, kept = mod.solve_reduced_rcond(A, B, 1e-14)
        assert kept == 2 and np.allclose(X.ravel(), [1.0, 2.0])
    X, _, kept = py.solve_reduced_rcond(np.ones((3, 2)), np.ones((3, 1)), 1e-14)
    assert X is None and kept == 3


@settings(max_examples=40, deadline=None)
@given(d=st.integers(0, 6), tau=st.floats(0.0, 1.0), seed=st.integers(0, 10_000))
def test_bernstein_parity(d, tau, seed):
    alpha = np.random.default_rng(seed).standard_normal((2, d + 1))
    for a, b in zip(py.bernstein(alpha, tau), cy.bernstein(alpha, tau)):
        assert np.allclose(a, b, rtol=1e-12, atol=1e-12)


def test_bernstein_examples():
    alpha = np.array([[1.0, 3.0, -2.0]])
    for mod in (py, cy):
        y0, dy0, _ = mod.bernstein(alpha, 0.0)
        y1, dy1, ddy = mod.bernstein(alpha, 1.0)
        assert y0[0] == 1.0 and y1[0] == -2.0
        assert dy0[0] == pytest.approx(4.0) and dy1[0] == pytest.approx(-10.0)
        assert ddy[0] == pytest.approx(2 * (1.0 - 6.0 - 2.0))


def test_hermite_midpoint_parity(rng):
    args = [rng.standard_normal(4) for _ in range(4)] + [0.37]
    for a, b in zip(py.hermite_midpoint(*args), cy.hermite_midpoint(*args)):
        assert np.allclose(a, b, rtol=1e-14, atol=1e-14)


def _coupling_args(rng, nx=2, nu=1, nz=2, nl=1):
    return (rng.standard_normal(nx), rng.standard_normal((nx, nu)), rng.standard_normal((nx, nl)),
            rng.standard_normal(nz), rng.standard_normal((nz, nu)), rng.standard_normal((nz, nl)),
            rng.standard_normal(nz), rng.standard_normal((nz, nu)), rng.standard_normal((nz, nl)), 1e-14)


def test_coupling_point_parity(rng):
    for _ in range(20):
        args = list(_coupling_args(rng, nx=2, nu=1, nz=2, nl=1))
        # zero the velocity-free rows as in a second-order system
        args[0][0] = 0.0
        args[1][0] = 0.0
        args[2][0] = 0.0
        args[3][0] = 0.0
        args[4][0] = 0.0
        args[5][0] = 0.0
        args[7][0] = 0.0
        args[8][0] = 0.0
        rp, rc = py.coupling_point(*args), cy.coupling_point(*args)
        assert rp[5] == rc[5] == 2
        for a, b in zip(rp[:5], rc[:5]):
            assert np.allclose(a, b, rtol=1e-11, atol=1e-12)


def test_normal_form_terms_parity(rng):
    nb, ny, nu, nl = 1, 1, 1, 1
    x, z = rng.standard_normal(2 * ny), rng.standard_normal(2 * nb)
    sol = rng.standard_normal((nb + ny, 1 + nu + nl))
    grad, curv = rng.standard_normal((ny, nb)), rng.standard_normal(ny)
    act = np.array([1], dtype=np.intp)
    for a, b in zip(py.normal_form_terms(x, z, sol, grad, curv, act, nb, nu),
                    cy.normal_form_terms(x, z, sol, grad, curv, act, nb, nu)):
        assert np.allclose(a, b, rtol=1e-13, atol=1e-13)


def test_normal_form_vertex_parity(cart, rng):
    part, out = cart.parts[0], cart.outputs[0]
    forcing = np.column_stack([part.B, part.J_couple.T])
    for _ in range(10):
        x, z = 0.3 * rng.standard_normal(2), 0.3 * rng.standard_normal(2)
        args = (x, z, part.D, part.H, forcing, part.n_u, out.alpha, np.asarray(out.actuated, dtype=np.intp),
                out.phase_index, out.phase_range[0], out.phase_range[1])
        (tp, rp), (tc, rc) = py.normal_form_vertex(*args), cy.normal_form_vertex(*args)
        assert rp == pytest.approx(rc, rel=1e-10)
        for a, b in zip(tp, tc):
            assert np.allclose(a, b, rtol=1e-12, atol=1e-12)
