"""Pure-numpy implementations of the hot numerical kernels.

These are the reference versions; the compiled module ``_kernels`` exposes the
same functions with identical semantics.
"""
from math import comb

import numpy as np


def solve_rcond(A, B):
    """Solve ``A X = B`` and return ``(X, rcond)``.

    ``rcond`` is the exact reciprocal 1-norm condition number
    ``1 / (||A||_1 ||A^-1||_1)``. An exactly singular ``A`` gives
    ``(None, 0.0)``; the caller decides what counts as too ill-conditioned.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    n = A.shape[0]
    if A.ndim != 2 or A.shape[1] != n:
        raise ValueError(f"solve_rcond needs a square matrix, got {A.shape}")
    if n == 0:
        return B.copy(), 1.0
    try:
        Ainv = np.linalg.inv(A)
    except np.linalg.LinAlgError:
        return None, 0.0
    norm_a = np.abs(A).sum(axis=0).max()
    norm_inv = np.abs(Ainv).sum(axis=0).max()
    if norm_a == 0.0 or not np.isfinite(norm_inv):
        return None, 0.0
    rcond = 1.0 / (norm_a * norm_inv)
    X = np.linalg.solve(A, B)
    return X, rcond


def bernstein(alpha, tau):
    """Value, first and second tau-derivative of rows of Bezier coefficients."""
    alpha = np.atleast_2d(np.asarray(alpha, dtype=float))
    d = alpha.shape[1] - 1
    t = float(tau)
    s = 1.0 - t

    def basis(deg):
        return np.array([comb(deg, k) * t**k * s ** (deg - k) for k in range(deg + 1)])

    y = alpha @ basis(d)
    if d >= 1:
        dy = d * (np.diff(alpha, axis=1) @ basis(d - 1))
    else:
        dy = np.zeros(alpha.shape[0])
    if d >= 2:
        ddy = d * (d - 1) * (np.diff(alpha, n=2, axis=1) @ basis(d - 2))
    else:
        ddy = np.zeros(alpha.shape[0])
    return y, dy, ddy


def hermite_midpoint(x0, xd0, x1, xd1, h):
    """Cubic Hermite interpolant value and slope at the interval midpoint."""
    x0 = np.asarray(x0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    xd0 = np.asarray(xd0, dtype=float)
    xd1 = np.asarray(xd1, dtype=float)
    xc = 0.5 * (x0 + x1) + (h / 8.0) * (xd0 - xd1)
    xdc = -1.5 / h * (x0 - x1) - 0.25 * (xd0 + xd1)
    return xc, xdc


def solve_reduced_rcond(A, B, rtol):
    """Drop identically-zero rows of ``A`` (and ``B``), then :func:`solve_rcond`.

    Returns ``(X, rcond, kept)``; ``X`` is ``None`` when the kept rows do not
    form a square system or the system is singular.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.size == 0:
        rows = np.arange(A.shape[0])
    else:
        scale = max(np.abs(A).max(), 1.0)
        rows = np.flatnonzero(np.abs(A).max(axis=1) > rtol * scale)
    if rows.size != A.shape[1]:
        return None, 0.0, rows.size
    X, rc = solve_rcond(A[rows], B[rows])
    return X, rc, rows.size


def normal_form_terms(x, z, sol, grad, curv, act, nb, nu):
    """Fill ``(f, g, gb, p, q, qb)`` of a normal-form vertex.

    ``sol = [a0, P_u, P_lam]`` are the eliminated accelerations, ``grad`` and
    ``curv`` the desired-output gradient and curvature term, ``act`` the
    actuated coordinate indices.
    """
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    act = np.asarray(act, dtype=np.intp)
    ny = act.shape[0]
    # J_y = e_act - grad on the base columns
    rows = sol[act] - grad @ sol[:nb]
    f = np.concatenate([x[ny:], rows[:, 0] - curv])
    g = np.vstack([np.zeros((ny, nu)), rows[:, 1:1 + nu]])
    gb = np.vstack([np.zeros((ny, sol.shape[1] - 1 - nu)), rows[:, 1 + nu:]])
    p = np.concatenate([z[nb:], sol[:nb, 0]])
    q = np.vstack([np.zeros((nb, nu)), sol[:nb, 1:1 + nu]])
    qb = np.vstack([np.zeros((nb, sol.shape[1] - 1 - nu)), sol[:nb, 1 + nu:]])
    return f, g, gb, p, q, qb


def normal_form_vertex(x, z, D_fn, H_fn, forcing, nu, alpha, act, phase_index, lo, hi):
    """All six maps of a contact-free normal-form vertex at ``(x, z)``.

    Evaluates the phase, the Bezier desired outputs, the configuration, the
    mass matrix and drift, the eliminated accelerations and the normal-form
    blocks in one pass. Returns ``(terms, rcond)``; ``terms`` is ``None`` when
    the mass matrix is singular.
    """
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    act = np.asarray(act, dtype=np.intp)
    ny, nb = act.shape[0], z.shape[0] // 2
    raw = (z[phase_index] - lo) / (hi - lo)
    dtau = 1.0 / (hi - lo) if 0.0 <= raw <= 1.0 else 0.0
    y, dy, ddy = bernstein(alpha, min(max(raw, 0.0), 1.0))
    rate = dtau * z[nb + phase_index]
    q = np.empty(nb + ny)
    qd = np.empty(nb + ny)
    q[:nb], qd[:nb] = z[:nb], z[nb:]
    q[act] = x[:ny] + y
    qd[act] = x[ny:] + dy * rate
    rhs = np.column_stack([-np.asarray(H_fn(q, qd), dtype=float), forcing])
    sol, rc = solve_rcond(np.asarray(D_fn(q), dtype=float), rhs)
    if sol is None:
        return None, 0.0
    grad = np.zeros((ny, nb))
    grad[:, phase_index] = dy * dtau
    return normal_form_terms(x, z, sol, grad, ddy * rate * rate, act, nb, nu), rc


def coupling_point(fj, gj, gbj, pj, qj, qbj, pi, qi, qbi, rtol):
    """Affine coupling-relation coefficients at one point.

    Assembles ``Q = [[g_j, gb_j], [q_j, qb_i + qb_j]]`` and the right-hand
    sides ``[-f_j; p_i - p_j]`` (bias) and ``[0; q_i]`` (input columns), drops
    identically-zero rows of ``Q`` and solves. Returns
    ``(A_e, b_e, uZ_A, uZ_b, rcond, kept)``; the first four are ``None`` on
    failure. The coupling-input part of the solution is negated, so ``A_e``
    and ``b_e`` belong to the isolated vertex's edge.
    """
    gj = np.asarray(gj, dtype=float)
    nx, nuj = gj.shape
    Q = np.block([[gj, gbj], [qj, np.asarray(qbi) + qbj]])
    bias = np.concatenate([-np.asarray(fj, dtype=float), np.asarray(pi) - pj])
    cols = np.vstack([np.zeros((nx, np.shape(qi)[1])), qi])
    X, rc, kept = solve_reduced_rcond(Q, np.column_stack([bias, cols]), rtol)
    if X is None:
        return None, None, None, None, rc, kept
    return -X[nuj:, 1:], -X[nuj:, 0], X[:nuj, 1:], X[:nuj, 0], rc, kept
