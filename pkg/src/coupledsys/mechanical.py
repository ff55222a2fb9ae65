"""Coupled control systems built from Lagrangian (floating-base style) models.

Conventions: the configuration is ``q = (xi, theta)`` with the unactuated base
coordinates ``xi = q[:base_dim]`` first; outputs ``y = theta - y_d(xi)`` select
the actuated coordinates; the coupling Jacobian selects base rows so the
coupling force enters the base equations directly.
"""
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from . import kernels
from .ccs import CcsModel, SubsystemModel
from .errors import ConvergenceError, DimensionError, SingularityError
from .linalg import RCOND_MIN, solve_checked


@dataclass(frozen=True)
class LagrangianModel:
    """``D(q) qdd + H(q, qd) = J_c' F + B u + J_couple' lam`` with ``J_c qdd + Jdot_c qd = 0``.

    ``J_contact(q)`` and ``Jdot_contact(q, qd)`` may be ``None`` (no contacts).
    ``potential`` is optional and only used for energy bookkeeping.
    """

    n: int
    D: Callable
    H: Callable
    B: np.ndarray
    J_couple: np.ndarray
    base_dim: int
    J_contact: Callable | None = None
    Jdot_contact: Callable | None = None
    potential: Callable | None = None
    name: str = ""

    @property
    def n_u(self):
        return self.B.shape[1]

    @property
    def n_lambda(self):
        return self.J_couple.shape[0]

    def n_contact(self, q):
        return 0 if self.J_contact is None else np.asarray(self.J_contact(q)).shape[0]

    def energy(self, q, qd):
        qd = np.asarray(qd, dtype=float)
        ke = 0.5 * qd @ self.D(q) @ qd
        return ke + (self.potential(q) if self.potential is not None else 0.0)


def _accel_solution(m, q, qd, forcing=None):
    """Stacked ``[[a0, P_u, P_lam], [F0, F_u, F_lam]]`` of the contact-eliminated dynamics."""
    q = np.asarray(q, dtype=float)
    qd = np.asarray(qd, dtype=float)
    n = m.n
    D = np.asarray(m.D(q), dtype=float)
    H = np.asarray(m.H(q, qd), dtype=float)
    nu, nl = m.n_u, m.n_lambda
    if forcing is None:
        forcing = np.hstack([m.B, m.J_couple.T])
    if m.J_contact is None:
        rhs = np.empty((n, 1 + nu + nl))
        rhs[:, 0] = -H
        rhs[:, 1:] = forcing
        return solve_checked(D, rhs, what=f"mass matrix of {m.name or 'model'}")
    J = np.asarray(m.J_contact(q), dtype=float)
    Jd = np.asarray(m.Jdot_contact(q, qd), dtype=float)
    nc = J.shape[0]
    K = np.zeros((n + nc, n + nc))
    K[:n, :n] = D
    K[:n, n:] = -J.T
    K[n:, :n] = J
    rhs = np.zeros((n + nc, 1 + nu + nl))
    rhs[:n, 0] = -H
    rhs[:n, 1:] = forcing
    rhs[n:, 0] = -Jd @ qd
    try:
        return solve_checked(K, rhs, what="contact elimination")
    except SingularityError as exc:
        raise SingularityError(
            "contact Jacobian is rank deficient; J D^-1 J' is singular", exc.rcond
        ) from None


def accel_affine(m, q, qd, forcing=None):
    """Affine dependence of ``(qdd, F)`` on ``(u, lam)`` after contact elimination.

    Returns ``(a0, P_u, P_lam, F0, F_u, F_lam)`` with ``qdd = a0 + P_u u + P_lam lam``
    and ``F = F0 + F_u u + F_lam lam``. ``forcing`` may pass a precomputed
    ``[B, J_couple']``.
    """
    sol = _accel_solution(m, q, qd, forcing)
    n, nu = m.n, m.n_u
    acc, F = sol[:n], sol[n:]
    return (acc[:, 0], acc[:, 1:1 + nu], acc[:, 1 + nu:],
            F[:, 0], F[:, 1:1 + nu], F[:, 1 + nu:])


def eliminate_contact_force(m, q, qd, u, lam):
    """Accelerations and the unique contact force for given ``u`` and ``lam``."""
    a0, Pu, Pl, F0, Fu, Fl = accel_affine(m, q, qd)
    u = np.asarray(u, dtype=float)
    lam = np.asarray(lam, dtype=float)
    return a0 + Pu @ u + Pl @ lam, F0 + Fu @ u + Fl @ lam


def bezier(alpha, tau):
    """Bezier value and tau-derivative with ``tau`` clamped to ``[0, 1]``."""
    y, dy, _ = kernels.bernstein(alpha, min(max(float(tau), 0.0), 1.0))
    return y, dy


def mirror_coeffs(alpha, M):
    alpha = np.atleast_2d(np.asarray(alpha, dtype=float))
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape != (alpha.shape[0], alpha.shape[0]):
        raise DimensionError(f"mirror matrix {M.shape} does not match {alpha.shape[0]} outputs")
    return M @ alpha


@dataclass(frozen=True)
class OutputSpec:
    """Virtual constraints ``y = q[actuated] - bezier(alpha, tau(xi))``.

    The phase ``tau`` is affine in ``xi[phase_index]`` between ``phase_range``
    and clamped to ``[0, 1]``.
    """

    alpha: np.ndarray
    actuated: tuple
    phase_index: int = 0
    phase_range: tuple = (0.0, 1.0)

    @property
    def n_y(self):
        return np.atleast_2d(self.alpha).shape[0]

    @property
    def degree(self):
        return np.atleast_2d(self.alpha).shape[1] - 1

    def mirrored(self, M):
        return OutputSpec(mirror_coeffs(self.alpha, M), self.actuated,
                          self.phase_index, self.phase_range)

    def phase(self, xi):
        a, b = self.phase_range
        raw = (float(xi[self.phase_index]) - a) / (b - a)
        inside = 0.0 <= raw <= 1.0
        return min(max(raw, 0.0), 1.0), (1.0 / (b - a) if inside else 0.0)

    def desired(self, xi, xid=None):
        """``y_d``, ``d y_d / d xi`` and, given ``xid``, ``d/dt(d y_d/d xi) xid``."""
        nb = len(xi)
        tau, dtau = self.phase(xi)
        y, dy, ddy = kernels.bernstein(self.alpha, tau)
        grad = np.zeros((self.n_y, nb))
        grad[:, self.phase_index] = dy * dtau
        if xid is None:
            return y, grad
        rate = dtau * float(xid[self.phase_index])
        return y, grad, ddy * rate * rate


def _outputs_inverse(m, out, x, z):
    """Configuration and velocity from normal-form coordinates ``(x, z)``."""
    nb, ny = m.base_dim, out.n_y
    xi, xid = z[:nb], z[nb:]
    yd, grad, curv = out.desired(xi, xid)
    q = np.empty(m.n)
    qd = np.empty(m.n)
    q[:nb], qd[:nb] = xi, xid
    act = list(out.actuated)
    q[act] = x[:ny] + yd
    qd[act] = x[ny:] + grad @ xid
    return q, qd, grad, curv


def _check_layout(m, out):
    act = list(out.actuated)
    expected = list(range(m.base_dim, m.n))
    if sorted(act) != expected:
        raise DimensionError(
            f"outputs must select exactly the actuated coordinates {expected}, got {act}"
        )
    if not np.allclose(m.J_couple, np.eye(m.n_lambda, m.n)):
        raise DimensionError("the coupling Jacobian must select the leading base coordinates")


def output_jacobian(m, out, xi):
    """``J_y = d y / d q`` for a selection output."""
    _, grad = out.desired(xi)
    Jy = np.zeros((out.n_y, m.n))
    Jy[:, : m.base_dim] = -grad
    for r, k in enumerate(out.actuated):
        Jy[r, k] += 1.0
    return Jy


def vertex_model(m, out, name=""):
    """:class:`SubsystemModel` with ``x = (y, ydot)`` and ``z = (xi, xid)``."""
    _check_layout(m, out)
    nb, ny, nu, nl = m.base_dim, out.n_y, m.n_u, m.n_lambda
    n_x, n_z = 2 * ny, 2 * nb
    forcing = np.hstack([m.B, m.J_couple.T])
    act = np.asarray(out.actuated)

    alpha = np.ascontiguousarray(np.atleast_2d(out.alpha), dtype=float)
    lo, hi = out.phase_range
    fused = m.J_contact is None

    @lru_cache(maxsize=64)
    def _terms(xb, zb):
        x = np.frombuffer(xb)
        z = np.frombuffer(zb)
        if fused:
            res, rc = kernels.normal_form_vertex(
                x, z, m.D, m.H, forcing, nu, alpha, act, out.phase_index, lo, hi)
            if res is None or rc < RCOND_MIN:
                raise SingularityError(
                    f"mass matrix of {m.name or 'model'} is singular or ill-conditioned "
                    f"(rcond={rc:.3e})", rc)
            for arr in res:
                arr.setflags(write=False)
            return res
        q, qd, grad, curv = _outputs_inverse(m, out, x, z)
        sol = _accel_solution(m, q, qd, forcing)[: m.n]
        f, g, gb, p, qm, qb = kernels.normal_form_terms(x, z, sol, grad, curv, act, nb, nu)
        for arr in (f, g, gb, p, qm, qb):
            arr.setflags(write=False)
        return f, g, gb, p, qm, qb

    def terms(x, z):
        x = np.ascontiguousarray(x, dtype=float)
        z = np.ascontiguousarray(z, dtype=float)
        if x.shape != (n_x,) or z.shape != (n_z,):
            raise DimensionError(f"state shapes {x.shape}, {z.shape}; expected ({n_x},), ({n_z},)")
        return _terms(x.tobytes(), z.tobytes())

    return SubsystemModel(
        n_x=n_x, n_z=n_z, n_u=nu, n_lam=nl,
        f=lambda x, z: terms(x, z)[0],
        g=lambda x, z: terms(x, z)[1],
        p=lambda x, z: terms(x, z)[3],
        q=lambda x, z: terms(x, z)[4],
        g_breve=lambda x, zi, zj: terms(x, zi)[2],
        q_breve=lambda x, zi, zj: terms(x, zi)[5],
        normal_form=True,
        name=name or m.name,
        terms_fn=lambda x, zi, zj: terms(x, zi),
    )


def check_relative_degree(m, out, q, qd=None):
    """Raise if the decoupling matrix ``J_y D^-1 B`` is rank deficient at ``q``."""
    q = np.asarray(q, dtype=float)
    qd = np.zeros(m.n) if qd is None else np.asarray(qd, dtype=float)
    _, Pu, *_ = accel_affine(m, q, qd)
    Jy = output_jacobian(m, out, q[: m.base_dim])
    dec = Jy @ Pu
    scale = max(np.abs(dec).max(), 1e-300)
    for r in range(dec.shape[0]):
        if np.abs(dec[r]).max() <= 1e-12 * scale:
            raise DimensionError(f"output row {r} has no relative degree 2 (zero decoupling row)")
    if dec.shape[0] == dec.shape[1]:
        if np.linalg.matrix_rank(dec) < dec.shape[0]:
            raise DimensionError("decoupling matrix J_y D^-1 B is singular")
    elif np.linalg.matrix_rank(dec) < dec.shape[0]:
        raise DimensionError("outputs are not independently actuated")
    return dec


def to_ccs(m_front, m_rear, out_f, out_r, q_nominal=None, boxes=None, name=""):
    """CCS with vertex 1 the front model and vertex 2 the rear model."""
    if m_front.n_lambda != m_rear.n_lambda or m_front.base_dim != m_rear.base_dim:
        raise DimensionError("front and rear models must share base and coupling dimensions")
    for k, (m, out) in enumerate(((m_front, out_f), (m_rear, out_r))):
        _check_layout(m, out)
        qn = np.zeros(m.n) if q_nominal is None else np.asarray(q_nominal[k], dtype=float)
        check_relative_degree(m, out, qn)
    kw = {} if boxes is None else boxes
    return CcsModel(
        sub={1: vertex_model(m_front, out_f, "front"), 2: vertex_model(m_rear, out_r, "rear")},
        name=name, **kw,
    )


def normal_coordinates(m, out, q, qd):
    """``(x, z)`` of a configuration and velocity."""
    q = np.asarray(q, dtype=float)
    qd = np.asarray(qd, dtype=float)
    nb = m.base_dim
    yd, grad = out.desired(q[:nb])
    act = list(out.actuated)
    y = q[act] - yd
    ydot = qd[act] - grad @ qd[:nb]
    return np.concatenate([y, ydot]), np.concatenate([q[:nb], qd[:nb]])


def configuration(m, out, x, z):
    """Inverse of :func:`normal_coordinates`."""
    q, qd, _, _ = _outputs_inverse(m, out, np.asarray(x, float), np.asarray(z, float))
    return q, qd


def _pinned_configuration(m, out, xi, tol=1e-12, maxiter=50):
    """Solve ``y(q, alpha) = 0`` for the actuated coordinates by damped Newton."""
    nb = m.base_dim
    act = list(out.actuated)
    q = np.zeros(m.n)
    q[:nb] = xi
    for _ in range(maxiter):
        yd, _ = out.desired(xi)
        r = q[act] - yd
        if np.abs(r).max() <= tol:
            return q
        Jy = output_jacobian(m, out, xi)
        step = np.linalg.solve(Jy[:, act], r)
        t = 1.0
        while t > 1e-4:
            trial = q.copy()
            trial[act] -= t * step
            if np.abs(trial[act] - yd).max() < np.abs(r).max():
                break
            t *= 0.5
        q = trial
    raise ConvergenceError("pinned configuration solve did not converge")


def pinned_zero_dynamics(m, out, xi, xid):
    """Base-row dynamics on the zero-dynamics manifold.

    Returns ``(D_Z, H_Z, J_Z, w_Z)`` such that
    ``D_Z xidd + H_Z = Jhat' F + lam`` and ``J_Z xidd + w_Z = 0``, where hats
    take the first ``base_dim`` rows and ``lam`` is the vertex's own coupling
    input.
    """
    xi = np.asarray(xi, dtype=float)
    xid = np.asarray(xid, dtype=float)
    nb = m.base_dim
    q = _pinned_configuration(m, out, xi)
    _, grad, curv = out.desired(xi, xid)
    Jz = np.vstack([np.eye(nb), grad])
    Jz_dot_xid = np.concatenate([np.zeros(nb), curv])
    qd = Jz @ xid
    D = np.asarray(m.D(q), dtype=float)
    H = np.asarray(m.H(q, qd), dtype=float)
    D_Z = D[:nb] @ Jz
    H_Z = D[:nb] @ Jz_dot_xid + H[:nb]
    if m.J_contact is None:
        return D_Z, H_Z, np.zeros((0, nb)), np.zeros(0)
    J = np.asarray(m.J_contact(q), dtype=float)
    Jd = np.asarray(m.Jdot_contact(q, qd), dtype=float)
    # d/dt (J Jz) xid, by the chain rule
    J_Z = J @ Jz
    w_Z = J @ Jz_dot_xid + Jd @ qd
    return D_Z, H_Z, J_Z, w_Z


def plastic_impact(m, q, qd_pre, J=None):
    """Post-impact velocity ``(I - D^-1 J' (J D^-1 J')^-1 J) qd_pre``."""
    q = np.asarray(q, dtype=float)
    qd_pre = np.asarray(qd_pre, dtype=float)
    if J is None:
        if m.J_contact is None:
            raise DimensionError("no impact Jacobian given and the model has no contacts")
        J = m.J_contact(q)
    J = np.atleast_2d(np.asarray(J, dtype=float))
    D = np.asarray(m.D(q), dtype=float)
    DiJt = solve_checked(D, J.T, what="mass matrix")
    impulse = solve_checked(J @ DiJt, J @ qd_pre, what="impact matrix J D^-1 J'")
    return qd_pre - DiJt @ impulse
