"""Coupling relation, zero-dynamics controller and the isolated subsystem.

Vertex ``j`` is held on its zero-dynamics manifold ``x_j = 0``. Solving the
invariance condition of ``x_j`` together with ``d/dt c_e = 0`` gives the
zero-dynamics input ``uZ_j`` and the coupling input ``lamZ_e``, both affine in
``u_i``. Substituting them leaves a control system in ``(x_i, z_i, z_j)`` alone.
"""
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from . import kernels
from .ccs import _as_vec, coupling_residual, coupling_velocity_residual, embed, other
from .errors import DimensionError, SingularityError
from .linalg import RCOND_MIN


def _split(z, i):
    j = other(i)
    return np.asarray(z[i], dtype=float), np.asarray(z[j], dtype=float)


def _blocks(model, i, x_i, z_i, z_j):
    j = other(i)
    si, sj = model.sub[i], model.sub[j]
    ti = si.terms(x_i, z_i, z_j)
    tj = sj.terms(np.zeros(sj.n_x), z_j, z_i)
    return ti, tj


def _qbreve(ti, tj):
    g, gb = tj["g"], tj["gb"]
    nx, nu = g.shape
    nz, nl = tj["qb"].shape
    Q = np.empty((nx + nz, nu + nl))
    Q[:nx, :nu] = g
    Q[:nx, nu:] = gb
    Q[nx:, :nu] = tj["q"]
    Q[nx:, nu:] = ti["qb"] + tj["qb"]
    return Q


def qbreve_matrix(model, i, x_i, z):
    """Block matrix ``[[g_j, gb_ebar], [q_j, qb_e + qb_ebar]]`` at ``x_j = 0``."""
    z_i, z_j = _split(z, i)
    x_i = _as_vec(x_i, model.sub[i].n_x, "x_i")
    ti, tj = _blocks(model, i, x_i, z_i, z_j)
    return _qbreve(ti, tj)


def _solve_point(model, i, ti, tj):
    """Affine coefficients ``(A_e, b_e, uZ_A, uZ_b)`` from one factorization.

    The block solve returns ``lam_ebar``; the kernel negates it into ``lam_e``.
    """
    A_e, b_e, uZ_A, uZ_b, rc, kept = kernels.coupling_point(
        tj["f"], tj["g"], tj["gb"], tj["p"], tj["q"], tj["qb"], ti["p"], ti["q"], ti["qb"], 1e-14)
    what = f"coupling matrix Qbreve (isolating vertex {i})"
    n = tj["g"].shape[1] + tj["gb"].shape[1]
    if kept != n:
        raise DimensionError(
            f"{what}: {kept} non-zero rows for {n} unknowns; the reduced system must be square"
        )
    if A_e is None or rc < RCOND_MIN:
        raise SingularityError(f"{what} is singular or ill-conditioned (rcond={rc:.3e})", rc)
    return A_e, b_e, uZ_A, uZ_b


def coupling_solve(model, i, x_i, z, u_i):
    """``(uZ_j, lamZ_e)`` rendering ``x_j = 0`` invariant with ``d/dt c_e = 0``."""
    z_i, z_j = _split(z, i)
    si = model.sub[i]
    x_i = _as_vec(x_i, si.n_x, "x_i")
    u_i = _as_vec(u_i, si.n_u, "u_i")
    ti, tj = _blocks(model, i, x_i, z_i, z_j)
    A_e, b_e, uZ_A, uZ_b = _solve_point(model, i, ti, tj)
    return uZ_A @ u_i + uZ_b, A_e @ u_i + b_e


@dataclass(frozen=True)
class RelationPoint:
    """Everything the isolated subsystem needs at one ``(x_i, z_i, z_j)``."""

    A_e: np.ndarray
    b_e: np.ndarray
    uZ_A: np.ndarray
    uZ_b: np.ndarray
    ti: dict
    tj: dict
    cache: dict = field(default_factory=dict, repr=False, compare=False)

    def lambda_e(self, u_i):
        return self.A_e @ u_i + self.b_e

    def uZ(self, u_i):
        return self.uZ_A @ u_i + self.uZ_b

    def base_maps(self):
        """Input-independent parts of the isolated maps, computed once per point."""
        base = self.cache.get("maps")
        if base is None:
            ti, tj = self.ti, self.tj
            base = {
                "fZ_i": ti["f"] + ti["gb"] @ self.b_e,
                "gZ_i": ti["g"] + ti["gb"] @ self.A_e,
                "pZ_i": ti["p"] + ti["qb"] @ self.b_e,
                "qZ_i": ti["q"] + ti["qb"] @ self.A_e,
                "pZ_j0": tj["p"] - tj["qb"] @ self.b_e,
                "qZ_j": -tj["qb"] @ self.A_e,
            }
            self.cache["maps"] = base
        return base


@dataclass(frozen=True)
class CouplingRelation:
    """``lamZ_e = A_e u_i + b_e`` and ``uZ_j = uZ_A u_i + uZ_b``, all maps of ``(x_i, z)``."""

    model: object
    isolated_vertex: int
    A_e: Callable
    b_e: Callable
    uZ_A: Callable
    uZ_b: Callable
    point: Callable | None = None

    def lambda_e(self, x_i, z, u_i):
        return self.A_e(x_i, z) @ np.asarray(u_i, dtype=float) + self.b_e(x_i, z)

    def uZ(self, x_i, z, u_i):
        return self.uZ_A(x_i, z) @ np.asarray(u_i, dtype=float) + self.uZ_b(x_i, z)


def relation_point(model, i, x_i, z_i, z_j):
    ti, tj = _blocks(model, i, x_i, z_i, z_j)
    A_e, b_e, uZ_A, uZ_b = _solve_point(model, i, ti, tj)
    return RelationPoint(A_e, b_e, uZ_A, uZ_b, ti, tj)


def build_relation(model, i):
    """Coupling relation for isolating vertex ``i``; evaluated lazily, pointwise."""

    def _pt(x_i, z):
        z_i, z_j = _split(z, i)
        x_i = _as_vec(x_i, model.sub[i].n_x, "x_i")
        return relation_point(model, i, x_i, z_i, z_j)

    return CouplingRelation(
        model=model,
        isolated_vertex=i,
        A_e=lambda x_i, z: _pt(x_i, z).A_e,
        b_e=lambda x_i, z: _pt(x_i, z).b_e,
        uZ_A=lambda x_i, z: _pt(x_i, z).uZ_A,
        uZ_b=lambda x_i, z: _pt(x_i, z).uZ_b,
        point=_pt,
    )


def zero_invariance_residual(relation, x_i, z, u_i, uZ_j=None):
    """``fZ_j + gZ_j u_i + g_j (uZ_j - u_i)`` at ``x_j = 0``.

    ``fZ_j = f_j - gb_ebar b_e`` and ``gZ_j = g_j - gb_ebar A_e``. When
    ``uZ_j`` is omitted the relation's own zero-dynamics input is used.
    """
    model = relation.model
    i = relation.isolated_vertex
    j = other(i)
    si, sj = model.sub[i], model.sub[j]
    if si.n_u != sj.n_u:
        raise DimensionError("the invariance residual needs equal input dimensions")
    z_i, z_j = _split(z, i)
    u_i = _as_vec(u_i, si.n_u, "u_i")
    x0 = np.zeros(sj.n_x)
    f_j = sj.eval_f(x0, z_j)
    g_j = sj.eval_g(x0, z_j)
    gb = sj.eval_g_breve(x0, z_j, z_i)
    if relation.point is not None:
        pt = relation.point(x_i, z)
        A_e, b_e = pt.A_e, pt.b_e
        uZ = pt.uZ(u_i)
    else:
        A_e, b_e = relation.A_e(x_i, z), relation.b_e(x_i, z)
        uZ = relation.uZ(x_i, z, u_i)
    fZ = f_j - gb @ b_e
    gZ = g_j - gb @ A_e
    if uZ_j is None:
        uZ_j = uZ
    return fZ + gZ @ u_i + g_j @ (np.asarray(uZ_j, dtype=float) - u_i)


class IsolatedModel:
    """Control subsystem of vertex ``i`` with ``j`` on its zero dynamics.

    State ``(x_i, z_i, z_j)``, input ``u_i``.
    """

    def __init__(self, base, i=1):
        self.base = base
        self.i = i
        self.j = other(i)
        self.relation = build_relation(base, i)
        si = base.sub[i]
        self.n_x = si.n_x
        self.n_z = base.n_z
        self.n_u = si.n_u
        self.n_uZ = base.sub[self.j].n_u
        self.n_lambda = base.n_lambda
        self.n_state = self.n_x + 2 * self.n_z
        # memoizes repeated evaluations at the same state (controller, then field)
        self._point = lru_cache(maxsize=32)(self._point_uncached)

    def split(self, chi):
        chi = np.asarray(chi, dtype=float)
        nx, nz = self.n_x, self.n_z
        return chi[:nx], chi[nx:nx + nz], chi[nx + nz:]

    def zdict(self, z_i, z_j):
        return {self.i: z_i, self.j: z_j}

    def _point_uncached(self, key):
        n, nz = self.n_x, self.n_z
        v = np.frombuffer(key)
        return relation_point(self.base, self.i, v[:n], v[n:n + nz], v[n + nz:])

    def point(self, x_i, z_i, z_j):
        key = np.concatenate([
            _as_vec(x_i, self.n_x, "x_i"), _as_vec(z_i, self.n_z, "z_i"),
            _as_vec(z_j, self.n_z, "z_j"),
        ])
        return self._point(key.tobytes())

    def maps(self, x_i, z_i, z_j, u_i=None, pt=None, uZ_j=None):
        """``fZ_i, gZ_i, pZ_i, qZ_i, pZ_j, qZ_j``.

        ``pZ_j`` contains ``q_j uZ_j`` and so depends on ``u_i``; without
        ``u_i`` it is evaluated with the bias ``uZ_b`` and ``qZ_j`` absorbs
        ``q_j uZ_A`` so the returned pair is still an exact affine split.
        An explicit ``uZ_j`` (a collocation decision variable) overrides the
        relation's value inside ``pZ_j``.
        """
        if pt is None:
            pt = self.point(x_i, z_i, z_j)
        tj = pt.tj
        base = pt.base_maps()
        out = {k: base[k] for k in ("fZ_i", "gZ_i", "pZ_i", "qZ_i")}
        if uZ_j is not None:
            out["pZ_j"] = base["pZ_j0"] + tj["q"] @ np.asarray(uZ_j, dtype=float)
            out["qZ_j"] = base["qZ_j"]
        elif u_i is None:
            out["pZ_j"] = base["pZ_j0"] + tj["q"] @ pt.uZ_b
            out["qZ_j"] = base["qZ_j"] + tj["q"] @ pt.uZ_A
        else:
            out["pZ_j"] = base["pZ_j0"] + tj["q"] @ pt.uZ(u_i)
            out["qZ_j"] = base["qZ_j"]
        return out

    def rhs(self, chi, u_i):
        """Packed form of :func:`isolated_rhs`."""
        x_i, z_i, z_j = self.split(chi)
        return np.concatenate(isolated_rhs(self, x_i, z_i, z_j, u_i))


def isolated_rhs(iso, x_i, z_i, z_j, u_i, pt=None):
    """``(xdot_i, zdot_i, zdot_j)`` of the isolated subsystem."""
    u_i = _as_vec(u_i, iso.n_u, "u_i")
    if pt is None:
        pt = iso.point(x_i, z_i, z_j)
    m = pt.base_maps()
    return (
        m["fZ_i"] + m["gZ_i"] @ u_i,
        m["pZ_i"] + m["qZ_i"] @ u_i,
        m["pZ_j0"] + m["qZ_j"] @ u_i + pt.tj["q"] @ pt.uZ(u_i),
    )


def manifold_residuals(iso, x_i, z_i, z_j, u_i):
    """``(c_e, d/dt c_e)`` at the embedded state under relation-derived inputs."""
    z = iso.zdict(np.asarray(z_i, dtype=float), np.asarray(z_j, dtype=float))
    u_i = _as_vec(u_i, iso.n_u, "u_i")
    pt = iso.point(x_i, z[iso.i], z[iso.j])
    x, z = embed(x_i, z, iso.i, iso.base)
    u = {iso.i: u_i, iso.j: pt.uZ(u_i)}
    lam_e = pt.lambda_e(u_i)
    # coupling_velocity_residual is written for edge (i, j)
    cdot = coupling_velocity_residual(iso.base, x, z, u, lam_e, i=iso.i)
    return coupling_residual(z[iso.i], z[iso.j]), cdot
