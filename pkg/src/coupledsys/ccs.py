"""Two-subsystem coupled control systems.

A coupled control system (CCS) has two vertices ``1`` and ``2``. Vertex ``i``
owns an internal state ``x_i``, a coupled state ``z_i`` and an input ``u_i``::

    xdot_i = f_i(x_i, z_i) + g_i(x_i, z_i) u_i + gb_e(x_i, z_i, z_j) lam_e
    zdot_i = p_i(x_i, z_i) + q_i(x_i, z_i) u_i + qb_e(x_i, z_i, z_j) lam_e

subject to ``c_e = z_i - z_j = 0`` and ``lam_e = -lam_ebar``. Vertex ``i``
always receives the coupling input of the edge ``e = (i, j)``.
"""
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DimensionError

VERTICES = (1, 2)


def other(i):
    if i not in VERTICES:
        raise ValueError(f"vertex must be 1 or 2, got {i!r}")
    return 3 - i


@dataclass(frozen=True)
class CouplingGraph:
    """The bidirectional two-vertex graph; ``e = (1, 2)``, ``ebar = (2, 1)``."""

    vertices: tuple = VERTICES
    edges: tuple = ((1, 2), (2, 1))

    def __post_init__(self):
        if tuple(self.vertices) != VERTICES or len(self.edges) != 2:
            raise ValueError("a coupling graph has exactly the vertices (1, 2)")
        e, ebar = self.edges
        if tuple(ebar) != tuple(reversed(e)):
            raise ValueError("the second edge must reverse the first")

    def edge(self, i):
        """Edge leaving vertex ``i``."""
        return (i, other(i))


@dataclass(frozen=True)
class Box:
    """Axis-aligned admissible set."""

    lower: np.ndarray
    upper: np.ndarray

    @classmethod
    def unbounded(cls, n):
        return cls(np.full(n, -np.inf), np.full(n, np.inf))

    def contains(self, v):
        v = np.asarray(v)
        return bool(np.all(v >= self.lower) and np.all(v <= self.upper))


def _as_vec(v, n, name):
    if type(v) is np.ndarray and v.dtype == np.float64 and v.shape == (n,):
        return v
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape[0] != n:
        raise DimensionError(f"{name} has length {v.shape[0]}, expected {n}")
    return v


def _check(out, shape, name):
    out = np.asarray(out, dtype=float)
    if out.shape != shape:
        if out.size == int(np.prod(shape)) and len(shape) == 1:
            return out.reshape(shape)
        raise DimensionError(f"map {name} returned shape {out.shape}, expected {shape}")
    return out


@dataclass(frozen=True)
class SubsystemModel:
    """Dynamics maps of one vertex.

    ``normal_form`` marks an internal state laid out as ``(y, ydot)``; the
    first half of the ``x`` rows is then purely kinematic. ``terms_fn``, when
    given, returns all six maps at once as ``(f, g, gb, p, q, qb)`` and
    replaces six separate evaluations in :meth:`terms`.
    """

    n_x: int
    n_z: int
    n_u: int
    f: Callable
    g: Callable
    p: Callable
    q: Callable
    g_breve: Callable
    q_breve: Callable
    n_lam: int | None = None
    normal_form: bool = False
    name: str = ""
    terms_fn: Callable | None = None

    @property
    def n_lambda(self):
        return self.n_z if self.n_lam is None else self.n_lam

    def eval_f(self, x, z):
        return _check(self.f(x, z), (self.n_x,), f"{self.name}.f")

    def eval_g(self, x, z):
        return _check(self.g(x, z), (self.n_x, self.n_u), f"{self.name}.g")

    def eval_p(self, x, z):
        return _check(self.p(x, z), (self.n_z,), f"{self.name}.p")

    def eval_q(self, x, z):
        return _check(self.q(x, z), (self.n_z, self.n_u), f"{self.name}.q")

    def eval_g_breve(self, x, zi, zj):
        return _check(self.g_breve(x, zi, zj), (self.n_x, self.n_lambda), f"{self.name}.g_breve")

    def eval_q_breve(self, x, zi, zj):
        return _check(self.q_breve(x, zi, zj), (self.n_z, self.n_lambda), f"{self.name}.q_breve")

    def terms(self, x, zi, zj):
        """All six maps at one point, as a dict."""
        if self.terms_fn is not None:
            f, g, gb, p, q, qb = self.terms_fn(x, zi, zj)
            return {"f": f, "g": g, "p": p, "q": q, "gb": gb, "qb": qb}
        return {
            "f": self.eval_f(x, zi),
            "g": self.eval_g(x, zi),
            "p": self.eval_p(x, zi),
            "q": self.eval_q(x, zi),
            "gb": self.eval_g_breve(x, zi, zj),
            "qb": self.eval_q_breve(x, zi, zj),
        }


@dataclass(frozen=True)
class CcsModel:
    sub: dict
    graph: CouplingGraph = field(default_factory=CouplingGraph)
    x_box: dict | None = None
    z_box: dict | None = None
    u_box: dict | None = None
    name: str = ""

    def __post_init__(self):
        if set(self.sub) != set(VERTICES):
            raise ValueError("sub must map both vertices 1 and 2")
        s1, s2 = self.sub[1], self.sub[2]
        if s1.n_z != s2.n_z:
            raise DimensionError(f"coupled-state dimensions differ: {s1.n_z} vs {s2.n_z}")
        if s1.n_lambda != s2.n_lambda:
            raise DimensionError("coupling-input dimensions differ between vertices")
        if s1.n_lambda > s1.n_z:
            raise DimensionError("coupling input cannot exceed the coupled-state dimension")
        for attr, dim in (("x_box", "n_x"), ("z_box", "n_z"), ("u_box", "n_u")):
            boxes = getattr(self, attr)
            if boxes is None:
                boxes = {v: Box.unbounded(getattr(self.sub[v], dim)) for v in VERTICES}
                object.__setattr__(self, attr, boxes)

    @property
    def n_z(self):
        return self.sub[1].n_z

    @property
    def n_lambda(self):
        return self.sub[1].n_lambda

    def state_size(self):
        return sum(self.sub[v].n_x + self.sub[v].n_z for v in VERTICES)

    def pack(self, x, z):
        """Flatten ``{x_1, z_1, x_2, z_2}`` into one vector."""
        return np.concatenate([
            _as_vec(x[1], self.sub[1].n_x, "x_1"), _as_vec(z[1], self.n_z, "z_1"),
            _as_vec(x[2], self.sub[2].n_x, "x_2"), _as_vec(z[2], self.n_z, "z_2"),
        ])

    def unpack(self, s):
        s = np.asarray(s, dtype=float)
        n1, n2, nz = self.sub[1].n_x, self.sub[2].n_x, self.n_z
        x = {1: s[:n1], 2: s[n1 + nz:n1 + nz + n2]}
        z = {1: s[n1:n1 + nz], 2: s[n1 + nz + n2:]}
        return x, z


@dataclass(frozen=True)
class CcsState:
    x: dict
    z: dict
    lam: dict = field(default_factory=dict)

    def __post_init__(self):
        e, ebar = (1, 2), (2, 1)
        if e in self.lam and ebar in self.lam:
            if not np.array_equal(np.asarray(self.lam[e]), -np.asarray(self.lam[ebar])):
                raise ValueError("coupling inputs must satisfy lam_e = -lam_ebar")


def eval_rhs(model, vertex, x_i, z_i, z_j, u_i, lambda_e):
    """``(xdot_i, zdot_i)`` of one vertex with its edge's coupling input."""
    s = model.sub[vertex]
    x_i = _as_vec(x_i, s.n_x, "x_i")
    z_i = _as_vec(z_i, s.n_z, "z_i")
    z_j = _as_vec(z_j, s.n_z, "z_j")
    u_i = _as_vec(u_i, s.n_u, "u_i")
    lam = _as_vec(lambda_e, s.n_lambda, "lambda_e")
    t = s.terms(x_i, z_i, z_j)
    xdot = t["f"] + t["g"] @ u_i + t["gb"] @ lam
    zdot = t["p"] + t["q"] @ u_i + t["qb"] @ lam
    return xdot, zdot


def coupling_residual(z_i, z_j):
    """``c_e(z_i, z_j) = z_i - z_j``."""
    z_i = np.asarray(z_i, dtype=float)
    z_j = np.asarray(z_j, dtype=float)
    if z_i.shape != z_j.shape:
        raise DimensionError(f"coupled states differ in shape: {z_i.shape} vs {z_j.shape}")
    return z_i - z_j


def coupling_velocity_residual(model, x, z, u, lambda_e, i=1):
    """Time derivative of ``c_e`` for ``e = (i, j)``, using ``lam_ebar = -lam_e``."""
    j = other(i)
    lam = _as_vec(lambda_e, model.n_lambda, "lambda_e")
    _, zdot_i = eval_rhs(model, i, x[i], z[i], z[j], u[i], lam)
    _, zdot_j = eval_rhs(model, j, x[j], z[j], z[i], u[j], -lam)
    # c = z_i - z_j: dc/dz_i = I, dc/dz_j = -I
    return zdot_i - zdot_j


def embed(x_i, z, which, model=None, n_x_other=None):
    """Canonical embedding: the other vertex's internal state is set to zero."""
    if n_x_other is None:
        if model is None:
            raise ValueError("embed needs the model or the other vertex's n_x")
        n_x_other = model.sub[other(which)].n_x
    x = {which: np.array(x_i, dtype=float), other(which): np.zeros(n_x_other)}
    return x, {1: np.array(z[1], dtype=float), 2: np.array(z[2], dtype=float)}


def project(x, z, which):
    """Inverse of :func:`embed` on its image."""
    return np.array(x[which], dtype=float), {1: np.array(z[1]), 2: np.array(z[2])}


def closed_loop_rhs(model, controllers, lambda_solver):
    """Vector field of the coupled dynamical system on packed states.

    ``controllers[v]`` maps ``(x_v, z)`` to ``u_v``; a controller with
    ``lambda_aware = True`` is called as ``(x_v, z, lam_v)``.
    ``lambda_solver(x, z)`` returns ``lam_e`` for ``e = (1, 2)``.
    """

    def rhs(s):
        x, z = model.unpack(s)
        lam_e = np.asarray(lambda_solver(x, z), dtype=float).reshape(-1)
        lam = {1: lam_e, 2: -lam_e}
        out = {}
        for v in VERTICES:
            ctrl = controllers[v]
            if getattr(ctrl, "lambda_aware", False):
                u = ctrl(x[v], z, lam[v])
            else:
                u = ctrl(x[v], z)
            out[v] = eval_rhs(model, v, x[v], z[v], z[other(v)], u, lam[v])
        return np.concatenate([out[1][0], out[1][1], out[2][0], out[2][1]])

    return rhs
