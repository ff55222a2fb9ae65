"""Direct-collocation transcription of the isolated subsystem.

Every node carries ``(x_i, xdot_i, z_i, zdot_i, z_j, zdot_j, u_i, uZ_j)``.
Equality blocks, in residual order:

``zero``      invariance of ``x_j = 0`` under ``uZ_j``          (per node)
``dyn``       derivative variables equal the isolated field      (per node)
``colloc``    Hermite-Simpson defect at each interval center     (per interval)
``periodic``  reset of the last node equals the first, plus anchors
``contract``  optional ``xdot_i + eps x_i = 0``                  (per node)

Jacobians are central finite differences evaluated block by block; the
collocation block differences only the field at the center and applies the
chain rule through the Hermite formulas.
"""
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .. import kernels
from ..ccs import Box
from ..errors import DimensionError
from ..mechanical import configuration, normal_coordinates, plastic_impact
from ..reduction import IsolatedModel, isolated_rhs
from ..simulate import (
    IntegratorConfig, Trajectory, interpolated_inputs, periodicity_residual,
    reconstruct_full, simulate_isolated,
)

FD_STEP = 1e-6


@dataclass(frozen=True)
class Grid:
    K: int
    T: float

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 2:
            raise ValueError(f"K must be an integer >= 2, got {self.K}")
        if not self.T > 0:
            raise ValueError(f"period T must be positive, got {self.T}")

    @property
    def h(self):
        return self.T / self.K

    @property
    def times(self):
        return self.T * np.arange(self.K + 1) / self.K


class DecisionLayout:
    """Flat packing of the per-node records, optionally followed by ``T``."""

    def __init__(self, iso: IsolatedModel, K, free_T=False):
        nx, nz, nu, nuz = iso.n_x, iso.n_z, iso.n_u, iso.n_uZ
        self.fields = (("x", nx), ("xd", nx), ("zi", nz), ("zid", nz),
                       ("zj", nz), ("zjd", nz), ("u", nu), ("uZ", nuz))
        self.offsets = {}
        off = 0
        for name, size in self.fields:
            self.offsets[name] = slice(off, off + size)
            off += size
        self.node_size = off
        self.K = K
        self.n_nodes = K + 1
        self.free_T = free_T
        self.size = self.n_nodes * self.node_size + (1 if free_T else 0)
        self.n_chi = nx + 2 * nz

    def node_slice(self, k):
        return slice(k * self.node_size, (k + 1) * self.node_size)

    def index(self, k, name):
        s = self.offsets[name]
        base = k * self.node_size
        return np.arange(base + s.start, base + s.stop)

    def node(self, X, k):
        v = X[self.node_slice(k)]
        return {name: v[self.offsets[name]] for name, _ in self.fields}

    def unpack(self, X):
        X = np.asarray(X, dtype=float)
        if X.shape != (self.size,):
            raise DimensionError(f"decision vector has shape {X.shape}, expected ({self.size},)")
        nodes = [self.node(X, k) for k in range(self.n_nodes)]
        return nodes, (float(X[-1]) if self.free_T else None)

    def pack(self, nodes, T=None):
        if len(nodes) != self.n_nodes:
            raise DimensionError(f"{len(nodes)} node records for {self.n_nodes} nodes")
        X = np.empty(self.size)
        for k, rec in enumerate(nodes):
            v = X[self.node_slice(k)]
            for name, size in self.fields:
                v[self.offsets[name]] = np.broadcast_to(np.asarray(rec[name], dtype=float), (size,))
        if self.free_T:
            if T is None:
                raise ValueError("layout has a free period; pass T")
            X[-1] = T
        return X

    @staticmethod
    def chi(node):
        return np.concatenate([node["x"], node["zi"], node["zj"]])

    @staticmethod
    def chid(node):
        return np.concatenate([node["xd"], node["zid"], node["zjd"]])


# -- constraint blocks ---------------------------------------------------------------

def c1_zero(iso, node):
    """``fZ_j + gZ_j u_i + g_j (uZ_j - u_i)`` at ``x_j = 0``."""
    if iso.n_u != iso.n_uZ:
        raise DimensionError("the invariance residual needs equal input dimensions")
    pt = iso.point(node["x"], node["zi"], node["zj"])
    tj = pt.tj
    u = node["u"]
    fZ = tj["f"] - tj["gb"] @ pt.b_e
    gZ = tj["g"] - tj["gb"] @ pt.A_e
    return fZ + gZ @ u + tj["g"] @ (node["uZ"] - u)


def _field(iso, chi, u, uZ=None):
    x, zi, zj = iso.split(chi)
    pt = iso.point(x, zi, zj)
    m = iso.maps(x, zi, zj, u_i=u, pt=pt, uZ_j=uZ)
    return np.concatenate([m["fZ_i"] + m["gZ_i"] @ u, m["pZ_i"] + m["qZ_i"] @ u,
                           m["pZ_j"] + m["qZ_j"] @ u])


def c2_dyn(iso, node):
    """Derivative variables minus the isolated field, with ``uZ_j`` taken from the node."""
    return DecisionLayout.chid(node) - _field(iso, DecisionLayout.chi(node), node["u"], node["uZ"])


def hermite_center(chi0, chid0, chi1, chid1, h):
    """Value and slope of the cubic Hermite interpolant at the interval midpoint."""
    if not h > 0:
        raise ValueError("h must be positive")
    return kernels.hermite_midpoint(chi0, chid0, chi1, chid1, h)


def c3_colloc(iso, node0, node1, h):
    """Center defect ``chid_c - F(chi_c, u_i^k)``; the input is held at the left node."""
    chic, chidc = hermite_center(DecisionLayout.chi(node0), DecisionLayout.chid(node0),
                                 DecisionLayout.chi(node1), DecisionLayout.chid(node1), h)
    return chidc - _field(iso, chic, node0["u"])


def c6_periodic(iso, first, last, reset=None, anchors=()):
    """``reset(chi^K) - chi^0`` on ``(x_i, z_i)``, ``z_j^0 = z_i^0`` and anchor rows.

    ``anchors`` holds ``(field, index, value)`` triples pinning ``first[field][index]``.
    """
    chiK = DecisionLayout.chi(last)
    if reset is not None:
        chiK = np.asarray(reset(chiK), dtype=float)
    nx, nz = iso.n_x, iso.n_z
    rows = [chiK[:nx] - first["x"], chiK[nx:nx + nz] - first["zi"], first["zj"] - first["zi"]]
    rows += [np.array([first[f][i] - v]) for f, i, v in anchors]
    return np.concatenate(rows)


# -- path constraints (values >= 0) ----------------------------------------------

@dataclass(frozen=True)
class PathConstraint:
    """Per-node inequality ``fn(iso, node) >= 0``."""

    name: str
    fn: Callable
    size: int

    def __call__(self, iso, node):
        return np.asarray(self.fn(iso, node), dtype=float).reshape(self.size)


def clearance(field_name, index, minimum, name="clearance"):
    """``node[field][index] - minimum``, e.g. a foot height above a floor."""
    return PathConstraint(name, lambda iso, nd: [nd[field_name][index] - minimum], 1)


def amplitude_bound(field_name, index, bound, name="amplitude"):
    return PathConstraint(name, lambda iso, nd: [bound - abs(nd[field_name][index])], 1)


def friction_cone(mu, normal, tangential, name="friction_cone"):
    """``mu F_n - |F_t|`` with force maps ``normal(iso, node)`` and ``tangential(iso, node)``."""
    return PathConstraint(
        name, lambda iso, nd: [mu * normal(iso, nd) - abs(tangential(iso, nd))], 1)


def lambda_ceiling(limit, n_lambda, name="lambda_ceiling"):
    """``limit - |lam_e|`` componentwise, with ``lam_e`` from the coupling relation."""

    def fn(iso, nd):
        pt = iso.point(nd["x"], nd["zi"], nd["zj"])
        return limit - np.abs(pt.lambda_e(nd["u"]))

    return PathConstraint(name, fn, n_lambda)


def c5_path(iso, node, constraints):
    if not constraints:
        return np.zeros(0)
    return np.concatenate([c(iso, node) for c in constraints])


# -- cost ------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadraticCost:
    """``sum_k w_k X_k^2`` over selected entries; exact gradient and Hessian."""

    index: np.ndarray
    weight: np.ndarray
    size: int
    name: str = "quadratic"

    def __call__(self, X):
        v = X[self.index]
        return float(np.sum(self.weight * v * v))

    def grad(self, X):
        g = np.zeros(self.size)
        np.add.at(g, self.index, 2.0 * self.weight * X[self.index])
        return g

    def hess(self, X):
        H = np.zeros((self.size, self.size))
        np.add.at(H, (self.index, self.index), 2.0 * self.weight)
        return H


def default_cost(layout, grid, kind="effort"):
    """``sum_k ||u_i^k||^2 h`` (``effort``) or ``sum_k ||zdot_i^k velocity rows||^2 h`` (``base_accel``).

    With a free period ``h`` is taken from the grid's nominal ``T``.
    """
    idx = []
    for k in range(layout.n_nodes):
        if kind == "effort":
            idx.append(layout.index(k, "u"))
        elif kind == "base_accel":
            rows = layout.index(k, "zid")
            idx.append(rows[len(rows) // 2:])
        else:
            raise ValueError(f"unknown cost {kind!r}; use 'effort' or 'base_accel'")
    index = np.concatenate(idx)
    return QuadraticCost(index, np.full(index.shape, grid.h), layout.size, name=kind)


# -- reset maps ------------------------------------------------------------------

def identity_reset(chi):
    return np.array(chi, dtype=float)


def impact_reset(m, out, iso, J_impact=None, relabel=None):
    """Reset through a plastic impact of vertex ``i``'s Lagrangian model.

    ``J_impact(q)`` defaults to the model's contact Jacobian; ``relabel`` may
    map the post-impact configuration (e.g. a coordinate swap).
    """
    nx, nz = iso.n_x, iso.n_z

    def reset(chi):
        q, qd = configuration(m, out, chi[:nx], chi[nx:nx + nz])
        J = None if J_impact is None else J_impact(q)
        qd_post = plastic_impact(m, q, qd, J)
        if relabel is not None:
            q, qd_post = relabel(q, qd_post)
        x, z = normal_coordinates(m, out, q, qd_post)
        return np.concatenate([x, z, z])

    return reset


# -- the NLP ---------------------------------------------------------------------

@dataclass
class NlpProblem:
    """``min cost(X)`` s.t. ``eq(X) = 0``, ``ineq(X) >= 0``, ``lb <= X <= ub``.

    Missing derivative maps are replaced by central differences with step
    ``fd_step`` in the solver.
    """

    n: int
    cost: Callable
    eq: Callable
    ineq: Callable | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None
    cost_grad: Callable | None = None
    cost_hess: Callable | None = None
    eq_jac: Callable | None = None
    ineq_jac: Callable | None = None
    x0: np.ndarray | None = None
    fd_step: float = FD_STEP
    blocks: dict = field(default_factory=dict)
    context: dict = field(default_factory=dict)

    def __post_init__(self):
        self.lb = np.full(self.n, -np.inf) if self.lb is None else np.asarray(self.lb, float)
        self.ub = np.full(self.n, np.inf) if self.ub is None else np.asarray(self.ub, float)
        if self.lb.shape != (self.n,) or self.ub.shape != (self.n,):
            raise DimensionError("bounds must match the decision length")
        if self.x0 is not None and np.asarray(self.x0).shape != (self.n,):
            raise DimensionError("initial guess must match the decision length")

    def bound_violations(self, X):
        """``(index, value, lower, upper)`` for every bound the point violates."""
        X = np.asarray(X, dtype=float)
        bad = np.flatnonzero((X < self.lb) | (X > self.ub))
        return [(int(k), float(X[k]), float(self.lb[k]), float(self.ub[k])) for k in bad]


def central_jacobian(fun, x, step=FD_STEP, cols=None):
    """Central-difference Jacobian of ``fun`` at ``x`` over the columns ``cols``."""
    x = np.asarray(x, dtype=float)
    cols = range(x.shape[0]) if cols is None else cols
    cols = list(cols)
    f0 = np.asarray(fun(x), dtype=float)
    J = np.zeros((f0.shape[0], len(cols)))
    for c, k in enumerate(cols):
        xp = x.copy()
        xm = x.copy()
        xp[k] += step
        xm[k] -= step
        J[:, c] = (np.asarray(fun(xp)) - np.asarray(fun(xm))) / (2.0 * step)
    return J


class Transcription:
    """Residual maps and block Jacobians of the collocation NLP."""

    def __init__(self, iso, grid, layout, reset=None, anchors=(), path=(),
                 eps_contraction=None, fd_step=FD_STEP):
        self.iso = iso
        self.grid = grid
        self.layout = layout
        self.reset = reset
        self.anchors = tuple(anchors)
        self.path = tuple(path)
        self.eps = eps_contraction
        self.fd_step = fd_step
        nx, nz = iso.n_x, iso.n_z
        self.n_c1 = iso.base.sub[iso.j].n_x
        self.n_c2 = layout.n_chi
        self.n_c3 = layout.n_chi
        self.n_c6 = nx + 2 * nz + len(self.anchors)
        self.n_con = nx if eps_contraction is not None else 0
        K = grid.K
        self.blocks = {}
        off = 0
        for name, count in (("zero", (K + 1) * self.n_c1), ("dyn", (K + 1) * self.n_c2),
                            ("colloc", K * self.n_c3), ("periodic", self.n_c6),
                            ("contract", (K + 1) * self.n_con)):
            self.blocks[name] = slice(off, off + count)
            off += count
        self.n_eq = off
        self.n_path = sum(c.size for c in self.path)
        self.n_ineq = (K + 1) * self.n_path

    # layout helpers
    def _h(self, X):
        return (X[-1] / self.grid.K) if self.layout.free_T else self.grid.h

    def _nodes(self, X):
        return self.layout.unpack(X)[0]

    # residuals
    def eq(self, X):
        X = np.asarray(X, dtype=float)
        nodes = self._nodes(X)
        h = self._h(X)
        K = self.grid.K
        out = np.empty(self.n_eq)
        b = self.blocks
        out[b["zero"]] = np.concatenate([c1_zero(self.iso, nd) for nd in nodes])
        out[b["dyn"]] = np.concatenate([c2_dyn(self.iso, nd) for nd in nodes])
        out[b["colloc"]] = np.concatenate(
            [c3_colloc(self.iso, nodes[k], nodes[k + 1], h) for k in range(K)])
        out[b["periodic"]] = c6_periodic(self.iso, nodes[0], nodes[-1], self.reset, self.anchors)
        if self.n_con:
            out[b["contract"]] = np.concatenate([nd["xd"] + self.eps * nd["x"] for nd in nodes])
        return out

    def ineq(self, X):
        nodes = self._nodes(np.asarray(X, dtype=float))
        if not self.path:
            return np.zeros(0)
        return np.concatenate([c5_path(self.iso, nd, self.path) for nd in nodes])

    # block Jacobians
    def _node_fun(self, fun, X, k):
        """``fun(node)`` as a function of node ``k``'s flat variables."""
        lay = self.layout
        sl = lay.node_slice(k)
        base = np.asarray(X, dtype=float)

        def f(v):
            Y = base.copy()
            Y[sl] = v
            return fun(lay.node(Y, k))

        return f, base[sl].copy(), sl

    def eq_jac(self, X):
        X = np.asarray(X, dtype=float)
        lay, K, step = self.layout, self.grid.K, self.fd_step
        iso = self.iso
        J = np.zeros((self.n_eq, lay.size))
        nodes = self._nodes(X)
        b = self.blocks
        # derivative variables enter c2 with unit coefficient; the rest by differences
        deriv = np.concatenate([np.arange(lay.offsets[n].start, lay.offsets[n].stop)
                                for n in ("xd", "zid", "zjd")])
        nonlin = np.setdiff1d(np.arange(lay.node_size), deriv)
        for k in range(K + 1):
            sl = lay.node_slice(k)
            f1, v, _ = self._node_fun(lambda nd: c1_zero(iso, nd), X, k)
            r1 = slice(b["zero"].start + k * self.n_c1, b["zero"].start + (k + 1) * self.n_c1)
            J[r1, sl.start + nonlin] = central_jacobian(f1, v, step, nonlin)
            f2, v, _ = self._node_fun(lambda nd: c2_dyn(iso, nd), X, k)
            r2 = slice(b["dyn"].start + k * self.n_c2, b["dyn"].start + (k + 1) * self.n_c2)
            J[r2, sl.start + nonlin] = central_jacobian(f2, v, step, nonlin)
            J[r2, sl.start + deriv] = np.eye(len(deriv))
        self._colloc_jac(X, nodes, J)
        self._periodic_jac(X, J)
        if self.n_con:
            for k in range(K + 1):
                rows = slice(b["contract"].start + k * self.n_con,
                             b["contract"].start + (k + 1) * self.n_con)
                J[rows, lay.index(k, "xd")] = np.eye(self.n_con)
                J[rows, lay.index(k, "x")] = self.eps * np.eye(self.n_con)
        return J

    def _colloc_jac(self, X, nodes, J):
        lay, K, step, iso = self.layout, self.grid.K, self.fd_step, self.iso
        h = self._h(X)
        n = lay.n_chi
        I = np.eye(n)
        start = self.blocks["colloc"].start
        chi_names = ("x", "zi", "zj")
        chid_names = ("xd", "zid", "zjd")
        for k in range(K):
            n0, n1 = nodes[k], nodes[k + 1]
            chic, _ = hermite_center(lay.chi(n0), lay.chid(n0), lay.chi(n1), lay.chid(n1), h)
            w = np.concatenate([chic, n0["u"]])
            JF = central_jacobian(lambda v: _field(iso, v[:n], v[n:]), w, step)
            JFx, JFu = JF[:, :n], JF[:, n:]
            rows = slice(start + k * n, start + (k + 1) * n)
            idx0 = np.concatenate([lay.index(k, nm) for nm in chi_names])
            idx1 = np.concatenate([lay.index(k + 1, nm) for nm in chi_names])
            idd0 = np.concatenate([lay.index(k, nm) for nm in chid_names])
            idd1 = np.concatenate([lay.index(k + 1, nm) for nm in chid_names])
            J[rows, idx0] = -1.5 / h * I - 0.5 * JFx
            J[rows, idx1] = 1.5 / h * I - 0.5 * JFx
            J[rows, idd0] = -0.25 * I - (h / 8.0) * JFx
            J[rows, idd1] = -0.25 * I + (h / 8.0) * JFx
            J[rows, lay.index(k, "u")] = -JFu
            if lay.free_T:
                def fT(TT, k=k):
                    return c3_colloc(iso, n0, n1, TT[0] / K)

                J[rows, -1] = central_jacobian(fT, X[-1:], step)[:, 0]

    def _periodic_jac(self, X, J):
        lay = self.layout
        rows = self.blocks["periodic"]
        for k in (0, lay.K):
            f, v, sl = self._node_fun(lambda nd, k=k: self._periodic_of(X, k, nd), X, k)
            J[rows, sl] = central_jacobian(f, v, self.fd_step)

    def _periodic_of(self, X, k, nd):
        nodes = self._nodes(X)
        nodes[k] = nd
        return c6_periodic(self.iso, nodes[0], nodes[-1], self.reset, self.anchors)

    def ineq_jac(self, X):
        X = np.asarray(X, dtype=float)
        lay = self.layout
        J = np.zeros((self.n_ineq, lay.size))
        if not self.path:
            return J
        for k in range(lay.n_nodes):
            f, v, sl = self._node_fun(lambda nd: c5_path(self.iso, nd, self.path), X, k)
            J[k * self.n_path:(k + 1) * self.n_path, sl] = central_jacobian(f, v, self.fd_step)
        return J


def _box_or_unbounded(boxes, v, n):
    if boxes is None or v not in boxes:
        return Box.unbounded(n)
    return boxes[v]


def decision_bounds(iso, layout, bounds=None):
    """Per-variable bounds from the model's admissible boxes, overridden by ``bounds``.

    ``bounds`` maps a node field name to ``(lower, upper)`` arrays.
    """
    base = iso.base
    i, j = iso.i, iso.j
    per_field = {
        "x": _box_or_unbounded(base.x_box, i, iso.n_x),
        "zi": _box_or_unbounded(base.z_box, i, iso.n_z),
        "zj": _box_or_unbounded(base.z_box, j, iso.n_z),
        "u": _box_or_unbounded(base.u_box, i, iso.n_u),
        "uZ": _box_or_unbounded(base.u_box, j, iso.n_uZ),
    }
    for name, (lo, hi) in (bounds or {}).items():
        if name not in layout.offsets:
            raise KeyError(f"unknown bound field {name!r}")
        size = layout.offsets[name].stop - layout.offsets[name].start
        per_field[name] = Box(np.broadcast_to(np.asarray(lo, float), (size,)).copy(),
                              np.broadcast_to(np.asarray(hi, float), (size,)).copy())
    lb = np.full(layout.size, -np.inf)
    ub = np.full(layout.size, np.inf)
    for k in range(layout.n_nodes):
        for name, box in per_field.items():
            idx = layout.index(k, name)
            lb[idx] = box.lower
            ub[idx] = box.upper
    return lb, ub


def seed_guess(iso, grid, layout, amplitude=0.05, base_velocity=0.0, z0=None, T=None):
    """Small sinusoid on the outputs, constant base velocity, consistent derivatives.

    For normal-form vertices the sinusoid sits on ``y`` and its derivative on
    ``ydot``; otherwise on every internal state. ``u_i`` starts at zero,
    ``uZ_j`` and all derivative variables are set from the relation so the
    node-wise blocks vanish at the guess.
    """
    nx, nz = iso.n_x, iso.n_z
    T = grid.T if T is None else T
    w = 2.0 * np.pi / T
    normal = iso.base.sub[iso.i].normal_form
    z0 = np.zeros(nz) if z0 is None else np.asarray(z0, dtype=float)
    nb = nz // 2 if iso.base.sub[iso.i].normal_form else 0
    nodes = []
    for t in grid.times:
        if normal:
            ny = nx // 2
            x = np.concatenate([np.full(ny, amplitude * np.cos(w * t)),
                                np.full(ny, -amplitude * w * np.sin(w * t))])
        else:
            x = np.full(nx, amplitude * np.cos(w * t))
        z = z0.copy()
        if nb:
            z[nb:] = z0[nb:] + base_velocity
            z[:nb] = z0[:nb] + (z0[nb:] + base_velocity) * t
        u = np.zeros(iso.n_u)
        pt = iso.point(x, z, z)
        uZ = pt.uZ(u)
        chid = _field(iso, np.concatenate([x, z, z]), u, uZ)
        nodes.append({"x": x, "xd": chid[:nx], "zi": z, "zid": chid[nx:nx + nz], "zj": z,
                      "zjd": chid[nx + nz:], "u": u, "uZ": uZ})
    return layout.pack(nodes, T if layout.free_T else None)


def assemble(iso, grid, layout=None, cost="effort", path=(), reset=None, bounds=None,
             anchors=None, eps_contraction=None, x0=None, free_T=False, guess=None):
    """Build the collocation :class:`NlpProblem`.

    ``anchors`` defaults to pinning the first coupled-state coordinate of node 0
    at its initial-guess value. ``guess`` holds keyword arguments for
    :func:`seed_guess` when ``x0`` is not given.
    """
    layout = DecisionLayout(iso, grid.K, free_T) if layout is None else layout
    if layout.K != grid.K:
        raise DimensionError("layout and grid disagree on K")
    if x0 is None:
        x0 = seed_guess(iso, grid, layout, **(guess or {}))
    x0 = np.asarray(x0, dtype=float)
    if anchors is None:
        anchors = (("zi", 0, float(layout.node(x0, 0)["zi"][0])),)
    tr = Transcription(iso, grid, layout, reset, anchors, path, eps_contraction)
    if isinstance(cost, str):
        cost = default_cost(layout, grid, cost)
    lb, ub = decision_bounds(iso, layout, bounds)
    if layout.free_T:
        lb[-1], ub[-1] = 1e-3 * grid.T, np.inf
    prob = NlpProblem(
        n=layout.size, cost=cost, eq=tr.eq, ineq=tr.ineq if tr.n_ineq else None,
        lb=lb, ub=ub, cost_grad=getattr(cost, "grad", None),
        cost_hess=getattr(cost, "hess", None), eq_jac=tr.eq_jac,
        ineq_jac=tr.ineq_jac if tr.n_ineq else None, x0=x0,
        blocks=dict(tr.blocks),
        context={"iso": iso, "grid": grid, "layout": layout, "transcription": tr,
                 "reset": reset},
    )
    prob.context["initial_bound_violations"] = prob.bound_violations(x0)
    return prob


def equality_count(iso, K, n_anchors=1):
    """``(K+1)(|zero| + |dyn|) + K |colloc| + |periodic|`` rows."""
    n_chi = iso.n_x + 2 * iso.n_z
    n_c1 = iso.base.sub[iso.j].n_x
    return (K + 1) * (n_c1 + n_chi) + K * n_chi + (iso.n_x + 2 * iso.n_z + n_anchors)


# -- solution extraction ---------------------------------------------------------

def solution_to_trajectory(X, problem, resim_substeps=20, interpolation="collocation"):
    """Node trajectory with coupling inputs, plus re-simulation postchecks.

    Returns ``(trajectory, report)``. The report holds the node periodicity
    residual and the re-simulation results: the isolated system is integrated
    from node 0 with node-interpolated inputs, its reset end state compared to
    the start, and the reconstructed full-order trajectory's periodicity
    residual.
    """
    ctx = problem.context
    iso, grid, layout = ctx["iso"], ctx["grid"], ctx["layout"]
    reset = ctx.get("reset")
    nodes, T_free = layout.unpack(np.asarray(X, dtype=float))
    T = grid.T if T_free is None else T_free
    times = T * np.arange(grid.K + 1) / grid.K
    i, j = iso.i, iso.j
    lam = np.array([iso.point(nd["x"], nd["zi"], nd["zj"]).lambda_e(nd["u"]) for nd in nodes])
    traj = Trajectory(
        times=times,
        states={f"x_{i}": np.array([nd["x"] for nd in nodes]),
                f"z_{i}": np.array([nd["zi"] for nd in nodes]),
                f"z_{j}": np.array([nd["zj"] for nd in nodes])},
        inputs={f"u_{i}": np.array([nd["u"] for nd in nodes]),
                f"uZ_{j}": np.array([nd["uZ"] for nd in nodes])},
        lambdas={"lambda_e": lam, "lambda_ebar": -lam},
        meta={"kind": "collocation", "K": grid.K, "T": T, "i": i,
              "n_x_other": iso.base.sub[j].n_x},
    )

    def chi_reset(v):
        return v if reset is None else np.asarray(reset(v), dtype=float)

    node_per = periodicity_residual(traj, chi_reset)
    h_sim = T / (grid.K * resim_substeps)
    cfg = IntegratorConfig(h=h_sim, T=T)
    ctrl = interpolated_inputs(times, traj.inputs[f"u_{i}"], interpolation)
    resim = simulate_isolated(iso, ctrl, nodes[0]["x"], nodes[0]["zi"], cfg)
    end = np.concatenate([resim.states[f"x_{i}"][-1], resim.states[f"z_{i}"][-1],
                          resim.states[f"z_{j}"][-1]])
    start = np.concatenate([resim.states[f"x_{i}"][0], resim.states[f"z_{i}"][0],
                            resim.states[f"z_{j}"][0]])
    resim_gap = chi_reset(end) - start
    full = reconstruct_full(resim, i)
    if reset is None:
        full_per = periodicity_residual(full)
    else:
        # apply the isolated reset to vertex i's block; vertex j stays at x_j = 0
        def full_reset(s):
            nx, nz = iso.n_x, iso.n_z
            xi, zi = _full_split(s, iso, i)
            post = chi_reset(np.concatenate([xi, zi, zi]))
            return _full_merge(s, iso, i, post[:nx], post[nx:nx + nz])

        full_per = periodicity_residual(full, full_reset)
    report = {
        "node_periodicity_inf": float(np.max(np.abs(node_per))),
        "resim_gap_inf": float(np.max(np.abs(resim_gap))),
        "full_periodicity_inf": float(np.max(np.abs(full_per))),
        "resim_h": h_sim,
        "interpolation": interpolation,
    }
    return traj, report


def _full_split(s, iso, i):
    base = iso.base
    n1, n2, nz = base.sub[1].n_x, base.sub[2].n_x, base.n_z
    if i == 1:
        return s[:n1], s[n1:n1 + nz]
    return s[n1 + nz:n1 + nz + n2], s[n1 + nz + n2:]


def _full_merge(s, iso, i, x, z):
    base = iso.base
    n1, n2, nz = base.sub[1].n_x, base.sub[2].n_x, base.n_z
    s = s.copy()
    if i == 1:
        s[:n1], s[n1:n1 + nz] = x, z
    else:
        s[n1 + nz:n1 + nz + n2], s[n1 + nz + n2:] = x, z
    # both coupled states follow the reset of vertex i
    s[n1:n1 + nz] = z
    s[n1 + nz + n2:] = z
    return s
