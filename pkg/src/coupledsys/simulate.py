"""Fixed-step integration of isolated subsystems and full coupled systems.

Both integrators use classical RK4. In the full system the coupling input is
recomputed at every stage from ``d/dt c_e = 0``; in the isolated subsystem it
comes from the coupling relation.
"""
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .ccs import VERTICES, _as_vec, coupling_residual, eval_rhs, other
from .errors import DimensionError, SingularityError
from .linalg import RCOND_MIN, solve_reduced
from .reduction import IsolatedModel, isolated_rhs


@dataclass
class Trajectory:
    """Sampled solution.

    ``states``, ``inputs`` and ``lambdas`` map a signal name to an ``(N, k)``
    array sampled at ``times``.
    """

    times: np.ndarray
    states: dict
    inputs: dict = field(default_factory=dict)
    lambdas: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        n = self.times.shape[0]
        if n > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")
        for group in (self.states, self.inputs, self.lambdas):
            for k, v in group.items():
                v = np.asarray(v, dtype=float)
                if v.ndim == 1:
                    v = v.reshape(n, -1)
                if v.shape[0] != n:
                    raise DimensionError(f"signal {k!r} has {v.shape[0]} samples, expected {n}")
                group[k] = v

    @property
    def h(self):
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    def signals(self):
        return {**self.states, **self.inputs, **self.lambdas}

    def state_matrix(self):
        return np.hstack(list(self.states.values()))


@dataclass(frozen=True)
class IntegratorConfig:
    h: float = 1e-3
    T: float = 2.0
    baumgarte: tuple | None = None
    lambda_tol: float = 1e-10

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError(f"step h must be positive, got {self.h}")
        if not self.T >= self.h:
            raise ValueError(f"horizon T={self.T} is shorter than one step h={self.h}")

    @property
    def n_steps(self):
        return int(round(self.T / self.h))


def rk4_step(rhs, state, h, k1=None):
    """Classical RK4 step; ``k1`` may pass an already evaluated ``rhs(state)``."""
    if k1 is None:
        k1 = rhs(state)
    k2 = rhs(state + 0.5 * h * k1)
    k3 = rhs(state + 0.5 * h * k2)
    k4 = rhs(state + h * k3)
    return state + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _rk4_timed(evaluate, t, s, h, k1):
    k2 = evaluate(t + 0.5 * h, s + 0.5 * h * k1, False)[0]
    k3 = evaluate(t + 0.5 * h, s + 0.5 * h * k2, False)[0]
    k4 = evaluate(t + h, s + h * k3, False)[0]
    return s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _integrate(evaluate, s0, cfg):
    """RK4 over the horizon.

    ``evaluate(t, s, record)`` returns ``(sdot, log_record)``; the record is
    only built (and only kept) at the grid points.
    """
    n = cfg.n_steps
    times = cfg.h * np.arange(n + 1)
    s = np.array(s0, dtype=float)
    rows = []

    for k in range(n + 1):
        try:
            t = times[k]
            sdot, rec = evaluate(t, s, True)
            rows.append(rec)
            if k < n:
                s = _rk4_timed(evaluate, t, s, cfg.h, sdot)
        except SingularityError as exc:
            raise exc.at_time(times[k]) from None
        if not np.all(np.isfinite(s)):
            raise FloatingPointError(f"state became non-finite at t={times[k]:.6g} s")
    return times, rows


# -- isolated subsystem ---------------------------------------------------------

def simulate_isolated(iso: IsolatedModel, controller, x0, z0, cfg: IntegratorConfig):
    """Integrate ``(x_i, z_i, z_j)`` under ``u_i = controller(x_i, z)``.

    A controller flagged ``time_varying`` is called as ``controller(t, x_i, z)``.
    ``z0`` may be a vector (shared) or a per-vertex dict; ``z_j`` is reset to
    ``z_i`` before integrating.
    """
    i, j = iso.i, iso.j
    x0 = _as_vec(x0, iso.n_x, "x0")
    zi0 = _as_vec(z0[i] if isinstance(z0, dict) else z0, iso.n_z, "z0")
    chi0 = np.concatenate([x0, zi0, zi0])

    timed = getattr(controller, "time_varying", False)

    def evaluate(t, chi, record):
        x_i, z_i, z_j = iso.split(chi)
        z = iso.zdict(z_i, z_j)
        u = controller(t, x_i, z) if timed else controller(x_i, z)
        u = np.asarray(u, dtype=float).reshape(-1)
        pt = iso.point(x_i, z_i, z_j)
        dx, dzi, dzj = isolated_rhs(iso, x_i, z_i, z_j, u, pt=pt)
        rec = (x_i.copy(), z_i.copy(), z_j.copy(), u, pt.uZ(u), pt.lambda_e(u)) if record else None
        return np.concatenate([dx, dzi, dzj]), rec

    times, rows = _integrate(evaluate, chi0, cfg)
    cols = [np.array(c) for c in zip(*rows)]
    return Trajectory(
        times=times,
        states={f"x_{i}": cols[0], f"z_{i}": cols[1], f"z_{j}": cols[2]},
        inputs={f"u_{i}": cols[3], f"uZ_{j}": cols[4]},
        lambdas={"lambda_e": cols[5]},
        meta={"integrator": "rk4", "h": cfg.h, "kind": "isolated", "i": i,
              "n_x_other": iso.base.sub[j].n_x},
    )


# -- full coupled dynamical system ---------------------------------------------

def _call(ctrl, x_v, z, lam_v):
    if getattr(ctrl, "lambda_aware", False):
        return np.asarray(ctrl(x_v, z, lam_v), dtype=float).reshape(-1)
    return np.asarray(ctrl(x_v, z), dtype=float).reshape(-1)


def _probe(model, controllers, x, z, lam_e, fixed):
    """Field, ``d/dt c_e`` and inputs at a given ``lam_e``.

    ``fixed`` holds the inputs of controllers that do not see ``lam_e``.
    """
    lam = {1: lam_e, 2: -lam_e}
    parts, zd, u = [], {}, {}
    for v in VERTICES:
        u[v] = fixed[v] if v in fixed else _call(controllers[v], x[v], z, lam[v])
        xd, zd[v] = eval_rhs(model, v, x[v], z[v], z[other(v)], u[v], lam[v])
        parts += [xd, zd[v]]
    return np.concatenate(parts), zd[1] - zd[2], np.concatenate([u[1], u[2]])


def _affine_in_lambda(model, controllers, x, z):
    """Coefficients of field, ``d/dt c_e`` and inputs, all affine in ``lam_e``.

    Controllers flagged ``lambda_aware`` may expose ``affine(x_v, z) -> (u0, U)``
    with ``u = u0 + U lam_v``; otherwise the ``lam`` dependence is probed.
    """
    nl = model.n_lambda
    aware = {v: getattr(controllers[v], "lambda_aware", False) for v in VERTICES}
    if all(hasattr(controllers[v], "affine") or not aware[v] for v in VERTICES):
        F0, FL, Zd0, ZdL, U0, UL = [], [], {}, {}, [], []
        for v in VERTICES:
            sub = model.sub[v]
            t = sub.terms(x[v], z[v], z[other(v)])
            if aware[v]:
                u0, U = controllers[v].affine(x[v], z)
            else:
                u0, U = _call(controllers[v], x[v], z, None), np.zeros((sub.n_u, nl))
            # one product per map for the constant column and the lam columns
            W = np.concatenate([u0[:, None], U], axis=1)
            Gw, Qw = t["g"] @ W, t["q"] @ W
            Gl, Ql = Gw[:, 1:] + t["gb"], Qw[:, 1:] + t["qb"]
            if v == 2:
                Gl, Ql, U = -Gl, -Ql, -U
            F0 += [t["f"] + Gw[:, 0], t["p"] + Qw[:, 0]]
            FL += [Gl, Ql]
            Zd0[v], ZdL[v] = F0[-1], Ql
            U0.append(u0)
            UL.append(U)
        base = (np.concatenate(F0), Zd0[1] - Zd0[2], np.concatenate(U0))
        return base, [np.concatenate(FL), ZdL[1] - ZdL[2], np.concatenate(UL)]
    fixed = {v: _call(controllers[v], x[v], z, None) for v in VERTICES if not aware[v]}
    base = _probe(model, controllers, x, z, np.zeros(nl), fixed)
    slopes = [np.empty((b.shape[0], nl)) for b in base]
    for k in range(nl):
        e = np.zeros(nl)
        e[k] = 1.0
        for out, b, val in zip(slopes, base, _probe(model, controllers, x, z, e, fixed)):
            out[:, k] = val - b
    return base, slopes


def _lambda_from(model, z, r0, M, baumgarte):
    nl = model.n_lambda
    if baumgarte is None:
        rhs = -r0
    else:
        a, b = baumgarte
        c = coupling_residual(z[1], z[2])
        target = -2.0 * a * c
        if model.sub[1].normal_form:
            nb = c.shape[0] // 2
            target[nb:] -= b * b * c[:nb]
        rhs = target - r0
    lam, rc, kept = kernels.solve_reduced_rcond(M, rhs, 1e-14)
    if kept == 0:
        raise SingularityError("coupling input does not enter d/dt c_e (singular coefficient)", 0.0)
    if kept != nl:
        raise DimensionError(f"{kept} constraint rows involve {nl} coupling inputs")
    if lam is None or rc < RCOND_MIN:
        raise SingularityError(
            f"coupling-input coefficient matrix is singular or ill-conditioned (rcond={rc:.3e})", rc)
    return lam


def solve_lambda(model, controllers, x, z, baumgarte=None):
    """``lam_e`` for ``e = (1, 2)`` from the stagewise linear equation ``d/dt c_e = 0``.

    ``d/dt c_e`` is affine in ``lam_e`` (controllers flagged ``lambda_aware``
    must be affine in their ``lam`` argument); its coefficients come from
    ``n_lambda + 1`` probe evaluations. Rows that do not involve ``lam_e`` are
    dropped. With Baumgarte gains ``(a, b)`` the kept rows are set to
    ``-2 a c`` (and ``- b^2`` times the paired position rows for normal-form
    models) instead of zero.
    """
    (_, r0, _), (_, M, _) = _affine_in_lambda(model, controllers, x, z)
    return _lambda_from(model, z, r0, M, baumgarte)


def simulate_full_cds(model, controllers, x0, z0, cfg: IntegratorConfig):
    """Integrate the full CDS with the coupling input solved at every stage."""
    if isinstance(z0, dict):
        zs = _as_vec(z0[1], model.n_z, "z0")
    else:
        zs = _as_vec(z0, model.n_z, "z0")
    s0 = model.pack(x0, {1: zs, 2: zs})
    nu1 = model.sub[1].n_u

    def evaluate(t, s, record):
        x, z = model.unpack(s)
        (F0, r0, u0), (FL, M, UL) = _affine_in_lambda(model, controllers, x, z)
        lam_e = _lambda_from(model, z, r0, M, cfg.baumgarte)
        rec = None
        if record:
            u = u0 + UL @ lam_e
            rec = (x[1].copy(), z[1].copy(), x[2].copy(), z[2].copy(), u[:nu1], u[nu1:], lam_e)
        return F0 + FL @ lam_e, rec

    times, rows = _integrate(evaluate, s0, cfg)
    cols = [np.array(c) for c in zip(*rows)]
    return Trajectory(
        times=times,
        states={"x_1": cols[0], "z_1": cols[1], "x_2": cols[2], "z_2": cols[3]},
        inputs={"u_1": cols[4], "u_2": cols[5]},
        lambdas={"lambda_e": cols[6], "lambda_ebar": -cols[6]},
        meta={"integrator": "rk4", "h": cfg.h, "kind": "full",
              "baumgarte": None if cfg.baumgarte is None else list(cfg.baumgarte)},
    )


# -- controllers -----------------------------------------------------------------

def zero_dynamics_controller(model, j, gains=(0.0, 0.0)):
    """Vertex-``j`` controller keeping ``x_j = 0`` invariant given its own coupling input.

    Solves ``f_j + g_j u + gb lam = -K x_j`` on the rows carrying ``u``;
    for normal-form vertices ``K x_j = kp y + kd ydot`` on the acceleration rows.
    The result is affine in ``lam``; ``ctrl.affine(x_j, z)`` returns ``(u0, U)``.
    """
    sj = model.sub[j]
    i = other(j)
    kp, kd = gains

    def affine(x_j, z):
        x_j = np.asarray(x_j, dtype=float)
        t = sj.terms(x_j, z[j], z[i])
        if sj.normal_form:
            ny = sj.n_x // 2
            target = np.concatenate([x_j[ny:], -kp * x_j[:ny] - kd * x_j[ny:]])
        else:
            target = -kp * x_j
        rhs = np.column_stack([target - t["f"], -t["gb"]])
        sol = solve_reduced(t["g"], rhs, what=f"input matrix g_{j}")
        return sol[:, 0], sol[:, 1:]

    def ctrl(x_j, z, lam_j):
        u0, U = affine(x_j, z)
        return u0 + U @ np.asarray(lam_j, dtype=float)

    ctrl.lambda_aware = True
    ctrl.affine = affine
    return ctrl


def io_linearizing_controller(iso: IsolatedModel, eps, kappa=None):
    """``u_i`` with ``f^Z_i + g^Z_i u_i = -eps x_i`` on the rows that carry ``u_i``.

    For normal-form vertices the velocity rows carry no input, so the
    acceleration rows track the sliding variable ``s = ydot + eps y`` with
    ``ds/dt = -kappa s``; on ``s = 0`` the output decays exactly at rate
    ``eps``. ``kappa`` defaults to ``10 eps``.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    kappa = 10.0 * eps if kappa is None else kappa
    normal = iso.base.sub[iso.i].normal_form

    def ctrl(x_i, z):
        x_i = np.asarray(x_i, dtype=float)
        m = iso.point(x_i, z[iso.i], z[iso.j]).base_maps()
        if normal:
            ny = iso.n_x // 2
            y, yd = x_i[:ny], x_i[ny:]
            s = yd + eps * y
            target = np.concatenate([yd, -eps * yd - kappa * s])
        else:
            target = -eps * x_i
        return solve_reduced(m["gZ_i"], target - m["fZ_i"], what=f"isolated input matrix gZ_{iso.i}")

    return ctrl


def interpolated_inputs(times, values, kind="linear"):
    """Open-loop input ``u(t)`` through node values.

    ``kind``:
      ``linear``       piecewise linear;
      ``hold``         zero-order hold on the left node;
      ``collocation``  per interval the quadratic taking ``u^k`` at the left
                       node and the midpoint and ``u^{k+1}`` at the right node,
                       i.e. the input the collocation defects are written with.
    """
    times = np.asarray(times, dtype=float)
    values = np.atleast_2d(np.asarray(values, dtype=float))
    if kind not in ("linear", "hold", "collocation"):
        raise ValueError(f"unknown interpolation {kind!r}; use 'linear', 'hold' or 'collocation'")
    if values.shape[0] != times.shape[0]:
        raise ValueError("one input row per node is required")
    last = len(times) - 1

    def ctrl(t, x_i, z):
        k = min(max(np.searchsorted(times, t, side="right") - 1, 0), last)
        if kind == "hold" or k == last:
            return values[k]
        tau = (t - times[k]) / (times[k + 1] - times[k])
        if kind == "linear":
            return values[k] + tau * (values[k + 1] - values[k])
        return values[k] + (2.0 * tau * tau - tau) * (values[k + 1] - values[k])

    ctrl.time_varying = True
    return ctrl


# -- post-processing -----------------------------------------------------------

def reconstruct_full(iso_traj: Trajectory, i):
    """Full-CDS trajectory ``(embed(x_i, z), lam)`` from an isolated trajectory."""
    j = other(i)
    n = iso_traj.times.shape[0]
    x_i = iso_traj.states[f"x_{i}"]
    x_j = np.zeros((n, iso_traj.meta["n_x_other"]))
    lam_ij = iso_traj.lambdas["lambda_e"]
    # stored lambda belongs to edge (i, j); columns are named for (1, 2)
    lam12 = lam_ij if i == 1 else -lam_ij
    states = {}
    for v in VERTICES:
        states[f"x_{v}"] = x_i if v == i else x_j
        states[f"z_{v}"] = iso_traj.states[f"z_{v}"]
    return Trajectory(
        times=iso_traj.times.copy(),
        states=states,
        inputs={f"u_{i}": iso_traj.inputs[f"u_{i}"], f"u_{j}": iso_traj.inputs[f"uZ_{j}"]},
        lambdas={"lambda_e": lam12, "lambda_ebar": -lam12},
        meta={**iso_traj.meta, "kind": "reconstructed"},
    )


def trajectory_error(a: Trajectory, b: Trajectory, names=None):
    """Per-signal and aggregate max-norm and RMS differences on a shared grid."""
    if a.times.shape != b.times.shape or np.max(np.abs(a.times - b.times), initial=0.0) > 1e-12:
        raise ValueError("trajectories are not on the same time grid")
    sa, sb = a.signals(), b.signals()
    if names is None:
        names = [k for k in sa if k in sb]
    out = {}
    for k in names:
        if sa[k].shape != sb[k].shape:
            raise DimensionError(f"signal {k!r} shapes differ: {sa[k].shape} vs {sb[k].shape}")
        d = sa[k] - sb[k]
        out[k] = {"max": float(np.max(np.abs(d), initial=0.0)),
                  "rms": float(np.sqrt(np.mean(d * d))) if d.size else 0.0}
    out["max"] = max((v["max"] for v in out.values()), default=0.0)
    out["rms"] = max((v["rms"] for k, v in out.items() if k != "max"), default=0.0)
    return out


def constraint_drift(traj: Trajectory):
    """``max_t ||z_1(t) - z_2(t)||_inf``."""
    return float(np.max(np.abs(traj.states["z_1"] - traj.states["z_2"]), initial=0.0))


def periodicity_residual(traj: Trajectory, reset=None):
    """``reset(final state) - initial state`` over the stacked state columns."""
    S = traj.state_matrix()
    end = S[-1] if reset is None else np.asarray(reset(S[-1].copy()), dtype=float)
    return end - S[0]
