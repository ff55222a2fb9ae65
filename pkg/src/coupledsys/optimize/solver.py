"""Dense augmented-Lagrangian solver for small constrained NLPs.

Problem form: ``min f(X)`` subject to ``c(X) = 0``, ``g(X) >= 0`` and
``lb <= X <= ub``. Finite bounds are folded into ``g`` as linear rows.

Outer loop: Powell-Hestenes-Rockafellar multiplier updates with a penalty
that grows when feasibility stalls. Inner loop: damped Newton steps on the
augmented Lagrangian with the Hessian model

    H_f + B_c + mu J^T J + mu G_A^T G_A + delta I

where ``B_c`` is a damped-BFGS estimate of the constraint curvature and
``G_A`` holds the active inequality rows. Once feasibility is small a polish takes
least-squares Newton steps on the KKT system of the active constraints.
"""
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .transcription import NlpProblem, central_jacobian

log = logging.getLogger(__name__)

STATUSES = ("converged", "max_iter", "line_search_failure")


@dataclass(frozen=True)
class SolverConfig:
    eq_tol: float = 1e-6
    ineq_tol: float = 1e-8
    stat_tol: float = 1e-4
    max_outer: int = 40
    max_inner: int = 60
    mu0: float = 10.0
    mu_max: float = 1e12
    polish_iters: int = 30
    polish_trigger: float = 1e-2
    fd_hess_max_n: int = 300

    def __post_init__(self):
        for k in ("eq_tol", "ineq_tol", "stat_tol", "mu0", "mu_max"):
            if not getattr(self, k) > 0:
                raise ValueError(f"{k} must be positive")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("iteration limits must be at least 1")


@dataclass
class NlpSolution:
    """Result of :func:`solve`; ``x`` is the best iterate whatever the status."""

    x: np.ndarray
    status: str
    cost: float
    feasibility: float
    ineq_violation: float
    stationarity: float
    iterations: int
    wall_time: float
    multipliers_eq: np.ndarray
    multipliers_ineq: np.ndarray
    log: list = field(default_factory=list, repr=False)

    @property
    def converged(self):
        return self.status == "converged"


class _Evaluator:
    """Wraps a problem with derivative fallbacks and folds bounds into ``g``."""

    def __init__(self, p: NlpProblem, cfg):
        self.p = p
        self.n = p.n
        self.step = p.fd_step
        self.lo_idx = np.flatnonzero(np.isfinite(p.lb))
        self.hi_idx = np.flatnonzero(np.isfinite(p.ub))
        nb = len(self.lo_idx) + len(self.hi_idx)
        G = np.zeros((nb, self.n))
        G[np.arange(len(self.lo_idx)), self.lo_idx] = 1.0
        G[len(self.lo_idx) + np.arange(len(self.hi_idx)), self.hi_idx] = -1.0
        self.G_bounds = G
        self.hess_mode = ("exact" if p.cost_hess is not None
                          else "fd" if self.n <= cfg.fd_hess_max_n else "bfgs")

    def f(self, x):
        return float(self.p.cost(x))

    def grad(self, x):
        if self.p.cost_grad is not None:
            return np.asarray(self.p.cost_grad(x), dtype=float)
        return central_jacobian(lambda v: np.array([self.p.cost(v)]), x, self.step)[0]

    def hess(self, x):
        if self.hess_mode == "exact":
            return np.asarray(self.p.cost_hess(x), dtype=float)
        if self.hess_mode == "fd":
            H = central_jacobian(self.grad, x, self.step)
            return 0.5 * (H + H.T)
        return None

    def c(self, x):
        return np.asarray(self.p.eq(x), dtype=float)

    def J(self, x):
        if self.p.eq_jac is not None:
            return np.asarray(self.p.eq_jac(x), dtype=float)
        return central_jacobian(self.p.eq, x, self.step)

    def g(self, x):
        parts = [x[self.lo_idx] - self.p.lb[self.lo_idx], self.p.ub[self.hi_idx] - x[self.hi_idx]]
        if self.p.ineq is not None:
            parts.append(np.asarray(self.p.ineq(x), dtype=float))
        return np.concatenate(parts)

    def G(self, x):
        if self.p.ineq is None:
            return self.G_bounds
        if self.p.ineq_jac is not None:
            Gi = np.asarray(self.p.ineq_jac(x), dtype=float)
        else:
            Gi = central_jacobian(self.p.ineq, x, self.step)
        return np.vstack([self.G_bounds, Gi])


def _norm(v):
    return float(np.max(np.abs(v), initial=0.0))


def _damped_bfgs(B, s, y):
    """Powell-damped BFGS update, keeping ``B`` positive semidefinite."""
    Bs = B @ s
    sBs = float(s @ Bs)
    if sBs <= 1e-16 * max(1.0, float(s @ s)):
        return B
    sy = float(s @ y)
    theta = 1.0 if sy >= 0.2 * sBs else 0.8 * sBs / (sBs - sy)
    r = theta * y + (1.0 - theta) * Bs
    return B - np.outer(Bs, Bs) / sBs + np.outer(r, r) / float(s @ r)


class _State:
    """Function values and derivatives at one iterate."""

    __slots__ = ("x", "f", "df", "c", "J", "g", "G")

    def __init__(self, ev, x):
        self.x = x
        self.f = ev.f(x)
        self.df = ev.grad(x)
        self.c = ev.c(x)
        self.J = ev.J(x)
        self.g = ev.g(x)
        self.G = ev.G(x)


def _kkt_measures(st, lam, w):
    """``(feasibility, inequality violation, stationarity)`` with ``L = f + lam.c - w.g``."""
    stat = st.df + st.J.T @ lam - st.G.T @ w
    viol = _norm(np.minimum(st.g, 0.0))
    return _norm(st.c), viol, _norm(stat)


def _al_value(f, c, g, lam, w, mu):
    sh = np.maximum(0.0, w - mu * g)
    return f + lam @ c + 0.5 * mu * (c @ c) + (sh @ sh - w @ w) / (2.0 * mu)


def solve(problem: NlpProblem, cfg: SolverConfig | None = None, x0=None, callback=None):
    """Minimize ``problem`` and return an :class:`NlpSolution`.

    ``callback`` receives each structured log record
    ``{"outer", "iteration", "merit", "feasibility", "step"}``.
    """
    cfg = SolverConfig() if cfg is None else cfg
    t0 = time.perf_counter()
    ev = _Evaluator(problem, cfg)
    x = problem.x0 if x0 is None else x0
    if x is None:
        x = np.zeros(problem.n)
        x = np.clip(x, problem.lb, problem.ub)
    x = np.array(x, dtype=float)
    if x.shape != (problem.n,):
        raise ValueError(f"initial guess has shape {x.shape}, expected ({problem.n},)")

    st = _State(ev, x)
    lam = np.zeros(st.c.shape[0])
    w = np.zeros(st.g.shape[0])
    mu = cfg.mu0
    B = np.zeros((problem.n, problem.n))      # constraint curvature
    Bf = np.eye(problem.n) if ev.hess_mode == "bfgs" else None
    records = []
    iters = 0
    status = "max_iter"
    best = (np.inf, st.x.copy(), lam.copy(), w.copy())
    prev_feas = _norm(st.c)

    def score(feas, viol, stat):
        return max(feas / cfg.eq_tol, viol / cfg.ineq_tol, stat / cfg.stat_tol)

    def emit(rec):
        records.append(rec)
        log.debug("iter %(iteration)d merit %(merit).3e feas %(feasibility).3e step %(step).2e", rec)
        if callback is not None:
            callback(rec)

    for outer in range(cfg.max_outer):
        omega = max(cfg.stat_tol * 0.1, min(1.0, 1.0 / mu))
        delta = 0.0
        stuck = False
        for _ in range(cfg.max_inner):
            sh = np.maximum(0.0, w - mu * st.g)
            grad = st.df + st.J.T @ (lam + mu * st.c) - st.G.T @ sh
            if _norm(grad) <= omega:
                break
            Hf = ev.hess(st.x) if Bf is None else Bf
            act = sh > 0.0
            Ga = st.G[act]
            H = Hf + B + mu * (st.J.T @ st.J) + mu * (Ga.T @ Ga)
            phi0 = _al_value(st.f, st.c, st.g, lam, w, mu)
            scale = max(1.0, float(np.max(np.abs(np.diag(H)), initial=1.0)))
            accepted = False
            for _attempt in range(8):
                Hd = H + (delta * scale) * np.eye(problem.n)
                try:
                    d = np.linalg.solve(Hd, -grad)
                except np.linalg.LinAlgError:
                    d = None
                if d is None or not np.all(np.isfinite(d)) or grad @ d >= 0.0:
                    delta = max(1e-10, 10.0 * delta)
                    continue
                a = 1.0
                slope = float(grad @ d)
                while a > 1e-8:
                    xn = st.x + a * d
                    fn, cn, gn = ev.f(xn), ev.c(xn), ev.g(xn)
                    phin = _al_value(fn, cn, gn, lam, w, mu)
                    if np.isfinite(phin) and phin <= phi0 + 1e-4 * a * slope:
                        accepted = True
                        break
                    a *= 0.5
                if accepted:
                    break
                delta = max(1e-10, 10.0 * delta)
            iters += 1
            if not accepted:
                stuck = True
                emit({"outer": outer, "iteration": iters, "merit": float(phi0),
                      "feasibility": _norm(st.c), "step": 0.0})
                break
            delta = 0.1 * delta if a == 1.0 else delta
            new = _State(ev, xn)
            s = new.x - st.x
            lam_est = lam + mu * new.c
            y = (new.J - st.J).T @ lam_est - (new.G - st.G).T @ np.maximum(0.0, w - mu * new.g)
            B = _damped_bfgs(B, s, y)
            if Bf is not None:
                Bf = _damped_bfgs(Bf, s, new.df - st.df)
            st = new
            emit({"outer": outer, "iteration": iters, "merit": float(phin),
                  "feasibility": _norm(st.c), "step": float(a * _norm(d))})
            if _norm(s) <= 1e-15 * max(1.0, _norm(st.x)):
                break

        lam = lam + mu * st.c
        w = np.maximum(0.0, w - mu * st.g)
        feas, viol, stat = _kkt_measures(st, lam, w)
        sc = score(feas, viol, stat)
        if sc < best[0]:
            best = (sc, st.x.copy(), lam.copy(), w.copy())
        if sc <= 1.0:
            status = "converged"
            break
        if feas <= cfg.polish_trigger:
            px, plam, pw, pst = _polish(ev, st, lam, w, B, cfg, score)
            psc = score(*_kkt_measures(pst, plam, pw))
            if psc < best[0]:
                best = (psc, px.copy(), plam.copy(), pw.copy())
            if psc <= 1.0:
                status = "converged"
                break
        if feas > 0.25 * prev_feas or viol > cfg.ineq_tol:
            mu = min(cfg.mu_max, 10.0 * mu)
        prev_feas = feas
        if stuck and mu >= cfg.mu_max:
            status = "line_search_failure"
            break

    # polish from the best iterate on the active-constraint KKT system
    x, lam, w = best[1], best[2], best[3]
    st = _State(ev, x)
    x, lam, w, st = _polish(ev, st, lam, w, B, cfg, score)
    feas, viol, stat = _kkt_measures(st, lam, w)
    if score(feas, viol, stat) <= 1.0:
        status = "converged"
    elif status == "converged":
        status = "max_iter"
    return NlpSolution(
        x=st.x.copy(), status=status, cost=st.f, feasibility=feas, ineq_violation=viol,
        stationarity=stat, iterations=iters, wall_time=time.perf_counter() - t0,
        multipliers_eq=lam, multipliers_ineq=w, log=records,
    )


def _ls_multipliers(st, act):
    """Least-squares multipliers for the equalities and the active inequalities."""
    A = np.vstack([st.J, -st.G[act]])
    nu = np.linalg.lstsq(A.T, -st.df, rcond=None)[0]
    m = st.c.shape[0]
    w = np.zeros(st.g.shape[0])
    w[act] = np.maximum(0.0, nu[m:])
    return nu[:m], w


def _polish(ev, st, lam, w, B, cfg, score):
    """Full Newton steps on the active-constraint KKT system with a watchdog.

    Steps are taken without a monotone test (the first one often raises the
    residual before quadratic convergence sets in); the best iterate seen is
    returned, so the polish can never make the result worse.
    """
    n = ev.n
    best = (score(*_kkt_measures(st, lam, w)), st, lam, w)
    stall = 0
    for _ in range(cfg.polish_iters):
        if best[0] <= 1e-6 or stall >= 3:
            break
        act = (w > 0.0) | (st.g <= cfg.ineq_tol)
        Ga = st.G[act]
        Hf = ev.hess(st.x)
        H = (Hf if Hf is not None else np.zeros((n, n))) + B
        A = np.vstack([st.J, -Ga])
        k = A.shape[0]
        K = np.block([[H, A.T], [A, np.zeros((k, k))]])
        nu = np.concatenate([lam, w[act]])
        rhs = -np.concatenate([st.df + A.T @ nu, st.c, -st.g[act]])
        dx = np.linalg.lstsq(K, rhs, rcond=None)[0][:n]
        if not np.all(np.isfinite(dx)):
            break
        try:
            new = _State(ev, st.x + dx)
        except (ArithmeticError, ValueError, np.linalg.LinAlgError):
            break
        act = (w > 0.0) | (new.g <= cfg.ineq_tol)
        lam, w = _ls_multipliers(new, act)
        st = new
        sc = score(*_kkt_measures(st, lam, w))
        if not np.isfinite(sc):
            break
        if sc < best[0]:
            best, stall = (sc, st, lam, w), 0
        else:
            stall += 1
    _, st, lam, w = best
    return st.x, lam, w, st
