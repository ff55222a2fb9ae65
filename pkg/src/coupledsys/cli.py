"""Command-line front end: ``coupledsys {verify,simulate,optimize}``.

Each run reads one JSON config document (``--config``), applies flag
overrides, and writes its outputs plus ``manifest.json`` into ``--out``.
Exit codes: 0 success, 1 a check or solve failed, 2 usage or config error.
"""
import argparse
import dataclasses
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import io
from .ccs import other
from .errors import ConvergenceError, DimensionError, SingularityError
from .mechanical import configuration
from .models import EXAMPLES, get_example
from .optimize import (
    Grid, SolverConfig, amplitude_bound, assemble, clearance, identity_reset, impact_reset,
    lambda_ceiling, solution_to_trajectory, solve,
)
from .reduction import IsolatedModel, coupling_solve, manifold_residuals, zero_invariance_residual
from .simulate import (
    IntegratorConfig, constraint_drift, io_linearizing_controller, reconstruct_full,
    simulate_full_cds, simulate_isolated, trajectory_error, zero_dynamics_controller,
)

log = logging.getLogger("coupledsys")

EXIT_OK, EXIT_CHECK, EXIT_USAGE = 0, 1, 2

# full-order (q, qd) used to derive default initial states on the manifold
DEFAULT_STATE = {
    "split_cart": ([0.0, 0.15, -0.1], [0.3, -0.2, 0.1]),
    "double_pendulum_pivot": ([0.3, -0.2], [0.5, -0.4]),
}

COMMON = {"model": "split_cart", "params": {}, "isolate": 1, "seed": 0, "x0": None, "z0": None}
DEFAULTS = {
    "verify": {
        "horizon": 2.0, "h": 1e-3, "eps": 2.0, "tol_discrepancy": 1e-5, "tol_drift": 1e-6,
        "tol_relation": 1e-10, "n_points": 100, "broken_relation": False,
    },
    "simulate": {
        "mode": "full", "controller": "io", "horizon": 2.0, "h": 1e-3, "eps": 2.0,
        "baumgarte": None,
    },
    "optimize": {
        "K": 10, "T": 1.4, "cost": "effort", "reset": "identity",
        "anchors": [["zi", 0, 0.0], ["x", 0, 0.2]], "guess_amplitude": 0.2,
        "eq_tol": 1e-6, "ineq_tol": 1e-8, "stat_tol": 1e-4, "max_outer": 40,
        "eps_contraction": None, "path": [], "bounds": {}, "resim_substeps": 20,
        "interpolation": "collocation", "resim_tol": 1e-3, "portraits": [["x", 0, "x", 1]],
    },
}
POSITIVE = ("horizon", "h", "eps", "K", "T", "tol_discrepancy", "tol_drift", "tol_relation",
            "n_points", "eq_tol", "ineq_tol", "stat_tol", "max_outer", "resim_substeps",
            "resim_tol")


class ConfigError(ValueError):
    """Invalid or unknown configuration entry."""


@dataclasses.dataclass
class RunConfig:
    command: str
    values: dict

    def __getitem__(self, key):
        return self.values[key]

    @classmethod
    def build(cls, command, doc, overrides):
        allowed = {**COMMON, **DEFAULTS[command]}
        merged = dict(allowed)
        for source in (doc, overrides):
            unknown = sorted(set(source) - set(allowed))
            if unknown:
                raise ConfigError(f"unknown config key(s) for {command!r}: {', '.join(unknown)}")
            merged.update({k: v for k, v in source.items() if v is not None})
        for key in POSITIVE:
            if key in merged and not (isinstance(merged[key], (int, float))
                                      and not isinstance(merged[key], bool) and merged[key] > 0):
                extra = " (a zero horizon leaves an empty report)" if key == "horizon" else ""
                raise ConfigError(f"{key} must be a positive number, got {merged[key]!r}{extra}")
        if merged["model"] not in EXAMPLES:
            raise ConfigError(
                f"unknown model {merged['model']!r}; available: {', '.join(sorted(EXAMPLES))}")
        if merged["isolate"] not in (1, 2):
            raise ConfigError("isolate must be 1 or 2")
        if not isinstance(merged["params"], dict):
            raise ConfigError("params must be an object")
        if command == "optimize" and int(merged["K"]) != merged["K"]:
            raise ConfigError("K must be an integer")
        return cls(command, merged)


# -- shared setup ----------------------------------------------------------------

def _system(cfg):
    try:
        return get_example(cfg["model"], **cfg["params"])
    except TypeError as exc:
        raise ConfigError(f"bad model params: {exc}") from None


def _initial_state(cfg, system, i):
    if cfg["x0"] is not None or cfg["z0"] is not None:
        if cfg["x0"] is None or cfg["z0"] is None:
            raise ConfigError("give both x0 and z0, or neither")
        return np.asarray(cfg["x0"], float), np.asarray(cfg["z0"], float)
    q, qd = DEFAULT_STATE[cfg["model"]]
    x, z = system.split_from_full(np.asarray(q, float), np.asarray(qd, float))
    return x[i], z[i]


def _break_relation(iso, bias=0.05):
    """Offset the relation's coupling input so downstream checks must fail."""
    orig = iso._point

    def broken(key):
        pt = orig(key)
        return dataclasses.replace(pt, b_e=pt.b_e + bias, cache={})

    iso._point = broken


def _energy(system, traj):
    """Total energy of the two parts along a full or reconstructed trajectory."""
    out = np.zeros(traj.times.shape[0])
    for v in (1, 2):
        m, o = system.parts[v - 1], system.outputs[v - 1]
        xs, zs = traj.states[f"x_{v}"], traj.states[f"z_{v}"]
        for k in range(out.shape[0]):
            q, qd = configuration(m, o, xs[k], zs[k])
            out[k] += m.energy(q, qd)
    return out


def _integrator(cfg, baumgarte=None):
    if cfg["horizon"] < cfg["h"]:
        raise ConfigError(f"horizon {cfg['horizon']} is shorter than one step {cfg['h']}: "
                          "nothing to integrate, empty report")
    try:
        return IntegratorConfig(h=cfg["h"], T=cfg["horizon"], baumgarte=baumgarte)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _drift_column(traj, a, b):
    return np.max(np.abs(traj.states[a] - traj.states[b]), axis=1)


# -- commands --------------------------------------------------------------------

def cmd_verify(cfg, out):
    """Isolated-versus-full equivalence, constraint drift and relation residuals."""
    system = _system(cfg)
    ccs, i = system.ccs, cfg["isolate"]
    j = other(i)
    iso = IsolatedModel(ccs, i)
    if cfg["broken_relation"]:
        _break_relation(iso)
    x0, z0 = _initial_state(cfg, system, i)
    icfg = _integrator(cfg)
    ctrl = io_linearizing_controller(iso, cfg["eps"])
    t0 = time.perf_counter()
    iso_traj = simulate_isolated(iso, ctrl, x0, z0, icfg)
    t_iso = time.perf_counter() - t0
    full_iso = IsolatedModel(ccs, i)
    t0 = time.perf_counter()
    full = simulate_full_cds(
        ccs, {i: io_linearizing_controller(full_iso, cfg["eps"]),
              j: zero_dynamics_controller(ccs, j)},
        {i: x0, j: np.zeros(ccs.sub[j].n_x)}, z0, icfg)
    t_full = time.perf_counter() - t0
    rec = reconstruct_full(iso_traj, i)
    err = trajectory_error(rec, full)

    rng = np.random.default_rng(cfg["seed"])
    inv, cdot, dense = 0.0, 0.0, 0.0
    nx, nz, nu = iso.n_x, iso.n_z, iso.n_u
    for _ in range(int(cfg["n_points"])):
        xi = x0 + 0.1 * rng.standard_normal(nx)
        zz = z0 + 0.1 * rng.standard_normal(nz)
        u = rng.standard_normal(nu)
        z = {1: zz, 2: zz.copy()}
        inv = max(inv, float(np.max(np.abs(zero_invariance_residual(iso.relation, xi, z, u)))))
        pt = iso.point(xi, zz, zz)
        _, cd = manifold_residuals(iso, xi, zz, zz, u)
        cdot = max(cdot, float(np.max(np.abs(cd))))
        uZ, lam = coupling_solve(ccs, i, xi, z, u)
        dense = max(dense, float(np.max(np.abs(np.concatenate(
            [uZ - pt.uZ(u), lam - pt.lambda_e(u)])))))
    checks = [
        ("isolation_discrepancy", err["max"], cfg["tol_discrepancy"]),
        ("constraint_drift_isolated", constraint_drift(iso_traj), cfg["tol_drift"]),
        ("constraint_drift_full", constraint_drift(full), cfg["tol_drift"]),
        ("relation_invariance", inv, cfg["tol_relation"]),
        ("relation_cdot", cdot, cfg["tol_relation"]),
        ("relation_vs_direct_solve", dense, cfg["tol_relation"]),
    ]
    report = {
        "model": cfg["model"], "isolate": i,
        "checks": [{"name": n, "value": v, "tol": t, "pass": bool(v <= t)} for n, v, t in checks],
        "per_signal_max": {k: v["max"] for k, v in err.items() if isinstance(v, dict)},
    }
    failed = [c["name"] for c in report["checks"] if not c["pass"]]
    report["passed"] = not failed
    files = [io.write_json(out / "verify_report.json", report)]
    for c in report["checks"]:
        print(f"{'PASS' if c['pass'] else 'FAIL'} {c['name']}: {c['value']:.3e} (tol {c['tol']:.1e})")
    if failed:
        print(f"verify failed: {', '.join(failed)}", file=sys.stderr)
    return (EXIT_CHECK if failed else EXIT_OK), files, {"isolated_s": t_iso, "full_s": t_full}


def cmd_simulate(cfg, out):
    """Integrate the full CDS or the isolated subsystem; CSV with energy and drift columns."""
    system = _system(cfg)
    ccs, i = system.ccs, cfg["isolate"]
    j = other(i)
    x0, z0 = _initial_state(cfg, system, i)
    icfg = _integrator(cfg, None if cfg["baumgarte"] is None else tuple(cfg["baumgarte"]))
    if cfg["controller"] not in ("io", "zero_input"):
        raise ConfigError("controller must be 'io' or 'zero_input'")
    iso = IsolatedModel(ccs, i)

    def zero_input(v):
        n = ccs.sub[v].n_u
        return lambda x_v, z: np.zeros(n)

    t0 = time.perf_counter()
    if cfg["mode"] == "full":
        if cfg["controller"] == "io":
            ctrls = {i: io_linearizing_controller(iso, cfg["eps"]),
                     j: zero_dynamics_controller(ccs, j)}
        else:
            ctrls = {1: zero_input(1), 2: zero_input(2)}
        traj = simulate_full_cds(ccs, ctrls, {i: x0, j: np.zeros(ccs.sub[j].n_x)}, z0, icfg)
        energy_traj = traj
        drift = _drift_column(traj, "z_1", "z_2")
    elif cfg["mode"] == "isolated":
        ctrl = (io_linearizing_controller(iso, cfg["eps"]) if cfg["controller"] == "io"
                else zero_input(i))
        traj = simulate_isolated(iso, ctrl, x0, z0, icfg)
        energy_traj = reconstruct_full(traj, i)
        drift = _drift_column(traj, f"z_{i}", f"z_{j}")
    else:
        raise ConfigError("mode must be 'full' or 'isolated'")
    elapsed = time.perf_counter() - t0
    energy = _energy(system, energy_traj)
    header, rows = io.trajectory_table(traj, {"energy": energy, "drift": drift})
    files = [io.write_csv(out / "trajectory.csv", header, rows)]
    summary = {
        "mode": cfg["mode"], "controller": cfg["controller"], "steps": icfg.n_steps,
        "energy_range": float(energy.max() - energy.min()), "max_drift": float(drift.max()),
        "final_time": float(traj.times[-1]),
    }
    files.append(io.write_json(out / "summary.json", summary))
    try:
        files.append(io.write_svg(out / "phase.svg", [(
            f"x_{i}[0] vs x_{i}[1]", traj.states[f"x_{i}"][:, 0], traj.states[f"x_{i}"][:, 1])],
            title=f"{cfg['model']} phase portrait"))
    except (IndexError, OSError) as exc:
        log.warning("phase portrait skipped: %s", exc)
    print(f"simulated {icfg.n_steps} steps; energy range {summary['energy_range']:.3e}, "
          f"max drift {summary['max_drift']:.3e}")
    return EXIT_OK, files, {"simulate_s": elapsed}


def _path_constraints(specs, iso):
    out = []
    for s in specs:
        kind = s.get("type")
        try:
            if kind == "clearance":
                out.append(clearance(s["field"], int(s["index"]), float(s["min"])))
            elif kind == "amplitude":
                out.append(amplitude_bound(s["field"], int(s["index"]), float(s["bound"])))
            elif kind == "lambda_ceiling":
                out.append(lambda_ceiling(float(s["limit"]), iso.n_lambda))
            else:
                raise ConfigError(f"unknown path constraint type {kind!r}")
        except KeyError as exc:
            raise ConfigError(f"path constraint {kind!r} is missing {exc}") from None
    return out


def cmd_optimize(cfg, out):
    """Periodic orbit of the isolated subsystem; solution, postchecks and portraits."""
    system = _system(cfg)
    i = cfg["isolate"]
    iso = IsolatedModel(system.ccs, i)
    grid = Grid(int(cfg["K"]), float(cfg["T"]))
    if cfg["reset"] == "identity":
        reset = identity_reset
    elif cfg["reset"] == "impact":
        m = system.parts[i - 1]
        if m.J_contact is None:
            raise ConfigError(f"vertex {i} of {cfg['model']!r} has no contact for an impact reset")
        reset = impact_reset(m, system.outputs[i - 1], iso)
    else:
        raise ConfigError("reset must be 'identity' or 'impact'")
    anchors = tuple((str(f), int(k), float(v)) for f, k, v in cfg["anchors"])
    bounds = {k: tuple(v) for k, v in cfg["bounds"].items()}
    t0 = time.perf_counter()
    try:
        prob = assemble(iso, grid, cost=cfg["cost"], path=_path_constraints(cfg["path"], iso),
                        reset=reset, bounds=bounds, anchors=anchors,
                        eps_contraction=cfg["eps_contraction"],
                        guess={"amplitude": float(cfg["guess_amplitude"])})
    except (KeyError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    for k, v, lo, hi in prob.context["initial_bound_violations"]:
        log.warning("initial guess violates bound %d: %.3g not in [%.3g, %.3g]", k, v, lo, hi)
    scfg = SolverConfig(eq_tol=cfg["eq_tol"], ineq_tol=cfg["ineq_tol"], stat_tol=cfg["stat_tol"],
                        max_outer=int(cfg["max_outer"]))
    sol = solve(prob, scfg)
    t_solve = time.perf_counter() - t0
    traj, report = solution_to_trajectory(sol.x, prob, int(cfg["resim_substeps"]),
                                          cfg["interpolation"])
    header, rows = io.trajectory_table(traj)
    files = [io.write_csv(out / "solution.csv", header, rows)]
    ok_resim = report["resim_gap_inf"] <= cfg["resim_tol"]
    ok_full = report["full_periodicity_inf"] <= cfg["resim_tol"]
    result = {
        "status": sol.status, "cost": sol.cost, "feasibility": sol.feasibility,
        "ineq_violation": sol.ineq_violation, "stationarity": sol.stationarity,
        "iterations": sol.iterations, "n_variables": prob.n,
        "n_equalities": int(prob.eq(sol.x).shape[0]),
        "initial_bound_violations": len(prob.context["initial_bound_violations"]),
        "decision_vector": sol.x,
    }
    files.append(io.write_json(out / "solution.json", result))
    post = {**report, "resim_tol": cfg["resim_tol"], "resim_pass": ok_resim,
            "full_periodicity_pass": ok_full}
    files.append(io.write_json(out / "postcheck.json", post))
    files.append(io.write_json(out / "solver_log.json", sol.log))
    curves = []
    for fa, ka, fb, kb in cfg["portraits"]:
        key = {"x": f"x_{i}", "zi": f"z_{i}", "u": f"u_{i}"}
        try:
            src = {**traj.states, **traj.inputs}
            curves.append((f"{fa}[{ka}] vs {fb}[{kb}]", src[key[fa]][:, int(ka)],
                           src[key[fb]][:, int(kb)]))
        except (KeyError, IndexError) as exc:
            log.warning("portrait %s skipped: %s", (fa, ka, fb, kb), exc)
    if curves:
        try:
            files.append(io.write_svg(out / "phase.svg", curves,
                                      title=f"{cfg['model']} limit cycle (nodes)"))
        except OSError as exc:
            log.warning("phase portrait skipped: %s", exc)
    ok = sol.converged and ok_resim and ok_full
    if not sol.converged:
        (out / "FAILED").write_text(f"solver status: {sol.status}\n")
        files.append(out / "FAILED")
    print(f"{sol.status}: feasibility {sol.feasibility:.2e}, stationarity {sol.stationarity:.2e}, "
          f"{sol.iterations} iterations; resim gap {report['resim_gap_inf']:.2e}, "
          f"full periodicity {report['full_periodicity_inf']:.2e}")
    return (EXIT_OK if ok else EXIT_CHECK), files, {"solve_s": t_solve, "total_s": time.perf_counter() - t0}


COMMANDS = {"verify": cmd_verify, "simulate": cmd_simulate, "optimize": cmd_optimize}


def build_parser():
    p = argparse.ArgumentParser(prog="coupledsys", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name, help=COMMANDS[name].__doc__.splitlines()[0])
        s.add_argument("--config", type=Path, help="JSON config document")
        s.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        s.add_argument("--seed", type=int)
        s.add_argument("--model")
        s.add_argument("--isolate", type=int)
        s.add_argument("--verbose", action="store_true")
        if name in ("verify", "simulate"):
            s.add_argument("--horizon", type=float)
            s.add_argument("--h", type=float)
            s.add_argument("--eps", type=float)
        if name == "verify":
            s.add_argument("--broken-relation", action="store_const", const=True,
                           dest="broken_relation")
        if name == "simulate":
            s.add_argument("--mode", choices=("full", "isolated"))
            s.add_argument("--controller", choices=("io", "zero_input"))
        if name == "optimize":
            s.add_argument("--K", type=int)
            s.add_argument("--T", type=float)
            s.add_argument("--cost", choices=("effort", "base_accel"))
            s.add_argument("--reset", choices=("identity", "impact"))
            s.add_argument("--eps-contraction", type=float, dest="eps_contraction")
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {k: v for k, v in vars(args).items()
                 if k not in ("command", "config", "out", "verbose") and v is not None}
    try:
        doc = {}
        if args.config is not None:
            doc = json.loads(args.config.read_text())
            if not isinstance(doc, dict):
                raise ConfigError("config must be a JSON object")
            doc.pop("command", None)
        cfg = RunConfig.build(args.command, doc, overrides)
        args.out.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        code, files, timings = COMMANDS[args.command](cfg, args.out)
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DimensionError, SingularityError, ConvergenceError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CHECK
    timings["wall_s"] = time.perf_counter() - t0
    io.write_manifest(args.out, args.command, cfg.values, files, timings,
                      "ok" if code == EXIT_OK else "failed")
    return code


if __name__ == "__main__":
    sys.exit(main())
