"""Output writers: trajectory CSV, JSON reports, SVG phase portraits, run manifest."""
import csv
import json
import platform
import sys
from pathlib import Path

import numpy as np


def fmt(v):
    """17 significant digits, enough to round-trip a double."""
    return f"{float(v):.17g}"


def _columns(name, arr):
    arr = np.asarray(arr, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    return [f"{name}[{k}]" for k in range(arr.shape[1])], arr


def trajectory_table(traj, extra=None):
    """Header and rows of a trajectory, in the order states, inputs, lambda_e, extras.

    ``lambda_ebar`` is omitted since it is the negative of ``lambda_e``.
    """
    header, blocks = ["t"], [traj.times[:, None]]
    groups = list(traj.states.items()) + list(traj.inputs.items())
    if "lambda_e" in traj.lambdas:
        groups.append(("lambda_e", traj.lambdas["lambda_e"]))
    groups += list((extra or {}).items())
    for name, arr in groups:
        names, a = _columns(name, arr)
        if a.shape[0] != traj.times.shape[0]:
            raise ValueError(f"column group {name!r} has {a.shape[0]} rows, expected {traj.times.shape[0]}")
        header += names
        blocks.append(a)
    return header, np.hstack(blocks)


def write_csv(path, header, rows):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])
    return path


def read_csv(path):
    """``(header, rows)``; the inverse of :func:`write_csv`."""
    with Path(path).open(newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        rows = np.array([[float(v) for v in r] for r in rd], dtype=float)
    return header, rows.reshape(-1, len(header))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, obj):
    path = Path(path)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def write_svg(path, curves, title="", size=(480, 360), pad=40):
    """Polyline plot of ``curves``: a list of ``(label, xs, ys)``.

    Each curve is scaled into a shared box; degenerate ranges are widened.
    """
    W, H = size
    xs_all = np.concatenate([np.asarray(c[1], float) for c in curves]) if curves else np.zeros(1)
    ys_all = np.concatenate([np.asarray(c[2], float) for c in curves]) if curves else np.zeros(1)
    finite = np.isfinite(xs_all) & np.isfinite(ys_all)
    if not finite.any():
        xs_all = ys_all = np.zeros(1)
    else:
        xs_all, ys_all = xs_all[finite], ys_all[finite]
    x0, x1 = float(xs_all.min()), float(xs_all.max())
    y0, y1 = float(ys_all.min()), float(ys_all.max())
    if x1 - x0 < 1e-12:
        x0, x1 = x0 - 1.0, x1 + 1.0
    if y1 - y0 < 1e-12:
        y0, y1 = y0 - 1.0, y1 + 1.0

    def sx(v):
        return pad + (v - x0) / (x1 - x0) * (W - 2 * pad)

    def sy(v):
        return H - pad - (v - y0) / (y1 - y0) * (H - 2 * pad)

    palette = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
           f'viewBox="0 0 {W} {H}">',
           f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
           f'<rect x="{pad}" y="{pad}" width="{W - 2 * pad}" height="{H - 2 * pad}" '
           'fill="none" stroke="#999"/>',
           f'<text x="{W / 2:.1f}" y="{pad / 2:.1f}" text-anchor="middle" '
           f'font-family="sans-serif" font-size="13">{title}</text>']
    for k, (label, xs, ys) in enumerate(curves):
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(xs, ys)
                       if np.isfinite(a) and np.isfinite(b))
        color = palette[k % len(palette)]
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        out.append(f'<text x="{pad + 4}" y="{H - pad + 16 + 12 * k}" font-family="sans-serif" '
                   f'font-size="11" fill="{color}">{label}</text>')
    out.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(out) + "\n")
    return path


def versions():
    from . import __version__, kernels

    return {
        "coupledsys": __version__,
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "platform": platform.platform(),
        "kernel_backend": kernels.BACKEND,
    }


def write_manifest(out_dir, command, config, files, timings, status):
    """``manifest.json``: config echo, versions, timings and the files written."""
    return write_json(Path(out_dir) / "manifest.json", {
        "command": command,
        "config": config,
        "versions": versions(),
        "timings_s": timings,
        "files": sorted(str(Path(f).name) for f in files),
        "status": status,
    })
