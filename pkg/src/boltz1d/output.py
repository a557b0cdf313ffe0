"""Run artifacts: diagnostics CSV, manifest JSON, snapshots and plain SVG plots.

Everything written here is a function of the config, seed and trajectory only
(no timestamps or wall times), so repeated runs produce identical bytes.
"""

from __future__ import annotations

import csv
import json
import math
import platform
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import CSV_COLUMNS
from .state import write_snapshot

PLOTTED = ("mass", "energy", "H", "X", "L", "D_B", "A", "rho_sq")


def _num(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def versions() -> dict:
    import numba
    import scipy
    return {"boltz1d": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__, "numba": numba.__version__}


def write_csv(records, path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow([_num(v) for v in r.row()])


def svg_plot(t, y, title: str, width: int = 480, height: int = 300) -> str:
    """Single-series line plot with labelled extremes."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = np.isfinite(t) & np.isfinite(y)
    t, y = t[ok], y[ok]
    ml, mr, mt, mb = 70, 20, 30, 40
    pw, ph = width - ml - mr, height - mt - mb
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
             f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
             f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="13">{title}</text>',
             f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>']
    if t.size:
        t0, t1 = float(t.min()), float(t.max())
        y0, y1 = float(y.min()), float(y.max())
        if t1 == t0:
            t1 = t0 + 1.0
        if y1 == y0:
            pad = abs(y0) * 1e-6 or 1.0
            y0, y1 = y0 - pad, y1 + pad
        xs = ml + (t - t0) / (t1 - t0) * pw
        ys = mt + ph - (y - y0) / (y1 - y0) * ph
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(xs, ys))
        parts.append(f'<polyline fill="none" stroke="#1f5fa8" stroke-width="1.5" points="{pts}"/>')
        parts += [f'<text x="{ml - 4}" y="{mt + 4}" text-anchor="end">{y1:.4g}</text>',
                  f'<text x="{ml - 4}" y="{mt + ph}" text-anchor="end">{y0:.4g}</text>',
                  f'<text x="{ml}" y="{mt + ph + 16}" text-anchor="middle">{t0:.4g}</text>',
                  f'<text x="{ml + pw}" y="{mt + ph + 16}" text-anchor="middle">{t1:.4g}</text>',
                  f'<text x="{ml + pw / 2:.1f}" y="{height - 6}" text-anchor="middle">t</text>']
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_outputs(traj, cfg, outdir=None, checks=(), extra=None) -> dict:
    """Write the run directory; returns {kind: path}.

    An empty trajectory (no records) produces the manifest only.
    """
    outdir = Path(outdir if outdir is not None else cfg.get("output.directory"))
    outdir.mkdir(parents=True, exist_ok=True)
    fmts = {s.strip() for s in cfg.get("output.formats").split(",") if s.strip()}
    written = {}
    records = list(traj.records) if traj is not None else []
    if records and "csv" in fmts:
        p = outdir / "diagnostics.csv"
        write_csv(records, p)
        written["csv"] = str(p)
    if records and "svg" in fmts:
        pdir = outdir / "plots"
        pdir.mkdir(exist_ok=True)
        t = traj.column("t")
        for name in PLOTTED:
            p = pdir / f"{name}.svg"
            p.write_text(svg_plot(t, traj.column(name), name), encoding="utf-8")
        written["svg"] = str(pdir)
    if traj is not None and traj.snapshots:
        sdir = outdir / "snapshots"
        sdir.mkdir(exist_ok=True)
        for i, s in enumerate(traj.snapshots):
            write_snapshot(s, sdir / f"state_{i:04d}.txt")
        written["snapshots"] = str(sdir)
    counters = dict(traj.counters) if traj is not None else {}
    manifest = {
        "config": cfg.flat(),
        "preset": cfg.preset,
        "seed": cfg.seed,
        "versions": versions(),
        "status": traj.status if traj is not None else "not-run",
        "error": traj.error if traj is not None else None,
        "n_records": len(records),
        "leakage": {"velocity": counters.get("leak_v", 0.0), "spatial_outflow": counters.get("leak_x", 0.0)},
        "counters": counters,
        "warnings": list(cfg.warnings),
        "checks": [c.as_dict() for c in checks],
        "all_checks_hold": all(c.holds for c in checks),
        "columns": list(CSV_COLUMNS),
    }
    if extra:
        manifest.update(extra)
    p = outdir / "manifest.json"
    p.write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    written["json"] = str(p)
    return written
