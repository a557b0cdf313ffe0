"""Inequalities asserted along a finished run; each yields a VerifyResult."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .inequality_lab import VerifyResult, bony_bound_curve
from .kernel import CollisionKernel


def _cumtrapz(y, t):
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    if y.size < 2:
        return np.zeros(y.size)
    return np.concatenate([[0.0], np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))])


def _worst(name, lhs, rhs, allowance=0.0, **details):
    """Collapse arrays of (lhs, rhs) to the tightest index."""
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    if lhs.size == 0:
        return VerifyResult(name, 0.0, 0.0, True, allowance, details)
    gap = rhs + allowance - lhs
    k = int(np.argmin(gap))
    return VerifyResult(name, float(lhs[k]), float(rhs[k] + allowance), bool(gap[k] >= 0),
                        float(allowance), {**details, "index": k})


def conservation(traj, grid, mass_rtol=1e-10, momentum_rtol=1e-9, energy_rtol=1e-9):
    """Relative drifts of the collision invariants over the whole run.

    Momentum is measured relative to sqrt(mass * energy).  On the line the
    window loses mass through its ends, so only mass + outflow is checked there.
    """
    out = []
    if grid.is_torus:
        m = traj.step_series("mass")
        e = traj.step_series("energy")
        m0, e0 = m[0], e[0]
        p = np.stack([traj.step_series(k) for k in ("px", "py", "pz")], axis=1)
        scale = math.sqrt(max(m0 * e0, 0.0)) or 1.0
        out.append(VerifyResult("mass_drift", float(np.abs(m - m0).max() / m0), mass_rtol,
                                bool(np.abs(m - m0).max() <= mass_rtol * m0)))
        dp = float(np.abs(p - p[0]).max() / scale)
        out.append(VerifyResult("momentum_drift", dp, momentum_rtol, dp <= momentum_rtol))
        de = float(np.abs(e - e0).max() / e0)
        out.append(VerifyResult("energy_drift", de, energy_rtol, de <= energy_rtol))
    else:
        m = traj.column("mass") + traj.column("leak_x")
        dm = float(np.abs(m - m[0]).max() / m[0]) if m.size else 0.0
        out.append(VerifyResult("mass_plus_outflow_drift", dm, mass_rtol, dm <= mass_rtol))
    return out


def entropy_monotone(traj, slack=1e-4):
    """H(t_{n+1}) <= H(t_n) + slack |H(0)| for every step."""
    H = traj.step_series("H")
    if H.size < 2:
        return VerifyResult("entropy_monotone", 0.0, 0.0, True)
    tol = slack * abs(H[0])
    inc = np.diff(H)
    k = int(np.argmax(inc))
    return VerifyResult("entropy_monotone", float(inc[k]), tol, bool(inc[k] <= tol), 0.0,
                        {"step": k + 1, "max_increase": float(inc[k]), "slack_abs": tol})


def bony_inequality(traj, rtol=0.05, outflow_tol=1e-6):
    """L(t) + int D_B <= L(0) + int ell + rtol int D_B at every step.

    On the line the functional only sees the window, and it stops being
    monotone once mass exits, so steps are checked only while the cumulative
    outflow is below ``outflow_tol`` times the initial mass.
    """
    t = traj.step_series("t")
    L = traj.step_series("L")
    iD = _cumtrapz(traj.step_series("D_B"), t)
    il = _cumtrapz(traj.step_series("ell"), t)
    out = traj.step_series("leak_x")
    keep = np.ones(t.size, dtype=bool)
    if out.size == t.size and out.size:
        keep = out <= outflow_tol * traj.step_series("mass")[0]
    n_keep = int(keep.sum())
    t_last = float(t[keep][-1]) if n_keep else 0.0
    return _worst("bony_inequality", (L + iD)[keep], (L[0] + il + rtol * iD)[keep], rtol=rtol,
                  checked_until=t_last, steps_checked=n_keep)


@dataclass
class GrowthConstants:
    c: float      # quadratic (short-time) constant
    a_scale: float  # multiplies A(t)


def growth_constants(kernel: CollisionKernel, grid) -> GrowthConstants:
    """c = 8 pi ||phi||_1; a(s) = 4 pi / delta (1 + 1/R0) R0^-2 max(1, 1/L) A(s).

    The R0^-2 converts the r^2-weighted rate A into the unweighted pair integral
    on r >= R0; the max(1, 1/L) accounts for window crossings on the torus.
    """
    if kernel.is_zero or not kernel.R0 > 0 or not math.isfinite(kernel.phi_l1):
        return GrowthConstants(math.nan, math.nan)
    tor = max(1.0, 1.0 / grid.L) if grid.is_torus else 1.0
    a = 4.0 * math.pi / kernel.delta * (1.0 + 1.0 / kernel.R0) / kernel.R0 ** 2 * tor
    return GrowthConstants(8.0 * math.pi * kernel.phi_l1, a)


def growth_bound(traj, kernel: CollisionKernel, grid):
    """Measured X (plus its sampling error) against the quadratic growth bound, in log space."""
    gc = growth_constants(kernel, grid)
    if not math.isfinite(gc.c):
        return VerifyResult("growth_bound", math.nan, math.nan, True, 0.0,
                            {"skipped": "kernel lacks R0 > 0 or an integrable envelope"})
    t = traj.step_series("t")
    A = traj.step_series("A")
    X = traj.column("X") + traj.column("X_err")
    tr = traj.column("t")
    logb = bony_bound_curve(gc.c, gc.a_scale * A, X[0] if X.size else 0.0, t)
    idx = np.clip(np.searchsorted(t, tr - 1e-12), 0, t.size - 1)
    with np.errstate(divide="ignore"):
        lx = np.log(np.maximum(X, 0.0))
    res = _worst("growth_bound", lx, logb[idx], log_space=True, c=gc.c, a_scale=gc.a_scale)
    return res


def positivity(traj):
    n = int(traj.counters.get("clip_count", 0))
    return VerifyResult("no_clipping", float(n), 0.0, n == 0)


def run_checks(traj, cfg) -> list:
    """All checks enabled in the [checks] block of an ExperimentConfig."""
    grid, kernel = cfg.grid(), cfg.kernel()
    c = cfg.values["checks"]
    out = conservation(traj, grid, c["mass_rtol"], c["momentum_rtol"], c["energy_rtol"])
    if cfg.flag("checks.entropy"):
        out.append(entropy_monotone(traj, c["entropy_slack"]))
    if cfg.flag("checks.bony"):
        out.append(bony_inequality(traj, c["bony_rtol"]))
    if cfg.flag("checks.growth"):
        out.append(growth_bound(traj, kernel, grid))
    if cfg.flag("checks.positivity"):
        out.append(positivity(traj))
    return out
