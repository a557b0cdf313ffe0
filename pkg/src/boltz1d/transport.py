"""Free transport S_q f(x, v) = f(x - q v1, v) by linear interpolation in x."""

from __future__ import annotations

import numpy as np

from .state import DistributionState, PhaseGrid, discrete_w11_norm

SNAP = 1e-9


def shift_array(arr: np.ndarray, grid: PhaseGrid, q: float):
    """Shift an array of shape (Nx, Nv, ...) whose axis 1 indexes v1.

    Returns (shifted, outflow) where outflow[k] is the sum of values that left
    the line window for v1-node k (always zero on the torus).
    """
    arr = np.asarray(arr, dtype=float)
    Nx = grid.Nx
    out = np.empty_like(arr)
    outflow = np.zeros(arr.shape[1])
    if q == 0.0:
        out[...] = arr
        return out, outflow
    idx = np.arange(Nx)
    for k, v1 in enumerate(grid.v):
        s = q * v1 / grid.dx
        n = np.floor(s)
        if abs(s - round(s)) < SNAP:
            n = float(round(s))
        a = s - n
        if a < 0:
            a = 0.0
        n = int(n)
        row = arr[:, k]
        # old cell j feeds new cells j + n (weight 1 - a) and j + n + 1 (weight a)
        if grid.is_torus:
            res = (1.0 - a) * np.roll(row, n, axis=0)
            if a > 0:
                res += a * np.roll(row, n + 1, axis=0)
        else:
            res = np.zeros_like(row)
            for off, wt in ((n, 1.0 - a), (n + 1, a)):
                if wt == 0.0:
                    continue
                src = idx - off
                ok = (src >= 0) & (src < Nx)
                res[ok] += wt * row[src[ok]]
            outflow[k] = float(row.sum() - res.sum())
        out[:, k] = res
    return out, outflow


def shift(state: DistributionState, q: float) -> DistributionState:
    """S_q state; line outflow mass is recorded in meta['outflow_mass']."""
    vals, outflow = shift_array(state.values, state.grid, q)
    np.maximum(vals, 0.0, out=vals)
    out = DistributionState.unchecked(state.grid, vals, state.time, state.meta)
    out.meta = dict(state.meta)
    out.meta["outflow_mass"] = float(outflow.sum() * state.grid.cell)
    return out


def dispersion_bound_check(state: DistributionState, t: float, tol: float = 1e-9, **xn_kw):
    """Check ||S_t f||_X <= ||f||_{W^{1,1}} / t on the line."""
    from .diagnostics import x_norm

    if state.grid.is_torus:
        raise ValueError("the dispersive estimate is for the line domain only")
    if not t > 0:
        raise ValueError("t must be positive")
    lhs = x_norm(state, base=t, **xn_kw).value
    rhs = discrete_w11_norm(state) / t
    return lhs, rhs, bool(lhs <= rhs * (1.0 + tol))
