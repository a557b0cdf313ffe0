"""Scalar functionals of a state: moments, entropies, X norm, Bony functionals, A(t)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from .collision import get_operator
from .kernel import CollisionKernel, SphereQuadrature
from .state import (DistributionState, MaxwellianSpec, PhaseGrid, maxwellian_velocity,
                    moments)

CSV_COLUMNS = ("t", "mass", "px", "py", "pz", "energy", "H", "H_rel", "D_H", "X", "X_err",
               "L", "D_B", "ell", "A", "rho_sq", "leak_v", "leak_x", "clip_count")


# Green's functions -----------------------------------------------------------

@dataclass(frozen=True)
class GreensFunction:
    """Derivative g' of the 1D Green's function, g'' = -delta (+ 1/L on the torus)."""

    kind: str
    L: float = 1.0

    def g_prime(self, d):
        d = np.asarray(d, dtype=float)
        if self.kind == "line":
            return -0.5 * np.sign(d)
        # wrap into [-L/2, L/2]
        w = d - self.L * np.round(d / self.L)
        return -0.5 * np.sign(w) + w / self.L

    __call__ = g_prime


# X norm ----------------------------------------------------------------------

@dataclass
class XNorm:
    value: float
    error_bound: float
    q_grid: np.ndarray = field(repr=False)
    profile: np.ndarray = field(repr=False)
    lipschitz: float = 0.0

    def sup_from(self, q0: float) -> float:
        """Sampled sup of ||S_q f||_{L^inf L^1} over q >= q0 within the window."""
        m = self.q_grid >= q0 - 1e-15
        return float(self.profile[m].max()) if np.any(m) else float("nan")


def default_q_max(grid: PhaseGrid) -> float:
    if grid.is_torus:
        return 4.0 * grid.L * grid.Nv
    return 10.0 * grid.L / grid.Vmax


def reduce_to_v1(values: np.ndarray, grid: PhaseGrid) -> np.ndarray:
    """(Nx, Nv) array dv^3 sum_{v2, v3} |f|."""
    return np.abs(values).sum(axis=(2, 3)) * grid.dv ** 3


def shifted_density(rho1: np.ndarray, grid: PhaseGrid, qs: np.ndarray) -> np.ndarray:
    """For each q: x -> sum_k rho1(x - q v1_k, k) with linear interpolation; shape (n_q, Nx)."""
    Nx, Nv = rho1.shape
    qs = np.atleast_1d(np.asarray(qs, dtype=float))
    s = qs[:, None] * grid.v[None, :] / grid.dx
    n = np.floor(s)
    near = np.abs(s - np.round(s)) < 1e-9
    n = np.where(near, np.round(s), n)
    a = np.clip(s - n, 0.0, 1.0)
    n = n.astype(np.int64)
    i = np.arange(Nx)[None, :, None]
    kk = np.arange(Nv)[None, None, :]
    out = np.zeros((qs.size, Nx))
    for off, wt in ((n, 1.0 - a), (n + 1, a)):
        src = i - off[:, None, :]
        if grid.is_torus:
            src = np.mod(src, Nx)
            vals = rho1[src, np.broadcast_to(kk, src.shape)]
        else:
            ok = (src >= 0) & (src < Nx)
            vals = np.where(ok, rho1[np.clip(src, 0, Nx - 1), np.broadcast_to(kk, src.shape)], 0.0)
        out += np.sum(wt[:, None, :] * vals, axis=2)
    return out


def x_norm(state, q_max: Optional[float] = None, n_q: int = 256, base: float = 0.0,
           grid: Optional[PhaseGrid] = None) -> XNorm:
    """Certified lower bound of sup_{q >= base} ||S_q f||_{L^inf_x L^1_v} on [base, base+q_max].

    Accepts a state or a raw (Nx, Nv, Nv, Nv) array (with ``grid``); signed
    arrays are measured through |f|.
    """
    if isinstance(state, DistributionState):
        grid, values = state.grid, state.values
    else:
        values = np.asarray(state)
        if grid is None:
            raise ValueError("grid required for raw arrays")
    if n_q < 1:
        raise ValueError("n_q must be >= 1")
    q_max = default_q_max(grid) if q_max is None else float(q_max)
    qs = base + (np.linspace(0.0, q_max, n_q) if n_q > 1 else np.zeros(1))
    rho1 = reduce_to_v1(values, grid)
    prof = shifted_density(rho1, grid, qs).max(axis=1)
    # q-Lipschitz constant: sum_v |v1| dv^3 max_x |forward x-difference| / dx
    a = np.abs(values)
    if grid.is_torus:
        dif = np.abs(np.roll(a, -1, axis=0) - a)
    else:
        z = np.zeros((1,) + a.shape[1:])
        dif = np.abs(np.diff(np.concatenate([z, a, z]), axis=0))
    row = dif.max(axis=0)
    lip = float(np.sum(np.abs(grid.v)[:, None, None] * row) * grid.dv ** 3 / grid.dx)
    dq = q_max / (n_q - 1) if n_q > 1 else 0.0
    return XNorm(float(prof.max()), 0.5 * lip * dq, qs, prof, lip)


def linf_l1(state: DistributionState) -> float:
    return float(reduce_to_v1(state.values, state.grid).sum(axis=1).max())


# entropies -------------------------------------------------------------------

@dataclass
class EntropyFunctionals:
    H: float
    H_rel: float
    D_H: float
    clamped: int = 0


def entropy(values: np.ndarray, grid: PhaseGrid) -> float:
    f = values[values > 0]
    return float(np.sum(f * np.log(f)) * grid.cell)


def reference_values(reference: MaxwellianSpec, grid: PhaseGrid) -> np.ndarray:
    """Spatially uniform discrete Maxwellian with total mass reference.m."""
    return maxwellian_velocity(reference, grid, density=reference.m / grid.length)


def relative_entropy(state: DistributionState, reference: MaxwellianSpec, rtol: float = 1e-6) -> float:
    m = state.mass
    if abs(m - reference.m) > rtol * reference.m:
        raise ValueError(f"mass mismatch for relative entropy: state {m!r}, reference {reference.m!r}")
    M = reference_values(reference, state.grid)
    f = state.values
    pos = f > 0
    Mb = np.broadcast_to(M, f.shape)
    return float(np.sum(f[pos] * np.log(f[pos] / Mb[pos])) * state.grid.cell)


def entropy_production(state: DistributionState, kernel: CollisionKernel,
                       quad: Optional[SphereQuadrature] = None, interpolation="maxwellian"):
    """(D_H, clamp count) with the collision module's pair/sigma quadrature."""
    op = get_operator(state.grid, kernel, quad, interpolation)
    acc, n = op.entropy_production(state.values)
    return float(acc.sum() * state.grid.dx), n


def entropy_functionals(state: DistributionState, reference: Optional[MaxwellianSpec] = None,
                        kernel: Optional[CollisionKernel] = None,
                        quad: Optional[SphereQuadrature] = None) -> EntropyFunctionals:
    H = entropy(state.values, state.grid)
    H_rel = relative_entropy(state, reference) if reference is not None else float("nan")
    D, n = (entropy_production(state, kernel, quad) if kernel is not None else (float("nan"), 0))
    return EntropyFunctionals(H, H_rel, D, n)


def density_relative_entropy(rho: np.ndarray, dx: float, mbar: float):
    """(H(rho|mbar), H^-(rho|mbar)) for a density against the constant mbar."""
    rho = np.asarray(rho, dtype=float)
    pos = rho > 0
    t = np.zeros_like(rho)
    t[pos] = rho[pos] * np.log(rho[pos] / mbar)
    return float(t.sum() * dx), float(-t[t < 0].sum() * dx)


# Bony functionals --------------------------------------------------------------

def v1_moments(state: DistributionState):
    """rho, J = int v1 f dv, E = int v1^2 f dv per x-cell."""
    g = state.grid
    red = state.values.sum(axis=(2, 3)) * g.dv ** 3
    v = g.v
    return red.sum(axis=1), red @ v, red @ (v * v)


def bony_functionals(state: DistributionState):
    """(L, D_B, ell); ell is 0 on the line."""
    g = state.grid
    rho, J, E = v1_moments(state)
    x = g.x
    G = GreensFunction(g.spatial_kind, g.L).g_prime(x[:, None] - x[None, :])
    L = 2.0 * g.dx * g.dx * float(J @ G @ rho)
    D_B = 2.0 * g.dx * float(np.sum(rho * E - J * J))
    if g.is_torus:
        m = rho.sum() * g.dx
        Et = E.sum() * g.dx
        Jt = J.sum() * g.dx
        ell = 2.0 * (m * Et - Jt * Jt) / g.L
    else:
        ell = 0.0
    return L, D_B, ell


def collision_rate_A(state: DistributionState, kernel: CollisionKernel,
                     quad: Optional[SphereQuadrature] = None) -> float:
    if kernel.is_zero:
        return 0.0
    return get_operator(state.grid, kernel, quad).collision_rate(state.values)


def rho_sq(state: DistributionState) -> float:
    rho, _, _ = v1_moments(state)
    return float(np.sum(rho * rho) * state.grid.dx)


def rho_l2_sides(state: DistributionState, reference: MaxwellianSpec, eps: float, **xn_kw):
    """Both sides of the rho-L^2 bound; the reference density is m / L on a torus of length L."""
    if not state.grid.is_torus:
        raise ValueError("rho-L2 bound is stated on the torus")
    if not eps > 0:
        raise ValueError("eps must be positive")
    m = reference.m
    mbar = m / state.grid.length
    H = max(relative_entropy(state, reference), 0.0)
    X = x_norm(state, **xn_kw).value
    lhs = rho_sq(state)
    lp = max(math.log(X / mbar), 0.0) if X > 0 else 0.0
    rhs = (eps * m + H + math.sqrt(m * H / 2.0)) * max(mbar / eps, X / (lp + eps))
    return lhs, rhs


# records -----------------------------------------------------------------------

@dataclass
class DiagnosticsRecord:
    t: float
    mass: float
    px: float
    py: float
    pz: float
    energy: float
    H: float
    H_rel: float
    D_H: float
    X: float
    X_err: float
    L: float
    D_B: float
    ell: float
    A: float
    rho_sq: float
    leak_v: float
    leak_x: float
    clip_count: int

    def row(self):
        return [getattr(self, c) for c in CSV_COLUMNS]

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def compute_record(state: DistributionState, kernel: CollisionKernel,
                   quad: Optional[SphereQuadrature] = None,
                   reference: Optional[MaxwellianSpec] = None,
                   counters: Optional[dict] = None, with_dh: bool = True,
                   q_max: Optional[float] = None, n_q: int = 256) -> DiagnosticsRecord:
    counters = counters or {}
    m, p, e = moments(state)
    H = entropy(state.values, state.grid)
    H_rel = float("nan")
    if reference is not None and abs(m - reference.m) <= 1e-6 * reference.m:
        H_rel = relative_entropy(state, reference)
    D_H = entropy_production(state, kernel, quad)[0] if with_dh else float("nan")
    xn = x_norm(state, q_max=q_max, n_q=n_q)
    L, D_B, ell = bony_functionals(state)
    A = collision_rate_A(state, kernel, quad)
    return DiagnosticsRecord(
        t=float(state.time), mass=m, px=float(p[0]), py=float(p[1]), pz=float(p[2]), energy=e,
        H=H, H_rel=H_rel, D_H=D_H, X=xn.value, X_err=xn.error_bound, L=L, D_B=D_B, ell=ell,
        A=A, rho_sq=rho_sq(state), leak_v=float(counters.get("leak_v", 0.0)),
        leak_x=float(counters.get("leak_x", 0.0)), clip_count=int(counters.get("clip_count", 0)))
