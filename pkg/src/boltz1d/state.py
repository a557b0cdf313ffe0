"""Phase-space grids, distribution states, Maxwellians, moments and discrete norms."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

SPATIAL_KINDS = ("torus", "line")


@dataclass(frozen=True)
class PhaseGrid:
    """Cell-centred grid on Omega_x x [-Vmax, Vmax]^3.

    Torus: x in [0, L) periodic.  Line: x in [-L, L] with outflow.
    """

    spatial_kind: str
    L: float
    Nx: int
    Vmax: float
    Nv: int

    def __post_init__(self):
        errs = []
        if self.spatial_kind not in SPATIAL_KINDS:
            errs.append(f"spatial_kind must be one of {SPATIAL_KINDS}")
        if not self.L > 0:
            errs.append("L must be positive")
        if self.Nx < 2:
            errs.append("Nx must be >= 2")
        if self.Nv < 2 or self.Nv % 2:
            errs.append("Nv must be even and >= 2")
        if not self.Vmax > 0:
            errs.append("Vmax must be positive")
        if errs:
            raise ValueError("; ".join(errs))

    @property
    def length(self) -> float:
        """Measure of the spatial domain."""
        return self.L if self.spatial_kind == "torus" else 2.0 * self.L

    @property
    def dx(self) -> float:
        return self.length / self.Nx

    @property
    def dv(self) -> float:
        return 2.0 * self.Vmax / self.Nv

    @property
    def is_torus(self) -> bool:
        return self.spatial_kind == "torus"

    @property
    def x(self) -> np.ndarray:
        x0 = 0.0 if self.is_torus else -self.L
        return x0 + (np.arange(self.Nx) + 0.5) * self.dx

    @property
    def v(self) -> np.ndarray:
        return -self.Vmax + (np.arange(self.Nv) + 0.5) * self.dv

    @property
    def shape(self):
        return (self.Nx, self.Nv, self.Nv, self.Nv)

    def velocity_mesh(self):
        v = self.v
        return np.meshgrid(v, v, v, indexing="ij")

    def speed_sq(self) -> np.ndarray:
        v1, v2, v3 = self.velocity_mesh()
        return v1 * v1 + v2 * v2 + v3 * v3

    @property
    def cell(self) -> float:
        """Phase-space cell volume dx dv^3."""
        return self.dx * self.dv ** 3

    def describe(self) -> dict:
        return {"spatial_kind": self.spatial_kind, "L": self.L, "Nx": self.Nx,
                "Vmax": self.Vmax, "Nv": self.Nv, "dx": self.dx, "dv": self.dv}


@dataclass
class DistributionState:
    grid: PhaseGrid
    values: np.ndarray
    time: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("state has non-finite values")
        if np.any(self.values < 0):
            raise ValueError("state has negative values")

    @classmethod
    def unchecked(cls, grid, values, time=0.0, meta=None):
        """Build without validation, for internal hot paths and signed fields."""
        obj = cls.__new__(cls)
        obj.grid, obj.values, obj.time, obj.meta = grid, values, time, dict(meta or {})
        return obj

    def copy(self) -> "DistributionState":
        return DistributionState.unchecked(self.grid, self.values.copy(), self.time, self.meta)

    def with_values(self, values, time=None) -> "DistributionState":
        return DistributionState.unchecked(self.grid, values, self.time if time is None else time,
                                           self.meta)

    @property
    def mass(self) -> float:
        return float(self.values.sum() * self.grid.cell)

    def __add__(self, other: "DistributionState") -> "DistributionState":
        if other.grid != self.grid:
            raise ValueError("grid mismatch")
        return DistributionState(self.grid, self.values + other.values, self.time)


@dataclass(frozen=True)
class MaxwellianSpec:
    m: float = 1.0
    u: tuple = (0.0, 0.0, 0.0)
    T: float = 1.0

    def __post_init__(self):
        if not self.m > 0 or not self.T > 0:
            raise ValueError("Maxwellian needs m > 0 and T > 0")
        if len(self.u) != 3:
            raise ValueError("u must be a 3-vector")


def default_vmax(T_max: float, u_max: float = 0.0) -> float:
    return 6.0 * math.sqrt(T_max) + abs(u_max)


def gaussian_velocity(grid: PhaseGrid, u=(0.0, 0.0, 0.0), T: float = 1.0) -> np.ndarray:
    """Unnormalized exp(-|v-u|^2/2T) on the velocity grid."""
    v1, v2, v3 = grid.velocity_mesh()
    r2 = (v1 - u[0]) ** 2 + (v2 - u[1]) ** 2 + (v3 - u[2]) ** 2
    return np.exp(-r2 / (2.0 * T))


def maxwellian_velocity(spec: MaxwellianSpec, grid: PhaseGrid, density: float = 1.0) -> np.ndarray:
    """Velocity profile with discrete integral dv^3 sum = density, exactly renormalized."""
    g = gaussian_velocity(grid, spec.u, spec.T)
    return g * (density / (g.sum() * grid.dv ** 3))


def maxwellian_state(spec: MaxwellianSpec, grid: PhaseGrid,
                     rho_profile: Optional[np.ndarray] = None) -> DistributionState:
    """Global Maxwellian of total mass spec.m, optionally modulated by a spatial profile."""
    prof = np.ones(grid.Nx) if rho_profile is None else np.asarray(rho_profile, float)
    if prof.shape != (grid.Nx,) or np.any(prof < 0):
        raise ValueError("rho_profile must be a nonnegative array of length Nx")
    M = maxwellian_velocity(spec, grid)
    vals = prof[:, None, None, None] * M[None]
    total = vals.sum() * grid.cell
    if total > 0:
        vals *= spec.m / total
    return DistributionState(grid, vals, meta={"reference": spec})


def discretize(datum: Callable, grid: PhaseGrid, tail_bound: Optional[float] = None,
               time: float = 0.0) -> DistributionState:
    """Sample datum(x, v1, v2, v3) at cell centres.

    ``tail_bound`` is the caller's estimate of the datum's mass outside the
    velocity box; it is recorded as truncation leakage.
    """
    x = grid.x[:, None, None, None]
    v = grid.v
    vals = datum(x, v[None, :, None, None], v[None, None, :, None], v[None, None, None, :])
    vals = np.broadcast_to(np.asarray(vals, dtype=float), grid.shape).copy()
    if np.any(vals < 0):
        raise ValueError("datum takes negative values on the grid")
    if not np.all(np.isfinite(vals)):
        raise ValueError("datum takes non-finite values on the grid")
    meta = {}
    if tail_bound is not None:
        meta["truncation_leakage"] = float(tail_bound)
    return DistributionState(grid, vals, time, meta)


def moments(state: DistributionState):
    """(mass, momentum 3-vector, energy) with energy = int |v|^2 f."""
    g = state.grid
    f = state.values
    vx = g.v
    cell = g.cell
    fv = f.sum(axis=0)
    mass = fv.sum() * cell
    p = np.array([
        np.einsum("ijk,i->", fv, vx),
        np.einsum("ijk,j->", fv, vx),
        np.einsum("ijk,k->", fv, vx),
    ]) * cell
    energy = float(np.sum(fv * g.speed_sq()) * cell)
    return float(mass), p, energy


def weighted_norm(state: DistributionState, ell: float) -> float:
    """Discrete L^1_ell norm with weight (1+|v|^2)^(ell/2)."""
    if ell < 0:
        raise ValueError("ell must be >= 0")
    w = (1.0 + state.grid.speed_sq()) ** (0.5 * ell)
    return float(np.sum(np.abs(state.values).sum(axis=0) * w) * state.grid.cell)


def _forward_diff(a: np.ndarray, axis: int, periodic: bool) -> np.ndarray:
    if periodic:
        return np.roll(a, -1, axis=axis) - a
    pad = [(0, 0)] * a.ndim
    pad[axis] = (0, 1)
    b = np.pad(a, pad)
    return np.diff(b, axis=axis)


def discrete_w11_norm(state: DistributionState) -> float:
    """L^1 norm plus the L^1 norms of the four forward-difference quotients.

    Values outside the velocity box (and outside the line window) are zero;
    the torus wraps in x.
    """
    g = state.grid
    f = state.values
    total = np.abs(f).sum()
    total += np.abs(_forward_diff(f, 0, g.is_torus)).sum() / g.dx
    for ax in (1, 2, 3):
        total += np.abs(_forward_diff(f, ax, False)).sum() / g.dv
    return float(total * g.cell)


def density_and_velocity(state: DistributionState):
    """rho(x), u(x) and a boolean mask of cells where u is undefined (rho = 0)."""
    g = state.grid
    f = state.values
    dv3 = g.dv ** 3
    rho = f.sum(axis=(1, 2, 3)) * dv3
    v = g.v
    flux = np.stack([
        np.einsum("xijk,i->x", f, v),
        np.einsum("xijk,j->x", f, v),
        np.einsum("xijk,k->x", f, v),
    ], axis=1) * dv3
    undefined = rho <= 0
    u = np.full((g.Nx, 3), np.nan)
    ok = ~undefined
    u[ok] = flux[ok] / rho[ok, None]
    return rho, u, undefined


def matched_maxwellian(state: DistributionState) -> MaxwellianSpec:
    """Global Maxwellian sharing mass, momentum and energy with ``state``."""
    m, p, e = moments(state)
    u = p / m
    T = max((e / m - float(u @ u)) / 3.0, 1e-12)
    return MaxwellianSpec(m=m, u=tuple(float(x) for x in u), T=T)


# snapshots -----------------------------------------------------------------

def write_snapshot(state: DistributionState, path) -> None:
    g = state.grid
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# boltz1d snapshot v1\n")
        fh.write(f"# spatial_kind: {g.spatial_kind}\n")
        fh.write(f"# L: {float(g.L)!r}\n# Nx: {g.Nx}\n# Vmax: {float(g.Vmax)!r}\n# Nv: {g.Nv}\n")
        fh.write(f"# time: {float(state.time)!r}\n")
        fh.write("# order: x, v1, v2, v3 (row-major)\n")
        for val in state.values.ravel(order="C").tolist():
            fh.write(f"{val!r}\n")


def read_snapshot(path) -> DistributionState:
    header = {}
    vals = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                if ":" in line:
                    k, _, v = line[1:].partition(":")
                    header[k.strip()] = v.strip()
                continue
            if line.strip():
                vals.append(float(line))
    g = PhaseGrid(header["spatial_kind"], float(header["L"]), int(header["Nx"]),
                  float(header["Vmax"]), int(header["Nv"]))
    return DistributionState(g, np.array(vals).reshape(g.shape), float(header["time"]))
