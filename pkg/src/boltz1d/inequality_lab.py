"""Closed-form constants, growth bounds and brute-force checks of the functional estimates.

Every ``verify_*`` function returns a :class:`VerifyResult`; ``run_trials``
drives randomized sweeps of them with a fixed seed.
"""

from __future__ import annotations

import functools
import math
import time as _time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numba as nb
import numpy as np

from .collision import get_operator
from .diagnostics import (density_relative_entropy, reference_values, relative_entropy,
                          rho_l2_sides, v1_moments, x_norm)
from .kernel import (FOUR_PI, CollisionKernel, SphereQuadrature, canonical_kernel,
                     sup_over_angle)
from .state import (DistributionState, MaxwellianSpec, PhaseGrid, discrete_w11_norm,
                    weighted_norm)
from .transport import dispersion_bound_check, shift_array

DEFAULT_SEED = 20240611
DEFAULT_TOL = 1e-6


# constants ---------------------------------------------------------------------

def phi(h, m):
    """phi(h) = h + sqrt(m h / 2)."""
    h = np.asarray(h, dtype=float)
    return h + np.sqrt(0.5 * m * h)


def phi_inv(x, m):
    """Inverse of phi, written as x^2 / (a + sqrt(a^2 - x^2)), a = x + m/4, to avoid cancellation."""
    x = np.asarray(x, dtype=float)
    a = x + 0.25 * m
    return x * x / (a + np.sqrt(np.maximum(a * a - x * x, 0.0)))


@dataclass(frozen=True)
class SmallEntropyConstants:
    K: float
    eps: float
    alpha: float
    threshold: float    # admissible H(f_in|M)


def small_entropy_constants(m: float, C: float) -> SmallEntropyConstants:
    """K = 2 C phi(1/(4C + 2C^2 m)), eps = (1-K)/(4Cm), alpha = K + 2 C eps m = (1+K)/2.

    The extra factor 2C on eps m comes from the prefactor 2C multiplying
    (eps m + phi(H)) in the gain estimate.
    """
    if not (m > 0 and C > 0):
        raise ValueError("m and C must be positive")
    thr = 1.0 / (4.0 * C + 2.0 * C * C * m)
    K = 2.0 * C * float(phi(thr, m))
    eps = (1.0 - K) / (4.0 * C * m)
    alpha = K + 2.0 * C * eps * m
    return SmallEntropyConstants(K, eps, alpha, thr)


def kernel_constant(kernel: CollisionKernel) -> float:
    """C = 2 pi ||(1 + 1/r) B||_inf."""
    return 2.0 * math.pi * kernel.sup_bound


# growth specs --------------------------------------------------------------------

GROWTH_MODES = ("bony", "small_entropy")


@dataclass
class GrowthBoundSpec:
    """Data of an integral inequality.

    bony:          phi(t) <= phi(t0) + int_t0^t min{c phi^2, (1 + 1/(t-s)) a(s)} ds
    small_entropy: phi(t) <= c0 + int_0^t min{c1 phi^2, (alpha/(t-s) + c2) G(phi(s))} ds,
                   G(p) = max(m/eps, p / (log(p/m) + eps)), phi >= m.
    In small_entropy mode c0 and c1 are phi0 and c.
    ``a`` holds samples on the oracle's t-grid (bony mode).
    """

    mode: str
    c: float
    phi0: float
    a: Optional[np.ndarray] = None
    c2: float = 0.0
    alpha: float = 0.5
    eps: float = 1.0
    m: float = 1.0

    def __post_init__(self):
        errs = []
        if self.mode not in GROWTH_MODES:
            errs.append(f"mode must be one of {GROWTH_MODES}")
        if not self.c > 0:
            errs.append("c must be > 0")
        if not self.phi0 >= 0:
            errs.append("phi0 must be >= 0")
        if self.a is not None:
            self.a = np.asarray(self.a, dtype=float)
            if np.any(self.a < 0) or not np.all(np.isfinite(self.a)):
                errs.append("a must be finite and nonnegative")
        if self.mode == "small_entropy":
            if not 0 < self.alpha < 1:
                errs.append("alpha must lie in (0, 1); the bound blows up as alpha -> 1")
            if not self.eps > 0 or not self.m > 0:
                errs.append("eps and m must be > 0")
            if self.c2 < 0:
                errs.append("c2 must be >= 0")
        if errs:
            raise ValueError("; ".join(errs))

    @property
    def c0(self):
        return self.phi0

    @property
    def c1(self):
        return self.c


def _integral_of(a, times, t):
    """Trapezoid integral of samples a(times) over [0, t], interpolating at t."""
    a = np.asarray(a, dtype=float)
    times = np.asarray(times, dtype=float)
    if t <= times[0]:
        return 0.0
    if t >= times[-1]:
        return float(np.trapezoid(a, times))
    k = int(np.searchsorted(times, t, side="right"))
    at = float(np.interp(t, times, a))
    return float(np.trapezoid(np.append(a[:k], at), np.append(times[:k], t)))


def bony_bound(c: float, a, phi0: float, t: float, times=None) -> float:
    """2^{1 + 16 c int_0^t a} (phi0 + 1/(8c)); ``a`` sampled on ``times`` (default uniform on [0, t])."""
    if not c > 0:
        raise ValueError("c must be > 0")
    a = np.atleast_1d(np.asarray(a, dtype=float))
    if times is None:
        times = np.linspace(0.0, t, a.size) if a.size > 1 else np.array([0.0])
    ia = _integral_of(a, times, t) if a.size > 1 else float(a[0]) * t
    e = (1.0 + 16.0 * c * ia) * math.log(2.0) + math.log(phi0 + 1.0 / (8.0 * c))
    return math.exp(e) if e < 709.0 else math.inf


def bony_bound_curve(c, a, phi0, times) -> np.ndarray:
    """log of the bound at every node of ``times``, by cumulative trapezoid."""
    a = np.asarray(a, dtype=float)
    times = np.asarray(times, dtype=float)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (a[1:] + a[:-1]) * np.diff(times))])
    return (1.0 + 16.0 * c * cum) * math.log(2.0) + math.log(phi0 + 1.0 / (8.0 * c))


@dataclass(frozen=True)
class SmallEntropyChain:
    p: float
    log_K: float        # K itself overflows for small alpha gaps
    A0: float
    A2: float
    C: float


def _G(x, m, eps):
    return max(m / eps, x / (math.log(x / m) + eps))


def small_entropy_chain(spec: GrowthBoundSpec) -> SmallEntropyChain:
    """Constants of the bound phi(t) <= exp(C sqrt(1+t)).

    p = 2 alpha / (1 - alpha).  K is the smallest value (by bisection in log K)
    with K >= e m, log K above the point where F below is decreasing,
    K/(log(K/m)+eps) >= m/eps and F(log K) <= (1-alpha)/4 where
    F(s) = c1 m / s + alpha log s / (s - log m).  Below K(1+t)^p the running
    sup is controlled by the power branch; above it the log-Gronwall closure
    for w = log(Z/m) gives w' <= p/(1+t) + A2/w with A2 = 4 c2/(1-alpha).
    """
    if spec.mode != "small_entropy":
        raise ValueError("small_entropy spec required")
    al, m, eps = spec.alpha, spec.m, spec.eps
    c0, c1, c2 = spec.c0, spec.c1, spec.c2
    if not al < 1:
        raise ValueError("alpha must be < 1")
    p = 2.0 * al / (1.0 - al)
    lm = math.log(m)
    s_crit = math.e if m >= 1 else max(math.e, math.exp(1.0 + abs(lm) / math.e))
    goal = 0.25 * (1.0 - al)

    def ok(s):
        if s < 1.0 + lm or s < s_crit or s <= lm:
            return False
        # K / (log(K/m) + eps) >= m / eps, in logs
        if s - math.log(s - lm + eps) < lm - math.log(eps):
            return False
        F = c1 * m / s + al * math.log(s) / (s - lm)
        return F <= goal

    lo = max(1.0 + lm, s_crit, lm)
    hi = lo + 1.0
    while not ok(hi):
        hi = lo + 2.0 * (hi - lo)
        if hi > 1e6:
            raise OverflowError("no admissible K below exp(1e6)")
    if ok(lo):
        hi = lo
    else:
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if ok(mid):
                hi = mid
            else:
                lo = mid
            if hi - lo <= 1e-13 * max(1.0, hi):
                break
    A0 = 4.0 * c0 / (1.0 - al)
    A2 = 4.0 * c2 / (1.0 - al)
    lmp = max(lm, 0.0)
    root = 0.5 * ((2.0 * p + lmp) + math.sqrt((2.0 * p - lmp) ** 2 + 8.0 * A2))
    log_KA = hi + math.log1p(A0 * math.exp(-hi))   # log(K + A0)
    C = max(log_KA, root) * (1.0 + 1e-12)
    return SmallEntropyChain(p, hi, A0, A2, C)


def small_entropy_bound(spec: GrowthBoundSpec, t) -> float:
    C = small_entropy_chain(spec).C
    e = C * math.sqrt(1.0 + float(t))
    return math.exp(e) if e < 709.0 else math.inf


def small_entropy_log_bound(spec: GrowthBoundSpec, times) -> np.ndarray:
    C = small_entropy_chain(spec).C
    return C * np.sqrt(1.0 + np.asarray(times, dtype=float))


# maximal-solution oracle -------------------------------------------------------------

@nb.njit(cache=True)
def _bony_sweep(phi_, a_mid, c, phi0, h, cap):
    N = phi_.size - 1
    change = 0.0
    for n in range(1, N + 1):
        acc = 0.0
        for j in range(n):
            pm = 0.5 * (phi_[j] + phi_[j + 1])
            tm = (n - j - 0.5) * h
            v1 = c * pm * pm
            v2 = (1.0 + 1.0 / tm) * a_mid[j]
            acc += h * (v1 if v1 < v2 else v2)
        new = phi0 + acc
        if not new < cap:
            phi_[n] = cap
            return -1.0
        d = abs(new - phi_[n]) / max(abs(new), 1e-300)
        if d > change:
            change = d
        phi_[n] = new
    return change


@nb.njit(cache=True)
def _entropy_sweep(phi_, c0, c1, c2, alpha, eps, m, h, cap):
    N = phi_.size - 1
    change = 0.0
    floor = m / eps
    for n in range(1, N + 1):
        acc = 0.0
        for j in range(n):
            pm = 0.5 * (phi_[j] + phi_[j + 1])
            tm = (n - j - 0.5) * h
            g = pm / (math.log(pm / m) + eps)
            if g < floor:
                g = floor
            v1 = c1 * pm * pm
            v2 = (alpha / tm + c2) * g
            acc += h * (v1 if v1 < v2 else v2)
        new = c0 + acc
        if new < m:
            new = m
        if not new < cap:
            phi_[n] = cap
            return -1.0
        d = abs(new - phi_[n]) / max(abs(new), 1e-300)
        if d > change:
            change = d
        phi_[n] = new
    return change


@dataclass
class OracleResult:
    times: np.ndarray
    values: np.ndarray
    iterations: int
    converged: bool
    diverged: bool = False
    changes: list = field(default_factory=list)


def maximal_solution_oracle(spec: GrowthBoundSpec, t_grid, rtol: float = 1e-8,
                            max_iter: int = 200, cap: float = 1e300) -> OracleResult:
    """Pointwise-maximal solution of the integral inequality on a uniform grid.

    Monotone Gauss-Seidel sweeps of phi <- RHS[phi] from phi = phi0, with the
    time integral done by the midpoint rule on each grid interval (phi and a
    at the midpoint are averages of node values), so the (t-s)^-1 kernel is
    never evaluated at s = t.  Iterates increase monotonically to the
    solution with equality, which dominates every admissible phi.
    Non-convergence is reported, not raised.
    """
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size < 2:
        raise ValueError("t_grid needs at least two points")
    h = float(t[1] - t[0])
    if abs(t[0]) > 1e-14 or np.max(np.abs(np.diff(t) - h)) > 1e-9 * max(h, 1.0):
        raise ValueError("t_grid must be uniform and start at 0")
    if spec.mode == "bony":
        a = np.zeros_like(t) if spec.a is None else np.asarray(spec.a, dtype=float)
        if a.shape != t.shape:
            raise ValueError("a must be sampled on t_grid")
        a_mid = 0.5 * (a[1:] + a[:-1])
        vals = np.full(t.size, float(spec.phi0))
        sweep = lambda: _bony_sweep(vals, a_mid, float(spec.c), float(spec.phi0), h, cap)
    else:
        start = max(spec.c0, spec.m)
        vals = np.full(t.size, float(start))
        sweep = lambda: _entropy_sweep(vals, float(spec.c0), float(spec.c1), float(spec.c2),
                                       float(spec.alpha), float(spec.eps), float(spec.m), h, cap)
    changes = []
    for it in range(1, max_iter + 1):
        ch = sweep()
        if ch < 0:
            return OracleResult(t, vals, it, False, True, changes)
        changes.append(ch)
        if ch < rtol:
            return OracleResult(t, vals, it, True, False, changes)
    return OracleResult(t, vals, max_iter, False, False, changes)


def bony_direct_quadrature(spec: GrowthBoundSpec, t_grid) -> np.ndarray:
    """phi0 + midpoint quadrature of (1 + 1/(t-s)) a(s): the oracle when c phi^2 never binds."""
    t = np.asarray(t_grid, dtype=float)
    h = t[1] - t[0]
    a_mid = 0.5 * (spec.a[1:] + spec.a[:-1])
    out = np.full(t.size, float(spec.phi0))
    for n in range(1, t.size):
        tm = (n - np.arange(n) - 0.5) * h
        out[n] += h * np.sum((1.0 + 1.0 / tm) * a_mid[:n])
    return out


# verifier plumbing -------------------------------------------------------------------

@dataclass
class VerifyResult:
    name: str
    lhs: float
    rhs: float
    holds: bool
    allowance: float = 0.0
    details: dict = field(default_factory=dict)

    @property
    def margin(self) -> float:
        """(rhs - lhs) / rhs; negative means violated."""
        if self.rhs == 0:
            return 0.0 if self.lhs <= self.allowance else -math.inf
        return (self.rhs - self.lhs) / abs(self.rhs)

    def as_dict(self):
        d = asdict(self)
        d["margin"] = self.margin
        return d


def _check(name, lhs, rhs, tol=DEFAULT_TOL, allowance=0.0, **details):
    lhs, rhs = float(lhs), float(rhs)
    return VerifyResult(name, lhs, rhs, bool(lhs <= rhs * (1.0 + tol) + allowance),
                        float(allowance), details)


def _same_grid(g: DistributionState, f: DistributionState):
    if g.grid != f.grid:
        raise ValueError("states live on different grids")


# verifiers ---------------------------------------------------------------------------

def verify_bilinear_X(g: DistributionState, f: DistributionState, kernel: CollisionKernel,
                      q_samples=(0.0, 0.5, 2.0), quad: Optional[SphereQuadrature] = None,
                      tol: float = DEFAULT_TOL, **xn_kw) -> VerifyResult:
    """max_{q, +-} ||S_q Q^{+-}(g, f)||_X  <=  8 pi ||phi||_L1 ||f||_X ||g||_X."""
    _same_grid(g, f)
    grid = f.grid
    op = get_operator(grid, kernel, quad)
    gain, _ = op.gain(g.values, f.values)
    loss = op.loss(g.values, f.values)
    lhs = 0.0
    for arr in (gain, loss):
        for q in q_samples:
            lhs = max(lhs, x_norm(arr, grid=grid, base=float(q), **xn_kw).value)
    rhs = 8.0 * math.pi * kernel.phi_l1 * x_norm(f, **xn_kw).value * x_norm(g, **xn_kw).value
    return _check("bilinear", lhs, rhs, tol)


@nb.njit(cache=True)
def _p1_antiderivative(p, cum, x0, dx, torus, s):
    """Antiderivative at s of the piecewise-linear interpolant through cell centres.

    Line: the interpolant falls to zero half a ghost cell beyond each end.
    Torus: periodic, whole periods counted through cum[-1].
    """
    n = p.size
    if torus:
        L = n * dx
        u = (s - x0) / dx
        k = math.floor(u / n)
        u -= k * n
        j = int(math.floor(u))
        if j > n - 1:
            j = n - 1
        tau = u - j
        p0 = p[j]
        p1 = p[j + 1 if j + 1 < n else 0]
        return k * cum[n] + cum[j] + dx * (p0 * tau + 0.5 * (p1 - p0) * tau * tau)
    u = (s - (x0 - dx)) / dx
    if u <= 0.0:
        return 0.0
    j = int(math.floor(u))
    if j > n:
        return cum[n + 1]
    tau = u - j
    p0 = p[j - 1] if j >= 1 else 0.0
    p1 = p[j] if j < n else 0.0
    return cum[j] + dx * (p0 * tau + 0.5 * (p1 - p0) * tau * tau)


@nb.njit(cache=True)
def _interval_sum(P, lo, hi, wt, x, x0, dx, torus):
    """sum_k wt[k] * int_lo[k]^hi[k] P_k(x - y) dy for every x; P[:, k] is a profile on the cells."""
    nx = P.shape[0]
    out = np.zeros(x.size)
    p = np.empty(nx)
    cum = np.empty(nx + 2)
    for k in range(P.shape[1]):
        for i in range(nx):
            p[i] = P[i, k]
        cum[0] = 0.0
        if torus:
            for i in range(nx):
                cum[i + 1] = cum[i] + 0.5 * dx * (p[i] + p[(i + 1) % nx])
        else:
            cum[1] = 0.5 * dx * p[0]
            for i in range(1, nx):
                cum[i + 1] = cum[i] + 0.5 * dx * (p[i - 1] + p[i])
            cum[nx + 1] = cum[nx] + 0.5 * dx * p[nx - 1]
        for i in range(x.size):
            out[i] += wt[k] * (_p1_antiderivative(p, cum, x0, dx, torus, x[i] - lo[k])
                               - _p1_antiderivative(p, cum, x0, dx, torus, x[i] - hi[k]))
    return out


@functools.lru_cache(maxsize=8)
def _pair_groups(grid: PhaseGrid):
    """Velocity pairs (v != v*) grouped by (v1 + v*1, |v - v*|): pair indices, group id, r, c1.

    The interval and weight of the averaged bound depend on a pair only through
    those two numbers and the y-integral is linear in the profile, so profiles
    are summed per group before integrating.
    """
    Nv = grid.Nv
    idx = np.stack(np.meshgrid(*(np.arange(Nv),) * 3, indexing="ij"), axis=-1).reshape(-1, 3)
    ia, ib = np.meshgrid(np.arange(idx.shape[0]), np.arange(idx.shape[0]), indexing="ij")
    ia, ib = ia.ravel(), ib.ravel()
    d = idx[ia] - idx[ib]
    r2 = np.sum(d * d, axis=1)
    live = r2 > 0
    ia, ib, r2 = ia[live], ib[live], r2[live]
    base = 3 * Nv * Nv + 1
    keys, gid = np.unique((idx[ia, 0] + idx[ib, 0]) * base + r2, return_inverse=True)
    r = np.sqrt((keys % base).astype(float)) * grid.dv
    c1 = 2.0 * grid.v[0] + (keys // base) * grid.dv
    return ia, ib, gid.ravel(), r, c1


def angular_averaging_sides(g: DistributionState, f: DistributionState, kernel: CollisionKernel,
                            q: float, quad: Optional[SphereQuadrature] = None,
                            gain: Optional[np.ndarray] = None):
    """(lhs(x), rhs(x)) at the cell centres.

    lhs(x) = int Q+(g, f)(x - q v1, v) dv.
    rhs(x) = 4 pi sum_{v, v*} B~(r)/(q r) int_{I(v, v*)} g(x-y, v*) f(x-y, v) dy,
    I = (q/2)[v1 + v*1 - r, v1 + v*1 + r], the y-integral taken exactly on the
    piecewise-linear interpolant in x.
    """
    _same_grid(g, f)
    if not q > 0:
        raise ValueError("q must be > 0")
    grid = f.grid
    if gain is None:
        gain, _ = get_operator(grid, kernel, quad).gain(g.values, f.values)
    sh, _ = shift_array(gain, grid, q)
    dv3 = grid.dv ** 3
    lhs = sh.sum(axis=(1, 2, 3)) * dv3

    Nx = grid.Nx
    F = f.values.reshape(Nx, -1)
    G = g.values.reshape(Nx, -1)
    ia, ib, gid, r, c1 = _pair_groups(grid)
    prod = F[:, ia] * G[:, ib]
    P = np.stack([np.bincount(gid, weights=prod[x], minlength=r.size) for x in range(Nx)])
    bt = sup_over_angle(kernel, r)
    use = bt > 0
    P, r, c1, bt = np.ascontiguousarray(P[:, use]), r[use], c1[use], bt[use]
    lo = 0.5 * q * (c1 - r)
    hi = 0.5 * q * (c1 + r)
    rhs = _interval_sum(P, lo, hi, bt / (q * r), grid.x, float(grid.x[0]), grid.dx, grid.is_torus)
    rhs *= FOUR_PI * dv3 * dv3
    return lhs, rhs


def verify_angular_averaging(g: DistributionState, f: DistributionState, kernel: CollisionKernel,
                             q: float, quad: Optional[SphereQuadrature] = None,
                             tol: float = DEFAULT_TOL, allowance: Optional[float] = None) -> VerifyResult:
    """lhs(x) <= rhs(x) at every cell centre.

    ``allowance`` defaults to the quadrature allowance described in
    :func:`angular_quadrature_allowance`.
    """
    gain, _ = get_operator(f.grid, kernel, quad).gain(g.values, f.values)
    lhs, rhs = angular_averaging_sides(g, f, kernel, q, quad, gain=gain)
    if allowance is None:
        allowance = angular_quadrature_allowance(g, f, kernel, quad, gain=gain)
    ratio = np.where(rhs > 0, lhs / np.where(rhs > 0, rhs, 1.0), np.where(lhs > 0, np.inf, 0.0))
    k = int(np.argmax(lhs - rhs * (1.0 + tol)))
    ok = bool(np.all(lhs <= rhs * (1.0 + tol) + allowance))
    return VerifyResult("angular-averaging", float(lhs[k]), float(rhs[k]), ok, float(allowance),
                        {"q": float(q), "max_ratio": float(ratio.max()), "worst_x": float(f.grid.x[k])})


def angular_quadrature_allowance(g, f, kernel, quad=None, gain=None) -> float:
    """Per-cell gather/scatter defect of the discrete gain.

    In the continuum int Q+(g, f) dv = int Q-(g, f) dv cell by cell.  The
    discrete gain loses or gains mass through velocity interpolation; the
    largest per-cell mismatch |int Q+ - int Q-| is the amount by which the
    gather-form left side can differ from the pair-sum right side.
    """
    op = get_operator(f.grid, kernel, quad)
    if gain is None:
        gain, _ = op.gain(g.values, f.values)
    loss = op.loss(g.values, f.values)
    dv3 = f.grid.dv ** 3
    return float(np.max(np.abs(gain.sum(axis=(1, 2, 3)) - loss.sum(axis=(1, 2, 3)))) * dv3)


def angular_identity_defect(g: DistributionState, f: DistributionState, kernel: CollisionKernel,
                            q: float, quad: Optional[SphereQuadrature] = None) -> float:
    """For an angle-independent kernel and x-homogeneous data the estimate is an identity.

    Then rhs = int Q-(g, f) dv per cell and lhs = int Q+(g, f) dv, so
    lhs - rhs equals the discrete gain/loss mass defect.  Returns the largest
    deviation from that identity.
    """
    grid = f.grid
    op = get_operator(grid, kernel, quad)
    gain, _ = op.gain(g.values, f.values)
    lhs, rhs = angular_averaging_sides(g, f, kernel, q, quad, gain=gain)
    dv3 = grid.dv ** 3
    defect = (gain.sum(axis=(1, 2, 3)) - op.loss(g.values, f.values).sum(axis=(1, 2, 3))) * dv3
    return float(np.max(np.abs(lhs - rhs - defect)))


def verify_torus_gain_bound(state: DistributionState, kernel: CollisionKernel, q: float,
                            quad: Optional[SphereQuadrature] = None, tol: float = DEFAULT_TOL,
                            **xn_kw) -> VerifyResult:
    """||S_q Q+(f, f)||_X <= 4 pi ||(1+1/r) B||_inf (1/L + 1/q) int rho^2  (torus of length L)."""
    grid = state.grid
    if not grid.is_torus:
        raise ValueError("torus gain bound needs a torus grid")
    if not q > 0:
        raise ValueError("q must be > 0")
    op = get_operator(grid, kernel, quad)
    gain, _ = op.gain(state.values)
    lhs = x_norm(gain, grid=grid, base=float(q), **xn_kw).value
    rho, _, _ = v1_moments(state)
    rhs = FOUR_PI * kernel.sup_bound * (1.0 / grid.L + 1.0 / q) * float(np.sum(rho * rho) * grid.dx)
    return _check("torus-gain", lhs, rhs, tol, q=float(q))


def moment_constant(ell: float) -> float:
    """C_ell = max(1, 2^(ell-1)); (1+|v'|^2)^(ell/2) <= C_ell (m(v) + m(v*)) for all ell >= 0."""
    return max(1.0, 2.0 ** (ell - 1.0))


def verify_moment_and_w11_bounds(g: DistributionState, f: DistributionState, kernel: CollisionKernel,
                                 ell: float = 2.0, quad: Optional[SphereQuadrature] = None,
                                 tol: float = DEFAULT_TOL, **xn_kw):
    """Weighted L^1 and W^{1,1} bounds for Q+ and Q-; returns a list of four results.

    ||Q(g,f)||_{L^1_ell} <= C_ell ||Phi||_inf (||g||_{L^1_ell} ||f||_X + ||g||_X ||f||_{L^1_ell})
    ||Q(g,f)||_{W^{1,1}} <= ||Phi||_inf (||g||_{W^{1,1}} ||f||_X + ||g||_X ||f||_{W^{1,1}})
    with the quadrature-consistent Phi.
    """
    _same_grid(g, f)
    grid = f.grid
    op = get_operator(grid, kernel, quad)
    gain, _ = op.gain(g.values, f.values)
    loss = op.loss(g.values, f.values)
    Phi = op.phi_max()
    Xf, Xg = x_norm(f, **xn_kw).value, x_norm(g, **xn_kw).value
    mr = moment_constant(ell) * Phi * (weighted_norm(g, ell) * Xf + Xg * weighted_norm(f, ell))
    wr = Phi * (discrete_w11_norm(g) * Xf + Xg * discrete_w11_norm(f))
    out = []
    for nm, arr in (("gain", gain), ("loss", loss)):
        st = DistributionState.unchecked(grid, arr)
        out.append(_check(f"moment-{nm}", weighted_norm(st, ell), mr, tol, ell=float(ell)))
        out.append(_check(f"w11-{nm}", discrete_w11_norm(st), wr, tol))
    return out


def verify_rho_l2(state: DistributionState, reference: MaxwellianSpec, eps: float,
                  tol: float = DEFAULT_TOL, **xn_kw) -> VerifyResult:
    lhs, rhs = rho_l2_sides(state, reference, eps, **xn_kw)
    return _check("rho-l2", lhs, rhs, tol, eps=float(eps))


def verify_pinsker(rho: np.ndarray, dx: float, tol: float = DEFAULT_TOL) -> VerifyResult:
    """H^-(rho|mbar) <= sqrt(m H(rho|mbar) / 2) with mbar the mean of rho."""
    rho = np.asarray(rho, dtype=float)
    m = float(rho.sum() * dx)
    mbar = m / (rho.size * dx)
    H, Hm = density_relative_entropy(rho, dx, mbar)
    return _check("pinsker", Hm, math.sqrt(max(m * H, 0.0) / 2.0), tol, allowance=1e-15 * m)


def verify_entropy_chain(state: DistributionState, reference: MaxwellianSpec,
                         tol: float = DEFAULT_TOL) -> VerifyResult:
    """H(rho|mbar) <= H(f|M) for a uniform reference of the same mass."""
    g = state.grid
    rho, _, _ = v1_moments(state)
    H_rho, _ = density_relative_entropy(rho, g.dx, reference.m / g.length)
    H = relative_entropy(state, reference)
    return _check("entropy-chain", H_rho, H, tol, allowance=1e-13 * reference.m)


def verify_entropy_threshold(m: float, C: float, n_h: int = 257) -> VerifyResult:
    """2C (H + sqrt(mH/2)) <= K for H on a grid of [0, 1/(4C + 2C^2 m)]."""
    k = small_entropy_constants(m, C)
    H = np.linspace(0.0, k.threshold, n_h)
    lhs = float(np.max(2.0 * C * phi(H, m)))
    return _check("entropy-threshold", lhs, k.K, 0.0, allowance=4e-16 * k.K, m=m, C=C)


def verify_constants(n: int = 32, n_h: int = 1024, lo: float = 0.1, hi: float = 10.0):
    """K < 1 and alpha < 1 on an n x n log grid of (m, C); phi_inv(phi(h)) = h on n_h points."""
    grid = np.geomspace(lo, hi, n)
    worst_K, worst_a = 0.0, 0.0
    for m in grid:
        for C in grid:
            k = small_entropy_constants(float(m), float(C))
            worst_K, worst_a = max(worst_K, k.K), max(worst_a, k.alpha)
    out = [VerifyResult("K<1", worst_K, 1.0, worst_K < 1.0),
           VerifyResult("alpha<1", worst_a, 1.0, worst_a < 1.0)]
    h = np.linspace(0.0, 10.0, n_h)
    err = 0.0
    for m in grid:
        err = max(err, float(np.max(np.abs(phi_inv(phi(h, m), m) - h))))
    out.append(VerifyResult("phi_inv(phi(h)) = h", err, 1e-12, err <= 1e-12))
    return out


def verify_dispersion(state: DistributionState, t: float, **xn_kw) -> VerifyResult:
    lhs, rhs, ok = dispersion_bound_check(state, t, **xn_kw)
    return VerifyResult("dispersion", lhs, rhs, ok, details={"t": float(t)})


def verify_growth_oracle(spec: GrowthBoundSpec, t_grid, tol: float = DEFAULT_TOL) -> VerifyResult:
    """Oracle <= closed-form bound at every grid time (compared in log space)."""
    res = maximal_solution_oracle(spec, t_grid)
    t = res.times
    if spec.mode == "bony":
        a = np.zeros_like(t) if spec.a is None else spec.a
        logb = bony_bound_curve(spec.c, a, spec.phi0, t)
        name = "bony-ode"
    else:
        logb = small_entropy_log_bound(spec, t)
        name = "small-entropy-ode"
    with np.errstate(divide="ignore"):
        logo = np.log(res.values)
    gap = logb - logo
    k = int(np.argmin(gap))
    ok = bool(res.converged and np.all(logo <= logb + math.log1p(tol)))
    return VerifyResult(name, float(logo[k]), float(logb[k]), ok,
                        details={"iterations": res.iterations, "converged": res.converged,
                                 "diverged": res.diverged, "t": float(t[k]), "log_space": True})


# random data ---------------------------------------------------------------------------

def random_state(rng: np.random.Generator, grid: PhaseGrid, n_bumps: Optional[int] = None,
                 width_range=None, rough: Optional[bool] = None) -> DistributionState:
    """Sum of 1-3 drifting Gaussians with random spatial profiles; optionally roughened.

    Temperatures scale with (Vmax/3)^2 and drifts with Vmax/6 so every bump
    spans several velocity cells and sits well inside the box.
    """
    n_bumps = int(rng.integers(1, 4)) if n_bumps is None else n_bumps
    x = grid.x
    v1, v2, v3 = grid.velocity_mesh()
    vals = np.zeros(grid.shape)
    s2 = (grid.Vmax / 3.0) ** 2
    for _ in range(n_bumps):
        w = float(np.exp(rng.uniform(np.log(0.1), np.log(2.0))))
        u = rng.uniform(-1.0, 1.0, 3) * grid.Vmax / 6.0
        T = float(rng.uniform(0.5, 1.0)) * s2
        G = np.exp(-((v1 - u[0]) ** 2 + (v2 - u[1]) ** 2 + (v3 - u[2]) ** 2) / (2 * T))
        G /= G.sum() * grid.dv ** 3
        if grid.is_torus:
            k = int(rng.integers(1, 3))
            amp = float(rng.uniform(0.0, 0.95))
            prof = 1.0 + amp * np.cos(2 * np.pi * k * x / grid.L + rng.uniform(0, 2 * np.pi))
        else:
            lo, hi = width_range or (0.1 * grid.L, 0.4 * grid.L)
            c = rng.uniform(-0.5, 0.5) * grid.L
            s = rng.uniform(lo, hi)
            prof = np.exp(-0.5 * ((x - c) / s) ** 2)
        vals += w * prof[:, None, None, None] * G[None]
    if rough if rough is not None else rng.random() < 0.3:
        vals *= 1.0 + 0.3 * rng.random(vals.shape)
    return DistributionState(grid, vals)


# Discrete velocities make q -> S_q periodic with period L/dv, so the
# averaging behind the gain estimates is only visible while q dv << L.
# The trial torus keeps q dv <= L/4 for every sampled q <= Q_TRIAL_MAX.
TRIAL_GRID = PhaseGrid("torus", 40.0, 8, 3.0, 8)
Q_TRIAL_MAX = 10.0
TRIAL_QUAD = SphereQuadrature(4, 4)
DISPERSION_GRID = PhaseGrid("line", 16.0, 64, 4.0, 16)
DISPERSION_TIMES = (1.0, 2.0, 5.0, 10.0)


def kernel_pool():
    """A small fixed family of cutoff kernels, isotropic and angle-dependent."""
    return [
        canonical_kernel(1.0, 1.0, 0.5),
        canonical_kernel(2.0, 0.5, 0.25),
        canonical_kernel(0.5, 2.0, 1.0, "poly:1,0,1"),
        canonical_kernel(1.0, 1.0, 0.5, "poly:1,0.5"),
        canonical_kernel(1.0, 0.5, 0.25, "poly:1,0.9"),
    ]


_POOL = None


def _pool(anisotropic_only: bool = False):
    global _POOL
    if _POOL is None:
        _POOL = kernel_pool()
    if anisotropic_only:
        return [k for k in _POOL if k.angular.b_max > 0.5 * k.angular.integral * (1 + 1e-9)]
    return _POOL


def _pick(rng, seq):
    return seq[int(rng.integers(0, len(seq)))]


def _trial_bilinear(rng):
    k = _pick(rng, _pool())
    g, f = random_state(rng, TRIAL_GRID), random_state(rng, TRIAL_GRID)
    qs = (0.0, float(rng.uniform(0.05, 2.0)), float(rng.uniform(2.0, Q_TRIAL_MAX)))
    return [verify_bilinear_X(g, f, k, qs, quad=TRIAL_QUAD, n_q=64)]


def _trial_angular(rng):
    # angle-independent kernels turn the estimate into an identity; see angular_identity_defect
    k = _pick(rng, _pool(anisotropic_only=True))
    g, f = random_state(rng, TRIAL_GRID), random_state(rng, TRIAL_GRID)
    q = float(np.exp(rng.uniform(np.log(0.05), np.log(Q_TRIAL_MAX))))
    return [verify_angular_averaging(g, f, k, q, quad=TRIAL_QUAD)]


def _trial_torus_gain(rng):
    k = _pick(rng, _pool())
    f = random_state(rng, TRIAL_GRID)
    return [verify_torus_gain_bound(f, k, q, quad=TRIAL_QUAD, n_q=64) for q in (0.1, 1.0, 10.0)]


def _trial_moment(rng):
    k = _pick(rng, _pool())
    g, f = random_state(rng, TRIAL_GRID), random_state(rng, TRIAL_GRID)
    ell = float(rng.uniform(0.0, 4.0))
    return verify_moment_and_w11_bounds(g, f, k, ell, quad=TRIAL_QUAD, n_q=64)


def _trial_rho_l2(rng):
    f = random_state(rng, TRIAL_GRID)
    ref = MaxwellianSpec(m=f.mass, T=float(rng.uniform(0.5, 2.0)))
    return [verify_rho_l2(f, ref, float(np.exp(rng.uniform(-4, 1))), n_q=64)]


def _trial_pinsker(rng):
    n = int(rng.integers(2, 64))
    rho = rng.random(n) ** float(rng.uniform(0.5, 6.0))
    if rng.random() < 0.2:
        rho[rng.random(n) < 0.3] = 0.0
    if rho.sum() == 0:
        rho[0] = 1.0
    return [verify_pinsker(rho * float(np.exp(rng.uniform(-3, 3))), float(rng.uniform(0.01, 1.0)))]


def _trial_chain(rng):
    f = random_state(rng, TRIAL_GRID)
    ref = MaxwellianSpec(m=f.mass, u=tuple(rng.uniform(-0.5, 0.5, 3)), T=float(rng.uniform(0.5, 2.0)))
    return [verify_entropy_chain(f, ref)]


def _trial_dispersion(rng):
    f = random_state(rng, DISPERSION_GRID, width_range=(2.0, 5.0), rough=False)
    return [verify_dispersion(f, t, n_q=128) for t in DISPERSION_TIMES]


def _trial_threshold(rng):
    m, C = np.exp(rng.uniform(np.log(0.1), np.log(10.0), 2))
    return [verify_entropy_threshold(float(m), float(C))]


ORACLE_GRID = np.linspace(0.0, 4.0, 512)


def random_growth_spec(rng, mode: str, t_grid=ORACLE_GRID) -> GrowthBoundSpec:
    lu = lambda a, b: float(np.exp(rng.uniform(np.log(a), np.log(b))))
    if mode == "bony":
        t = np.asarray(t_grid)
        a = np.zeros_like(t)
        for _ in range(int(rng.integers(1, 4))):
            kind = int(rng.integers(0, 3))
            amp = lu(0.01, 5.0)
            if kind == 0:
                a += amp
            elif kind == 1:
                a += amp * np.exp(-0.5 * ((t - rng.uniform(0, t[-1])) / lu(0.05, 1.0)) ** 2)
            else:
                a += amp / (1.0 + t) ** rng.uniform(0.5, 3.0)
        return GrowthBoundSpec("bony", c=lu(0.05, 20.0), phi0=lu(0.01, 10.0), a=a)
    m = lu(0.1, 10.0)
    return GrowthBoundSpec("small_entropy", c=lu(0.1, 10.0), phi0=m * lu(1.0, 10.0),
                           c2=lu(0.01, 2.0), alpha=float(rng.uniform(0.05, 0.95)),
                           eps=lu(0.01, 1.0), m=m)


def _trial_bony_ode(rng):
    return [verify_growth_oracle(random_growth_spec(rng, "bony"), ORACLE_GRID)]


def _trial_entropy_ode(rng):
    return [verify_growth_oracle(random_growth_spec(rng, "small_entropy"), ORACLE_GRID)]


TRIALS: dict[str, Callable] = {
    "bilinear": _trial_bilinear,
    "angular-averaging": _trial_angular,
    "torus-gain": _trial_torus_gain,
    "moment-w11": _trial_moment,
    "rho-l2": _trial_rho_l2,
    "pinsker": _trial_pinsker,
    "entropy-chain": _trial_chain,
    "dispersion": _trial_dispersion,
    "entropy-threshold": _trial_threshold,
    "bony-ode": _trial_bony_ode,
    "small-entropy-ode": _trial_entropy_ode,
}

LEMMAS = ("constants",) + tuple(TRIALS)


@dataclass
class TrialReport:
    lemma: str
    trials: int
    seed: int
    checks: int
    failures: int
    worst_lhs: float
    worst_rhs: float
    worst_margin: float
    runtime: float
    failed: list = field(default_factory=list)

    @property
    def holds(self) -> bool:
        return self.failures == 0

    def as_dict(self):
        d = asdict(self)
        d["holds"] = self.holds
        return d


def run_trials(lemma: str, trials: int = 100, seed: int = DEFAULT_SEED,
               progress: Optional[Callable[[int], None]] = None) -> TrialReport:
    """Run ``trials`` randomized instances of one lemma check with a fixed seed."""
    t0 = _time.time()
    if lemma == "constants":
        results = verify_constants()
        trials = 1
    elif lemma in TRIALS:
        rng = np.random.default_rng(seed)
        results = []
        fn = TRIALS[lemma]
        for i in range(trials):
            results.extend(fn(rng))
            if progress:
                progress(i)
    else:
        raise KeyError(f"unknown lemma {lemma!r}; choose from {', '.join(LEMMAS)} or all")
    worst = min(results, key=lambda r: (r.holds, r.margin))
    bad = [r.as_dict() for r in results if not r.holds][:10]
    return TrialReport(lemma, trials, seed, len(results), sum(not r.holds for r in results),
                       worst.lhs, worst.rhs, worst.margin, _time.time() - t0, bad)
