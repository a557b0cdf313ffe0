"""Collision kernels B(r, cos theta), their angular integrals and hypothesis checks."""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, optimize

FOUR_PI = 4.0 * math.pi


@dataclass(frozen=True)
class SphereQuadrature:
    """Product rule on S^2: Gauss-Legendre in mu times a uniform azimuth.

    Nodes are expressed in a frame whose polar axis is the relative velocity,
    so ``mu`` is the cosine of the deviation angle.  With an even azimuth
    count the node set is symmetric under sigma -> -sigma.
    """

    n_polar: int = 16
    n_azimuth: int = 8

    def __post_init__(self):
        if self.n_polar < 1 or self.n_azimuth < 1:
            raise ValueError("quadrature node counts must be positive")

    @property
    def size(self) -> int:
        return self.n_polar * self.n_azimuth

    def nodes(self):
        """Return (mu, phi, weight) arrays of length n_polar * n_azimuth; weights sum to 4 pi.

        The arrays are shared between calls and read-only.
        """
        return _sphere_nodes(self.n_polar, self.n_azimuth)

    def polar(self):
        mu, w = np.polynomial.legendre.leggauss(self.n_polar)
        return mu, w


@functools.lru_cache(maxsize=64)
def _sphere_nodes(n_polar: int, n_azimuth: int):
    mu, wmu = np.polynomial.legendre.leggauss(n_polar)
    phi = (np.arange(n_azimuth) + 0.5) * (2.0 * math.pi / n_azimuth)
    M, P = np.meshgrid(mu, phi, indexing="ij")
    W = np.repeat(wmu, n_azimuth) * (2.0 * math.pi / n_azimuth)
    out = (M.ravel(), P.ravel(), W)
    for a in out:
        a.flags.writeable = False
    return out


DEFAULT_QUADRATURE = SphereQuadrature()


def orthonormal_frame(axis):
    """Two unit vectors completing ``axis`` (unit) to a right-handed frame, deterministically."""
    a = np.asarray(axis, dtype=float)
    j = int(np.argmin(np.abs(a)))
    ref = np.zeros(3)
    ref[j] = 1.0
    e1 = np.cross(a, ref)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(a, e1)
    return e1, e2


def sphere_directions(axis, quad: SphereQuadrature):
    """Quadrature directions sigma (n, 3) in the frame aligned with ``axis``, and weights."""
    mu, phi, w = quad.nodes()
    e1, e2 = orthonormal_frame(axis)
    s = np.sqrt(np.clip(1.0 - mu * mu, 0.0, None))
    sig = (mu[:, None] * np.asarray(axis, float)[None, :]
           + (s * np.cos(phi))[:, None] * e1[None, :]
           + (s * np.sin(phi))[:, None] * e2[None, :])
    return sig, w


@dataclass(frozen=True, eq=False)
class AngularFactor:
    """Angular part b(mu) of a separable kernel, with its bounds and integral over [-1, 1]."""

    func: Callable[[np.ndarray], np.ndarray]
    b_min: float
    b_max: float
    integral: float
    label: str = "constant"

    def __call__(self, mu):
        return self.func(np.asarray(mu, dtype=float))


def constant_angular(value: float = 1.0) -> AngularFactor:
    return AngularFactor(lambda mu: np.full(np.shape(mu), float(value)),
                         float(value), float(value), 2.0 * value, "constant")


def polynomial_angular(coeffs) -> AngularFactor:
    """b(mu) = sum_k coeffs[k] mu^k, bounds found on [-1, 1]."""
    c = np.asarray(coeffs, dtype=float)
    if c.size == 0:
        raise ValueError("empty polynomial")
    poly = np.polynomial.Polynomial(c)
    crit = poly.deriv().roots() if c.size > 1 else np.array([])
    crit = np.real(crit[np.abs(np.imag(crit)) < 1e-12])
    pts = np.concatenate([[-1.0, 1.0], crit[(crit >= -1) & (crit <= 1)]])
    vals = poly(pts)
    ip = poly.integ()
    label = "poly:" + ",".join(repr(float(x)) for x in c)
    return AngularFactor(lambda mu: poly(mu), float(vals.min()), float(vals.max()),
                         float(ip(1.0) - ip(-1.0)), label)


def parse_angular(spec: str) -> AngularFactor:
    spec = spec.strip()
    if spec == "constant":
        return constant_angular()
    if spec.startswith("poly:"):
        return polynomial_angular([float(t) for t in spec[5:].split(",") if t.strip()])
    raise ValueError(f"unknown angular factor {spec!r}")


@dataclass(frozen=True, eq=False)
class CollisionKernel:
    """B(r, mu) with cutoff metadata.

    ``radial``/``angular`` are set for separable kernels B = radial(r) * angular(mu);
    ``phi_l1`` is the integral of the envelope over [0, inf).
    """

    eval_fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    R0: float
    delta: float
    phi_envelope: Callable[[np.ndarray], np.ndarray]
    sup_bound: float
    phi_l1: float
    radial: Optional[Callable[[np.ndarray], np.ndarray]] = None
    angular: Optional[AngularFactor] = None
    label: str = "custom"
    params: dict = field(default_factory=dict)

    def eval(self, r, mu):
        r = np.asarray(r, dtype=float)
        mu = np.asarray(mu, dtype=float)
        out = np.asarray(self.eval_fn(r, mu), dtype=float)
        out = np.broadcast_to(out, np.broadcast(r, mu).shape).copy()
        out[np.broadcast_to(r <= self.R0, out.shape)] = 0.0
        return out

    __call__ = eval

    @property
    def separable(self) -> bool:
        return self.radial is not None and self.angular is not None

    @property
    def is_zero(self) -> bool:
        return self.label == "zero"


def _canonical_radial(C, eps, R0):
    def radial(r):
        r = np.asarray(r, dtype=float)
        out = C * r / (1.0 + r * np.log1p(r) ** (1.0 + eps))
        return np.where(r > R0, out, 0.0)
    return radial


def _envelope_l1(C, eps, bmax):
    # substitute u = log(1+r): integrand e^u / (1 + (e^u - 1) u^(1+eps)), decays like u^-(1+eps)
    def g(u):
        if u > 700:
            return u ** -(1.0 + eps)
        e = math.exp(u)
        return e / (1.0 + (e - 1.0) * u ** (1.0 + eps))
    head, _ = integrate.quad(g, 0.0, 50.0, limit=400, epsabs=1e-13, epsrel=1e-12)
    # beyond u = 50 the integrand is u^-(1+eps) up to a factor 1 + O(e^-50)
    tail = 50.0 ** -eps / eps
    return C * bmax * (head + tail)


def _sup_one_plus_inv_r(radial, R0, r_hi=1e8):
    """sup over r > R0 of (1 + 1/r) radial(r), refined around the grid maximum."""
    lo = max(R0, 1e-12)
    r = np.geomspace(lo * (1 + 1e-12), r_hi, 20001)
    f = (1.0 + 1.0 / r) * radial(r)
    k = int(np.argmax(f))
    best = float(f[k])
    a, b = r[max(k - 1, 0)], r[min(k + 1, r.size - 1)]
    if b > a:
        res = optimize.minimize_scalar(lambda s: -float((1 + 1 / s) * radial(np.array(s))),
                                       bounds=(a, b), method="bounded",
                                       options={"xatol": 1e-14 * b})
        best = max(best, -float(res.fun))
    if R0 > 0:
        # supremum approached from the right of the cutoff
        edge = float((1 + 1 / R0) * radial(np.array(R0 * (1 + 1e-13))))
        best = max(best, edge)
    return best * (1.0 + 1e-12)


def canonical_kernel(C: float = 1.0, eps: float = 1.0, R0: float = 1.0,
                     b: AngularFactor | str | None = None) -> CollisionKernel:
    """B(r, mu) = C r / (1 + r log^(1+eps)(1+r)) 1_{r > R0} b(mu)."""
    bad = [k for k, v in (("C", C), ("eps", eps), ("R0", R0)) if not v > 0]
    if bad:
        raise ValueError("canonical kernel needs positive " + ", ".join(bad))
    if b is None:
        b = constant_angular()
    elif isinstance(b, str):
        b = parse_angular(b)
    if not b.b_min > 0:
        raise ValueError("angular factor must be bounded below by a positive constant")
    radial = _canonical_radial(C, eps, R0)
    bmax = b.b_max

    def eval_fn(r, mu):
        return radial(r) * b(mu)

    def envelope(r):
        r = np.asarray(r, dtype=float)
        return C * bmax / (1.0 + r * np.log1p(r) ** (1.0 + eps))

    return CollisionKernel(
        eval_fn=eval_fn,
        R0=float(R0),
        delta=2.0 * math.pi * b.integral / bmax,
        phi_envelope=envelope,
        sup_bound=_sup_one_plus_inv_r(radial, R0) * bmax,
        phi_l1=_envelope_l1(C, eps, bmax),
        radial=radial,
        angular=b,
        label="canonical",
        params={"C": C, "eps": eps, "R0": R0, "b": b.label},
    )


def table_kernel(r_table, values, R0: float = 0.0,
                 b: AngularFactor | str | None = None) -> CollisionKernel:
    """Radial part from a (r, value) table, linear interpolation, zero outside the table."""
    rt = np.asarray(r_table, dtype=float)
    vt = np.asarray(values, dtype=float)
    if rt.ndim != 1 or rt.shape != vt.shape or rt.size < 2:
        raise ValueError("kernel table needs two equal-length columns with >= 2 rows")
    if np.any(np.diff(rt) <= 0) or np.any(vt < 0) or rt[0] < 0:
        raise ValueError("kernel table must have increasing r >= 0 and nonnegative values")
    if b is None:
        b = constant_angular()
    elif isinstance(b, str):
        b = parse_angular(b)
    bmax = b.b_max

    def radial(r):
        r = np.asarray(r, dtype=float)
        out = np.interp(r, rt, vt, left=0.0, right=0.0)
        return np.where(r > R0, out, 0.0)

    # envelope phi(r) = sup_{s >= r} radial(s) b_max / s: non-increasing, B <= phi r
    knots = rt[rt > 0]
    ratio = radial(knots) / knots
    run = np.maximum.accumulate(ratio[::-1])[::-1] * bmax

    def envelope(r):
        # radial(s)/s is monotone between knots, so the running max over knots
        # to the right plus the value at r itself is the exact supremum
        r = np.asarray(r, dtype=float)
        idx = np.searchsorted(knots, r, side="left")
        out = np.where(idx < knots.size, run[np.minimum(idx, knots.size - 1)], 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            here = np.where(r > 0, radial(r) / r, np.inf) * bmax
        return np.maximum(out, np.where(np.isfinite(here), here, np.where(radial(r) > 0, np.inf, 0.0)))

    dense = np.linspace(rt[0], rt[-1], 20001)[1:]
    sup = float(np.max((1 + 1 / dense) * radial(dense))) if dense.size else 0.0
    sup = max(sup, float(np.max((1 + 1 / knots) * radial(knots))) if knots.size else 0.0)
    # left Riemann sum of a non-increasing function is an upper bound
    grid = np.concatenate([[0.0], np.linspace(0.0, rt[-1], 200001)[1:]])
    ev = envelope(grid[:-1])
    phi_l1 = float(np.sum(np.diff(grid) * ev))
    return CollisionKernel(
        eval_fn=lambda r, mu: radial(r) * b(mu),
        R0=float(R0),
        delta=2.0 * math.pi * b.integral / bmax if bmax > 0 else float("nan"),
        phi_envelope=envelope,
        sup_bound=sup * bmax,
        phi_l1=phi_l1,
        radial=radial,
        angular=b,
        label="custom-table",
        params={"R0": R0, "b": b.label, "rows": int(rt.size)},
    )


def load_table_kernel(path, R0: float = 0.0, b=None) -> CollisionKernel:
    data = np.loadtxt(path, ndmin=2)
    if data.shape[1] != 2:
        raise ValueError(f"{path}: expected two columns (r, value)")
    return table_kernel(data[:, 0], data[:, 1], R0=R0, b=b)


def zero_kernel() -> CollisionKernel:
    return CollisionKernel(
        eval_fn=lambda r, mu: np.zeros(np.broadcast(r, mu).shape),
        R0=0.0,
        delta=float("nan"),
        phi_envelope=lambda r: np.zeros(np.shape(r)),
        sup_bound=0.0,
        phi_l1=0.0,
        radial=lambda r: np.zeros(np.shape(r)),
        angular=constant_angular(),
        label="zero",
    )


def total_cross_section(kernel: CollisionKernel, r, quad: SphereQuadrature = DEFAULT_QUADRATURE):
    """Phi(r) = 2 pi int_0^pi B(r, cos theta) sin theta d theta by Gauss-Legendre in mu."""
    r = np.asarray(r, dtype=float)
    mu, w = quad.polar()
    vals = kernel.eval(r[..., None], mu)
    return 2.0 * math.pi * np.sum(vals * w, axis=-1)


def _mu_sample(n: int = 64):
    # Chebyshev-Lobatto points, endpoints included
    return np.cos(np.pi * np.arange(n) / (n - 1))


def sup_over_angle(kernel: CollisionKernel, r, n_mu: int = 64):
    """B~(r) = sup_mu B(r, mu): analytic for separable kernels, sampled otherwise."""
    r = np.asarray(r, dtype=float)
    if kernel.separable:
        return kernel.radial(r) * kernel.angular.b_max
    mu = _mu_sample(n_mu)
    return np.max(kernel.eval(r[..., None], mu), axis=-1)


@dataclass
class KernelValidationReport:
    h1_holds: bool
    h2_holds: bool
    estimated_delta: float
    delta_defined: bool
    declared_delta_admissible: bool
    worst_violation: tuple
    sample_description: str

    def as_dict(self):
        return {
            "h1_holds": self.h1_holds,
            "h2_holds": self.h2_holds,
            "estimated_delta": self.estimated_delta if self.delta_defined else None,
            "delta_defined": self.delta_defined,
            "declared_delta_admissible": self.declared_delta_admissible,
            "worst_violation": list(self.worst_violation),
            "sample_description": self.sample_description,
        }


def default_sample(kernel: CollisionKernel, n_r: int = 256, n_mu: int = 64, r_max: float = 100.0):
    lo = kernel.R0 / 2 if kernel.R0 > 0 else 1e-3
    return np.geomspace(lo, r_max, n_r), _mu_sample(n_mu)


def validate_hypotheses(kernel: CollisionKernel, sample=None, rtol: float = 1e-10,
                        quad: SphereQuadrature | None = None) -> KernelValidationReport:
    """Check (H1) and (H2) on a (r, mu) sample; violations are reported, never raised."""
    r, mu = default_sample(kernel) if sample is None else sample
    r = np.asarray(r, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if r.size == 0 or mu.size == 0:
        raise ValueError("empty validation sample")
    quad = quad or SphereQuadrature(64, 1)
    desc = (f"r: {r.size} points in [{r.min():.4g}, {r.max():.4g}]; "
            f"mu: {mu.size} Chebyshev-Lobatto points; polar GL nodes {quad.n_polar}")
    B = kernel.eval(r[:, None], mu[None, :])
    worst = (float("nan"), float("nan"), 0.0)
    worst_margin = 0.0

    def note(mask, margin):
        nonlocal worst, worst_margin
        if np.any(mask):
            k = np.unravel_index(np.argmax(np.where(mask, margin, -np.inf)), margin.shape)
            if margin[k] > worst_margin:
                worst_margin = float(margin[k])
                worst = (float(r[k[0]]), float(mu[k[1]] if len(k) > 1 else np.nan), float(margin[k]))

    # (H1): B <= phi(r) r and (1 + 1/r) B <= sup_bound, phi non-increasing
    env = kernel.phi_envelope(r)[:, None] * r[:, None]
    m1 = B - env
    bad1 = m1 > rtol * np.maximum(env, 1e-300)
    note(bad1, m1)
    m2 = (1.0 + 1.0 / r[:, None]) * B - kernel.sup_bound
    bad2 = m2 > rtol * max(kernel.sup_bound, 1e-300)
    note(bad2, m2)
    envr = kernel.phi_envelope(np.sort(r))
    mono = bool(np.all(np.diff(envr) <= rtol * np.abs(envr[:-1]) + 1e-300))
    h1 = not (bad1.any() or bad2.any()) and mono and math.isfinite(kernel.phi_l1)

    # (H2): positive cutoff with B = 0 below it, and a uniform delta
    below = r <= kernel.R0
    cut_ok = kernel.R0 > 0 and not np.any(B[below] > 0)
    if np.any(B[below] > 0):
        m = np.where(below[:, None], B, 0.0)
        note(m > 0, m)
    tot = total_cross_section(kernel, r, quad)
    sup = np.max(B, axis=1)
    if kernel.separable:
        sup = np.maximum(sup, sup_over_angle(kernel, r))
    active = (r > kernel.R0) & (sup > 0)
    if np.any(active):
        ratios = tot[active] / sup[active]
        est = float(ratios.min())
        defined = True
    else:
        est = float("nan")
        defined = False
    h2 = cut_ok and (not defined or est > 0)
    if kernel.is_zero:
        h1 = h2 = True
    admissible = defined and math.isfinite(kernel.delta) and kernel.delta <= est * (1 + 1e-9)
    return KernelValidationReport(h1, h2, est, defined, admissible or not defined, worst, desc)


def sigma1_moment_ratio(kernel: CollisionKernel, r: float, axis,
                        quad: SphereQuadrature = SphereQuadrature(32, 32)) -> tuple[float, float]:
    """(int sigma_1^2 B dsigma, int B dsigma) for relative velocity direction ``axis``."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    sig, w = sphere_directions(axis, quad)
    mu = sig @ axis
    Bv = kernel.eval(np.full(mu.shape, r), mu)
    return float(np.sum(w * sig[:, 0] ** 2 * Bv)), float(np.sum(w * Bv))


def max_total_cross_section(kernel: CollisionKernel, quad: SphereQuadrature = DEFAULT_QUADRATURE,
                            r_max: float = 1e4) -> float:
    """sup_r Phi(r) on a dense log grid: the ||Phi||_inf of the bilinear bounds."""
    if kernel.is_zero:
        return 0.0
    lo = kernel.R0 if kernel.R0 > 0 else 1e-6
    r = np.geomspace(lo * (1 + 1e-12), r_max, 4001)
    return float(np.max(total_cross_section(kernel, r, quad)))
