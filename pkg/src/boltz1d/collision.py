"""Quadrature evaluation of the gain and loss operators and conservative projection.

The gain term is evaluated in gather form.  For a pair of grid nodes (i, j)
with index difference k = i - j, the post-collisional points for a quadrature
direction sigma sit at index positions i - k/2 +- sigma |k| / 2.  The
fractional parts, and hence the trilinear stencils, depend only on (k, sigma),
so they are tabulated once per grid and reused for every pair sharing k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .kernel import (DEFAULT_QUADRATURE, CollisionKernel, SphereQuadrature,
                     sphere_directions)
from .state import DistributionState, PhaseGrid

LOG_CLAMP = 1.0e3


def post_collision_velocities(v, v_star, sigma, tol: float = 1e-12):
    """v' = (v+v*)/2 + sigma|v-v*|/2,  v*' = (v+v*)/2 - sigma|v-v*|/2."""
    v = np.asarray(v, dtype=float)
    v_star = np.asarray(v_star, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if abs(np.linalg.norm(sigma) - 1.0) > tol:
        raise ValueError("sigma must be a unit vector")
    c = 0.5 * (v + v_star)
    h = 0.5 * np.linalg.norm(v - v_star) * sigma
    return c + h, c - h


@dataclass
class CollisionField:
    """A rate field on the phase grid with its per-cell moment residuals.

    ``moment_residuals`` has shape (Nx, 5): mass, three momentum components,
    energy, i.e. dv^3 sum_v psi(v) Q(x, v).
    """

    grid: PhaseGrid
    values: np.ndarray
    moment_residuals: np.ndarray = None
    leakage: np.ndarray = None
    projection_magnitude: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.moment_residuals is None:
            self.moment_residuals = cell_moments(self.grid, self.values)

    def __sub__(self, other):
        return CollisionField(self.grid, self.values - other.values)

    def l1(self) -> float:
        return float(np.abs(self.values).sum() * self.grid.cell)

    def as_state(self) -> DistributionState:
        return DistributionState.unchecked(self.grid, self.values)


def _moment_basis(grid: PhaseGrid) -> np.ndarray:
    v1, v2, v3 = grid.velocity_mesh()
    return np.stack([np.ones_like(v1), v1, v2, v3, v1 * v1 + v2 * v2 + v3 * v3])


def cell_moments(grid: PhaseGrid, values: np.ndarray) -> np.ndarray:
    psi = _moment_basis(grid).reshape(5, -1)
    return values.reshape(grid.Nx, -1) @ psi.T * grid.dv ** 3


# ---------------------------------------------------------------------------
# tables

def _difference_vectors(Nv: int, half: bool) -> np.ndarray:
    r = np.arange(-(Nv - 1), Nv)
    k1, k2, k3 = np.meshgrid(r, r, r, indexing="ij")
    K = np.stack([k1.ravel(), k2.ravel(), k3.ravel()], axis=1)
    nz = np.any(K != 0, axis=1)
    if half:
        pos = (K[:, 0] > 0) | ((K[:, 0] == 0) & (K[:, 1] > 0)) | \
              ((K[:, 0] == 0) & (K[:, 1] == 0) & (K[:, 2] > 0))
        nz &= pos
    return K[nz]


@dataclass(eq=False)
class _Stencils:
    K: np.ndarray
    OP: np.ndarray
    FP: np.ndarray
    OQ: np.ndarray
    FQ: np.ndarray
    W: np.ndarray


def _build_stencils(grid: PhaseGrid, kernel: CollisionKernel, quad: SphereQuadrature,
                    symmetric: bool) -> _Stencils:
    Nv, dv = grid.Nv, grid.dv
    K = _difference_vectors(Nv, symmetric)
    r = np.linalg.norm(K, axis=1) * dv
    keep = r > kernel.R0
    K, r = K[keep], r[keep]
    mu, phi, w = quad.nodes()
    if symmetric:
        sel = (mu > 0) | ((mu == 0) & (phi < math.pi))
    else:
        sel = np.ones(mu.size, dtype=bool)
    mus, ws = mu[sel], w[sel]
    ns = int(sel.sum())
    nk = K.shape[0]
    OP = np.zeros((nk, ns, 3), dtype=np.int64)
    OQ = np.zeros((nk, ns, 3), dtype=np.int64)
    FP = np.zeros((nk, ns, 3))
    FQ = np.zeros((nk, ns, 3))
    Bp = kernel.eval(r[:, None], mus[None, :])
    if symmetric:
        Bm = kernel.eval(r[:, None], -mus[None, :])
        W = ws[None, :] * (Bp + Bm)
    else:
        W = ws[None, :] * Bp
    W = W * dv ** 3
    for n in range(nk):
        kvec = K[n].astype(float)
        knorm = np.linalg.norm(kvec)
        sig, _ = sphere_directions(kvec / knorm, quad)
        sig = sig[sel]
        posP = -0.5 * kvec[None, :] + 0.5 * knorm * sig
        posQ = -0.5 * kvec[None, :] - 0.5 * knorm * sig
        # snap roundoff so that on-grid points interpolate exactly
        for pos, O, F in ((posP, OP, FP), (posQ, OQ, FQ)):
            rp = np.round(pos)
            pos = np.where(np.abs(pos - rp) < 1e-12, rp, pos)
            base = np.floor(pos)
            O[n] = base.astype(np.int64)
            F[n] = pos - base
    return _Stencils(K.astype(np.int64), OP, FP, OQ, FQ, W)


# ---------------------------------------------------------------------------
# numba kernels
#
# All gain-type kernels receive ratio arrays R = f / Gv and the reference
# Gaussian Gv on the velocity grid.  Because Gv(P) Gv(P*) = Gv(v_i) Gv(v_j)
# for the exact Gaussian, the interpolated product is Gv_i Gv_j R^(P) R^(P*).

@nb.njit(cache=True)
def _axis_tables(K, OP, FP, OQ, FQ, kk, s, Nv, IL, IH, WL, WH, INS):
    """Per-axis stencil tables for all node indices; slot 0 is P, slot 1 is P*."""
    for a in range(3):
        for slot in range(2):
            if slot == 0:
                base = OP[kk, s, a]
                frac = FP[kk, s, a]
            else:
                base = OQ[kk, s, a]
                frac = FQ[kk, s, a]
            for i in range(Nv):
                b = i + base
                pos = b + frac
                INS[slot, a, i] = (pos >= -0.5) and (pos <= Nv - 0.5)
                wl = 1.0 - frac
                wh = frac
                il = b
                ih = b + 1
                if il < 0 or il >= Nv:
                    wl = 0.0
                    il = 0
                if ih < 0 or ih >= Nv:
                    wh = 0.0
                    ih = 0
                IL[slot, a, i] = il
                IH[slot, a, i] = ih
                WL[slot, a, i] = wl
                WH[slot, a, i] = wh


@nb.njit(cache=True, inline="always")
def _interp(R, x, l1, h1, l2, h2, l3, h3, a1, b1, a2, b2, a3, b3):
    return (a1 * (a2 * (a3 * R[l1, l2, l3, x] + b3 * R[l1, l2, h3, x])
                  + b2 * (a3 * R[l1, h2, l3, x] + b3 * R[l1, h2, h3, x]))
            + b1 * (a2 * (a3 * R[h1, l2, l3, x] + b3 * R[h1, l2, h3, x])
                    + b2 * (a3 * R[h1, h2, l3, x] + b3 * R[h1, h2, h3, x])))


@nb.njit(cache=True)
def _gain_kernel(RG, RF, Gv, FG, FF, K, OP, FP, OQ, FQ, W, cut, symmetric, out, leak):
    """Gain accumulation.

    symmetric: RG is RF, unordered pairs and half-sphere weights; each value
    goes to both i and j.  Otherwise out(i) += W Gv_i Gv_j RG^(P*) RF^(P).
    """
    Nv = RF.shape[0]
    nx = RF.shape[3]
    nk = K.shape[0]
    ns = W.shape[1]
    IL = np.zeros((2, 3, Nv), np.int64)
    IH = np.zeros((2, 3, Nv), np.int64)
    WL = np.zeros((2, 3, Nv))
    WH = np.zeros((2, 3, Nv))
    INS = np.zeros((2, 3, Nv), np.bool_)
    for kk in range(nk):
        k1 = K[kk, 0]
        k2 = K[kk, 1]
        k3 = K[kk, 2]
        for s in range(ns):
            w = W[kk, s]
            if w == 0.0:
                continue
            _axis_tables(K, OP, FP, OQ, FQ, kk, s, Nv, IL, IH, WL, WH, INS)
            for i1 in range(max(0, k1), Nv + min(0, k1)):
                j1 = i1 - k1
                p1l = IL[0, 0, i1]; p1h = IH[0, 0, i1]; u1l = WL[0, 0, i1]; u1h = WH[0, 0, i1]
                q1l = IL[1, 0, i1]; q1h = IH[1, 0, i1]; z1l = WL[1, 0, i1]; z1h = WH[1, 0, i1]
                in1 = INS[0, 0, i1] and INS[1, 0, i1]
                for i2 in range(max(0, k2), Nv + min(0, k2)):
                    j2 = i2 - k2
                    p2l = IL[0, 1, i2]; p2h = IH[0, 1, i2]; u2l = WL[0, 1, i2]; u2h = WH[0, 1, i2]
                    q2l = IL[1, 1, i2]; q2h = IH[1, 1, i2]; z2l = WL[1, 1, i2]; z2h = WH[1, 1, i2]
                    in2 = in1 and INS[0, 1, i2] and INS[1, 1, i2]
                    for i3 in range(max(0, k3), Nv + min(0, k3)):
                        j3 = i3 - k3
                        gij = w * Gv[i1, i2, i3] * Gv[j1, j2, j3]
                        if gij < cut:
                            continue
                        inside = in2 and INS[0, 2, i3] and INS[1, 2, i3]
                        if not inside:
                            if symmetric:
                                nout = 0
                                if not (INS[0, 0, i1] and INS[0, 1, i2] and INS[0, 2, i3]):
                                    nout += 1
                                if not (INS[1, 0, i1] and INS[1, 1, i2] and INS[1, 2, i3]):
                                    nout += 1
                                for x in range(nx):
                                    leak[x] += w * nout * FF[i1, i2, i3, x] * FF[j1, j2, j3, x]
                            continue
                        p3l = IL[0, 2, i3]; p3h = IH[0, 2, i3]; u3l = WL[0, 2, i3]; u3h = WH[0, 2, i3]
                        q3l = IL[1, 2, i3]; q3h = IH[1, 2, i3]; z3l = WL[1, 2, i3]; z3h = WH[1, 2, i3]
                        for x in range(nx):
                            fp = _interp(RF, x, p1l, p1h, p2l, p2h, p3l, p3h,
                                         u1l, u1h, u2l, u2h, u3l, u3h)
                            gq = _interp(RG, x, q1l, q1h, q2l, q2h, q3l, q3h,
                                         z1l, z1h, z2l, z2h, z3l, z3h)
                            val = gij * fp * gq
                            out[i1, i2, i3, x] += val
                            if symmetric:
                                out[j1, j2, j3, x] += val


@nb.njit(cache=True)
def _entropy_production(RF, Gv, FF, K, OP, FP, OQ, FQ, W, clamp):
    """0.5 * sum over unordered pairs and half-sphere of W (P' - P) log(P'/P), per x."""
    Nv = RF.shape[0]
    nx = RF.shape[3]
    nk = K.shape[0]
    ns = W.shape[1]
    acc = np.zeros(nx)
    nclamp = 0
    IL = np.zeros((2, 3, Nv), np.int64)
    IH = np.zeros((2, 3, Nv), np.int64)
    WL = np.zeros((2, 3, Nv))
    WH = np.zeros((2, 3, Nv))
    INS = np.zeros((2, 3, Nv), np.bool_)
    for kk in range(nk):
        k1 = K[kk, 0]
        k2 = K[kk, 1]
        k3 = K[kk, 2]
        for s in range(ns):
            w = W[kk, s]
            if w == 0.0:
                continue
            _axis_tables(K, OP, FP, OQ, FQ, kk, s, Nv, IL, IH, WL, WH, INS)
            for i1 in range(max(0, k1), Nv + min(0, k1)):
                j1 = i1 - k1
                for i2 in range(max(0, k2), Nv + min(0, k2)):
                    j2 = i2 - k2
                    for i3 in range(max(0, k3), Nv + min(0, k3)):
                        j3 = i3 - k3
                        gg = Gv[i1, i2, i3] * Gv[j1, j2, j3]
                        inside = True
                        for a in range(3):
                            ia = i1 if a == 0 else (i2 if a == 1 else i3)
                            if not (INS[0, a, ia] and INS[1, a, ia]):
                                inside = False
                        for x in range(nx):
                            pre = FF[i1, i2, i3, x] * FF[j1, j2, j3, x]
                            post = 0.0
                            if inside:
                                fp = _interp(RF, x, IL[0, 0, i1], IH[0, 0, i1], IL[0, 1, i2],
                                             IH[0, 1, i2], IL[0, 2, i3], IH[0, 2, i3],
                                             WL[0, 0, i1], WH[0, 0, i1], WL[0, 1, i2],
                                             WH[0, 1, i2], WL[0, 2, i3], WH[0, 2, i3])
                                fq = _interp(RF, x, IL[1, 0, i1], IH[1, 0, i1], IL[1, 1, i2],
                                             IH[1, 1, i2], IL[1, 2, i3], IH[1, 2, i3],
                                             WL[1, 0, i1], WH[1, 0, i1], WL[1, 1, i2],
                                             WH[1, 1, i2], WL[1, 2, i3], WH[1, 2, i3])
                                post = gg * fp * fq
                            if post == pre:
                                continue
                            if post > 0.0 and pre > 0.0:
                                lg = math.log(post) - math.log(pre)
                                if lg > clamp:
                                    lg = clamp
                                    nclamp += 1
                                elif lg < -clamp:
                                    lg = -clamp
                                    nclamp += 1
                            elif post > 0.0:
                                lg = clamp
                                nclamp += 1
                            else:
                                lg = -clamp
                                nclamp += 1
                            acc[x] += w * (post - pre) * lg
    return 0.5 * acc, nclamp


@nb.njit(cache=True)
def _pair_convolution(G, TAB, Nv):
    """out(i, x) = sum_j TAB[|i-j|^2] G(j, x)."""
    nx = G.shape[3]
    out = np.zeros(G.shape)
    for i1 in range(Nv):
        for i2 in range(Nv):
            for i3 in range(Nv):
                for j1 in range(Nv):
                    d1 = (i1 - j1) * (i1 - j1)
                    for j2 in range(Nv):
                        d2 = d1 + (i2 - j2) * (i2 - j2)
                        for j3 in range(Nv):
                            t = TAB[d2 + (i3 - j3) * (i3 - j3)]
                            if t == 0.0:
                                continue
                            for x in range(nx):
                                out[i1, i2, i3, x] += t * G[j1, j2, j3, x]
    return out


# ---------------------------------------------------------------------------

class CollisionOperator:
    """Tabulated collision quadrature for one (grid, kernel, sphere quadrature).

    ``interpolation``: "maxwellian" interpolates f / G with G the Gaussian
    sharing the global mass, momentum and energy of the arguments, which makes
    Maxwellians exact fixed points of the gather; "linear" interpolates f.
    """

    skip_rel = 1e-16

    def __init__(self, grid: PhaseGrid, kernel: CollisionKernel,
                 quad: SphereQuadrature = DEFAULT_QUADRATURE, interpolation: str = "maxwellian"):
        if interpolation not in ("maxwellian", "linear"):
            raise ValueError("interpolation must be 'maxwellian' or 'linear'")
        self.grid = grid
        self.kernel = kernel
        self.quad = quad
        self.interpolation = interpolation
        Nv, dv = grid.Nv, grid.dv
        d2 = np.arange(3 * (Nv - 1) ** 2 + 1)
        r = np.sqrt(d2) * dv
        mu, w = quad.polar()
        # quadrature-consistent total cross section: same nodes as the gain
        self.phi_table = 2.0 * math.pi * np.sum(kernel.eval(r[:, None], mu[None, :]) * w, axis=1)
        self.phi_table[r <= kernel.R0] = 0.0
        self.r_table = r
        self.symmetric_ok = quad.n_azimuth % 2 == 0
        self._sym = None
        self._gen = None

    # stencils are built lazily; the general one is only needed for g != f
    @property
    def sym(self) -> _Stencils:
        if self._sym is None:
            self._sym = _build_stencils(self.grid, self.kernel, self.quad, True)
        return self._sym

    @property
    def gen(self) -> _Stencils:
        if self._gen is None:
            self._gen = _build_stencils(self.grid, self.kernel, self.quad, False)
        return self._gen

    # layout helpers: numba kernels work on (Nv, Nv, Nv, Nx)
    @staticmethod
    def _vx(values):
        return np.ascontiguousarray(np.moveaxis(values, 0, -1))

    @staticmethod
    def _xv(arr):
        return np.ascontiguousarray(np.moveaxis(arr, -1, 0))

    def reference_gaussian(self, *arrays) -> np.ndarray:
        """exp(-|v-u|^2 / 2T) for the summed arguments' global moments."""
        g = self.grid
        if self.interpolation == "linear":
            return np.ones((g.Nv,) * 3)
        tot = sum(np.asarray(a).sum(axis=0) for a in arrays)
        v1, v2, v3 = g.velocity_mesh()
        m = tot.sum()
        if not m > 0:
            return np.ones((g.Nv,) * 3)
        u = np.array([(tot * v1).sum(), (tot * v2).sum(), (tot * v3).sum()]) / m
        r2 = (v1 - u[0]) ** 2 + (v2 - u[1]) ** 2 + (v3 - u[2]) ** 2
        T = (tot * r2).sum() / (3 * m)
        # keep the exponent above -600 so the ratio f/G never overflows
        T = max(T, r2.max() / 1200.0, 1e-300)
        return np.exp(-r2 / (2 * T))

    def loss_frequency(self, g_values) -> np.ndarray:
        """nu(x, v) = dv^3 sum_{v*} Phi(|v - v*|) g(x, v*)."""
        G = self._vx(g_values)
        return self._xv(_pair_convolution(G, self.phi_table * self.grid.dv ** 3, self.grid.Nv))

    def loss(self, g_values, f_values) -> np.ndarray:
        return f_values * self.loss_frequency(g_values)

    def _cut(self, W, F, G, RF, RG):
        top = float(F.max()) * float(G.max())
        rr = float(RF.max()) * float(RG.max())
        if top <= 0 or rr <= 0 or W.size == 0:
            return np.inf
        return self.skip_rel * float(W.max()) * top / rr

    def gain(self, g_values, f_values=None):
        """Q+(g, f) values and the mass leak rate per x-cell (symmetric case only)."""
        nx = self.grid.Nx
        leak = np.zeros(nx)
        if self.kernel.is_zero:
            return np.zeros(self.grid.shape), leak
        same = f_values is None or f_values is g_values or np.array_equal(f_values, g_values)
        if same:
            f_values = g_values
        Gv = self.reference_gaussian(g_values, f_values) if not same else \
            self.reference_gaussian(f_values)
        F = self._vx(f_values)
        RF = F / Gv[..., None]
        if same and self.symmetric_ok:
            st = self.sym
            out = np.zeros_like(F)
            _gain_kernel(RF, RF, Gv, F, F, st.K, st.OP, st.FP, st.OQ, st.FQ, st.W,
                         self._cut(st.W, F, F, RF, RF), True, out, leak)
            return self._xv(out), leak * self.grid.dv ** 3
        G = F if same else self._vx(g_values)
        RG = RF if same else G / Gv[..., None]
        st = self.gen
        out = np.zeros_like(F)
        _gain_kernel(RG, RF, Gv, G, F, st.K, st.OP, st.FP, st.OQ, st.FQ, st.W,
                     self._cut(st.W, F, G, RF, RG), False, out, leak)
        return self._xv(out), leak

    def entropy_production(self, f_values):
        """Per-x-cell sums for D_H (times dv^6, without dx) and the clamp count."""
        if self.kernel.is_zero:
            return np.zeros(self.grid.Nx), 0
        if not self.symmetric_ok:
            raise ValueError("entropy production needs an even azimuth count")
        Gv = self.reference_gaussian(f_values)
        F = self._vx(f_values)
        RF = F / Gv[..., None]
        st = self.sym
        acc, n = _entropy_production(RF, Gv, F, st.K, st.OP, st.FP, st.OQ, st.FQ, st.W, LOG_CLAMP)
        return acc * self.grid.dv ** 3, int(n)

    def collision_rate(self, f_values) -> float:
        """A = dx dv^6 sum Phi(r) r^2 f f_*."""
        G = self._vx(f_values)
        tab = self.phi_table * self.r_table ** 2
        conv = _pair_convolution(G, tab, self.grid.Nv)
        return float(np.sum(conv * G) * self.grid.dx * self.grid.dv ** 6)

    def phi_max(self) -> float:
        return float(self.phi_table.max())


_OPERATORS: dict = {}


def get_operator(grid: PhaseGrid, kernel: CollisionKernel,
                 quad: SphereQuadrature | None = None,
                 interpolation: str = "maxwellian") -> CollisionOperator:
    quad = quad or DEFAULT_QUADRATURE
    key = (grid, id(kernel), quad, interpolation)
    op = _OPERATORS.get(key)
    if op is None or op.kernel is not kernel:
        if len(_OPERATORS) > 16:
            _OPERATORS.clear()
        op = CollisionOperator(grid, kernel, quad, interpolation)
        _OPERATORS[key] = op
    return op


def _check_same_grid(g: DistributionState, f: DistributionState):
    if g.grid != f.grid:
        raise ValueError("grid mismatch between g and f")


def q_loss(g: DistributionState, f: DistributionState, kernel: CollisionKernel,
           sigma_quadrature: SphereQuadrature | None = None) -> CollisionField:
    _check_same_grid(g, f)
    op = get_operator(f.grid, kernel, sigma_quadrature)
    return CollisionField(f.grid, op.loss(g.values, f.values))


def q_gain(g: DistributionState, f: DistributionState, kernel: CollisionKernel,
           sigma_quadrature: SphereQuadrature | None = None) -> CollisionField:
    _check_same_grid(g, f)
    op = get_operator(f.grid, kernel, sigma_quadrature)
    vals, leak = op.gain(g.values, f.values)
    return CollisionField(f.grid, vals, leakage=leak)


def conservative_projection(fld: CollisionField, weight: np.ndarray | None = None,
                            cond_max: float = 1e12) -> CollisionField:
    """Remove the five moment residuals per x-cell.

    The correction is w * (lambda . psi) with psi = (1, v, |v|^2); the weight
    defaults to uniform.  Passing w = f keeps f + dt Q nonnegative whenever
    the uncorrected update is.  Ill-conditioned weighted systems fall back to
    the uniform weight; a singular uniform system is a hard error.
    """
    grid = fld.grid
    psi = _moment_basis(grid).reshape(5, -1)
    dv3 = grid.dv ** 3
    vals = fld.values.reshape(grid.Nx, -1)
    res = vals @ psi.T * dv3
    # scale the basis so the Gram matrices are well balanced
    scale = np.sqrt(np.mean(psi * psi, axis=1))
    psn = psi / scale[:, None]
    resn = res / scale[None, :]
    uniform = np.ones(psi.shape[1])
    gram_u = (psn * uniform) @ psn.T * dv3
    if np.linalg.cond(gram_u) > cond_max:
        raise np.linalg.LinAlgError("singular moment Gram system: velocity grid is degenerate")
    out = vals.copy()
    mag = 0.0
    W = None if weight is None else np.asarray(weight, float).reshape(grid.Nx, -1)
    for x in range(grid.Nx):
        if not np.any(res[x]):
            continue
        w = uniform
        gram = gram_u
        if W is not None:
            wx = W[x]
            tot = wx.sum()
            if tot > 0:
                wx = wx / (tot * dv3) * (psi.shape[1] * dv3)
                gw = (psn * wx) @ psn.T * dv3
                if np.linalg.cond(gw) <= cond_max:
                    w, gram = wx, gw
        lam = np.linalg.solve(gram, resn[x])
        corr = w * (lam @ psn)
        out[x] -= corr
        mag = max(mag, float(np.abs(corr).max()))
    res_after = out @ psi.T * dv3
    return CollisionField(grid, out.reshape(grid.shape), res_after, fld.leakage, mag,
                          dict(fld.meta, raw_residuals=res))


def collision_operator(f: DistributionState, kernel: CollisionKernel,
                       sigma_quadrature: SphereQuadrature | None = None,
                       project: bool = True):
    """Q(f, f) = Q+ - Q-; projected with weight f unless ``project`` is False.

    Returns (field, gain_field, loss_field).
    """
    op = get_operator(f.grid, kernel, sigma_quadrature)
    gain, leak = op.gain(f.values)
    loss = op.loss(f.values, f.values)
    raw = CollisionField(f.grid, gain - loss, leakage=leak)
    fld = conservative_projection(raw, weight=f.values) if project else raw
    return fld, CollisionField(f.grid, gain, leakage=leak), CollisionField(f.grid, loss)
