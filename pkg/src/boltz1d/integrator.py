"""Time stepping: Strang/Lie splitting and the Duhamel-Picard fixed point."""

from __future__ import annotations

import logging
import math
import time as _time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .collision import conservative_projection, CollisionField, get_operator
from .diagnostics import DiagnosticsRecord, bony_functionals, compute_record, entropy, x_norm
from .kernel import CollisionKernel, SphereQuadrature
from .state import DistributionState, MaxwellianSpec, moments
from .transport import shift_array

log = logging.getLogger(__name__)

SCHEMES = ("strang", "lie", "picard")


class PositivityError(RuntimeError):
    pass


class PicardDivergence(RuntimeError):
    pass


@dataclass
class IntegratorConfig:
    dt: float = 0.01
    scheme: str = "strang"
    picard_tol: float = 1e-10
    picard_max_iter: int = 50
    t_end: float = 1.0
    snapshot_stride: int = 10
    collision_substep: Optional[str] = None   # euler | heun; default heun for strang
    guard: float = 0.5
    dt_min: float = 1e-8

    def __post_init__(self):
        errs = []
        if not self.dt > 0:
            errs.append("integrator.dt must be > 0")
        if self.scheme not in SCHEMES:
            errs.append(f"integrator.scheme must be one of {SCHEMES}")
        if not self.picard_tol > 0:
            errs.append("integrator.picard_tol must be > 0")
        if self.picard_max_iter < 1:
            errs.append("integrator.picard_max_iter must be >= 1")
        if not self.t_end >= 0:
            errs.append("integrator.t_end must be >= 0")
        if self.snapshot_stride < 1:
            errs.append("integrator.snapshot_stride must be >= 1")
        if self.collision_substep not in (None, "euler", "heun"):
            errs.append("integrator.collision_substep must be euler or heun")
        if errs:
            raise ValueError("; ".join(errs))

    @property
    def substep(self) -> str:
        if self.collision_substep:
            return self.collision_substep
        return "heun" if self.scheme == "strang" else "euler"


def _counters():
    return {"leak_v": 0.0, "leak_x": 0.0, "clip_count": 0, "dt_halvings": 0,
            "projection_max": 0.0}


class Stepper:
    """Bundles the operator tables and counters for one run."""

    def __init__(self, kernel: CollisionKernel, quad: Optional[SphereQuadrature] = None,
                 cfg: Optional[IntegratorConfig] = None, interpolation: str = "maxwellian"):
        self.kernel = kernel
        self.quad = quad
        self.cfg = cfg or IntegratorConfig()
        self.interpolation = interpolation
        self.counters = _counters()

    def op(self, grid):
        return get_operator(grid, self.kernel, self.quad, self.interpolation)

    def rate(self, grid, values, nu=None):
        """Projected Q(f, f) values and the per-cell leak rate."""
        op = self.op(grid)
        gain, leak = op.gain(values)
        if nu is None:
            nu = op.loss_frequency(values)
        raw = CollisionField(grid, gain - values * nu, leakage=leak)
        fld = conservative_projection(raw, weight=np.maximum(values, 0.0))
        self.counters["projection_max"] = max(self.counters["projection_max"],
                                              fld.projection_magnitude)
        return fld.values, leak

    def _clip(self, grid, values):
        neg = values < 0
        n = int(neg.sum())
        if n:
            self.counters["clip_count"] += n
            before = values.sum(axis=(1, 2, 3))
            values = np.where(neg, 0.0, values)
            after = values.sum(axis=(1, 2, 3))
            scale = np.where(after > 0, before / np.where(after > 0, after, 1.0), 1.0)
            values = values * scale[:, None, None, None]
        return values

    def collide(self, grid, values, dt):
        if self.kernel.is_zero or dt == 0:
            return values
        op = self.op(grid)
        nu = op.loss_frequency(values)
        nmax = float(nu.max())
        n_sub = 1
        while dt / n_sub * nmax > self.cfg.guard:
            n_sub *= 2
            self.counters["dt_halvings"] += 1
            if dt / n_sub < self.cfg.dt_min:
                raise PositivityError(
                    f"positivity guard needs a collision step below dt_min={self.cfg.dt_min}")
        if n_sub > 1:
            log.info("positivity guard: collision step split into %d substeps", n_sub)
        h = dt / n_sub
        f = values
        for i in range(n_sub):
            if i:
                nu = op.loss_frequency(f)
            q1, l1 = self.rate(grid, f, nu)
            f1 = self._clip(grid, f + h * q1)
            if self.cfg.substep == "heun":
                q2, l2 = self.rate(grid, f1)
                f = self._clip(grid, 0.5 * f + 0.5 * (f1 + h * q2))
                leak = 0.5 * (l1 + l2)
            else:
                f = f1
                leak = l1
            self.counters["leak_v"] += h * float(leak.sum()) * grid.dx
        return f

    def transport(self, grid, values, q):
        out, outflow = shift_array(values, grid, q)
        self.counters["leak_x"] += float(outflow.sum()) * grid.cell
        return np.maximum(out, 0.0)

    def step(self, state: DistributionState, dt: float) -> DistributionState:
        g = state.grid
        f = state.values
        if self.cfg.scheme == "lie":
            f = self.transport(g, f, dt)
            f = self.collide(g, f, dt)
        else:
            f = self.transport(g, f, 0.5 * dt)
            f = self.collide(g, f, dt)
            f = self.transport(g, f, 0.5 * dt)
        out = DistributionState.unchecked(g, f, state.time + dt, state.meta)
        return out


def step_split(state: DistributionState, dt: float, kernel: CollisionKernel,
               quad: Optional[SphereQuadrature] = None, scheme: str = "strang",
               substep: Optional[str] = None, stepper: Optional[Stepper] = None) -> DistributionState:
    """One splitting step; Strang is shift(dt/2) o collide(dt) o shift(dt/2)."""
    if stepper is None:
        stepper = Stepper(kernel, quad, IntegratorConfig(dt=dt, scheme=scheme,
                                                         collision_substep=substep))
    return stepper.step(state, dt)


# Picard --------------------------------------------------------------------------

@dataclass
class PicardResult:
    times: np.ndarray
    states: list
    iterations: int
    contraction: float
    distances: list
    horizon_bound: float

    def state_at(self, n: int) -> DistributionState:
        return self.states[n]


def picard_horizon(kernel: CollisionKernel, f_in: DistributionState, **xn_kw) -> float:
    """T = 1 / (8 C R) with C = 8 pi ||phi||_L1 and R = 2 ||f_in||_X."""
    C = 8.0 * math.pi * kernel.phi_l1
    R = 2.0 * x_norm(f_in, **xn_kw).value
    if C == 0 or R == 0:
        return math.inf
    return 1.0 / (8.0 * C * R)


def picard_solve(state: DistributionState, T: float, kernel: CollisionKernel, tol: float = 1e-10,
                 max_iter: int = 50, dt: float = 0.01, quad: Optional[SphereQuadrature] = None,
                 stepper: Optional[Stepper] = None, **xn_kw) -> PicardResult:
    """Iterate f -> S_t f_in + int_0^t S_{t-s} Q(f, f)(s) ds on the grid t_n = n dt.

    The time integral uses the trapezoid rule; the distance between iterates is
    the X norm of |f_{k+1} - f_k| maximized over time nodes, relative to
    ||f_in||_X.
    """
    g = state.grid
    N = int(round(T / dt))
    if N < 1 or abs(N * dt - T) > 1e-9 * max(T, 1.0):
        raise ValueError("T must be a positive multiple of dt")
    stepper = stepper or Stepper(kernel, quad, IntegratorConfig(dt=dt, scheme="picard"))
    horizon = picard_horizon(kernel, state, **xn_kw)
    if T > horizon:
        log.warning("Picard horizon %.3g exceeds the contraction budget %.3g", T, horizon)
    times = np.arange(N + 1) * dt
    f_in = state.values
    free = [shift_array(f_in, g, t)[0] for t in times]
    X0 = x_norm(state, **xn_kw).value
    cur = [a.copy() for a in free]
    dists = []
    contraction = 0.0
    if X0 == 0 or kernel.is_zero:
        return PicardResult(times, [DistributionState.unchecked(g, a, t) for a, t in zip(cur, times)],
                            1, 0.0, [0.0], horizon)
    it = 0
    for it in range(1, max_iter + 1):
        Q = [stepper.rate(g, a)[0] for a in cur]
        new = [free[0].copy()]
        for n in range(1, N + 1):
            acc = free[n].copy()
            for mm in range(n + 1):
                w = dt * (0.5 if mm in (0, n) else 1.0)
                acc += w * shift_array(Q[mm], g, times[n] - times[mm])[0]
            new.append(acc)
        d = max(x_norm(np.abs(a - b), grid=g, **xn_kw).value for a, b in zip(new, cur)) / X0
        dists.append(d)
        cur = new
        if len(dists) >= 2 and dists[-2] > 0:
            contraction = max(contraction, dists[-1] / dists[-2]) if it > 2 else dists[-1] / dists[-2]
        if d < tol:
            break
        if it >= 3 and contraction >= 1.0:
            raise PicardDivergence(
                f"Picard iteration is not contracting (factor {contraction:.3g}); use a smaller T")
    else:
        raise PicardDivergence(f"Picard iteration did not reach tol={tol} in {max_iter} iterations")
    states = [DistributionState.unchecked(g, a, state.time + t) for a, t in zip(cur, times)]
    return PicardResult(times, states, it, contraction, dists, horizon)


# runs ------------------------------------------------------------------------------

@dataclass
class RunSpec:
    initial: DistributionState
    kernel: CollisionKernel
    integrator: IntegratorConfig
    quad: Optional[SphereQuadrature] = None
    reference: Optional[MaxwellianSpec] = None
    q_max: Optional[float] = None
    n_q: int = 256
    with_dh: bool = True
    keep_snapshots: bool = False
    interpolation: str = "maxwellian"


@dataclass
class Trajectory:
    records: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    steps: dict = field(default_factory=dict)
    counters: dict = field(default_factory=dict)
    status: str = "completed"
    error: Optional[str] = None
    wall_time: float = 0.0
    final_state: Optional[DistributionState] = None

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])

    def step_series(self, name):
        return np.asarray(self.steps.get(name, []))


def _step_diag(state):
    m, p, e = moments(state)
    L, D_B, ell = bony_functionals(state)
    return m, p, e, entropy(state.values, state.grid), L, D_B, ell


def run(config) -> Trajectory:
    """Advance to t_end, recording diagnostics every ``snapshot_stride`` steps and at the end.

    Per-step series (mass, momentum, energy, H, L, D_B, ell, A, outflow) are kept in
    ``Trajectory.steps`` for time integrals.  On error the partial trajectory
    is returned with status "failed".
    """
    spec: RunSpec = config.to_run_spec() if hasattr(config, "to_run_spec") else config
    cfg = spec.integrator
    stepper = Stepper(spec.kernel, spec.quad, cfg, spec.interpolation)
    op = stepper.op(spec.initial.grid)
    traj = Trajectory()
    names = ("t", "mass", "px", "py", "pz", "energy", "H", "L", "D_B", "ell", "A", "leak_x")
    traj.steps = {k: [] for k in names}
    t0 = _time.time()
    state = spec.initial
    n_steps = int(round(cfg.t_end / cfg.dt)) if cfg.t_end > 0 else 0

    def record_step(s):
        m, p, e, H, L, D_B, ell = _step_diag(s)
        A = op.collision_rate(s.values) if not spec.kernel.is_zero else 0.0
        vals = (s.time, m, p[0], p[1], p[2], e, H, L, D_B, ell, A, stepper.counters["leak_x"])
        for k, v in zip(names, vals):
            traj.steps[k].append(float(v))

    def record(s):
        traj.records.append(compute_record(s, spec.kernel, spec.quad, spec.reference,
                                           stepper.counters, spec.with_dh, spec.q_max, spec.n_q))
        if spec.keep_snapshots:
            traj.snapshots.append(s.copy())

    try:
        record_step(state)
        record(state)
        if cfg.scheme == "picard" and n_steps:
            res = picard_solve(state, n_steps * cfg.dt, spec.kernel, cfg.picard_tol,
                               cfg.picard_max_iter, cfg.dt, spec.quad, stepper,
                               q_max=spec.q_max, n_q=spec.n_q)
            stepper.counters["picard_iterations"] = res.iterations
            for n in range(1, n_steps + 1):
                state = res.states[n]
                record_step(state)
                if n % cfg.snapshot_stride == 0 or n == n_steps:
                    record(state)
            n_steps = 0
        for n in range(1, n_steps + 1):
            state = stepper.step(state, cfg.dt)
            state.time = n * cfg.dt
            record_step(state)
            if n % cfg.snapshot_stride == 0 or n == n_steps:
                record(state)
    except Exception as exc:  # flush what we have, then report
        traj.status = "failed"
        traj.error = f"{type(exc).__name__}: {exc}"
        log.error("run failed at t=%.6g: %s", state.time, traj.error)
    traj.counters = dict(stepper.counters)
    traj.wall_time = _time.time() - t0
    traj.final_state = state
    return traj
