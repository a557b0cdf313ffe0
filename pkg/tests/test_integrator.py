import math

import numpy as np
import pytest

from boltz1d.integrator import (IntegratorConfig, PicardDivergence, RunSpec, Stepper, picard_horizon,
                                picard_solve, run, step_split)
from boltz1d.kernel import canonical_kernel, zero_kernel
from boltz1d.state import DistributionState, MaxwellianSpec, PhaseGrid, maxwellian_state, moments
from boltz1d.transport import shift

from conftest import QUAD


def beams(g, m=1.0, u=1.5, T=0.4, prof=None):
    a = maxwellian_state(MaxwellianSpec(m / 2, (u, 0, 0), T), g, rho_profile=prof)
    b = maxwellian_state(MaxwellianSpec(m / 2, (-u, 0, 0), T), g, rho_profile=prof)
    return a + b


def exact_shift_grid(dt, nx=16):
    # dv = 1 and dx = dt / 4 so half steps move every v1 node by a whole number of cells
    return PhaseGrid("torus", nx * dt / 4, nx, 4.0, 8)


def test_config_validation_collects_errors():
    with pytest.raises(ValueError) as e:
        IntegratorConfig(dt=0.0, scheme="rk4", snapshot_stride=0)
    msg = str(e.value)
    assert "dt" in msg and "scheme" in msg and "snapshot_stride" in msg
    assert IntegratorConfig(scheme="lie").substep == "euler"
    assert IntegratorConfig().substep == "heun"


def test_zero_kernel_is_pure_transport(rng):
    g = PhaseGrid("torus", 1.0, 8, 2.0, 4)   # half steps of 0.25 move v1 = 0.5 by one cell
    s = DistributionState(g, rng.random(g.shape))
    out = step_split(s, 0.5, zero_kernel(), QUAD)
    np.testing.assert_allclose(out.values, shift(s, 0.5).values, rtol=1e-13, atol=1e-15)


def test_homogeneous_maxwellian_nearly_fixed(kernel):
    g = PhaseGrid("torus", 1.0, 2, 4.5, 8)
    M = maxwellian_state(MaxwellianSpec(1.0, (0, 0, 0), 0.5), g)
    st = Stepper(kernel, QUAD)
    f = M
    for _ in range(10):
        f = st.step(f, 0.05)
    assert np.abs(f.values - M.values).sum() / M.values.sum() < 1e-3
    assert st.counters["clip_count"] == 0


def test_heun_collision_second_order(kernel):
    g = PhaseGrid("torus", 1.0, 2, 4.0, 8)
    f0 = beams(g, m=0.1)   # nu_max * dt stays below the guard, so no substepping
    T = 0.8

    def solve(dt):
        st = Stepper(kernel, QUAD, IntegratorConfig(dt=dt))
        f = f0
        for _ in range(int(round(T / dt))):
            f = st.step(f, dt)
        return f.values

    ref = solve(0.025)
    e1 = np.abs(solve(0.2) - ref).sum()
    e2 = np.abs(solve(0.1) - ref).sum()
    assert e1 / e2 > 3.0


def test_strang_beats_lie_on_exact_shift_grid(kernel):
    dt = 0.02
    g = exact_shift_grid(dt / 4, 32)   # exact for the reference step as well
    f0 = beams(g, m=0.05, prof=1 + 0.5 * np.cos(2 * np.pi * g.x / g.L))

    def solve(scheme, h, n):
        st = Stepper(kernel, QUAD, IntegratorConfig(dt=h, scheme=scheme))
        f = f0
        for _ in range(n):
            f = st.step(f, h)
        return f.values

    ref = solve("strang", dt / 4, 8)
    err_s = np.abs(solve("strang", dt, 2) - ref).sum()
    err_l = np.abs(solve("lie", dt, 2) - ref).sum()
    assert err_s < err_l


def test_strang_conserves_on_torus(kernel):
    g = PhaseGrid("torus", 1.0, 4, 4.0, 8)
    f = beams(g, prof=1 + 0.3 * np.sin(2 * np.pi * g.x))
    m0, p0, e0 = moments(f)
    st = Stepper(kernel, QUAD)
    for _ in range(5):
        f = st.step(f, 0.05)
    m1, p1, e1 = moments(f)
    assert abs(m1 - m0) <= 1e-12 * m0
    assert np.abs(p1 - p0).max() <= 1e-12 * math.sqrt(m0 * e0)
    assert abs(e1 - e0) <= 1e-12 * e0


def test_positivity_guard_substeps(kernel):
    g = PhaseGrid("torus", 1.0, 2, 4.0, 8)
    f = beams(g, m=5.0)
    st = Stepper(kernel, QUAD, IntegratorConfig(dt=0.1))
    out = st.step(f, 0.1)
    assert st.counters["dt_halvings"] > 0
    assert np.all(out.values >= 0)


def test_picard_trivial_cases(torus, rng):
    z = DistributionState(torus, np.zeros(torus.shape))
    res = picard_solve(z, 0.05, canonical_kernel(1, 1, 0.5), dt=0.01, quad=QUAD)
    assert all(s.mass == 0 for s in res.states)
    s = DistributionState(torus, rng.random(torus.shape))
    res = picard_solve(s, 0.05, zero_kernel(), dt=0.01)
    np.testing.assert_allclose(res.states[-1].values, shift(s, 0.05).values, rtol=1e-13)
    with pytest.raises(ValueError):
        picard_solve(s, 0.055, zero_kernel(), dt=0.01)


def test_picard_horizon_formula(torus, maxwellian, kernel):
    T = picard_horizon(kernel, maxwellian)
    expect = 1.0 / (8 * 8 * math.pi * kernel.phi_l1 * 2 * maxwellian.mass / torus.L)
    assert T == pytest.approx(expect, rel=1e-10)
    assert picard_horizon(zero_kernel(), maxwellian) == math.inf


def test_picard_matches_strang_homogeneous(kernel):
    g = PhaseGrid("torus", 1.0, 2, 4.0, 8)
    f0 = beams(g, m=1e-3)
    dt = 0.01
    res = picard_solve(f0, 0.05, kernel, tol=1e-13, dt=dt, quad=QUAD)
    st = Stepper(kernel, QUAD)
    f = f0
    for _ in range(5):
        f = st.step(f, dt)
    gap = np.abs(res.states[-1].values - f.values).sum() * g.cell
    assert gap <= 1e-9 * f0.mass


def test_picard_matches_strang_exact_shift():
    kernel = canonical_kernel(1.0, 1.0, 0.5)
    dt = 0.01
    g = exact_shift_grid(dt)
    f0 = beams(g, m=1e-4, prof=1 + 0.5 * np.cos(2 * np.pi * g.x / g.L))
    T = 0.1
    assert T <= picard_horizon(kernel, f0)
    res = picard_solve(f0, T, kernel, tol=1e-12, dt=dt, quad=QUAD)
    st = Stepper(kernel, QUAD)
    f = f0
    for n in range(1, 11):
        f = st.step(f, dt)
        gap = np.abs(res.states[n].values - f.values).sum() * g.cell
        assert gap <= 5 * dt * dt * f0.mass
    assert res.contraction < 1


def test_picard_diverges_past_budget(kernel):
    g = PhaseGrid("torus", 1.0, 2, 4.0, 8)
    with pytest.raises(PicardDivergence):
        picard_solve(beams(g, m=200.0), 0.5, kernel, tol=1e-14, max_iter=6, dt=0.05, quad=QUAD)


def _spec(state, kernel, **kw):
    icfg = IntegratorConfig(**{"dt": 0.05, "t_end": 0.2, "snapshot_stride": 2, **kw})
    return RunSpec(state, kernel, icfg, QUAD, n_q=32)


def test_run_t_end_zero(torus, maxwellian, kernel):
    tr = run(_spec(maxwellian, kernel, t_end=0.0))
    assert len(tr.records) == 1 and tr.status == "completed"
    assert tr.final_state is maxwellian


def test_run_records_and_step_series(torus, kernel):
    f = beams(torus, prof=1 + 0.2 * np.cos(2 * np.pi * torus.x))
    tr = run(_spec(f, kernel))
    assert [round(r.t, 10) for r in tr.records] == [0.0, 0.1, 0.2]
    assert len(tr.step_series("t")) == 5
    m = tr.step_series("mass")
    assert np.abs(m - m[0]).max() <= 1e-12 * m[0]
    assert tr.final_state.time == pytest.approx(0.2)


def test_run_picard_scheme():
    kernel = canonical_kernel(1.0, 1.0, 0.5)
    g = PhaseGrid("torus", 1.0, 2, 4.0, 8)
    tr = run(_spec(beams(g, m=1e-3), kernel, scheme="picard", dt=0.01, t_end=0.04))
    assert tr.status == "completed"
    assert tr.counters["picard_iterations"] >= 2
    assert len(tr.records) == 3


def test_run_failure_is_reported(torus, kernel):
    f = beams(torus, m=1e4)
    spec = _spec(f, kernel, dt=1.0, t_end=1.0)
    spec.integrator.dt_min = 0.5
    tr = run(spec)
    assert tr.status == "failed" and "PositivityError" in tr.error
    assert len(tr.records) == 1
