import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from boltz1d import inequality_lab as lab
from boltz1d.inequality_lab import (GrowthBoundSpec, bony_bound, bony_direct_quadrature,
                                    maximal_solution_oracle, phi, phi_inv, run_trials,
                                    small_entropy_bound, small_entropy_constants)
from boltz1d.kernel import canonical_kernel
from boltz1d.state import DistributionState, MaxwellianSpec, PhaseGrid

T_GRID = np.linspace(0.0, 2.0, 129)


def test_constants_worked_example():
    k = small_entropy_constants(1.0, 1.0)
    assert k.threshold == pytest.approx(1 / 6)
    assert float(phi(1 / 6, 1.0)) == pytest.approx(1 / 6 + math.sqrt(1 / 12), rel=1e-15)
    assert k.K == pytest.approx(0.910684, abs=1e-6)
    assert k.alpha == pytest.approx((1 + k.K) / 2, rel=1e-14)
    with pytest.raises(ValueError):
        small_entropy_constants(0.0, 1.0)


@given(m=st.floats(0.01, 100), h=st.floats(0, 1e3))
def test_phi_inverse_roundtrip(m, h):
    assert float(phi_inv(phi(h, m), m)) == pytest.approx(h, rel=1e-12, abs=1e-12)


def test_bony_bound_closed_form():
    assert bony_bound(1.0, 0.0, 2.125, 1.0) == pytest.approx(4.5, rel=1e-14)
    base = 2.0 * (1.0 + 1.0 / 8.0)
    f1 = bony_bound(1.0, 0.1, 1.0, 1.0) / base
    f2 = bony_bound(1.0, 0.2, 1.0, 1.0) / base
    assert f2 == pytest.approx(f1 * f1, rel=1e-12)
    assert bony_bound(1.0, 100.0, 1.0, 10.0) == math.inf
    with pytest.raises(ValueError):
        bony_bound(0.0, 0.0, 1.0, 1.0)


def test_bony_bound_curve_matches_pointwise():
    a = 1.0 + np.sin(T_GRID)
    curve = lab.bony_bound_curve(0.5, a, 1.0, T_GRID)
    for n in (1, 40, 128):
        assert math.exp(curve[n]) == pytest.approx(bony_bound(0.5, a, 1.0, T_GRID[n], T_GRID), rel=1e-12)


def test_oracle_zero_forcing_is_constant():
    spec = GrowthBoundSpec("bony", c=3.0, phi0=0.7, a=np.zeros_like(T_GRID))
    res = maximal_solution_oracle(spec, T_GRID)
    assert res.converged
    np.testing.assert_allclose(res.values, 0.7)


def test_oracle_large_c_is_direct_quadrature():
    a = 0.1 * np.exp(-T_GRID)
    spec = GrowthBoundSpec("bony", c=1e8, phi0=1.0, a=a)
    res = maximal_solution_oracle(spec, T_GRID, rtol=1e-13)
    np.testing.assert_allclose(res.values, bony_direct_quadrature(spec, T_GRID), rtol=1e-12)


def test_oracle_small_c_follows_riccati():
    # with a large, phi' = c phi^2 and phi(t) = phi0 / (1 - c phi0 t)
    spec = GrowthBoundSpec("bony", c=0.2, phi0=1.0, a=np.full_like(T_GRID, 1e6))
    res = maximal_solution_oracle(spec, T_GRID, rtol=1e-13)
    exact = 1.0 / (1.0 - 0.2 * T_GRID)
    np.testing.assert_allclose(res.values, exact, rtol=1e-3)


@given(seed=st.integers(0, 10_000))
def test_oracle_monotone_in_data(seed):
    rng = np.random.default_rng(seed)
    spec = lab.random_growth_spec(rng, "bony", T_GRID)
    bigger = GrowthBoundSpec("bony", c=spec.c * 1.5, phi0=spec.phi0 * 1.2, a=spec.a * 1.3)
    r0 = maximal_solution_oracle(spec, T_GRID)
    r1 = maximal_solution_oracle(bigger, T_GRID)
    if r0.converged and r1.converged:
        assert np.all(r1.values >= r0.values * (1 - 1e-9))


def test_oracle_reports_blowup():
    spec = GrowthBoundSpec("bony", c=10.0, phi0=10.0, a=np.full_like(T_GRID, 1e20))
    res = maximal_solution_oracle(spec, T_GRID, cap=1e12)
    assert res.diverged and not res.converged


def test_oracle_rejects_bad_grids():
    spec = GrowthBoundSpec("bony", c=1.0, phi0=1.0)
    with pytest.raises(ValueError):
        maximal_solution_oracle(spec, np.array([0.0, 0.1, 0.3]))
    with pytest.raises(ValueError):
        maximal_solution_oracle(spec, np.array([0.0]))


def test_growth_spec_validation():
    with pytest.raises(ValueError) as e:
        GrowthBoundSpec("small_entropy", c=-1.0, phi0=1.0, alpha=1.0)
    assert "c must" in str(e.value) and "alpha" in str(e.value)
    with pytest.raises(ValueError):
        GrowthBoundSpec("bony", c=1.0, phi0=1.0, a=[0.0, -1.0])
    with pytest.raises(ValueError):
        GrowthBoundSpec("linear", c=1.0, phi0=1.0)


def test_small_entropy_bound_monotone():
    spec = GrowthBoundSpec("small_entropy", c=1.0, phi0=2.0, c2=0.5, alpha=0.5, eps=0.5, m=1.0)
    vals = [small_entropy_bound(spec, t) for t in (0, 0.5, 1, 2, 4)]
    assert vals[0] >= spec.phi0
    assert all(b > a for a, b in zip(vals, vals[1:]))
    res = maximal_solution_oracle(spec, T_GRID)
    assert res.converged
    assert np.all(np.log(res.values) <= lab.small_entropy_log_bound(spec, T_GRID))


def test_small_entropy_chain_alpha_dependence():
    lo = GrowthBoundSpec("small_entropy", c=1.0, phi0=2.0, alpha=0.2, m=1.0)
    hi = GrowthBoundSpec("small_entropy", c=1.0, phi0=2.0, alpha=0.9, m=1.0)
    assert lab.small_entropy_chain(hi).C > lab.small_entropy_chain(lo).C


def test_small_entropy_chain_huge_K_stays_finite():
    # alpha near 1 pushes log K past the float range of K itself
    spec = GrowthBoundSpec("small_entropy", c=7.15, phi0=55.1, c2=0.0152, alpha=0.9154,
                           eps=0.4017, m=7.823)
    ch = lab.small_entropy_chain(spec)
    assert ch.log_K > 709 and math.isfinite(ch.C)
    assert lab.verify_growth_oracle(spec, lab.ORACLE_GRID).holds


def _cum(p, dx, torus):
    n = p.size
    cum = np.zeros(n + 2)
    if torus:
        for i in range(n):
            cum[i + 1] = cum[i] + 0.5 * dx * (p[i] + p[(i + 1) % n])
    else:
        cum[1] = 0.5 * dx * p[0]
        for i in range(1, n):
            cum[i + 1] = cum[i] + 0.5 * dx * (p[i - 1] + p[i])
        cum[n + 1] = cum[n] + 0.5 * dx * p[n - 1]
    return cum


@pytest.mark.parametrize("torus", [True, False])
def test_p1_antiderivative_against_dense_quadrature(torus):
    rng = np.random.default_rng(1)
    n, dx, x0 = 7, 0.3, -0.9
    p = rng.random(n)
    cum = _cum(p, dx, torus)
    xs = x0 + dx * np.arange(n)
    if torus:
        L = n * dx
        xp = np.concatenate([xs, [xs[0] + L]])
        fp = np.concatenate([p, [p[0]]])
        interp = lambda s: np.interp(x0 + np.mod(s - x0, L), xp, fp)
    else:
        xp = np.concatenate([[x0 - dx], xs, [xs[-1] + dx]])
        fp = np.concatenate([[0.0], p, [0.0]])
        interp = lambda s: np.interp(s, xp, fp, left=0.0, right=0.0)
    for a, b in ((-0.5, 0.4), (-3.0, 1.7), (0.11, 5.3)):
        s = np.linspace(a, b, 200_001)
        brute = np.trapezoid(interp(s), s)
        got = (lab._p1_antiderivative(p, cum, x0, dx, torus, b)
               - lab._p1_antiderivative(p, cum, x0, dx, torus, a))
        assert got == pytest.approx(brute, rel=1e-6, abs=1e-9)


def _homogeneous(grid, seed):
    v = np.random.default_rng(seed).random(grid.shape[1:])
    return DistributionState(grid, np.broadcast_to(v, grid.shape).copy())


def test_angular_identity_for_isotropic_kernel():
    g = PhaseGrid("torus", 40.0, 4, 3.0, 6)
    k = canonical_kernel(1.0, 1.0, 0.5)
    a, b = _homogeneous(g, 1), _homogeneous(g, 2)
    for q in (0.3, 2.0):
        lhs, _ = lab.angular_averaging_sides(a, b, k, q, lab.TRIAL_QUAD)
        assert lab.angular_identity_defect(a, b, k, q, lab.TRIAL_QUAD) <= 1e-10 * lhs.max()


def test_verifiers_on_zero_state():
    g = PhaseGrid("torus", 40.0, 4, 3.0, 6)
    z = DistributionState(g, np.zeros(g.shape))
    k = canonical_kernel(1.0, 1.0, 0.5, "poly:1,0.5")
    for r in (lab.verify_bilinear_X(z, z, k, quad=lab.TRIAL_QUAD),
              lab.verify_angular_averaging(z, z, k, 1.0, quad=lab.TRIAL_QUAD),
              lab.verify_torus_gain_bound(z, k, 1.0, quad=lab.TRIAL_QUAD),
              *lab.verify_moment_and_w11_bounds(z, z, k, quad=lab.TRIAL_QUAD)):
        assert r.holds and r.lhs == 0.0
    assert lab.verify_pinsker(np.ones(5), 0.2).holds


def test_verifiers_reject_mismatched_grids():
    a = DistributionState(PhaseGrid("torus", 1.0, 4, 3.0, 6), np.ones((4, 6, 6, 6)))
    b = DistributionState(PhaseGrid("torus", 2.0, 4, 3.0, 6), np.ones((4, 6, 6, 6)))
    with pytest.raises(ValueError):
        lab.verify_bilinear_X(a, b, canonical_kernel(1, 1, 0.5))
    with pytest.raises(ValueError):
        lab.verify_torus_gain_bound(DistributionState(PhaseGrid("line", 1.0, 4, 3.0, 6),
                                                      np.ones((4, 6, 6, 6))),
                                    canonical_kernel(1, 1, 0.5), 1.0)


@given(seed=st.integers(0, 10_000))
def test_pinsker_property(seed):
    rng = np.random.default_rng(seed)
    rho = rng.random(int(rng.integers(2, 40))) ** 3
    assert lab.verify_pinsker(rho + 1e-3, float(rng.uniform(0.01, 2))).holds


@given(seed=st.integers(0, 10_000))
def test_entropy_chain_property(seed):
    rng = np.random.default_rng(seed)
    g = PhaseGrid("torus", 2.0, 6, 3.0, 6)
    f = lab.random_state(rng, g)
    ref = MaxwellianSpec(f.mass, tuple(rng.uniform(-0.3, 0.3, 3)), float(rng.uniform(0.5, 2)))
    assert lab.verify_entropy_chain(f, ref).holds


def test_moment_constant():
    assert lab.moment_constant(0.0) == 1.0
    assert lab.moment_constant(3.0) == 4.0
    rng = np.random.default_rng(0)
    for _ in range(500):
        ell = rng.uniform(0, 6)
        v, w = rng.normal(size=3) * 3, rng.normal(size=3) * 3
        s = rng.normal(size=3)
        s /= np.linalg.norm(s)
        from boltz1d.collision import post_collision_velocities
        vp, _ = post_collision_velocities(v, w, s)
        m = lambda u: (1 + u @ u) ** (ell / 2)
        assert m(vp) <= lab.moment_constant(ell) * (m(v) + m(w)) * (1 + 1e-12)


def test_verify_constants_all_hold():
    assert all(r.holds for r in lab.verify_constants(n=8, n_h=128))
    assert lab.verify_entropy_threshold(1.0, 1.0).holds


@pytest.mark.parametrize("lemma", lab.LEMMAS)
def test_run_trials_smoke(lemma):
    rep = run_trials(lemma, trials=2, seed=3)
    assert rep.holds, rep.failed
    assert rep.checks >= 1
    d = rep.as_dict()
    assert d["holds"] and d["seed"] == 3


def test_run_trials_deterministic_and_unknown():
    a = run_trials("pinsker", trials=20, seed=11)
    b = run_trials("pinsker", trials=20, seed=11)
    assert (a.worst_lhs, a.worst_rhs) == (b.worst_lhs, b.worst_rhs)
    with pytest.raises(KeyError):
        run_trials("no-such-lemma")
