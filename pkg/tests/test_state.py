import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from boltz1d.state import (DistributionState, MaxwellianSpec, PhaseGrid, density_and_velocity,
                           discrete_w11_norm, discretize, maxwellian_state, moments, read_snapshot,
                           weighted_norm, write_snapshot)


def test_grid_validation():
    with pytest.raises(ValueError):
        PhaseGrid("torus", 1.0, 8, 4.0, 7)
    with pytest.raises(ValueError):
        PhaseGrid("disk", 1.0, 8, 4.0, 8)
    g = PhaseGrid("line", 2.0, 8, 3.0, 6)
    assert g.length == 4.0 and g.x[0] == pytest.approx(-2.0 + 0.25)
    assert np.all(g.v != 0.0)  # v = 0 is a cell face


def test_state_rejects_negative(torus):
    v = np.zeros(torus.shape)
    v[0, 0, 0, 0] = -1e-3
    with pytest.raises(ValueError):
        DistributionState(torus, v)


def test_zero_datum(torus):
    s = discretize(lambda x, a, b, c: 0.0 * x * a, torus)
    assert s.mass == 0.0


def test_maxwellian_renormalized_mass():
    g = PhaseGrid("torus", 1.0, 4, 6.0, 8)
    for m in (1.0, 0.3, 7.0):
        s = maxwellian_state(MaxwellianSpec(m, (0.5, 0, 0), 0.8), g)
        assert s.mass == pytest.approx(m, rel=1e-14)


def test_separable_datum_mass(torus):
    rho = lambda x: 1.0 + 0.5 * np.sin(2 * np.pi * x)
    gv = lambda a, b, c: np.exp(-(a * a + b * b + c * c))
    s = discretize(lambda x, a, b, c: rho(x) * gv(a, b, c), torus)
    v1, v2, v3 = torus.velocity_mesh()
    expect = rho(torus.x).sum() * torus.dx * gv(v1, v2, v3).sum() * torus.dv ** 3
    assert s.mass == pytest.approx(expect, rel=1e-13)


def test_centered_maxwellian_zero_momentum():
    g = PhaseGrid("torus", 1.0, 2, 6.0, 10)
    _, p, _ = moments(maxwellian_state(MaxwellianSpec(), g))
    assert np.all(np.abs(p) < 1e-15)


def test_shifted_maxwellian_velocity():
    errs = []
    for nv in (8, 16):
        g = PhaseGrid("torus", 1.0, 2, 7.0, nv)
        m, p, _ = moments(maxwellian_state(MaxwellianSpec(1.0, (1.0, 0, 0), 1.0), g))
        errs.append(abs(p[0] / m - 1.0))
    assert errs[1] < 5e-3 and errs[1] <= errs[0] + 1e-12


def test_moments_additive(torus, rng):
    a = DistributionState(torus, rng.random(torus.shape))
    b = DistributionState(torus, rng.random(torus.shape))
    ma, pa, ea = moments(a)
    mb, pb, eb = moments(b)
    ms, ps, es = moments(a + b)
    assert ms == pytest.approx(ma + mb)
    np.testing.assert_allclose(ps, pa + pb, atol=1e-13)
    assert es == pytest.approx(ea + eb)


def test_weighted_norm():
    g = PhaseGrid("torus", 1.0, 2, 7.0, 16)
    M = maxwellian_state(MaxwellianSpec(1.0, (0, 0, 0), 1.0), g)
    assert weighted_norm(M, 0.0) == pytest.approx(1.0)
    assert weighted_norm(M, 2.0) == pytest.approx(4.0, rel=2e-2)
    vals = [weighted_norm(M, l) for l in (0, 0.5, 1, 2, 3, 4)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


@given(st.integers(0, 10_000))
def test_even_states_have_zero_odd_moments(seed):
    rng = np.random.default_rng(seed)
    g = PhaseGrid("torus", 1.0, 3, 3.0, 6)
    h = rng.random(g.shape)
    h = h + h[:, ::-1, ::-1, ::-1]  # v -> -v symmetric
    _, p, _ = moments(DistributionState(g, h))
    assert np.all(np.abs(p) <= 1e-14 * h.sum() * g.cell)


def test_w11_constant_in_x_and_zero(torus):
    M = maxwellian_state(MaxwellianSpec(), torus)
    from boltz1d.state import _forward_diff
    assert np.abs(_forward_diff(M.values, 0, True)).max() == 0.0
    assert discrete_w11_norm(DistributionState(torus, np.zeros(torus.shape))) == 0.0


def _gauss_w11(sx, sv):
    """||f||_1 + sum of ||d_i f||_1 for f = N(0, sx^2)(x) N(0, sv^2 I)(v)."""
    c = math.sqrt(2.0 / math.pi)
    return 1.0 + c / sx + 3 * c / sv


def test_w11_converges_first_order():
    errs = []
    for n in (8, 16, 32):
        g = PhaseGrid("line", 8.0, 4 * n, 6.0, n)
        f = discretize(lambda x, a, b, c: np.exp(-x * x / 2 - (a * a + b * b + c * c) / 2)
                       / (2 * np.pi) ** 2, g)
        errs.append(abs(discrete_w11_norm(f) - _gauss_w11(1.0, 1.0)))
    assert errs[2] < errs[1] < errs[0]
    assert errs[1] / errs[2] > 1.6


def test_density_and_velocity(torus):
    spec = MaxwellianSpec(2.0, (0.3, 0.0, 0.0), 0.7)
    s = maxwellian_state(spec, torus)
    rho, u, bad = density_and_velocity(s)
    np.testing.assert_allclose(rho, 2.0 / torus.length)
    assert np.all(np.abs(u[:, 0] - 0.3) < 2e-2) and not bad.any()
    z = DistributionState(torus, np.zeros(torus.shape))
    assert density_and_velocity(z)[2].all()


def test_separable_density(torus):
    prof = np.array([1.0, 2.0, 0.5, 0.0])
    M = maxwellian_state(MaxwellianSpec(), torus)
    s = DistributionState(torus, prof[:, None, None, None] * M.values[0])
    rho, _, bad = density_and_velocity(s)
    np.testing.assert_allclose(rho, prof * M.values[0].sum() * torus.dv ** 3)
    assert bad.tolist() == [False, False, False, True]


def test_snapshot_roundtrip(tmp_path, torus, rng):
    s = DistributionState(torus, rng.random(torus.shape), time=0.25)
    p = tmp_path / "s.txt"
    write_snapshot(s, p)
    back = read_snapshot(p)
    assert back.grid == torus and back.time == 0.25
    np.testing.assert_array_equal(back.values, s.values)
