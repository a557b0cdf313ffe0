import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from boltz1d.kernel import (SphereQuadrature, canonical_kernel, load_table_kernel, parse_angular,
                            sigma1_moment_ratio, sup_over_angle, table_kernel, total_cross_section,
                            validate_hypotheses, zero_kernel)


def canonical_phi(r, C=1.0, eps=1.0):
    return C * r / (1.0 + r * math.log1p(r) ** (1.0 + eps))


def test_envelope_at_zero_is_C():
    k = canonical_kernel(1.0, 1.0, 1e-9)
    r = 1e-7
    assert k.eval(r, 0.3) / r == pytest.approx(1.0, rel=1e-6)
    assert float(k.phi_envelope(0.0)) == pytest.approx(1.0)


def test_delta_constant_b_is_four_pi():
    assert canonical_kernel(1.0, 1.0, 1.0).delta == pytest.approx(4.0 * math.pi)


def test_total_cross_section_closed_form():
    k = canonical_kernel(1.0, 1.0, 1.0)
    phi2 = 2.0 / (1.0 + 2.0 * math.log(3.0) ** 2)
    assert float(total_cross_section(k, 2.0)) == pytest.approx(4.0 * math.pi * phi2, rel=1e-12)


def test_isotropic_cross_section_is_four_pi_times_radial():
    k = canonical_kernel(2.0, 0.5, 0.1)
    r = np.array([0.5, 1.0, 7.0])
    np.testing.assert_allclose(total_cross_section(k, r), 4 * math.pi * k.radial(r), rtol=1e-12)


def test_sup_over_angle():
    k = canonical_kernel(1.0, 1.0, 0.5, "poly:1,0,1")
    r = np.array([0.2, 0.5, 1.0, 3.0])
    out = sup_over_angle(k, r)
    assert out[0] == 0.0 and out[1] == 0.0
    np.testing.assert_allclose(out[2:], 2.0 * k.radial(r[2:]), rtol=1e-12)


def test_cutoff_and_nonnegativity():
    k = canonical_kernel(1.0, 1.0, 0.7, "poly:1,0.5")
    r = np.linspace(0, 0.7, 11)
    assert np.all(k.eval(r, 0.2) == 0.0)
    rr, mm = np.meshgrid(np.geomspace(1e-3, 1e3, 50), np.linspace(-1, 1, 21))
    assert np.all(k.eval(rr, mm) >= 0)


@given(C=st.floats(0.1, 10), eps=st.floats(0.1, 3), R0=st.floats(0.01, 3),
       c1=st.floats(-0.9, 0.9))
def test_canonical_kernels_satisfy_hypotheses(C, eps, R0, c1):
    k = canonical_kernel(C, eps, R0, f"poly:1,{c1}")
    rep = validate_hypotheses(k)
    assert rep.h1_holds and rep.h2_holds
    assert rep.declared_delta_admissible
    # envelope dominates on the sample
    r = np.geomspace(R0 / 2, 100, 64)
    mu = np.linspace(-1, 1, 9)
    assert np.all(k.eval(r[:, None], mu) <= k.phi_envelope(r)[:, None] * r[:, None] * (1 + 1e-12))


@given(c1=st.floats(-0.9, 0.9), c2=st.floats(0.0, 2.0), r=st.floats(0.6, 50))
def test_delta_times_sup_below_total(c1, c2, r):
    k = canonical_kernel(1.0, 1.0, 0.5, f"poly:1,{c1},{c2}")
    tot = float(total_cross_section(k, r, SphereQuadrature(16, 1)))
    assert k.delta * float(sup_over_angle(k, r)) <= tot * (1 + 1e-10)


def test_hard_sphere_like_kernel_fails_h2():
    k = table_kernel([0.0, 100.0], [0.0, 100.0], R0=0.0)
    rep = validate_hypotheses(k)
    assert not rep.h2_holds


def test_zero_kernel_report():
    rep = validate_hypotheses(zero_kernel())
    assert rep.h1_holds and rep.h2_holds
    assert not rep.delta_defined
    assert rep.as_dict()["estimated_delta"] is None


def test_sigma1_lower_bound():
    k = canonical_kernel(1.0, 1.0, 0.5, "poly:1,0.5")
    c = k.delta ** 2 / (128 * math.pi ** 2)
    for r in (0.8, 2.0, 10.0):
        for axis in ((1, 0, 0), (0, 1, 0), (1, 1, 1)):
            num, den = sigma1_moment_ratio(k, r, axis)
            assert num >= c * den


def test_table_kernel_roundtrip(tmp_path):
    p = tmp_path / "k.txt"
    r = np.linspace(0, 10, 21)
    np.savetxt(p, np.column_stack([r, r / (1 + r * r)]))
    k = load_table_kernel(p, R0=0.5)
    assert float(k.eval(2.0, 0.0)) == pytest.approx(2.0 / 5.0, rel=2e-2)
    assert float(k.eval(20.0, 0.0)) == 0.0
    assert float(k.eval(0.4, 0.0)) == 0.0


def test_parse_angular_rejects_unknown():
    with pytest.raises(ValueError):
        parse_angular("cosine")
    with pytest.raises(ValueError):
        canonical_kernel(1, 1, 0.5, "poly:1,1")  # vanishes at mu = -1
