import math
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from gad.params import (
    NoCoexistenceError,
    SystemParams,
    coexistence_distances,
    dark_frequencies,
    derive,
)


def test_resonant_dressed_frequencies():
    dq = derive(SystemParams(1.0, 1.0, 100.0, 100.0))
    assert dq.omega_eff == 2.0
    assert dq.omega_p1 == 101.0
    assert dq.omega_p2 == 99.0
    assert dq.sin_theta == pytest.approx(math.sqrt(0.5), abs=1e-15)
    assert dq.cos_theta == pytest.approx(math.sqrt(0.5), abs=1e-15)
    assert dq.q == 100.0


def test_zero_detuning_offsets_are_plus_minus_omega():
    dq = derive(SystemParams(1.0, 1.0, 7.0, 7.0))
    alpha = 7.0
    assert dq.omega_plus - alpha == pytest.approx(1.0)
    assert dq.omega_minus - alpha == pytest.approx(-1.0)


def test_detuned_dressed_frequencies():
    dq = derive(SystemParams(1.0, 1.0, 102.0, 100.0))
    assert dq.omega_eff == pytest.approx(2 * math.sqrt(2), rel=1e-15)
    assert dq.omega_p1 == pytest.approx(101 + math.sqrt(2), rel=1e-15)
    assert dq.omega_p2 == pytest.approx(101 - math.sqrt(2), rel=1e-15)
    assert dq.q is None


@pytest.mark.parametrize(
    "kwargs",
    [dict(gamma=-1.0), dict(d=-0.1), dict(rabi_omega=-1.0), dict(alpha_e=math.nan), dict(v=2.0)],
)
def test_invalid_params_rejected(kwargs):
    base = dict(rabi_omega=1.0, gamma=1.0, alpha_e=100.0, alpha_s=100.0, phi=0.0, d=1.0)
    base.update(kwargs)
    with pytest.raises(ValueError):
        SystemParams(**base)


def test_dark_single_mode_small_atom():
    p = SystemParams(1.0, 1.0, 101.0, 101.0, 0.0, 5 * math.pi / 100)
    modes = dark_frequencies(p)
    assert len(modes) == 1
    m = modes[0]
    assert m.branch == "minus"
    assert m.omega_p == 100.0
    assert m.p == 2


def test_dark_two_modes_coexist():
    p = SystemParams(1.0, 1.0, 100.0, 100.0, 0.0, math.pi)
    got = {(m.branch, m.omega_p, m.p) for m in dark_frequencies(p)}
    assert got == {("plus", 101.0, 50), ("minus", 99.0, 49)}


def test_dark_none():
    p = SystemParams(1.0, 1.0, 100.0, 100.0, 0.0, 1.05 * math.pi)
    assert dark_frequencies(p) == []


def test_dark_frequencies_satisfy_product_rule():
    for alpha, d in [(100.0, math.pi), (101.0, 0.05 * math.pi), (101.0, 1.25 * math.pi)]:
        p = SystemParams(1.0, 1.0, alpha, alpha, 0.0, d)
        for m in dark_frequencies(p):
            prod = (m.omega_p - p.alpha_e) * (m.omega_p - p.alpha_s)
            assert abs(prod - p.rabi_omega**2) <= 1e-9 * p.rabi_omega**2


def test_coexistence_q100():
    p = SystemParams(1.0, 1.0, 100.0, 100.0)
    out = coexistence_distances(p, 2)
    assert [c.d for c in out] == pytest.approx([math.pi, 3 * math.pi, 5 * math.pi])
    assert (out[1].p1, out[1].p2) == (151, 148)
    assert (out[0].p1, out[0].p2) == (50, 49)


def test_coexistence_smallest_even_q():
    out = coexistence_distances(SystemParams(1.0, 1.0, 2.0, 2.0), 0)
    assert len(out) == 1
    assert out[0].d == pytest.approx(math.pi)
    assert (out[0].p1, out[0].p2) == (1, 0)


@pytest.mark.parametrize("alpha", [101.0, 100.5])
def test_no_coexistence_for_odd_or_fractional_q(alpha):
    with pytest.raises(NoCoexistenceError):
        coexistence_distances(SystemParams(1.0, 1.0, alpha, alpha), 3)


def test_coexistence_requires_resonance():
    with pytest.raises(ValueError):
        coexistence_distances(SystemParams(1.0, 1.0, 102.0, 100.0), 1)


@pytest.mark.parametrize("q", [2, 4, 10, 100, 250])
def test_coexistence_parity_exact(q):
    p = SystemParams(1.0, 1.0, float(q), float(q))
    for c in coexistence_distances(p, 5):
        assert c.parity_exact(q)
        # exact rational check of (Ω_p d / π) odd for both branches
        for omega_p, idx in ((q + 1, c.p1), (q - 1, c.p2)):
            ratio = Fraction(omega_p) * (2 * c.n + 1)
            assert ratio.denominator == 1 and ratio.numerator % 2 == 1
            assert ratio.numerator == 2 * idx + 1


def test_coexistence_distances_are_dark_for_both_branches():
    p = SystemParams(1.0, 1.0, 100.0, 100.0)
    for c in coexistence_distances(p, 3):
        modes = dark_frequencies(SystemParams(1.0, 1.0, 100.0, 100.0, 0.0, c.d))
        assert sorted(m.p for m in modes) == sorted([c.p1, c.p2])


finite = st.floats(min_value=-200, max_value=200, allow_nan=False)
positive = st.floats(min_value=1e-2, max_value=10, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(omega=positive, gamma=positive, ae=finite, as_=finite, d=st.floats(0, 20))
def test_mixing_angle_normalised(omega, gamma, ae, as_, d):
    dq = derive(SystemParams(omega, gamma, ae, as_, 0.0, d))
    assert dq.sin_theta**2 + dq.cos_theta**2 == pytest.approx(1.0, abs=1e-14)
    assert dq.omega_p1 - dq.omega_p2 == pytest.approx(dq.omega_eff, abs=1e-12 * (1 + dq.omega_eff))


@settings(max_examples=200, deadline=None)
@given(
    omega=positive, gamma=positive, ae=finite, as_=finite, d=st.floats(0.01, 20),
    lam=st.floats(min_value=0.1, max_value=10),
)
def test_scale_covariance(omega, gamma, ae, as_, d, lam):
    a = SystemParams(omega, gamma, ae, as_, 0.3, d)
    b = SystemParams(lam * omega, lam * gamma, lam * ae, lam * as_, 0.3, d / lam)
    da, db = derive(a), derive(b)
    assert db.omega_p1 * db.tau == pytest.approx(da.omega_p1 * da.tau, rel=1e-12, abs=1e-12)
    assert db.omega_p2 * db.tau == pytest.approx(da.omega_p2 * da.tau, rel=1e-12, abs=1e-12)
    assert b.gamma * b.tau == pytest.approx(a.gamma * a.tau, rel=1e-12)
    assert db.sin_theta == pytest.approx(da.sin_theta, rel=1e-10, abs=1e-12)
    assert db.cos_theta == pytest.approx(da.cos_theta, rel=1e-10, abs=1e-12)


def test_derive_idempotent():
    p = SystemParams(1.3, 0.7, 40.0, 38.5, 0.2, 2.0)
    assert derive(p) == derive(p)
