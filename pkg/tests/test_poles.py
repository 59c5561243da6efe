import math

import numpy as np
import pytest

from gad import io
from gad.params import SystemParams, derive
from gad.poles import (
    DEDUP_RTOL,
    PoleKind,
    SingularPointError,
    Window,
    count_roots,
    dark_pole_predict,
    default_window,
    f_eval,
    f_prime,
    find_poles,
    roundoff_floor,
    write_csv,
)

FIG3B = SystemParams(1.0, 1.0, 101.0, 101.0, 0.0, 0.05 * math.pi)
FIG3C = SystemParams(1.0, 1.0, 101.0, 101.0, 0.0, 0.25 * math.pi)
FIG3D = SystemParams(1.0, 1.0, 101.0, 101.0, 0.0, 0.31 * math.pi)
FIG4 = SystemParams(1.0, 1.0, 100.0, 100.0, 0.0, 3 * math.pi)
FIG2A = SystemParams(1.0, 1.0, 100.0, 100.0, 0.0, math.pi)
SCENARIOS = {
    "fig2a-1": FIG2A,
    "fig2a-1.05": SystemParams(1.0, 1.0, 100.0, 100.0, 0.0, 1.05 * math.pi),
    "fig2b-1.25": SystemParams(1.0, 1.0, 101.0, 101.0, 0.0, 1.25 * math.pi),
    "fig3b": FIG3B,
    "fig3c": FIG3C,
    "fig3d": FIG3D,
    "fig4": FIG4,
    "fig5-5": SystemParams(1.0, 1.0, 100.0, 100.0, 0.0, 5 * math.pi),
}


def test_f_collapses_without_delay_or_drive():
    p = SystemParams(0.0, 1.0, 3.0, 3.0, 0.0, 0.0)
    s = 0.3 - 2.0j
    assert f_eval(s, p) == pytest.approx(s + 3j + 2.0)
    assert abs(f_eval(-3j - 2.0, p)) < 1e-15
    assert f_prime(s, p) == 1.0


def test_f_vanishes_on_dark_frequencies():
    assert abs(f_eval(-100j, FIG3B)) < 1e-12
    assert abs(f_eval(-99j, FIG2A)) < 1e-12
    assert abs(f_eval(-101j, FIG2A)) < 1e-12


def test_f_prime_at_resonant_dark_pole():
    gtau = FIG3B.gamma * FIG3B.tau
    assert f_prime(-100j, FIG3B) == pytest.approx(gtau + 2.0, abs=1e-12)


@pytest.mark.parametrize("s", [0.1 - 97.3j, -0.5 - 101.7j, -1.3 - 99.9j])
@pytest.mark.parametrize("params", [FIG3B, FIG4])
def test_f_prime_matches_central_difference(params, s):
    h = 1e-6
    fd = (f_eval(s + h, params) - f_eval(s - h, params)) / (2 * h)
    # O(h²) truncation plus cancellation error ~ eps·|f|/h
    assert abs(fd - f_prime(s, params)) < 1e-6 * max(1.0, abs(f_prime(s, params)))


def test_singular_point_rejected():
    with pytest.raises(SingularPointError):
        f_eval(-101j, FIG3B)
    with pytest.raises(SingularPointError):
        f_prime(-101j, FIG3B)


def test_fig4_window_dark_and_quasi_bound():
    w = Window(-2.0, 0.0, -106.0, -94.0)
    ps = find_poles(FIG4, w)
    dark = sorted(p.s.imag for p in ps.dark)
    assert dark == pytest.approx([-101.0, -99.0], abs=1e-10)
    # the three quasi-bound poles between the dark doublet, symmetric about -α
    inner = sorted((p.s for p in ps.quasi_bound if -101 < p.s.imag < -99), key=lambda z: z.imag)
    assert len(inner) == 3
    offs = [s.imag + 100.0 for s in inner]
    assert offs[1] == pytest.approx(0.0, abs=1e-9)
    assert offs[0] == pytest.approx(-offs[2], abs=1e-9)
    assert inner[0].real == pytest.approx(inner[2].real, abs=1e-9)
    # the rest of the window holds the 2π/τ lattice; dark poles sit on Re s = 0,
    # so the contour count needs the edge pushed off the axis
    padded = Window(-2.0, 1e-6, -106.0, -94.0)
    assert len(ps) == len(find_poles(FIG4, padded)) == count_roots(FIG4, padded)


def test_count_roots_rejects_singular_contour():
    with pytest.raises(ValueError):
        count_roots(FIG4, Window(-2.0, 0.0, -106.0, -94.0))


def test_single_pole_without_delay_or_drive():
    p = SystemParams(0.0, 1.0, 3.0, 3.0, 0.0, 0.0)
    ps = find_poles(p, Window(-5.0, 1.0, -6.0, 0.0))
    assert len(ps) == 1
    assert ps.poles[0].s == pytest.approx(-2.0 - 3.0j, abs=1e-12)
    assert ps.poles[0].weight == pytest.approx(1.0)


def test_quasi_bound_decay_grows_with_size():
    rates = []
    for p in (FIG3B, FIG3C, FIG3D):
        ps = find_poles(p)
        assert len(ps.dark) == 1
        assert ps.dark[0].s.imag == pytest.approx(-100.0, abs=1e-10)
        assert ps.quasi_bound
        rates.append(min(q.decay_rate for q in ps.quasi_bound))
    assert rates[0] < rates[1] < rates[2]


@pytest.mark.parametrize("name", sorted(SCENARIOS))
def test_pole_set_invariants(name):
    p = SCENARIOS[name]
    ps = find_poles(p)
    tol = 1e-12 * p.scale
    s = ps.s_values
    for pole in ps:
        assert pole.residual <= max(tol, float(roundoff_floor(pole.s, p)))
        assert pole.s.real <= 1e-10 * p.scale
        assert (pole.kind is PoleKind.DARK) == (abs(pole.s.real) <= 1e-10 * p.scale)
    assert list(s.imag) == sorted(s.imag)
    if s.size > 1:
        gaps = np.abs(s[:, None] - s[None, :]) + np.eye(s.size) * 1e9
        assert gaps.min() >= DEDUP_RTOL * p.scale


@pytest.mark.parametrize("name", sorted(SCENARIOS))
def test_dark_poles_match_prediction(name):
    p = SCENARIOS[name]
    found = sorted((q.s for q in find_poles(p).dark), key=lambda z: z.imag)
    pred = sorted((q.s for q in dark_pole_predict(p)), key=lambda z: z.imag)
    assert len(found) == len(pred)
    for a, b in zip(found, pred):
        assert abs(a - b) <= 1e-8


@pytest.mark.parametrize("name", sorted(SCENARIOS))
def test_argument_principle_on_random_windows(name):
    p = SCENARIOS[name]
    rng = np.random.default_rng(sum(map(ord, name)))
    full = default_window(p)
    for _ in range(3):
        re = np.sort(rng.uniform(full.re_min, full.re_max, 2))
        im = np.sort(rng.uniform(full.im_min, full.im_max, 2))
        if im[1] - im[0] < 1.0:
            im[1] = im[0] + 1.0
        w = Window(float(re[0]), float(re[1]), float(im[0]), float(im[1]))
        assert len(find_poles(p, w)) == count_roots(p, w)


def test_argument_principle_counts_known_roots():
    # no delay, no drive: exactly one root at -iα - 2γ
    p = SystemParams(0.0, 1.0, 3.0, 3.0, 0.0, 0.0)
    assert count_roots(p, Window(-3.0, 1.0, -4.0, -2.0)) == 1
    assert count_roots(p, Window(-1.0, 1.0, -4.0, -2.0)) == 0


@pytest.mark.parametrize("params", [FIG4, FIG2A, SCENARIOS["fig5-5"]])
def test_mirror_symmetry_about_alpha(params):
    # f(-iα + z̄) = conj f(-iα + z) when e^{iατ} is real, so roots mirror about Im s = -α
    alpha = params.alpha_e
    assert math.isclose(math.cos(alpha * params.tau) ** 2, 1.0, abs_tol=1e-12)
    s = find_poles(params).s_values
    mirrored = s.real - 1j * (2 * alpha + s.imag)
    for z in mirrored:
        assert np.min(np.abs(s - z)) < 1e-8


def test_dark_prediction_weights_resonant():
    (one,) = dark_pole_predict(FIG3B)
    assert one.weight == pytest.approx(1 / (FIG3B.gamma * FIG3B.tau + 2))
    two = dark_pole_predict(FIG2A)
    assert len(two) == 2
    for q in two:
        assert q.weight == pytest.approx(1 / (FIG2A.gamma * FIG2A.tau + 2))


def test_dark_prediction_detuned_plus_branch():
    base = SystemParams(1.0, 1.0, 102.0, 100.0)
    dq = derive(base)
    p = SystemParams(1.0, 1.0, 102.0, 100.0, 0.0, math.pi / dq.omega_p1)
    (pole,) = dark_pole_predict(p)
    assert pole.s == pytest.approx(-1j * dq.omega_p1)
    expected = 1 / (p.gamma * p.tau + 1 / dq.cos_theta**2)
    assert pole.weight == pytest.approx(expected, rel=1e-14)
    assert 1 / f_prime(pole.s, p) == pytest.approx(expected, rel=1e-10)


def test_newton_diagnostics_reported():
    ps = find_poles(FIG4)
    for key in ("seeds", "singular_discarded", "non_converged", "outside_window"):
        assert key in ps.diagnostics
    assert ps.diagnostics["non_converged"] == 0


def test_pole_csv(tmp_path):
    ps = find_poles(FIG3B)
    path = tmp_path / "poles.csv"
    write_csv(ps, path)
    header, rows = io.read_csv(path)
    assert header == ["re_s", "im_s", "residual", "kind", "re_weight", "im_weight"]
    assert len(rows) == len(ps)
    for row, pole in zip(rows, ps):
        assert complex(float(row[0]), float(row[1])) == pole.s
        assert row[3] == pole.kind.value


def test_degenerate_window_rejected():
    with pytest.raises(ValueError):
        Window(0.0, 0.0, -1.0, 1.0)
