import math

import numpy as np
import pytest

from gad import io
from gad.analytic import two_level_exact
from gad.dde import (
    amplitude_at,
    corotating_default,
    default_dt,
    integrate,
    metastable_check,
    snap_dt,
    write_csv,
)
from gad.params import SystemParams

FIG3B = SystemParams(1.0, 1.0, 101.0, 101.0, 0.0, 0.05 * math.pi)
FIG3C = SystemParams(1.0, 1.0, 101.0, 101.0, 0.0, 0.25 * math.pi)


def test_local_two_level_decay():
    p = SystemParams(0.0, 1.0, 0.0, 0.0, 0.0, 0.0)
    traj = integrate(p, 1.0)
    ce, cs = amplitude_at(traj, 0.5)
    assert abs(ce) ** 2 == pytest.approx(0.1353352832366127, rel=1e-9)
    assert cs == 0


def test_initial_condition_and_causality():
    traj = integrate(FIG3B, 2.0)
    assert amplitude_at(traj, 0.0) == (1 + 0j, 0j)
    assert amplitude_at(traj, -1.0) == (0j, 0j)
    assert traj.t[0] == 0.0 and traj.t[-1] >= 2.0
    assert np.all(np.diff(traj.t) > 0)
    assert np.max(np.diff(traj.t)) <= traj.dt * (1 + 1e-12)


def test_grid_points_are_exact():
    traj = integrate(FIG3C, 3.0)
    idx = [0, 1, 17, 255, traj.t.size - 1]
    ce, cs = amplitude_at(traj, traj.t[idx])
    assert np.array_equal(ce, traj.c_e[idx])
    assert np.array_equal(cs, traj.c_s[idx])


def test_beyond_end_rejected():
    traj = integrate(FIG3B, 1.0)
    with pytest.raises(ValueError):
        amplitude_at(traj, traj.t_max + 10 * traj.dt)
    # an ulp past the last node is the last node
    ce, _ = amplitude_at(traj, np.nextafter(traj.t_max, np.inf))
    assert ce == traj.c_e[-1]


@pytest.mark.parametrize(
    "kwargs",
    [dict(t_max=0.0), dict(t_max=-1.0), dict(t_max=1.0, dt=0.0), dict(t_max=1.0, dt=-1e-3)],
)
def test_bad_arguments(kwargs):
    with pytest.raises(ValueError):
        integrate(FIG3B, **kwargs)


def test_dt_must_divide_tau():
    with pytest.raises(ValueError, match="divide"):
        integrate(FIG3C, 1.0, dt=FIG3C.tau / 64.5)
    traj = integrate(FIG3C, 1.0, dt=FIG3C.tau / 64 * (1 + 1e-12))
    assert traj.dt == FIG3C.tau / 64


def test_dt_must_resolve_delay():
    with pytest.raises(ValueError, match="resolve"):
        integrate(FIG3C, 1.0, dt=FIG3C.tau / 8)
    integrate(FIG3C, 1.0, dt=FIG3C.tau / 8, resolve_delay=False)


def test_snap_dt():
    tau = 0.25 * math.pi
    dt = snap_dt(tau, 0.01)
    assert dt <= 0.01
    assert tau / dt == pytest.approx(round(tau / dt), abs=1e-9)
    assert snap_dt(0.0, 0.003) == 0.003


def test_default_dt():
    assert corotating_default(FIG3B)
    dt = default_dt(FIG3B)
    m = FIG3B.tau / dt
    assert m == pytest.approx(round(m)) and round(m) >= 64
    assert dt <= 0.01
    p = SystemParams(2.0, 1.0, 0.0, 0.0, 0.0, 0.0)
    assert default_dt(p) == pytest.approx(0.001 / 2.0)


@pytest.mark.parametrize("phi", [0.0, 0.7])
def test_two_level_matches_method_of_steps(phi):
    p = SystemParams(0.0, 1.0, 100.0, 100.0, phi, 0.5 * math.pi)
    traj = integrate(p, 2 * p.tau)
    sel = traj.t <= 2 * p.tau
    err = np.max(np.abs(traj.c_e[sel] - two_level_exact(p, traj.t[sel])))
    assert err <= 1e-8
    # first interval is a plain exponential
    first = traj.t <= p.tau
    ref = np.exp((-1j * p.alpha_e - p.gamma) * traj.t[first])
    assert np.max(np.abs(traj.c_e[first] - ref)) <= 1e-8


def test_two_level_long_horizon():
    p = SystemParams(0.0, 0.8, 30.0, 30.0, 0.3, 1.0)
    traj = integrate(p, 12.0)
    assert np.max(np.abs(traj.c_e - two_level_exact(p, traj.t))) <= 1e-8


def _max_err(coarse, ref, t_end):
    t = coarse.t[coarse.t <= t_end]
    return np.max(np.abs(amplitude_at(coarse, t)[0] - amplitude_at(ref, t)[0]))


@pytest.mark.parametrize("corotating", [True, False])
def test_fourth_order_convergence(corotating):
    p = FIG3C
    t_end = 5 * p.tau
    m0 = 64 if corotating else 256
    ref = integrate(p, t_end, dt=p.tau / (8 * m0), corotating=corotating)
    errs = [
        _max_err(integrate(p, t_end, dt=p.tau / m, corotating=corotating), ref, t_end)
        for m in (m0 // 2, m0)
    ]
    assert errs[0] / errs[1] >= 8.0


def test_frames_agree():
    # the lab frame resolves the α-rotation itself, so it needs αdt << 1
    lab = integrate(FIG3C, 4.0, dt=FIG3C.tau / 4096, corotating=False)
    rot = integrate(FIG3C, 4.0, dt=FIG3C.tau / 4096, corotating=True)
    assert np.max(np.abs(lab.c_e - rot.c_e)) < 1e-6
    assert np.max(np.abs(lab.c_s - rot.c_s)) < 1e-6


def test_common_frequency_shift():
    lam = 3.7
    # τ = 0: a common shift only rotates the phase; in the rotating frame the
    # two discretised systems are the same equations
    a = SystemParams(1.0, 1.0, 5.0, 4.0, 0.0, 0.0)
    b = SystemParams(1.0, 1.0, 5.0 + lam, 4.0 + lam, 0.0, 0.0)
    ta = integrate(a, 3.0, dt=1e-3, corotating=True)
    tb = integrate(b, 3.0, dt=1e-3, corotating=True)
    assert np.max(np.abs(np.abs(ta.c_e) - np.abs(tb.c_e))) < 1e-12
    # τ > 0: the shift maps to φ + λτ and Ce -> Ce e^{-iλt}
    a = SystemParams(1.0, 1.0, 5.0, 4.0, 0.2, 1.0)
    b = SystemParams(1.0, 1.0, 5.0 + lam, 4.0 + lam, 0.2 + lam * 1.0, 1.0)
    for corotating, dt, tol in ((True, 1 / 256, 1e-12), (False, 1 / 4096, 1e-11)):
        # lab frame: RK4 error ~ (α dt)^4, measured 8e-13 at this step
        ta = integrate(a, 6.0, dt=dt, corotating=corotating)
        tb = integrate(b, 6.0, dt=dt, corotating=corotating)
        assert np.max(np.abs(tb.c_e - ta.c_e * np.exp(-1j * lam * ta.t))) < tol


@pytest.mark.parametrize("params", [FIG3B, FIG3C, SystemParams(1.0, 1.0, 100.0, 100.0, 0.0, 3 * math.pi)])
def test_populations_bounded(params):
    traj = integrate(params, 30.0)
    total = traj.pop_e + traj.pop_s
    assert np.all(total <= 1.0 + 1e-12)
    assert np.all(np.abs(traj.c_e) <= 1.0 + 1e-12)


def test_interpolation_between_nodes():
    coarse = integrate(FIG3C, 5.0, dt=FIG3C.tau / 64)
    fine = integrate(FIG3C, 5.0, dt=FIG3C.tau / 1024)
    t = np.linspace(0.01, 4.9, 777)
    ce_c, cs_c = amplitude_at(coarse, t)
    ce_f, cs_f = amplitude_at(fine, t)
    assert np.max(np.abs(ce_c - ce_f)) < 1e-8
    assert np.max(np.abs(cs_c - cs_f)) < 1e-8


def test_metastable_without_drive():
    p = SystemParams(0.0, 1.0, 10.0, 10.0, 0.0, 1.0)
    assert metastable_check(integrate(p, 3.0), p) == 0.0


def test_metastable_quadrature():
    fine = integrate(FIG3B, 40.0, dt=FIG3B.tau / 64)
    assert metastable_check(fine, FIG3B, method="trapezoid") <= 1e-6
    assert metastable_check(fine, FIG3B) <= 1e-10
    coarse = integrate(FIG3B, 40.0, dt=FIG3B.tau / 8, resolve_delay=False)
    dev_t = metastable_check(coarse, FIG3B, method="trapezoid")
    assert metastable_check(fine, FIG3B, method="trapezoid") < dev_t <= 1e-3
    with pytest.raises(ValueError):
        metastable_check(fine, FIG3B, method="simpson")


def test_csv_roundtrip_and_reproducible(tmp_path):
    traj = integrate(FIG3B, 1.0)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_csv(traj, a)
    write_csv(integrate(FIG3B, 1.0), b)
    assert a.read_bytes() == b.read_bytes()
    header, rows = io.read_csv(a)
    assert header == ["t", "re_ce", "im_ce", "re_cs", "im_cs", "pop_e", "pop_s"]
    assert len(rows) == traj.t.size
    k = 37
    assert complex(float(rows[k][1]), float(rows[k][2])) == traj.c_e[k]
    assert float(rows[k][5]) == traj.pop_e[k]
