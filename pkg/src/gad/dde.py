"""Time-domain integration of the coupled excited/metastable amplitudes.

    dCe/dt = (-iα_e - γ) Ce(t) - γ e^{-iφ} Ce(t - τ) Θ(t - τ) - iΩ Cs(t)
    dCs/dt = -iα_s Cs(t) - iΩ Ce(t)

Ce(t) = 0 for t < 0 and Θ(0) = 1. Integrating Cs alongside Ce replaces the
memory integral of the single-amplitude form exactly.

The step is fixed, classical RK4, with τ an integer multiple of dt so the
delayed argument of every step lies inside a single stored interval. The
delayed value at a stage midpoint comes from the cubic Hermite interpolant of
that interval, which keeps the scheme fourth order between the breaking
points t = kτ. Optionally the amplitudes are integrated in a frame rotating
at α_e, which removes the fast optical phase; results are always returned
in the lab frame.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .params import SystemParams
from . import io

DEFAULT_STEPS_PER_TAU = 64
COROTATE_RATIO = 50.0
DIVIDE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Dense history of Ce(t) and Cs(t) on a uniform grid.

    ``c_e`` and ``c_s`` are lab-frame samples. Interpolation is done on the
    frame envelopes ``u = Ce e^{iλt}`` and ``w = Cs e^{iλt}`` with per-interval
    end-point derivatives, because dCe/dt jumps at t = kτ.
    """

    t: np.ndarray
    c_e: np.ndarray
    c_s: np.ndarray
    dt: float
    tau: float
    frame: float
    u: np.ndarray
    w: np.ndarray
    du_left: np.ndarray  # du/dt at t_n seen from interval n
    du_right: np.ndarray  # du/dt at t_{n+1} seen from interval n
    dw: np.ndarray
    interpolation: str = "cubic-hermite"

    @property
    def t_max(self) -> float:
        return float(self.t[-1])

    @property
    def pop_e(self) -> np.ndarray:
        return np.abs(self.c_e) ** 2

    @property
    def pop_s(self) -> np.ndarray:
        return np.abs(self.c_s) ** 2


def corotating_default(params: SystemParams) -> bool:
    return max(abs(params.alpha_e), abs(params.alpha_s)) >= COROTATE_RATIO * params.scale


def _frame(params: SystemParams, corotating: Optional[bool]) -> float:
    if corotating is None:
        corotating = corotating_default(params)
    return params.alpha_e if corotating else 0.0


def default_dt(params: SystemParams, corotating: Optional[bool] = None) -> float:
    """τ/m with m >= 64, refined until dt <= 0.01 / (fastest rate in the frame).

    Without delay the step is 0.001 / max(γ, Ω) (or the frame rate if larger).
    """
    lam = _frame(params, corotating)
    rate = max(
        params.gamma,
        params.rabi_omega,
        abs(params.alpha_e - lam),
        abs(params.alpha_s - lam),
    )
    tau = params.tau
    if tau > 0:
        m = DEFAULT_STEPS_PER_TAU
        if rate > 0:
            m = max(m, math.ceil(tau * rate / 0.01))
        return tau / m
    return 0.001 / (rate if rate > 0 else 1.0)


def snap_dt(tau: float, dt: float) -> float:
    """Largest step <= dt that divides τ evenly (dt itself when τ = 0)."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    if tau <= 0:
        return dt
    return tau / math.ceil(tau / dt - DIVIDE_TOL)


def integrate(
    params: SystemParams,
    t_max: float,
    dt: Optional[float] = None,
    corotating: Optional[bool] = None,
    resolve_delay: bool = True,
) -> Trajectory:
    """Integrate from Ce(0) = 1, Cs(0) = 0 up to ``t_max``.

    Args:
        params: model constants.
        t_max: final time; the grid is extended to the next multiple of dt.
        dt: time step. Must divide τ and be at most τ/16. Defaults to
            :func:`default_dt`.
        corotating: integrate in the frame rotating at α_e. ``None`` turns it
            on when |α| >= 50 max(γ, Ω).
        resolve_delay: enforce dt <= τ/16. Switch off only for convergence
            studies with deliberately coarse steps.

    Raises:
        ValueError: on non-positive ``t_max`` or ``dt``, or a ``dt`` that does
            not resolve or divide the delay.
    """
    if not t_max > 0:
        raise ValueError(f"t_max must be > 0, got {t_max}")
    tau = params.tau
    if dt is None:
        dt = default_dt(params, corotating)
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    m = 0
    if tau > 0:
        if resolve_delay and dt > tau / 16 * (1 + DIVIDE_TOL):
            raise ValueError(f"dt = {dt} does not resolve the delay (needs dt <= tau/16)")
        ratio = tau / dt
        m = int(round(ratio))
        if abs(ratio - m) > DIVIDE_TOL * max(1.0, ratio):
            raise ValueError(f"dt = {dt} does not divide tau = {tau}; see snap_dt")
        dt = tau / m

    lam = _frame(params, corotating)
    n_steps = max(1, math.ceil(t_max / dt - DIVIDE_TOL))
    omega = params.rabi_omega
    g = params.gamma
    a_e = complex(-g, -(params.alpha_e - lam))
    a_s = complex(0.0, -(params.alpha_s - lam))
    c = g * cmath.exp(1j * (lam * tau - params.phi))
    i_om = 1j * omega
    if m == 0:
        # Θ(0) = 1: without delay the feedback acts instantaneously
        a_e = a_e - c
        c = 0.0

    u = np.zeros(n_steps + 1, dtype=complex)
    w = np.zeros(n_steps + 1, dtype=complex)
    dl = np.zeros(n_steps, dtype=complex)
    dr = np.zeros(n_steps, dtype=complex)
    dw = np.zeros(n_steps + 1, dtype=complex)
    u_n, w_n = 1.0 + 0j, 0j
    u[0] = u_n
    h = dt
    h2 = 0.5 * dt
    # plain lists for fast scalar indexing inside the loop
    u_hist = [0j] * (n_steps + 1)
    dl_hist = [0j] * n_steps
    dr_hist = [0j] * n_steps
    u_hist[0] = u_n
    for n in range(n_steps):
        k = n - m
        if m and k >= 0:
            y0 = u_hist[k]
            y1 = u_hist[k + 1]
            d0 = c * y0
            dmid = c * (0.5 * (y0 + y1) + 0.125 * h * (dl_hist[k] - dr_hist[k]))
            d1 = c * y1
        else:
            d0 = dmid = d1 = 0j
        k1u = a_e * u_n - d0 - i_om * w_n
        k1w = a_s * w_n - i_om * u_n
        ut = u_n + h2 * k1u
        wt = w_n + h2 * k1w
        k2u = a_e * ut - dmid - i_om * wt
        k2w = a_s * wt - i_om * ut
        ut = u_n + h2 * k2u
        wt = w_n + h2 * k2w
        k3u = a_e * ut - dmid - i_om * wt
        k3w = a_s * wt - i_om * ut
        ut = u_n + h * k3u
        wt = w_n + h * k3w
        k4u = a_e * ut - d1 - i_om * wt
        k4w = a_s * wt - i_om * ut
        u_n = u_n + h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
        w_n = w_n + h / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)
        u_hist[n + 1] = u_n
        w[n + 1] = w_n
        dl_hist[n] = k1u
        dw[n] = k1w
        # derivative at the right end, seen from this interval (left limit)
        dr_hist[n] = a_e * u_n - d1 - i_om * w_n
    u[:] = u_hist
    dl[:] = dl_hist
    dr[:] = dr_hist
    dw[n_steps] = a_s * w[n_steps] - i_om * u[n_steps]

    t = np.arange(n_steps + 1) * dt
    rot = np.exp(-1j * lam * t)
    return Trajectory(
        t=t,
        c_e=u * rot,
        c_s=w * rot,
        dt=dt,
        tau=tau,
        frame=lam,
        u=u,
        w=w,
        du_left=dl,
        du_right=dr,
        dw=dw,
    )


def _hermite(y0, y1, d0, d1, s, h):
    s2 = s * s
    s3 = s2 * s
    h00 = 2 * s3 - 3 * s2 + 1
    h10 = s3 - 2 * s2 + s
    h01 = -2 * s3 + 3 * s2
    h11 = s3 - s2
    return h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1


def amplitude_at(traj: Trajectory, t) -> Tuple[np.ndarray, np.ndarray]:
    """Interpolated (Ce, Cs) at time(s) ``t``; zero for t < 0.

    Grid times return the stored samples exactly.

    Raises:
        ValueError: if any t exceeds the trajectory end.
    """
    t_arr = np.asarray(t, dtype=float)
    scalar = t_arr.ndim == 0
    t_arr = np.atleast_1d(t_arr)
    # grid times are i*dt, so a requested end time can overshoot by an ulp
    slack = 1e-9 * traj.dt
    if np.any(t_arr > traj.t_max + slack):
        raise ValueError(f"t = {t_arr.max()} beyond trajectory end {traj.t_max}")
    t_arr = np.minimum(t_arr, traj.t_max)
    ce = np.zeros(t_arr.shape, dtype=complex)
    cs = np.zeros(t_arr.shape, dtype=complex)
    pos = t_arr >= 0
    if pos.any():
        tp = t_arr[pos]
        n_int = traj.t.size - 1
        idx = np.clip(np.searchsorted(traj.t, tp, side="right") - 1, 0, n_int - 1)
        h = traj.dt
        s = (tp - traj.t[idx]) / h
        u = _hermite(traj.u[idx], traj.u[idx + 1], traj.du_left[idx], traj.du_right[idx], s, h)
        w = _hermite(traj.w[idx], traj.w[idx + 1], traj.dw[idx], traj.dw[idx + 1], s, h)
        rot = np.exp(-1j * traj.frame * tp)
        ce_p = u * rot
        cs_p = w * rot
        exact = np.flatnonzero(traj.t[idx] == tp)
        ce_p[exact] = traj.c_e[idx[exact]]
        cs_p[exact] = traj.c_s[idx[exact]]
        last = tp == traj.t[-1]
        ce_p[last] = traj.c_e[-1]
        cs_p[last] = traj.c_s[-1]
        ce[pos] = ce_p
        cs[pos] = cs_p
    if scalar:
        return complex(ce[0]), complex(cs[0])
    return ce, cs


def metastable_check(traj: Trajectory, params: SystemParams, method: str = "hermite") -> float:
    """Max |Cs_quadrature - Cs_integrated| over the grid.

    Cs is rebuilt from the stored Ce history as
    -iΩ ∫_0^t Ce(t') e^{iα_s(t'-t)} dt'. ``method="trapezoid"`` uses the
    composite trapezoid rule; ``"hermite"`` adds the end-point derivative
    correction, which integrates the cubic Hermite interpolant exactly.
    """
    omega = params.rabi_omega
    if omega == 0.0:
        return float(np.max(np.abs(traj.c_s)))
    lam = traj.frame
    nu = params.alpha_s - lam
    t = traj.t
    h = traj.dt
    ph = np.exp(1j * nu * t)
    g = traj.u * ph
    pieces = 0.5 * h * (g[:-1] + g[1:])
    if method == "hermite":
        gl = (traj.du_left + 1j * nu * traj.u[:-1]) * ph[:-1]
        gr = (traj.du_right + 1j * nu * traj.u[1:]) * ph[1:]
        pieces = pieces + h * h / 12.0 * (gl - gr)
    elif method != "trapezoid":
        raise ValueError(f"unknown method {method!r}")
    cum = np.concatenate([[0j], np.cumsum(pieces)])
    cs = -1j * omega * np.exp(-1j * params.alpha_s * t) * cum
    return float(np.max(np.abs(cs - traj.c_s)))


def write_csv(traj: Trajectory, path) -> None:
    header = ["t", "re_ce", "im_ce", "re_cs", "im_cs", "pop_e", "pop_s"]
    io.write_csv(path, header, timeseries_rows(traj.t, traj.c_e, traj.c_s))


def timeseries_rows(t, c_e, c_s):
    pe = np.abs(c_e) ** 2
    ps = np.abs(c_s) ** 2
    for i in range(len(t)):
        yield (
            float(t[i]),
            float(c_e[i].real),
            float(c_e[i].imag),
            float(c_s[i].real),
            float(c_s[i].imag),
            float(pe[i]),
            float(ps[i]),
        )
