"""Waveguide field radiated by the two legs, rebuilt from the atomic history.

    φ(x,t) = -i sqrt(γ/2) [Ce(t - |x-d|) e^{-iφ|x-d|/d} Θ(t - |x-d|)
                          + Ce(t - |x|)   e^{-iφ|x|/d}   Θ(t - |x|)]

with v = 1, and the photon density is p(x,t) = |φ(x,t)|².
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .dde import Trajectory, amplitude_at
from .params import SystemParams, dark_frequencies
from . import io

DEFAULT_POINTS = 2048


@dataclass(frozen=True, eq=False)
class FieldProfile:
    x: np.ndarray
    phi: np.ndarray
    p: np.ndarray
    t: float
    params: SystemParams


def _leg_phases(params: SystemParams, x):
    if params.d == 0.0:
        one = np.ones(np.shape(x), dtype=complex)
        return one, one
    k = params.phi / params.d
    return np.exp(-1j * k * np.abs(x - params.d)), np.exp(-1j * k * np.abs(x))


def field_amplitude(traj: Trajectory, params: SystemParams, x, t: float):
    """Complex field amplitude at position(s) ``x`` and time ``t``.

    Raises:
        ValueError: if a retarded time lies beyond the trajectory.
    """
    x_arr = np.asarray(x, dtype=float)
    r_far = t - np.abs(x_arr - params.d)
    r_near = t - np.abs(x_arr)
    latest = max(np.max(r_far), np.max(r_near))
    if latest > traj.t_max + 1e-9 * traj.dt:
        raise ValueError(f"retarded time {latest} beyond trajectory end {traj.t_max}")
    ce_far, _ = amplitude_at(traj, r_far)
    ce_near, _ = amplitude_at(traj, r_near)
    ph_far, ph_near = _leg_phases(params, x_arr)
    out = -1j * math.sqrt(params.gamma / 2.0) * (ce_far * ph_far + ce_near * ph_near)
    return complex(out) if out.ndim == 0 else out


def default_x_grid(params: SystemParams, n: int = DEFAULT_POINTS) -> np.ndarray:
    d = params.d if params.d > 0 else 1.0
    return np.linspace(-d, 2.0 * d, n)


def density_profile(traj: Trajectory, params: SystemParams, x_grid=None, t: float = 0.0) -> FieldProfile:
    x = default_x_grid(params) if x_grid is None else np.asarray(x_grid, dtype=float)
    phi = np.atleast_1d(field_amplitude(traj, params, x, t))
    return FieldProfile(x=x, phi=phi, p=np.abs(phi) ** 2, t=float(t), params=params)


def dark_field(params: SystemParams, x, t):
    """Field radiated by the dark modes alone (the late-time attractor)."""
    x = np.asarray(x, dtype=float)
    gtau = params.gamma * params.tau
    ph_far, ph_near = _leg_phases(params, x)
    acc = np.zeros(np.broadcast(x, t).shape, dtype=complex)
    for m in dark_frequencies(params):
        w = m.overlap / (gtau * m.overlap + 1.0)
        acc = acc + w * (
            np.exp(-1j * m.omega_p * (t - np.abs(x - params.d))) * ph_far
            + np.exp(-1j * m.omega_p * (t - np.abs(x))) * ph_near
        )
    return -1j * math.sqrt(params.gamma / 2.0) * acc


def static_density(params: SystemParams, x):
    """Long-time density of a single dark mode, γ/2 |w|² |1 + e^{iΩ_p(|x-d|-|x|)}|².

    ``w`` is the dark residue weight, 1/(γτ+2) at zero detuning. A nonzero
    φ enters through the per-length phase of the field.
    """
    modes = dark_frequencies(params)
    if len(modes) != 1:
        raise ValueError(f"expected exactly one dark frequency, found {len(modes)}")
    m = modes[0]
    w = 1.0 / (params.gamma * params.tau + 1.0 / m.overlap)
    x = np.asarray(x, dtype=float)
    k = m.omega_p - (params.phi / params.d if params.d else 0.0)
    delta = np.abs(x - params.d) - np.abs(x)
    return 0.5 * params.gamma * w**2 * np.abs(1.0 + np.exp(1j * k * delta)) ** 2


def oscillating_density(params: SystemParams, x, t):
    """Long-time density of the two coexisting dark modes at zero detuning and φ = 0.

    γ/2 · 4/(γτ+2)² |cos Ω(t-|x|) [1 + e^{iαδ} cos Ωδ] + e^{iαδ} sin Ω(t-|x|) sin Ωδ|²
    with δ = |x-d| - |x|.
    """
    if params.alpha_e != params.alpha_s or params.phi != 0.0:
        raise ValueError("closed form holds for zero detuning and phi = 0")
    if len(dark_frequencies(params)) != 2:
        raise ValueError("two coexisting dark frequencies required")
    x = np.asarray(x, dtype=float)
    alpha, om = params.alpha_e, params.rabi_omega
    delta = np.abs(x - params.d) - np.abs(x)
    tr = t - np.abs(x)
    ph = np.exp(1j * alpha * delta)
    amp = np.cos(om * tr) * (1.0 + ph * np.cos(om * delta)) + ph * np.sin(om * tr) * np.sin(om * delta)
    return 0.5 * params.gamma * 4.0 / (params.gamma * params.tau + 2.0) ** 2 * np.abs(amp) ** 2


def _breakpoints(params: SystemParams, t: float, lo: float, hi: float) -> np.ndarray:
    """Positions where p(x,t) may jump or kink: legs, light-cone fronts and kτ echoes."""
    pts = [lo, hi, 0.0, params.d]
    tau = params.tau
    k = 0
    while True:
        r = t - k * tau
        if r < 0:
            break
        pts.extend([-r, r, params.d - r, params.d + r])
        if tau <= 0:
            break
        k += 1
    pts = np.array(pts)
    pts = np.unique(pts[(pts >= lo) & (pts <= hi)])
    return pts


def default_spacing(traj: Trajectory, params: SystemParams) -> float:
    """Spatial step: at most dt, and 32 points per interference period π/k."""
    k = max(abs(params.alpha_e), abs(params.alpha_s)) + params.rabi_omega
    h = traj.dt
    if k > 0:
        h = min(h, math.pi / (32.0 * k))
    return h


def _nodes(params: SystemParams, t: float, lo: float, hi: float, h: float):
    """Trapezoid nodes and weights, piecewise between breakpoints.

    Piece end nodes are nudged inward by a relative 1e-10 so that one-sided
    limits are used at light-cone fronts.
    """
    edges = _breakpoints(params, t, lo, hi)
    xs, ws = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        n = max(2, math.ceil((b - a) / h))
        nodes = np.linspace(a, b, n + 1)
        nudge = 1e-10 * max(1.0, abs(a), abs(b))
        nodes[0] += nudge
        nodes[-1] -= nudge
        wts = np.full(n + 1, (b - a) / n)
        wts[0] = wts[-1] = 0.5 * (b - a) / n
        xs.append(nodes)
        ws.append(wts)
    return np.concatenate(xs), np.concatenate(ws)


def field_norm(
    traj: Trajectory,
    params: SystemParams,
    t: float,
    x_extent: Optional[Tuple[float, float]] = None,
    h: Optional[float] = None,
) -> float:
    """∫p(x,t)dx by composite trapezoid."""
    lo, hi = light_cone(params, t) if x_extent is None else x_extent
    if h is None:
        h = default_spacing(traj, params)
    if t <= 0 or hi <= lo:
        return 0.0
    x, wts = _nodes(params, t, lo, hi, h)
    p = np.abs(field_amplitude(traj, params, x, t)) ** 2
    return float(np.dot(wts, p))


def interior_cross_term(traj: Trajectory, params: SystemParams, t: float, h: Optional[float] = None) -> float:
    """γ ∫_0^d Re[A_far A_near*] dx, the interference part of ∫p dx between the legs.

    Between the legs the two contributions to φ travel in opposite
    directions, so this term is not a photon population. It is the whole
    difference between :func:`excitation_balance` and a balance that counts
    right and left movers separately there.
    """
    if t <= 0 or params.d <= 0:
        return 0.0
    if h is None:
        h = default_spacing(traj, params)
    lo, hi = max(0.0, -t), min(params.d, params.d + t)
    x, wts = _nodes(params, t, lo, hi, h)
    ce_far, _ = amplitude_at(traj, t - np.abs(x - params.d))
    ce_near, _ = amplitude_at(traj, t - np.abs(x))
    ph_far, ph_near = _leg_phases(params, x)
    cross = (ce_far * ph_far * np.conj(ce_near * ph_near)).real
    return float(params.gamma * np.dot(wts, cross))


def light_cone(params: SystemParams, t: float) -> Tuple[float, float]:
    return -t, params.d + t


def excitation_balance(
    traj: Trajectory,
    params: SystemParams,
    t: float,
    x_extent: Optional[Tuple[float, float]] = None,
    h: Optional[float] = None,
    split_interior: bool = False,
) -> float:
    """|Ce|² + |Cs|² + ∫p dx - 1; zero for exact single-excitation conservation.

    With ``split_interior`` the :func:`interior_cross_term` is removed, so
    counter-propagating waves between the legs are counted separately.
    """
    if x_extent is not None:
        lo, hi = light_cone(params, t)
        if x_extent[0] > lo or x_extent[1] < hi:
            warnings.warn("x_extent does not cover the light cone", RuntimeWarning, stacklevel=2)
    ce, cs = amplitude_at(traj, t)
    atom = abs(ce) ** 2 + abs(cs) ** 2
    if t <= 0:
        return atom - 1.0
    bal = atom + field_norm(traj, params, t, x_extent, h) - 1.0
    if split_interior:
        bal -= interior_cross_term(traj, params, t, h)
    return bal


def refinement_order(
    traj: Trajectory,
    params: SystemParams,
    t: float,
    h: Optional[float] = None,
    levels: int = 3,
) -> Tuple[float, Sequence[float]]:
    """Observed order of ∫p dx under halving of the spatial step.

    Returns:
        (order, integrals) with order = log2(|I_h - I_h/2| / |I_h/2 - I_h/4|).
    """
    if h is None:
        h = 4.0 * default_spacing(traj, params)
    vals = [field_norm(traj, params, t, h=h / 2**k) for k in range(levels)]
    d1 = abs(vals[-3] - vals[-2])
    d2 = abs(vals[-2] - vals[-1])
    if d2 == 0.0:
        return math.inf, vals
    return math.log2(d1 / d2), vals


def write_csv(profile: FieldProfile, path) -> None:
    header = ["x", "re_phi", "im_phi", "p"]
    rows = (
        (float(x), float(v.real), float(v.imag), float(p))
        for x, v, p in zip(profile.x, profile.phi, profile.p)
    )
    io.write_csv(path, header, rows)


def write_spacetime_csv(traj: Trajectory, params: SystemParams, x_grid, t_samples, path) -> None:
    """Density matrix for heatmaps: one row per time, first column t, then p at each x."""
    x_grid = np.asarray(x_grid, dtype=float)
    header = ["t"] + [io.fmt(float(x)) for x in x_grid]
    rows = []
    for t in t_samples:
        p = np.abs(field_amplitude(traj, params, x_grid, float(t))) ** 2
        rows.append([float(t)] + [float(v) for v in p])
    io.write_csv(path, header, rows)
