"""Residue-series reconstruction of Ce(t) and closed-form bound states."""

from __future__ import annotations

import math
import warnings
from pathlib import Path
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .params import SystemParams, dark_frequencies
from .poles import PoleKind, PoleSet
from . import dde, io

TRUNCATION_WARN = 0.05


class TruncationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ResidueSeries:
    """Ce(t) = Σ_p e^{s_p t} / f'(s_p) over a finite pole set.

    ``diagnostic`` is |Σ_p 1/f'(s_p) - limit|, the distance of the weight sum
    from its value for the complete series (see :func:`weight_sum_limit`).
    It measures how much weight lies outside the search window.
    """

    poles: PoleSet
    diagnostic: float

    def __call__(self, t):
        return residue_ce(self, t)


def weight_sum_limit(params: SystemParams) -> float:
    """Value of the complete series at t = 0.

    Without delay feedback the series is a finite sum equal to Ce(0) = 1.
    With γτ > 0 the lattice of delay poles makes it a Fourier-type series of
    the causal amplitude (zero for t < 0), which converges to the midpoint
    1/2 of the jump at t = 0.
    """
    return 0.5 if params.gamma * params.tau > 0 else 1.0


def residue_series(poleset: PoleSet, warn: bool = True) -> ResidueSeries:
    limit = weight_sum_limit(poleset.params)
    diag = float(abs(np.sum(poleset.weights) - limit)) if len(poleset) else limit
    if warn and diag > TRUNCATION_WARN:
        warnings.warn(
            f"residue series truncated: |sum of weights - {limit:g}| = {diag:.3g}",
            TruncationWarning,
            stacklevel=2,
        )
    return ResidueSeries(poleset, diag)


def _series_sum(s: np.ndarray, w: np.ndarray, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("residue series is defined for t >= 0")
    if s.size == 0:
        return np.zeros(t.shape, dtype=complex)
    terms = w * np.exp(np.multiply.outer(t, s))
    return terms.sum(axis=-1)


def residue_ce(series, t):
    """Evaluate the truncated residue series at t >= 0 (scalar or array)."""
    if isinstance(series, PoleSet):
        series = residue_series(series)
    out = _series_sum(series.poles.s_values, series.poles.weights, t)
    return complex(out) if out.ndim == 0 else out


def residue_cs(series, t):
    """Metastable amplitude from the same poles.

    Cs(s) = -iΩ Ce(s)/(s + iα_s), and Ce(s) = 1/f(s) vanishes at s = -iα_s,
    so only the poles of Ce contribute:
    Cs(t) = -iΩ Σ_p e^{s_p t} / (f'(s_p)(s_p + iα_s)).
    """
    if isinstance(series, PoleSet):
        series = residue_series(series)
    params = series.poles.params
    s = series.poles.s_values
    w = series.poles.weights
    if params.rabi_omega == 0.0 or s.size == 0:
        out = np.zeros(np.shape(t), dtype=complex)
    else:
        out = -1j * params.rabi_omega * _series_sum(s, w / (s + 1j * params.alpha_s), t)
    return complex(out) if np.ndim(out) == 0 else out


def residue_components(series, t):
    """Split Ce into its dark (bound) and quasi-bound parts.

    Returns:
        (bound, quasi) with bound + quasi equal to :func:`residue_ce`.
    """
    if isinstance(series, PoleSet):
        series = residue_series(series, warn=False)
    kinds = np.array([p.kind is PoleKind.DARK for p in series.poles.poles], dtype=bool)
    s = series.poles.s_values
    w = series.poles.weights
    if s.size == 0:
        kinds = np.zeros(0, dtype=bool)
    bound = _series_sum(s[kinds], w[kinds], t)
    quasi = _series_sum(s[~kinds], w[~kinds], t)
    if bound.ndim == 0:
        return complex(bound), complex(quasi)
    return bound, quasi


def dark_weight(params: SystemParams, overlap: float) -> float:
    """1/f'(-iΩ_p) = 1/(γτ + 1/overlap) for a dark mode of the given e-overlap."""
    return 1.0 / (params.gamma * params.tau + 1.0 / overlap)


def bound_population(gamma_tau: float, overlap: float = 0.5) -> float:
    """|Ce(∞)|² carried by a single dark mode; 1/(γτ+2)² at zero detuning."""
    return 1.0 / (gamma_tau + 1.0 / overlap) ** 2


def _single_dark(params: SystemParams):
    modes = dark_frequencies(params)
    if len(modes) != 1:
        raise ValueError(f"expected exactly one dark frequency, found {len(modes)}")
    return modes[0]


def static_bound(params: SystemParams, t):
    """Dark-mode amplitudes (Ce^b, Cs^b) when exactly one dark frequency exists.

    Cs^b is Ce^b pushed through the metastable integral from t = 0, so it
    keeps the e^{-iα_s t} term that the transient cancels at long times;
    at zero detuning on the lower branch it reads
    -e^{-iαt}(e^{iΩt} - 1)/(γτ + 2).
    """
    mode = _single_dark(params)
    t = np.asarray(t, dtype=float)
    w = dark_weight(params, mode.overlap)
    ce = w * np.exp(-1j * mode.omega_p * t)
    nu = params.alpha_s - mode.omega_p
    if params.rabi_omega == 0.0:
        cs = np.zeros(t.shape, dtype=complex)
    elif nu == 0.0:
        cs = -1j * params.rabi_omega * w * t * np.exp(-1j * params.alpha_s * t)
    else:
        cs = -params.rabi_omega * w / nu * (
            np.exp(-1j * mode.omega_p * t) - np.exp(-1j * params.alpha_s * t)
        )
    if ce.ndim == 0:
        return complex(ce), complex(cs)
    return ce, cs


def oscillating_bound(params: SystemParams, t):
    """Ce^b for two coexisting dark modes.

    Σ_± overlap_± /(γτ overlap_± + 1) e^{-iΩ_± t}; at zero detuning this is
    2/(γτ+2) e^{-iαt} cos(Ωt).
    """
    modes = dark_frequencies(params)
    if len(modes) != 2:
        raise ValueError(f"two coexisting dark frequencies required, found {len(modes)}")
    t = np.asarray(t, dtype=float)
    gtau = params.gamma * params.tau
    ce = sum(
        m.overlap / (gtau * m.overlap + 1.0) * np.exp(-1j * m.omega_p * t) for m in modes
    )
    return complex(ce) if np.ndim(ce) == 0 else ce


def steady_population(params: SystemParams) -> float:
    """Long-time |Ce|² in the single-dark-mode regime (0 without dark modes)."""
    modes = dark_frequencies(params)
    if not modes:
        return 0.0
    if len(modes) > 1:
        raise ValueError("two dark modes coexist; the population oscillates")
    return bound_population(params.gamma * params.tau, modes[0].overlap)


def settling_time(poleset: PoleSet, factor: float = 10.0) -> float:
    """Time for the slowest quasi-bound pole to decay by e^{-factor}."""
    rates = [p.decay_rate for p in poleset.quasi_bound if p.decay_rate > 0]
    if not rates:
        return 0.0
    return factor / min(rates)


@dataclass(frozen=True)
class Cos2Fit:
    """Result of :func:`fit_cos2`.

    The model is y = c0 + c1 cos(2ωt) + c2 sin(2ωt); for a pure
    A·cos²(ωt + φ0) one has c0 = A/2 and |c1 + i c2| = A/2.
    """

    amplitude: float
    omega: float
    phase: float
    mean: float
    rms_residual: float

    @property
    def period(self) -> float:
        return math.pi / self.omega


def fit_cos2(t, y, omega_guess: float, rel_span: float = 0.01) -> Cos2Fit:
    """Least-squares fit of A·cos²(ωt + φ0) to samples, searching ω near a guess.

    For each trial ω the problem is linear in (c0, c1, c2); ω itself is found
    by a bounded scalar minimisation of the residual.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)

    def solve(om):
        m = np.column_stack([np.ones_like(t), np.cos(2 * om * t), np.sin(2 * om * t)])
        c, *_ = np.linalg.lstsq(m, y, rcond=None)
        return c, float(np.sum((m @ c - y) ** 2))

    lo, hi = omega_guess * (1 - rel_span), omega_guess * (1 + rel_span)
    res = minimize_scalar(lambda om: solve(om)[1], bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-13 * omega_guess})
    om = float(res.x)
    c, ss = solve(om)
    # c1 cos2ωt + c2 sin2ωt = R cos(2ωt + 2φ0) with R = A/2
    amp = 2.0 * math.hypot(c[1], c[2])
    phase = 0.5 * math.atan2(-c[2], c[1])
    return Cos2Fit(amp, om, phase, float(c[0]), math.sqrt(ss / t.size))


def two_level_exact(params: SystemParams, t):
    """Exact Ce(t) for the undriven atom (Ω = 0), built interval by interval.

    With a = -iα_e - γ and c = -γ e^{-iφ},

        Ce(t) = Σ_{k=0}^{⌊t/τ⌋} c^k (t - kτ)^k / k! · e^{a(t - kτ)},

    which on [0, 2τ] reads e^{at} + c (t - τ) e^{a(t-τ)}. For τ = 0 the
    feedback is instantaneous and Ce(t) = e^{(a + c)t}.
    """
    if params.rabi_omega != 0.0:
        raise ValueError("closed form requires rabi_omega = 0")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be >= 0")
    a = complex(-params.gamma, -params.alpha_e)
    c = -params.gamma * np.exp(-1j * params.phi)
    tau = params.tau
    if tau == 0.0:
        out = np.exp((a + c) * t)
    else:
        out = np.zeros(t.shape, dtype=complex)
        k_max = int(np.max(t) // tau) if t.size else 0
        for k in range(k_max + 1):
            r = t - k * tau
            on = r >= 0
            rr = np.where(on, r, 0.0)
            term = c**k * rr**k / math.factorial(k) * np.exp(a * rr)
            out = out + np.where(on, term, 0.0)
    return complex(out) if out.ndim == 0 else out


def write_csv(series: ResidueSeries, t, path) -> None:
    """Residue-route time series in the trajectory CSV schema, plus a JSON sidecar.

    The sidecar sits next to ``path`` with a ``.json`` suffix and records the
    truncation diagnostic and pole counts.
    """
    t = np.asarray(t, dtype=float)
    ce = np.atleast_1d(residue_ce(series, t))
    cs = np.atleast_1d(residue_cs(series, t))
    path = Path(path)
    io.write_csv(path, ["t", "re_ce", "im_ce", "re_cs", "im_cs", "pop_e", "pop_s"],
                 dde.timeseries_rows(np.atleast_1d(t), ce, cs))
    ps = series.poles
    io.write_json(path.with_suffix(".json"), {
        "truncation": series.diagnostic,
        "weight_sum_limit": weight_sum_limit(ps.params),
        "pole_count": len(ps),
        "dark_count": len(ps.dark),
        "window": ps.window.as_dict(),
        "grid_n": ps.grid_n,
    })
