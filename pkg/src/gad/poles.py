"""Complex poles of the Laplace-domain excited-state amplitude.

The transfer function is 1/f(s) with

    f(s) = s + iα_e + γ + γ e^{-iφ} e^{-sτ} + Ω²/(s + iα_s).

Re(s) is minus the decay rate of a mode, Im(s) minus its energy. A root with
vanishing real part is a dark (bound) mode; the others are quasi-bound.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .params import SystemParams, dark_frequencies
from . import io

MAX_NEWTON_ITER = 100
DARK_RTOL = 1e-10
RESIDUAL_RTOL = 1e-12
DEDUP_RTOL = 1e-8
SINGULAR_GUARD_RTOL = 1e-4


class SingularPointError(ZeroDivisionError):
    """f or f' evaluated exactly at the simple pole s = -iα_s."""


class PoleKind(str, enum.Enum):
    DARK = "dark"
    QUASI_BOUND = "quasi-bound"


@dataclass(frozen=True)
class Window:
    """Axis-aligned rectangle in the complex s plane."""

    re_min: float
    re_max: float
    im_min: float
    im_max: float

    def __post_init__(self):
        if not (self.re_min < self.re_max and self.im_min < self.im_max):
            raise ValueError(f"degenerate window {self}")

    def contains(self, s, pad: float = 0.0):
        s = np.asarray(s)
        return (
            (s.real >= self.re_min - pad)
            & (s.real <= self.re_max + pad)
            & (s.imag >= self.im_min - pad)
            & (s.imag <= self.im_max + pad)
        )

    def as_dict(self) -> Dict[str, float]:
        return {
            "re_min": self.re_min,
            "re_max": self.re_max,
            "im_min": self.im_min,
            "im_max": self.im_max,
        }


@dataclass(frozen=True)
class Pole:
    s: complex
    residual: float
    kind: PoleKind
    weight: complex  # 1/f'(s)

    @property
    def decay_rate(self) -> float:
        return -self.s.real

    @property
    def energy(self) -> float:
        return -self.s.imag


@dataclass(frozen=True)
class PoleSet:
    poles: Tuple[Pole, ...]
    window: Window
    grid_n: int
    params: SystemParams
    diagnostics: Dict[str, int] = field(default_factory=dict)

    def __len__(self):
        return len(self.poles)

    def __iter__(self):
        return iter(self.poles)

    @property
    def dark(self) -> List[Pole]:
        return [p for p in self.poles if p.kind is PoleKind.DARK]

    @property
    def quasi_bound(self) -> List[Pole]:
        return [p for p in self.poles if p.kind is PoleKind.QUASI_BOUND]

    @property
    def s_values(self) -> np.ndarray:
        return np.array([p.s for p in self.poles], dtype=complex)

    @property
    def weights(self) -> np.ndarray:
        return np.array([p.weight for p in self.poles], dtype=complex)


def _check_singular(s, params: SystemParams):
    if params.rabi_omega != 0.0 and np.any(np.asarray(s) + 1j * params.alpha_s == 0):
        raise SingularPointError(f"s = -i*{params.alpha_s} is a pole of f")


def f_eval(s, params: SystemParams):
    """Evaluate f(s); accepts scalars or arrays."""
    _check_singular(s, params)
    s = np.asarray(s, dtype=complex)
    g = params.gamma
    with np.errstate(over="ignore", invalid="ignore"):
        val = s + 1j * params.alpha_e + g + g * np.exp(-1j * params.phi - s * params.tau)
        if params.rabi_omega != 0.0:
            val = val + params.rabi_omega**2 / (s + 1j * params.alpha_s)
    return val[()] if val.ndim == 0 else val


def f_prime(s, params: SystemParams):
    """Evaluate df/ds; accepts scalars or arrays."""
    _check_singular(s, params)
    s = np.asarray(s, dtype=complex)
    g, tau = params.gamma, params.tau
    with np.errstate(over="ignore", invalid="ignore"):
        val = 1.0 - g * tau * np.exp(-1j * params.phi - s * tau) + 0j * s
        if params.rabi_omega != 0.0:
            val = val - params.rabi_omega**2 / (s + 1j * params.alpha_s) ** 2
    return val[()] if val.ndim == 0 else val


def default_window(params: SystemParams) -> Window:
    """Rectangle around the dressed doublet wide enough for a few delay-lattice poles."""
    alpha = 0.5 * (params.alpha_e + params.alpha_s)
    omega = params.rabi_omega
    half = 6.0 * omega + abs(params.alpha_e - params.alpha_s)
    if params.tau > 0:
        half += 6.0 * math.pi / params.tau
    else:
        half += 6.0 * params.scale
    gamma = params.gamma if params.gamma > 0 else params.scale
    return Window(-4.0 * gamma, 1e-6, -(alpha + half), -(alpha - half))


def _local_minima(mag: np.ndarray) -> np.ndarray:
    """Boolean mask of grid points not exceeded by any of their 8 neighbours."""
    padded = np.pad(mag, 1, mode="constant", constant_values=np.inf)
    n0, n1 = mag.shape
    mask = np.ones_like(mag, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            neigh = padded[1 + di : 1 + di + n0, 1 + dj : 1 + dj + n1]
            mask &= mag <= neigh
    return mask & np.isfinite(mag)


def newton_refine(seeds, params: SystemParams, max_iter: int = MAX_NEWTON_ITER, tol=None):
    """Vectorised Newton iteration on f from each seed.

    Returns:
        (roots, residuals, converged) arrays aligned with ``seeds``.
    """
    if tol is None:
        tol = RESIDUAL_RTOL * params.scale
    s = np.array(seeds, dtype=complex).ravel()
    active = np.ones(s.shape, dtype=bool)
    alive = np.ones(s.shape, dtype=bool)
    for _ in range(max_iter):
        if not active.any():
            break
        sa = s[active]
        fa = f_eval(sa, params)
        fpa = f_prime(sa, params)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = fa / fpa
        bad = ~np.isfinite(step)
        step[bad] = 0.0
        s_new = sa - step
        done = (np.abs(fa) <= 1e-3 * tol) | (np.abs(step) <= 4e-16 * np.maximum(1.0, np.abs(sa)))
        idx = np.flatnonzero(active)
        s[idx] = s_new
        alive[idx[bad]] = False
        active[idx[done | bad]] = False
    res = np.full(s.shape, np.inf)
    floor = np.full(s.shape, np.inf)
    ok = alive & np.isfinite(s)
    if ok.any():
        res[ok] = np.abs(f_eval(s[ok], params))
        floor[ok] = roundoff_floor(s[ok], params)
    return s, res, ok & (res <= np.maximum(tol, floor))


def roundoff_floor(s, params: SystemParams):
    """Attainable |f| in double precision near ``s``.

    The delay term is computed from exp(-sτ) with an argument of size |s|τ,
    so its absolute error grows like γ|e^{-sτ}| |s|τ ε. Far lattice poles
    cannot reach a fixed absolute residual below this.
    """
    s = np.asarray(s, dtype=complex)
    eps = np.finfo(float).eps
    with np.errstate(over="ignore"):
        delay = params.gamma * np.exp(-s.real * params.tau) * (1.0 + np.abs(s) * params.tau)
    mag = np.abs(s) + abs(params.alpha_e) + params.gamma + delay
    if params.rabi_omega != 0.0:
        mag = mag + params.rabi_omega**2 / np.abs(s + 1j * params.alpha_s)
    return 64.0 * eps * mag


def _dedup(roots: np.ndarray, radius: float) -> List[complex]:
    order = np.lexsort((roots.real, roots.imag))
    kept: List[complex] = []
    for r in roots[order]:
        if all(abs(r - k) > radius for k in kept[-8:]):
            kept.append(complex(r))
    # a second pass guards against near-ties in the sort key
    out: List[complex] = []
    for r in kept:
        if all(abs(r - k) > radius for k in out):
            out.append(r)
    return out


def classify(s: complex, params: SystemParams) -> PoleKind:
    if abs(s.real) <= DARK_RTOL * params.scale:
        return PoleKind.DARK
    return PoleKind.QUASI_BOUND


def make_pole(s: complex, params: SystemParams) -> Pole:
    s = complex(s)
    return Pole(
        s=s,
        residual=float(abs(f_eval(s, params))),
        kind=classify(s, params),
        weight=complex(1.0 / f_prime(s, params)),
    )


def find_poles(
    params: SystemParams,
    window: Optional[Window] = None,
    grid_n: int = 240,
    tol: Optional[float] = None,
) -> PoleSet:
    """Locate the roots of f inside ``window``.

    Local minima of |f| on a ``grid_n`` x ``grid_n`` mesh seed a Newton
    iteration with the analytic derivative. Roots are kept when
    |f(s)| <= tol, lie inside the window and are farther apart than the
    dedup radius. Diagnostics count dropped seeds and roots that converged
    outside the window (a sign of truncation).
    """
    if window is None:
        window = default_window(params)
    if grid_n < 3:
        raise ValueError("grid_n must be >= 3")
    scale = params.scale
    if tol is None:
        tol = RESIDUAL_RTOL * scale
    re = np.linspace(window.re_min, window.re_max, grid_n)
    im = np.linspace(window.im_min, window.im_max, grid_n)
    mesh = re[None, :] + 1j * im[:, None]
    near_singular = np.zeros(mesh.shape, dtype=bool)
    if params.rabi_omega != 0.0:
        near_singular = np.abs(mesh + 1j * params.alpha_s) <= SINGULAR_GUARD_RTOL * max(
            params.rabi_omega, 1e-300
        )
        mesh = np.where(mesh + 1j * params.alpha_s == 0, mesh + 1e-300, mesh)
    mag = np.abs(f_eval(np.where(near_singular, np.nan, mesh), params))
    mag[near_singular] = np.inf
    minima = _local_minima(mag)
    seeds = mesh[minima]
    # analytic dark predictions are cheap extra seeds
    extra = [complex(-1j * df.omega_p) for df in dark_frequencies(params)]
    seeds = np.concatenate([seeds, np.array(extra, dtype=complex)])

    roots, residuals, converged = newton_refine(seeds, params, tol=tol)
    pad = 1e-9 * scale
    inside = window.contains(roots, pad)
    accepted = roots[converged & inside]
    diagnostics = {
        "seeds": int(seeds.size),
        "singular_discarded": int(near_singular.sum()),
        "non_converged": int((~converged).sum()),
        "outside_window": int((converged & ~inside).sum()),
    }
    unique = _dedup(accepted, DEDUP_RTOL * scale) if accepted.size else []
    poles = sorted((make_pole(s, params) for s in unique), key=lambda p: (p.s.imag, p.s.real))
    return PoleSet(tuple(poles), window, grid_n, params, diagnostics)


def dark_pole_predict(params: SystemParams) -> List[Pole]:
    """Dark poles s = -iΩ_p built from closed forms.

    The residue weight uses f'(-iΩ_p) = γτ + 1/cos²θ on the upper dressed
    branch and γτ + 1/sin²θ on the lower one.
    """
    gtau = params.gamma * params.tau
    out = []
    for df in dark_frequencies(params):
        s = complex(0.0, -df.omega_p)
        fp = gtau + 1.0 / df.overlap
        out.append(
            Pole(
                s=s,
                residual=float(abs(f_eval(s, params))),
                kind=PoleKind.DARK,
                weight=complex(1.0 / fp),
            )
        )
    return sorted(out, key=lambda p: p.s.imag)


def _rectangle_point(window: Window, u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    edge = np.minimum(np.floor(u), 3).astype(int)
    frac = u - edge
    corners = np.array(
        [
            complex(window.re_min, window.im_min),
            complex(window.re_max, window.im_min),
            complex(window.re_max, window.im_max),
            complex(window.re_min, window.im_max),
            complex(window.re_min, window.im_min),
        ]
    )
    return corners[edge] + frac * (corners[edge + 1] - corners[edge])


def _on_boundary(window: Window, s: complex) -> bool:
    inside = window.contains(s)
    on_re = s.real in (window.re_min, window.re_max)
    on_im = s.imag in (window.im_min, window.im_max)
    return bool(inside) and (on_re or on_im)


def count_roots(params: SystemParams, window: Window, n_per_edge: int = 400,
                max_refine: int = 40) -> int:
    """Number of zeros of f inside ``window`` by the argument principle.

    The phase of f is tracked along the boundary with adaptive refinement
    until every increment is below π/8; the winding number counts zeros
    minus poles, so the simple pole at -iα_s is added back when enclosed.
    """
    if params.rabi_omega != 0.0 and _on_boundary(window, -1j * params.alpha_s):
        raise ValueError("contour passes through the pole of f at -i*alpha_s; pad the window")
    u = np.linspace(0.0, 4.0, 4 * n_per_edge + 1)  # one unit per edge, counter-clockwise
    vals = f_eval(_rectangle_point(window, u), params)
    for _ in range(max_refine):
        dphi = np.angle(vals[1:] / vals[:-1])
        coarse = np.abs(dphi) > math.pi / 8
        if not coarse.any():
            break
        mids = 0.5 * (u[:-1][coarse] + u[1:][coarse])
        u_new = np.concatenate([u, mids])
        v_new = np.concatenate([vals, f_eval(_rectangle_point(window, mids), params)])
        order = np.argsort(u_new, kind="stable")
        u, vals = u_new[order], v_new[order]
    else:
        raise ValueError("argument principle did not resolve; a root may lie on the contour")
    if not np.all(np.isfinite(vals)) or np.any(vals == 0):
        raise ValueError("f vanishes or diverges on the contour")
    winding = np.sum(np.angle(vals[1:] / vals[:-1])) / (2.0 * math.pi)
    n_singular = 0
    if params.rabi_omega != 0.0 and bool(window.contains(-1j * params.alpha_s)):
        n_singular = 1
    return int(round(winding)) + n_singular


def write_csv(poleset: PoleSet, path) -> None:
    header = ["re_s", "im_s", "residual", "kind", "re_weight", "im_weight"]
    rows = [
        [p.s.real, p.s.imag, p.residual, p.kind.value, p.weight.real, p.weight.imag]
        for p in poleset.poles
    ]
    io.write_csv(path, header, rows)
