"""Physical parameters of the driven giant Λ atom and their derived quantities.

Units: hbar = 1, v = 1, and every frequency is expressed in units of the
Rabi frequency. With v = 1 the leg separation ``d`` and the delay ``tau`` are
numerically equal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional

PARITY_TOL = 1e-9
Q_DETUNING_TOL = 1e-12
INTEGER_TOL = 1e-9


class NoCoexistenceError(ValueError):
    """Raised when two dark modes cannot coexist for the given parameters."""


@dataclass(frozen=True)
class SystemParams:
    """Model constants.

    Attributes:
        rabi_omega: drive strength Ω. Zero gives the two-level giant atom.
        gamma: relaxation rate at a single coupling point.
        alpha_e: shifted excited-state frequency.
        alpha_s: shifted metastable frequency.
        phi: propagation phase picked up between the legs (radians).
        d: leg separation.
        v: group velocity, fixed to 1.
    """

    rabi_omega: float = 1.0
    gamma: float = 1.0
    alpha_e: float = 100.0
    alpha_s: float = 100.0
    phi: float = 0.0
    d: float = math.pi
    v: float = 1.0

    def __post_init__(self):
        validate(self)

    @property
    def tau(self) -> float:
        return self.d / self.v

    @property
    def scale(self) -> float:
        """Reference rate max(γ, Ω) used by all relative tolerances."""
        return max(self.gamma, self.rabi_omega) or 1.0


def validate(params: SystemParams) -> None:
    for name in ("rabi_omega", "gamma", "alpha_e", "alpha_s", "phi", "d", "v"):
        value = getattr(params, name)
        if not math.isfinite(value):
            raise ValueError(f"{name} must be finite, got {value!r}")
    if params.gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {params.gamma}")
    if params.d < 0:
        raise ValueError(f"d must be >= 0, got {params.d}")
    if params.rabi_omega < 0:
        raise ValueError(f"rabi_omega must be >= 0, got {params.rabi_omega}")
    if params.v != 1.0:
        raise ValueError("group velocity is fixed to v = 1")


@dataclass(frozen=True)
class DerivedQuantities:
    tau: float
    delta: float
    omega_eff: float
    omega_plus: float
    omega_minus: float
    sin_theta: float
    cos_theta: float
    q: Optional[float]

    @property
    def omega_p1(self) -> float:
        """Upper dressed frequency (α_e + α_s + Ω_eff)/2."""
        return self.omega_plus

    @property
    def omega_p2(self) -> float:
        return self.omega_minus


def derive(params: SystemParams) -> DerivedQuantities:
    """Compute delay, detuning, dressed frequencies and mixing angle.

    With Ω = 0 and Δ = 0 the mixing angle is degenerate; θ = 0 is used so that
    the upper branch carries the whole excited-state weight.
    """
    validate(params)
    omega = params.rabi_omega
    delta = params.alpha_e - params.alpha_s
    omega_eff = math.hypot(delta, 2.0 * omega)
    mean = 0.5 * (params.alpha_e + params.alpha_s)
    if omega_eff == 0.0:
        sin_t, cos_t = 0.0, 1.0
    else:
        sin_t = math.sqrt(max(omega_eff - delta, 0.0) / (2.0 * omega_eff))
        cos_t = math.sqrt(max(omega_eff + delta, 0.0) / (2.0 * omega_eff))
    q = None
    if omega > 0 and abs(delta) <= Q_DETUNING_TOL * omega:
        q = params.alpha_e / omega
    return DerivedQuantities(
        tau=params.tau,
        delta=delta,
        omega_eff=omega_eff,
        omega_plus=mean + 0.5 * omega_eff,
        omega_minus=mean - 0.5 * omega_eff,
        sin_theta=sin_t,
        cos_theta=cos_t,
        q=q,
    )


@dataclass(frozen=True)
class DarkFrequency:
    omega_p: float
    branch: str  # "plus" or "minus"
    p: int
    overlap: float  # cos²θ for "plus", sin²θ for "minus"


def dark_frequencies(params: SystemParams) -> List[DarkFrequency]:
    """Dressed frequencies for which Ω_p τ − φ is an odd multiple of π.

    A branch with no excited-state overlap (only possible at Ω = 0) is not a
    root of the pole equation and is skipped.
    """
    dq = derive(params)
    tau = dq.tau
    out = []
    for branch, freq, overlap in (
        ("plus", dq.omega_plus, dq.cos_theta**2),
        ("minus", dq.omega_minus, dq.sin_theta**2),
    ):
        if overlap == 0.0:
            continue
        phase = freq * tau - params.phi
        p = round((phase - math.pi) / (2.0 * math.pi))
        if abs(phase - (2 * p + 1) * math.pi) <= PARITY_TOL:
            out.append(DarkFrequency(freq, branch, int(p), overlap))
    return out


@dataclass(frozen=True)
class CoexistenceDistance:
    n: int
    d: float
    p1: int
    p2: int

    def parity_exact(self, q: int) -> bool:
        """Check (q ± 1)(2n + 1) odd in exact integer arithmetic."""
        return all(((q + s) * (2 * self.n + 1)) % 2 == 1 for s in (1, -1))


def coexistence_distances(params: SystemParams, n_max: int) -> List[CoexistenceDistance]:
    """Leg separations d_n = (2n+1)π/Ω at which both dressed dark modes exist.

    Only the resonant, zero-phase case with an even integer q = α/Ω is
    supported. Odd or non-integer q raises :class:`NoCoexistenceError`.
    """
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    if params.rabi_omega <= 0:
        raise NoCoexistenceError("coexistence requires a nonzero drive")
    if params.phi != 0.0:
        raise ValueError("coexistence distances are defined for phi = 0 only")
    q = derive(params).q
    if q is None:
        raise ValueError("coexistence distances require zero detuning")
    q_int = round(q)
    if abs(q - q_int) > INTEGER_TOL or q_int <= 0:
        raise NoCoexistenceError(f"q = {q:g} is not a positive integer")
    if q_int % 2:
        raise NoCoexistenceError(f"q = {q_int} is odd; the two dark modes cannot coexist")
    omega = params.rabi_omega
    out = []
    for n in range(n_max + 1):
        p1 = q_int // 2 + (q_int + 1) * n
        p2 = q_int // 2 - 1 + (q_int - 1) * n
        # (2p1+1)/(q+1) = (2p2+1)/(q-1) = 2n+1
        out.append(CoexistenceDistance(n, (2 * n + 1) * math.pi / omega, p1, p2))
    return out
