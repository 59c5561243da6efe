"""Driven giant Λ atom in a waveguide: poles, delay dynamics and radiated field."""

__version__ = "0.1.0"

from .params import SystemParams, derive, dark_frequencies, coexistence_distances  # noqa: E402
from .poles import find_poles, count_roots, dark_pole_predict  # noqa: E402
from .dde import integrate, amplitude_at  # noqa: E402

__all__ = [
    "SystemParams",
    "derive",
    "dark_frequencies",
    "coexistence_distances",
    "find_poles",
    "count_roots",
    "dark_pole_predict",
    "integrate",
    "amplitude_at",
    "__version__",
]
