"""Declarative run configurations.

A scenario file is JSON. Frequencies (rates, detunings, dt, t_max, windows)
are in units of the drive Ω; the leg separation ``d`` is in units of π/Ω.
Unknown keys are rejected at every level.
"""

from __future__ import annotations

import json
import math
import re
from importlib import resources
from pathlib import Path
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .params import SystemParams

TASKS = ("pole-map", "dynamics", "bound-analysis", "field-profile", "conservation")
_NAME_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_.-]*$")


class ScenarioError(ValueError):
    """Invalid or unreadable scenario."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", strict=True, allow_inf_nan=False, frozen=True)


class ParamsSpec(_Strict):
    rabi_omega: float = Field(1.0, ge=0)
    gamma: float = Field(1.0, ge=0)
    alpha_e: float
    alpha_s: float
    phi: float = 0.0
    d: float = Field(..., ge=0, description="leg separation in units of pi/Omega")


class WindowSpec(_Strict):
    re_min: float
    re_max: float
    im_min: float
    im_max: float

    @model_validator(mode="after")
    def _ordered(self):
        if not (self.re_min < self.re_max and self.im_min < self.im_max):
            raise ValueError("window needs re_min < re_max and im_min < im_max")
        return self


class SolverSpec(_Strict):
    dt: Optional[float] = Field(None, gt=0)
    t_max: Optional[float] = Field(None, gt=0)
    corotating: Optional[bool] = None
    grid_n: int = Field(240, ge=3, le=4000)
    window: Optional[WindowSpec] = None
    x_points: int = Field(2048, ge=2, le=1_000_000)
    output_stride: Optional[int] = Field(None, ge=1)
    tail_fraction: float = Field(0.2, gt=0, lt=1)
    conservation_times: Optional[List[float]] = None
    spacetime_samples: int = Field(0, ge=0, le=10_000)

    @field_validator("conservation_times")
    @classmethod
    def _times(cls, v):
        if v is not None and (not v or any(t < 0 for t in v)):
            raise ValueError("conservation_times must be a non-empty list of times >= 0")
        return v


class Scenario(_Strict):
    name: str
    figure: Optional[str] = None
    description: str = ""
    task: Literal["pole-map", "dynamics", "bound-analysis", "field-profile", "conservation"]
    params: ParamsSpec
    d_values: Optional[List[float]] = None
    solver: SolverSpec = SolverSpec()
    output_dir: Optional[str] = None

    @field_validator("name")
    @classmethod
    def _name(cls, v):
        if not _NAME_RE.match(v):
            raise ValueError("name must be a plain file-system-safe token")
        return v

    @field_validator("d_values")
    @classmethod
    def _d_values(cls, v):
        if v is not None:
            if not v:
                raise ValueError("d_values must not be empty")
            if any(d < 0 or not math.isfinite(d) for d in v):
                raise ValueError("d_values must be finite and >= 0")
            if len(set(v)) != len(v):
                raise ValueError("d_values must be distinct")
        return v

    @field_validator("output_dir")
    @classmethod
    def _out(cls, v):
        if v is not None and not v.strip():
            raise ValueError("output_dir must not be empty")
        return v

    def cases(self) -> List[Tuple[str, SystemParams]]:
        """(label, params) per leg separation, converted to absolute units."""
        ds = self.d_values if self.d_values is not None else [self.params.d]
        out = []
        for d in ds:
            p = SystemParams(
                rabi_omega=self.params.rabi_omega,
                gamma=self.params.gamma,
                alpha_e=self.params.alpha_e,
                alpha_s=self.params.alpha_s,
                phi=self.params.phi,
                d=d * math.pi,
            )
            out.append((f"d{d:g}", p))
        return out

    def echo(self) -> dict:
        return self.model_dump(mode="json")


def _format_error(err: ValidationError) -> str:
    parts = []
    for e in err.errors():
        loc = ".".join(str(x) for x in e["loc"]) or "<root>"
        parts.append(f"{loc}: {e['msg']}")
    return "; ".join(parts)


def parse_scenario(data) -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a JSON object")
    try:
        scn = Scenario.model_validate(data)
        scn.cases()  # SystemParams re-validates the physical ranges
    except ValidationError as err:
        raise ScenarioError(_format_error(err)) from None
    except ValueError as err:
        raise ScenarioError(str(err)) from None
    return scn


def _bundled_dir():
    return resources.files("gad").joinpath("scenarios")


def bundled_names() -> List[str]:
    return sorted(p.name[:-5] for p in _bundled_dir().iterdir() if p.name.endswith(".json"))


def load_scenario(ref: str) -> Scenario:
    """Load a scenario from a JSON path or a bundled name."""
    path = Path(ref)
    if path.suffix == ".json" or path.exists():
        try:
            text = path.read_text()
        except OSError as err:
            raise ScenarioError(f"cannot read {ref}: {err.strerror}") from None
    elif ref in bundled_names():
        text = _bundled_dir().joinpath(f"{ref}.json").read_text()
    else:
        raise ScenarioError(f"no scenario file or bundled scenario named {ref!r}")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ScenarioError(f"invalid JSON in {ref}: {err}") from None
    return parse_scenario(data)


def catalog() -> List[Tuple[str, str, str]]:
    """(name, figure, description) for each bundled scenario, sorted by name."""
    out = []
    for name in bundled_names():
        scn = load_scenario(name)
        out.append((name, scn.figure or "-", scn.description))
    return out
