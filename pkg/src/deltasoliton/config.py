"""Experiment configuration schema and validation.

A config is a single JSON document selecting one mode and carrying exactly
the sections that mode needs; unknown keys and sections that do not belong
to the mode are rejected, and all validation errors are reported together.
"""

from __future__ import annotations

import json
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

Mode = Literal["groundstate", "spectrum", "evolve", "shoot", "norm-equiv", "verify"]

_REQUIRED_SECTIONS: dict[str, set[str]] = {
    "groundstate": {"groundstate"},
    "spectrum": {"spectrum"},
    "evolve": {"profile", "evolution"},
    "shoot": {"profile", "shooting"},
    "norm-equiv": {"frac"},
    "verify": {"verify"},
}
_ALL_SECTIONS = {"groundstate", "spectrum", "profile", "evolution", "shooting",
                 "frac", "verify"}


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GridSpec(_Strict):
    half_length: float = Field(gt=0)
    n_points: int = Field(ge=3)

    @model_validator(mode="after")
    def _odd(self):
        if self.n_points % 2 == 0:
            raise ValueError("n_points must be odd so x=0 is a node")
        return self


class PhysicsSpec(_Strict):
    p: float = Field(gt=1)
    gamma: float = Field(le=0)


class SolitonSpec(_Strict):
    omega: float = Field(gt=0)
    v: float = 0.0
    x0: float = 0.0
    theta: float = 0.0


class GroundstateSpec(_Strict):
    omega: float = Field(gt=0)


class SpectrumCase(_Strict):
    omega: float = Field(gt=0)
    gamma: Optional[float] = None  # defaults to physics.gamma


class SpectrumSpec(_Strict):
    cases: list[SpectrumCase] = Field(min_length=1)


class ProfileSpec(_Strict):
    solitons: list[SolitonSpec] = Field(min_length=1)


class EvolutionSpec(_Strict):
    t0: float
    t1: float
    dt: float = Field(gt=0)
    record_every: int = Field(default=10, ge=1)


class ShootingSpec(_Strict):
    t_start: float
    t_end: float
    dt: float = Field(gt=0)
    sample_dt: float = 0.1
    newton_tol: float = 1e-6
    max_outer: int = 12
    fd_step: float = 1e-6
    eps0: float = 0.1
    stage_efolds: float = 4.0
    cutoff_width: Optional[float] = None

    @model_validator(mode="after")
    def _ordered(self):
        if self.t_start >= self.t_end:
            raise ValueError("t_start must be below t_end")
        return self


class FracSpec(_Strict):
    s_values: list[float] = Field(default=[0.25, 0.6, 1.0, 1.4])
    lam: Optional[float] = None
    quad_nodes: int = Field(default=200, ge=8)

    @model_validator(mode="after")
    def _range(self):
        for s in self.s_values:
            if not 0.0 < s < 1.5:
                raise ValueError(f"s={s} outside (0, 3/2)")
        return self


class VerifySpec(_Strict):
    omega: float = Field(default=1.0, gt=0)
    coercivity_trials: int = Field(default=200, ge=10)


class ExperimentConfig(_Strict):
    mode: Mode
    seed: int = 0
    output_dir: Optional[str] = None
    grid: GridSpec
    physics: PhysicsSpec
    groundstate: Optional[GroundstateSpec] = None
    spectrum: Optional[SpectrumSpec] = None
    profile: Optional[ProfileSpec] = None
    evolution: Optional[EvolutionSpec] = None
    shooting: Optional[ShootingSpec] = None
    frac: Optional[FracSpec] = None
    verify: Optional[VerifySpec] = None

    @model_validator(mode="after")
    def _sections_match_mode(self):
        required = _REQUIRED_SECTIONS[self.mode]
        present = {s for s in _ALL_SECTIONS if getattr(self, s.replace("-", "_")) is not None}
        missing = required - present
        extra = present - required
        problems = []
        if missing:
            problems.append(f"mode '{self.mode}' requires sections {sorted(missing)}")
        if extra:
            problems.append(f"mode '{self.mode}' does not accept sections {sorted(extra)}")
        if problems:
            raise ValueError("; ".join(problems))
        return self

    @model_validator(mode="after")
    def _standing_admissibility(self):
        gamma = self.physics.gamma
        bound = gamma**2 / 4.0

        def check(omega, where):
            if omega <= bound:
                raise ValueError(
                    f"{where}: omega={omega} violates the standing-wave "
                    f"admissibility omega > gamma^2/4 = {bound}"
                )

        if self.groundstate is not None:
            check(self.groundstate.omega, "groundstate.omega")
        if self.verify is not None:
            check(self.verify.omega, "verify.omega")
        if self.spectrum is not None:
            for i, case in enumerate(self.spectrum.cases):
                g = gamma if case.gamma is None else case.gamma
                if case.omega <= g**2 / 4.0:
                    raise ValueError(
                        f"spectrum.cases[{i}]: omega={case.omega} violates the "
                        f"standing-wave admissibility omega > gamma^2/4 = {g ** 2 / 4.0}"
                    )
        if self.profile is not None:
            vs = [s.v for s in self.profile.solitons]
            if len(set(vs)) != len(vs):
                raise ValueError("profile.solitons: velocities must be pairwise distinct")
            for i, s in enumerate(self.profile.solitons):
                if s.v == 0.0:
                    check(s.omega, f"profile.solitons[{i}].omega (resting)")
                    if s.x0 != 0.0:
                        raise ValueError(
                            f"profile.solitons[{i}]: resting soliton must have x0=0"
                        )
        return self


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a JSON config; syntax errors carry the position and
    semantic violations are aggregated per field."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            [f"JSON syntax error at line {exc.lineno}, column {exc.colno}: {exc.msg}"]
        ) from exc
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        msgs = []
        for err in exc.errors():
            loc = ".".join(str(p) for p in err["loc"]) or "<root>"
            msgs.append(f"{loc}: {err['msg']}")
        raise ConfigError(msgs) from exc


class ConfigError(ValueError):
    def __init__(self, messages: list[str]):
        self.messages = messages
        super().__init__("; ".join(messages))
