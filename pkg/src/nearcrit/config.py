"""Run configuration: loading, validation and defaults.

A configuration file is either a JSON object or plain ``key = value`` /
``key: value`` lines with ``#`` comments. An empty file gives the defaults.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields, replace
from fractions import Fraction
from pathlib import Path

from .errors import ParameterError
from .lattice import BETA_C, as_fraction

FIELD_SCHEDULES = ("uniform", "zeroed-near-endpoints")


@dataclass(frozen=True)
class RunConfig:
    """Validated run parameters.

    Attributes:
        a: lattice spacing in (0, 1].
        h: unscaled magnetic field; the per-vertex field is ``h a^{15/8}``.
        beta: inverse temperature, the critical value by default.
        box: side of the simulation box in units of the unit square.
        stride: spacing of the staged annuli of the backbone exploration.
        budget: Monte Carlo samples per estimate; ``None`` keeps each
            operation's own default.
        seed: global seed; per-chain streams are derived from it.
        output_dir: directory receiving CSV and JSON output.
        field_schedule: ``uniform`` or ``zeroed-near-endpoints``.
    """

    a: Fraction = Fraction(1)
    h: float = 0.0
    beta: float = BETA_C
    box: Fraction = Fraction(16)
    stride: int = 3
    budget: int | None = None
    seed: int = 0
    output_dir: str = "results"
    field_schedule: str = "uniform"

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        try:
            set_("a", as_fraction(self.a))
            set_("box", as_fraction(self.box))
            set_("h", float(self.h))
            set_("beta", float(self.beta))
            set_("stride", _as_int("stride", self.stride))
            if self.budget is not None:
                set_("budget", _as_int("budget", self.budget))
            set_("seed", _as_int("seed", self.seed))
        except (TypeError, ValueError, ZeroDivisionError) as exc:
            if isinstance(exc, ParameterError):
                raise
            raise ParameterError(f"malformed configuration value: {exc}") from None
        if not 0 < self.a <= 1:
            raise ParameterError(f"a must lie in (0, 1], got {self.a}")
        if not (math.isfinite(self.h) and self.h >= 0):
            raise ParameterError(f"h must be a finite number >= 0, got {self.h}")
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise ParameterError(f"beta must be a finite number > 0, got {self.beta}")
        if self.box <= 0:
            raise ParameterError(f"box must be > 0, got {self.box}")
        if self.stride < 1:
            raise ParameterError(f"stride must be >= 1, got {self.stride}")
        if self.budget is not None and self.budget < 1:
            raise ParameterError(f"budget must be >= 1, got {self.budget}")
        if self.seed < 0:
            raise ParameterError(f"seed must be >= 0, got {self.seed}")
        if self.field_schedule not in FIELD_SCHEDULES:
            raise ParameterError(f"field_schedule must be one of {FIELD_SCHEDULES}, "
                                 f"got {self.field_schedule!r}")
        if self.h * float(self.a) ** (15 / 8) > 1:
            raise ParameterError(
                f"h a^(15/8) = {self.h * float(self.a) ** (15 / 8):.4g} exceeds 1; the "
                "near-critical regime requires the admissibility condition h a^(15/8) <= 1")

    @property
    def scaled_field(self) -> float:
        return self.h * float(self.a) ** (15 / 8)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["a"], d["box"] = str(self.a), str(self.box)
        return d

    def updated(self, **kw) -> "RunConfig":
        """Copy with the non-``None`` overrides applied (and revalidated)."""
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


VALID_KEYS = tuple(f.name for f in fields(RunConfig))


def _as_int(name: str, v) -> int:
    if isinstance(v, bool):
        raise ParameterError(f"{name} must be an integer")
    if isinstance(v, str):
        v = float(v) if any(c in v for c in ".eE") else int(v)
    if isinstance(v, float):
        if not v.is_integer():
            raise ParameterError(f"{name} must be an integer, got {v}")
        v = int(v)
    return int(v)


def _scalar(text: str):
    text = text.strip()
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        return text[1:-1]
    try:
        return json.loads(text)
    except ValueError:
        return text


def parse_config_text(text: str) -> dict:
    """Raw key/value pairs from JSON or ``key = value`` text."""
    stripped = text.strip()
    if not stripped:
        return {}
    if stripped.startswith("{"):
        try:
            raw = json.loads(stripped)
        except ValueError as exc:
            raise ParameterError(f"malformed JSON configuration: {exc}") from None
        if not isinstance(raw, dict):
            raise ParameterError("configuration must be a mapping")
        return raw
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        sep = min((i for i in (line.find("="), line.find(":")) if i >= 0), default=-1)
        if sep <= 0:
            raise ParameterError(f"line {lineno}: expected 'key = value', got {line!r}")
        key = line[:sep].strip()
        if key in raw:
            raise ParameterError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = _scalar(line[sep + 1:])
    return raw


def config_from_dict(raw: dict) -> RunConfig:
    unknown = sorted(set(raw) - set(VALID_KEYS))
    if unknown:
        raise ParameterError(f"unknown configuration key(s) {unknown}; "
                             f"valid keys are {list(VALID_KEYS)}")
    return RunConfig(**raw)


def load_config(path) -> RunConfig:
    """Read and validate a configuration file.

    Raises:
        ParameterError: unknown key, malformed or out-of-range value.
    """
    return config_from_dict(parse_config_text(Path(path).read_text()))
