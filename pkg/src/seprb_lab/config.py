"""Run configuration documents (JSON) and their validation."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Mapping, Optional, Union

from .geometry import Experiment
from .ontology import BUILTIN_MODELS, ModelValidationError, make_local_hv

SEED_ENV = "SEPRB_LAB_SEED"

COMMANDS = ("simulate", "exact", "chsh", "transform", "verify", "sweep", "polytope")
ANGLE_KEYS = ("alpha", "beta", "gamma", "a1", "a2", "b1", "b2")
FORMATS = ("csv", "json")
TARGETS = ("A=B", "B=C", "A=1", "B=1")

DEFAULT_N = 100_000
DEFAULT_GRID = 64
MAX_SEED = 2**64 - 1


class ConfigError(ValueError):
    """Schema violation; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class RunConfig:
    command: str
    experiment: Optional[Experiment] = None
    angles: Mapping[str, float] = field(default_factory=dict)
    c: int = 1
    model: Optional[str] = None
    local_hv: Optional[Mapping[str, Any]] = None
    n: int = DEFAULT_N
    seed: int = 0
    grid: int = DEFAULT_GRID
    target: Optional[str] = None
    optimal: bool = False
    arm: str = "1"
    diagram: Optional[str] = None
    box: Optional[Any] = None
    workers: int = 1
    output: Optional[str] = None
    format: str = "csv"

    def angle(self, name: str) -> Optional[float]:
        return self.angles.get(name)


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return 0
    try:
        return _seed(int(raw), SEED_ENV)
    except ValueError:
        raise ConfigError(SEED_ENV, f"not an integer: {raw!r}") from None


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _angle(v, key: str, degrees: bool) -> float:
    if not _is_number(v) or not math.isfinite(float(v)):
        raise ConfigError(key, f"expected a finite number of {'degrees' if degrees else 'radians'}, got {v!r}")
    return math.radians(v) if degrees else float(v)


def _int(v, key: str, lo: int, hi: Optional[int] = None) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        if isinstance(v, float) and v.is_integer():
            v = int(v)
        else:
            raise ConfigError(key, f"expected an integer, got {v!r}")
    if v < lo or (hi is not None and v > hi):
        bound = f">= {lo}" if hi is None else f"in [{lo}, {hi}]"
        raise ConfigError(key, f"must be {bound}, got {v}")
    return v


def _seed(v, key: str = "seed") -> int:
    return _int(v, key, 0, MAX_SEED)


def _choice(v, key: str, options) -> str:
    if v not in options:
        raise ConfigError(key, f"expected one of {', '.join(map(str, options))}, got {v!r}")
    return v


def parse_config(document: Union[str, bytes, Mapping[str, Any]]) -> RunConfig:
    """Validate a configuration document and apply defaults.

    Accepts JSON text or an already-decoded mapping. Angles are radians unless
    ``degrees`` is true.
    """
    if isinstance(document, (str, bytes)):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ConfigError("document", f"not valid JSON: {exc.msg} (line {exc.lineno})") from None
    else:
        doc = dict(document)
    if not isinstance(doc, Mapping):
        raise ConfigError("document", "top level must be an object")

    known = {
        "command", "experiment", "c", "model", "local_hv", "n", "seed", "grid", "target",
        "optimal", "arm", "diagram", "box", "workers", "output", "format", "degrees",
        *ANGLE_KEYS,
    }
    for key in doc:
        if key not in known:
            raise ConfigError(str(key), "unknown field")

    if "command" not in doc:
        raise ConfigError("command", "missing")
    command = _choice(doc["command"], "command", COMMANDS)

    degrees = doc.get("degrees", False)
    if not isinstance(degrees, bool):
        raise ConfigError("degrees", f"expected true/false, got {degrees!r}")

    experiment = None
    if doc.get("experiment") is not None:
        try:
            experiment = Experiment.parse(doc["experiment"])
        except ValueError as exc:
            raise ConfigError("experiment", str(exc)) from None

    angles = {k: _angle(doc[k], k, degrees) for k in ANGLE_KEYS if doc.get(k) is not None}

    c = doc.get("c", 1)
    if c not in (0, 1) or isinstance(c, bool):
        raise ConfigError("c", f"input choice must be 0 or 1, got {c!r}")

    model = doc.get("model")
    if model is not None:
        if not isinstance(model, str):
            raise ConfigError("model", f"expected a model name, got {model!r}")
        _choice(model, "model", tuple(BUILTIN_MODELS))
    local_hv = doc.get("local_hv")
    if local_hv is not None:
        if model is not None:
            raise ConfigError("local_hv", "give either model or local_hv, not both")
        if not isinstance(local_hv, Mapping):
            raise ConfigError("local_hv", "expected a table with a 'lambda' list")
        try:
            make_local_hv(local_hv)
        except ModelValidationError as exc:
            raise ConfigError("local_hv", str(exc)) from None

    seed = _seed(doc["seed"]) if "seed" in doc else default_seed()
    target = doc.get("target")
    if target is not None:
        _choice(target, "target", TARGETS)

    arm = doc.get("arm", 1)
    if not (_is_number(arm) or isinstance(arm, str)):
        raise ConfigError("arm", f"expected a positive rational, got {arm!r}")
    try:
        if Fraction(str(arm)) <= 0:
            raise ValueError
    except (ValueError, ZeroDivisionError):
        raise ConfigError("arm", f"expected a positive rational, got {arm!r}") from None

    for key in ("diagram", "output"):
        if doc.get(key) is not None and not isinstance(doc[key], str):
            raise ConfigError(key, "expected a path")
    optimal = doc.get("optimal", False)
    if not isinstance(optimal, bool):
        raise ConfigError("optimal", f"expected true/false, got {optimal!r}")

    return RunConfig(
        command=command,
        experiment=experiment,
        angles=angles,
        c=int(c),
        model=model,
        local_hv=local_hv,
        n=_int(doc.get("n", DEFAULT_N), "n", 1),
        seed=seed,
        grid=_int(doc.get("grid", DEFAULT_GRID), "grid", 1),
        target=target,
        optimal=optimal,
        arm=str(arm),
        diagram=doc.get("diagram"),
        box=doc.get("box"),
        workers=_int(doc.get("workers", 1), "workers", 1),
        output=doc.get("output"),
        format=_choice(doc.get("format", "csv"), "format", FORMATS),
    )
