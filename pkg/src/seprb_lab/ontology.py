"""Beable ontologies ("Locality Models") for the two experiments.

A model is a hidden-variable law, possibly conditioned on settings, plus local
response functions. Each response sees only its own wing's setting and the
hidden variable, so locality holds at the interface unless a subclass
overrides :meth:`BeableModel.conditional_joint`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Hashable, Mapping, Optional, Sequence, Union

import numpy as np

from .core import (
    ANALYTIC_TOL,
    Angle,
    Bernoulli,
    JointDist,
    eprb_joint,
    input_choice,
    seprb_conditional,
)
from .geometry import Experiment

PAST = "past"
FUTURE = "future"

Response = Callable[[Angle, Any], float]


class ModelValidationError(ValueError):
    """A model's law or response table is malformed."""


class UnsupportedModelError(TypeError):
    """Exact operation requested on a model without a finite declared support."""


@dataclass(frozen=True)
class EprbSettings:
    alpha: Angle
    beta: Angle

    def __post_init__(self) -> None:
        object.__setattr__(self, "alpha", Angle(self.alpha))
        object.__setattr__(self, "beta", Angle(self.beta))

    def as_dict(self) -> dict[str, float]:
        return {"alpha": float(self.alpha), "beta": float(self.beta)}


@dataclass(frozen=True)
class SeprbSettings:
    gamma: Angle
    beta: Angle
    c: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "gamma", Angle(self.gamma))
        object.__setattr__(self, "beta", Angle(self.beta))
        object.__setattr__(self, "c", input_choice(self.c))

    def as_dict(self) -> dict[str, float]:
        return {"gamma": float(self.gamma), "beta": float(self.beta), "c": self.c}


Settings = Union[EprbSettings, SeprbSettings]


def make_settings(kind, **values) -> Settings:
    kind = Experiment.parse(kind)
    if kind is Experiment.EPRB:
        return EprbSettings(values["alpha"], values["beta"])
    return SeprbSettings(values["gamma"], values["beta"], values.get("c", 1))


def _normalized_law(raw: Mapping[Hashable, float], where: str) -> dict[Hashable, float]:
    if not isinstance(raw, Mapping):
        raise UnsupportedModelError(f"{where}: law is not a finite table")
    law = {}
    for lam, w in raw.items():
        w = float(w)
        if not math.isfinite(w) or w < -ANALYTIC_TOL:
            raise ModelValidationError(f"{where}: weight {w!r} for {lam!r} is not a probability")
        law[lam] = max(w, 0.0)
    total = sum(law.values())
    if abs(total - 1.0) > ANALYTIC_TOL:
        raise ModelValidationError(f"{where}: law sums to {total!r}, not 1")
    return law


@dataclass(frozen=True, eq=False)
class BeableModel:
    """Hidden-variable ontology for one experiment.

    ``lambda_law(settings)`` returns a finite ``{lambda: weight}`` table. For
    a model whose law ignores settings, ``dependence`` is empty and the model
    claims Independence. ``lambda_sampler`` is an alternative for continuous
    laws; such models can be sampled but not marginalised exactly.
    """

    name: str
    experiment_kind: Experiment
    response_b: Response
    lambda_law: Optional[Callable[[Settings], Mapping[Hashable, float]]] = None
    response_a: Optional[Response] = None
    dependence: frozenset = frozenset()
    claims_locality: bool = True
    lambda_sampler: Optional[Callable[[Settings, np.random.Generator], Any]] = None
    description: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "experiment_kind", Experiment.parse(self.experiment_kind))
        object.__setattr__(self, "dependence", frozenset(self.dependence))
        if not self.dependence <= {PAST, FUTURE}:
            raise ModelValidationError(f"unknown dependence tags {set(self.dependence)}")
        if self.experiment_kind is Experiment.EPRB and self.response_a is None:
            raise ModelValidationError("EPRB models need a response for wing A")
        if self.lambda_law is None and self.lambda_sampler is None:
            raise ModelValidationError("model needs a lambda law or a sampler")

    @property
    def claims_independence(self) -> bool:
        return not self.dependence

    @property
    def exact(self) -> bool:
        return self.lambda_law is not None

    def check_settings(self, settings: Settings) -> Settings:
        want = EprbSettings if self.experiment_kind is Experiment.EPRB else SeprbSettings
        if not isinstance(settings, want):
            raise TypeError(f"{self.name} is an {self.experiment_kind.value} model; got {type(settings).__name__}")
        return settings

    def law(self, settings: Settings) -> dict[Hashable, float]:
        if self.lambda_law is None:
            raise UnsupportedModelError(f"{self.name} has no finite declared lambda support")
        return _normalized_law(self.lambda_law(self.check_settings(settings)), self.name)

    def conditional_joint(self, settings: Settings, lam) -> np.ndarray:
        """Outcome distribution given ``lam``.

        EPRB: 2x2 array ``[a][b]``. SEPRB: ``[P(B=0), P(B=1)]``.
        """
        pb = float(self.response_b(settings.beta, lam))
        if self.experiment_kind is Experiment.SEPRB:
            return np.array([1.0 - pb, pb])
        pa = float(self.response_a(settings.alpha, lam))
        return np.outer([1.0 - pa, pa], [1.0 - pb, pb])

    def sample_lambda(self, settings: Settings, rng: np.random.Generator):
        if self.lambda_law is None:
            return self.lambda_sampler(self.check_settings(settings), rng)
        law = self.law(settings)
        lams = list(law)
        idx = rng.choice(len(lams), p=np.fromiter(law.values(), float))
        return lams[int(idx)]


def _response_from_spec(item, wing: str, where: str) -> Response:
    if callable(item):
        return lambda setting, lam, f=item: f(setting)
    if isinstance(item, (int, float)) and not isinstance(item, bool):
        p = float(item)
        if not 0.0 <= p <= 1.0:
            raise ModelValidationError(f"{where}.{wing}: probability {p!r} outside [0, 1]")
        return lambda setting, lam, p=p: p
    if isinstance(item, Mapping) and len(item) == 1:
        (key, value), = item.items()
        if key == "p1":
            return _response_from_spec(value, wing, where)
        try:
            theta = Angle(value)
        except (TypeError, ValueError) as exc:
            raise ModelValidationError(f"{where}.{wing}.{key}: {exc}") from exc
        if key == "malus":
            return lambda setting, lam, th=theta: math.cos(setting - th) ** 2
        if key == "threshold":
            return lambda setting, lam, th=theta: 1.0 if math.cos(setting - th) ** 2 >= 0.5 else 0.0
    raise ModelValidationError(
        f"{where}.{wing}: response must be a probability, a callable, or one of "
        "{'p1': x}, {'malus': angle}, {'threshold': angle}"
    )


def make_local_hv(spec: Mapping[str, Any], name: str = "local-hv") -> BeableModel:
    """Settings-independent finite hidden-variable model from a response table.

    ``spec["lambda"]`` is a list of entries ``{"weight": w, "a": r, "b": r}``
    where each response ``r`` is a constant probability of outcome 1, a
    one-argument callable of the wing's setting, ``{"malus": theta}`` or
    ``{"threshold": theta}``. The hidden variable is the entry index.
    """
    try:
        entries = list(spec["lambda"])
    except (KeyError, TypeError) as exc:
        raise ModelValidationError("local-HV spec needs a 'lambda' list") from exc
    if not entries:
        raise ModelValidationError("local-HV spec has an empty lambda support")
    if "dependence" in spec and spec["dependence"]:
        raise ModelValidationError("local-HV laws must not depend on settings")
    weights, ra, rb = {}, [], []
    for k, entry in enumerate(entries):
        where = f"lambda[{k}]"
        if not isinstance(entry, Mapping):
            raise ModelValidationError(f"{where} must be a table")
        try:
            weights[k] = float(entry["weight"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelValidationError(f"{where}.weight missing or not a number") from exc
        try:
            ra.append(_response_from_spec(entry["a"], "a", where))
            rb.append(_response_from_spec(entry["b"], "b", where))
        except KeyError as exc:
            raise ModelValidationError(f"{where} is missing response {exc}") from exc
    law = _normalized_law(weights, name)
    return BeableModel(
        name=name,
        experiment_kind=Experiment.EPRB,
        lambda_law=lambda settings, law=law: law,
        response_a=lambda setting, lam: ra[lam](setting, lam),
        response_b=lambda setting, lam: rb[lam](setting, lam),
        dependence=frozenset(),
        description=spec.get("description", "finite local hidden-variable model"),
    )


def shared_coin_hv() -> BeableModel:
    spec = {"lambda": [{"weight": 0.5, "a": 0.0, "b": 0.0}, {"weight": 0.5, "a": 1.0, "b": 1.0}]}
    return make_local_hv(spec, name="shared-coin")


def polarization_hv(points: int = 360) -> BeableModel:
    """Hidden polarization on a uniform grid; each wing transmits iff cos^2 >= 1/2."""
    entries = [
        {"weight": 1.0 / points, "a": {"threshold": k * math.pi / points}, "b": {"threshold": k * math.pi / points}}
        for k in range(points)
    ]
    return make_local_hv({"lambda": entries}, name="polarization-hv")


def make_cbeable_seprb() -> BeableModel:
    """The photon between the cubes carries C's setting and the injection choice."""
    def law(s: SeprbSettings):
        return {(s.gamma, s.c): 1.0}

    def response_b(beta, lam):
        gamma, c = lam
        d = beta - gamma
        return math.cos(d) ** 2 if c == 1 else math.sin(d) ** 2

    return BeableModel(
        name="cbeable-seprb",
        experiment_kind=Experiment.SEPRB,
        lambda_law=law,
        response_b=response_b,
        dependence=frozenset({PAST}),
        description="C-beable carries (gamma, c) from C to B",
    )


def make_retro_eprb() -> BeableModel:
    """Pair beables pre-commit the outcome pair, drawn with knowledge of both future settings.

    The hidden variable is the committed pair ``(a, b)``; each wing reads its
    own bit, so the distant setting is screened off, while the law over pairs
    depends on ``(alpha, beta)``.
    """
    def law(s: EprbSettings):
        joint = eprb_joint(s.alpha, s.beta)
        return {(a, b): joint.p[a][b] for a in (0, 1) for b in (0, 1)}

    return BeableModel(
        name="retro-eprb",
        experiment_kind=Experiment.EPRB,
        lambda_law=law,
        response_a=lambda alpha, lam: float(lam[0]),
        response_b=lambda beta, lam: float(lam[1]),
        dependence=frozenset({FUTURE}),
        description="source beables correlated with both future settings",
    )


def make_timesym_seprb() -> BeableModel:
    """C-beable plus a B-beable that pre-commits B's outcome from the future setting."""
    def law(s: SeprbSettings):
        p1 = seprb_conditional(s.gamma, s.beta, s.c).p1
        return {(s.gamma, s.c, 1): p1, (s.gamma, s.c, 0): 1.0 - p1}

    return BeableModel(
        name="timesym-seprb",
        experiment_kind=Experiment.SEPRB,
        lambda_law=law,
        response_b=lambda beta, lam: float(lam[2]),
        dependence=frozenset({PAST, FUTURE}),
        description="C-beable (gamma, c) and B-beable b* fixed by beta",
    )


class _QuantumEprb(BeableModel):
    def conditional_joint(self, settings, lam):
        return eprb_joint(settings.alpha, settings.beta).as_array()


def quantum_eprb() -> BeableModel:
    """Reference predictor with a trivial hidden variable and a non-factorising joint.

    This is the action-at-a-distance reading: Independence holds, Locality does not.
    """
    return _QuantumEprb(
        name="quantum-eprb",
        experiment_kind=Experiment.EPRB,
        lambda_law=lambda s: {None: 1.0},
        response_a=lambda alpha, lam: 0.5,
        response_b=lambda beta, lam: 0.5,
        dependence=frozenset(),
        claims_locality=False,
        description="orthodox quantum joint, no mediating beables",
    )


def continuous_polarization_hv() -> BeableModel:
    """Like :func:`polarization_hv` but with a continuous uniform hidden angle (sample-only)."""
    def thresh(setting, lam):
        return 1.0 if math.cos(setting - lam) ** 2 >= 0.5 else 0.0

    return BeableModel(
        name="continuous-polarization-hv",
        experiment_kind=Experiment.EPRB,
        lambda_sampler=lambda s, rng: Angle(rng.uniform(0.0, math.pi)),
        response_a=thresh,
        response_b=thresh,
        dependence=frozenset(),
    )


BUILTIN_MODELS: dict[str, Callable[[], BeableModel]] = {
    "retro-eprb": make_retro_eprb,
    "cbeable-seprb": make_cbeable_seprb,
    "timesym-seprb": make_timesym_seprb,
    "shared-coin": shared_coin_hv,
    "polarization-hv": polarization_hv,
    "quantum-eprb": quantum_eprb,
}


def builtin_model(name: str) -> BeableModel:
    try:
        return BUILTIN_MODELS[name]()
    except KeyError:
        raise KeyError(f"unknown model {name!r}; known: {', '.join(sorted(BUILTIN_MODELS))}") from None


def model_joint(m: BeableModel, settings: Settings) -> Union[JointDist, Bernoulli]:
    """Exact outcome distribution, marginalised over the finite hidden-variable law."""
    law = m.law(settings)
    shape = (2, 2) if m.experiment_kind is Experiment.EPRB else (2,)
    acc = np.zeros(shape)
    for lam, w in law.items():
        if w:
            acc += w * m.conditional_joint(settings, lam)
    if m.experiment_kind is Experiment.EPRB:
        return JointDist.from_array(acc)
    return Bernoulli(acc[1])


# -- sampling ------------------------------------------------------------------


def substream(seed: int, index: int) -> np.random.Generator:
    """Independent generator for chunk/worker ``index`` under master ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(index),))))


def _lineage(stream) -> tuple:
    if isinstance(stream, (int, np.integer)):
        return (int(stream),)
    seq = getattr(stream.bit_generator, "seed_seq", None)
    if seq is None or not hasattr(seq, "entropy"):
        return ()
    return (seq.entropy, tuple(seq.spawn_key))


@dataclass(frozen=True)
class RunRecord:
    model: str
    settings: Settings
    lam: Any
    outcomes: tuple[int, int]
    lineage: tuple = field(default=())


def sample_run(m: BeableModel, settings: Settings, stream) -> RunRecord:
    """One run: draw the hidden variable, then each outcome from its response.

    ``stream`` is a ``numpy.random.Generator`` or an integer seed.
    """
    rng = np.random.default_rng(stream) if isinstance(stream, (int, np.integer)) else stream
    lineage = _lineage(stream)
    m.check_settings(settings)
    lam = m.sample_lambda(settings, rng)
    joint = m.conditional_joint(settings, lam).ravel()
    cell = int(np.searchsorted(np.cumsum(joint), rng.random(), side="right"))
    cell = min(cell, joint.size - 1)
    if m.experiment_kind is Experiment.EPRB:
        outcomes = (cell // 2, cell % 2)
    else:
        outcomes = (settings.c, cell)
    return RunRecord(m.name, settings, lam, outcomes, lineage)


def sample_outcomes(m: BeableModel, settings: Settings, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised runs. Returns ``(first, b)`` where ``first`` is A (EPRB) or C (SEPRB)."""
    m.check_settings(settings)
    if m.lambda_law is not None:
        law = m.law(settings)
        lams = list(law)
        weights = np.fromiter(law.values(), float)
        tables = np.array([m.conditional_joint(settings, lam).ravel() for lam in lams])
        idx = rng.choice(len(lams), size=n, p=weights / weights.sum())
        cum = np.cumsum(tables, axis=1)[idx]
    else:
        cum = np.array(
            [np.cumsum(m.conditional_joint(settings, m.lambda_sampler(settings, rng)).ravel()) for _ in range(n)]
        ).reshape(n, -1)
    u = rng.random(n)
    cell = np.minimum((u[:, None] >= cum).sum(axis=1), cum.shape[1] - 1)
    if m.experiment_kind is Experiment.EPRB:
        return cell // 2, cell % 2
    return np.full(n, settings.c), cell


def law_support(m: BeableModel, settings_list: Sequence[Settings]) -> list:
    """Union of positive-weight hidden-variable values across ``settings_list``."""
    seen: dict = {}
    for s in settings_list:
        for lam, w in m.law(s).items():
            if w > 0:
                seen.setdefault(lam, None)
    return list(seen)

