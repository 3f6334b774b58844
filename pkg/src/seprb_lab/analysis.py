"""Cross-experiment analyses: signalling, post-selection, Monte Carlo, sideways scans."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .core import Angle, angle_grid, eprb_joint, seprb_conditional
from .geometry import DeviceKind, Experiment, SpacetimeDiagram
from .ontology import BeableModel, Settings, model_joint, sample_outcomes, substream

#: fixed chunking, so results never depend on how many workers ran
CHUNK_SIZE = 1 << 16
Z95 = 1.959963984540054
SEPARABLE_TOL = 1e-9

TARGETS = ("A=B", "B=C", "A=1", "B=1")


class ScanError(ValueError):
    """The requested scan direction does not leave both polarizers unresolved."""


def signalling_margin(experiment, settings: dict, grid: int = 64) -> float:
    """How far a controllable input moves the marginal at B.

    SEPRB: ``|Pr(B=1 | C=1) - Pr(B=1 | C=0)|``. EPRB: the spread of
    ``Pr(B=1 | alpha)`` over a ``grid``-point sweep of alpha at fixed beta.
    """
    kind = Experiment.parse(experiment)
    beta = Angle(settings["beta"])
    if kind is Experiment.SEPRB:
        gamma = Angle(settings["gamma"])
        return abs(seprb_conditional(gamma, beta, 1).p1 - seprb_conditional(gamma, beta, 0).p1)
    marginals = [eprb_joint(alpha, beta).p_b1 for alpha in angle_grid(grid)]
    return max(marginals) - min(marginals)


def postselected_equivalence(gamma: float, beta: float) -> tuple[float, float]:
    """``(Pr_SEPRB(B=C), Pr_EPRB(B=A | A=C))`` with the pair polarizer at ``alpha = gamma``.

    Both sides average over the two values of the bit being matched, each
    with weight 1/2.
    """
    p_seprb = 0.5 * sum(seprb_conditional(gamma, beta, c).prob(c) for c in (0, 1))
    joint = eprb_joint(gamma, beta)
    # keep only runs with A == c, then ask for B == c
    p_eprb = 0.5 * sum(joint[c, c] / (joint[c, 0] + joint[c, 1]) for c in (0, 1))
    return p_seprb, p_eprb


@dataclass(frozen=True)
class EpistemicKernel:
    scan_axis: str
    labels: tuple[str, str]
    kernel: Callable[[float, float], float]
    grid: tuple[float, ...]
    values: np.ndarray
    separable: bool

    def __call__(self, s1: float, s2: float) -> float:
        return self.kernel(s1, s2)


def is_separable(values: np.ndarray, tol: float = SEPARABLE_TOL) -> bool:
    """Rank-1 test: the second singular value vanishes."""
    sv = np.linalg.svd(np.asarray(values, dtype=float), compute_uv=False)
    return bool(len(sv) < 2 or sv[1] <= tol)


def kernel_on_grid(kernel: Callable[[float, float], float], grid: Sequence[float]) -> np.ndarray:
    return np.array([[kernel(x, y) for y in grid] for x in grid])


def epistemic_scan(d: SpacetimeDiagram, axis: str, grid: int = 8) -> EpistemicKernel:
    """Predictive kernel of an observer who has passed the correlating vertex.

    The observer sweeps the diagram along ``axis`` ("timeward" = increasing t,
    "sideways" = increasing x). The scan applies only if the mirror/source is
    reached strictly before both polarizing cubes; the kernel is then the
    agreement probability of the two unresolved cubes as a function of their
    settings.
    """
    if axis not in ("timeward", "sideways"):
        raise ScanError(f"unknown scan axis {axis!r}")
    coord = 1 if axis == "timeward" else 0
    vertex_kind = DeviceKind.SOURCE if d.kind is Experiment.EPRB else DeviceKind.MIRROR
    vertices = d.devices_of(vertex_kind)
    cubes = d.devices_of(DeviceKind.POLARIZING_CUBE)
    if len(vertices) != 1 or len(cubes) != 2:
        raise ScanError("scan needs one correlating vertex and two polarizing cubes")
    v = vertices[0].position[coord]
    if not all(c.position[coord] > v for c in cubes):
        raise ScanError(f"{axis} scan of {d.kind.value}: a polarizer is met before the {vertex_kind.value.lower()}")

    if d.kind is Experiment.SEPRB:
        labels = ("beta", "gamma")

        def kernel(beta, gamma):
            return seprb_conditional(gamma, beta, 1).p1
    else:
        labels = ("alpha", "beta")

        def kernel(alpha, beta):
            return eprb_joint(alpha, beta).p_equal

    pts = tuple(float(a) for a in angle_grid(grid))
    values = kernel_on_grid(kernel, pts)
    return EpistemicKernel(axis, labels, kernel, pts, values, is_separable(values))


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float
    n: int
    ci95: tuple[float, float]
    seed: int

    def as_dict(self) -> dict:
        return {"value": self.value, "stderr": self.stderr, "n": self.n, "ci95": list(self.ci95), "seed": self.seed}


def _event(target: str, first: np.ndarray, b: np.ndarray) -> np.ndarray:
    if target in ("A=B", "B=C"):
        return first == b
    if target == "A=1":
        return first == 1
    if target == "B=1":
        return b == 1
    raise ValueError(f"unknown target {target!r}; expected one of {TARGETS}")


def _chunk_hits(m: BeableModel, settings: Settings, target: str, seed: int, index: int, size: int) -> int:
    first, b = sample_outcomes(m, settings, size, substream(seed, index))
    return int(_event(target, first, b).sum())


def default_target(m: BeableModel) -> str:
    return "A=B" if m.experiment_kind is Experiment.EPRB else "B=C"


def mc_estimate(
    m: BeableModel,
    settings: Settings,
    target: Optional[str] = None,
    n: int = 100_000,
    seed: int = 0,
    workers: int = 1,
) -> Estimate:
    """Monte Carlo frequency of ``target`` with a normal-approximation 95% interval.

    Sample ``k`` lives in chunk ``k // CHUNK_SIZE``, whose generator is derived
    from ``(seed, chunk)``. Any ``workers`` value gives bit-identical results.
    """
    if n < 100:
        raise ValueError("mc_estimate needs n >= 100")
    target = target or default_target(m)
    if m.experiment_kind is Experiment.SEPRB and target == "A=B":
        raise ValueError("SEPRB has no A outcome")
    if m.experiment_kind is Experiment.EPRB and target == "B=C":
        raise ValueError("EPRB has no input choice C")
    sizes = [min(CHUNK_SIZE, n - start) for start in range(0, n, CHUNK_SIZE)]
    jobs = [(m, settings, target, seed, k, size) for k, size in enumerate(sizes)]
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            hits = list(pool.map(lambda job: _chunk_hits(*job), jobs))
    else:
        hits = [_chunk_hits(*job) for job in jobs]
    p = sum(hits) / n
    se = math.sqrt(p * (1.0 - p) / n)
    lo, hi = max(0.0, p - Z95 * se), min(1.0, p + Z95 * se)
    return Estimate(p, se, n, (lo, hi), seed)


def exact_target(m: BeableModel, settings: Settings, target: Optional[str] = None) -> float:
    """Exact probability of ``target`` from the marginalised model."""
    target = target or default_target(m)
    dist = model_joint(m, settings)
    if m.experiment_kind is Experiment.EPRB:
        return {"A=B": dist.p_equal, "A=1": dist.p_a1, "B=1": dist.p_b1}[target]
    if target == "B=1":
        return dist.p1
    if target == "B=C":
        return dist.prob(settings.c)
    raise ValueError(f"target {target!r} undefined for SEPRB")
