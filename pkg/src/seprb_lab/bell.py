"""CHSH machinery and the Independence / Locality audits.

Scenario: two settings and two outcomes per wing. Outcomes map to +-1 and the
correlator is ``E = Pr(equal) - Pr(unequal)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .core import ANALYTIC_TOL, PI, Angle, JointDist, angle_grid, correlation, eprb_joint, quantum_correlation
from .geometry import Experiment
from .ontology import (
    BeableModel,
    EprbSettings,
    SeprbSettings,
    Settings,
    law_support,
    model_joint,
    substream,
)
from .simplex import FEAS_TOL, feasible_point

LOCAL_BOUND = 2
TSIRELSON = 2.0 * math.sqrt(2.0)
BOUND_TOL = 1e-9
NO_SIGNALLING_TOL = 1e-9

#: the 8 sign patterns with an odd number of minus signs, in a fixed order
SIGN_VARIANTS: tuple[tuple[int, int, int, int], ...] = tuple(
    s for s in itertools.product((1, -1), repeat=4) if s.count(-1) % 2 == 1
)


class SignallingBoxError(ValueError):
    """Membership is only defined for no-signalling boxes."""


@dataclass(frozen=True)
class CorrelationTable:
    """``E[i][j]`` is the correlator at ``(a_i, b_j)``; settings may be unknown."""

    E: tuple[tuple[float, float], tuple[float, float]]
    settings: Optional[tuple[Angle, Angle, Angle, Angle]] = None

    def __post_init__(self) -> None:
        arr = np.asarray(self.E, dtype=float)
        if arr.shape != (2, 2):
            raise ValueError(f"correlation table must be 2x2, got {arr.shape}")
        if np.any(np.abs(arr) > 1 + ANALYTIC_TOL):
            raise ValueError(f"correlators outside [-1, 1]: {arr.tolist()}")
        object.__setattr__(self, "E", tuple(tuple(float(v) for v in row) for row in np.clip(arr, -1, 1)))
        if self.settings is not None:
            object.__setattr__(self, "settings", tuple(Angle(s) for s in self.settings))

    def flat(self) -> tuple[float, float, float, float]:
        return (self.E[0][0], self.E[0][1], self.E[1][0], self.E[1][1])


@dataclass(frozen=True)
class ChshReport:
    values: tuple[float, ...]
    max_abs: float
    local_bound: float = LOCAL_BOUND
    violated: bool = False
    best_variant: tuple[int, int, int, int] = SIGN_VARIANTS[0]

    def as_dict(self) -> dict:
        return {
            "values": list(self.values),
            "max_abs": self.max_abs,
            "local_bound": self.local_bound,
            "violated": self.violated,
            "best_variant": list(self.best_variant),
        }


def chsh(t: CorrelationTable) -> ChshReport:
    e = t.flat()
    values = tuple(sum(s * x for s, x in zip(signs, e)) for signs in SIGN_VARIANTS)
    k = max(range(len(values)), key=lambda i: abs(values[i]))
    max_abs = abs(values[k])
    return ChshReport(values, max_abs, LOCAL_BOUND, max_abs > LOCAL_BOUND + BOUND_TOL, SIGN_VARIANTS[k])


def quantum_table(a1, a2, b1, b2) -> CorrelationTable:
    E = [[correlation(eprb_joint(a, b)) for b in (b1, b2)] for a in (a1, a2)]
    return CorrelationTable(E, (a1, a2, b1, b2))


def model_table(m: BeableModel, a1, a2, b1, b2) -> CorrelationTable:
    if m.experiment_kind is not Experiment.EPRB:
        raise ValueError("CHSH tables need a two-wing (EPRB) model")
    E = [[correlation(model_joint(m, EprbSettings(a, b))) for b in (b1, b2)] for a in (a1, a2)]
    return CorrelationTable(E, (a1, a2, b1, b2))


# -- deterministic strategies --------------------------------------------------

STRATEGIES: tuple[tuple[int, int, int, int], ...] = tuple(itertools.product((0, 1), repeat=4))


def strategy_correlators(strategy: Sequence[int]) -> tuple[int, int, int, int]:
    """Integer correlators of the deterministic strategy ``(a(a1), a(a2), b(b1), b(b2))``."""
    a1, a2, b1, b2 = strategy
    pm = lambda bit: 1 - 2 * bit  # noqa: E731
    return (pm(a1) * pm(b1), pm(a1) * pm(b2), pm(a2) * pm(b1), pm(a2) * pm(b2))


def strategy_chsh(strategy: Sequence[int]) -> int:
    e = strategy_correlators(strategy)
    return max(abs(sum(s * x for s, x in zip(signs, e))) for signs in SIGN_VARIANTS)


def local_deterministic_bound() -> int:
    """Largest CHSH value over the 16 deterministic local strategies (integer arithmetic)."""
    return max(strategy_chsh(s) for s in STRATEGIES)


# -- quantum optimum -----------------------------------------------------------


def _chsh_grid_values(a2, b1, b2) -> np.ndarray:
    """max |S| with a1 fixed at 0, broadcast over the three remaining axes."""
    e11 = quantum_correlation(0.0, b1)
    e12 = quantum_correlation(0.0, b2)
    e21 = quantum_correlation(a2, b1)
    e22 = quantum_correlation(a2, b2)
    best = None
    for s in SIGN_VARIANTS:
        v = np.abs(s[0] * e11 + s[1] * e12 + s[2] * e21 + s[3] * e22)
        best = v if best is None else np.maximum(best, v)
    return best


def quantum_chsh_optimum(grid_step: float = PI / 64, refine: bool = True) -> tuple[tuple[Angle, Angle, Angle, Angle], float]:
    """Settings ``(a, a', b, b')`` maximising CHSH for the pair correlations.

    CHSH depends only on angle differences, so ``a`` is pinned to 0; that is
    also the lexicographically smallest choice among rotated optima. Ties on
    the grid (within 1e-12) go to the smallest tuple; a Nelder-Mead polish
    then runs from the grid winner and is kept only if it strictly improves.
    """
    if not grid_step > 0:
        raise ValueError("grid_step must be positive")
    axis = np.arange(0.0, PI, float(grid_step))
    vals = _chsh_grid_values(axis[:, None, None], axis[None, :, None], axis[None, None, :])
    top = float(vals.max())
    i, j, k = np.argwhere(vals >= top - 1e-12)[0]
    settings = (0.0, float(axis[i]), float(axis[j]), float(axis[k]))
    value = chsh(quantum_table(*settings)).max_abs
    if refine:
        res = minimize(
            lambda x: -float(_chsh_grid_values(x[0], x[1], x[2])),
            np.array(settings[1:]),
            method="Nelder-Mead",
            options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 4000},
        )
        cand = (0.0, *map(float, res.x))
        cand_value = chsh(quantum_table(*cand)).max_abs
        if cand_value > value + 1e-12:
            settings, value = cand, cand_value
    return tuple(Angle(s) for s in settings), value


# -- boxes and the local polytope ----------------------------------------------


@dataclass(frozen=True)
class Box:
    """Four joint tables ``P(a, b | i, j)`` for setting indices ``i, j`` in {0, 1}."""

    tables: tuple[tuple[JointDist, JointDist], tuple[JointDist, JointDist]]

    @classmethod
    def from_array(cls, arr) -> "Box":
        """``arr[i, j, a, b]``"""
        arr = np.asarray(arr, dtype=float).reshape(2, 2, 2, 2)
        return cls(tuple(tuple(JointDist.from_array(arr[i, j]) for j in (0, 1)) for i in (0, 1)))

    def as_array(self) -> np.ndarray:
        return np.array([[self.tables[i][j].as_array() for j in (0, 1)] for i in (0, 1)])

    def signalling(self) -> float:
        """Largest change of a local marginal under a change of the remote setting."""
        arr = self.as_array()
        pa = arr.sum(axis=3)  # [i, j, a]
        pb = arr.sum(axis=2)  # [i, j, b]
        return float(max(np.abs(pa[:, 0] - pa[:, 1]).max(), np.abs(pb[0] - pb[1]).max()))

    @property
    def no_signalling(self) -> bool:
        return self.signalling() <= NO_SIGNALLING_TOL

    def correlation_table(self) -> CorrelationTable:
        return CorrelationTable([[correlation(self.tables[i][j]) for j in (0, 1)] for i in (0, 1)])

    def mix(self, other: "Box", w: float) -> "Box":
        """``(1 - w) * self + w * other``"""
        return Box.from_array((1.0 - w) * self.as_array() + w * other.as_array())


def deterministic_box(strategy: Sequence[int]) -> Box:
    a1, a2, b1, b2 = strategy
    arr = np.zeros((2, 2, 2, 2))
    for i, a in enumerate((a1, a2)):
        for j, b in enumerate((b1, b2)):
            arr[i, j, a, b] = 1.0
    return Box.from_array(arr)


def pr_box(variant: int = 0) -> Box:
    """Popescu-Rohrlich box: outcomes agree except at ``(i, j) == (1, 1)`` (variant 0).

    ``variant`` in 0..7 relabels outcomes/settings to reach each CHSH facet.
    """
    x, y, z = (variant >> 2) & 1, (variant >> 1) & 1, variant & 1
    arr = np.zeros((2, 2, 2, 2))
    for i, j, a in itertools.product((0, 1), repeat=3):
        b = a ^ ((i ^ x) & (j ^ y)) ^ z
        arr[i, j, a, b] = 0.5
    return Box.from_array(arr)


def white_noise_box() -> Box:
    return Box.from_array(np.full((2, 2, 2, 2), 0.25))


def quantum_box(a1, a2, b1, b2) -> Box:
    return Box(tuple(tuple(eprb_joint(a, b) for b in (b1, b2)) for a in (a1, a2)))


def model_box(m: BeableModel, a1, a2, b1, b2) -> Box:
    return Box(tuple(tuple(model_joint(m, EprbSettings(a, b)) for b in (b1, b2)) for a in (a1, a2)))


def _box_parameters(arr: np.ndarray) -> np.ndarray:
    """The 8 free parameters of a no-signalling box plus the normalisation."""
    pa1 = [arr[i, 0, 1, :].sum() for i in (0, 1)]
    pb1 = [arr[0, j, :, 1].sum() for j in (0, 1)]
    p11 = [arr[i, j, 1, 1] for i in (0, 1) for j in (0, 1)]
    return np.array(pa1 + pb1 + p11 + [arr.sum() / 4.0])


_VERTEX_MATRIX = np.column_stack([_box_parameters(deterministic_box(s).as_array()) for s in STRATEGIES])


@dataclass(frozen=True)
class PolytopeCertificate:
    member: bool
    weights: Optional[tuple[float, ...]]
    violated_facet: Optional[tuple[tuple[int, int, int, int], float]]
    facet_member: bool

    @property
    def consistent(self) -> bool:
        """The LP decision and the CHSH-facet criterion agree."""
        return self.member == self.facet_member

    def as_dict(self) -> dict:
        return {
            "member": self.member,
            "facet_member": self.facet_member,
            "weights": None if self.weights is None else list(self.weights),
            "violated_facet": None
            if self.violated_facet is None
            else {"signs": list(self.violated_facet[0]), "value": self.violated_facet[1]},
        }


def polytope_membership(b: Box) -> PolytopeCertificate:
    """Decide whether ``b`` is a mixture of the 16 deterministic local boxes."""
    if not b.no_signalling:
        raise SignallingBoxError(f"box signals (marginal shift {b.signalling():.3g})")
    arr = b.as_array()
    w = feasible_point(_VERTEX_MATRIX, _box_parameters(arr), tol=FEAS_TOL)
    member = w is not None
    if member:
        w = w / w.sum()
        recon = np.tensordot(w, np.array([deterministic_box(s).as_array() for s in STRATEGIES]), axes=1)
        if np.max(np.abs(recon - arr)) > FEAS_TOL:
            member = False
            w = None
    report = chsh(b.correlation_table())
    facet_member = not report.violated
    facet = None
    if report.violated:
        facet = (report.best_variant, report.max_abs)
    return PolytopeCertificate(member, None if w is None else tuple(float(x) for x in w), facet, facet_member)


# -- audits --------------------------------------------------------------------


@dataclass(frozen=True)
class LocalityReport:
    passed: bool
    checked: int
    witness: Optional[dict] = None

    def as_dict(self) -> dict:
        return {"passed": self.passed, "checked": self.checked, "witness": self.witness}


def default_settings_grid(m: BeableModel, n: int = 8) -> list[Settings]:
    angles = angle_grid(n)
    if m.experiment_kind is Experiment.EPRB:
        return [EprbSettings(a, b) for a in angles for b in angles]
    return [SeprbSettings(g, b, c) for g in angles for b in angles for c in (0, 1)]


def _witness(reason, lam, *settings) -> dict:
    return {"reason": reason, "lambda": repr(lam), "settings": [s.as_dict() for s in settings]}


def locality_check(m: BeableModel, settings_grid: Optional[Iterable[Settings]] = None, tol: float = ANALYTIC_TOL) -> LocalityReport:
    """Exact screening-off audit over a settings grid.

    For every settings tuple and every hidden value with positive weight the
    conditional joint must factorise, and each wing's conditional marginal
    must not move when only the remote setting changes.
    """
    grid = list(settings_grid) if settings_grid is not None else default_settings_grid(m)
    eprb = m.experiment_kind is Experiment.EPRB
    # (lambda, own setting) -> (settings where first seen, marginal)
    seen_a: dict = {}
    seen_b: dict = {}
    checked = 0
    for s in grid:
        for lam, w in m.law(s).items():
            if w <= 0:
                continue
            checked += 1
            J = np.asarray(m.conditional_joint(s, lam), dtype=float)
            if eprb:
                pa, pb = J.sum(axis=1), J.sum(axis=0)
                if np.max(np.abs(J - np.outer(pa, pb))) > tol:
                    return LocalityReport(False, checked, _witness("joint does not factorise", lam, s))
                key_a = (lam, s.alpha)
                if key_a in seen_a and np.max(np.abs(seen_a[key_a][1] - pa)) > tol:
                    return LocalityReport(False, checked, _witness("A depends on remote setting", lam, seen_a[key_a][0], s))
                seen_a.setdefault(key_a, (s, pa))
            else:
                pb = J
            key_b = (lam, s.beta)
            if key_b in seen_b and np.max(np.abs(seen_b[key_b][1] - pb)) > tol:
                return LocalityReport(False, checked, _witness("B depends on remote setting", lam, seen_b[key_b][0], s))
            seen_b.setdefault(key_b, (s, pb))
    return LocalityReport(True, checked)


@dataclass(frozen=True)
class IndependenceReport:
    mode: str
    tv: tuple[tuple[int, int, float], ...]
    threshold: float
    independent: bool
    n: Optional[int] = None

    @property
    def max_tv(self) -> float:
        return max((t for _, _, t in self.tv), default=0.0)

    def as_dict(self) -> dict:
        return {
            "mode": self.mode,
            "n": self.n,
            "threshold": self.threshold,
            "independent": self.independent,
            "max_tv": self.max_tv,
            "pairs": [{"i": i, "j": j, "tv": t} for i, j, t in self.tv],
        }


def total_variation(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def empirical_threshold(n: int, support_size: int, alpha: float = 0.01) -> float:
    """Union-bound Hoeffding threshold for a plug-in TV estimate at significance ``alpha``."""
    return 3.0 * math.sqrt(math.log(2.0 * support_size / alpha) / (2.0 * n))


def independence_test(
    m: BeableModel,
    settings_list: Sequence[Settings],
    n: int = 10_000,
    mode: str = "exact",
    seed: int = 0,
) -> IndependenceReport:
    """Does the hidden-variable law move with the settings?

    ``mode="exact"`` compares the declared laws directly (dependent iff some
    TV exceeds 1e-12). ``mode="empirical"`` draws ``n`` hidden values per
    settings tuple and compares plug-in TV estimates to
    :func:`empirical_threshold`.
    """
    settings_list = list(settings_list)
    if len(settings_list) < 2:
        raise ValueError("independence_test needs at least two settings tuples")
    if n < 1000:
        raise ValueError("independence_test needs n >= 1000")
    pairs = list(itertools.combinations(range(len(settings_list)), 2))
    if mode == "exact":
        laws = [m.law(s) for s in settings_list]
        tv = tuple((i, j, total_variation(laws[i], laws[j])) for i, j in pairs)
        threshold = ANALYTIC_TOL
    elif mode == "empirical":
        freqs = []
        for k, s in enumerate(settings_list):
            rng = substream(seed, k)
            if m.lambda_law is not None:
                law = m.law(s)
                lams = list(law)
                idx = rng.choice(len(lams), size=n, p=np.fromiter(law.values(), float))
                counts = np.bincount(idx, minlength=len(lams))
                freqs.append({lams[i]: counts[i] / n for i in range(len(lams)) if counts[i]})
            else:
                f: dict = {}
                for _ in range(n):
                    lam = m.lambda_sampler(s, rng)
                    f[lam] = f.get(lam, 0.0) + 1.0 / n
                freqs.append(f)
        if m.lambda_law is not None:
            k_support = lambda_support_size(m, settings_list)
        else:
            k_support = len(set().union(*freqs))
        tv = tuple((i, j, total_variation(freqs[i], freqs[j])) for i, j in pairs)
        threshold = empirical_threshold(n, max(k_support, 1))
    else:
        raise ValueError(f"mode must be 'exact' or 'empirical', got {mode!r}")
    independent = all(t <= threshold for _, _, t in tv)
    return IndependenceReport(mode, tv, threshold, independent, n if mode == "empirical" else None)


def lambda_support_size(m: BeableModel, settings_list: Sequence[Settings]) -> int:
    return len(law_support(m, settings_list))
