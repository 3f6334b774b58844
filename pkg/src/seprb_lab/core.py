"""Closed-form predictions for the photon-pair and single-photon experiments.

Everything here is a pure function of polarizer orientations. Orientations are
pi-periodic, so :class:`Angle` stores the representative in ``[0, pi)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

#: round-off budget for closed-form identities
ANALYTIC_TOL = 1e-12

PI = math.pi


class InvalidDistributionError(ValueError):
    """A probability table or Bernoulli parameter failed validation."""


class Angle(float):
    """Polarizer orientation in radians, reduced modulo pi.

    >>> Angle(math.pi + 0.25) == Angle(0.25)
    True
    """

    __slots__ = ()

    def __new__(cls, value: float = 0.0) -> "Angle":
        x = float(value)
        if not math.isfinite(x):
            raise ValueError(f"angle must be finite, got {value!r}")
        r = x % PI
        # tiny negative inputs round up to exactly pi
        if r >= PI:
            r = 0.0
        return super().__new__(cls, r)

    def __repr__(self) -> str:
        return f"Angle({float(self)!r})"

    @classmethod
    def from_degrees(cls, deg: float) -> "Angle":
        return cls(math.radians(deg))


def angle_distance(x: float, y: float) -> float:
    """Distance between two orientations on the pi-circle."""
    d = (float(x) - float(y)) % PI
    return min(d, PI - d)


def _bit(value, name: str) -> int:
    if isinstance(value, bool):
        return int(value)
    if value in (0, 1):
        return int(value)
    raise ValueError(f"{name} must be 0 or 1, got {value!r}")


def outcome(value) -> int:
    """Validate a measurement outcome: 1 is transmission, 0 reflection."""
    return _bit(value, "outcome")


def input_choice(value) -> int:
    """Validate the experimenter's injection choice C."""
    return _bit(value, "input choice")


@dataclass(frozen=True)
class JointDist:
    """Probability table over outcome pairs, ``p[a][b] = Pr(A=a, B=b)``."""

    p: tuple[tuple[float, float], tuple[float, float]]

    def __post_init__(self) -> None:
        arr = np.asarray(self.p, dtype=float)
        if arr.shape != (2, 2):
            raise InvalidDistributionError(f"joint table must be 2x2, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InvalidDistributionError("joint table has non-finite entries")
        if np.any(arr < -ANALYTIC_TOL) or np.any(arr > 1 + ANALYTIC_TOL):
            raise InvalidDistributionError(f"joint entries outside [0, 1]: {arr.tolist()}")
        total = float(arr.sum())
        if abs(total - 1.0) > ANALYTIC_TOL:
            raise InvalidDistributionError(f"joint table sums to {total!r}, not 1")
        arr = np.clip(arr, 0.0, 1.0)
        object.__setattr__(self, "p", tuple(tuple(float(v) for v in row) for row in arr))

    @classmethod
    def from_array(cls, table: Union[Sequence[Sequence[float]], np.ndarray]) -> "JointDist":
        arr = np.asarray(table, dtype=float)
        if arr.shape == (4,):
            arr = arr.reshape(2, 2)
        return cls(tuple(tuple(float(v) for v in row) for row in arr))

    def as_array(self) -> np.ndarray:
        return np.array(self.p, dtype=float)

    def __getitem__(self, ab: tuple[int, int]) -> float:
        a, b = ab
        return self.p[a][b]

    @property
    def p_equal(self) -> float:
        return self.p[0][0] + self.p[1][1]

    @property
    def p_a1(self) -> float:
        return self.p[1][0] + self.p[1][1]

    @property
    def p_b1(self) -> float:
        return self.p[0][1] + self.p[1][1]

    def swapped(self) -> "JointDist":
        return JointDist(((self.p[0][0], self.p[1][0]), (self.p[0][1], self.p[1][1])))


@dataclass(frozen=True)
class Bernoulli:
    p1: float

    def __post_init__(self) -> None:
        p = float(self.p1)
        if not math.isfinite(p) or p < -ANALYTIC_TOL or p > 1 + ANALYTIC_TOL:
            raise InvalidDistributionError(f"Bernoulli parameter outside [0, 1]: {self.p1!r}")
        object.__setattr__(self, "p1", min(max(p, 0.0), 1.0))

    @property
    def p0(self) -> float:
        return 1.0 - self.p1

    def prob(self, value: int) -> float:
        return self.p1 if outcome(value) == 1 else self.p0


def eprb_joint(alpha: float, beta: float) -> JointDist:
    """Joint outcome table for the photon pair at polarizer angles ``alpha`` and ``beta``."""
    same = math.cos(Angle(alpha) - Angle(beta)) ** 2
    half_same = 0.5 * same
    half_diff = 0.5 * (1.0 - same)
    return JointDist(((half_same, half_diff), (half_diff, half_same)))


def seprb_conditional(gamma: float, beta: float, c: int) -> Bernoulli:
    """Distribution of B given the earlier cube at ``gamma`` and injection choice ``c``.

    The photon is assumed to reach B; a null result is not a run.
    """
    c = input_choice(c)
    d = Angle(beta) - Angle(gamma)
    return Bernoulli(math.cos(d) ** 2 if c == 1 else math.sin(d) ** 2)


def malus_intensity(theta_in: float, theta_pol: float) -> float:
    """Transmitted fraction of a classical polarized beam."""
    return math.cos(Angle(theta_in) - Angle(theta_pol)) ** 2


def _as_joint(d) -> JointDist:
    if isinstance(d, JointDist):
        return d
    return JointDist.from_array(d)


def correlation(d) -> float:
    """Correlator ``Pr(A=B) - Pr(A!=B)`` with outcomes mapped to +-1."""
    j = _as_joint(d)
    equal = j.p[0][0] + j.p[1][1]
    unequal = j.p[0][1] + j.p[1][0]
    return equal - unequal


def quantum_correlation(alpha, beta):
    """Vectorised ``cos 2(alpha - beta)``; accepts scalars or arrays."""
    return np.cos(2.0 * (np.asarray(alpha, dtype=float) - np.asarray(beta, dtype=float)))


def angle_grid(n: int) -> list[Angle]:
    """``n`` equally spaced orientations covering ``[0, pi)``."""
    if n < 1:
        raise ValueError("grid needs at least one point")
    return [Angle(k * PI / n) for k in range(n)]


def normalize_all(values: Iterable[float]) -> tuple[Angle, ...]:
    return tuple(Angle(v) for v in values)
