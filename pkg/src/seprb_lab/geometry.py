"""1+1 spacetime diagrams of the two experiments and the action-preserving map between them.

Coordinates are exact rationals ``(x, t)``; photons move at unit speed, so every
worldline segment satisfies ``|dx| == |dt|``.

Canonical layouts (``a`` is the arm length)::

    SEPRB                          EPRB
      B (0, 2a)                      A (-a, a)     B (a, a)
     /                                   \\         /
    M (-a, a)   mirror                     M (0, 0)   source
     \\
      C (0, 0)  cube + injection

The transform takes the lower half of the SEPRB region (the C leg), flips it
left-right and then future-past, and re-attaches it to the left of the upper
half. The composite of the two flips and the re-attachment is a point
reflection through the mirror vertex, which is how it is applied here.
"""

from __future__ import annotations

import enum
import json
from collections import Counter
from dataclasses import dataclass, field, replace
from fractions import Fraction
from math import gcd
from typing import Any, Mapping, Optional

from .core import Angle

Point = tuple[Fraction, Fraction]

POSTSELECT_A_EQ_C = "A=C"


class Experiment(str, enum.Enum):
    EPRB = "EPRB"
    SEPRB = "SEPRB"

    @classmethod
    def parse(cls, value) -> "Experiment":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise ValueError(f"unknown experiment {value!r}; expected eprb or seprb") from None


class DeviceKind(str, enum.Enum):
    POLARIZING_CUBE = "PolarizingCube"
    MIRROR = "Mirror"
    SOURCE = "Source"
    DETECTOR = "Detector"
    INJECTION = "Injection"


# kinds that play the same part in the action: the correlating vertex and the
# boundary condition fixing the A/C bit
_ROLE = {
    DeviceKind.POLARIZING_CUBE: "cube",
    DeviceKind.MIRROR: "vertex",
    DeviceKind.SOURCE: "vertex",
    DeviceKind.INJECTION: "boundary",
    DeviceKind.DETECTOR: "boundary",
}

_SWAP_KIND = {
    DeviceKind.MIRROR: DeviceKind.SOURCE,
    DeviceKind.SOURCE: DeviceKind.MIRROR,
    DeviceKind.INJECTION: DeviceKind.DETECTOR,
    DeviceKind.DETECTOR: DeviceKind.INJECTION,
    DeviceKind.POLARIZING_CUBE: DeviceKind.POLARIZING_CUBE,
}


class DiagramError(ValueError):
    """Structurally invalid diagram or device."""


class ConfigurationError(DiagramError):
    """Missing or inconsistent settings for a canonical layout."""


class NonCanonicalDiagramError(DiagramError):
    """The transform only accepts the canonical layouts."""


def _q(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        # decimal reading of the float, so 0.1 becomes 1/10
        return Fraction(repr(value))
    return Fraction(value)


def _pt(p) -> Point:
    x, t = p
    return (_q(x), _q(t))


@dataclass(frozen=True)
class Device:
    kind: DeviceKind
    position: Point
    label: str
    setting: Optional[Angle] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", DeviceKind(self.kind))
        object.__setattr__(self, "position", _pt(self.position))
        if self.kind is DeviceKind.POLARIZING_CUBE:
            if self.setting is None:
                raise DiagramError(f"polarizing cube {self.label} needs a setting")
            object.__setattr__(self, "setting", Angle(self.setting))
        elif self.setting is not None:
            raise DiagramError(f"{self.kind.value} {self.label} takes no setting")

    def key(self, origin: Point = (Fraction(0), Fraction(0))):
        x, t = self.position
        return (
            self.kind.value,
            self.label,
            x - origin[0],
            t - origin[1],
            -1.0 if self.setting is None else float(self.setting),
        )


@dataclass(frozen=True)
class WorldlineSegment:
    start: Point
    end: Point

    def __post_init__(self) -> None:
        s, e = _pt(self.start), _pt(self.end)
        object.__setattr__(self, "start", s)
        object.__setattr__(self, "end", e)
        dx, dt = e[0] - s[0], e[1] - s[1]
        if dt == 0 and dx == 0:
            raise DiagramError("degenerate segment")
        if abs(dx) != abs(dt):
            raise DiagramError(f"segment {s} -> {e} is not lightlike")

    @property
    def length(self) -> Fraction:
        """Path length in diagram units (coordinate time elapsed)."""
        return abs(self.end[1] - self.start[1])

    def key(self, origin: Point = (Fraction(0), Fraction(0))):
        ends = sorted(
            [
                (self.start[1] - origin[1], self.start[0] - origin[0]),
                (self.end[1] - origin[1], self.end[0] - origin[0]),
            ]
        )
        return tuple(ends)


@dataclass(frozen=True)
class SpacetimeDiagram:
    kind: Experiment
    devices: tuple[Device, ...]
    segments: tuple[WorldlineSegment, ...]
    postselection: Optional[str] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", Experiment.parse(self.kind))
        object.__setattr__(self, "devices", tuple(self.devices))
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise DiagramError("diagram has no worldline segments")
        _check_connected(self.devices, self.segments)

    def device(self, label: str, kind: DeviceKind = DeviceKind.POLARIZING_CUBE) -> Device:
        for dev in self.devices:
            if dev.label == label and dev.kind is kind:
                return dev
        raise KeyError(f"no {kind.value} labelled {label}")

    def devices_of(self, kind: DeviceKind) -> list[Device]:
        return [d for d in self.devices if d.kind is kind]

    def settings(self) -> dict[str, Angle]:
        return {d.label: d.setting for d in self.devices_of(DeviceKind.POLARIZING_CUBE)}

    def translate(self, dx, dt) -> "SpacetimeDiagram":
        dx, dt = _q(dx), _q(dt)
        move = lambda p: (p[0] + dx, p[1] + dt)  # noqa: E731
        return replace(
            self,
            devices=tuple(replace(d, position=move(d.position)) for d in self.devices),
            segments=tuple(WorldlineSegment(move(s.start), move(s.end)) for s in self.segments),
        )

    def with_postselection(self, constraint: Optional[str]) -> "SpacetimeDiagram":
        """EPRB only: attach (or drop) the detector that fixes outcome A to equal C."""
        if self.kind is not Experiment.EPRB:
            raise DiagramError("post-selection applies to EPRB diagrams")
        devices = [d for d in self.devices if d.kind is not DeviceKind.DETECTOR]
        if constraint is not None:
            if constraint != POSTSELECT_A_EQ_C:
                raise DiagramError(f"unsupported post-selection {constraint!r}")
            a = self.device("A")
            devices.append(Device(DeviceKind.DETECTOR, a.position, "A"))
        return replace(self, devices=tuple(devices), postselection=constraint)


def _node(p: Point) -> tuple[int, int, int, int]:
    # integer key; hashing Fractions directly is slow
    return (p[0].numerator, p[0].denominator, p[1].numerator, p[1].denominator)


def _check_connected(devices, segments) -> None:
    parent: dict = {}

    def find(p):
        parent.setdefault(p, p)
        while parent[p] != p:
            parent[p] = parent[parent[p]]
            p = parent[p]
        return p

    endpoints = set()
    for seg in segments:
        a, b = _node(seg.start), _node(seg.end)
        endpoints.update((a, b))
        parent[find(a)] = find(b)
    for dev in devices:
        if _node(dev.position) not in endpoints:
            raise DiagramError(f"device {dev.label} at {dev.position} is off every worldline")
    roots = {find(p) for p in endpoints}
    if len(roots) != 1:
        raise DiagramError("worldline segments do not form a connected graph")


def canonical_diagram(kind, settings: Mapping[str, float], arm=1, postselection: Optional[str] = None) -> SpacetimeDiagram:
    """Reference layout for ``kind`` with the given polarizer settings.

    ``settings`` takes ``alpha``/``beta`` for EPRB and ``gamma``/``beta`` for
    SEPRB. ``postselection="A=C"`` adds the outcome-fixing detector at A.
    """
    kind = Experiment.parse(kind)
    a = _q(arm)
    if a <= 0:
        raise ConfigurationError(f"arm must be positive, got {arm!r}")
    need = ("alpha", "beta") if kind is Experiment.EPRB else ("gamma", "beta")
    missing = [k for k in need if settings.get(k) is None]
    if missing:
        raise ConfigurationError(f"{kind.value} layout is missing setting(s): {', '.join(missing)}")
    zero = Fraction(0)
    cube = DeviceKind.POLARIZING_CUBE
    if kind is Experiment.EPRB:
        m, pa, pb = (zero, zero), (-a, a), (a, a)
        d = SpacetimeDiagram(
            kind,
            (
                Device(DeviceKind.SOURCE, m, "M"),
                Device(cube, pa, "A", Angle(settings["alpha"])),
                Device(cube, pb, "B", Angle(settings["beta"])),
            ),
            (WorldlineSegment(m, pa), WorldlineSegment(m, pb)),
        )
        return d.with_postselection(postselection) if postselection else d
    if postselection is not None:
        raise ConfigurationError("SEPRB diagrams carry no post-selection")
    pc, m, pb = (zero, zero), (-a, a), (zero, 2 * a)
    return SpacetimeDiagram(
        kind,
        (
            Device(DeviceKind.INJECTION, pc, "C"),
            Device(cube, pc, "C", Angle(settings["gamma"])),
            Device(DeviceKind.MIRROR, m, "M"),
            Device(cube, pb, "B", Angle(settings["beta"])),
        ),
        (WorldlineSegment(pc, m), WorldlineSegment(m, pb)),
    )


def _rel(q: Fraction, o: Fraction) -> tuple[int, int]:
    """``q - o`` as a reduced integer pair (cheaper than Fraction arithmetic)."""
    n = q.numerator * o.denominator - o.numerator * q.denominator
    den = q.denominator * o.denominator
    g = gcd(n, den)
    return (n // g, den // g)


def _canonical_form(d: SpacetimeDiagram):
    ox, ot = min((dev.position for dev in d.devices), key=lambda p: (p[0], p[1]))
    devices = sorted(
        (dev.kind.value, dev.label, _rel(dev.position[0], ox), _rel(dev.position[1], ot),
         -1.0 if dev.setting is None else float(dev.setting))
        for dev in d.devices
    )
    segments = sorted(
        tuple(sorted(((_rel(p[1], ot), _rel(p[0], ox)) for p in (seg.start, seg.end))))
        for seg in d.segments
    )
    return (d.kind.value, d.postselection, tuple(devices), tuple(segments))


def isomorphic(d1: SpacetimeDiagram, d2: SpacetimeDiagram) -> bool:
    """Equal up to a global translation."""
    return _canonical_form(d1) == _canonical_form(d2)


def _arm_of(d: SpacetimeDiagram) -> Fraction:
    lengths = {seg.length for seg in d.segments}
    if len(lengths) != 1:
        raise NonCanonicalDiagramError("canonical diagrams have equal arms")
    return lengths.pop()


def _require_canonical(d: SpacetimeDiagram) -> Fraction:
    try:
        arm = _arm_of(d)
        s = d.settings()
        if d.kind is Experiment.EPRB:
            if d.postselection != POSTSELECT_A_EQ_C:
                raise NonCanonicalDiagramError(
                    "EPRB maps back to SEPRB only under the A=C post-selection"
                )
            ref = canonical_diagram(d.kind, {"alpha": s.get("A"), "beta": s.get("B")}, arm, d.postselection)
        else:
            ref = canonical_diagram(d.kind, {"gamma": s.get("C"), "beta": s.get("B")}, arm)
    except (ConfigurationError, KeyError) as exc:
        raise NonCanonicalDiagramError(str(exc)) from exc
    if not isomorphic(d, ref):
        raise NonCanonicalDiagramError(f"{d.kind.value} diagram is not in the canonical layout")
    return arm


def s_transform(d: SpacetimeDiagram) -> SpacetimeDiagram:
    """Map canonical SEPRB to post-selected EPRB (C -> A), or back.

    The moved half is the C leg (SEPRB, below the mirror) or the A leg
    (EPRB, left of the source). It is point-reflected through the vertex,
    and the vertex and boundary devices swap kind.
    """
    _require_canonical(d)
    vertex_kind = DeviceKind.MIRROR if d.kind is Experiment.SEPRB else DeviceKind.SOURCE
    (vertex,) = d.devices_of(vertex_kind)
    vx, vt = vertex.position
    if d.kind is Experiment.SEPRB:
        moved = lambda p: p[1] < vt  # noqa: E731
        relabel = {"C": "A"}
        target, post = Experiment.EPRB, POSTSELECT_A_EQ_C
    else:
        moved = lambda p: p[0] < vx  # noqa: E731
        relabel = {"A": "C"}
        target, post = Experiment.SEPRB, None

    def reflect(p: Point) -> Point:
        return (2 * vx - p[0], 2 * vt - p[1])

    devices = []
    for dev in d.devices:
        pos = reflect(dev.position) if moved(dev.position) else dev.position
        devices.append(
            Device(_SWAP_KIND[dev.kind], pos, relabel.get(dev.label, dev.label), dev.setting)
        )
    segments = []
    for seg in d.segments:
        if moved(seg.start) or moved(seg.end):
            segments.append(WorldlineSegment(reflect(seg.start), reflect(seg.end)))
        else:
            segments.append(seg)
    return SpacetimeDiagram(target, tuple(devices), tuple(segments), post)


@dataclass(frozen=True)
class ActionProxy:
    """Structural stand-in for the electromagnetic action of a diagram.

    ``vertex_types`` keeps the literal device kinds for display; equality uses
    ``vertex_roles``, under which mirror and source (and injection and
    detector) are the same thing.
    """

    segment_lengths: tuple[Fraction, ...]
    polarizer_settings: tuple[float, ...]
    vertex_roles: tuple[str, ...]
    vertex_types: tuple[str, ...] = field(compare=False)

    def type_counts(self) -> Counter:
        return Counter(self.vertex_types)


def action_proxy(d: SpacetimeDiagram) -> ActionProxy:
    return ActionProxy(
        segment_lengths=tuple(sorted(seg.length for seg in d.segments)),
        polarizer_settings=tuple(sorted(float(x.setting) for x in d.devices_of(DeviceKind.POLARIZING_CUBE))),
        vertex_roles=tuple(sorted(_ROLE[x.kind] for x in d.devices)),
        vertex_types=tuple(sorted(x.kind.value for x in d.devices)),
    )


# -- serialization -------------------------------------------------------------


def _frac_str(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def diagram_to_dict(d: SpacetimeDiagram) -> dict[str, Any]:
    devices = sorted(d.devices, key=lambda dev: dev.key())
    segments = sorted(d.segments, key=lambda seg: seg.key())
    return {
        "kind": d.kind.value,
        "postselection": d.postselection,
        "devices": [
            {
                "kind": dev.kind.value,
                "label": dev.label,
                "x": _frac_str(dev.position[0]),
                "t": _frac_str(dev.position[1]),
                "setting": None if dev.setting is None else float(dev.setting),
            }
            for dev in devices
        ],
        "segments": [
            {"from": [_frac_str(s.start[0]), _frac_str(s.start[1])], "to": [_frac_str(s.end[0]), _frac_str(s.end[1])]}
            for s in segments
        ],
    }


def diagram_from_dict(doc: Mapping[str, Any]) -> SpacetimeDiagram:
    try:
        devices = tuple(
            Device(
                DeviceKind(item["kind"]),
                (Fraction(str(item["x"])), Fraction(str(item["t"]))),
                str(item["label"]),
                item.get("setting"),
            )
            for item in doc["devices"]
        )
        segments = tuple(
            WorldlineSegment(
                (Fraction(str(s["from"][0])), Fraction(str(s["from"][1]))),
                (Fraction(str(s["to"][0])), Fraction(str(s["to"][1]))),
            )
            for s in doc["segments"]
        )
        return SpacetimeDiagram(Experiment.parse(doc["kind"]), devices, segments, doc.get("postselection"))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, DiagramError):
            raise
        raise DiagramError(f"malformed diagram document: {exc}") from exc


def dumps_diagram(d: SpacetimeDiagram) -> str:
    return json.dumps(diagram_to_dict(d), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def loads_diagram(text: str) -> SpacetimeDiagram:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DiagramError(f"diagram file is not valid JSON: {exc}") from exc
    return diagram_from_dict(doc)
