from __future__ import annotations

import math
from collections import Counter
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seprb_lab.core import eprb_joint, seprb_conditional
from seprb_lab.geometry import (
    ConfigurationError,
    Device,
    DeviceKind,
    DiagramError,
    Experiment,
    NonCanonicalDiagramError,
    SpacetimeDiagram,
    WorldlineSegment,
    action_proxy,
    canonical_diagram,
    dumps_diagram,
    isomorphic,
    loads_diagram,
    s_transform,
)

PI = math.pi
GOLDEN = Path(__file__).parent / "golden"

angles = st.floats(min_value=0.0, max_value=3.0, allow_nan=False)
arms = st.fractions(min_value=Fraction(1, 16), max_value=8).filter(lambda q: q > 0)


def seprb(gamma, beta, arm=1):
    return canonical_diagram("SEPRB", {"gamma": gamma, "beta": beta}, arm)


def eprb_post(alpha, beta, arm=1):
    return canonical_diagram("EPRB", {"alpha": alpha, "beta": beta}, arm, postselection="A=C")


def test_canonical_eprb_contract():
    d = canonical_diagram("EPRB", {"alpha": 0, "beta": PI / 8})
    assert len(d.devices_of(DeviceKind.POLARIZING_CUBE)) == 2
    assert len(d.devices_of(DeviceKind.SOURCE)) == 1
    assert len(d.segments) == 2
    assert d.postselection is None


def test_canonical_seprb_contract():
    d = seprb(0, PI / 8)
    assert len(d.devices_of(DeviceKind.POLARIZING_CUBE)) == 2
    assert len(d.devices_of(DeviceKind.MIRROR)) == 1
    assert len(d.devices_of(DeviceKind.INJECTION)) == 1
    assert len(d.segments) == 2


def test_canonical_seprb_missing_gamma():
    with pytest.raises(ConfigurationError, match="gamma"):
        canonical_diagram("SEPRB", {"beta": PI / 8})


def test_segments_must_be_lightlike():
    with pytest.raises(DiagramError):
        WorldlineSegment((0, 0), (1, 2))
    with pytest.raises(DiagramError):
        WorldlineSegment((0, 0), (0, 0))


def test_cube_needs_setting_and_mirror_refuses_one():
    with pytest.raises(DiagramError):
        Device(DeviceKind.POLARIZING_CUBE, (0, 0), "A")
    with pytest.raises(DiagramError):
        Device(DeviceKind.MIRROR, (0, 0), "M", 0.3)


def test_disconnected_diagram_rejected():
    cube = DeviceKind.POLARIZING_CUBE
    with pytest.raises(DiagramError):
        SpacetimeDiagram(
            Experiment.EPRB,
            (
                Device(DeviceKind.SOURCE, (0, 0), "M"),
                Device(cube, (-1, 1), "A", 0.0),
                Device(cube, (5, 1), "B", 0.0),
                Device(DeviceKind.SOURCE, (4, 0), "M"),
            ),
            (WorldlineSegment((0, 0), (-1, 1)), WorldlineSegment((4, 0), (5, 1))),
        )


def test_isomorphic_examples():
    d = canonical_diagram("EPRB", {"alpha": 0, "beta": 0.9})
    assert isomorphic(d, d.translate(Fraction(7, 3), -2))
    assert not isomorphic(d, canonical_diagram("EPRB", {"alpha": 0.3, "beta": 0.9}))
    assert isomorphic(s_transform(seprb(0.3, 0.9)), eprb_post(0.3, 0.9))


def test_s_transform_output_is_postselected_eprb():
    out = s_transform(seprb(0.3, 0.9))
    assert out.kind is Experiment.EPRB
    assert out.postselection == "A=C"
    assert out.settings()["A"] == pytest.approx(0.3)
    assert out.settings()["B"] == pytest.approx(0.9)


def test_s_transform_rejects_non_canonical():
    d = seprb(0.3, 0.9)
    bent = SpacetimeDiagram(
        d.kind,
        d.devices[:2] + (Device(DeviceKind.MIRROR, (1, 1), "M"), Device(DeviceKind.POLARIZING_CUBE, (0, 2), "B", 0.9)),
        (WorldlineSegment((0, 0), (1, 1)), WorldlineSegment((1, 1), (0, 2))),
    )
    with pytest.raises(NonCanonicalDiagramError):
        s_transform(bent)
    # plain EPRB without the A=C post-selection has no SEPRB preimage
    with pytest.raises(NonCanonicalDiagramError):
        s_transform(canonical_diagram("EPRB", {"alpha": 0.3, "beta": 0.9}))


def test_action_proxy_examples():
    p = action_proxy(seprb(0.2, 0.7))
    assert p.segment_lengths == (1, 1)
    assert p.type_counts() == Counter({"PolarizingCube": 2, "Mirror": 1, "Injection": 1})
    q = action_proxy(canonical_diagram("EPRB", {"alpha": 0.2, "beta": 0.7}))
    assert q.segment_lengths == (1, 1)
    assert q.type_counts() == Counter({"PolarizingCube": 2, "Source": 1})


def test_vertex_kinds_swap_under_transform():
    before = action_proxy(seprb(0.2, 0.7)).type_counts()
    after = action_proxy(s_transform(seprb(0.2, 0.7))).type_counts()
    swap = {"Mirror": "Source", "Injection": "Detector", "PolarizingCube": "PolarizingCube"}
    assert after == Counter({swap[k]: v for k, v in before.items()})


@settings(max_examples=200)
@given(angles, angles, arms)
def test_transform_bijection_and_action(gamma, beta, arm):
    d = seprb(gamma, beta, arm)
    out = s_transform(d)
    assert isomorphic(out, eprb_post(gamma, beta, arm))
    assert isomorphic(s_transform(out), d)
    assert action_proxy(out) == action_proxy(d)
    assert action_proxy(out).segment_lengths == (arm, arm)


def test_round_trip_on_1000_random_tuples():
    rng = np.random.default_rng(11)
    for gamma, beta in rng.uniform(0, PI, size=(1000, 2)):
        arm = Fraction(int(rng.integers(1, 20)), int(rng.integers(1, 20)))
        d = seprb(gamma, beta, arm)
        out = s_transform(d)
        assert isomorphic(out, eprb_post(gamma, beta, arm))
        assert isomorphic(s_transform(out), d)
        assert action_proxy(out) == action_proxy(d)


def test_statistics_agree_across_the_transform():
    grid = np.arange(32) * PI / 32
    for gamma in grid:
        for beta in grid:
            assert abs(seprb_conditional(gamma, beta, 1).p1 - eprb_joint(gamma, beta).p_equal) <= 1e-12


def test_serialization_round_trip():
    d = s_transform(seprb(0.3, 0.9, Fraction(3, 2)))
    again = loads_diagram(dumps_diagram(d))
    assert isomorphic(d, again)
    assert dumps_diagram(again) == dumps_diagram(d)


def test_golden_diagram_file():
    expected = (GOLDEN / "seprb_gamma0.3_beta0.9.json").read_text()
    assert dumps_diagram(seprb(0.3, 0.9)) == expected
    assert isomorphic(loads_diagram(expected), seprb(0.3, 0.9))


def test_malformed_document():
    with pytest.raises(DiagramError):
        loads_diagram('{"kind": "EPRB"}')
