from __future__ import annotations

import math

import numpy as np
import pytest

from seprb_lab.analysis import (
    CHUNK_SIZE,
    ScanError,
    epistemic_scan,
    exact_target,
    is_separable,
    kernel_on_grid,
    mc_estimate,
    postselected_equivalence,
    signalling_margin,
)
from seprb_lab.core import angle_grid, seprb_conditional
from seprb_lab.geometry import canonical_diagram, s_transform
from seprb_lab.ontology import (
    EprbSettings,
    SeprbSettings,
    make_cbeable_seprb,
    make_retro_eprb,
    shared_coin_hv,
)

PI = math.pi
TOL = 1e-12


def seprb_diagram(gamma=0.3, beta=0.9):
    return canonical_diagram("SEPRB", {"gamma": gamma, "beta": beta})


def eprb_diagram(alpha=0.3, beta=0.9):
    return canonical_diagram("EPRB", {"alpha": alpha, "beta": beta})


def test_signalling_examples():
    assert signalling_margin("SEPRB", {"gamma": 0, "beta": 0}) == pytest.approx(1.0, abs=TOL)
    assert signalling_margin("SEPRB", {"gamma": 0, "beta": PI / 4}) == pytest.approx(0.0, abs=TOL)
    for beta in (0.0, 0.4, 2.9):
        assert signalling_margin("EPRB", {"alpha": 0.1, "beta": beta}) <= TOL


def test_seprb_margin_closed_form():
    for gamma in angle_grid(16):
        for beta in angle_grid(16):
            margin = signalling_margin("SEPRB", {"gamma": gamma, "beta": beta})
            assert margin == pytest.approx(abs(2 * seprb_conditional(gamma, beta, 1).p1 - 1), abs=TOL)


def test_postselected_equivalence_examples():
    assert postselected_equivalence(0, 0) == pytest.approx((1.0, 1.0), abs=TOL)
    assert postselected_equivalence(0, PI / 6) == pytest.approx((0.75, 0.75), abs=TOL)


def test_postselected_equivalence_on_sweep_grid():
    for gamma in angle_grid(64):
        for beta in angle_grid(64):
            p_seprb, p_eprb = postselected_equivalence(gamma, beta)
            assert abs(p_seprb - p_eprb) <= TOL


def test_scan_examples():
    side = epistemic_scan(seprb_diagram(), "sideways")
    assert side(0, 0) == pytest.approx(1.0, abs=TOL)
    assert side(0, PI / 4) == pytest.approx(0.5, abs=TOL)
    assert not side.separable
    time = epistemic_scan(eprb_diagram(), "timeward")
    assert time(0, 0) == pytest.approx(1.0, abs=TOL)
    assert time(0, PI / 4) == pytest.approx(0.5, abs=TOL)
    assert not time.separable
    np.testing.assert_allclose(side.values, time.values, atol=TOL)


def test_scan_of_postselected_eprb_matches_too():
    scan = epistemic_scan(s_transform(seprb_diagram()), "timeward")
    np.testing.assert_allclose(scan.values, epistemic_scan(seprb_diagram(), "sideways").values, atol=TOL)


@pytest.mark.parametrize(
    "diagram, axis",
    [(seprb_diagram, "timeward"), (eprb_diagram, "sideways"), (seprb_diagram, "diagonal")],
)
def test_inapplicable_scans(diagram, axis):
    with pytest.raises(ScanError):
        epistemic_scan(diagram(), axis)


def test_separability_fixtures():
    grid = [float(a) for a in angle_grid(8)]
    product = kernel_on_grid(lambda x, y: math.cos(x) ** 2 * math.cos(y) ** 2, grid)
    assert is_separable(product)
    # the two-point grid from the scan example: 1*1 != 0.5*0.5
    assert not is_separable(np.array([[1.0, 0.5], [0.5, 1.0]]))


def test_mc_estimate_retro_at_one_million():
    s = EprbSettings(0, PI / 8)
    est = mc_estimate(make_retro_eprb(), s, "A=B", n=10**6, seed=42)
    p = math.cos(PI / 8) ** 2
    assert abs(est.value - p) <= 5 * math.sqrt(p * (1 - p) / 10**6)
    assert est.ci95[0] <= est.value <= est.ci95[1]
    assert est.stderr == pytest.approx(math.sqrt(est.value * (1 - est.value) / est.n))
    assert mc_estimate(make_retro_eprb(), s, "A=B", n=10**6, seed=42) == est


def test_mc_estimate_shared_coin():
    est = mc_estimate(shared_coin_hv(), EprbSettings(0.7, 2.1), "A=B", n=1000, seed=1)
    assert est.value == 1.0 and est.stderr == 0.0


def test_mc_estimate_independent_of_workers():
    m, s = make_retro_eprb(), EprbSettings(0.1, 0.9)
    n = 3 * CHUNK_SIZE + 17
    one = mc_estimate(m, s, n=n, seed=9, workers=1)
    assert mc_estimate(m, s, n=n, seed=9, workers=3) == one
    assert mc_estimate(m, s, n=n, seed=10, workers=1) != one


def test_mc_estimate_validates():
    with pytest.raises(ValueError):
        mc_estimate(make_retro_eprb(), EprbSettings(0, 0), n=10)
    with pytest.raises(ValueError):
        mc_estimate(make_retro_eprb(), EprbSettings(0, 0), target="B=C")
    with pytest.raises(ValueError):
        mc_estimate(make_cbeable_seprb(), SeprbSettings(0, 0, 1), target="A=B")


def test_ci_coverage():
    m, s = make_cbeable_seprb(), SeprbSettings(0.2, 1.0, 1)
    truth = exact_target(m, s)
    hits = 0
    for seed in range(500):
        lo, hi = mc_estimate(m, s, n=10**4, seed=seed).ci95
        hits += lo <= truth <= hi
    assert hits >= 0.93 * 500
