"""Simulation and audit toolkit for the EPRB and sideways-EPRB polarization experiments."""

from .core import (
    Angle,
    Bernoulli,
    JointDist,
    correlation,
    eprb_joint,
    malus_intensity,
    seprb_conditional,
)
from .geometry import (
    Experiment,
    SpacetimeDiagram,
    action_proxy,
    canonical_diagram,
    isomorphic,
    s_transform,
)
from .ontology import (
    BeableModel,
    EprbSettings,
    SeprbSettings,
    make_cbeable_seprb,
    make_local_hv,
    make_retro_eprb,
    make_timesym_seprb,
    model_joint,
    sample_run,
)
from .bell import (
    chsh,
    independence_test,
    local_deterministic_bound,
    locality_check,
    polytope_membership,
    quantum_chsh_optimum,
)
from .analysis import (
    epistemic_scan,
    mc_estimate,
    postselected_equivalence,
    signalling_margin,
)

__version__ = "0.1.0"
