"""Multirate sampled-data tracking and rejection of sinusoids above the Nyquist frequency.

The pipeline: build an FSFH generalized plant (:mod:`hypertrack.fsfh`),
bisect on gamma for a central H-infinity controller
(:mod:`hypertrack.synthesis`), then verify by exact hybrid simulation
(:mod:`hypertrack.simulation`) and lifted analysis
(:mod:`hypertrack.lifting`, :mod:`hypertrack.analysis`).
"""

__version__ = "0.1.0"

from .analysis import (
    RobustnessReport,
    alias_frequency,
    check_delay_compatibility,
    check_internal_model,
    design_controller,
    rejection_ratio,
    robustness_experiment,
)
from .errors import (
    HypertrackError,
    InfeasibleError,
    NumericalError,
    SimulationDivergence,
    ValidationError,
)
from .fsfh import (
    DesignConfig,
    DiscreteGeneralizedPlant,
    build_generalized_plant,
    make_weight,
    make_weight_product,
    unlift_controller,
)
from .lifting import (
    GeneralizedHold,
    LiftedClosedLoop,
    LiftedController,
    build_lifted_closed_loop,
    hold_response,
    lift_controller,
    lifted_simulate,
    upsample,
)
from .lti import (
    ContinuousStateSpace,
    DiscreteStateSpace,
    RationalTransferFunction,
    c2d_zoh,
    expm,
    feedback,
    hinf_norm,
    parallel,
    series,
    tf_to_ss,
)
from .simulation import SignalSpec, Sinusoid, SimulationResult, simulate_closed_loop
from .synthesis import HinfResult, care, gamma_bisect, synthesize_fixed_gamma

__all__ = [name for name in dir() if not name.startswith("_")]
