"""Internal-model checks, delay compatibility and robustness experiments."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import SimulationDivergence, ValidationError
from .fsfh import DesignConfig, build_generalized_plant, unlift_controller
from .lifting import LiftedController, build_lifted_closed_loop
from .lti import RationalTransferFunction, as_ss, eigvals, parallel
from .simulation import SignalSpec, simulate_closed_loop
from .synthesis import gamma_bisect

__all__ = [
    "check_delay_compatibility",
    "delay_compatible_all",
    "InternalModelReport",
    "check_internal_model",
    "alias_frequency",
    "RobustnessReport",
    "robustness_experiment",
    "rejection_ratio",
    "design_controller",
]


def design_controller(cfg: DesignConfig, tol: float = 1e-3):
    """Build the FSFH plant, bisect on gamma and return ``(LiftedController, HinfResult)``."""
    cfg.validate()
    design = gamma_bisect(build_generalized_plant(cfg), cfg.gamma_range, tol=tol)
    return unlift_controller(design.controller, cfg.M), design


def check_delay_compatibility(L: float, omega: float, tol: float = 1e-9) -> bool:
    """True iff ``L`` is an integer multiple of the period ``2 pi / omega``."""
    if not omega > 0:
        raise ValidationError("omega must be positive", field="omega")
    if L < 0:
        raise ValidationError("L must be nonnegative", field="L")
    cycles = L * omega / (2.0 * math.pi)
    return abs(cycles - round(cycles)) <= tol


def delay_compatible_all(L: float, omegas: Sequence[float], tol: float = 1e-9) -> bool:
    """Compatibility of a multi-sinusoid signal: every component must be compatible."""
    return all(check_delay_compatibility(L, w, tol) for w in omegas)


@dataclass(frozen=True)
class InternalModelReport:
    omega: float
    h: float
    distance: float
    nearest: complex
    tol: float

    @property
    def passed(self) -> bool:
        return self.distance <= self.tol

    def to_dict(self):
        return {
            "omega": self.omega,
            "distance": self.distance,
            "nearest": [self.nearest.real, self.nearest.imag],
            "tol": self.tol,
            "passed": self.passed,
        }


def check_internal_model(K: LiftedController, omega: float, tol: float = 0.05) -> InternalModelReport:
    """Distance from the spectrum of ``barA`` to ``exp(+-j omega h)``.

    A controller without states has an empty spectrum; its distance is
    reported as 2, the diameter of the unit circle.
    """
    target = np.exp(1j * omega * K.h)
    if K.n_states == 0:
        return InternalModelReport(float(omega), K.h, 2.0, complex(math.nan, math.nan), tol)
    lam = eigvals(K.barA)
    d = np.minimum(np.abs(lam - target), np.abs(lam - np.conj(target)))
    i = int(np.argmin(d))
    return InternalModelReport(float(omega), K.h, float(d[i]), complex(lam[i]), tol)


def alias_frequency(omega: float, h: float) -> float:
    """Fold ``omega`` into the base band ``[0, pi/h]``."""
    if omega < 0:
        raise ValidationError("omega must be nonnegative", field="omega")
    ws = 2.0 * math.pi / h
    w = math.fmod(omega, ws)
    return ws - w if w > ws / 2 else w


def rejection_ratio(plant, disturbance: SignalSpec, rms_y: float) -> float:
    """Residual fraction of an input disturbance: RMS(y) over its open-loop steady RMS."""
    G = as_ss(plant)
    power = sum((abs(complex(G.freqresp(c.omega).ravel()[0])) * c.amplitude) ** 2 / 2
                for c in disturbance.components)
    return rms_y / math.sqrt(power) if power > 0 else math.nan


@dataclass
class RobustnessReport:
    omega: float
    L: float
    compatible: bool
    nominal_metrics: dict
    perturbed_metrics: dict
    degradation_ratio: float
    nominal_stable: bool
    perturbed_stable: bool
    nominal_spectral_radius: float
    perturbed_spectral_radius: float
    gamma: float
    perturbed_diverged: bool = False

    @property
    def verdict(self) -> str:
        """Ratio at most 2, or perturbed relative RMS at most 5%, counts as retained."""
        if not self.perturbed_stable:
            return "perturbed loop unstable"
        if self.degradation_ratio <= 2.0 or self.perturbed_metrics.get("relative_rms", math.inf) <= 0.05:
            return "tracking retained"
        return "tracking degraded"

    def to_dict(self):
        out = asdict(self)
        out["verdict"] = self.verdict
        return out


def robustness_experiment(
    cfg: DesignConfig,
    delta: RationalTransferFunction,
    reference: Optional[SignalSpec] = None,
    duration: float = 60.0,
    n_sim: Optional[int] = None,
    tol: float = 1e-9,
    bisect_tol: float = 1e-3,
    controller: Optional[LiftedController] = None,
) -> RobustnessReport:
    """Design on the nominal plant, then compare tracking on ``P`` and ``P + delta``.

    ``reference`` defaults to a unit sinusoid at the peak frequency of the
    reference weight, which must then be a single resonance.  A ready
    ``controller`` skips the design step (``gamma`` is then NaN).
    """
    cfg.validate()
    if reference is None:
        reference = SignalSpec.sine(_weight_peak(cfg.F_r))
    if controller is None:
        K, design = design_controller(cfg, bisect_tol)
        gamma = design.gamma
    else:
        K, gamma = controller, math.nan
    P = as_ss(cfg.plant)
    Pd = parallel(P, as_ss(delta))
    rho_nom = build_lifted_closed_loop(P, K).spectral_radius
    rho_pert = build_lifted_closed_loop(Pd, K).spectral_radius

    def run(plant):
        try:
            res = simulate_closed_loop(plant, K, reference, delay=cfg.L, duration=duration, n_sim=n_sim)
            return res.metrics, False
        except SimulationDivergence:
            return {"relative_rms": math.inf}, True

    nominal, _ = run(P)
    perturbed, diverged = run(Pd)
    ratio = perturbed["relative_rms"] / nominal["relative_rms"]
    return RobustnessReport(
        omega=float(reference.omegas[0]) if len(reference.omegas) == 1 else math.nan,
        L=cfg.L,
        compatible=delay_compatible_all(cfg.L, reference.omegas, tol),
        nominal_metrics=nominal,
        perturbed_metrics=perturbed,
        degradation_ratio=float(ratio),
        nominal_stable=rho_nom < 1.0,
        perturbed_stable=rho_pert < 1.0 and not diverged,
        nominal_spectral_radius=float(rho_nom),
        perturbed_spectral_radius=float(rho_pert),
        gamma=float(gamma),
        perturbed_diverged=diverged,
    )


def _weight_peak(F: RationalTransferFunction) -> float:
    # the weight s/(s^2 + z s + w^2) peaks at w = sqrt(den[0])
    den = F.den
    if len(den) != 3:
        raise ValidationError("a reference signal is required for multi-resonance weights",
                              field="reference")
    return math.sqrt(den[0] / den[2])
