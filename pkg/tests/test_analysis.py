import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hypertrack.analysis import (
    alias_frequency,
    check_delay_compatibility,
    check_internal_model,
    delay_compatible_all,
    rejection_ratio,
    robustness_experiment,
)
from hypertrack.errors import ValidationError
from hypertrack.lifting import LiftedController
from hypertrack.lti import RationalTransferFunction
from hypertrack.simulation import SignalSpec

PI = math.pi


class TestDelayCompatibility:
    def test_three_reference_cases(self):
        assert check_delay_compatibility(4, 3 * PI / 2) is True
        assert check_delay_compatibility(4, 4 * PI / 3) is False
        assert check_delay_compatibility(6, 4 * PI / 3) is True

    def test_zero_delay_is_compatible(self):
        assert check_delay_compatibility(0, 1.234)

    def test_multi_sinusoid_needs_all(self):
        assert delay_compatible_all(8, [5 * PI / 4, 9 * PI / 4])
        assert not delay_compatible_all(4, [3 * PI / 2, 4 * PI / 3])

    def test_preconditions(self):
        with pytest.raises(ValidationError):
            check_delay_compatibility(1, 0.0)
        with pytest.raises(ValidationError):
            check_delay_compatibility(-1, 1.0)

    @given(st.integers(0, 50), st.integers(1, 50))
    def test_whole_and_half_periods(self, k, q):
        omega = 2 * PI * q / 7.0
        period = 7.0 / q
        assert check_delay_compatibility(k * period, omega, tol=1e-9)
        assert not check_delay_compatibility((k + 0.5) * period, omega, tol=1e-9)


class TestAlias:
    @pytest.mark.parametrize("omega, expected", [(1.5 * PI, PI / 2), (2 * PI, 0.0), (0.5, 0.5),
                                                 (PI, PI), (2.5 * PI, PI / 2)])
    def test_fold(self, omega, expected):
        assert alias_frequency(omega, 1.0) == pytest.approx(expected, abs=1e-12)

    @given(st.floats(0, 200))
    def test_in_base_band(self, omega):
        a = alias_frequency(omega, 0.5)
        assert -1e-12 <= a <= 2 * PI + 1e-12


class TestInternalModel:
    def test_exact_oscillator(self):
        wh = 1.5 * PI
        R = np.array([[math.cos(wh), -math.sin(wh)], [math.sin(wh), math.cos(wh)]])
        K = LiftedController(R, np.ones((2, 1)), np.ones((4, 2)), np.zeros((4, 1)), 4, 1.0)
        rep = check_internal_model(K, 1.5 * PI)
        assert rep.distance == pytest.approx(0.0, abs=1e-15)
        assert rep.passed

    def test_static_controller_reports_max_distance(self):
        rep = check_internal_model(LiftedController.zero(8, 1.0), 1.5 * PI)
        assert rep.distance == 2.0
        assert not rep.passed

    def test_designed_controller(self, example1_design):
        rep = check_internal_model(example1_design[0], 1.5 * PI)
        assert rep.distance <= 0.05
        assert abs(abs(rep.nearest.imag) - 1.0) < 0.05


def test_rejection_ratio_of_open_loop_is_one():
    P = RationalTransferFunction((1,), (1, 2, 1))
    d = SignalSpec.sine(2.0, amplitude=3.0, entry="input_disturbance")
    open_rms = abs(P.freqresp(2.0)) * 3.0 / math.sqrt(2)
    assert rejection_ratio(P, d, open_rms) == pytest.approx(1.0)


def test_zero_perturbation_has_unit_ratio(example1_cfg, example1_design):
    rep = robustness_experiment(example1_cfg, RationalTransferFunction((0.0,), (1.0,)),
                                controller=example1_design[0])
    assert rep.degradation_ratio == pytest.approx(1.0, abs=1e-12)
    assert rep.compatible
    assert rep.nominal_stable and rep.perturbed_stable
    assert rep.verdict == "tracking retained"
