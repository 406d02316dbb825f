import math

import mpmath
import numpy as np
import pytest
import scipy.integrate
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hypertrack.errors import ValidationError
from hypertrack.lti import (
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
    zoh_integral,
)

from conftest import random_stable_continuous, random_stable_discrete


def taylor_expm_mp(A, t=1.0, digits=40):
    """Oracle: Taylor series in extended precision until terms vanish."""
    with mpmath.workdps(digits):
        X = mpmath.matrix(A.tolist()) * t
        term = mpmath.eye(A.shape[0])
        total = term.copy()
        for k in range(1, 400):
            term = term * X / k
            total += term
            if mpmath.mnorm(term, 1) < mpmath.mpf(10) ** (-digits + 2):
                break
        return np.array(total.tolist(), dtype=float)


def grid_hinf(sys, n=10_000):
    w = np.linspace(0.0, math.pi / sys.period, n)
    return max(np.linalg.svd(G, compute_uv=False)[0] for G in sys.freqresp(w))


class TestTransferFunction:
    def test_coefficients_are_trimmed_and_normalized_properness(self):
        tf = RationalTransferFunction((1.0, 0.0, 0.0), (1.0, 2.0, 1.0, 0.0))
        assert tf.num == (1.0,)
        assert tf.order == 2
        assert tf.is_strictly_proper()

    def test_improper_rejected_by_realization(self):
        with pytest.raises(ValidationError, match="improper"):
            tf_to_ss(RationalTransferFunction((0, 0, 1), (1, 1)))

    def test_zero_denominator_rejected(self):
        with pytest.raises(ValidationError):
            RationalTransferFunction((1,), (0, 0))

    def test_canonical_realization_of_second_order_plant(self):
        ss = tf_to_ss(RationalTransferFunction((1,), (1, 2, 1)))
        np.testing.assert_array_equal(ss.A, [[0, 1], [-1, -2]])
        np.testing.assert_array_equal(ss.B, [[0], [1]])
        np.testing.assert_array_equal(ss.C, [[1, 0]])
        np.testing.assert_array_equal(ss.D, [[0]])

    def test_realization_preserves_frequency_response(self):
        tf = RationalTransferFunction((-1.0, 1.0, 0.3), (2.0, 3.0, 1.0))
        ss = tf_to_ss(tf)
        w = np.linspace(0.1, 20, 37)
        np.testing.assert_allclose(ss.freqresp(w)[:, 0, 0], tf.freqresp(w), rtol=1e-12)

    def test_weight_peak_is_inverse_damping(self):
        from hypertrack.fsfh import make_weight

        F = make_weight(1.5 * math.pi, 0.1)
        assert abs(F.freqresp(1.5 * math.pi)) == pytest.approx(10.0, rel=1e-12)


class TestExpm:
    @pytest.mark.parametrize("scale", [0.1, 1.0, 7.0, 40.0])
    def test_matches_extended_precision_taylor(self, rng, scale):
        A = rng.standard_normal((4, 4))
        A *= scale / np.linalg.norm(A, 1)
        if scale > 10:  # keep exp(A) well scaled so the relative bound is meaningful
            A -= (np.max(np.linalg.eigvals(A).real) + 0.1) * np.eye(4)
        ref = taylor_expm_mp(A)
        err = np.linalg.norm(expm(A) - ref, 1) / np.linalg.norm(ref, 1)
        assert err <= 1e-12

    def test_zero_and_diagonal(self):
        np.testing.assert_array_equal(expm(np.zeros((3, 3))), np.eye(3))
        d = np.array([-1.0, 0.5, 2.0])
        np.testing.assert_allclose(expm(np.diag(d), 0.7), np.diag(np.exp(0.7 * d)), rtol=1e-14)

    def test_rotation_generator(self):
        w = 1.5 * math.pi
        R = expm(np.array([[0.0, w], [-w, 0.0]]))
        np.testing.assert_allclose(R, [[math.cos(w), math.sin(w)], [-math.sin(w), math.cos(w)]],
                                   atol=1e-14)

    @settings(max_examples=40, deadline=None)
    @given(arrays(np.float64, (3, 3), elements=st.floats(-3, 3)))
    def test_agrees_with_scipy(self, A):
        ref = scipy.linalg.expm(A)
        assert np.allclose(expm(A), ref, rtol=1e-11, atol=1e-12 * np.linalg.norm(ref, 1))

    @settings(max_examples=25, deadline=None)
    @given(arrays(np.float64, (3, 3), elements=st.floats(-2, 2)), st.floats(0.01, 1.0),
           st.floats(0.01, 1.0))
    def test_semigroup(self, A, s, t):
        lhs = expm(A, s + t)
        assert np.allclose(lhs, expm(A, s) @ expm(A, t), rtol=1e-10,
                           atol=1e-12 * np.linalg.norm(lhs, 1))


class TestZOH:
    @pytest.mark.parametrize("dt", [0.01, 0.125, 1.0])
    def test_against_quadrature(self, rng, dt):
        sys = random_stable_continuous(rng, 5, m=2, p=2)
        disc = c2d_zoh(sys, dt)
        gamma, _ = scipy.integrate.quad_vec(lambda tau: expm(sys.A, tau) @ sys.B, 0.0, dt,
                                            epsabs=1e-14, epsrel=1e-13)
        np.testing.assert_allclose(disc.A, expm(sys.A, dt), atol=1e-13)
        assert np.max(np.abs(disc.B - gamma)) <= 1e-9
        np.testing.assert_array_equal(disc.C, sys.C)
        np.testing.assert_array_equal(disc.D, sys.D)
        assert disc.period == dt

    def test_singular_A_integrator(self):
        sys = ContinuousStateSpace([[0.0]], [[1.0]], [[1.0]], [[0.0]])
        disc = c2d_zoh(sys, 0.3)
        assert disc.A[0, 0] == pytest.approx(1.0)
        assert disc.B[0, 0] == pytest.approx(0.3, abs=1e-15)

    def test_zoh_integral_matches_c2d(self, rng):
        sys = random_stable_continuous(rng, 3)
        np.testing.assert_allclose(zoh_integral(sys.A, sys.B, 0.2), c2d_zoh(sys, 0.2).B,
                                   atol=1e-15)

    def test_nonpositive_step_rejected(self, rng):
        with pytest.raises(ValidationError):
            c2d_zoh(random_stable_continuous(rng, 2), 0.0)


class TestInterconnections:
    w = np.linspace(0.05, 12.0, 29)

    def test_series_is_product(self, rng):
        g1, g2 = random_stable_continuous(rng, 3), random_stable_continuous(rng, 2)
        ref = g2.freqresp(self.w)[:, 0, 0] * g1.freqresp(self.w)[:, 0, 0]
        np.testing.assert_allclose(series(g1, g2).freqresp(self.w)[:, 0, 0], ref, rtol=1e-10)

    def test_parallel_adds_perturbation(self):
        P = RationalTransferFunction((1,), (1, 2, 1))
        Delta = RationalTransferFunction((0.05,), (1, 1))
        got = parallel(P, Delta).freqresp(self.w)[:, 0, 0]
        np.testing.assert_allclose(got, P.freqresp(self.w) + Delta.freqresp(self.w), rtol=1e-12)

    def test_negative_feedback(self, rng):
        g, k = random_stable_continuous(rng, 2), random_stable_continuous(rng, 2)
        G, K = g.freqresp(self.w)[:, 0, 0], k.freqresp(self.w)[:, 0, 0]
        got = feedback(g, k).freqresp(self.w)[:, 0, 0]
        np.testing.assert_allclose(got, G / (1 + G * K), rtol=1e-9)

    def test_algebraic_loop_rejected(self):
        one = ContinuousStateSpace(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), [[1.0]])
        with pytest.raises(ValidationError, match="algebraic loop"):
            feedback(one, one, sign=1.0)

    def test_mixed_domains_rejected(self, rng):
        with pytest.raises(ValidationError):
            series(random_stable_continuous(rng, 2), random_stable_discrete(rng, 2))


class TestHinfNorm:
    def test_first_order_lag(self):
        sys = tf_to_ss(RationalTransferFunction((1,), (-0.5, 1), var="z", period=1.0))
        assert hinf_norm(sys) == pytest.approx(2.0, rel=1e-5)

    def test_static_gain(self):
        sys = DiscreteStateSpace(np.zeros((0, 0)), np.zeros((0, 2)), np.zeros((2, 0)),
                                 [[3.0, 0.0], [0.0, -4.0]])
        assert hinf_norm(sys) == pytest.approx(4.0, rel=1e-6)

    def test_unstable_is_infinite(self):
        sys = DiscreteStateSpace([[1.2]], [[1.0]], [[1.0]], [[0.0]])
        assert hinf_norm(sys) == math.inf

    @pytest.mark.parametrize("seed", range(5))
    def test_against_dense_frequency_grid(self, seed):
        rng = np.random.default_rng(seed)
        sys = random_stable_discrete(rng, 6, m=2, p=2, radius=0.9)
        ref = grid_hinf(sys)
        got = hinf_norm(sys)
        assert got >= ref * (1 - 1e-6)  # within the iteration tolerance
        assert abs(got - ref) / ref <= 1e-4

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 10_000), st.floats(0.1, 10.0))
    def test_scales_linearly(self, seed, c):
        sys = random_stable_discrete(np.random.default_rng(seed), 3, radius=0.8)
        scaled = DiscreteStateSpace(sys.A, sys.B, c * sys.C, c * sys.D, sys.period)
        assert hinf_norm(scaled) == pytest.approx(c * hinf_norm(sys), rel=1e-5)
