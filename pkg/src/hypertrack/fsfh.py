"""Generalized plant construction with the fast-sample/fast-hold approximation.

The design plant has exogenous inputs ``r`` (reference, weighted by
``F_r``), optionally ``d`` (input disturbance, weighted by ``F_d``) and a
fictitious measurement noise; the control is ``M`` held values per frame.
Performance is the delayed error ``e~ = exp(-L s) F_r r - y`` sampled on the
fast grid ``h/N``, plus ``eps_u * u``.  The controller measures
``e = F_r r - y`` at frame starts.  Exogenous signals are held piecewise
constant on the fast grid, after which everything is finite dimensional and
can be lifted by ``N`` fast steps into one frame-rate discrete plant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import ValidationError
from .lifting import LiftedController
from .lti import (
    ContinuousStateSpace,
    DiscreteStateSpace,
    RationalTransferFunction,
    c2d_zoh,
    eigvals,
    tf_to_ss,
)

__all__ = [
    "DesignConfig",
    "DiscreteGeneralizedPlant",
    "make_weight",
    "make_weight_product",
    "build_fast_rate_plant",
    "build_generalized_plant",
    "unlift_controller",
]


def make_weight(omega: float, zeta: float) -> RationalTransferFunction:
    """Resonant weight ``s / (s^2 + zeta s + omega^2)``; its peak is ``1/zeta`` at ``omega``."""
    if not omega > 0:
        raise ValidationError("weight frequency must be positive", field="omega")
    if not zeta > 0:
        raise ValidationError("weight damping coefficient must be positive", field="zeta")
    return RationalTransferFunction((0.0, 1.0), (omega**2, zeta, 1.0))


def make_weight_product(omegas: Sequence[float], zeta: float) -> RationalTransferFunction:
    """``s / prod_i (s^2 + zeta s + omega_i^2)``: one resonant peak per frequency."""
    omegas = [float(w) for w in omegas]
    if not omegas:
        raise ValidationError("at least one frequency is required", field="omegas")
    for i, w in enumerate(omegas):
        if not w > 0:
            raise ValidationError("weight frequencies must be positive", field="omegas")
        if any(math.isclose(w, v, rel_tol=1e-12) for v in omegas[:i]):
            raise ValidationError(f"duplicate weight frequency {w}", field="omegas")
    if not zeta > 0:
        raise ValidationError("weight damping coefficient must be positive", field="zeta")
    den = np.array([1.0])
    for w in omegas:
        den = np.polynomial.polynomial.polymul(den, [w**2, zeta, 1.0])
    return RationalTransferFunction((0.0, 1.0), den)


@dataclass(frozen=True)
class DesignConfig:
    """Everything the synthesis needs.

    ``m`` is the tracking delay in frames (``L = m h``), ``N`` the fast-grid
    factor of the FSFH approximation (a multiple of ``M``; defaults to ``M``).
    """

    plant: RationalTransferFunction
    F_r: RationalTransferFunction
    F_d: Optional[RationalTransferFunction] = None
    h: float = 1.0
    M: int = 8
    N: Optional[int] = None
    m: int = 4
    gamma_range: tuple = (1e-2, 1e3)
    eps_u: float = 1e-4
    eps_n: float = 1e-4

    def __post_init__(self):
        if self.N is None:
            object.__setattr__(self, "N", self.M)
        object.__setattr__(self, "gamma_range", tuple(float(g) for g in self.gamma_range))
        self.validate()

    def validate(self):
        if not self.h > 0:
            raise ValidationError("must be positive", field="h")
        for name in ("M", "N", "m"):
            value = getattr(self, name)
            if int(value) != value:
                raise ValidationError("must be an integer", field=name)
        if self.M < 1:
            raise ValidationError("must be >= 1", field="M")
        if self.N < 1 or self.N % self.M:
            raise ValidationError(f"must be a multiple of M={self.M}, got {self.N}", field="N")
        if self.m < 0:
            raise ValidationError("must be >= 0", field="m")
        if not self.plant.is_strictly_proper():
            raise ValidationError("plant must be strictly proper", field="plant")
        if not self.F_r.is_strictly_proper():
            raise ValidationError("weight must be strictly proper", field="F_r")
        if self.F_d is not None and not self.F_d.is_strictly_proper():
            raise ValidationError("weight must be strictly proper", field="F_d")
        if not (self.eps_u > 0):
            raise ValidationError("must be positive", field="eps_u")
        if not (self.eps_n > 0):
            raise ValidationError("must be positive", field="eps_n")
        lo, hi = self.gamma_range
        if not (0 < lo < hi):
            raise ValidationError("need 0 < gamma_lo < gamma_hi", field="gamma_range")

    @property
    def L(self) -> float:
        return self.m * self.h

    def with_(self, **changes) -> "DesignConfig":
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class DiscreteGeneralizedPlant:
    """Frame-rate two-port plant ``[z; y] = [[P11, P12], [P21, P22]] [w; u]``."""

    A: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    C1: np.ndarray
    C2: np.ndarray
    D11: np.ndarray
    D12: np.ndarray
    D21: np.ndarray
    D22: np.ndarray
    h: float
    legend: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("A", "B1", "B2", "C1", "C2", "D11", "D12", "D21", "D22"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_states(self):
        return self.A.shape[0]

    @property
    def dims(self):
        """``(n, m1, m2, p1, p2)``: states, exogenous, control, performance, measurement."""
        return (self.A.shape[0], self.B1.shape[1], self.B2.shape[1],
                self.C1.shape[0], self.C2.shape[0])

    def as_statespace(self) -> DiscreteStateSpace:
        B = np.hstack([self.B1, self.B2])
        C = np.vstack([self.C1, self.C2])
        D = np.block([[self.D11, self.D12], [self.D21, self.D22]])
        return DiscreteStateSpace(self.A, B, C, D, self.h)

    def check_assumptions(self, tol=1e-9):
        """Raise naming the first violated standard H-infinity assumption."""
        n = self.n_states
        if np.linalg.matrix_rank(self.D12, tol=tol * max(1.0, np.abs(self.D12).max())) < self.D12.shape[1]:
            raise ValidationError("D12 does not have full column rank", field="D12 rank")
        if np.linalg.matrix_rank(self.D21, tol=tol * max(1.0, np.abs(self.D21).max())) < self.D21.shape[0]:
            raise ValidationError("D21 does not have full row rank", field="D21 rank")
        scale = max(1.0, np.abs(self.A).max())
        for lam in eigvals(self.A):
            if abs(lam) < 1.0 - 1e-9:
                continue
            shifted = self.A - lam * np.eye(n)
            ctrb = np.hstack([shifted, self.B2])
            if np.linalg.matrix_rank(ctrb, tol=1e-9 * scale) < n:
                raise ValidationError(
                    f"(A, B2) not stabilizable: mode {lam:.6g}", field="stabilizability"
                )
            obsv = np.vstack([shifted, self.C2])
            if np.linalg.matrix_rank(obsv, tol=1e-9 * scale) < n:
                raise ValidationError(
                    f"(C2, A) not detectable: mode {lam:.6g}", field="detectability"
                )


@dataclass(frozen=True, eq=False)
class FastRatePlant:
    """Un-lifted plant at the fast period ``h/N``.

    Inputs are ``[r, d, u]`` (``d`` only with a disturbance weight), outputs
    ``[e~, e]``.
    """

    system: DiscreteStateSpace
    n_continuous: int
    n_delay: int
    has_disturbance: bool


def build_fast_rate_plant(cfg: DesignConfig) -> FastRatePlant:
    """Continuous parts discretized at ``h/N`` plus the delay shift register."""
    P = tf_to_ss(cfg.plant)
    Fr = tf_to_ss(cfg.F_r)
    Fd = tf_to_ss(cfg.F_d) if cfg.F_d is not None else None
    nP, nR = P.n_states, Fr.n_states
    nD = Fd.n_states if Fd is not None else 0
    nc = nP + nR + nD
    n_in = 3 if Fd is not None else 2
    iu = n_in - 1

    A = np.zeros((nc, nc))
    B = np.zeros((nc, n_in))
    A[:nP, :nP] = P.A
    A[nP:nP + nR, nP:nP + nR] = Fr.A
    B[nP:nP + nR, 0] = Fr.B[:, 0]
    B[:nP, iu] = P.B[:, 0]
    if Fd is not None:
        A[nP + nR:, nP + nR:] = Fd.A
        A[:nP, nP + nR:] = P.B @ Fd.C
        B[nP + nR:, 1] = Fd.B[:, 0]
    C_y = np.zeros(nc)
    C_y[:nP] = P.C[0]
    C_rf = np.zeros(nc)
    C_rf[nP:nP + nR] = Fr.C[0]

    delta = cfg.h / cfg.N
    disc = c2d_zoh(ContinuousStateSpace(A, B, np.zeros((1, nc)), np.zeros((1, n_in))), delta)

    nz = cfg.m * cfg.N
    n = nc + nz
    Af = np.zeros((n, n))
    Af[:nc, :nc] = disc.A
    Bf = np.zeros((n, n_in))
    Bf[:nc] = disc.B
    if nz:
        Af[nc, :nc] = C_rf
        Af[nc + 1:, nc:n - 1] = np.eye(nz - 1)
    C_e = np.zeros(n)
    C_e[:nc] = -C_y
    if nz:
        C_e[n - 1] = 1.0
    else:
        C_e[:nc] += C_rf
    C_meas = np.zeros(n)
    C_meas[:nc] = C_rf - C_y
    system = DiscreteStateSpace(Af, Bf, np.vstack([C_e, C_meas]), np.zeros((2, n_in)), delta)
    return FastRatePlant(system, nc, nz, Fd is not None)


def build_generalized_plant(cfg: DesignConfig) -> DiscreteGeneralizedPlant:
    """Frame-lifted FSFH design plant.

    State count before lifting is ``n_P + n_Fr (+ n_Fd) + m N``.  Exogenous
    input is ``N`` held reference values (``2N`` with the disturbance) plus
    one noise channel; performance rows are the ``N`` fast samples of ``e~``
    followed by ``M`` rows of ``eps_u u``; the measurement is ``e`` at the
    frame start plus ``eps_n`` times the noise.
    """
    fast = build_fast_rate_plant(cfg)
    sysf = fast.system
    Af, Bf = sysf.A, sysf.B
    C_e = sysf.C[0]
    C_meas = sysf.C[1]
    N, M = cfg.N, cfg.M
    n = sysf.n_states
    hold = N // M
    n_exo_channels = 2 if fast.has_disturbance else 1
    iu = sysf.n_inputs - 1

    powers = [np.eye(n)]
    for _ in range(N):
        powers.append(powers[-1] @ Af)

    m1 = n_exo_channels * N + 1
    B1 = np.zeros((n, m1))
    B2 = np.zeros((n, M))
    C1 = np.zeros((N + M, n))
    D11 = np.zeros((N + M, m1))
    D12 = np.zeros((N + M, M))
    for ch in range(n_exo_channels):
        for l in range(N):
            B1[:, ch * N + l] = powers[N - 1 - l] @ Bf[:, ch]
    for l in range(N):
        B2[:, l // hold] += powers[N - 1 - l] @ Bf[:, iu]
    for i in range(N):
        C1[i] = C_e @ powers[i]
        for l in range(i):
            gain = C_e @ powers[i - 1 - l]
            for ch in range(n_exo_channels):
                D11[i, ch * N + l] = gain @ Bf[:, ch]
            D12[i, l // hold] += gain @ Bf[:, iu]
    D12[N:, :] = cfg.eps_u * np.eye(M)
    C2 = C_meas.reshape(1, n)
    D21 = np.zeros((1, m1))
    D21[0, -1] = cfg.eps_n
    D22 = np.zeros((1, M))

    legend = {
        "performance": {"e_tilde": [0, N], "eps_u_u": [N, N + M]},
        "exogenous": {"r": [0, N]},
        "measurement": "e(kh) + eps_n * noise",
        "n_continuous": fast.n_continuous,
        "n_delay": fast.n_delay,
    }
    if fast.has_disturbance:
        legend["exogenous"]["d"] = [N, 2 * N]
    legend["exogenous"]["noise"] = [m1 - 1, m1]
    plant = DiscreteGeneralizedPlant(A=powers[N], B1=B1, B2=B2, C1=C1, C2=C2,
                                     D11=D11, D12=D12, D21=D21, D22=D22, h=cfg.h,
                                     legend=legend)
    plant.check_assumptions()
    return plant


def unlift_controller(K: DiscreteStateSpace, M: int) -> LiftedController:
    """Wrap a frame-rate synthesis result (1 input, ``M`` outputs) for simulation."""
    if K.n_inputs != 1 or K.n_outputs != M:
        raise ValidationError(
            f"controller must have 1 input and {M} outputs, got "
            f"{K.n_inputs} and {K.n_outputs}"
        )
    return LiftedController(K.A, K.B, K.C, K.D, M, K.period)
