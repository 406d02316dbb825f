"""Multirate lifting of the sampled-data loop.

The measurement is sampled every ``h`` seconds, upsampled by ``M`` and fed
to a controller running at ``h/M``; its outputs go through a zero-order
hold of width ``h/M``.  Lifting with period ``h`` turns this periodic loop
into a time-invariant discrete system whose per-frame signals are the
intersample segments, represented here on a finite offset grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ValidationError
from .lti import (
    ContinuousStateSpace,
    DiscreteStateSpace,
    as_ss,
    expm,
    spectral_radius,
    zoh_integral,
)

__all__ = [
    "LiftedController",
    "GeneralizedHold",
    "LiftedClosedLoop",
    "upsample",
    "lift_controller",
    "hold_response",
    "default_theta_grid",
    "build_lifted_closed_loop",
    "lifted_simulate",
]


def _ro(a):
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class LiftedController:
    """Frame-rate controller: one sampled input, ``M`` held outputs per frame.

    ``x[k+1] = barA x[k] + barB e[k]`` and the ``M`` control values applied on
    successive ``h/M`` intervals are ``barC x[k] + barD e[k]``.
    """

    barA: np.ndarray
    barB: np.ndarray
    barC: np.ndarray
    barD: np.ndarray
    M: int
    h: float

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 1:
            raise ValidationError("M must be a positive integer", field="M")
        if not self.h > 0:
            raise ValidationError("h must be positive", field="h")
        M = int(self.M)
        A = np.asarray(self.barA, dtype=float)
        n = A.shape[0] if A.size else 0
        A = A.reshape(n, n)
        B = np.asarray(self.barB, dtype=float).reshape(n, 1)
        C = np.asarray(self.barC, dtype=float).reshape(M, n)
        D = np.asarray(self.barD, dtype=float).reshape(M, 1)
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "h", float(self.h))
        for name, mat in (("barA", A), ("barB", B), ("barC", C), ("barD", D)):
            object.__setattr__(self, name, _ro(mat))

    @property
    def n_states(self) -> int:
        return self.barA.shape[0]

    def as_discrete(self) -> DiscreteStateSpace:
        return DiscreteStateSpace(self.barA, self.barB, self.barC, self.barD, self.h)

    @classmethod
    def zero(cls, M, h):
        """The trivial controller ``u = 0``."""
        return cls(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((M, 0)), np.zeros((M, 1)), M, h)


@dataclass(frozen=True)
class GeneralizedHold:
    """Hold vector ``H(theta)``: indicators of the ``M`` subintervals of ``[0, h)``."""

    M: int
    h: float
    kind: str = "zero_order"

    def __post_init__(self):
        if self.kind != "zero_order":
            raise ValidationError(f"unsupported hold kind {self.kind!r}", field="kind")
        if self.M < 1 or not self.h > 0:
            raise ValidationError("hold needs M >= 1 and h > 0")

    def __call__(self, theta):
        """Row vector of the ``M`` basis functions at offset ``theta`` in [0, h)."""
        edges = np.arange(self.M + 1) * self.h / self.M
        return ((theta >= edges[:-1]) & (theta < edges[1:])).astype(float)

    @property
    def breakpoints(self):
        return np.arange(self.M + 1) * self.h / self.M


def upsample(seq, M):
    """Insert ``M - 1`` zeros after every sample.

    >>> upsample([1, 2], 3).tolist()
    [1.0, 0.0, 0.0, 2.0, 0.0, 0.0]
    """
    if int(M) != M or M < 1:
        raise ValidationError("M must be a positive integer", field="M")
    seq = np.asarray(seq, dtype=float).ravel()
    out = np.zeros(seq.size * int(M))
    out[:: int(M)] = seq
    return out


def lift_controller(K: DiscreteStateSpace, M: int) -> LiftedController:
    """Frame-rate form of a SISO controller that runs at period ``h/M``.

    Fed with the upsampled measurement, only the first of every ``M``
    inputs is nonzero, which yields ``barA = Ad^M``, ``barB = Ad^(M-1) Bd``,
    ``barC = [Cd; Cd Ad; ...]`` and ``barD = [Dd; Cd Bd; ...; Cd Ad^(M-2) Bd]``.
    """
    if not isinstance(K, DiscreteStateSpace):
        raise ValidationError("controller must be a DiscreteStateSpace")
    if K.n_inputs != 1 or K.n_outputs != 1:
        raise ValidationError("lift_controller requires a SISO controller")
    M = int(M)
    if M < 1:
        raise ValidationError("M must be a positive integer", field="M")
    A, B, C, D = K.A, K.B, K.C, K.D
    n = K.n_states
    rows_C = []
    rows_D = [D[0, 0]]
    power = np.eye(n)
    for i in range(M):
        rows_C.append((C @ power).ravel())
        if i < M - 1:
            rows_D.append((C @ power @ B)[0, 0])
            power = power @ A
    barB = power @ B
    barA = power @ A
    return LiftedController(
        barA, barB, np.array(rows_C).reshape(M, n), np.array(rows_D).reshape(M, 1),
        M, K.period * M,
    )


def hold_response(plant, theta, M, h):
    """``B(theta) = int_0^theta exp(A (theta - tau)) B H(tau) dtau``, shape (n, M).

    Column ``j`` is zero before the ``j``-th subinterval opens, the partial
    ZOH integral while it is open, and the full integral propagated by
    ``exp(A (theta - (j+1) h/M))`` after it closes.
    """
    plant = as_ss(plant)
    if plant.n_inputs != 1:
        raise ValidationError("hold_response requires a single-input plant")
    if not (0.0 <= theta <= h * (1 + 1e-12)):
        raise ValidationError(f"theta={theta} outside [0, h]", field="theta")
    theta = min(theta, h)
    A, B = plant.A, plant.B
    n = plant.n_states
    width = h / M
    full = zoh_integral(A, B, width)[:, 0]
    out = np.zeros((n, M))
    for j in range(M):
        start, stop = j * width, (j + 1) * width
        if theta <= start:
            continue
        if theta >= stop:
            out[:, j] = expm(A, theta - stop) @ full
        else:
            out[:, j] = zoh_integral(A, B, theta - start)[:, 0]
    return out


def default_theta_grid(h, N):
    """``N`` equispaced offsets ``0, h/N, ..., (N-1) h/N``."""
    return np.arange(int(N)) * (h / int(N))


@dataclass(frozen=True, eq=False)
class LiftedClosedLoop:
    """Lifted sampled-data loop on a finite offset grid.

    State is ``(controller state, plant state)`` at frame starts.  For each
    grid offset ``theta_i``::

        e[k](theta_i) = output_C[i] @ x[k] + r[k](theta_i) + output_D[i] * r[k](0)

    and ``x[k+1] = state_A x[k] + state_B r[k](0)``.
    """

    state_A: np.ndarray
    state_B: np.ndarray
    output_C: np.ndarray
    output_D: np.ndarray
    theta_grid: np.ndarray
    n_controller: int

    def __post_init__(self):
        grid = np.asarray(self.theta_grid, dtype=float)
        if grid.size and (np.any(np.diff(grid) <= 0) or grid[0] < 0):
            raise ValidationError("theta_grid must be strictly increasing in [0, h)")
        for name in ("state_A", "state_B", "output_C", "output_D", "theta_grid"):
            object.__setattr__(self, name, _ro(getattr(self, name)))

    @property
    def spectral_radius(self) -> float:
        return spectral_radius(self.state_A)

    @property
    def is_stable(self) -> bool:
        return self.spectral_radius < 1.0


def build_lifted_closed_loop(plant, K: LiftedController, theta_grid=None):
    """Assemble the lifted closed loop for the loop ``e = r - y``.

    ``plant`` must be strictly proper and SISO.  The grid defaults to ``M``
    equispaced offsets per frame.
    """
    plant = as_ss(plant)
    if not isinstance(plant, ContinuousStateSpace):
        raise ValidationError("plant must be continuous-time")
    if plant.n_inputs != 1 or plant.n_outputs != 1:
        raise ValidationError("plant must be SISO")
    if np.any(plant.D != 0):
        raise ValidationError("plant must be strictly proper (D = 0)")
    M, h = K.M, K.h
    if theta_grid is None:
        theta_grid = default_theta_grid(h, M)
    theta_grid = np.asarray(theta_grid, dtype=float)
    if theta_grid.size and (theta_grid[-1] >= h or theta_grid[0] < 0):
        raise ValidationError("theta_grid must lie in [0, h)")
    Ac, Cc = plant.A, plant.C
    nc, nk = plant.n_states, K.n_states
    Bh = hold_response(plant, h, M, h)
    Phi = expm(Ac, h)
    state_A = np.block(
        [
            [K.barA, -K.barB @ Cc],
            [Bh @ K.barC, Phi - Bh @ K.barD @ Cc],
        ]
    )
    state_B = np.vstack([K.barB, Bh @ K.barD])
    out_C = np.zeros((theta_grid.size, nk + nc))
    out_D = np.zeros(theta_grid.size)
    for i, th in enumerate(theta_grid):
        Bt = hold_response(plant, th, M, h)
        out_C[i, :nk] = -(Cc @ Bt @ K.barC).ravel()
        out_C[i, nk:] = (-Cc @ expm(Ac, th) + Cc @ Bt @ K.barD @ Cc).ravel()
        out_D[i] = -(Cc @ Bt @ K.barD)[0, 0]
    return LiftedClosedLoop(state_A, state_B, out_C, out_D, theta_grid, nk)


def lifted_simulate(loop: LiftedClosedLoop, frame_inputs, x0: Optional[np.ndarray] = None):
    """Iterate the lifted loop over ``K`` frames.

    ``frame_inputs`` has shape (K, len(theta_grid)) holding ``r[k](theta_i)``;
    the first column must be the frame-start value ``r[k](0)``.  Returns
    ``e[k](theta_i)`` with the same shape.
    """
    r = np.atleast_2d(np.asarray(frame_inputs, dtype=float))
    if r.size == 0:
        return np.zeros((0, loop.theta_grid.size))
    if r.shape[1] != loop.theta_grid.size:
        raise ValidationError("frame_inputs must have one column per grid offset")
    if loop.theta_grid[0] != 0.0:
        raise ValidationError("theta_grid must start at 0 so r[k](0) is available")
    n = loop.state_A.shape[0]
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).reshape(n)
    e = np.empty_like(r)
    bvec = loop.state_B.ravel()
    for k, rk in enumerate(r):
        e[k] = loop.output_C @ x + rk + loop.output_D * rk[0]
        x = loop.state_A @ x + bvec * rk[0]
    return e
