"""Finite-dimensional LTI machinery.

Transfer functions, state-space quadruples, exact zero-order-hold
discretization, interconnections, spectra and the discrete-time H-infinity
norm.  Every object is immutable once built; all functions are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg
from numpy.polynomial import polynomial as npoly

from .errors import ValidationError

__all__ = [
    "RationalTransferFunction",
    "ContinuousStateSpace",
    "DiscreteStateSpace",
    "as_ss",
    "tf_to_ss",
    "expm",
    "c2d_zoh",
    "series",
    "parallel",
    "feedback",
    "eigvals",
    "spectral_radius",
    "hinf_norm",
]


def _frozen(a, shape=None):
    out = np.array(a, dtype=float)
    if shape is not None:
        out = out.reshape(shape)
    out.setflags(write=False)
    return out


def _trim(coeffs):
    """Drop trailing (highest-power) zeros of an ascending coefficient list."""
    c = np.atleast_1d(np.asarray(coeffs, dtype=float))
    nz = np.nonzero(c)[0]
    if nz.size == 0:
        return np.zeros(1)
    return c[: nz[-1] + 1]


@dataclass(frozen=True)
class RationalTransferFunction:
    """Scalar rational transfer function ``num(x) / den(x)``.

    Coefficients are stored in *ascending* powers of the variable, so
    ``1/(s**2 + 2s + 1)`` is ``num=(1,)``, ``den=(1, 2, 1)`` and
    ``s/(s**2 + 0.1s + w**2)`` is ``num=(0, 1)``, ``den=(w**2, 0.1, 1)``.
    """

    num: tuple
    den: tuple
    var: str = "s"
    period: Optional[float] = None

    def __post_init__(self):
        num = _trim(self.num)
        den = _trim(self.den)
        if not np.all(np.isfinite(num)) or not np.all(np.isfinite(den)):
            raise ValidationError("coefficients must be finite")
        if den[-1] == 0.0:
            raise ValidationError("denominator must be nonzero")
        if self.var not in ("s", "z"):
            raise ValidationError(f"unknown variable {self.var!r}", field="var")
        if self.var == "z" and (self.period is None or self.period <= 0):
            raise ValidationError("discrete transfer function needs period > 0")
        object.__setattr__(self, "num", tuple(float(v) for v in num))
        object.__setattr__(self, "den", tuple(float(v) for v in den))

    @property
    def order(self) -> int:
        return len(self.den) - 1

    @property
    def relative_degree(self) -> int:
        if not any(self.num):
            return math.inf
        return (len(self.den) - 1) - (len(self.num) - 1)

    def is_proper(self) -> bool:
        return self.relative_degree >= 0

    def is_strictly_proper(self) -> bool:
        return self.relative_degree >= 1

    def __call__(self, x):
        x = np.asarray(x, dtype=complex)
        return npoly.polyval(x, self.num) / npoly.polyval(x, self.den)

    def freqresp(self, omega):
        """Complex response at ``j*omega`` (continuous) or ``exp(j*omega*T)``."""
        omega = np.asarray(omega, dtype=float)
        if self.var == "s":
            return self(1j * omega)
        return self(np.exp(1j * omega * self.period))

    def poles(self):
        return npoly.polyroots(self.den) if self.order > 0 else np.zeros(0, complex)

    def zeros(self):
        return npoly.polyroots(self.num) if len(self.num) > 1 else np.zeros(0, complex)

    def _check_same_domain(self, other):
        if self.var != other.var or self.period != other.period:
            raise ValidationError("transfer functions live in different domains")

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return RationalTransferFunction(
                np.asarray(self.num) * other, self.den, self.var, self.period
            )
        self._check_same_domain(other)
        return RationalTransferFunction(
            npoly.polymul(self.num, other.num),
            npoly.polymul(self.den, other.den),
            self.var,
            self.period,
        )

    __rmul__ = __mul__

    def __add__(self, other):
        self._check_same_domain(other)
        num = npoly.polyadd(
            npoly.polymul(self.num, other.den), npoly.polymul(other.num, self.den)
        )
        return RationalTransferFunction(
            num, npoly.polymul(self.den, other.den), self.var, self.period
        )

    def to_dict(self):
        return {"num": list(self.num), "den": list(self.den)}


@dataclass(frozen=True, eq=False)
class _StateSpace:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float)) if np.size(self.A) else np.zeros((0, 0))
        n = A.shape[0]
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValidationError(f"A must be square, got shape {A.shape}")
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        p, m = D.shape
        B = np.asarray(self.B, dtype=float).reshape(n, m)
        C = np.asarray(self.C, dtype=float).reshape(p, n)
        for name, mat in (("A", A), ("B", B), ("C", C), ("D", D)):
            if not np.all(np.isfinite(mat)):
                raise ValidationError("entries must be finite", field=name)
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "B", _frozen(B))
        object.__setattr__(self, "C", _frozen(C))
        object.__setattr__(self, "D", _frozen(D))

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.D.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.D.shape[0]

    def evaluate(self, x):
        """Transfer matrix ``C (xI - A)^-1 B + D`` at one complex point."""
        n = self.n_states
        if n == 0:
            return self.D.astype(complex)
        return self.D + self.C @ np.linalg.solve(x * np.eye(n) - self.A, self.B)

    def poles(self):
        return eigvals(self.A)

    def _like(self, A, B, C, D):
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class ContinuousStateSpace(_StateSpace):
    """``dx/dt = A x + B u``, ``y = C x + D u``."""

    def freqresp(self, omega):
        omega = np.atleast_1d(np.asarray(omega, dtype=float))
        return np.array([self.evaluate(1j * w) for w in omega])

    def is_stable(self) -> bool:
        return self.n_states == 0 or bool(np.max(eigvals(self.A).real) < 0)

    def _like(self, A, B, C, D):
        return ContinuousStateSpace(A, B, C, D)


@dataclass(frozen=True, eq=False)
class DiscreteStateSpace(_StateSpace):
    """``x[k+1] = A x[k] + B u[k]``, ``y[k] = C x[k] + D u[k]`` at ``period`` seconds."""

    period: float = 1.0

    def __post_init__(self):
        super().__post_init__()
        if not self.period > 0:
            raise ValidationError("period must be positive", field="period")
        object.__setattr__(self, "period", float(self.period))

    def freqresp(self, omega):
        omega = np.atleast_1d(np.asarray(omega, dtype=float))
        return np.array([self.evaluate(np.exp(1j * w * self.period)) for w in omega])

    def is_stable(self) -> bool:
        return spectral_radius(self.A) < 1.0

    def simulate(self, u, x0=None):
        """Response to an input sequence ``u`` of shape (steps, inputs)."""
        u = np.asarray(u, dtype=float).reshape(-1, self.n_inputs)
        x = np.zeros(self.n_states) if x0 is None else np.asarray(x0, dtype=float)
        y = np.empty((u.shape[0], self.n_outputs))
        for k, uk in enumerate(u):
            y[k] = self.C @ x + self.D @ uk
            x = self.A @ x + self.B @ uk
        return y

    def _like(self, A, B, C, D):
        return DiscreteStateSpace(A, B, C, D, self.period)


def tf_to_ss(tf: RationalTransferFunction):
    """Controllable canonical realization of a proper transfer function.

    >>> sys = tf_to_ss(RationalTransferFunction((1,), (1, 2, 1)))
    >>> sys.A.tolist(), sys.B.ravel().tolist(), sys.C.tolist()
    ([[0.0, 1.0], [-1.0, -2.0]], [0.0, 1.0], [[1.0, 0.0]])
    """
    if not tf.is_proper():
        raise ValidationError(
            f"transfer function is improper (relative degree {tf.relative_degree})"
        )
    den = np.asarray(tf.den)
    lead = den[-1]
    a = den / lead
    b = np.zeros(len(den))
    b[: len(tf.num)] = np.asarray(tf.num) / lead
    n = len(den) - 1
    d = b[n]
    A = np.zeros((n, n))
    if n:
        A[:-1, 1:] = np.eye(n - 1)
        A[-1, :] = -a[:n]
    B = np.zeros((n, 1))
    if n:
        B[-1, 0] = 1.0
    C = (b[:n] - a[:n] * d).reshape(1, n)
    D = [[d]]
    if tf.var == "z":
        return DiscreteStateSpace(A, B, C, D, tf.period)
    return ContinuousStateSpace(A, B, C, D)


def as_ss(sys):
    """Accept a transfer function or a state-space model; return state space."""
    if isinstance(sys, RationalTransferFunction):
        return tf_to_ss(sys)
    if isinstance(sys, _StateSpace):
        return sys
    raise ValidationError(f"cannot interpret {type(sys).__name__} as an LTI system")


# Diagonal Pade(6,6) coefficients.  With ||A||_1 <= 1/2 the truncation error
# bound 2^(3-2q) (q!)^2 / ((2q)! (2q+1)!) is below 4e-16.
_PADE_ORDER = 6
_PADE = [
    math.factorial(2 * _PADE_ORDER - k)
    * math.factorial(_PADE_ORDER)
    / (math.factorial(2 * _PADE_ORDER) * math.factorial(k) * math.factorial(_PADE_ORDER - k))
    for k in range(_PADE_ORDER + 1)
]
_EXPM_THRESHOLD = 0.5


def expm(A, t=1.0):
    """Matrix exponential ``exp(A t)`` by scaling and squaring with Pade(6,6)."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError(f"expm needs a square matrix, got shape {A.shape}")
    n = A.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    M = A * float(t)
    if not np.all(np.isfinite(M)):
        raise ValidationError("expm argument has non-finite entries")
    norm = np.linalg.norm(M, 1)
    s = 0 if norm <= _EXPM_THRESHOLD else int(math.ceil(math.log2(norm / _EXPM_THRESHOLD)))
    M = M / (2.0**s)
    eye = np.eye(n)
    power = eye
    num = _PADE[0] * eye
    den = _PADE[0] * eye
    for k in range(1, _PADE_ORDER + 1):
        power = power @ M
        num = num + _PADE[k] * power
        den = den + ((-1) ** k) * _PADE[k] * power
    E = np.linalg.solve(den, num)
    for _ in range(s):
        E = E @ E
    return E


def c2d_zoh(sys: ContinuousStateSpace, dt: float) -> DiscreteStateSpace:
    """Exact zero-order-hold discretization via one block exponential.

    ``expm([[A, B], [0, 0]] dt) = [[Ad, Bd], [0, I]]``.
    """
    if not dt > 0:
        raise ValidationError("sampling period must be positive", field="dt")
    sys = as_ss(sys)
    n, m = sys.n_states, sys.n_inputs
    block = np.zeros((n + m, n + m))
    block[:n, :n] = sys.A
    block[:n, n:] = sys.B
    E = expm(block, dt)
    return DiscreteStateSpace(E[:n, :n], E[:n, n:], sys.C, sys.D, dt)


def zoh_integral(A, B, dt):
    """``Gamma(dt) = int_0^dt exp(A tau) B dtau`` (the ZOH input matrix)."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    n, m = B.shape
    if dt == 0:
        return np.zeros((n, m))
    block = np.zeros((n + m, n + m))
    block[:n, :n] = A
    block[:n, n:] = B
    return expm(block, dt)[:n, n:]


def _pair(sys1, sys2):
    sys1, sys2 = as_ss(sys1), as_ss(sys2)
    if type(sys1) is not type(sys2):
        raise ValidationError("cannot connect continuous and discrete systems")
    if isinstance(sys1, DiscreteStateSpace) and not math.isclose(sys1.period, sys2.period):
        raise ValidationError("discrete systems have different periods")
    return sys1, sys2


def series(sys1, sys2):
    """``u -> sys1 -> sys2 -> y`` (transfer matrix ``G2 G1``)."""
    s1, s2 = _pair(sys1, sys2)
    if s1.n_outputs != s2.n_inputs:
        raise ValidationError("series: output/input dimensions differ")
    n1, n2 = s1.n_states, s2.n_states
    A = np.block([[s1.A, np.zeros((n1, n2))], [s2.B @ s1.C, s2.A]])
    B = np.vstack([s1.B, s2.B @ s1.D])
    C = np.hstack([s2.D @ s1.C, s2.C])
    D = s2.D @ s1.D
    return s1._like(A, B, C, D)


def parallel(sys1, sys2, sign=1.0):
    """``y = sys1 u + sign * sys2 u``."""
    s1, s2 = _pair(sys1, sys2)
    if s1.D.shape != s2.D.shape:
        raise ValidationError("parallel: port dimensions differ")
    n1, n2 = s1.n_states, s2.n_states
    A = np.block([[s1.A, np.zeros((n1, n2))], [np.zeros((n2, n1)), s2.A]])
    B = np.vstack([s1.B, s2.B])
    C = np.hstack([s1.C, sign * s2.C])
    D = s1.D + sign * s2.D
    return s1._like(A, B, C, D)


def feedback(sys1, sys2, sign=-1.0):
    """Close ``sys2`` around ``sys1``: ``u1 = r + sign * sys2(y1)``, output ``y1``."""
    s1, s2 = _pair(sys1, sys2)
    if s1.n_outputs != s2.n_inputs or s2.n_outputs != s1.n_inputs:
        raise ValidationError("feedback: port dimensions differ")
    p1 = s1.n_outputs
    loop = np.eye(p1) - sign * s1.D @ s2.D
    if np.linalg.cond(loop) > 1e12:
        raise ValidationError("feedback: algebraic loop (I - sign*D1*D2 is singular)")
    E = np.linalg.inv(loop)
    # y1 = E (C1 x1 + sign D1 C2 x2 + D1 r);  u1 = r + sign (C2 x2 + D2 y1)
    Cy_x1 = E @ s1.C
    Cy_x2 = sign * E @ s1.D @ s2.C
    Dy = E @ s1.D
    Cu_x1 = sign * s2.D @ Cy_x1
    Cu_x2 = sign * (s2.C + s2.D @ Cy_x2)
    Du = np.eye(s1.n_inputs) + sign * s2.D @ Dy
    A = np.block(
        [
            [s1.A + s1.B @ Cu_x1, s1.B @ Cu_x2],
            [s2.B @ Cy_x1, s2.A + s2.B @ Cy_x2],
        ]
    )
    B = np.vstack([s1.B @ Du, s2.B @ Dy])
    C = np.hstack([Cy_x1, Cy_x2])
    return s1._like(A, B, C, Dy)


def eigvals(A, vectors=False):
    """Full spectrum of a square matrix (LAPACK Hessenberg-QR).

    With ``vectors=True`` returns ``(w, V)`` with unit-norm columns.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError(f"eigvals needs a square matrix, got shape {A.shape}")
    if A.shape[0] == 0:
        empty = np.zeros(0, dtype=complex)
        return (empty, np.zeros((0, 0), dtype=complex)) if vectors else empty
    if vectors:
        return np.linalg.eig(A)
    return np.linalg.eigvals(A)


def spectral_radius(A) -> float:
    w = eigvals(A)
    return float(np.max(np.abs(w))) if w.size else 0.0


def _sigma_max(sys, z):
    return float(np.linalg.svd(sys.evaluate(z), compute_uv=False)[0]) if sys.D.size else 0.0


def _unit_circle_angles(sys, gamma, circle_tol):
    """Angles in [0, pi] where ``gamma`` is a singular value of G(e^{j theta}).

    Unit-circle generalized eigenvalues of the pencil (M, L) below, acting on
    ``(x, p, v)``, mark those frequencies.
    """
    A, B, C, D = sys.A, sys.B, sys.C, sys.D
    n, m = B.shape
    R = gamma**2 * np.eye(m) - D.T @ D
    M = np.block(
        [
            [A, np.zeros((n, n)), B],
            [np.zeros((n, n)), -np.eye(n), np.zeros((n, m))],
            [-D.T @ C, -B.T, R],
        ]
    )
    L = np.zeros_like(M)
    L[:n, :n] = np.eye(n)
    L[n : 2 * n, :n] = -C.T @ C
    L[n : 2 * n, n : 2 * n] = -A.T
    L[n : 2 * n, 2 * n :] = -C.T @ D
    lam = scipy.linalg.eigvals(M, L)
    lam = lam[np.isfinite(lam)]
    on_circle = lam[np.abs(np.abs(lam) - 1.0) < circle_tol]
    angles = np.abs(np.angle(on_circle))
    return np.unique(np.round(angles, 12))


def hinf_norm(sys: DiscreteStateSpace, tol: float = 1e-6, max_iter: int = 60) -> float:
    """H-infinity norm of a stable discrete-time system.

    Level-set iteration on gamma: at each trial level the symplectic pencil
    is searched for unit-circle eigenvalues; their angles bracket the
    frequency bands above the level, whose midpoints raise the lower bound.
    The result is within relative ``tol`` of the supremum over the unit
    circle.  Returns ``math.inf`` when A is not Schur stable.
    """
    if not isinstance(sys, DiscreteStateSpace):
        raise ValidationError("hinf_norm expects a DiscreteStateSpace")
    if sys.n_inputs == 0 or sys.n_outputs == 0:
        return 0.0
    if sys.n_states == 0:
        return float(np.linalg.svd(sys.D, compute_uv=False)[0])
    w = eigvals(sys.A)
    if np.max(np.abs(w)) >= 1.0:
        return math.inf
    probes = [0.0, math.pi] + list(np.abs(np.angle(w[np.abs(w) > 1e-8])))
    lower = max(float(np.linalg.svd(sys.D, compute_uv=False)[0]),
                max(_sigma_max(sys, np.exp(1j * th)) for th in probes))
    if lower == 0.0:
        return 0.0
    for _ in range(max_iter):
        gamma = (1.0 + 2.0 * tol) * lower
        angles = _unit_circle_angles(sys, gamma, circle_tol=1e-6)
        if angles.size == 0:
            break
        grid = np.sort(np.concatenate([[0.0], angles, [math.pi]]))
        mids = 0.5 * (grid[:-1] + grid[1:])
        best = max(_sigma_max(sys, np.exp(1j * th)) for th in np.concatenate([mids, angles]))
        if best <= lower * (1.0 + 0.5 * tol):
            break
        lower = best
    return (1.0 + tol) * lower
