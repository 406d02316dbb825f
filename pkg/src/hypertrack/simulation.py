"""Exact hybrid simulation of the multirate sampled-data loop.

Sinusoidal references and disturbances are generated by rotation-generator
exosystems appended to the plant state, so every fast-grid step is one
exact zero-order-hold transition and grid-point values carry only expm
round-off.  The controller is sampled once per frame and its ``M`` outputs
are held over successive ``h/M`` intervals.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import SimulationDivergence, ValidationError
from .lifting import LiftedController
from .lti import ContinuousStateSpace, RationalTransferFunction, as_ss, c2d_zoh

__all__ = [
    "Sinusoid",
    "SignalSpec",
    "SimulationResult",
    "simulate_closed_loop",
    "steady_state_metrics",
    "frequency_gain_probe",
    "thread_count",
]

THREADS_ENV = "HYPERTRACK_THREADS"


def thread_count() -> int:
    """Worker count for scenario sweeps, from ``$HYPERTRACK_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class Sinusoid:
    amplitude: float
    omega: float
    phase: float = 0.0

    def __post_init__(self):
        if not self.omega > 0:
            raise ValidationError("sinusoid frequency must be positive", field="omega")


@dataclass(frozen=True)
class SignalSpec:
    """Sum of sinusoids ``sum a sin(w t + phi)`` switched on at ``t = 0``."""

    components: tuple
    entry: str = "reference"

    def __post_init__(self):
        comps = tuple(c if isinstance(c, Sinusoid) else Sinusoid(*c) for c in self.components)
        object.__setattr__(self, "components", comps)
        if self.entry not in ("reference", "input_disturbance"):
            raise ValidationError(f"unknown entry point {self.entry!r}", field="entry")

    @classmethod
    def sine(cls, omega, amplitude=1.0, phase=0.0, entry="reference"):
        return cls((Sinusoid(amplitude, omega, phase),), entry)

    @property
    def omegas(self):
        return [c.omega for c in self.components]

    def __call__(self, t):
        """Signal value; zero for ``t < 0``."""
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for c in self.components:
            out = out + c.amplitude * np.sin(c.omega * t + c.phase)
        return np.where(t >= 0, out, 0.0)

    def filtered_steady_state(self, tf: RationalTransferFunction, t):
        """Steady-state response of ``tf`` to this signal (per-component complex gain)."""
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for c in self.components:
            g = complex(tf.freqresp(c.omega))
            out = out + c.amplitude * abs(g) * np.sin(c.omega * t + c.phase + np.angle(g))
        return np.where(t >= 0, out, 0.0)

    def exosystem(self):
        """``(A, C, x0)`` with ``C expm(A t) x0`` equal to the signal for ``t >= 0``."""
        k = len(self.components)
        A = np.zeros((2 * k, 2 * k))
        C = np.zeros((1, 2 * k))
        x0 = np.zeros(2 * k)
        for i, c in enumerate(self.components):
            # state (sin, cos) of (w t + phi)
            A[2 * i, 2 * i + 1] = c.omega
            A[2 * i + 1, 2 * i] = -c.omega
            C[0, 2 * i] = c.amplitude
            x0[2 * i] = math.sin(c.phase)
            x0[2 * i + 1] = math.cos(c.phase)
        return A, C, x0


@dataclass(eq=False)
class SimulationResult:
    """Fast-grid trajectories; ``u[i]`` is the value held on ``[t[i], t[i+1])``."""

    t: np.ndarray
    r: np.ndarray
    r_delayed: np.ndarray
    target: np.ndarray
    y: np.ndarray
    e: np.ndarray
    e_tilde: np.ndarray
    u: np.ndarray
    h: float
    M: int
    n_sim: int
    delay: float
    prefiltered: bool = False
    metrics: dict = field(default_factory=dict)

    @property
    def duration(self) -> float:
        return self.t.size * self.h / self.n_sim

    def columns(self):
        """Ordered trajectory columns as written to CSV."""
        return {
            "t": self.t,
            "r": self.r,
            "r_delayed": self.r_delayed,
            "target_normalized": self.target,
            "y": self.y,
            "e_tilde": self.e_tilde,
            "u": self.u,
        }


def simulate_closed_loop(
    plant,
    controller: LiftedController,
    reference: Optional[SignalSpec] = None,
    disturbance: Optional[SignalSpec] = None,
    prefilter: Optional[RationalTransferFunction] = None,
    delay: float = 0.0,
    duration: float = 60.0,
    n_sim: Optional[int] = None,
    x0=None,
    overflow: float = 1e12,
    window_fraction: Optional[float] = 1.0 / 3.0,
) -> SimulationResult:
    """Simulate the loop of continuous ``plant`` and lifted ``controller``.

    The controller samples ``e = r - y`` (or ``F r - y`` when ``prefilter``
    is given) at every frame start.  ``disturbance`` is added to the plant
    input.  ``duration`` is rounded to whole frames and the grid spacing is
    ``h / n_sim`` (``n_sim`` defaults to ``4 M``).  Steady-state metrics are
    attached unless ``window_fraction`` is None or the run is too short.
    """
    plant = as_ss(plant)
    if not isinstance(plant, ContinuousStateSpace):
        raise ValidationError("plant must be continuous-time")
    if plant.n_inputs != 1 or plant.n_outputs != 1 or np.any(plant.D != 0):
        raise ValidationError("plant must be SISO and strictly proper")
    h, M = controller.h, controller.M
    n_sim = 4 * M if n_sim is None else int(n_sim)
    if n_sim < 1 or n_sim % M:
        raise ValidationError(f"n_sim must be a multiple of M={M}", field="n_sim")
    if duration < 0:
        raise ValidationError("duration must be nonnegative", field="duration")
    hold = n_sim // M
    n_frames = int(round(duration / h))
    reference = reference if reference is not None else SignalSpec(())
    Fs = as_ss(prefilter) if prefilter is not None else None

    Ar, Cr, xr0 = reference.exosystem()
    if disturbance is not None:
        Ad, Cd, xd0 = disturbance.exosystem()
    else:
        Ad, Cd, xd0 = np.zeros((0, 0)), np.zeros((1, 0)), np.zeros(0)
    nP, nr, nd = plant.n_states, Ar.shape[0], Ad.shape[0]
    nf = Fs.n_states if Fs is not None else 0
    n = nP + nr + nd + nf
    iP, ir, id_, iF = 0, nP, nP + nr, nP + nr + nd
    A = np.zeros((n, n))
    A[iP:ir, iP:ir] = plant.A
    A[ir:id_, ir:id_] = Ar
    A[id_:iF, id_:iF] = Ad
    A[iP:ir, id_:iF] = plant.B @ Cd
    if Fs is not None:
        A[iF:, iF:] = Fs.A
        A[iF:, ir:id_] = Fs.B @ Cr
    B = np.zeros((n, 1))
    B[iP:ir] = plant.B
    step = c2d_zoh(ContinuousStateSpace(A, B, np.zeros((1, n)), np.zeros((1, 1))), h / n_sim)
    Phi, Gam = step.A, step.B[:, 0]

    c_y = np.zeros(n)
    c_y[iP:ir] = plant.C[0]
    c_r = np.zeros(n)
    c_r[ir:id_] = Cr[0]
    if Fs is not None:
        c_meas = np.zeros(n)
        c_meas[iF:] = Fs.C[0]
        c_meas += Fs.D[0, 0] * c_r
    else:
        c_meas = c_r

    x = np.zeros(n)
    if x0 is not None:
        x[iP:ir] = np.asarray(x0, dtype=float).reshape(nP)
    x[ir:id_] = xr0
    x[id_:iF] = xd0
    xk = np.zeros(controller.n_states)
    barA, barB = controller.barA, controller.barB[:, 0]
    barC, barD = controller.barC, controller.barD[:, 0]

    steps = n_frames * n_sim
    states = np.empty((steps, n))
    u = np.empty(steps)
    i = 0
    for _ in range(n_frames):
        e_k = c_meas @ x - c_y @ x
        out = barC @ xk + barD * e_k
        xk = barA @ xk + barB * e_k
        for j in range(n_sim):
            states[i] = x
            u[i] = out[j // hold]
            x = Phi @ x + Gam * u[i]
            i += 1
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > overflow:
            partial = _assemble(states[:i], u[:i], c_y, c_r, c_meas, reference, prefilter,
                                delay, h, M, n_sim)
            raise SimulationDivergence(
                f"state magnitude exceeded {overflow:g} at t={i * h / n_sim:g}", partial=partial
            )
    result = _assemble(states, u, c_y, c_r, c_meas, reference, prefilter, delay, h, M, n_sim)
    if window_fraction is not None:
        try:
            result.metrics = steady_state_metrics(result, window_fraction)
        except ValidationError:
            result.metrics = {}
    return result


def _assemble(states, u, c_y, c_r, c_meas, reference, prefilter, delay, h, M, n_sim):
    t = np.arange(states.shape[0]) * (h / n_sim)
    y = states @ c_y
    r = states @ c_r
    r_delayed = reference(t - delay)
    if prefilter is not None:
        target = reference.filtered_steady_state(prefilter, t - delay)
    else:
        target = r_delayed
    return SimulationResult(
        t=t, r=r, r_delayed=r_delayed, target=target, y=y,
        e=states @ c_meas - y, e_tilde=r_delayed - y, u=u.copy(),
        h=h, M=M, n_sim=n_sim, delay=delay, prefiltered=prefilter is not None,
    )


def _rms(x):
    return float(np.sqrt(np.mean(np.square(x)))) if x.size else 0.0


def steady_state_metrics(result: SimulationResult, window_fraction: float = 1.0 / 3.0,
                         min_frames: int = 20) -> dict:
    """RMS and peak of the delayed error over the trailing window.

    The window is ``max(window_fraction * duration, min_frames * h)`` long.
    Relative values divide by the RMS of the delayed reference, and by the
    RMS of the prefiltered target when the loop carries a prefilter.
    """
    total = result.t.size
    per_frame = result.n_sim
    length = max(int(round(window_fraction * total)), min_frames * per_frame)
    if length > total or total == 0:
        raise ValidationError(
            f"steady-state window ({length} samples) longer than trajectory ({total})",
            field="window",
        )
    sl = slice(total - length, total)
    e_t = result.e_tilde[sl]
    rms_e = _rms(e_t)
    rms_ref = _rms(result.r_delayed[sl])
    metrics = {
        "window": [float(result.t[sl.start]), float(result.t[-1] + result.h / per_frame)],
        "rms_e_tilde": rms_e,
        "peak_e_tilde": float(np.max(np.abs(e_t))) if e_t.size else 0.0,
        "rms_r_delayed": rms_ref,
        "relative_rms": rms_e / rms_ref if rms_ref > 0 else math.nan,
    }
    if result.prefiltered:
        track = result.target[sl] - result.y[sl]
        rms_target = _rms(result.target[sl])
        metrics["rms_target"] = rms_target
        metrics["rms_tracking_error"] = _rms(track)
        metrics["relative_rms_target"] = _rms(track) / rms_target if rms_target > 0 else math.nan
    return metrics


def frequency_gain_probe(
    plant,
    controller: LiftedController,
    omegas: Sequence[float],
    delay: float = 0.0,
    duration: float = 120.0,
    n_sim: Optional[int] = None,
    settle_tol: float = 0.05,
    threads: Optional[int] = None,
):
    """Steady-state ratio ``RMS(e~) / RMS(r(t - L))`` for unit sinusoids.

    A sample is flagged ``converged=False`` when the gains over the last and
    the preceding window differ by more than ``settle_tol`` (relative).
    """
    threads = thread_count() if threads is None else threads

    def one(omega):
        res = simulate_closed_loop(plant, controller, SignalSpec.sine(omega), delay=delay,
                                   duration=duration, n_sim=n_sim, window_fraction=None)
        total = res.t.size
        length = max(total // 3, 20 * res.n_sim)
        if 2 * length > total:
            raise ValidationError("probe duration too short for two windows", field="duration")
        last = slice(total - length, total)
        prev = slice(total - 2 * length, total - length)
        g_last = _rms(res.e_tilde[last]) / _rms(res.r_delayed[last])
        g_prev = _rms(res.e_tilde[prev]) / _rms(res.r_delayed[prev])
        converged = abs(g_last - g_prev) <= settle_tol * max(g_last, 1e-3)
        return {"omega": float(omega), "gain": g_last, "converged": bool(converged)}

    omegas = [float(w) for w in omegas]
    if threads > 1 and len(omegas) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, omegas))
    return [one(w) for w in omegas]
