"""Discrete-time H-infinity output-feedback synthesis.

The frame-lifted plant is mapped to continuous time by the Cayley
transform ``z = (1 + s)/(1 - s)``, which preserves both stability and the
H-infinity norm.  There the two-Riccati central controller for a general
``D11`` is formed (after removing ``D22`` by loop shifting and normalizing
``D12``, ``D21``), and the result is mapped back.  Every controller handed
out has been re-verified on the discrete closed loop.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import InfeasibleError, NumericalError
from .fsfh import DiscreteGeneralizedPlant
from .lti import DiscreteStateSpace, hinf_norm, spectral_radius

log = logging.getLogger(__name__)

__all__ = [
    "HinfResult",
    "care_solve",
    "care",
    "care_residual",
    "cayley_d2c",
    "cayley_c2d",
    "lft_lower",
    "synthesize_fixed_gamma",
    "gamma_bisect",
]


# ---------------------------------------------------------------- Riccati


def care_residual(A, G, Q, X):
    """``A^T X + X A - X G X + Q``."""
    return A.T @ X + X @ A - X @ G @ X + Q


def care_solve(A, G, Q, newton_steps=1, imag_tol=1e-10):
    """Stabilizing solution of ``A^T X + X A - X G X + Q = 0``.

    ``G`` and ``Q`` are symmetric but may be indefinite.  The stable invariant
    subspace of the Hamiltonian ``[[A, -G], [-Q, -A^T]]`` is taken from an
    ordered real Schur form; ``newton_steps`` Newton corrections follow.
    ``A - G X`` is Hurwitz on return.

    Raises :class:`InfeasibleError` when the Hamiltonian has eigenvalues on
    the imaginary axis or the stable subspace is not a graph.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    G = 0.5 * (np.asarray(G, dtype=float) + np.asarray(G, dtype=float).T)
    Q = 0.5 * (np.asarray(Q, dtype=float) + np.asarray(Q, dtype=float).T)
    H = np.block([[A, -G], [-Q, -A.T]])
    scale = max(1.0, np.linalg.norm(H, 1))
    try:
        T, U, sdim = scipy.linalg.schur(H, output="real", sort="lhp")
    except np.linalg.LinAlgError as exc:
        # reordering flips eigenvalues sitting numerically on the axis
        raise InfeasibleError(f"Hamiltonian dichotomy lost in Schur reordering ({exc})",
                              condition="hamiltonian-dichotomy") from exc
    lam = np.linalg.eigvals(T)
    if np.min(np.abs(lam.real)) < imag_tol * scale:
        raise InfeasibleError("Hamiltonian has imaginary-axis eigenvalues",
                              condition="hamiltonian-imaginary-axis")
    if sdim != n:
        raise InfeasibleError(f"stable subspace has dimension {sdim}, expected {n}",
                              condition="hamiltonian-dichotomy")
    U11, U21 = U[:n, :n], U[n:, :n]
    if np.linalg.cond(U11) > 1e12:
        raise InfeasibleError("stable subspace is not a graph (U11 singular)",
                              condition="riccati-graph")
    X = np.linalg.solve(U11.T, U21.T).T
    X = 0.5 * (X + X.T)
    for _ in range(newton_steps):
        Acl = A - G @ X
        res = care_residual(A, G, Q, X)
        try:
            delta = scipy.linalg.solve_continuous_lyapunov(Acl.T, -res)
        except (np.linalg.LinAlgError, ValueError):
            break
        X_new = X + 0.5 * (delta + delta.T)
        if np.linalg.norm(care_residual(A, G, Q, X_new)) < np.linalg.norm(res):
            X = X_new
    if np.max(np.linalg.eigvals(A - G @ X).real) >= 0:
        raise InfeasibleError("Riccati solution is not stabilizing",
                              condition="riccati-stabilizing")
    return X


def care(A, B, Q, R, S=None):
    """Standard CARE ``A^T X + X A - (X B + S) R^-1 (B^T X + S^T) + Q = 0``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    R = np.atleast_2d(np.asarray(R, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if S is None:
        return care_solve(A, B @ np.linalg.solve(R, B.T), Q)
    S = np.asarray(S, dtype=float).reshape(B.shape)
    Rinv_St = np.linalg.solve(R, S.T)
    return care_solve(A - B @ Rinv_St, B @ np.linalg.solve(R, B.T), Q - S @ Rinv_St)


# ---------------------------------------------------------------- Cayley


def cayley_d2c(A, B, C, D):
    """Continuous quadruple with ``Gc(s) = Gd((1 + s)/(1 - s))``."""
    n = A.shape[0]
    Ai = np.linalg.inv(A + np.eye(n))
    return ((A - np.eye(n)) @ Ai, math.sqrt(2) * Ai @ B,
            math.sqrt(2) * C @ Ai, D - C @ Ai @ B)


def cayley_c2d(A, B, C, D):
    """Inverse of :func:`cayley_d2c`: ``Gd(z) = Gc((z - 1)/(z + 1))``."""
    n = A.shape[0]
    Ai = np.linalg.inv(np.eye(n) - A)
    return ((np.eye(n) + A) @ Ai, math.sqrt(2) * Ai @ B,
            math.sqrt(2) * C @ Ai, D + C @ Ai @ B)


# ---------------------------------------------------------------- LFT


def lft_lower(A, B1, B2, C1, C2, D11, D12, D21, D22, Ak, Bk, Ck, Dk):
    """Closed loop ``w -> z`` of the plant with ``u = K y``; returns (A, B, C, D)."""
    m2 = B2.shape[1]
    E = np.linalg.inv(np.eye(m2) - Dk @ D22)
    # u = E (Ck xk + Dk C2 x + Dk D21 w)
    Ux, Uk, Uw = E @ Dk @ C2, E @ Ck, E @ Dk @ D21
    # y = C2 x + D21 w + D22 u
    Yx, Yk, Yw = C2 + D22 @ Ux, D22 @ Uk, D21 + D22 @ Uw
    Acl = np.block([[A + B2 @ Ux, B2 @ Uk], [Bk @ Yx, Ak + Bk @ Yk]])
    Bcl = np.vstack([B1 + B2 @ Uw, Bk @ Yw])
    Ccl = np.hstack([C1 + D12 @ Ux, D12 @ Uk])
    Dcl = D11 + D12 @ Uw
    return Acl, Bcl, Ccl, Dcl


# ---------------------------------------------------------------- synthesis


@dataclass(frozen=True, eq=False)
class HinfResult:
    """Synthesized frame-rate controller and its independently verified loop."""

    controller: DiscreteStateSpace
    gamma: float
    closed_loop: DiscreteStateSpace
    diagnostics: dict = field(default_factory=dict)


def _sigma_max(M):
    return float(np.linalg.svd(M, compute_uv=False)[0]) if M.size else 0.0


def _psd_factor(M):
    """Square factor ``F`` with ``F F^T = M`` for a symmetric positive definite ``M``."""
    if M.size == 0:
        return M
    try:
        return np.linalg.cholesky(0.5 * (M + M.T))
    except np.linalg.LinAlgError as exc:
        raise InfeasibleError("D-hat factorization failed", condition="dhat-psd") from exc


def _central_continuous(A, B1, B2, C1, C2, D11, D12, D21, gamma):
    """Central controller for a continuous plant with ``D22 = 0``.

    Requires ``D12 = [0; I]`` and ``D21 = [0, I]``.  Returns the controller
    quadruple and Riccati diagnostics.
    """
    n = A.shape[0]
    m1, m2 = B1.shape[1], B2.shape[1]
    p1, p2 = C1.shape[0], C2.shape[0]
    g2 = gamma**2
    a, b = p1 - m2, m1 - p2
    D1111, D1112 = D11[:a, :b], D11[:a, b:]
    D1121, D1122 = D11[a:, :b], D11[a:, b:]
    bound = max(_sigma_max(np.hstack([D1111, D1112])), _sigma_max(np.vstack([D1111, D1121])))
    if not gamma > bound:
        raise InfeasibleError(f"gamma={gamma:.6g} below direct-feedthrough bound {bound:.6g}",
                              condition="gamma>D11-bound", gamma=gamma)
    B = np.hstack([B1, B2])
    C = np.vstack([C1, C2])
    D1_ = np.hstack([D11, D12])
    D_1 = np.vstack([D11, D21])
    R = D1_.T @ D1_
    R[:m1, :m1] -= g2 * np.eye(m1)
    Rt = D_1 @ D_1.T
    Rt[:p1, :p1] -= g2 * np.eye(p1)
    Rinv = np.linalg.inv(R)
    Rtinv = np.linalg.inv(Rt)

    Ax = A - B @ Rinv @ D1_.T @ C1
    Gx = B @ Rinv @ B.T
    Qx = C1.T @ (np.eye(p1) - D1_ @ Rinv @ D1_.T) @ C1
    Ay = A.T - C.T @ Rtinv @ D_1 @ B1.T
    Gy = C.T @ Rtinv @ C
    Qy = B1 @ (np.eye(m1) - D_1.T @ Rtinv @ D_1) @ B1.T

    try:
        X = care_solve(Ax, Gx, Qx)
    except InfeasibleError as exc:
        raise InfeasibleError(f"X Riccati: {exc}", condition="X-riccati", gamma=gamma) from exc
    try:
        Y = care_solve(Ay, Gy, Qy)
    except InfeasibleError as exc:
        raise InfeasibleError(f"Y Riccati: {exc}", condition="Y-riccati", gamma=gamma) from exc

    psd_tol = 1e-9
    ex, ey = np.linalg.eigvalsh(X), np.linalg.eigvalsh(Y)
    if ex.size and ex.min() < -psd_tol * max(1.0, np.abs(ex).max()):
        raise InfeasibleError("X is not positive semidefinite", condition="X>=0", gamma=gamma)
    if ey.size and ey.min() < -psd_tol * max(1.0, np.abs(ey).max()):
        raise InfeasibleError("Y is not positive semidefinite", condition="Y>=0", gamma=gamma)
    rho = spectral_radius(X @ Y) if n else 0.0
    if not rho < g2:
        raise InfeasibleError(f"coupling rho(XY)={rho:.6g} >= gamma^2={g2:.6g}",
                              condition="rho(XY)<gamma^2", gamma=gamma)

    F = -Rinv @ (D1_.T @ C1 + B.T @ X)
    Lg = -(B1 @ D_1.T + Y @ C.T) @ Rtinv
    F12, F2 = F[b:m1], F[m1:]
    L12, L2 = Lg[:, a:p1], Lg[:, p1:]

    Wa = np.linalg.inv(g2 * np.eye(a) - D1111 @ D1111.T) if a else np.zeros((0, 0))
    Wb = np.linalg.inv(g2 * np.eye(b) - D1111.T @ D1111) if b else np.zeros((0, 0))
    Dh11 = -D1121 @ D1111.T @ Wa @ D1112 - D1122
    Dh12 = _psd_factor(np.eye(m2) - D1121 @ Wb @ D1121.T)
    Dh21 = _psd_factor(np.eye(p2) - D1112.T @ Wa @ D1112).T
    Z = np.linalg.inv(np.eye(n) - Y @ X / g2)
    Bh2 = Z @ (B2 + L12) @ Dh12
    Ch2 = -Dh21 @ (C2 + F12)
    Bh1 = -Z @ L2 + Bh2 @ np.linalg.solve(Dh12, Dh11)
    Ch1 = F2 + Dh11 @ np.linalg.solve(Dh21, Ch2)
    Ah = A + B @ F + Bh1 @ np.linalg.solve(Dh21, Ch2)

    diag = {
        "X_residual": float(np.linalg.norm(care_residual(Ax, Gx, Qx, X))
                            / max(1.0, np.linalg.norm(X))),
        "Y_residual": float(np.linalg.norm(care_residual(Ay, Gy, Qy, Y))
                            / max(1.0, np.linalg.norm(Y))),
        "rho_XY_over_gamma2": float(rho / g2),
        "X_norm": float(np.linalg.norm(X, 2)) if n else 0.0,
        "Y_norm": float(np.linalg.norm(Y, 2)) if n else 0.0,
        "cond_Z": float(np.linalg.cond(Z)) if n else 1.0,
    }
    return (Ah, Bh1, Ch1, Dh11), diag


def _normalize(C1, D11, D12, B1, C2, D21, B2):
    """Orthogonal/invertible changes making ``D12 = [0; I]``, ``D21 = [0, I]``."""
    p1, m2 = D12.shape
    p2, m1 = D21.shape
    U, s, Vt = np.linalg.svd(D12, full_matrices=True)
    if s.size < m2 or s.min() <= 1e-14 * max(1.0, s.max()):
        raise InfeasibleError("D12 lost column rank", condition="D12-rank")
    Th12 = np.hstack([U[:, m2:], U[:, :m2]])
    R12 = np.diag(s) @ Vt
    U2, s2, V2t = np.linalg.svd(D21, full_matrices=True)
    if s2.size < p2 or s2.min() <= 1e-14 * max(1.0, s2.max()):
        raise InfeasibleError("D21 lost row rank", condition="D21-rank")
    Th21 = np.hstack([V2t[p2:, :].T, V2t[:p2, :].T])
    R21 = U2 @ np.diag(s2)
    R12inv = np.linalg.inv(R12)
    R21inv = np.linalg.inv(R21)
    C1n = Th12.T @ C1
    D11n = Th12.T @ D11 @ Th21
    B1n = B1 @ Th21
    B2n = B2 @ R12inv
    C2n = R21inv @ C2
    D12n = np.vstack([np.zeros((p1 - m2, m2)), np.eye(m2)])
    D21n = np.hstack([np.zeros((p2, m1 - p2)), np.eye(p2)])
    return (C1n, D11n, D12n, B1n, C2n, D21n, B2n), R12inv, R21inv


def synthesize_fixed_gamma(plant: DiscreteGeneralizedPlant, gamma: float) -> HinfResult:
    """Central H-infinity controller at level ``gamma`` or :class:`InfeasibleError`.

    Feasibility requires both stabilizing Riccati solutions, ``X >= 0``,
    ``Y >= 0`` and ``rho(XY) < gamma^2`` for the Cayley-transformed plant.
    The returned closed loop is checked for Schur stability and
    ``||T_zw||_inf < gamma (1 + 1e-6)`` before returning.
    """
    gamma = float(gamma)
    A, B1, B2 = plant.A, plant.B1, plant.B2
    C1, C2 = plant.C1, plant.C2
    D11, D12, D21, D22 = plant.D11, plant.D12, plant.D21, plant.D22
    n = A.shape[0]
    m1, m2 = B1.shape[1], B2.shape[1]
    p1 = C1.shape[0]

    # z = -1 maps to s = infinity; flip z -> -z when A has a mode there.
    w = np.linalg.eigvals(A) if n else np.zeros(0)
    sigma = 1.0
    if n and np.min(np.abs(w + 1.0)) < 1e-6:
        if np.min(np.abs(w - 1.0)) < 1e-6:
            raise NumericalError("plant has modes at both z = 1 and z = -1; Cayley map singular")
        sigma = -1.0
    Bf = np.hstack([B1, B2])
    Cf = np.vstack([C1, C2])
    Df = np.block([[D11, D12], [D21, D22]])
    Ac, Bc, Cc, Dc = cayley_d2c(sigma * A, Bf, sigma * Cf, Df)
    cB1, cB2 = Bc[:, :m1], Bc[:, m1:]
    cC1, cC2 = Cc[:p1], Cc[p1:]
    cD11, cD12 = Dc[:p1, :m1], Dc[:p1, m1:]
    cD21, cD22 = Dc[p1:, :m1], Dc[p1:, m1:]

    (nC1, nD11, nD12, nB1, nC2, nD21, nB2), R12inv, R21inv = _normalize(
        cC1, cD11, cD12, cB1, cC2, cD21, cB2
    )
    (Ak, Bk, Ck, Dk), diag = _central_continuous(Ac, nB1, nB2, nC1, nC2, nD11, nD12, nD21, gamma)
    # undo the input/output scalings
    Bk, Ck, Dk = Bk @ R21inv, R12inv @ Ck, R12inv @ Dk @ R21inv
    # undo the D22 loop shift: u = Kt (y - D22 u)
    E = np.linalg.inv(np.eye(m2) + Dk @ cD22)
    Ak = Ak - Bk @ cD22 @ E @ Ck
    Bk = Bk @ (np.eye(cD22.shape[0]) - cD22 @ E @ Dk)
    Ck, Dk = E @ Ck, E @ Dk
    if Ak.shape[0] and np.min(np.abs(np.linalg.eigvals(Ak) - 1.0)) < 1e-9:
        raise NumericalError("controller has a pole at s = 1; inverse Cayley map singular")
    dA, dB, dC, dD = cayley_c2d(Ak, Bk, Ck, Dk)
    dA, dC = sigma * dA, sigma * dC
    K = DiscreteStateSpace(dA, dB, dC, dD, plant.h)

    Acl, Bcl, Ccl, Dcl = lft_lower(A, B1, B2, C1, C2, D11, D12, D21, D22, dA, dB, dC, dD)
    closed = DiscreteStateSpace(Acl, Bcl, Ccl, Dcl, plant.h)
    rho_cl = spectral_radius(Acl)
    if not rho_cl < 1.0:
        raise InfeasibleError(f"closed loop not Schur stable (rho={rho_cl:.6g})",
                              condition="closed-loop-stability", gamma=gamma)
    achieved = hinf_norm(closed, tol=1e-7)
    if not achieved < gamma * (1 + 1e-6):
        raise InfeasibleError(f"verified closed-loop norm {achieved:.6g} >= gamma {gamma:.6g}",
                              condition="closed-loop-norm", gamma=gamma)
    diag.update({"closed_loop_spectral_radius": rho_cl, "closed_loop_norm": achieved,
                 "cayley_sign": sigma})
    return HinfResult(K, gamma, closed, diag)


def gamma_bisect(plant: DiscreteGeneralizedPlant, gamma_range=(1e-2, 1e3), tol=1e-3) -> HinfResult:
    """Geometric bisection on gamma down to relative width ``tol``.

    Returns the result at the smallest feasible gamma visited.  The bisection
    trace ``[(gamma, feasible, condition), ...]`` is stored in the
    diagnostics.
    """
    lo, hi = (float(g) for g in gamma_range)
    trace = []
    try:
        best = synthesize_fixed_gamma(plant, hi)
    except InfeasibleError as exc:
        raise InfeasibleError(
            f"design infeasible at gamma_hi={hi:g} ({exc.condition}); "
            "try a larger gamma_hi or a larger delay L / upsampling factor M",
            condition=exc.condition, gamma=hi,
        ) from exc
    trace.append((hi, True, None))
    try:
        at_lo = synthesize_fixed_gamma(plant, lo)
        trace.append((lo, True, None))
        best, hi = at_lo, lo
    except InfeasibleError as exc:
        trace.append((lo, False, exc.condition))
    while hi / lo - 1.0 > tol:
        mid = math.sqrt(lo * hi)
        try:
            res = synthesize_fixed_gamma(plant, mid)
        except InfeasibleError as exc:
            trace.append((mid, False, exc.condition))
            lo = mid
            continue
        trace.append((mid, True, None))
        best, hi = res, mid
    log.debug("gamma bisection converged at %.6g after %d probes", best.gamma, len(trace))
    diag = dict(best.diagnostics)
    diag["bisection_trace"] = trace
    return HinfResult(best.controller, best.gamma, best.closed_loop, diag)
