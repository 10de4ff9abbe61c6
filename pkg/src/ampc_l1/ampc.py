"""Single-prediction-point algebraic MPC (unconstrained, closed form).

At each control update the nominal model is frozen and

    Phi = exp(A dt)                       (eigendecomposition, no truncation)
    F   = C Phi                           free response at the horizon
    G   = C A^-1 (Phi - I) B_m            forced response to a held input
    K   = (G' Q G + R)^-1 G' Q            optimal gain
    u   = K (y_r - F x)

The closed-loop matrix ``A_m = A - B_m K F`` is what the adaptive layer
designs around, so it is computed and checked here as well.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import matlib

# Below this reciprocal condition number, G is formed from the integral of
# Phi instead of A^-1 (Phi - I).
SINGULAR_A_RCOND = 1e-8

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


@dataclass(frozen=True)
class AmpcConfig:
    q: float = 0.99
    r: float = 0.001
    horizon: float = 0.5

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError("prediction horizon must be positive")
        if np.any(np.asarray(self.q) < 0) or np.any(np.asarray(self.r) < 0):
            raise ValueError("weights must be non-negative")


@dataclass(frozen=True, eq=False)
class AmpcState:
    phi: np.ndarray
    F: np.ndarray
    G: np.ndarray
    K: np.ndarray
    A_m: np.ndarray
    am_max_real: float
    used_quadrature: bool = False

    @property
    def hurwitz(self) -> bool:
        return self.am_max_real < 0.0


def integrated_transition(A, horizon: float) -> np.ndarray:
    """Integral of exp(A tau) over [0, horizon] by 16-point Gauss-Legendre."""
    A = matlib.as_matrix(A, square=True)
    half = 0.5 * horizon
    total = np.zeros_like(A)
    for node, weight in zip(_GL_NODES, _GL_WEIGHTS):
        tau = half * (node + 1.0)
        try:
            phi = matlib.expm_eigen(A, tau)
        except (matlib.NonDiagonalizable, matlib.ImaginaryResidualTooLarge):
            phi = matlib.expm_series(A, tau)
        total += weight * phi
    return half * total


def forced_response(A, B_m, C, phi, horizon: float):
    """G = C A^-1 (Phi - I) B_m, or C (int Phi) B_m when A is near singular.

    Returns (G, used_quadrature).
    """
    n = A.shape[0]
    if matlib.rcond(A) >= SINGULAR_A_RCOND:
        return C @ (matlib.inverse(A) @ ((phi - np.eye(n)) @ B_m)), False
    return C @ integrated_transition(A, horizon) @ B_m, True


def optimal_gain(G, Q, R) -> np.ndarray:
    """K = (G' Q G + R)^-1 G' Q with scalar weights promoted to matrices."""
    G = np.atleast_2d(G)
    p, m = G.shape
    Q = np.asarray(Q, dtype=float)
    R = np.asarray(R, dtype=float)
    Q = Q * np.eye(p) if Q.ndim == 0 else Q
    R = R * np.eye(m) if R.ndim == 0 else R
    GtQ = G.T @ Q
    return matlib.inverse(GtQ @ G + R) @ GtQ


def ampc_update(A, B_m, C, cfg: AmpcConfig) -> AmpcState:
    """Recompute Phi, F, G, K and A_m for the current nominal model."""
    A = matlib.as_matrix(A, square=True)
    B_m = matlib.as_matrix(B_m)
    C = matlib.as_matrix(C)
    if B_m.shape[0] != A.shape[0] or C.shape[1] != A.shape[0]:
        raise ValueError("inconsistent A, B_m, C dimensions")
    phi = matlib.expm_eigen(A, cfg.horizon)
    F = C @ phi
    G, quad = forced_response(A, B_m, C, phi, cfg.horizon)
    K = optimal_gain(G, cfg.q, cfg.r)
    A_m = A - B_m @ (K @ F)
    return AmpcState(phi, F, G, K, A_m, matlib.max_real_eig(A_m), quad)


def ampc_control(state: AmpcState, x, y_r) -> np.ndarray:
    """u_opt = K (y_r - F x) for state(s) ``x`` of shape (..., n).

    Returns shape (..., m). For a single output ``y_r`` may be a scalar or
    have the batch shape of ``x``.
    """
    x = np.asarray(x, dtype=float)
    yr = np.asarray(y_r, dtype=float)
    if state.F.shape[0] == 1 and (yr.ndim == 0 or yr.shape != x.shape[:-1] + (1,)):
        yr = yr[..., None]
    return (yr - x @ state.F.T) @ state.K.T
