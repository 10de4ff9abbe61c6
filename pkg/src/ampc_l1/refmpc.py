"""Conventional multi-point MPC used as the computational-load baseline.

The transition over each prediction step comes from a low-order Taylor
series (with scaling and squaring), outputs at ``n_pred`` points are stacked
into a lifted model ``Y = F_bar x + G_bar U`` and the input sequence is found
by a box-constrained QP solved with a primal-dual interior point method. Only
the first input is applied.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import matlib
from .errors import MaxIterations, NotPositiveDefinite


@dataclass(frozen=True)
class RefMpcConfig:
    n_pred: int = 10
    horizon: float = 0.5
    q: float = 0.99
    r: float = 0.001
    taylor_order: int = 5
    u_min: float | None = -30.0
    u_max: float | None = 30.0

    def __post_init__(self):
        if self.n_pred < 1:
            raise ValueError("n_pred must be >= 1")
        if self.taylor_order < 1:
            raise ValueError("taylor_order must be >= 1")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")

    @property
    def dt_step(self) -> float:
        return self.horizon / self.n_pred


def discretize_series(A, B_m, dt: float, order: int):
    """(Phi, Gamma) for a held input, from the series exponential of [[A, B], [0, 0]]."""
    n, m = B_m.shape
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = A
    aug[:n, n:] = B_m
    e = matlib.expm_series(aug, dt, order)
    return e[:n, :n], e[:n, n:]


def build_prediction_matrices(A, B_m, C, cfg: RefMpcConfig):
    """Stacked free response F_bar (N*p x n) and forced response G_bar (N*p x N*m)."""
    A = matlib.as_matrix(A, square=True)
    B_m = matlib.as_matrix(B_m)
    C = matlib.as_matrix(C)
    n, m = B_m.shape
    p = C.shape[0]
    N = cfg.n_pred
    phi, gamma = discretize_series(A, B_m, cfg.dt_step, cfg.taylor_order)

    # C Phi^k for k = 0..N
    powers = [C]
    for _ in range(N):
        powers.append(powers[-1] @ phi)
    F_bar = np.vstack(powers[1:])
    markov = [cp @ gamma for cp in powers[:N]]  # C Phi^k Gamma
    G_bar = np.zeros((N * p, N * m))
    for i in range(N):
        for j in range(i + 1):
            G_bar[i * p:(i + 1) * p, j * m:(j + 1) * m] = markov[i - j]
    return F_bar, G_bar


def solve_qp(H, f, lower=None, upper=None, tol: float = 1e-10, max_iter: int = 50):
    """Minimize 0.5 u'Hu + f'u subject to lower <= u <= upper.

    Unbounded problems are solved by one Cholesky solve. Bounded problems use
    a primal-dual path-following interior point method with a fixed centering
    parameter and a 0.99 fraction-to-boundary rule.
    """
    H = np.asarray(H, dtype=float)
    f = np.asarray(f, dtype=float).reshape(-1)
    n = f.shape[0]
    if H.shape != (n, n) or not np.allclose(H, H.T, atol=1e-12 * max(1.0, np.abs(H).max())):
        raise NotPositiveDefinite("H must be a symmetric n x n matrix")
    try:
        np.linalg.cholesky(H)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("H is not positive definite") from exc

    lo = np.full(n, -np.inf) if lower is None else np.broadcast_to(np.asarray(lower, float), (n,))
    hi = np.full(n, np.inf) if upper is None else np.broadcast_to(np.asarray(upper, float), (n,))
    if np.any(lo > hi):
        raise ValueError("lower bound exceeds upper bound")
    has_lo = np.isfinite(lo)
    has_hi = np.isfinite(hi)
    if not (has_lo.any() or has_hi.any()):
        return np.linalg.solve(H, -f)

    # Inequalities G u <= h
    G = np.vstack([np.eye(n)[has_hi], -np.eye(n)[has_lo]])
    h = np.concatenate([hi[has_hi], -lo[has_lo]])
    k = h.shape[0]

    lo_f = np.where(has_lo, lo, 0.0)
    hi_f = np.where(has_hi, hi, 0.0)
    u = np.where(has_lo & has_hi, 0.5 * (lo_f + hi_f), 0.0)
    u = np.where(has_lo & ~has_hi, lo_f + 1.0, u)
    u = np.where(has_hi & ~has_lo, hi_f - 1.0, u)
    s = np.maximum(h - G @ u, 1.0)
    z = np.ones(k)
    sigma = 0.1
    scale = 1.0 + max(np.abs(f).max(), np.abs(H).max())

    for _ in range(max_iter):
        r_d = H @ u + f + G.T @ z
        r_p = G @ u + s - h
        mu = s @ z / k
        if (np.linalg.norm(r_d, np.inf) < tol * scale
                and np.linalg.norm(r_p, np.inf) < tol * scale and mu < tol):
            return u
        r_c = sigma * mu - s * z
        w = z / s
        lhs = H + G.T @ (w[:, None] * G)
        rhs = -r_d - G.T @ ((r_c + z * r_p) / s)
        du = np.linalg.solve(lhs, rhs)
        ds = -r_p - G @ du
        dz = (r_c - z * ds) / s
        alpha = 1.0
        neg = ds < 0
        if neg.any():
            alpha = min(alpha, 0.99 * float(np.min(-s[neg] / ds[neg])))
        neg = dz < 0
        if neg.any():
            alpha = min(alpha, 0.99 * float(np.min(-z[neg] / dz[neg])))
        u = u + alpha * du
        s = s + alpha * ds
        z = z + alpha * dz
    raise MaxIterations(f"interior point did not converge in {max_iter} iterations")


def kkt_residual(H, f, u, lower=None, upper=None) -> float:
    """Projected-gradient optimality residual of a box-constrained QP solution."""
    g = np.asarray(H) @ u + f
    n = len(u)
    lo = np.full(n, -np.inf) if lower is None else np.broadcast_to(lower, (n,))
    hi = np.full(n, np.inf) if upper is None else np.broadcast_to(upper, (n,))
    projected = np.clip(u - g, lo, hi) - u
    return float(np.linalg.norm(projected, np.inf))


def unconstrained_gains(A, B_m, C, cfg: RefMpcConfig):
    """(k_r, k_x) with first input = k_r y_r - k_x x when no bound is active."""
    F_bar, G_bar = build_prediction_matrices(A, B_m, C, cfg)
    m = np.shape(B_m)[1]
    p = np.shape(C)[0]
    H = cfg.q * (G_bar.T @ G_bar) + cfg.r * np.eye(G_bar.shape[1])
    L = np.linalg.solve(H, cfg.q * G_bar.T)[:m]
    k_r = L @ np.tile(np.eye(p), (cfg.n_pred, 1))
    return k_r, L @ F_bar


def refmpc_closed_loop_max_real(A, B_m, C, cfg: RefMpcConfig) -> float:
    _, k_x = unconstrained_gains(A, B_m, C, cfg)
    return matlib.max_real_eig(np.asarray(A) - np.asarray(B_m) @ k_x)


def refmpc_control(A, B_m, C, cfg: RefMpcConfig, x, y_r) -> np.ndarray:
    """First input of the optimal sequence for a constant reference ``y_r``."""
    F_bar, G_bar = build_prediction_matrices(A, B_m, C, cfg)
    m = np.shape(B_m)[1]
    err = np.full(F_bar.shape[0], float(y_r)) - F_bar @ np.asarray(x, dtype=float)
    # Same Q/R semantics at every prediction point.
    H = cfg.q * (G_bar.T @ G_bar) + cfg.r * np.eye(G_bar.shape[1])
    f = -cfg.q * (G_bar.T @ err)
    u = solve_qp(H, f, cfg.u_min, cfg.u_max)
    return u[:m]
