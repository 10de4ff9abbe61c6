"""L1 adaptive augmentation around the AMPC partial closed loop.

The AMPC loop leaves the nominal model in the form x' = A_m x + B_m u_ad.
This module adds

* a state predictor  x_hat' = A_m x_hat + B_m (u_ad + s1) + B_um s2,
* the piecewise-constant adaptive law
      sigma = -[B_m B_um]^-1 Phi_ad^-1 exp(A_m T_s) (x_hat - x),
      Phi_ad = A_m^-1 (exp(A_m T_s) - I),
* the filtered control law
      u_ad = -C(s) (s1 + k_dc H_um(s) s2 - K y_r),   C(s) = wc / (s + wc),
  where ``k_dc = -(C A_m^-1 B_m)^-1`` replaces the inverse matched transmission.

Every array argument carrying a signal may have leading batch dimensions;
matrices are shared across the batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import matlib
from .errors import NotHurwitz, RankDeficient, Singular, ZeroDcGain


@dataclass(frozen=True)
class L1Config:
    cutoff_hz: float = 20.0
    sample_time: float = 0.005

    def __post_init__(self):
        if not self.cutoff_hz > 0:
            raise ValueError("filter cutoff must be positive")
        if not self.sample_time > 0:
            raise ValueError("adaptation sample time must be positive")

    @property
    def omega_c(self) -> float:
        return 2.0 * math.pi * self.cutoff_hz


@dataclass
class L1State:
    """Per-run adaptive state. Arrays carry an optional leading batch axis."""

    x_hat: np.ndarray
    sigma1: np.ndarray
    sigma2: np.ndarray
    filter_in: np.ndarray
    filter_out: np.ndarray
    hum_state: np.ndarray
    primed: bool = False

    @classmethod
    def initial(cls, x0, m: int = 1) -> "L1State":
        x0 = np.array(x0, dtype=float)
        n = x0.shape[-1]
        batch = x0.shape[:-1]
        return cls(
            x_hat=x0.copy(),
            sigma1=np.zeros(batch + (m,)),
            sigma2=np.zeros(batch + (n - m,)),
            filter_in=np.zeros(batch + (m,)),
            filter_out=np.zeros(batch + (m,)),
            hum_state=np.zeros(batch + (n,)),
        )


def build_unmatched_basis(B_m) -> np.ndarray:
    """Orthonormal B_um with B_m' B_um = 0 and rank [B_m B_um] = n."""
    B_m = matlib.as_matrix(B_m)
    n, m = B_m.shape
    if m >= n:
        raise RankDeficient("B_m must have fewer columns than rows")
    if n == 2:
        b1, b2 = B_m[0, 0], B_m[1, 0]
        norm = math.hypot(b1, b2)
        if norm == 0.0:
            raise RankDeficient("B_m is zero")
        return np.array([[b2 / norm], [-b1 / norm]])
    u, s, _ = np.linalg.svd(B_m, full_matrices=True)
    if s[-1] <= 1e-12 * s[0]:
        raise RankDeficient("B_m columns are linearly dependent")
    return u[:, m:]


@dataclass(frozen=True, eq=False)
class AdaptationMatrices:
    """Quantities shared by predictor, adaptive law and H_um realization."""

    expm: np.ndarray
    phi_ad: np.ndarray
    gain: np.ndarray
    m: int


def adaptation_matrices(A_m, B_m, B_um, T_s: float) -> AdaptationMatrices:
    A_m = np.asarray(A_m, dtype=float)
    n = A_m.shape[0]
    expm = matlib.expm_eigen(A_m, T_s)
    phi_ad = matlib.inverse(A_m) @ (expm - np.eye(n))
    B = np.hstack([B_m, B_um])
    try:
        gain = -matlib.inverse(B) @ (matlib.inverse(phi_ad) @ expm)
    except Singular as exc:
        raise Singular(f"adaptive law is singular: {exc}") from exc
    return AdaptationMatrices(expm, phi_ad, gain, np.shape(B_m)[1])


def adaptive_step(x_tilde, A_m, B_m, B_um, T_s: float, mats: AdaptationMatrices | None = None):
    """Piecewise-constant estimates (sigma1, sigma2) from the prediction error."""
    if mats is None:
        mats = adaptation_matrices(A_m, B_m, B_um, T_s)
    sigma = np.asarray(x_tilde, dtype=float) @ mats.gain.T
    return sigma[..., : mats.m], sigma[..., mats.m :]


def predictor_step(state: L1State, A_m, B_m, B_um, u_ad, dt: float,
                   mats: AdaptationMatrices | None = None) -> L1State:
    """Advance x_hat over one sample with the input and estimates held.

    Uses the exact discretization exp(A_m dt) x_hat + Phi_ad (B_m (u_ad + s1) + B_um s2).
    """
    if mats is None:
        mats = adaptation_matrices(A_m, B_m, B_um, dt)
    u_ad = np.asarray(u_ad, dtype=float)
    drive = (u_ad + state.sigma1) @ np.asarray(B_m).T + state.sigma2 @ np.asarray(B_um).T
    x_hat = state.x_hat @ mats.expm.T + drive @ mats.phi_ad.T
    return replace(state, x_hat=x_hat)


def dc_inverse_gain(A_m, B_m, C) -> np.ndarray:
    """-(C A_m^-1 B_m)^-1, the static stand-in for the inverse matched transmission."""
    dc = np.asarray(C) @ matlib.inverse(A_m) @ np.asarray(B_m)
    if np.all(np.abs(dc) < 1e-14):
        raise ZeroDcGain("C A_m^-1 B_m is zero")
    try:
        return -matlib.inverse(dc)
    except Singular as exc:
        raise ZeroDcGain(str(exc)) from exc


def tustin_lowpass(prev_in, prev_out, new_in, omega_c: float, dt: float):
    """One step of the bilinear discretization of wc / (s + wc)."""
    a = 0.5 * omega_c * dt
    return ((1.0 - a) * prev_out + a * (new_in + prev_in)) / (1.0 + a)


def control_step(state: L1State, sigma1, sigma2, K, y_r, A_m, B_m, B_um, C,
                 cfg: L1Config, dt: float, mats: AdaptationMatrices | None = None,
                 k_dc: np.ndarray | None = None):
    """Filtered adaptive control law; returns (u_ad, new_state).

    The unmatched estimate drives a state-space copy of H_um(s) (realization
    (A_m, B_um, C), discretized exactly like the predictor); its output is
    scaled by the DC inverse of the matched transmission.
    """
    if mats is None:
        mats = adaptation_matrices(A_m, B_m, B_um, dt)
    if k_dc is None:
        k_dc = dc_inverse_gain(A_m, B_m, C)
    K = np.atleast_2d(K)
    C = np.asarray(C)
    sigma1 = np.asarray(sigma1, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    yr = np.asarray(y_r, dtype=float)
    if K.shape[1] == 1:
        yr = yr[..., None]

    hum_out = state.hum_state @ C.T
    eta = sigma1 + hum_out @ k_dc.T - yr @ K.T
    zeta = -eta
    if state.primed:
        u_ad = tustin_lowpass(state.filter_in, state.filter_out, zeta, cfg.omega_c, dt)
    else:
        # First sample: start the filter at its steady state for this input.
        u_ad = zeta
    hum_state = state.hum_state @ mats.expm.T + (sigma2 @ np.asarray(B_um).T) @ mats.phi_ad.T
    new = replace(state, sigma1=sigma1, sigma2=sigma2, filter_in=zeta,
                  filter_out=u_ad, hum_state=hum_state, primed=True)
    return u_ad, new


# -- L1-norm condition (left-hand side) -------------------------------------------


def _impulse_l1_norm(A, B, Cout, horizon: float, points_per_radian: int = 100) -> float:
    """max-row-sum of integral |Cout exp(A t) B| dt over [0, horizon].

    Trapezoidal quadrature on a piecewise-uniform grid: each mode sets a step
    of 1/(points_per_radian |lambda|) until it has decayed by e^-40.
    """
    lam = np.linalg.eigvals(A)
    decay_end = np.minimum(40.0 / np.abs(lam.real), horizon)
    mode_step = 1.0 / (points_per_radian * np.maximum(np.abs(lam), 1e-12))
    breaks = np.unique(np.concatenate([[0.0, horizon], decay_end]))

    X = np.asarray(B, dtype=float).copy()
    total = np.zeros(np.shape(Cout)[0])
    prev = np.abs(Cout @ X)
    for t0, t1 in zip(breaks, breaks[1:]):
        active = decay_end > t0
        h = float(np.min(mode_step[active])) if np.any(active) else (t1 - t0) / 100.0
        nsteps = max(1, int(math.ceil((t1 - t0) / h)))
        h = (t1 - t0) / nsteps
        try:
            step = matlib.expm_eigen(A, h)
        except (matlib.NonDiagonalizable, matlib.ImaginaryResidualTooLarge):
            step = matlib.expm_series(A, h)
        acc = np.zeros_like(prev)
        for _ in range(nsteps):
            X = step @ X
            cur = np.abs(Cout @ X)
            acc += 0.5 * h * (prev + cur)
            prev = cur
        total = total + acc.sum(axis=1)
    return float(np.max(total))


def l1_norm_condition_lhs(A_m, B_m, B_um, C, cfg: L1Config, horizon: float | None = None):
    """(||G_m||_L1, ||G_um||_L1) by quadrature of the impulse responses.

    G_m  = H_xm (I - C(s))
    G_um = (I - H_xm C(s) k_dc C) H_xum   with the DC inverse k_dc standing in
    for H_m^-1, matching the control law.
    """
    A_m = matlib.as_matrix(A_m, square=True)
    if matlib.max_real_eig(A_m) >= 0:
        raise NotHurwitz("A_m must be Hurwitz for the L1-norm condition")
    B_m = matlib.as_matrix(B_m)
    n, m = B_m.shape
    B_um = np.asarray(B_um, dtype=float).reshape(n, -1)
    C = matlib.as_matrix(C)
    wc = cfg.omega_c
    if horizon is None:
        slow = float(np.min(np.abs(np.linalg.eigvals(A_m).real)))
        horizon = 50.0 / min(slow, wc)

    # G_m: filter state xi' = -wc xi + wc v, x' = A_m x + B_m (v - xi)
    A_gm = np.block([[A_m, -B_m], [np.zeros((m, n)), -wc * np.eye(m)]])
    B_gm = np.vstack([B_m, wc * np.eye(m)])
    C_gm = np.hstack([np.eye(n), np.zeros((n, m))])
    g_m = _impulse_l1_norm(A_gm, B_gm, C_gm, horizon)

    k = B_um.shape[1]
    if k == 0:
        return g_m, 0.0
    k_dc = dc_inverse_gain(A_m, B_m, C)
    # states [x1 (H_xum), xi (filter), x2 (H_xm)]; output x1 - x2
    A_gum = np.block([
        [A_m, np.zeros((n, m)), np.zeros((n, n))],
        [wc * k_dc @ C, -wc * np.eye(m), np.zeros((m, n))],
        [np.zeros((n, n)), B_m, A_m],
    ])
    B_gum = np.vstack([B_um, np.zeros((m, k)), np.zeros((n, k))])
    C_gum = np.hstack([np.eye(n), np.zeros((n, m)), -np.eye(n)])
    g_um = _impulse_l1_norm(A_gum, B_gum, C_gum, horizon)
    return g_m, g_um
