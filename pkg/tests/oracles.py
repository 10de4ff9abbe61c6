"""Reference computations that share no code with the package.

Closed forms are written out by hand; numerical oracles lean on scipy so a
bug in the package's own linear algebra cannot hide behind itself.
"""

import math

import numpy as np
from scipy import linalg

# Frozen closed-form values.
G_DIAG_MINUS_ONE = 1.0 - math.exp(-1.0)  # C A^-1 (e^A - I) B for A = -I, unit horizon
DOUBLE_POLE_L1_NORM = 2.0 / math.e  # integral of |(1 - t) e^-t| over [0, inf)

# Dimensional derivatives of the default schedule at t = 0, from the design
# targets the coefficients were generated from (coefficients rounded to 1e-6).
DEFAULT_T0 = {"M_q": -0.66, "M_alpha": 1.0, "M_de": -4.8, "N_alpha": 1505.0, "N_de": -602.0}


def expm(a, dt):
    return linalg.expm(np.asarray(a, dtype=float) * dt)


def random_stable_diagonalizable(rng, n, cond_max=50.0):
    """Real matrix with stable spectrum (complex pairs allowed) and a tame eigenbasis."""
    while True:
        blocks = []
        k = 0
        while k < n:
            if n - k >= 2 and rng.random() < 0.5:
                re = -rng.uniform(0.1, 5.0)
                im = rng.uniform(0.2, 5.0)
                blocks.append(np.array([[re, im], [-im, re]]))
                k += 2
            else:
                blocks.append(np.array([[-rng.uniform(0.1, 5.0)]]))
                k += 1
        D = linalg.block_diag(*blocks)
        S = rng.standard_normal((n, n))
        if np.linalg.cond(S) < cond_max:
            return S @ D @ np.linalg.inv(S)


def ampc_gain_scalar(G, Q, R):
    return Q * G / (Q * G * G + R)


def forced_response_quadrature(A, B, C, horizon):
    """C (integral_0^h e^{A t} dt) B via the augmented-matrix exponential."""
    n = A.shape[0]
    aug = np.zeros((2 * n, 2 * n))
    aug[:n, :n] = A
    aug[:n, n:] = np.eye(n)
    integral = linalg.expm(aug * horizon)[:n, n:]
    return C @ integral @ B


def sigma_hat_dense(x_tilde, A_m, B_m, B_um, T_s):
    """-[B_m B_um]^-1 Phi_ad^-1 e^{A_m T_s} x_tilde, evaluated with scipy."""
    E = linalg.expm(A_m * T_s)
    phi_ad = np.linalg.solve(A_m, E - np.eye(A_m.shape[0]))
    B = np.hstack([B_m, B_um])
    return -np.linalg.solve(B, np.linalg.solve(phi_ad, E @ x_tilde))


def exact_discrete_step(A, B, x, v, dt):
    """x(dt) for x' = A x + B v with v held, by the augmented exponential."""
    n, m = B.shape
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = A
    aug[:n, n:] = B
    e = linalg.expm(aug * dt)
    return e[:n, :n] @ x + e[:n, n:] @ v


def tdm_from_phase_margin(phase_margin_deg, crossover_rad_s):
    """First-order delay margin: the delay that eats the phase margin at crossover."""
    return math.radians(phase_margin_deg) / crossover_rad_s
