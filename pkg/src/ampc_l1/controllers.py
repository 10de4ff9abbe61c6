"""Stateful controller wrappers used by the simulation engine.

Each controller sees only the nominal model (A, B_m, C) and the measured
state at an update; scenario data never reaches this module. States carry a
leading batch axis so that many runs sharing the same nominal model advance
together, while gains are computed once per update.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import l1 as l1mod
from .ampc import AmpcConfig, ampc_control, ampc_update
from .errors import ConfigMismatch
from .l1 import L1Config, L1State
from .refmpc import RefMpcConfig, refmpc_closed_loop_max_real, refmpc_control

KINDS = ("ampc", "ampc-l1", "refmpc")


@dataclass
class ControlOutput:
    """Everything logged at one update, each with a leading batch axis."""

    u_total: np.ndarray
    u_opt: np.ndarray
    sigma1: np.ndarray
    sigma2: np.ndarray
    x_hat: np.ndarray
    x_tilde: np.ndarray
    am_max_real: float

    @property
    def u_ad(self) -> np.ndarray:
        # Part of the applied input not explained by K (y_r - F x).
        return self.u_total - self.u_opt


class AmpcController:
    kind = "ampc"

    def __init__(self, cfg: AmpcConfig | None = None):
        self.cfg = cfg or AmpcConfig()
        self.last_state = None

    def reset(self, x0) -> None:
        self.last_state = None

    def update(self, t, x, y_r, A, B_m, C) -> ControlOutput:
        st = ampc_update(A, B_m, C, self.cfg)
        self.last_state = st
        u = ampc_control(st, x, y_r)
        return _without_adaptation(u, x, st.am_max_real)


class AmpcL1Controller:
    """AMPC feedback with the L1 augmentation supplying u_ad.

    Applied input is u = u_ad - K F x, where for zero estimates u_ad settles
    at K y_r and the law reduces to plain AMPC.
    """

    kind = "ampc-l1"

    def __init__(self, cfg: AmpcConfig | None = None, l1cfg: L1Config | None = None,
                 control_period: float = 0.005):
        self.cfg = cfg or AmpcConfig()
        self.l1cfg = l1cfg or L1Config()
        ratio = self.l1cfg.sample_time / control_period
        if ratio < 1.0 - 1e-9 or abs(ratio - round(ratio)) > 1e-9:
            raise ConfigMismatch(
                f"adaptation sample time {self.l1cfg.sample_time} s must be a whole "
                f"multiple of the control period {control_period} s"
            )
        self.hold = int(round(ratio))
        self.state: L1State | None = None
        self.last_state = None
        self._count = 0
        self._u_ad = None

    def reset(self, x0) -> None:
        self.state = L1State.initial(np.asarray(x0, dtype=float), m=1)
        self.last_state = None
        self._count = 0
        self._u_ad = None

    def update(self, t, x, y_r, A, B_m, C) -> ControlOutput:
        if self.state is None:
            self.reset(x)
        st = ampc_update(A, B_m, C, self.cfg)
        self.last_state = st
        s = self.state
        x_tilde = s.x_hat - x
        if self._count % self.hold == 0:
            Ts = self.l1cfg.sample_time
            B_um = l1mod.build_unmatched_basis(B_m)
            mats = l1mod.adaptation_matrices(st.A_m, B_m, B_um, Ts)
            k_dc = l1mod.dc_inverse_gain(st.A_m, B_m, C)
            s1, s2 = l1mod.adaptive_step(x_tilde, st.A_m, B_m, B_um, Ts, mats)
            u_ad, s = l1mod.control_step(s, s1, s2, st.K, y_r, st.A_m, B_m, B_um, C,
                                         self.l1cfg, Ts, mats, k_dc)
            s = l1mod.predictor_step(s, st.A_m, B_m, B_um, u_ad, Ts, mats)
            self.state = s
            self._u_ad = u_ad
        self._count += 1
        u = self._u_ad - x @ (st.K @ st.F).T
        u_opt = ampc_control(st, x, y_r)
        return ControlOutput(u, u_opt, s.sigma1, s.sigma2, s.x_hat, x_tilde, st.am_max_real)


def _without_adaptation(u, x, am_max_real) -> ControlOutput:
    # No predictor: estimates are zero and the "prediction" is the measurement.
    zero = np.zeros_like(x)
    return ControlOutput(u, u, zero[..., :1], zero[..., 1:], x.copy(), zero, am_max_real)


class RefMpcController:
    """Multi-point QP MPC; one QP per batch member.

    With ``report_poles`` the closed loop of the unconstrained solution is
    formed for the log; the timing benchmark switches it off.
    """

    kind = "refmpc"

    def __init__(self, cfg: RefMpcConfig | None = None, report_poles: bool = True):
        self.cfg = cfg or RefMpcConfig()
        self.report_poles = report_poles

    def reset(self, x0) -> None:
        pass

    def update(self, t, x, y_r, A, B_m, C) -> ControlOutput:
        x = np.asarray(x, dtype=float)
        yr = np.broadcast_to(np.asarray(y_r, dtype=float), x.shape[:-1])
        flat_x = x.reshape(-1, x.shape[-1])
        flat_r = yr.reshape(-1)
        u = np.stack([refmpc_control(A, B_m, C, self.cfg, xi, ri) for xi, ri in zip(flat_x, flat_r)])
        u = u.reshape(x.shape[:-1] + (u.shape[-1],))
        poles = refmpc_closed_loop_max_real(A, B_m, C, self.cfg) if self.report_poles else float("nan")
        return _without_adaptation(u, x, poles)


def make_controller(kind: str, ampc_cfg: AmpcConfig | None = None, l1_cfg: L1Config | None = None,
                    refmpc_cfg: RefMpcConfig | None = None, control_period: float = 0.005,
                    report_poles: bool = True):
    if kind == "ampc":
        return AmpcController(ampc_cfg)
    if kind == "ampc-l1":
        return AmpcL1Controller(ampc_cfg, l1_cfg, control_period)
    if kind == "refmpc":
        return RefMpcController(refmpc_cfg, report_poles)
    raise ValueError(f"unknown controller kind {kind!r}; expected one of {KINDS}")
