"""Scenario simulation engine.

The true plant is

    x' = (A(t) + dA(t)) x + B_m(t) w_u u(t - tau) + d(t)

integrated with classical RK4 (fixed substeps per control period) while the
controller updates at the control rate and its output is held in between.
Because the plant is linear in (x, u, 1), RK4 over a control period is an
affine map; the maps are formed for all periods up front, vectorised over
time and batch, and the loop then only applies them.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .controllers import ControlOutput, make_controller
from .errors import ConfigMismatch, UnknownPreset
from .vehicle import LtvPlant, ReferenceProfile

DIVERGENCE_LIMIT = 1e6
RK4_SUBSTEPS = 4
MISMATCH_PRESETS = ("none", "case3", "scaled")
DISTURBANCE_PRESETS = ("none", "case4")

# Column order of exported logs.
LOG_COLUMNS = (
    "t", "q", "alpha", "y_r", "u_total", "u_opt", "u_ad",
    "sigma1", "sigma2", "xhat_q", "xhat_alpha", "xtilde_q", "xtilde_alpha",
    "am_max_real",
)
TRACKING_COLUMNS = ("t", "q", "alpha", "y_r")


@dataclass(frozen=True)
class Scenario:
    """Uncertainty injected into the true plant.

    ``mismatch_scales`` multiplies A(t) entrywise when ``mismatch`` is
    ``"scaled"`` (row-major: M_q, M_alpha, alpha_dot_q, -N_alpha/V).
    """

    mismatch: str = "none"
    mismatch_scales: tuple = (0.0, 0.0, 0.0, 0.0)
    input_gain: float = 1.0
    disturbance: str = "none"
    loop_delay: float = 0.0
    x0: tuple = (0.0, 2.0)
    t_final: float = 120.0
    control_rate: float = 200.0
    seed: int = 0
    name: str = "custom"

    def __post_init__(self):
        if not self.control_rate > 0:
            raise ValueError("control_rate must be positive")
        if not self.loop_delay >= 0:
            raise ValueError("loop_delay must be non-negative")
        if not self.t_final > 0:
            raise ValueError("t_final must be positive")
        if self.mismatch not in MISMATCH_PRESETS:
            raise UnknownPreset(f"unknown mismatch preset {self.mismatch!r}")
        if self.disturbance not in DISTURBANCE_PRESETS:
            raise UnknownPreset(f"unknown disturbance preset {self.disturbance!r}")
        object.__setattr__(self, "mismatch_scales", tuple(float(s) for s in self.mismatch_scales))
        object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))
        if len(self.mismatch_scales) != 4:
            raise ValueError("mismatch_scales needs four entries")

    @property
    def control_period(self) -> float:
        return 1.0 / self.control_rate

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final * self.control_rate))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mismatch_scales"] = list(self.mismatch_scales)
        d["x0"] = list(self.x0)
        return d


def case_scenario(case: str, **overrides) -> Scenario:
    """Named benchmark cases; keyword overrides are applied on top."""
    presets = {
        "case1": dict(),
        "case2": dict(input_gain=0.4),
        "case3": dict(input_gain=0.3, mismatch="case3"),
        "case4": dict(disturbance="case4"),
        "custom": dict(),
    }
    if case not in presets:
        raise UnknownPreset(f"unknown case {case!r}")
    kw = {**presets[case], "name": case, **overrides}
    return Scenario(**kw)


def mismatch_matrix(kind: str, t, plant: LtvPlant, scales=(0.0, 0.0, 0.0, 0.0)) -> np.ndarray:
    """dA at time(s) ``t``; shape (2, 2) for scalar t, else (k, 2, 2)."""
    if kind not in MISMATCH_PRESETS:
        raise UnknownPreset(f"unknown mismatch preset {kind!r}")
    times = np.atleast_1d(np.asarray(t, dtype=float))
    A = plant.sample(times).A
    if kind == "none":
        out = np.zeros_like(A)
    elif kind == "case3":
        out = np.empty_like(A)
        out[:, 0, 0] = -0.8 * A[:, 0, 0]
        out[:, 0, 1] = 0.8 * A[:, 0, 1]
        out[:, 1, 0] = 0.3
        out[:, 1, 1] = 0.7
    else:
        out = A * np.asarray(scales, dtype=float).reshape(2, 2)
    return out[0] if np.ndim(t) == 0 else out


def disturbance(kind: str, t) -> np.ndarray:
    """d(t); shape (2,) for scalar t, else (k, 2)."""
    if kind not in DISTURBANCE_PRESETS:
        raise UnknownPreset(f"unknown disturbance preset {kind!r}")
    times = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.zeros((times.shape[0], 2))
    if kind == "case4":
        out[:, 1] = 2.0 * np.sin(1.5 * times / math.pi)
    return out[0] if np.ndim(t) == 0 else out


@dataclass(frozen=True, eq=False)
class RunLog:
    """Time series of one run sampled at the control rate (rows k = 0..n_steps)."""

    columns: dict
    controller: str
    scenario: Scenario
    diverged: bool = False
    divergence_time: float | None = None
    meta: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    @property
    def t(self) -> np.ndarray:
        return self.columns["t"]

    @property
    def alpha(self) -> np.ndarray:
        return self.columns["alpha"]

    @property
    def y_r(self) -> np.ndarray:
        return self.columns["y_r"]

    def window(self, t0: float, t1: float) -> np.ndarray:
        """Boolean mask of rows with t0 <= t <= t1."""
        return (self.t >= t0 - 1e-12) & (self.t <= t1 + 1e-12)

    def to_csv(self, path) -> None:
        names = [c for c in LOG_COLUMNS if c in self.columns]
        data = np.column_stack([self.columns[c] for c in names])
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(names)
            for row in data:
                w.writerow([repr(float(v)) for v in row])

    def metadata(self) -> dict:
        from .analysis import tracking_error_norm

        return {
            "controller": self.controller,
            "scenario": self.scenario.to_dict(),
            "diverged": self.diverged,
            "divergence_time": self.divergence_time,
            "rows": int(self.t.shape[0]),
            "columns": [c for c in LOG_COLUMNS if c in self.columns],
            "error_norm": None if self.diverged else tracking_error_norm(self),
            **self.meta,
        }

    def write(self, csv_path, json_path=None) -> None:
        """CSV log plus a JSON sidecar (defaults to the same stem)."""
        csv_path = Path(csv_path)
        self.to_csv(csv_path)
        json_path = Path(json_path) if json_path else csv_path.with_suffix(".json")
        json_path.write_text(json.dumps(self.metadata(), indent=2))


def read_csv(path) -> dict:
    """Load a log written by :meth:`RunLog.to_csv` into named columns."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    names = rows[0]
    data = np.array(rows[1:], dtype=float).reshape(-1, len(names))
    return {n: data[:, i] for i, n in enumerate(names)}


# -- RK4 transition maps -----------------------------------------------------------


def _stage_matrices(plant, scenarios, times):
    """Augmented generator M(t) for z = [x, u, 1], shape (len(times), N, 4, 4)."""
    s = plant.sample(times)
    A, B = s.A, s.B_m
    k = times.shape[0]
    N = len(scenarios)
    M = np.zeros((k, N, 4, 4))
    for i, sc in enumerate(scenarios):
        M[:, i, :2, :2] = A + mismatch_matrix(sc.mismatch, times, plant, sc.mismatch_scales)
        M[:, i, :2, 2] = B[:, :, 0] * sc.input_gain
        M[:, i, :2, 3] = disturbance(sc.disturbance, times)
    return M


def rk4_period_maps(plant, scenarios, t0: float, period: float, count: int,
                    substeps: int = RK4_SUBSTEPS) -> np.ndarray:
    """RK4 maps over ``count`` consecutive control periods starting at t0.

    Returns (count, N, 4, 4) matrices acting on z = [x, u, 1]; the input and
    the constant are not changed by the map.
    """
    h = period / substeps
    # Stage times on a half-substep grid: index 2j is t_j, 2j+1 is t_j + h/2.
    grid = t0 + (np.arange(count)[:, None] * period
                 + np.arange(2 * substeps + 1)[None, :] * (0.5 * h))
    M = _stage_matrices(plant, scenarios, grid.reshape(-1))
    M = M.reshape(count, 2 * substeps + 1, len(scenarios), 4, 4)
    eye = np.eye(4)
    total = np.broadcast_to(eye, (count, len(scenarios), 4, 4)).copy()
    for j in range(substeps):
        m1 = M[:, 2 * j]
        m2 = M[:, 2 * j + 1]
        m4 = M[:, 2 * j + 2]
        k1 = m1
        k2 = m2 @ (eye + 0.5 * h * k1)
        k3 = m2 @ (eye + 0.5 * h * k2)
        k4 = m4 @ (eye + h * k3)
        step = eye + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        total = step @ total
    return total


def rk4_reference(f, x0, t0: float, t1: float, steps: int) -> np.ndarray:
    """Plain RK4 on x' = f(t, x); used to cross-check the precomputed maps."""
    x = np.asarray(x0, dtype=float)
    h = (t1 - t0) / steps
    t = t0
    for _ in range(steps):
        k1 = f(t, x)
        k2 = f(t + 0.5 * h, x + 0.5 * h * k1)
        k3 = f(t + 0.5 * h, x + 0.5 * h * k2)
        k4 = f(t + h, x + h * k3)
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return x


# -- engine ------------------------------------------------------------------------

_MAP_BLOCK = 400


def _delayed_input(u_hist, k: int, delay_steps, frac, exact):
    """u(t_k - tau) from stored updates, linear between samples, zero before t = 0."""
    if exact:
        return u_hist[k]
    N = u_hist.shape[1]
    idx0 = k - delay_steps
    idx1 = idx0 - 1
    cols = np.arange(N)
    u0 = np.where((idx0 >= 0)[:, None], u_hist[np.maximum(idx0, 0), cols], 0.0)
    u1 = np.where((idx1 >= 0)[:, None], u_hist[np.maximum(idx1, 0), cols], 0.0)
    return (1.0 - frac)[:, None] * u0 + frac[:, None] * u1


def run_batch(plant: LtvPlant, profile: ReferenceProfile, controller: str, scenarios: Sequence[Scenario],
              ampc_cfg=None, l1_cfg=None, refmpc_cfg=None, columns: Sequence[str] = LOG_COLUMNS,
              substeps: int = RK4_SUBSTEPS) -> list[RunLog]:
    """Simulate several scenarios that share timing under one controller kind.

    The controller is evaluated once per update for the whole batch, which is
    valid because it depends only on the nominal model and the time.
    """
    scenarios = list(scenarios)
    if not scenarios:
        return []
    first = scenarios[0]
    for sc in scenarios[1:]:
        if (abs(sc.t_final - first.t_final) > 1e-12
                or abs(sc.control_rate - first.control_rate) > 1e-12):
            raise ConfigMismatch("batched scenarios must share t_final and control_rate")
    unknown = set(columns) - set(LOG_COLUMNS)
    if unknown:
        raise ValueError(f"unknown log columns {sorted(unknown)}")

    N = len(scenarios)
    T = first.control_period
    n = first.n_steps
    ctrl = make_controller(controller, ampc_cfg, l1_cfg, refmpc_cfg, T)

    x = np.array([sc.x0 for sc in scenarios], dtype=float)
    if x.shape[1] != 2:
        raise ConfigMismatch("x0 must have two entries (q, alpha)")
    ctrl.reset(x)

    delays = np.array([sc.loop_delay for sc in scenarios]) / T
    delay_steps = np.floor(delays + 1e-12).astype(int)
    frac = np.clip(delays - delay_steps, 0.0, 1.0)
    no_delay = bool(np.all(delays == 0.0))

    times = np.arange(n + 1) * T
    y_ref = np.asarray(profile(times), dtype=float)
    nominal = plant.sample(times)
    C = plant.C

    logs = {c: np.full((n + 1, N), np.nan) for c in columns}
    u_hist = np.zeros((n + 1, N, 1))
    alive = np.ones(N, dtype=bool)
    div_time = np.full(N, np.nan)
    maps = None
    map_start = 0

    for k in range(n + 1):
        t = times[k]
        out: ControlOutput = ctrl.update(t, x, y_ref[k], nominal.A[k], nominal.B_m[k], C)
        u_hist[k] = out.u_total
        _record(logs, k, t, x, y_ref[k], out, alive)
        if k == n:
            break
        if maps is None or k - map_start >= maps.shape[0]:
            count = min(_MAP_BLOCK, n - k)
            maps = rk4_period_maps(plant, scenarios, t, T, count, substeps)
            map_start = k
        P = maps[k - map_start]
        u_eff = _delayed_input(u_hist, k, delay_steps, frac, no_delay)
        x = (np.einsum("nij,nj->ni", P[:, :2, :2], x)
             + P[:, :2, 2] * u_eff + P[:, :2, 3])
        bad = alive & ~(np.max(np.abs(x), axis=1) <= DIVERGENCE_LIMIT)
        if bad.any():
            div_time[bad] = times[k + 1]
            alive &= ~bad
            # Park diverged members at the origin so they cannot overflow the
            # shared controller arithmetic; their log rows stay NaN.
            x[bad] = 0.0
    result = []
    for i, sc in enumerate(scenarios):
        cols = {c: logs[c][:, i].copy() for c in columns}
        if "t" in cols:
            cols["t"] = times.copy()
        diverged = not alive[i]
        result.append(RunLog(
            cols, controller, sc, diverged,
            float(div_time[i]) if diverged else None,
            {"substeps": substeps, "n_steps": n},
        ))
    return result


def _record(logs, k, t, x, y_r, out: ControlOutput, alive):
    values = {
        "t": t,
        "q": x[:, 0],
        "alpha": x[:, 1],
        "y_r": y_r,
        "u_total": out.u_total[:, 0],
        "u_opt": out.u_opt[:, 0],
        "u_ad": out.u_ad[:, 0],
        "sigma1": out.sigma1[:, 0],
        "sigma2": out.sigma2[:, 0],
        "xhat_q": out.x_hat[:, 0],
        "xhat_alpha": out.x_hat[:, 1],
        "xtilde_q": out.x_tilde[:, 0],
        "xtilde_alpha": out.x_tilde[:, 1],
        "am_max_real": out.am_max_real,
    }
    for name, col in logs.items():
        col[k] = np.where(alive, values[name], np.nan)


def run(plant: LtvPlant, profile: ReferenceProfile, controller: str, scenario: Scenario,
        ampc_cfg=None, l1_cfg=None, refmpc_cfg=None, substeps: int = RK4_SUBSTEPS) -> RunLog:
    """Simulate one scenario; see :func:`run_batch`."""
    return run_batch(plant, profile, controller, [scenario], ampc_cfg, l1_cfg, refmpc_cfg,
                     substeps=substeps)[0]
