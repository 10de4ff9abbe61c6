"""Performance metrics and robustness studies.

* tracking-error 2-norm of a run,
* paired Monte Carlo campaigns over derivative and input-gain uncertainty,
* time-delay margin by batched interval search on a frozen flight condition,
* gain and phase margins of the AMPC loop broken at the plant input,
* per-update timing of the controllers.
"""

from __future__ import annotations

import csv
import gc
import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .ampc import AmpcConfig, AmpcState, ampc_update
from .controllers import make_controller
from .errors import UnstableAtZeroDelay
from .l1 import L1Config
from .refmpc import RefMpcConfig
from .simkit import Scenario, case_scenario, run_batch
from .vehicle import LtvPlant, OperatingPoint, ReferenceProfile, plant_at

# -- error norm ----------------------------------------------------------------------


def tracking_error_norm(log) -> float:
    """sqrt(integral (y_r - alpha)^2 dt), trapezoidal over the logged samples."""
    if getattr(log, "diverged", False):
        return math.inf
    e = np.asarray(log.y_r, dtype=float) - np.asarray(log.alpha, dtype=float)
    return float(math.sqrt(np.trapezoid(e * e, np.asarray(log.t, dtype=float))))


# -- Monte Carlo ---------------------------------------------------------------------


@dataclass(frozen=True)
class MonteCarloSpec:
    """Standard deviations of the per-run perturbations.

    The four derivative sigmas are relative (fraction of the nominal value,
    applied as a constant multiplicative offset for the whole run); the
    input-gain sigma is absolute around 1.
    """

    n_runs: int = 100
    sigma_mq: float = 0.25
    sigma_malpha: float = 0.25
    sigma_alpha_dot_q: float = 0.25
    sigma_nalpha: float = 0.25
    sigma_input_gain: float = 0.2
    seed: int = 0
    chunk_size: int = 100

    def __post_init__(self):
        if self.n_runs < 1:
            raise ValueError("n_runs must be >= 1")
        if self.chunk_size < 1:
            raise ValueError("chunk_size must be >= 1")
        for name in ("sigma_mq", "sigma_malpha", "sigma_alpha_dot_q", "sigma_nalpha", "sigma_input_gain"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def draw(self) -> np.ndarray:
        """(n_runs, 5) table: relative offsets on M_q, M_alpha, alpha_dot_q, N_alpha and input gain."""
        rng = np.random.default_rng(self.seed)
        z = rng.standard_normal((self.n_runs, 5))
        sig = np.array([self.sigma_mq, self.sigma_malpha, self.sigma_alpha_dot_q,
                        self.sigma_nalpha, self.sigma_input_gain])
        out = z * sig
        out[:, 4] += 1.0
        return out

    def scenarios(self, draws: np.ndarray, base: Scenario) -> list[Scenario]:
        fields = {k: v for k, v in base.to_dict().items() if k not in ("mismatch", "mismatch_scales", "input_gain")}
        return [
            Scenario(mismatch="scaled", mismatch_scales=tuple(d[:4]), input_gain=float(d[4]),
                     **{**fields, "name": f"mc{i:04d}"})
            for i, d in enumerate(draws)
        ]


@dataclass
class ControllerStats:
    norms: np.ndarray
    diverged: np.ndarray
    draws: np.ndarray

    @property
    def finite(self) -> np.ndarray:
        return self.norms[~self.diverged]

    @property
    def mean(self) -> float:
        f = self.finite
        return float(np.mean(f)) if f.size else math.nan

    @property
    def std(self) -> float:
        f = self.finite
        return float(np.std(f, ddof=1)) if f.size > 1 else 0.0

    @property
    def n_diverged(self) -> int:
        return int(self.diverged.sum())


@dataclass
class MonteCarloResult:
    spec: MonteCarloSpec
    per_controller: dict
    elapsed: float = 0.0

    def summary(self) -> dict:
        return {
            kind: {"mean": s.mean, "std": s.std, "n_runs": int(s.norms.size),
                   "n_diverged": s.n_diverged}
            for kind, s in self.per_controller.items()
        }


def monte_carlo(spec: MonteCarloSpec, plant: LtvPlant, profile: ReferenceProfile,
                ampc_cfg: AmpcConfig | None = None, l1_cfg: L1Config | None = None,
                base: Scenario | None = None, controllers: Sequence[str] = ("ampc", "ampc-l1")) -> MonteCarloResult:
    """Paired campaign: every controller sees exactly the same perturbation draws."""
    start = time.perf_counter()
    base = base or case_scenario("case1")
    draws = spec.draw()
    per = {}
    for kind in controllers:
        norms = np.empty(spec.n_runs)
        div = np.zeros(spec.n_runs, dtype=bool)
        used = np.empty_like(draws)
        for lo in range(0, spec.n_runs, spec.chunk_size):
            hi = min(lo + spec.chunk_size, spec.n_runs)
            scs = spec.scenarios(draws[lo:hi], base)
            for i, sc in enumerate(scs):
                used[lo + i, :4] = sc.mismatch_scales
                used[lo + i, 4] = sc.input_gain
            logs = run_batch(plant, profile, kind, scs, ampc_cfg, l1_cfg,
                             columns=("t", "alpha", "y_r"))
            for i, log in enumerate(logs):
                norms[lo + i] = tracking_error_norm(log)
                div[lo + i] = log.diverged
        per[kind] = ControllerStats(norms, div, used)
    return MonteCarloResult(spec, per, time.perf_counter() - start)


# -- time-delay margin ---------------------------------------------------------------


@dataclass(frozen=True)
class TdmSearch:
    """Settings of the delay search.

    A run is unstable if it diverges or if the peak-to-peak swing of the
    tracking error over the last quarter exceeds ``growth_ratio`` times the
    swing over the second quarter. Swings below ``floor`` (deg) count as
    settled so round-off is never judged as growth.
    """

    bracket: float = 1.0
    resolution: float = 1e-3
    t_final: float = 40.0
    reference: float = 2.0
    growth_ratio: float = 1.5
    floor: float = 1e-6
    points: int = 15

    def __post_init__(self):
        if not (self.bracket > 0 and self.resolution > 0 and self.t_final > 0):
            raise ValueError("bracket, resolution and t_final must be positive")
        if self.points < 1:
            raise ValueError("points must be >= 1")


@dataclass
class TdmResult:
    margin: float
    evaluations: list = field(default_factory=list)

    @property
    def margin_ms(self) -> float:
        return self.margin * 1e3


def envelope_unstable(log, search: TdmSearch) -> bool:
    if log.diverged:
        return True
    e = log.y_r - log.alpha
    T = search.t_final
    second = np.ptp(e[log.window(0.25 * T, 0.5 * T)])
    last = np.ptp(e[log.window(0.75 * T, T)])
    if not np.isfinite(last):
        return True
    return bool(last > search.floor and last > search.growth_ratio * second)


def delay_verdicts(kind: str, plant: LtvPlant, delays, search: TdmSearch,
                   ampc_cfg=None, l1_cfg=None) -> np.ndarray:
    """Instability verdict for each delay on an LTI plant, in one batch."""
    profile = ReferenceProfile.constant(search.reference, search.t_final)
    scs = [Scenario(loop_delay=float(d), x0=(0.0, 0.0), t_final=search.t_final, name="tdm")
           for d in delays]
    logs = run_batch(plant, profile, kind, scs, ampc_cfg, l1_cfg, columns=("t", "alpha", "y_r"))
    return np.array([envelope_unstable(log, search) for log in logs])


def time_delay_margin(kind: str, plant: LtvPlant, t_op: float, search: TdmSearch | None = None,
                      ampc_cfg=None, l1_cfg=None) -> TdmResult:
    """Largest loop delay verified stable at the flight condition frozen at ``t_op``.

    The interval [stable, unstable] is cut into ``points + 1`` pieces per
    batch. Returns ``inf`` when the loop is still stable at ``bracket``.
    """
    search = search or TdmSearch()
    frozen = plant.frozen(t_op, search.t_final + 1.0)
    evals = []

    def judge(delays):
        v = delay_verdicts(kind, frozen, delays, search, ampc_cfg, l1_cfg)
        evals.extend(zip((float(d) for d in delays), (bool(b) for b in v)))
        return v

    lo, hi = 0.0, search.bracket
    first = judge(np.concatenate([[0.0], np.linspace(0.0, hi, search.points + 1)[1:]]))
    if first[0]:
        raise UnstableAtZeroDelay(f"{kind} loop is unstable without delay at t={t_op}", margin=0.0)
    grid = np.linspace(0.0, hi, search.points + 1)
    if not first[1:].any():
        return TdmResult(math.inf, evals)
    j = int(np.argmax(first[1:])) + 1
    lo, hi = grid[j - 1], grid[j]
    while hi - lo > search.resolution:
        inner = np.linspace(lo, hi, search.points + 2)[1:-1]
        v = judge(inner)
        if v.any():
            j = int(np.argmax(v))
            hi = inner[j]
            if j > 0:
                lo = inner[j - 1]
        else:
            lo = inner[-1]
    return TdmResult(float(lo), evals)


# -- LTI margins ---------------------------------------------------------------------


@dataclass(frozen=True)
class LoopMargins:
    gain_margin: float
    phase_margin: float
    gain_crossover: float
    phase_crossover: float

    @property
    def gain_margin_db(self) -> float:
        return math.inf if math.isinf(self.gain_margin) else 20.0 * math.log10(self.gain_margin)


def loop_frequency_response(A, B_m, state: AmpcState, omega) -> np.ndarray:
    """L(jw) = K F (jw I - A)^-1 B_m for the loop broken at the plant input."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    omega = np.asarray(omega, dtype=float)
    M = 1j * omega[:, None, None] * np.eye(n) - A
    X = np.linalg.solve(M, np.broadcast_to(np.asarray(B_m, dtype=complex), (omega.size,) + np.shape(B_m)))
    KF = state.K @ state.F
    return (KF @ X)[:, 0, 0]


def _interp_log(w0, w1, y0, y1):
    """Root of the line through (log w0, y0), (log w1, y1)."""
    frac = y0 / (y0 - y1)
    return math.exp(math.log(w0) + frac * (math.log(w1) - math.log(w0))), frac


def margins_from_response(omega, L) -> LoopMargins:
    """Gain/phase margins of a negative-feedback loop from its frequency response.

    Crossings are located by sign changes on the grid and refined by linear
    interpolation in log frequency. Missing crossings give ``inf``.
    """
    omega = np.asarray(omega, dtype=float)
    L = np.asarray(L, dtype=complex)
    mag = np.abs(L)
    phase = np.unwrap(np.angle(L))

    pm, wc = math.inf, math.nan
    g = np.log(mag)
    for i in np.nonzero(np.sign(g[:-1]) * np.sign(g[1:]) < 0)[0]:
        w, frac = _interp_log(omega[i], omega[i + 1], g[i], g[i + 1])
        ph = phase[i] + frac * (phase[i + 1] - phase[i])
        margin = math.degrees(ph) % 360.0 - 180.0
        if margin < pm:
            pm, wc = margin, w

    gm, wp = math.inf, math.nan
    im = L.imag
    for i in np.nonzero(np.sign(im[:-1]) * np.sign(im[1:]) < 0)[0]:
        w, frac = _interp_log(omega[i], omega[i + 1], im[i], im[i + 1])
        re = L.real[i] + frac * (L.real[i + 1] - L.real[i])
        if re >= 0:
            continue
        ratio = 1.0 / abs(re)
        if ratio < gm:
            gm, wp = ratio, w
    return LoopMargins(gm, pm, wc, wp)


def lti_margins(A, B_m, C, state: AmpcState | None = None, w_min: float = 1e-3, w_max: float = 1e3,
                n_points: int = 4000, cfg: AmpcConfig | None = None) -> LoopMargins:
    """Margins of the frozen AMPC loop; the AMPC design is formed if not given."""
    if n_points < 2000:
        raise ValueError("the sweep needs at least 2000 points")
    if state is None:
        state = ampc_update(A, B_m, C, cfg or AmpcConfig())
    omega = np.logspace(math.log10(w_min), math.log10(w_max), n_points)
    return margins_from_response(omega, loop_frequency_response(A, B_m, state, omega))


@dataclass
class MarginReport:
    mach: float
    altitude: float
    time: float
    phase_margin: float
    gain_margin: float
    tdm: dict = field(default_factory=dict)


def margin_study(plant: LtvPlant, points: Sequence[OperatingPoint], ampc_cfg=None, l1_cfg=None,
                 search: TdmSearch | None = None, controllers: Sequence[str] = ("ampc", "ampc-l1"),
                 with_tdm: bool = True) -> list[MarginReport]:
    out = []
    for op in points:
        A, B = plant_at(plant, op.time)
        m = lti_margins(A, B, plant.C, cfg=ampc_cfg)
        tdm = {}
        if with_tdm:
            for kind in controllers:
                tdm[kind] = time_delay_margin(kind, plant, op.time, search, ampc_cfg, l1_cfg).margin
        out.append(MarginReport(op.mach, op.altitude, op.time, m.phase_margin, m.gain_margin, tdm))
    return out


# -- timing --------------------------------------------------------------------------


BENCH_ROWS = ("refmpc-10", "refmpc-5", "ampc", "ampc-l1")


@dataclass
class TimingRow:
    name: str
    median_s: float
    ratio_to_ampc: float


def timing_benchmark(plant: LtvPlant, t: float = 0.0, repeats: int = 1000, warmup: int = 100,
                     ampc_cfg=None, l1_cfg=None, refmpc_cfg: RefMpcConfig | None = None) -> list[TimingRow]:
    """Median wall time of one control update per controller.

    Updates are interleaved round-robin so slow drifts of the machine hit all
    controllers alike; the garbage collector is paused while timing.
    """
    if repeats < 1000:
        raise ValueError("timing needs at least 1000 repeats")
    base = refmpc_cfg or RefMpcConfig()
    A, B = plant_at(plant, t)
    C = plant.C
    x = np.array([[0.3, 1.5]])
    ctrls = {
        "refmpc-10": make_controller("refmpc", refmpc_cfg=_with_points(base, 10), report_poles=False),
        "refmpc-5": make_controller("refmpc", refmpc_cfg=_with_points(base, 5), report_poles=False),
        "ampc": make_controller("ampc", ampc_cfg),
        "ampc-l1": make_controller("ampc-l1", ampc_cfg, l1_cfg),
    }
    for c in ctrls.values():
        c.reset(x)
    samples = {k: np.empty(repeats) for k in ctrls}
    clock = time.perf_counter
    enabled = gc.isenabled()
    gc.disable()
    try:
        for _ in range(warmup):
            for c in ctrls.values():
                c.update(t, x, 2.0, A, B, C)
        for r in range(repeats):
            for k, c in ctrls.items():
                t0 = clock()
                c.update(t, x, 2.0, A, B, C)
                samples[k][r] = clock() - t0
    finally:
        if enabled:
            gc.enable()
    med = {k: float(np.median(v)) for k, v in samples.items()}
    return [TimingRow(k, med[k], med[k] / med["ampc"]) for k in BENCH_ROWS]


def _with_points(cfg: RefMpcConfig, n_pred: int) -> RefMpcConfig:
    return RefMpcConfig(**{**asdict(cfg), "n_pred": n_pred})


# -- output tables -------------------------------------------------------------------


def config_hash(doc) -> str:
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def _fmt(v):
    if isinstance(v, float):
        return "inf" if math.isinf(v) else repr(v)
    return v


def write_table(path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_manifest(path, payload: dict, config: dict, seed) -> None:
    doc = {"seed": seed, "config_hash": config_hash(config), "config": config, **payload}
    Path(path).write_text(json.dumps(_strict(doc), indent=2, default=_json_default, allow_nan=False))


def _strict(o):
    # JSON has no inf/nan; null stands for "no crossover", "beyond bracket" or "undefined".
    if isinstance(o, dict):
        return {k: _strict(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_strict(v) for v in o]
    if isinstance(o, (float, np.floating)) and not math.isfinite(o):
        return None
    return o


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def monte_carlo_rows(result: MonteCarloResult):
    kinds = list(result.per_controller)
    header = ["run"] + [f"norm_{k}" for k in kinds] + ["d_mq", "d_malpha", "d_alpha_dot_q", "d_nalpha", "input_gain"]
    draws = result.per_controller[kinds[0]].draws
    rows = []
    for i in range(result.spec.n_runs):
        rows.append([i] + [float(result.per_controller[k].norms[i]) for k in kinds] + [float(v) for v in draws[i]])
    return header, rows


def margin_rows(reports: Sequence[MarginReport]):
    kinds = sorted({k for r in reports for k in r.tdm})
    header = ["mach", "altitude_m", "time_s", "phase_margin_deg", "gain_margin"] + [f"tdm_{k}_ms" for k in kinds]
    rows = [[r.mach, r.altitude, r.time, r.phase_margin, r.gain_margin]
            + [r.tdm.get(k, math.nan) * 1e3 for k in kinds] for r in reports]
    return header, rows
