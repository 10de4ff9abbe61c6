"""Linear time-varying short-period plant of the re-entry booster.

State order is ``x = [q, alpha]`` (deg/s, deg), the single input is the
fin deflection (deg) and the output is ``alpha``. Aerodynamic data are a
time schedule of :class:`AeroPoint` knots interpolated linearly; dimensional
derivatives are formed after interpolation.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ConfigError, OutOfSchedule

OUTPUT_MATRIX = np.array([[0.0, 1.0]])
_TIME_TOL = 1e-9

_AERO_FIELDS = (
    "velocity",
    "dynamic_pressure",
    "cm_alpha",
    "cm_q",
    "cm_de",
    "cn_alpha",
    "cn_de",
    "alpha_dot_q",
)


@dataclass(frozen=True)
class VehicleParams:
    mass: float
    pitch_inertia: float
    ref_area: float
    ref_length: float

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not value > 0:
                raise ValueError(f"vehicle parameter {name} must be positive, got {value}")


@dataclass(frozen=True)
class AeroPoint:
    """One schedule knot. Coefficients are per deg (``cm_q`` per deg/s)."""

    time: float
    velocity: float
    dynamic_pressure: float
    cm_alpha: float
    cm_q: float
    cm_de: float
    cn_alpha: float
    cn_de: float
    alpha_dot_q: float = 1.0

    def __post_init__(self):
        if not self.velocity > 0:
            raise ValueError("velocity must be positive")
        if not self.dynamic_pressure > 0:
            raise ValueError("dynamic pressure must be positive")


class Derivatives(NamedTuple):
    M_q: float
    M_alpha: float
    M_de: float
    N_alpha: float
    N_de: float


def _derivatives(qbar, velocity, cm_alpha, cm_q, cm_de, cn_alpha, cn_de, v: VehicleParams):
    # Works elementwise on scalars or arrays.
    qs = qbar * v.ref_area
    return Derivatives(
        M_q=qs * v.ref_length**2 / (2.0 * v.pitch_inertia * velocity) * cm_q,
        M_alpha=qs * v.ref_length / v.pitch_inertia * cm_alpha,
        M_de=qs * v.ref_length / v.pitch_inertia * cm_de,
        N_alpha=qs / v.mass * cn_alpha,
        N_de=qs / v.mass * cn_de,
    )


def dimensional_derivatives(p: AeroPoint, v: VehicleParams) -> Derivatives:
    """(M_q, M_alpha, M_de, N_alpha, N_de) at one aero point."""
    return _derivatives(
        p.dynamic_pressure, p.velocity, p.cm_alpha, p.cm_q, p.cm_de, p.cn_alpha, p.cn_de, v
    )


@dataclass(frozen=True)
class OperatingPoint:
    """Labelled flight condition on the trajectory (used by margin studies)."""

    mach: float
    altitude: float
    time: float


@dataclass(frozen=True)
class ReferenceProfile:
    """Piecewise-linear command built from (t0, t1, y0, y1) segments."""

    segments: tuple

    def __post_init__(self):
        segs = tuple(tuple(float(v) for v in s) for s in self.segments)
        if not segs:
            raise ValueError("reference profile needs at least one segment")
        for (t0, t1, _, _) in segs:
            if not t1 > t0:
                raise ValueError("segment end must follow its start")
        for prev, nxt in zip(segs, segs[1:]):
            if abs(prev[1] - nxt[0]) > _TIME_TOL:
                raise ValueError("reference segments must be contiguous")
        object.__setattr__(self, "segments", segs)

    @classmethod
    def constant(cls, value: float, t_final: float = 1.0) -> "ReferenceProfile":
        return cls(((0.0, float(t_final), value, value),))

    def _knots(self):
        ts = [self.segments[0][0]]
        ys = [self.segments[0][2]]
        for t0, t1, y0, y1 in self.segments:
            if abs(ys[-1] - y0) > 0.0:
                # Step discontinuity at a segment boundary.
                ts.append(t0)
                ys.append(y0)
            ts.append(t1)
            ys.append(y1)
        return np.array(ts), np.array(ys)

    def __call__(self, t):
        ts, ys = self._knots()
        out = np.interp(t, ts, ys)
        return float(out) if np.ndim(out) == 0 else out


def reference_command(profile: ReferenceProfile, t):
    """Evaluate the command; values beyond the last segment are held."""
    return profile(t)


class PlantSample(NamedTuple):
    A: np.ndarray
    B_m: np.ndarray


@dataclass(frozen=True, eq=False)
class LtvPlant:
    schedule: tuple
    params: VehicleParams
    C: np.ndarray = field(default_factory=lambda: OUTPUT_MATRIX.copy())

    def __post_init__(self):
        sched = tuple(self.schedule)
        if len(sched) < 1:
            raise ValueError("schedule must contain at least one knot")
        times = np.array([p.time for p in sched])
        if np.any(np.diff(times) <= 0):
            raise ValueError("schedule times must be strictly increasing")
        object.__setattr__(self, "schedule", sched)
        table = np.array([[getattr(p, f) for f in _AERO_FIELDS] for p in sched])
        object.__setattr__(self, "_times", times)
        object.__setattr__(self, "_table", table)

    @property
    def t_start(self) -> float:
        return float(self._times[0])

    @property
    def t_end(self) -> float:
        return float(self._times[-1])

    def _fields(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < self.t_start - _TIME_TOL) or np.any(t > self.t_end + _TIME_TOL):
            raise OutOfSchedule(
                f"t outside schedule [{self.t_start}, {self.t_end}]: "
                f"min {float(np.min(t))}, max {float(np.max(t))}"
            )
        if len(self._times) == 1:
            return [np.full(t.shape, col) for col in self._table[0]]
        return [np.interp(t, self._times, self._table[:, j]) for j in range(self._table.shape[1])]

    def sample(self, times) -> PlantSample:
        """Vectorised ``plant_at`` over a 1-D array of times: A (k,2,2), B_m (k,2,1)."""
        vel, qbar, cma, cmq, cmd, cna, cnd, adq = self._fields(np.atleast_1d(times))
        d = _derivatives(qbar, vel, cma, cmq, cmd, cna, cnd, self.params)
        k = vel.shape[0]
        A = np.empty((k, 2, 2))
        A[:, 0, 0] = d.M_q
        A[:, 0, 1] = d.M_alpha
        A[:, 1, 0] = adq
        A[:, 1, 1] = -d.N_alpha / vel
        B = np.empty((k, 2, 1))
        B[:, 0, 0] = d.M_de
        B[:, 1, 0] = -d.N_de / vel
        return PlantSample(A, B)

    def derivatives_at(self, t: float) -> Derivatives:
        vel, qbar, cma, cmq, cmd, cna, cnd, _ = self._fields(t)
        d = _derivatives(qbar, vel, cma, cmq, cmd, cna, cnd, self.params)
        return Derivatives(*(float(x) for x in d))

    def frozen(self, t: float, t_final: float = 1e9) -> "LtvPlant":
        """LTI plant holding the schedule values at time ``t`` over [0, t_final]."""
        vals = dict(zip(_AERO_FIELDS, (float(x) for x in self._fields(t))))
        knots = (AeroPoint(time=0.0, **vals), AeroPoint(time=float(t_final), **vals))
        return LtvPlant(knots, self.params, self.C)


def plant_at(plant: LtvPlant, t: float) -> PlantSample:
    """Nominal (A, B_m) at time ``t`` by linear interpolation of the schedule."""
    s = plant.sample(np.array([t]))
    return PlantSample(s.A[0], s.B_m[0])


# -- schedule file ---------------------------------------------------------------


@dataclass(frozen=True)
class PlantFile:
    plant: LtvPlant
    reference: ReferenceProfile
    operating_points: tuple
    raw: dict


def parse_plant(doc: dict) -> PlantFile:
    try:
        params = VehicleParams(**doc["vehicle"])
        schedule = tuple(AeroPoint(**p) for p in doc["schedule"])
        ref = ReferenceProfile(tuple(tuple(s) for s in doc["reference"]["segments"]))
        ops = tuple(OperatingPoint(**p) for p in doc.get("operating_points", []))
        plant = LtvPlant(schedule, params)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid plant document: {exc}") from exc
    return PlantFile(plant, ref, ops, doc)


def load_plant(path) -> PlantFile:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"plant file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"plant file {path} is not valid JSON: {exc}") from exc
    return parse_plant(doc)


def plant_to_dict(plant: LtvPlant, reference: ReferenceProfile, ops: Sequence[OperatingPoint] = ()) -> dict:
    return {
        "vehicle": asdict(plant.params),
        "schedule": [asdict(p) for p in plant.schedule],
        "reference": {"segments": [list(s) for s in reference.segments]},
        "operating_points": [asdict(o) for o in ops],
    }
