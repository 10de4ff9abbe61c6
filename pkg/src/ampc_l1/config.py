"""Root configuration document shared by every command.

JSON with the sections ``vehicle``, ``ampc``, ``l1``, ``refmpc``,
``scenario`` and ``analysis`` plus ``output_dir`` and ``seed``. Omitted keys
take their defaults; unknown keys are rejected so typos do not silently fall
back to a default.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from importlib.resources import files
from pathlib import Path

from .ampc import AmpcConfig
from .analysis import MonteCarloSpec, TdmSearch
from .errors import AmpcL1Error, ConfigError
from .l1 import L1Config
from .refmpc import RefMpcConfig
from .simkit import Scenario, case_scenario
from .vehicle import PlantFile, load_plant

SECTIONS = ("vehicle", "ampc", "l1", "refmpc", "scenario", "analysis", "output_dir", "seed")
CASES = ("case1", "case2", "case3", "case4", "custom")


def default_plant_path() -> Path:
    return Path(str(files("ampc_l1") / "data" / "booster_schedule.json"))


@dataclass(frozen=True)
class MarginSweep:
    w_min: float = 1e-3
    w_max: float = 1e3
    n_points: int = 4000


@dataclass(frozen=True)
class BenchSettings:
    repeats: int = 1000
    warmup: int = 100
    time: float = 0.0


@dataclass(frozen=True)
class AnalysisConfig:
    monte_carlo: MonteCarloSpec = field(default_factory=MonteCarloSpec)
    tdm: TdmSearch = field(default_factory=TdmSearch)
    margins: MarginSweep = field(default_factory=MarginSweep)
    bench: BenchSettings = field(default_factory=BenchSettings)
    points: tuple | None = None  # Mach labels to study; None means all


@dataclass(frozen=True)
class RootConfig:
    plant_file: Path
    ampc: AmpcConfig = field(default_factory=AmpcConfig)
    l1: L1Config = field(default_factory=L1Config)
    refmpc: RefMpcConfig = field(default_factory=RefMpcConfig)
    case: str = "case1"
    scenario_overrides: dict = field(default_factory=dict)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    output_dir: Path = Path("results")
    seed: int = 0

    def scenario(self, case: str | None = None) -> Scenario:
        return case_scenario(case or self.case, **self.scenario_overrides)

    def load_plant(self) -> PlantFile:
        return load_plant(self.plant_file)

    def to_dict(self) -> dict:
        an = self.analysis
        return {
            "vehicle": {"plant_file": str(self.plant_file)},
            "ampc": asdict(self.ampc),
            "l1": asdict(self.l1),
            "refmpc": asdict(self.refmpc),
            "scenario": {"case": self.case, **_listify(self.scenario_overrides)},
            "analysis": {
                "monte_carlo": {k: v for k, v in asdict(an.monte_carlo).items() if k != "seed"},
                "tdm": asdict(an.tdm),
                "margins": asdict(an.margins),
                "bench": asdict(an.bench),
                "points": None if an.points is None else list(an.points),
            },
            "output_dir": str(self.output_dir),
            "seed": self.seed,
        }


def _listify(d: dict) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def _build(cls, doc, where: str):
    if doc is None:
        return cls()
    if not isinstance(doc, dict):
        raise ConfigError(f"section '{where}' must be an object")
    known = {f.name for f in fields(cls)}
    extra = set(doc) - known
    if extra:
        raise ConfigError(f"unknown keys in '{where}': {sorted(extra)}")
    try:
        return cls(**doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid '{where}' section: {exc}") from exc


_SCENARIO_KEYS = {f.name for f in fields(Scenario)} - {"name"}


def parse_config(doc: dict, base_dir: Path | None = None) -> RootConfig:
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    extra = set(doc) - set(SECTIONS)
    if extra:
        raise ConfigError(f"unknown top-level keys: {sorted(extra)}")
    base_dir = base_dir or Path.cwd()

    vehicle = doc.get("vehicle") or {}
    if set(vehicle) - {"plant_file"}:
        raise ConfigError(f"unknown keys in 'vehicle': {sorted(set(vehicle) - {'plant_file'})}")
    plant_file = vehicle.get("plant_file")
    if plant_file is None:
        plant_path = default_plant_path()
    else:
        plant_path = Path(plant_file)
        if not plant_path.is_absolute():
            plant_path = base_dir / plant_path
        if not plant_path.is_file():
            raise ConfigError(f"plant file not found: {plant_path}")

    scen = dict(doc.get("scenario") or {})
    case = scen.pop("case", "case1")
    if case not in CASES:
        raise ConfigError(f"unknown case {case!r}; expected one of {CASES}")
    bad = set(scen) - _SCENARIO_KEYS
    if bad:
        raise ConfigError(f"unknown keys in 'scenario': {sorted(bad)}")
    for k in ("x0", "mismatch_scales"):
        if k in scen:
            scen[k] = tuple(scen[k])
    try:
        case_scenario(case, **scen)
    except (TypeError, ValueError, AmpcL1Error) as exc:
        raise ConfigError(f"invalid 'scenario' section: {exc}") from exc

    an = doc.get("analysis") or {}
    bad = set(an) - {"monte_carlo", "tdm", "margins", "bench", "points"}
    if bad:
        raise ConfigError(f"unknown keys in 'analysis': {sorted(bad)}")
    points = an.get("points")
    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("seed must be a non-negative integer")
    mc = dict(an.get("monte_carlo") or {})
    if "seed" in mc:
        raise ConfigError("set the Monte Carlo seed with the top-level 'seed' key")
    mc["seed"] = seed
    analysis = AnalysisConfig(
        monte_carlo=_build(MonteCarloSpec, mc, "analysis.monte_carlo"),
        tdm=_build(TdmSearch, an.get("tdm"), "analysis.tdm"),
        margins=_build(MarginSweep, an.get("margins"), "analysis.margins"),
        bench=_build(BenchSettings, an.get("bench"), "analysis.bench"),
        points=None if points is None else tuple(float(p) for p in points),
    )
    out = Path(doc.get("output_dir", "results"))
    if not out.is_absolute():
        out = base_dir / out
    return RootConfig(
        plant_file=plant_path,
        ampc=_build(AmpcConfig, doc.get("ampc"), "ampc"),
        l1=_build(L1Config, doc.get("l1"), "l1"),
        refmpc=_build(RefMpcConfig, doc.get("refmpc"), "refmpc"),
        case=case,
        scenario_overrides=scen,
        analysis=analysis,
        output_dir=out,
        seed=seed,
    )


def load_config(path) -> RootConfig:
    """Read and validate a config file; relative paths resolve against its folder."""
    if path is None:
        return parse_config({})
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(doc, path.parent)
