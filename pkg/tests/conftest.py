import numpy as np
import pytest
from hypothesis import settings

from ampc_l1.config import default_plant_path
from ampc_l1.vehicle import load_plant

settings.register_profile("artifact", deadline=None, max_examples=60)
settings.load_profile("artifact")


@pytest.fixture(scope="session")
def plant_file():
    return load_plant(default_plant_path())


@pytest.fixture(scope="session")
def plant(plant_file):
    return plant_file.plant


@pytest.fixture(scope="session")
def profile(plant_file):
    return plant_file.reference


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


class CaseRuns:
    """Full-length benchmark runs, simulated once per session and timed."""

    def __init__(self, plant, profile):
        self.plant = plant
        self.profile = profile
        self._logs = {}
        self.elapsed = {}

    def get(self, case, kind):
        import time

        from ampc_l1.simkit import case_scenario, run

        key = (case, kind)
        if key not in self._logs:
            start = time.perf_counter()
            self._logs[key] = run(self.plant, self.profile, kind, case_scenario(case))
            self.elapsed[key] = time.perf_counter() - start
        return self._logs[key]


@pytest.fixture(scope="session")
def case_runs(plant, profile):
    return CaseRuns(plant, profile)


class TdmCache:
    """Time-delay margins per (controller, operating time), computed once per session."""

    def __init__(self, plant):
        self.plant = plant
        self._values = {}

    def get(self, kind, t_op, search=None):
        from ampc_l1.analysis import TdmSearch, time_delay_margin

        search = search or TdmSearch()
        key = (kind, t_op, search)
        if key not in self._values:
            self._values[key] = time_delay_margin(kind, self.plant, t_op, search)
        return self._values[key]


@pytest.fixture(scope="session")
def tdm_cache(plant):
    return TdmCache(plant)
