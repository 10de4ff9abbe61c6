import csv
import inspect
import json
import math

import numpy as np
import pytest

from ampc_l1 import simkit
from ampc_l1.controllers import make_controller
from ampc_l1.errors import ConfigMismatch, UnknownPreset
from ampc_l1.simkit import (
    LOG_COLUMNS,
    Scenario,
    case_scenario,
    disturbance,
    mismatch_matrix,
    read_csv,
    rk4_period_maps,
    rk4_reference,
    run,
    run_batch,
)
from ampc_l1.vehicle import AeroPoint, LtvPlant, ReferenceProfile, VehicleParams, plant_at

UNIT = VehicleParams(1.0, 1.0, 1.0, 1.0)


def unit_plant(cm_q, cm_alpha):
    p = AeroPoint(0.0, 1.0, 1.0, cm_alpha, cm_q, 0.0, 0.0, 0.0)
    return LtvPlant((p, AeroPoint(**{**p.__dict__, "time": 1.0})), UNIT)


class TestPresets:
    def test_no_mismatch(self, plant):
        assert np.array_equal(mismatch_matrix("none", 3.0, plant), np.zeros((2, 2)))

    def test_case3_mismatch(self):
        plant = unit_plant(cm_q=-4.0, cm_alpha=3.0)  # M_q = -2, M_alpha = 3
        assert np.allclose(mismatch_matrix("case3", 0.5, plant), [[1.6, 2.4], [0.3, 0.7]], rtol=0, atol=1e-15)

    def test_scaled_zero(self, plant):
        assert np.array_equal(mismatch_matrix("scaled", 10.0, plant, (0, 0, 0, 0)), np.zeros((2, 2)))

    def test_scaled_entrywise(self, plant):
        A, _ = plant_at(plant, 10.0)
        got = mismatch_matrix("scaled", 10.0, plant, (0.1, -0.2, 0.3, 0.4))
        assert np.allclose(got, A * np.array([[0.1, -0.2], [0.3, 0.4]]), rtol=1e-15)

    def test_unknown_preset(self, plant):
        with pytest.raises(UnknownPreset):
            mismatch_matrix("bogus", 0.0, plant)
        with pytest.raises(UnknownPreset):
            disturbance("bogus", 0.0)
        with pytest.raises(UnknownPreset):
            Scenario(mismatch="bogus")

    def test_disturbance(self):
        assert np.array_equal(disturbance("none", 5.0), [0.0, 0.0])
        assert np.array_equal(disturbance("case4", 0.0), [0.0, 0.0])
        assert np.allclose(disturbance("case4", math.pi**2 / 3), [0.0, 2.0], rtol=0, atol=1e-15)

    def test_case_definitions(self):
        assert case_scenario("case1").input_gain == 1.0
        assert case_scenario("case2").input_gain == 0.4
        c3 = case_scenario("case3")
        assert (c3.input_gain, c3.mismatch) == (0.3, "case3")
        assert case_scenario("case4").disturbance == "case4"
        assert case_scenario("case1").x0 == (0.0, 2.0)
        with pytest.raises(UnknownPreset):
            case_scenario("case9")

    def test_scenario_validation(self):
        for bad in (dict(control_rate=0.0), dict(loop_delay=-1e-3), dict(t_final=0.0),
                    dict(mismatch_scales=(1.0, 2.0))):
            with pytest.raises(ValueError):
                Scenario(**bad)


class TestIntegrator:
    def test_maps_match_plain_rk4(self, plant):
        sc = Scenario(mismatch="case3", input_gain=0.3, disturbance="case4")
        t0, T = 37.2, 0.005
        P = rk4_period_maps(plant, [sc], t0, T, 3)
        x, u = np.array([0.4, 1.9]), 1.3

        def f(t, x):
            A, B = plant_at(plant, t)
            dA = mismatch_matrix("case3", t, plant)
            return (A + dA) @ x + B[:, 0] * 0.3 * u + disturbance("case4", t)

        for j in range(3):
            z = P[j, 0] @ np.array([x[0], x[1], u, 1.0])
            want = rk4_reference(f, x, t0 + j * T, t0 + (j + 1) * T, 4)
            assert np.allclose(z[:2], want, rtol=0, atol=1e-13)
            assert np.allclose(z[2:], [u, 1.0], rtol=0, atol=0)
            x = want

    def test_maps_exact_for_constant_linear_system(self):
        plant = unit_plant(cm_q=-4.0, cm_alpha=-3.0)
        P = rk4_period_maps(plant, [Scenario()], 0.0, 0.005, 1)[0, 0]
        A, _ = plant_at(plant, 0.0)
        import oracles
        assert np.allclose(P[:2, :2], oracles.expm(A, 0.005), rtol=0, atol=1e-12)

    def test_substep_refinement(self, plant, profile, case_runs):
        coarse = case_runs.get("case1", "ampc")
        fine = run(plant, profile, "ampc", case_scenario("case1"), substeps=8)
        for col in ("q", "alpha"):
            scale = max(1.0, abs(coarse[col][-1]))
            assert abs(fine[col][-1] - coarse[col][-1]) < 1e-6 * scale


class TestEngine:
    def test_equilibrium(self, plant):
        prof = ReferenceProfile.constant(0.0, 5.0)
        for kind in ("ampc", "ampc-l1", "refmpc"):
            log = run(plant, prof, kind, Scenario(x0=(0.0, 0.0), t_final=5.0))
            assert np.all(log["q"] == 0) and np.all(log["alpha"] == 0) and np.all(log["u_total"] == 0)

    def test_log_shape_and_finiteness(self, plant, profile):
        for kind in ("ampc", "ampc-l1", "refmpc"):
            log = run(plant, profile, kind, Scenario(t_final=3.0))
            assert set(log.columns) == set(LOG_COLUMNS)
            assert log.t.shape == (601,) and np.allclose(np.diff(log.t), 0.005)
            for name in LOG_COLUMNS:
                assert np.all(np.isfinite(log[name])), (kind, name)
            assert np.allclose(log["u_total"], log["u_opt"] + log["u_ad"], rtol=0, atol=1e-12)

    def test_determinism(self, plant, profile):
        sc = case_scenario("case3", t_final=10.0)
        a = run(plant, profile, "ampc-l1", sc)
        b = run(plant, profile, "ampc-l1", sc)
        for name in LOG_COLUMNS:
            assert np.array_equal(a[name], b[name])

    def test_zero_delay_matches_undelayed_path(self, plant, profile):
        # Same batch size so only the delay handling differs between the two.
        plain = run_batch(plant, profile, "ampc-l1", [Scenario(t_final=5.0)] * 2)[0]
        mixed = run_batch(plant, profile, "ampc-l1",
                          [Scenario(t_final=5.0), Scenario(t_final=5.0, loop_delay=0.0123)])
        for name in ("q", "alpha", "u_total"):
            assert np.array_equal(plain[name], mixed[0][name])
        assert not np.array_equal(plain["alpha"], mixed[1]["alpha"])

    def test_delayed_input_interpolation(self):
        u_hist = np.arange(10.0).reshape(10, 1, 1) * np.ones((1, 3, 1))
        got = simkit._delayed_input(u_hist, 5, np.array([0, 2, 7]), np.array([0.0, 0.25, 0.5]), False)
        assert np.array_equal(got[:, 0], [5.0, 2.75, 0.0])
        assert np.array_equal(simkit._delayed_input(u_hist, 5, None, None, True), u_hist[5])

    def test_delay_shifts_input(self, plant):
        prof = ReferenceProfile.constant(2.0, 2.0)
        sc = Scenario(x0=(0.0, 0.0), t_final=0.1, loop_delay=0.02)
        log = run(plant, prof, "ampc", sc)
        # No input reaches the plant for the first four periods.
        assert np.all(log["alpha"][:5] == 0.0) and log["alpha"][6] != 0.0

    def test_batch_equals_individual_runs(self, plant, profile):
        scs = [case_scenario("case2", t_final=4.0), case_scenario("case4", t_final=4.0)]
        together = run_batch(plant, profile, "ampc-l1", scs)
        for sc, log in zip(scs, together):
            alone = run(plant, profile, "ampc-l1", sc)
            assert np.allclose(alone.alpha, log.alpha, rtol=0, atol=1e-12)

    def test_divergence_flag(self, plant, profile):
        logs = run_batch(plant, profile, "ampc",
                         [Scenario(input_gain=-1.0, t_final=30.0), Scenario(t_final=30.0)])
        bad, good = logs
        assert bad.diverged and bad.divergence_time is not None
        k = int(np.argmax(np.isnan(bad.alpha)))
        assert k > 0 and np.all(np.isnan(bad.alpha[k:])) and np.all(np.isfinite(bad.alpha[:k]))
        assert not good.diverged and np.all(np.isfinite(good.alpha))
        from ampc_l1.analysis import tracking_error_norm
        assert tracking_error_norm(bad) == math.inf

    def test_batch_timing_must_agree(self, plant, profile):
        with pytest.raises(ConfigMismatch):
            run_batch(plant, profile, "ampc", [Scenario(t_final=1.0), Scenario(t_final=2.0)])
        with pytest.raises(ConfigMismatch):
            run(plant, profile, "ampc", Scenario(x0=(0.0, 1.0, 2.0), t_final=1.0))

    def test_information_barrier(self, plant, profile, monkeypatch):
        params = inspect.signature(make_controller("ampc-l1").update).parameters
        assert list(params) == ["t", "x", "y_r", "A", "B_m", "C"]

        seen = []

        def recording(*args, **kwargs):
            ctrl = make_controller(*args, **kwargs)
            inner = ctrl.update

            def update(t, x, y_r, A, B_m, C):
                seen[-1].append((t, y_r, A.copy(), B_m.copy(), C.copy()))
                return inner(t, x, y_r, A, B_m, C)

            ctrl.update = update
            return ctrl

        monkeypatch.setattr(simkit, "make_controller", recording)
        for sc in (Scenario(t_final=2.0),
                   Scenario(t_final=2.0, mismatch="scaled", mismatch_scales=(9.0, -9.0, 9.0, 9.0),
                            input_gain=0.123, disturbance="case4")):
            seen.append([])
            run(plant, profile, "ampc-l1", sc)
        nominal, sentinel = seen
        assert len(nominal) == len(sentinel)
        for a, b in zip(nominal, sentinel):
            assert a[0] == b[0] and a[1] == b[1]
            for m1, m2 in zip(a[2:], b[2:]):
                assert np.array_equal(m1, m2)

    def test_nominal_case_tracks(self, case_runs):
        for kind in ("ampc", "ampc-l1"):
            log = case_runs.get("case1", kind)
            tail = log.window(110.0, 120.0)
            assert np.mean(np.abs(log.y_r[tail] - log.alpha[tail])) < 0.05

    def test_reduced_input_gain(self, case_runs):
        tail = None
        errs = {}
        for kind in ("ampc", "ampc-l1"):
            log = case_runs.get("case2", kind)
            tail = log.window(110.0, 120.0)
            errs[kind] = np.mean(np.abs(log.y_r[tail] - log.alpha[tail]))
        assert errs["ampc"] > 0.5 and errs["ampc-l1"] < 0.1


class TestOutput:
    def test_csv_and_sidecar(self, plant, profile, tmp_path):
        log = run(plant, profile, "ampc-l1", case_scenario("case2", t_final=1.0))
        path = tmp_path / "case2_ampc-l1.csv"
        log.write(path)
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == list(LOG_COLUMNS)
        assert len(rows) == 202 and all(len(r) == len(LOG_COLUMNS) for r in rows)
        back = read_csv(path)
        for name in LOG_COLUMNS:
            assert np.array_equal(back[name], log[name])
        meta = json.loads(path.with_suffix(".json").read_text())
        assert meta["scenario"]["input_gain"] == 0.4
        assert meta["controller"] == "ampc-l1" and meta["columns"] == list(LOG_COLUMNS)
        assert math.isclose(meta["error_norm"], __import__("ampc_l1").analysis.tracking_error_norm(log))
