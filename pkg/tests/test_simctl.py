import dataclasses

import numpy as np
import pytest

from ascetic import simctl
from ascetic.model import SlotAllocation, objective_cost
from ascetic.orchestrator import SlotOrchestrator
from ascetic.simctl import (ConstraintViolationError, ExperimentConfig, SweepError, apply_env,
                            parse_metrics, plot_data, run_simulation, sweep)
from ascetic.topology import TopologyParams
from ascetic.workload import MobilityModel, ScenarioParams


def small(**kw):
    base = dict(nodes=8, scenario=ScenarioParams(n_requests=15, horizon=4), predictor="oracle",
                repetitions=1)
    base.update(kw)
    return ExperimentConfig(**base)


class TestRunSimulation:
    def test_series_length_is_horizon(self):
        cfg = small(scenario=ScenarioParams(n_requests=10, horizon=10))
        s = run_simulation(cfg, 0)
        assert len(s) == 10 and s.unsupported.shape == (10,)

    @pytest.mark.parametrize("orch", ["wise", "random", "ccam"])
    def test_zero_requests(self, orch):
        s = run_simulation(small(scenario=ScenarioParams(n_requests=0, horizon=5)), 0, orch)
        assert not s.cost.any() and not s.mean_delay.any() and not s.unsupported.any()

    @pytest.mark.parametrize("predictor", ["ddql", "frequency", "oracle", "random"])
    def test_same_seed_same_series(self, predictor):
        cfg = small(predictor=predictor, window=2)
        a, b = run_simulation(cfg, 3), run_simulation(cfg, 3)
        assert a.rows() == b.rows()
        assert a.allocation.to_csv(a.topology) == b.allocation.to_csv(b.topology)

    def test_accounting_identity(self):
        for orch in ("wise", "random", "ccam"):
            s = run_simulation(small(), 1, orch)
            agg = s.aggregates()
            again = objective_cost(s.allocation, s.scenario, s.topology)
            assert agg["total_cost"] == pytest.approx(again, rel=1e-9)

    def test_delay_bounded_by_deadlines(self):
        s = run_simulation(small(scenario=ScenarioParams(n_requests=40, horizon=5)), 2)
        for t, slot in s.allocation.slots.items():
            if slot.supported:
                bound = max(s.scenario.requests[r].max_delay for r in slot.supported)
                assert s.mean_delay[t - 1] <= bound

    def test_exact_runs_inside_limits(self):
        cfg = small(nodes=4, z=2, topology=TopologyParams(k_paths=2), orchestrators=("exact",),
                    scenario=ScenarioParams(n_requests=3, horizon=2, n_services=2,
                                            instances_per_service=2))
        s = run_simulation(cfg, 0)
        assert len(s) == 2

    def test_exact_outside_limits_is_rejected(self):
        with pytest.raises(ValueError):
            run_simulation(small(orchestrators=("exact",)), 0)

    def test_violation_is_fatal(self, monkeypatch):
        def broken(self, t, table=None):
            slot = SlotAllocation(t)
            for r in self.scenario.active(t):
                slot.assign[r.id] = 0
            return slot
        monkeypatch.setattr(SlotOrchestrator, "step", broken)
        with pytest.raises(ConstraintViolationError) as err:
            run_simulation(small(), 0)
        assert not err.value.report.feasible

    def test_wise_slot_time_at_fifty_nodes(self):
        cfg = ExperimentConfig(nodes=50, scenario=ScenarioParams(n_requests=100, horizon=3),
                               predictor="oracle")
        s = run_simulation(cfg, 0)
        assert s.wall_clock / 3 < 1.0


class TestSweep:
    def test_three_axis_values(self):
        cfg = small(axis="nodes", axis_values=(6, 8, 10))
        res = sweep(cfg)
        summary = res.summary_csv().splitlines()
        assert len(summary) == 4
        assert [r.split(",")[0] for r in summary[1:]] == ["nodes=6", "nodes=8", "nodes=10"]

    def test_repetitions_average(self):
        cfg = small(axis="requests", axis_values=(10,), orchestrators=("wise", "ccam"))
        res = sweep(cfg, repetitions=5)
        assert len(res.runs) == 10
        rows = res.summary_csv().splitlines()[1:]
        for row in rows:
            axis, orch, runs, total = row.split(",")[:4]
            want = np.mean([s.cost.sum() for _, s in res.runs if s.orchestrator == orch])
            assert int(runs) == 5 and float(total) == pytest.approx(want, rel=1e-12)

    def test_failures_carry_run_identity(self, monkeypatch):
        def boom(*a, **k):
            raise RuntimeError("bad")
        monkeypatch.setattr(simctl, "run_simulation", boom)
        with pytest.raises(SweepError, match="orch=wise seed=0"):
            sweep(small())

    def test_csv_round_trip_through_plotdata(self):
        res = sweep(small(axis="requests", axis_values=(5, 10), orchestrators=("wise", "random")))
        text = res.metrics_csv()
        assert text.splitlines()[0] == "axis,orch,seed,slot,cost,mean_delay_ms,unsupported"
        rows = parse_metrics(text)
        assert plot_data(rows) == res.plotdata_csv()
        panels = {line.split(",")[0] for line in res.plotdata_csv().splitlines()[1:]}
        assert panels == {"cost", "delay", "unsupported"}
        with pytest.raises(ValueError):
            parse_metrics("a,b\n")


class TestConfig:
    def test_text_round_trip(self):
        cfg = ExperimentConfig(nodes=12, orchestrators=("wise", "ccam"), axis="requests",
                               axis_values=(20, 40),
                               topology=TopologyParams(max_hops=4, link_cost=(5, 9)),
                               scenario=ScenarioParams(max_delay=(6.0, 40.0), arrival_window=2,
                                                       mobility=MobilityModel.cyclic([1, 2])))
        text = cfg.to_text()
        assert text.startswith("ascetic-cfg v1\n")
        assert ExperimentConfig.from_text(text) == cfg

    def test_partial_file_and_comments(self):
        cfg = ExperimentConfig.from_text("ascetic-cfg v1\n# comment\nnodes = 7\n"
                                         "scenario.horizon = 3\nmobility.kind = static\n")
        assert cfg.nodes == 7 and cfg.horizon == 3 and cfg.scenario.mobility.kind == "static"

    def test_bad_files(self):
        with pytest.raises(ValueError):
            ExperimentConfig.from_text("ascetic-cfg v0\n")
        with pytest.raises(ValueError):
            ExperimentConfig.from_text("ascetic-cfg v1\nbogus = 1\n")

    def test_validation(self):
        for bad in (dict(orchestrators=("magic",)), dict(predictor="x"), dict(axis="time"),
                    dict(axis="nodes"), dict(repetitions=0), dict(z=50),
                    dict(delay_model="fast")):
            with pytest.raises(ValueError):
                dataclasses.replace(small(), **bad).validate()

    def test_env_seed(self):
        assert apply_env(small(), {"ASCETIC_SEED": "17"}).seed == 17
        assert apply_env(small(), {}).seed == 0
