"""Slot-by-slot simulation driver, sweeps and CSV emission.

Per slot ``t`` the orchestrator places and assigns using the prediction made
at ``t - 1``; requests nobody predicted are picked up by the orchestrator's
fallback pass. The predictors then see the arrivals of ``t`` and produce the
table for ``t + 1``. Every run is re-checked against the full constraint set
before its metrics are returned.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import os
import time
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .exact import ExactLimits, exact_solve
from .model import DELAY_MODELS, Allocation, check_constraints, evaluate_slot
from .orchestrator import ORCHESTRATORS, SlotOrchestrator
from .predictor import PREDICTORS, PredictorBank
from .topology import Topology, TopologyParams, build_topology
from .workload import MobilityModel, Scenario, ScenarioParams, generate_scenario

__all__ = [
    "ExperimentConfig",
    "MetricsSeries",
    "SweepResult",
    "ConstraintViolationError",
    "SweepError",
    "run_simulation",
    "sweep",
    "summarize",
    "plot_data",
    "parse_metrics",
    "apply_env",
    "METRICS_HEADER",
    "SUMMARY_HEADER",
    "PLOTDATA_HEADER",
]

CFG_HEADER = "ascetic-cfg v1"
METRICS_HEADER = ["axis", "orch", "seed", "slot", "cost", "mean_delay_ms", "unsupported"]
SUMMARY_HEADER = ["axis", "orch", "runs", "total_cost", "mean_delay_ms", "unsupported",
                  "max_unsupported"]
PLOTDATA_HEADER = ["panel", "orch", "x", "y"]
AXES = ("nodes", "requests")


class ConstraintViolationError(RuntimeError):
    """An orchestrator emitted an allocation that breaks the model constraints."""

    def __init__(self, orchestrator, seed, report):
        super().__init__(f"{orchestrator} (seed {seed}) violated {report}")
        self.report = report


class SweepError(RuntimeError):
    pass


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


@dataclass
class ExperimentConfig:
    """Everything a run or a sweep needs; stored as ``ascetic-cfg v1`` text."""

    nodes: int = 20
    tiers: int = 3
    topology: TopologyParams = field(default_factory=TopologyParams)
    scenario: ScenarioParams = field(default_factory=ScenarioParams)
    orchestrators: tuple[str, ...] = ("wise",)
    predictor: str = "ddql"
    z: int = 3
    window: int = 5
    seed: int = 0
    repetitions: int = 10
    axis: str | None = None
    axis_values: tuple[int, ...] = ()
    delay_model: str = "restricted"
    w_delay: float = 1.0

    @property
    def horizon(self) -> int:
        return self.scenario.horizon

    def validate(self):
        self.topology.validate()
        self.scenario.validate()
        bad = set(self.orchestrators) - set(ORCHESTRATORS)
        if not self.orchestrators or bad:
            raise ValueError(f"orchestrators must be a non-empty subset of {ORCHESTRATORS}")
        if self.predictor not in PREDICTORS:
            raise ValueError(f"predictor must be one of {PREDICTORS}")
        if self.delay_model not in DELAY_MODELS:
            raise ValueError(f"delay_model must be one of {DELAY_MODELS}")
        if self.axis is not None and self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}")
        if self.axis is not None and not self.axis_values:
            raise ValueError("a sweep axis needs at least one value")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if not 1 <= self.z <= self.scenario.n_services:
            raise ValueError("need 1 <= z <= n_services")
        if "exact" in self.orchestrators:
            for cfg in self.cells():
                cfg._check_exact()

    def _check_exact(self):
        lim = ExactLimits()
        sizes = [(self.scenario.n_requests, lim.max_requests, "requests"),
                 (self.scenario.horizon, lim.max_horizon, "horizon"),
                 (self.nodes, lim.max_nodes, "nodes"),
                 (self.scenario.n_services, lim.max_services, "services"),
                 (self.topology.k_paths, lim.max_paths_per_pair, "k_paths")]
        over = [f"{name}={v}>{m}" for v, m, name in sizes if v > m]
        if over:
            raise ValueError("exact orchestrator outside enumeration limits: " + ", ".join(over))

    def at(self, value: int) -> "ExperimentConfig":
        """Copy with the sweep axis set to ``value``."""
        if self.axis == "nodes":
            return dataclasses.replace(self, nodes=int(value))
        if self.axis == "requests":
            scn = dataclasses.replace(self.scenario, n_requests=int(value))
            return dataclasses.replace(self, scenario=scn)
        raise ValueError("config has no sweep axis")

    def cells(self) -> list["ExperimentConfig"]:
        if self.axis is None:
            return [self]
        return [self.at(v) for v in self.axis_values]

    def axis_label(self) -> str:
        if self.axis == "nodes":
            return f"nodes={self.nodes}"
        if self.axis == "requests":
            return f"requests={self.scenario.n_requests}"
        return "base"

    # -- text format -------------------------------------------------------
    def to_text(self) -> str:
        lines = [CFG_HEADER]
        for key, value in _flatten(self):
            lines.append(f"{key} = {_encode(value)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        lines = [ln.strip() for ln in text.splitlines()]
        lines = [ln for ln in lines if ln and not ln.startswith("#")]
        if not lines or lines[0] != CFG_HEADER:
            raise ValueError(f"expected header {CFG_HEADER!r}")
        cfg = cls()
        types = dict(_field_types(cfg))
        values: dict[str, object] = {}
        for ln in lines[1:]:
            key, sep, raw = ln.partition("=")
            key = key.strip()
            if not sep or key not in types:
                raise ValueError(f"bad config line {ln!r}")
            values[key] = _decode(raw.strip(), types[key])
        return _unflatten(cfg, values)


_MOBILITY_KEYS = ("kind", "self_loop", "sequence")


def _field_types(cfg):
    for f in dataclasses.fields(ExperimentConfig):
        if f.name in ("topology", "scenario"):
            sub = getattr(cfg, f.name)
            for g in dataclasses.fields(sub):
                if g.name == "mobility":
                    for k in _MOBILITY_KEYS:
                        mf = next(x for x in dataclasses.fields(MobilityModel) if x.name == k)
                        yield f"mobility.{k}", str(mf.type)
                else:
                    yield f"{f.name}.{g.name}", str(g.type)
        else:
            yield f.name, str(f.type)


def _flatten(cfg):
    for key, _ in _field_types(cfg):
        head, _, tail = key.partition(".")
        if head == "mobility":
            yield key, getattr(cfg.scenario.mobility, tail)
        elif tail:
            yield key, getattr(getattr(cfg, head), tail)
        else:
            yield key, getattr(cfg, key)


def _unflatten(cfg, values):
    top, scn, mob, own = {}, {}, {}, {}
    for key, v in values.items():
        head, _, tail = key.partition(".")
        {"topology": top, "scenario": scn, "mobility": mob}.get(head, own)[tail or head] = v
    mobility = dataclasses.replace(cfg.scenario.mobility, **mob) if mob else cfg.scenario.mobility
    return dataclasses.replace(
        cfg,
        topology=dataclasses.replace(cfg.topology, **top),
        scenario=dataclasses.replace(cfg.scenario, mobility=mobility, **scn),
        **own,
    )


def _encode(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return ",".join(_fmt(v) for v in value)
    return _fmt(value)


def _decode(raw: str, type_name: str):
    if "None" in type_name and raw == "none":
        return None
    if type_name.startswith("tuple"):
        item = float if "float" in type_name else int if "int" in type_name else str
        return tuple(item(x) for x in raw.split(",") if x.strip())
    if type_name.startswith("int"):
        return int(raw)
    if type_name.startswith("float"):
        return float(raw)
    return raw


def apply_env(config: ExperimentConfig, environ: Mapping[str, str] | None = None) -> ExperimentConfig:
    """Honour ``ASCETIC_SEED`` (base seed) from the environment."""
    environ = os.environ if environ is None else environ
    if environ.get("ASCETIC_SEED"):
        return dataclasses.replace(config, seed=int(environ["ASCETIC_SEED"]))
    return config


# -- single run --------------------------------------------------------------
@dataclass
class MetricsSeries:
    """Per-slot metrics of one run; delays average supported requests only."""

    orchestrator: str
    seed: int
    cost: np.ndarray
    mean_delay: np.ndarray
    unsupported: np.ndarray
    wall_clock: float
    allocation: Allocation
    scenario: Scenario
    topology: Topology

    def __len__(self):
        return len(self.cost)

    def aggregates(self) -> dict[str, float]:
        delays = [d for slot in self.allocation.slots.values()
                  for r, d in slot.delay.items()]
        return {
            "total_cost": float(self.cost.sum()),
            "mean_cost": float(self.cost.mean()) if len(self) else 0.0,
            "max_cost": float(self.cost.max()) if len(self) else 0.0,
            "mean_delay_ms": float(np.mean(delays)) if delays else 0.0,
            "max_delay_ms": float(np.max(delays)) if delays else 0.0,
            "unsupported": int(self.unsupported.sum()),
            "max_unsupported": int(self.unsupported.max()) if len(self) else 0,
            "wall_clock_s": self.wall_clock,
        }

    def rows(self, axis_label: str = "base") -> list[list[str]]:
        return [[axis_label, self.orchestrator, str(self.seed), str(t + 1), _fmt(self.cost[t]),
                 _fmt(self.mean_delay[t]), str(int(self.unsupported[t]))]
                for t in range(len(self))]


def build_instance(config: ExperimentConfig, seed: int) -> tuple[Topology, Scenario]:
    """Topology and scenario of one run; both depend only on ``seed``."""
    topo = build_topology(config.nodes, config.tiers, seed=[seed, 0], params=config.topology)
    scn = generate_scenario(topo, config.scenario, seed=[seed, 1])
    return topo, scn


def run_simulation(config: ExperimentConfig, seed: int | None = None,
                   orchestrator: str | None = None,
                   instance: tuple[Topology, Scenario] | None = None) -> MetricsSeries:
    """Simulate every slot of one run.

    Raises
    ------
    ConstraintViolationError
        If the produced allocation fails any constraint for supported requests.
    """
    config.validate()
    seed = config.seed if seed is None else seed
    name = orchestrator or config.orchestrators[0]
    topo, scn = instance or build_instance(config, seed)
    start = time.perf_counter()
    if name == "exact":
        alloc = exact_solve(scn, topo, delay_model=config.delay_model)
    else:
        extra = {"window": config.window} if config.predictor == "ddql" else {}
        bank = PredictorBank(config.predictor, topo.poa_nodes, scn.catalog.n_services, config.z,
                             scenario=scn, seed=seed, **extra)
        orch = SlotOrchestrator(name, scn, topo, seed=[seed, 2], delay_model=config.delay_model,
                                w_delay=config.w_delay)
        alloc = Allocation()
        table = None
        for t in range(1, scn.horizon + 1):
            alloc.slots[t] = orch.step(t, table)
            arrivals = {p: scn.services_at(p, t) for p in topo.poa_nodes}
            table = bank.update(t, arrivals)
    elapsed = time.perf_counter() - start
    report = check_constraints(alloc, scn, topo, supported_only=True,
                               delay_model=config.delay_model)
    if not report.feasible:
        raise ConstraintViolationError(name, seed, report)
    T = scn.horizon
    cost, delay, unsup = np.zeros(T), np.zeros(T), np.zeros(T, dtype=int)
    for t in range(1, T + 1):
        slot = alloc.slots[t]
        cost[t - 1] = evaluate_slot(slot, scn, topo, config.delay_model).total_cost
        d = [slot.delay[r] for r in slot.supported]
        delay[t - 1] = float(np.mean(d)) if d else 0.0
        unsup[t - 1] = len(slot.unsupported)
    return MetricsSeries(name, seed, cost, delay, unsup, elapsed, alloc, scn, topo)


# -- sweeps ------------------------------------------------------------------
@dataclass
class SweepResult:
    axis: str | None
    runs: list[tuple[str, MetricsSeries]]

    def metric_rows(self) -> list[list[str]]:
        return [row for label, s in self.runs for row in s.rows(label)]

    def metrics_csv(self) -> str:
        return _csv([METRICS_HEADER] + self.metric_rows())

    def summary_csv(self) -> str:
        return summarize(self.metric_rows())

    def plotdata_csv(self) -> str:
        return plot_data(self.metric_rows())


def sweep(config: ExperimentConfig, axis_values: Sequence[int] | None = None,
          repetitions: int | None = None) -> SweepResult:
    """Run every axis value x orchestrator x repetition; seeds are ``seed + k``."""
    if axis_values is not None:
        config = dataclasses.replace(config, axis_values=tuple(axis_values))
    if repetitions is not None:
        config = dataclasses.replace(config, repetitions=repetitions)
    config.validate()
    runs = []
    for cell in config.cells():
        label = cell.axis_label()
        for k in range(config.repetitions):
            seed = config.seed + k
            instance = build_instance(cell, seed)
            for name in config.orchestrators:
                try:
                    runs.append((label, run_simulation(cell, seed, name, instance)))
                except Exception as exc:
                    raise SweepError(f"run {label} orch={name} seed={seed} failed: {exc}") from exc
    return SweepResult(config.axis, runs)


def _csv(rows: Iterable[Sequence[str]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerows(rows)
    return buf.getvalue()


def parse_metrics(text: str) -> list[list[str]]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != METRICS_HEADER:
        raise ValueError("not a metrics.csv file")
    return rows[1:]


def _cells(rows):
    """(axis, orch) -> seed -> list of (cost, delay, unsupported) per slot."""
    cells: dict[tuple[str, str], dict[str, list]] = defaultdict(lambda: defaultdict(list))
    for axis, orch, seed, _slot, cost, delay, unsup in rows:
        cells[(axis, orch)][seed].append((float(cost), float(delay), int(unsup)))
    return cells


def summarize(rows: Sequence[Sequence[str]]) -> str:
    """Per (axis, orchestrator) means over runs of the run totals.

    The run delay is the mean of its slot delays over slots that supported
    at least one request.
    """
    out = [SUMMARY_HEADER]
    for (axis, orch), runs in _cells(rows).items():
        totals, delays, unsup = [], [], []
        for slots in runs.values():
            arr = np.array(slots, dtype=float)
            totals.append(arr[:, 0].sum())
            served = arr[arr[:, 1] > 0, 1]
            delays.append(served.mean() if len(served) else 0.0)
            unsup.append(arr[:, 2].sum())
        out.append([axis, orch, str(len(runs)), _fmt(float(np.mean(totals))),
                    _fmt(float(np.mean(delays))), _fmt(float(np.mean(unsup))),
                    str(int(max(unsup)))])
    return _csv(out)


def plot_data(rows: Sequence[Sequence[str]]) -> str:
    """Long-format series for the cost, delay and unsupported panels."""
    summary = list(csv.reader(io.StringIO(summarize(rows))))[1:]
    out = [PLOTDATA_HEADER]
    for panel, col in (("cost", 3), ("delay", 4), ("unsupported", 5)):
        for row in summary:
            x = row[0].partition("=")[2] or row[0]
            out.append([panel, row[1], x, row[col]])
    return _csv(out)
