"""Service catalog, mobile request population and PoA lookups."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "InstanceSpec",
    "ServiceCatalog",
    "Request",
    "MobilityModel",
    "ScenarioParams",
    "Scenario",
    "generate_scenario",
    "poa_at",
    "arrivals_at",
    "NotArrivedError",
]

SCN_HEADER = "ascetic-scn v1"


class NotArrivedError(ValueError):
    pass


@dataclass(frozen=True)
class InstanceSpec:
    id: int
    service: int
    index: int
    capacity: float
    cost: float

    def __post_init__(self):
        if not self.capacity > 0 or not self.cost > 0:
            raise ValueError(f"instance {self.id}: capacity and cost must be positive")


class ServiceCatalog:
    """Flat list of instances, grouped by service. Instance ids are global."""

    def __init__(self, instances: Sequence[InstanceSpec]):
        self.instances = tuple(instances)
        groups: dict[int, list[int]] = {}
        for idx, inst in enumerate(self.instances):
            if inst.id != idx:
                raise ValueError("instance ids must be 0..I-1 in order")
            groups.setdefault(inst.service, []).append(inst.id)
        n_services = max(groups) + 1 if groups else 0
        if any(s not in groups for s in range(n_services)):
            raise ValueError("every service needs at least one instance")
        self.services = tuple(tuple(groups[s]) for s in range(n_services))
        self.capacity = np.array([i.capacity for i in self.instances], dtype=float)
        self.cost = np.array([i.cost for i in self.instances], dtype=float)

    @property
    def n_services(self) -> int:
        return len(self.services)

    @property
    def n_instances(self) -> int:
        return len(self.instances)

    def instances_of(self, service: int) -> tuple[int, ...]:
        return self.services[service]

    def __eq__(self, other):
        return isinstance(other, ServiceCatalog) and self.instances == other.instances


@dataclass(frozen=True)
class Request:
    """A mobile request. QoS values hold for every slot of its lifetime.

    ``poa_trace[k]`` is the PoA at slot ``arrival_slot + k``.
    """

    id: int
    arrival_slot: int
    service: int
    poa_trace: tuple[int, ...]
    min_capacity: float
    min_bandwidth: float
    max_delay: float
    burstiness: float
    packet_size: float
    sla_budget: float

    def __post_init__(self):
        qos = (self.min_capacity, self.min_bandwidth, self.max_delay,
               self.burstiness, self.packet_size, self.sla_budget)
        if not all(v > 0 for v in qos):
            raise ValueError(f"request {self.id}: QoS values must be positive")
        if self.sla_budget < self.max_delay:
            raise ValueError(f"request {self.id}: SLA budget below the per-slot delay bound")
        if self.arrival_slot < 1 or not self.poa_trace:
            raise ValueError(f"request {self.id}: bad arrival slot or empty trace")

    @property
    def last_slot(self) -> int:
        return self.arrival_slot + len(self.poa_trace) - 1

    def is_active(self, t: int) -> bool:
        return self.arrival_slot <= t <= self.last_slot

    def poa_at(self, t: int) -> int:
        if t < self.arrival_slot:
            raise NotArrivedError(f"request {self.id} not yet arrived at slot {t}")
        if t > self.last_slot:
            raise IndexError(f"slot {t} beyond the trace of request {self.id}")
        return self.poa_trace[t - self.arrival_slot]

    @property
    def compute_delay(self) -> float:
        return self.packet_size / self.min_capacity

    @property
    def traffic(self) -> float:
        return self.burstiness + self.packet_size


def poa_at(request: Request, t: int) -> int:
    return request.poa_at(t)


@dataclass
class MobilityModel:
    """How a request's PoA evolves from slot to slot.

    ``transition`` is row-stochastic over the index positions of the PoA list
    handed to :meth:`trace`. Cyclic traces follow ``sequence`` with
    ``trace[t] = sequence[(t + phase) % period]``.
    """

    kind: str = "markov"
    self_loop: float = 0.8
    transition: np.ndarray | None = None
    sequence: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in ("static", "markov", "cyclic"):
            raise ValueError(f"unknown mobility kind {self.kind!r}")
        if self.kind == "markov":
            if not 0.0 <= self.self_loop <= 1.0:
                raise ValueError("self_loop must lie in [0, 1]")
            if self.transition is not None:
                m = np.asarray(self.transition, dtype=float)
                if m.ndim != 2 or m.shape[0] != m.shape[1] or (m < 0).any():
                    raise ValueError("transition must be a square non-negative matrix")
                if not np.allclose(m.sum(axis=1), 1.0, rtol=0, atol=1e-9):
                    raise ValueError("transition rows must sum to 1")
                self.transition = m
        if self.kind == "cyclic" and not self.sequence:
            raise ValueError("cyclic mobility needs a node sequence")

    @classmethod
    def static(cls):
        return cls(kind="static")

    @classmethod
    def cyclic(cls, sequence: Sequence[int]):
        return cls(kind="cyclic", sequence=tuple(int(x) for x in sequence))

    @property
    def period(self) -> int:
        return len(self.sequence)

    def matrix(self, n_poa: int) -> np.ndarray:
        if self.transition is not None:
            if self.transition.shape[0] != n_poa:
                raise ValueError("transition size does not match the PoA count")
            return self.transition
        if n_poa == 1:
            return np.ones((1, 1))
        m = np.full((n_poa, n_poa), (1.0 - self.self_loop) / (n_poa - 1))
        np.fill_diagonal(m, self.self_loop)
        return m

    def trace(self, start: int, first_slot: int, last_slot: int, poa_nodes: Sequence[int],
              rng: np.random.Generator, phase: int = 0) -> tuple[int, ...]:
        length = last_slot - first_slot + 1
        if self.kind == "static":
            return (start,) * length
        if self.kind == "cyclic":
            return tuple(self.sequence[(t + phase) % self.period]
                         for t in range(first_slot, last_slot + 1))
        m = self.matrix(len(poa_nodes))
        cum = np.cumsum(m, axis=1)
        pos = list(poa_nodes).index(start)
        out = [start]
        for u in rng.random(length - 1):
            pos = min(int(np.searchsorted(cum[pos], u, side="right")), len(poa_nodes) - 1)
            out.append(poa_nodes[pos])
        return tuple(out)


@dataclass
class ScenarioParams:
    n_requests: int = 40
    horizon: int = 10
    n_services: int = 20
    instances_per_service: int = 5
    instance_capacity_base: float = 20.0
    instance_cost_base: float = 20.0
    instance_capacity_alpha: float = 1.0
    instance_cost_alpha: float = 0.0
    min_capacity: tuple[int, int] = (1, 4)
    min_bandwidth: tuple[int, int] = (1, 5)
    burstiness: tuple[int, int] = (1, 3)
    packet_size: tuple[int, int] = (1, 2)
    max_delay: tuple[float, float] = (5.0, 50.0)
    sla_factor: float = 0.9
    arrival_window: int | None = None
    mobility: MobilityModel = field(default_factory=MobilityModel)

    def validate(self):
        if self.n_requests < 0:
            raise ValueError("n_requests must be >= 0")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.n_services < 1 or self.instances_per_service < 1:
            raise ValueError("need at least one service with one instance")
        for name in ("min_capacity", "min_bandwidth", "burstiness", "packet_size", "max_delay"):
            lo, hi = getattr(self, name)
            if lo <= 0 or hi < lo:
                raise ValueError(f"{name}: need 0 < low <= high, got {(lo, hi)}")
        if self.instance_capacity_base <= 0 or self.instance_cost_base <= 0:
            raise ValueError("instance distribution bases must be positive")
        floor = self.packet_size[0] / self.min_capacity[1]
        if self.max_delay[1] < floor:
            raise ValueError(f"max_delay upper bound {self.max_delay[1]} is below the "
                             f"smallest achievable compute delay {floor}")
        if self.sla_factor <= 0:
            raise ValueError("sla_factor must be positive")
        if self.arrival_window is not None and self.arrival_window < 1:
            raise ValueError("arrival_window must be >= 1")


class Scenario:
    """Immutable request population over slots 1..horizon."""

    def __init__(self, horizon: int, catalog: ServiceCatalog, requests: Sequence[Request],
                 poa_nodes: Sequence[int] | None = None):
        self.horizon = int(horizon)
        self.catalog = catalog
        self.requests = tuple(requests)
        self.poa_nodes = tuple(poa_nodes) if poa_nodes is not None else None
        for idx, r in enumerate(self.requests):
            if r.id != idx:
                raise ValueError("request ids must be 0..R-1 in order")
            if r.last_slot != self.horizon:
                raise ValueError(f"request {r.id}: trace must end at the horizon")
            if not 0 <= r.service < catalog.n_services:
                raise ValueError(f"request {r.id}: unknown service")
            if self.poa_nodes is not None and not set(r.poa_trace) <= set(self.poa_nodes):
                raise ValueError(f"request {r.id}: trace leaves the PoA set")
        self._by_slot = {}
        for t in range(1, self.horizon + 1):
            table: dict[int, list[int]] = {}
            for r in self.requests:
                if r.is_active(t):
                    table.setdefault(r.poa_at(t), []).append(r.id)
            self._by_slot[t] = {k: frozenset(v) for k, v in table.items()}

    @property
    def n_requests(self) -> int:
        return len(self.requests)

    def active(self, t: int) -> list[Request]:
        return [r for r in self.requests if r.is_active(t)]

    def arrivals_at(self, poa: int, t: int) -> frozenset[int]:
        if not 1 <= t <= self.horizon:
            raise ValueError(f"slot {t} outside [1, {self.horizon}]")
        return self._by_slot[t].get(poa, frozenset())

    def services_at(self, poa: int, t: int) -> frozenset[int]:
        return frozenset(self.requests[r].service for r in self.arrivals_at(poa, t))

    def __eq__(self, other):
        return (isinstance(other, Scenario) and self.horizon == other.horizon
                and self.catalog == other.catalog and self.requests == other.requests)

    def to_text(self) -> str:
        lines = [SCN_HEADER, f"horizon {self.horizon}"]
        if self.poa_nodes is not None:
            lines.append("poa " + " ".join(map(str, self.poa_nodes)))
        for i in self.catalog.instances:
            lines.append(f"instance {i.id} {i.service} {i.index} {i.capacity!r} {i.cost!r}")
        for r in self.requests:
            lines.append(
                f"request {r.id} {r.arrival_slot} {r.service} {r.min_capacity!r} "
                f"{r.min_bandwidth!r} {r.max_delay!r} {r.burstiness!r} {r.packet_size!r} "
                f"{r.sla_budget!r} {','.join(map(str, r.poa_trace))}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Scenario":
        rows = [ln.split() for ln in text.splitlines() if ln.strip()]
        if not rows or " ".join(rows[0]) != SCN_HEADER:
            raise ValueError(f"expected header {SCN_HEADER!r}")
        horizon, poa, instances, requests = None, None, [], []
        for row in rows[1:]:
            kind = row[0]
            if kind == "horizon":
                horizon = int(row[1])
            elif kind == "poa":
                poa = [int(x) for x in row[1:]]
            elif kind == "instance":
                instances.append(InstanceSpec(int(row[1]), int(row[2]), int(row[3]),
                                              float(row[4]), float(row[5])))
            elif kind == "request":
                vals = [float(x) for x in row[4:10]]
                trace = tuple(int(x) for x in row[10].split(","))
                requests.append(Request(int(row[1]), int(row[2]), int(row[3]), trace, *vals))
            else:
                raise ValueError(f"unknown record {kind!r}")
        if horizon is None:
            raise ValueError("missing horizon record")
        return cls(horizon, ServiceCatalog(instances), requests, poa)

    def requests_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "arrival_slot", "service", "min_capacity", "min_bandwidth",
                    "max_delay_ms", "burstiness", "packet_size", "sla_budget_ms", "poa_trace"])
        for r in self.requests:
            w.writerow([r.id, r.arrival_slot, r.service, r.min_capacity, r.min_bandwidth,
                        r.max_delay, r.burstiness, r.packet_size, r.sla_budget,
                        ";".join(map(str, r.poa_trace))])
        return buf.getvalue()


def arrivals_at(scenario: Scenario, poa: int, t: int) -> frozenset[int]:
    """Ids of requests active at slot ``t`` whose PoA is ``poa``."""
    return scenario.arrivals_at(poa, t)


def _catalog(params: ScenarioParams, rng) -> ServiceCatalog:
    out = []
    a_cap, a_cost = params.instance_capacity_alpha, params.instance_cost_alpha
    for s in range(params.n_services):
        for i in range(params.instances_per_service):
            cap = max(1, math.ceil(params.instance_capacity_base * rng.uniform(a_cap, a_cap + 1)))
            cost = float(params.instance_cost_base ** rng.uniform(a_cost, a_cost + 1))
            out.append(InstanceSpec(len(out), s, i, float(cap), cost))
    return ServiceCatalog(out)


def generate_scenario(topology, params: ScenarioParams | None = None, seed=None) -> Scenario:
    """Draw a catalog and ``params.n_requests`` mobile requests on ``topology``.

    Arrival slots are uniform on [1, horizon], or on [1, arrival_window] when
    that is set (``arrival_window=1`` gives a fixed population); starting PoAs
    are uniform over the topology's PoAs. The SLA budget is ``sla_factor * horizon * max_delay``
    but never below ``max_delay``.
    """
    params = params or ScenarioParams()
    params.validate()
    poa_nodes = tuple(topology.poa_nodes)
    if not poa_nodes:
        raise ValueError("topology has no PoA nodes")
    mob = params.mobility
    if mob.kind == "cyclic" and not set(mob.sequence) <= set(poa_nodes):
        raise ValueError("cyclic sequence contains non-PoA nodes")
    rng = np.random.default_rng(seed)
    catalog = _catalog(params, rng)
    T = params.horizon
    last_arrival = min(T, params.arrival_window or T)
    requests = []
    for rid in range(params.n_requests):
        arrival = int(rng.integers(1, last_arrival + 1))
        service = int(rng.integers(params.n_services))
        start = poa_nodes[int(rng.integers(len(poa_nodes)))]
        phase = int(rng.integers(mob.period)) if mob.kind == "cyclic" else 0
        trace = mob.trace(start, arrival, T, poa_nodes, rng, phase=phase)
        icap = float(rng.integers(params.min_capacity[0], params.min_capacity[1] + 1))
        bw = float(rng.integers(params.min_bandwidth[0], params.min_bandwidth[1] + 1))
        burst = float(rng.integers(params.burstiness[0], params.burstiness[1] + 1))
        size = float(rng.integers(params.packet_size[0], params.packet_size[1] + 1))
        dmax = float(rng.uniform(*params.max_delay))
        sla = max(params.sla_factor * T * dmax, dmax)
        requests.append(Request(rid, arrival, service, trace, icap, bw, dmax, burst, size, sla))
    return Scenario(T, catalog, requests, poa_nodes)
