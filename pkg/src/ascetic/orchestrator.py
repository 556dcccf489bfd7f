"""Water-filling placement (WISE) and the random / CCAM-style baselines.

All heuristics work slot by slot on a :class:`ResidualState`, which admits a
request only if instance capacity, node capacity, link bandwidth, the
per-slot delay bound and the remaining SLA budget still hold for it and for
every request whose delay it would raise. Heuristics host each instance on a
single node.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .model import DELAY_MODELS, Allocation, SlotAllocation, evaluate_slot

__all__ = [
    "PredictionTable",
    "HostChoice",
    "ResidualState",
    "NoFeasibleHostError",
    "select_host_node",
    "route_choice",
    "water_fill",
    "wise_place",
    "random_place",
    "ccam_place",
    "CcamPlanner",
    "SlotOrchestrator",
    "solve_horizon",
    "ORCHESTRATORS",
]

ORCHESTRATORS = ("wise", "random", "ccam", "exact")


class NoFeasibleHostError(RuntimeError):
    pass


@dataclass
class PredictionTable:
    """Services expected at each PoA for one slot, plus the per-service pivot."""

    per_poa: dict[int, frozenset[int]] = field(default_factory=dict)

    def __post_init__(self):
        self.per_poa = {int(p): frozenset(s) for p, s in self.per_poa.items()}
        pivot: dict[int, set[int]] = {}
        for poa, services in self.per_poa.items():
            for s in services:
                pivot.setdefault(s, set()).add(poa)
        self.pivot = {s: frozenset(p) for s, p in pivot.items()}

    def pairs(self) -> set[tuple[int, int]]:
        return {(p, s) for p, ss in self.per_poa.items() for s in ss}

    @classmethod
    def from_scenario(cls, scenario, t: int) -> "PredictionTable":
        """Perfect foresight: the services that actually show up at ``t``."""
        nodes = scenario.poa_nodes or sorted({r.poa_at(t) for r in scenario.active(t)})
        return cls({p: scenario.services_at(p, t) for p in nodes})


@dataclass
class HostChoice:
    node: int
    inquiry: dict[int, int]   # PoA -> path PoA->node
    response: dict[int, int]  # PoA -> path node->PoA
    score: float


class ResidualState:
    """Loads of one slot under construction plus the SLA spent in earlier slots."""

    def __init__(self, topology, scenario, t: int, sla_used: Mapping[int, float] | None = None,
                 delay_model: str = "restricted"):
        if delay_model not in DELAY_MODELS:
            raise ValueError(f"delay_model must be one of {DELAY_MODELS}")
        self.topology = topology
        self.scenario = scenario
        self.t = t
        self.delay_model = delay_model
        self.sla_used = dict(sla_used or {})
        self.slot = SlotAllocation(t)
        self.node_load = np.zeros(topology.n_nodes)
        self.inst_load = np.zeros(scenario.catalog.n_instances)
        self.inst_host: dict[int, int] = {}
        self.link_bw = np.zeros(topology.n_links)
        self.link_traffic = np.zeros(topology.n_links)
        self.total_traffic = 0.0
        self._links: dict[int, dict[int, int]] = {}  # r -> {link: traversals}
        self._on_link: dict[int, set[int]] = {}

    def node_residual(self, n: int) -> float:
        return self.topology.node_capacity[n] - self.node_load[n]

    def inst_residual(self, i: int) -> float:
        return self.scenario.catalog.capacity[i] - self.inst_load[i]

    def path_delay(self, pid: int) -> float:
        """Queueing delay a newcomer would see along ``pid`` right now."""
        links = self.topology.paths[pid].links
        cap = self.topology.link_capacity
        if self.delay_model == "restricted":
            return float(sum(self.link_traffic[l] / cap[l] for l in links))
        return float(sum(self.total_traffic / cap[l] for l in links))

    def _bound(self, r: int) -> float:
        req = self.scenario.requests[r]
        return min(req.max_delay, req.sla_budget - self.sla_used.get(r, 0.0))

    def delay(self, r: int) -> float:
        req = self.scenario.requests[r]
        cap = self.topology.link_capacity
        w = req.traffic
        if self.delay_model == "restricted":
            net = sum(c * (self.link_traffic[l] - w) / cap[l] for l, c in self._links[r].items())
        else:
            net = sum(c * (self.total_traffic - w) / cap[l] for l, c in self._links[r].items())
        return net + req.compute_delay

    def _apply(self, r: int, counts: dict[int, int], sign: int):
        req = self.scenario.requests[r]
        for l, c in counts.items():
            self.link_bw[l] += sign * c * req.min_bandwidth
            self.link_traffic[l] += sign * req.traffic
            if sign > 0:
                self._on_link.setdefault(l, set()).add(r)
            else:
                self._on_link[l].discard(r)
        self.total_traffic += sign * req.traffic
        if sign > 0:
            self._links[r] = counts
        else:
            del self._links[r]

    def try_assign(self, r: int, inst: int, host: int, p_in: int, p_out: int) -> bool:
        """Admit ``r`` on ``inst`` at ``host`` via the given paths if every check passes."""
        req = self.scenario.requests[r]
        topo = self.topology
        if self.scenario.catalog.instances[inst].service != req.service:
            return False
        if self.inst_host.get(inst, host) != host:
            return False
        if req.min_capacity > self.inst_residual(inst) or req.min_capacity > self.node_residual(host):
            return False
        counts: dict[int, int] = {}
        for pid in (p_in, p_out):
            for l in topo.paths[pid].links:
                counts[l] = counts.get(l, 0) + 1
        cap = topo.link_capacity
        if any(self.link_bw[l] + c * req.min_bandwidth > cap[l] for l, c in counts.items()):
            return False
        self._apply(r, counts, +1)
        if self.delay_model == "restricted":
            affected = set().union(*(self._on_link[l] for l in counts)) if counts else {r}
        else:
            affected = set(self._links)
        affected.add(r)
        if any(self.delay(x) > self._bound(x) for x in sorted(affected)):
            self._apply(r, counts, -1)
            return False
        self.inst_load[inst] += req.min_capacity
        self.node_load[host] += req.min_capacity
        self.inst_host[inst] = host
        self.slot.add_request(r, inst, host, p_in, p_out)
        return True

    def place_idle(self, inst: int, host: int):
        if inst in self.inst_host:
            return
        self.inst_host[inst] = host
        self.slot.place.setdefault(inst, set()).add(host)

    def mark_unsupported(self, r: int):
        self.slot.unsupported.add(r)

    def finalize(self) -> SlotAllocation:
        """Record final delays and path costs; push this slot's delays into the SLA tally."""
        st = evaluate_slot(self.slot, self.scenario, self.topology, self.delay_model)
        for k, r in enumerate(st.requests):
            self.slot.delay[r] = float(st.e2e[k])
            self.slot.path_cost[r] = float(st.path_cost[k])
            self.sla_used[r] = self.sla_used.get(r, 0.0) + float(st.e2e[k])
        return self.slot


def _best_path(paths: Sequence[int], residual: ResidualState) -> int | None:
    if not paths:
        return None
    cost = residual.topology.path_cost
    return min(paths, key=lambda p: (residual.path_delay(p), cost[p], p))


def route_choice(node: int, eta: Iterable[int], residual: ResidualState,
                 w_delay: float = 1.0) -> HostChoice | None:
    """Lowest-delay inquiry and response paths between ``node`` and each PoA in ``eta``."""
    topo = residual.topology
    score = 0.0
    inquiry, response = {}, {}
    for poa in sorted(eta):
        p_in = _best_path(topo.paths_between(poa, node), residual)
        p_out = _best_path(topo.paths_between(node, poa), residual)
        if p_in is None or p_out is None:
            return None
        inquiry[poa], response[poa] = p_in, p_out
        score += (w_delay * (residual.path_delay(p_in) + residual.path_delay(p_out))
                  + topo.path_cost[p_in] + topo.path_cost[p_out] + topo.node_cost[node])
    return HostChoice(node, inquiry, response, float(score))


def select_host_node(eta: Iterable[int], topology, residual: ResidualState,
                     exclude: Iterable[int] = (), w_delay: float = 1.0,
                     require_capacity: bool = True) -> HostChoice:
    """Node with the smallest summed delay + path cost + node cost towards ``eta``.

    Raises
    ------
    NoFeasibleHostError
        If every node is excluded, saturated, or unreachable from some PoA.
    """
    eta = sorted(set(eta))
    if not eta:
        raise ValueError("eta must be non-empty")
    skip = set(exclude)
    best = None
    for n in range(topology.n_nodes):
        if n in skip or (require_capacity and residual.node_residual(n) <= 0):
            continue
        choice = route_choice(n, eta, residual, w_delay)
        if choice is not None and (best is None or choice.score < best.score):
            best = choice
    if best is None:
        raise NoFeasibleHostError(f"no feasible host for PoAs {eta}")
    return best


def _urgency(scenario, r: int):
    req = scenario.requests[r]
    return (req.max_delay, req.arrival_slot, r)


def water_fill(choice: HostChoice, service: int, pending: Sequence[int],
               residual: ResidualState) -> list[int]:
    """Fill ``choice.node`` with instances of ``service`` and those with requests.

    Instances of the service already on the node are topped up first, then
    fresh instances are opened cheapest first. Requests are tried in
    tightest-deadline order; one that does not fit is skipped. Filling stops
    when a fresh instance admits nobody, the node cannot take the smallest
    pending demand, or the catalog runs out of instances.
    """
    scen = residual.scenario
    t = residual.t
    cat = scen.catalog
    node = choice.node
    todo = [r for r in sorted(pending, key=lambda r: _urgency(scen, r))
            if scen.requests[r].poa_at(t) in choice.inquiry]
    assigned: list[int] = []

    def fill(inst):
        took = 0
        for r in list(todo):
            poa = scen.requests[r].poa_at(t)
            if residual.try_assign(r, inst, node, choice.inquiry[poa], choice.response[poa]):
                todo.remove(r)
                assigned.append(r)
                took += 1
        return took

    insts = cat.instances_of(service)
    for inst in insts:
        if residual.inst_host.get(inst) == node and todo:
            fill(inst)
    fresh = sorted((i for i in insts if i not in residual.inst_host),
                   key=lambda i: (cat.cost[i], i))
    for inst in fresh:
        if not todo:
            break
        need = min(scen.requests[r].min_capacity for r in todo)
        if residual.node_residual(node) < need:
            break
        if fill(inst) == 0:
            break
    return assigned


def wise_place(table: PredictionTable | None, topology, scenario, t: int,
               residual: ResidualState | None = None, w_delay: float = 1.0) -> SlotAllocation:
    """One slot of water-filling placement.

    Requests whose (PoA, service) pair was predicted are placed first, with
    the node chosen against every PoA predicted for that service. Unpredicted
    arrivals go through a fallback pass keyed on their actual PoAs. Predicted
    services that draw no request still get one idle instance (charged).
    """
    residual = residual or ResidualState(topology, scenario, t)
    table = table or PredictionTable()
    predicted = table.pairs()
    active = [r.id for r in scenario.active(t)]
    first = [r for r in active if (scenario.requests[r].poa_at(t), scenario.requests[r].service)
             in predicted]
    rest = [r for r in active if r not in set(first)]

    for batch, use_table in ((first, True), (rest, False)):
        pending = sorted(batch, key=lambda r: _urgency(scenario, r))
        while pending:
            r = pending[0]
            s = scenario.requests[r].service
            if use_table:
                eta = set(table.pivot[s])
            else:
                eta = {scenario.requests[x].poa_at(t) for x in pending
                       if scenario.requests[x].service == s}
            group = [x for x in pending if scenario.requests[x].service == s]
            excluded: set[int] = set()
            while True:
                try:
                    choice = select_host_node(eta, topology, residual, excluded, w_delay)
                except NoFeasibleHostError:
                    residual.mark_unsupported(r)
                    pending.remove(r)
                    break
                got = water_fill(choice, s, group, residual)
                for x in got:
                    pending.remove(x)
                    group.remove(x)
                if r in got:
                    break
                excluded.add(choice.node)

    cat = scenario.catalog
    for s in sorted(table.pivot):
        if s >= cat.n_services or any(i in residual.inst_host for i in cat.instances_of(s)):
            continue
        try:
            choice = select_host_node(table.pivot[s], topology, residual, (), w_delay,
                                      require_capacity=False)
        except NoFeasibleHostError:
            continue
        inst = min(cat.instances_of(s), key=lambda i: (cat.cost[i], i))
        residual.place_idle(inst, choice.node)
    return residual.slot


def random_place(scenario, topology, t: int, rng: np.random.Generator,
                 residual: ResidualState | None = None, max_tries: int = 20) -> SlotAllocation:
    """Uniform draws of (instance, node, path pair) per request with rejection."""
    residual = residual or ResidualState(topology, scenario, t)
    cat = scenario.catalog
    for req in scenario.active(t):
        poa = req.poa_at(t)
        insts = cat.instances_of(req.service)
        ok = False
        for _ in range(max_tries):
            inst = insts[int(rng.integers(len(insts)))]
            node = residual.inst_host.get(inst)
            if node is None:
                node = int(rng.integers(topology.n_nodes))
            ins = topology.paths_between(poa, node)
            outs = topology.paths_between(node, poa)
            if not ins or not outs:
                continue
            p_in = ins[int(rng.integers(len(ins)))]
            p_out = outs[int(rng.integers(len(outs)))]
            if residual.try_assign(req.id, inst, node, p_in, p_out):
                ok = True
                break
        if not ok:
            residual.mark_unsupported(req.id)
    return residual.slot


@dataclass
class CcamPlanner:
    """Pins each service to one node the first time the service shows up."""

    node_of: dict[int, int] = field(default_factory=dict)
    w_delay: float = 1.0


def ccam_place(scenario, topology, t: int, residual: ResidualState | None = None,
               planner: CcamPlanner | None = None) -> SlotAllocation:
    """Single-node-per-service baseline; overflow beyond that node is unsupported."""
    residual = residual or ResidualState(topology, scenario, t)
    planner = planner if planner is not None else CcamPlanner()
    active = sorted((r.id for r in scenario.active(t)), key=lambda r: _urgency(scenario, r))
    order: list[int] = []
    for r in active:
        s = scenario.requests[r].service
        if s not in order:
            order.append(s)
    all_poa = topology.poa_nodes or tuple(range(topology.n_nodes))
    for s in order:
        group = [r for r in active if scenario.requests[r].service == s]
        if s not in planner.node_of:
            try:
                planner.node_of[s] = select_host_node(all_poa, topology, residual,
                                                      w_delay=planner.w_delay).node
            except NoFeasibleHostError:
                for r in group:
                    residual.mark_unsupported(r)
                continue
        eta = {scenario.requests[r].poa_at(t) for r in group}
        choice = route_choice(planner.node_of[s], eta, residual, planner.w_delay)
        got = water_fill(choice, s, group, residual) if choice is not None else []
        for r in group:
            if r not in got:
                residual.mark_unsupported(r)
    return residual.slot


class SlotOrchestrator:
    """Runs one heuristic slot after slot, carrying SLA usage and CCAM pins."""

    def __init__(self, name: str, scenario, topology, seed=None,
                 delay_model: str = "restricted", w_delay: float = 1.0):
        if name not in ("wise", "random", "ccam"):
            raise ValueError(f"unknown slot orchestrator {name!r}")
        self.name = name
        self.scenario = scenario
        self.topology = topology
        self.delay_model = delay_model
        self.w_delay = w_delay
        self.rng = np.random.default_rng(seed)
        self.planner = CcamPlanner(w_delay=w_delay)
        self.sla_used: dict[int, float] = {}

    def step(self, t: int, table: PredictionTable | None = None) -> SlotAllocation:
        res = ResidualState(self.topology, self.scenario, t, self.sla_used, self.delay_model)
        if self.name == "wise":
            wise_place(table, self.topology, self.scenario, t, res, self.w_delay)
        elif self.name == "random":
            random_place(self.scenario, self.topology, t, self.rng, res)
        else:
            ccam_place(self.scenario, self.topology, t, res, self.planner)
        slot = res.finalize()
        self.sla_used = res.sla_used
        return slot


def solve_horizon(name: str, scenario, topology, seed=None, tables=None,
                  delay_model: str = "restricted", **kwargs) -> Allocation:
    """Allocation over every slot. WISE defaults to perfect-foresight tables.

    ``tables`` maps slot -> :class:`PredictionTable`.
    """
    if name == "exact":
        from .exact import exact_solve
        return exact_solve(scenario, topology, delay_model=delay_model, **kwargs)
    orch = SlotOrchestrator(name, scenario, topology, seed, delay_model, **kwargs)
    alloc = Allocation()
    for t in range(1, scenario.horizon + 1):
        if tables is not None:
            table = tables.get(t)
        elif name == "wise":
            table = PredictionTable.from_scenario(scenario, t)
        else:
            table = None
        alloc.slots[t] = orch.step(t, table)
    return alloc
