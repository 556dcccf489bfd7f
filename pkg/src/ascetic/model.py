"""Allocation container, delay calculus, objective and constraint checker.

Delays follow the burstiness bound: a request crossing link ``l`` waits for
the traffic (burstiness + packet size) of every other request sharing ``l``,
divided by the link capacity. E2E delay adds one such term per traversal of
the inquiry and response paths plus the compute delay ``Z / I``.

``delay_model="literal"`` drops the sharing condition and charges every other
supported request on every link.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

__all__ = [
    "SlotAllocation",
    "Allocation",
    "SlotState",
    "DelayBreakdown",
    "ConstraintReport",
    "NoAllocationError",
    "DELAY_MODELS",
    "evaluate_slot",
    "link_delay",
    "e2e_delay",
    "path_cost",
    "slot_cost",
    "objective_cost",
    "delay_breakdown",
    "check_constraints",
]

DELAY_MODELS = ("restricted", "literal")
TOL = 1e-9
CONSTRAINTS = tuple(f"C{k}" for k in range(1, 13))


class NoAllocationError(LookupError):
    pass


def _as_tuple(v) -> tuple[int, ...]:
    if isinstance(v, (int, np.integer)):
        return (int(v),)
    return tuple(sorted(int(x) for x in v))


@dataclass
class SlotAllocation:
    """Decisions for one slot.

    ``assign`` maps a request to its instance id (a collection of ids is
    tolerated so malformed inputs can be reported), ``place`` maps an
    instance to its host nodes, and the path dicts hold the chosen path ids.
    ``delay`` and ``path_cost`` optionally record what the producer believed.
    """

    t: int
    assign: dict[int, int] = field(default_factory=dict)
    place: dict[int, set[int]] = field(default_factory=dict)
    inquiry: dict[int, int] = field(default_factory=dict)
    response: dict[int, int] = field(default_factory=dict)
    unsupported: set[int] = field(default_factory=set)
    delay: dict[int, float] = field(default_factory=dict)
    path_cost: dict[int, float] = field(default_factory=dict)

    @property
    def supported(self) -> list[int]:
        return sorted(self.assign)

    def is_empty(self) -> bool:
        return not self.assign and not any(self.place.values())

    def add_request(self, r: int, instance: int, host: int, inquiry: int, response: int):
        self.assign[r] = instance
        self.place.setdefault(instance, set()).add(host)
        self.inquiry[r] = inquiry
        self.response[r] = response
        self.unsupported.discard(r)

    def copy(self) -> "SlotAllocation":
        return SlotAllocation(self.t, dict(self.assign),
                              {i: set(h) for i, h in self.place.items()},
                              dict(self.inquiry), dict(self.response), set(self.unsupported),
                              dict(self.delay), dict(self.path_cost))


@dataclass
class Allocation:
    slots: dict[int, SlotAllocation] = field(default_factory=dict)

    def slot(self, t: int) -> SlotAllocation:
        if t not in self.slots:
            self.slots[t] = SlotAllocation(t)
        return self.slots[t]

    def __getitem__(self, t: int) -> SlotAllocation:
        return self.slots[t]

    def unsupported_count(self, t: int) -> int:
        return len(self.slots[t].unsupported) if t in self.slots else 0

    def to_csv(self, topology) -> str:
        """Rows ``t,r,instance,node,inquiry_path,response_path,delay_ms,path_cost``.

        Idle placements have an empty ``r``; unsupported requests have an
        empty ``instance``.
        """
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "r", "instance", "node", "inquiry_path", "response_path",
                    "delay_ms", "path_cost"])
        for t in sorted(self.slots):
            s = self.slots[t]
            used = set()
            for r in s.supported:
                inst = _as_tuple(s.assign[r])[0]
                node = topology.paths[s.inquiry[r]].tail
                used.add((inst, node))
                w.writerow([t, r, inst, node, s.inquiry[r], s.response[r],
                            repr(s.delay[r]) if r in s.delay else "",
                            repr(s.path_cost[r]) if r in s.path_cost else ""])
            for r in sorted(s.unsupported):
                w.writerow([t, r, "", "", "", "", "", ""])
            for inst in sorted(s.place):
                for node in sorted(s.place[inst]):
                    if (inst, node) not in used:
                        w.writerow([t, "", inst, node, "", "", "", ""])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Allocation":
        alloc = cls()
        for row in csv.DictReader(io.StringIO(text)):
            s = alloc.slot(int(row["t"]))
            if row["r"] == "":
                s.place.setdefault(int(row["instance"]), set()).add(int(row["node"]))
            elif row["instance"] == "":
                s.unsupported.add(int(row["r"]))
            else:
                r = int(row["r"])
                s.add_request(r, int(row["instance"]), int(row["node"]),
                              int(row["inquiry_path"]), int(row["response_path"]))
                if row["delay_ms"]:
                    s.delay[r] = float(row["delay_ms"])
                if row["path_cost"]:
                    s.path_cost[r] = float(row["path_cost"])
        return alloc


@dataclass
class SlotState:
    """Vectorised view of one slot. Row ``k`` belongs to request ``requests[k]``."""

    t: int
    requests: list[int]
    traversals: np.ndarray  # (n, L) times each request crosses each link
    link_delay: np.ndarray  # (n, L)
    network_delay: np.ndarray
    compute_delay: np.ndarray
    e2e: np.ndarray
    path_cost: np.ndarray
    placement_cost: float
    instance_cost: float

    def row(self, r: int) -> int:
        try:
            return self.requests.index(r)
        except ValueError:
            raise NoAllocationError(f"request {r} has no allocation at slot {self.t}") from None

    @property
    def total_cost(self) -> float:
        return self.placement_cost + self.instance_cost + float(self.path_cost.sum())


def evaluate_slot(slot: SlotAllocation, scenario, topology,
                  delay_model: str = "restricted") -> SlotState:
    if delay_model not in DELAY_MODELS:
        raise ValueError(f"delay_model must be one of {DELAY_MODELS}")
    reqs = slot.supported
    inc = topology.incidence_matrix()
    n, L = len(reqs), topology.n_links
    if n:
        inq = [slot.inquiry[r] for r in reqs]
        resp = [slot.response[r] for r in reqs]
        X = inc[inq].astype(float) + inc[resp]
    else:
        X = np.zeros((0, L))
    R = scenario.requests
    w = np.array([R[r].traffic for r in reqs], dtype=float)
    cap = topology.link_capacity
    if delay_model == "restricted":
        U = (X > 0).astype(float)
        load = U.T @ w
        D = (load[None, :] - U * w[:, None]) / cap[None, :]
    else:
        D = (w.sum() - w)[:, None] / cap[None, :] * np.ones((1, L))
    net = (X * D).sum(axis=1)
    comp = np.array([R[r].compute_delay for r in reqs], dtype=float)
    place_cost = sum(float(topology.node_cost[list(h)].sum()) for h in slot.place.values() if h)
    inst_cost = sum(float(scenario.catalog.cost[list(_as_tuple(slot.assign[r]))].sum())
                    for r in reqs)
    return SlotState(slot.t, reqs, X, D, net, comp, net + comp, X @ topology.link_cost,
                     place_cost, inst_cost)


def _slot(allocation: Allocation, t: int) -> SlotAllocation:
    if t not in allocation.slots:
        raise NoAllocationError(f"no decisions recorded for slot {t}")
    return allocation.slots[t]


def link_delay(allocation: Allocation, scenario, topology, r: int, l: int, t: int,
               delay_model: str = "restricted") -> float:
    """Queueing delay request ``r`` sees on link ``l`` at slot ``t`` (ms)."""
    if not 0 <= l < topology.n_links:
        raise KeyError(f"unknown link {l}")
    st = evaluate_slot(_slot(allocation, t), scenario, topology, delay_model)
    return float(st.link_delay[st.row(r), l])


def e2e_delay(allocation: Allocation, scenario, topology, r: int, t: int,
              delay_model: str = "restricted") -> float:
    st = evaluate_slot(_slot(allocation, t), scenario, topology, delay_model)
    return float(st.e2e[st.row(r)])


def path_cost(allocation: Allocation, scenario, topology, r: int, t: int) -> float:
    st = evaluate_slot(_slot(allocation, t), scenario, topology)
    return float(st.path_cost[st.row(r)])


def slot_cost(slot: SlotAllocation, scenario, topology) -> float:
    return evaluate_slot(slot, scenario, topology).total_cost


def objective_cost(allocation: Allocation, scenario, topology,
                   slots: Iterable[int] | None = None) -> float:
    """Placement + instance-assignment + path cost summed over slots."""
    ts = sorted(allocation.slots) if slots is None else list(slots)
    return sum(slot_cost(allocation.slots[t], scenario, topology)
               for t in ts if t in allocation.slots)


@dataclass
class DelayBreakdown:
    r: int
    t: int
    link_delays: list[tuple[int, float]]  # one entry per traversal
    network: float
    compute: float
    total: float


def delay_breakdown(allocation: Allocation, scenario, topology, r: int, t: int,
                    delay_model: str = "restricted") -> DelayBreakdown:
    slot = _slot(allocation, t)
    st = evaluate_slot(slot, scenario, topology, delay_model)
    k = st.row(r)
    hops = []
    for pid in (slot.inquiry[r], slot.response[r]):
        hops += [(l, float(st.link_delay[k, l])) for l in topology.paths[pid].links]
    return DelayBreakdown(r, t, hops, float(st.network_delay[k]), float(st.compute_delay[k]),
                          float(st.e2e[k]))


def breakdown_csv(rows: Iterable[DelayBreakdown]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["r", "t", "link", "delay"])
    for b in rows:
        for l, d in b.link_delays:
            w.writerow([b.r, b.t, l, repr(d)])
    return buf.getvalue()


@dataclass
class ConstraintReport:
    passed: dict[str, bool]
    witnesses: dict[str, list[tuple]]

    @property
    def feasible(self) -> bool:
        return all(self.passed[c] for c in CONSTRAINTS)

    def failing(self) -> list[str]:
        return [c for c in CONSTRAINTS if not self.passed[c]]

    def to_json(self) -> str:
        return json.dumps({"feasible": self.feasible,
                           "constraints": {c: {"pass": self.passed[c],
                                               "witnesses": [list(x) for x in self.witnesses[c]]}
                                           for c in CONSTRAINTS}}, indent=2)

    def __str__(self):
        bad = self.failing()
        if not bad:
            return "feasible"
        return "; ".join(f"{c}: {self.witnesses[c][:5]}" for c in bad)


def _close_le(a, b):
    return a <= b + TOL * max(1.0, abs(b))


def _close_eq(a, b):
    return abs(a - b) <= TOL * max(1.0, abs(a), abs(b))


def check_constraints(allocation: Allocation, scenario, topology, supported_only: bool = False,
                      delay_model: str = "restricted") -> ConstraintReport:
    """Evaluate C1-C12 and collect witnesses.

    With ``supported_only`` a request listed in a slot's ``unsupported`` set
    is exempt from C1 for that slot; every other active request must still be
    assigned. Witnesses are ``(entity, t)`` tuples, ``(r,)`` for C12.
    """
    wit: dict[str, list[tuple]] = {c: [] for c in CONSTRAINTS}
    R = scenario.requests
    cat = scenario.catalog
    sla_used = np.zeros(len(R))
    for t in range(1, scenario.horizon + 1):
        slot = allocation.slots.get(t, SlotAllocation(t))
        for r in scenario.active(t):
            if r.id in slot.assign:
                continue
            if not (supported_only and r.id in slot.unsupported):
                wit["C1"].append((r.id, t))
    for t in sorted(allocation.slots):
        slot = allocation.slots[t]
        for r in slot.supported:
            if not 0 <= r < len(R) or not R[r].is_active(t):
                wit["C1"].append((r, t))
        bad_req = {r for r in slot.supported if not 0 <= r < len(R) or not R[r].is_active(t)}
        for r in slot.supported:
            if r in bad_req:
                continue
            insts = _as_tuple(slot.assign[r])
            if len(insts) != 1 or any(not 0 <= i < cat.n_instances for i in insts) or \
                    cat.instances[insts[0]].service != R[r].service:
                wit["C1"].append((r, t))
        # C2: instances in use have a host; hosts exist.
        loads: dict[int, float] = {}
        for r in slot.supported:
            if r in bad_req:
                continue
            for i in _as_tuple(slot.assign[r]):
                loads[i] = loads.get(i, 0.0) + R[r].min_capacity
        for i in sorted(loads):
            if not slot.place.get(i):
                wit["C2"].append((i, t))
        for i, hosts in slot.place.items():
            if any(not 0 <= n < topology.n_nodes for n in hosts):
                wit["C2"].append((i, t))
        for i in sorted(loads):
            if 0 <= i < cat.n_instances and not _close_le(loads[i], cat.capacity[i]):
                wit["C3"].append((i, t))
        node_load = np.zeros(topology.n_nodes)
        for i, hosts in slot.place.items():
            for n in hosts:
                if 0 <= n < topology.n_nodes:
                    node_load[n] += loads.get(i, 0.0)
        for n in np.flatnonzero(node_load > topology.node_capacity * (1 + TOL) + TOL):
            wit["C4"].append((int(n), t))
        # C5/C6: path endpoints.
        ok_paths = []
        for r in slot.supported:
            if r in bad_req:
                continue
            e = R[r].poa_at(t)
            hosts = set()
            for i in _as_tuple(slot.assign[r]):
                hosts |= slot.place.get(i, set())
            p_in = slot.inquiry.get(r)
            p_out = slot.response.get(r)
            good_in = p_in is not None and 0 <= p_in < topology.n_paths and \
                topology.paths[p_in].head == e and topology.paths[p_in].tail in hosts
            good_out = p_out is not None and 0 <= p_out < topology.n_paths and \
                topology.paths[p_out].tail == e and good_in and \
                topology.paths[p_out].head == topology.paths[p_in].tail
            if not good_in:
                wit["C5"].append((r, t))
            if not good_out:
                wit["C6"].append((r, t))
            if good_in and good_out:
                ok_paths.append(r)
        for r in set(slot.inquiry) | set(slot.response):
            if r not in slot.assign:
                wit["C5" if r in slot.inquiry else "C6"].append((r, t))
        if len(ok_paths) != len([r for r in slot.supported if r not in bad_req]) or bad_req:
            # Delay terms are undefined without valid routes; skip C7-C12 for this slot.
            continue
        st = evaluate_slot(slot, scenario, topology, delay_model)
        bw = np.array([R[r].min_bandwidth for r in st.requests])
        use = bw @ st.traversals if st.requests else np.zeros(topology.n_links)
        for l in np.flatnonzero(use > topology.link_capacity * (1 + TOL) + TOL):
            wit["C7"].append((int(l), t))
        for k, r in enumerate(st.requests):
            if r in slot.path_cost and not _close_eq(slot.path_cost[r], st.path_cost[k]):
                wit["C8"].append((r, t))
            if not np.all(np.isfinite(st.link_delay[k])) or (st.link_delay[k] < -TOL).any():
                wit["C9"].append((r, t))
            if r in slot.delay and not _close_eq(slot.delay[r], st.e2e[k]):
                wit["C10"].append((r, t))
            if not _close_le(st.e2e[k], R[r].max_delay):
                wit["C11"].append((r, t))
            sla_used[r] += st.e2e[k]
    for r in R:
        if not _close_le(sla_used[r.id], r.sla_budget):
            wit["C12"].append((r.id,))
    passed = {c: not wit[c] for c in CONSTRAINTS}
    return ConstraintReport(passed, wit)
