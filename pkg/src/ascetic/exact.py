"""Exhaustive optimum for tiny instances.

Every active (slot, request) pair picks one option: an (instance, host,
inquiry path, response path) tuple or "unsupported" at a fixed penalty.
The search is a depth-first enumeration in a fixed option order with
pruning that never discards a strictly better completion:

* capacities, bandwidth and delays only grow as requests are added, so a
  violated partial state cannot become feasible again;
* a per-(slot, service) lower bound on the remaining cost.

Instances may be hosted on several nodes, as the model allows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import DELAY_MODELS, Allocation, SlotAllocation, evaluate_slot

__all__ = ["ExactLimits", "ExactLimitError", "exact_solve"]


class ExactLimitError(ValueError):
    pass


@dataclass(frozen=True)
class ExactLimits:
    max_requests: int = 5
    max_horizon: int = 3
    max_nodes: int = 6
    max_services: int = 3
    max_paths_per_pair: int = 2

    def check(self, scenario, topology):
        pairs = {}
        for p in topology.paths:
            if p.head != p.tail:
                pairs[(p.head, p.tail)] = pairs.get((p.head, p.tail), 0) + 1
        sizes = {
            "requests": (scenario.n_requests, self.max_requests),
            "horizon": (scenario.horizon, self.max_horizon),
            "nodes": (topology.n_nodes, self.max_nodes),
            "services": (scenario.catalog.n_services, self.max_services),
            "paths per pair": (max(pairs.values(), default=0), self.max_paths_per_pair),
        }
        over = [f"{k}={v}>{lim}" for k, (v, lim) in sizes.items() if v > lim]
        if over:
            raise ExactLimitError("instance too large for exhaustive search: " + ", ".join(over))


def exact_solve(scenario, topology, limits: ExactLimits | None = None, penalty: float = 1e6,
                delay_model: str = "restricted") -> Allocation:
    """Minimum of placement + assignment + path cost + ``penalty`` per unsupported request-slot.

    Raises
    ------
    ExactLimitError
        When the instance exceeds ``limits``; no approximation is attempted.
    """
    if delay_model not in DELAY_MODELS:
        raise ValueError(f"delay_model must be one of {DELAY_MODELS}")
    (limits or ExactLimits()).check(scenario, topology)
    return _Search(scenario, topology, penalty, delay_model).run()


class _Search:
    def __init__(self, scenario, topology, penalty, delay_model):
        self.scn = scenario
        self.topo = topology
        self.penalty = float(penalty)
        self.literal = delay_model == "literal"
        self.delay_model = delay_model
        cat = scenario.catalog
        T = scenario.horizon
        N = topology.n_nodes
        self.items = [(t, r.id) for t in range(1, T + 1) for r in scenario.active(t)]
        group_size = {}
        for t, r in self.items:
            key = (t, scenario.requests[r].service)
            group_size[key] = group_size.get(key, 0) + 1
        self.options = []
        self.host_base = []  # per item: (instances, nodes) min option cost without placement
        self.share = []
        for t, r in self.items:
            req = scenario.requests[r]
            poa = req.poa_at(t)
            insts = cat.instances_of(req.service)
            grid = np.full((len(insts), N), np.inf)
            opts = []
            for a, i in enumerate(insts):
                for n in range(N):
                    for pi in topology.paths_between(poa, n):
                        for po in topology.paths_between(n, poa):
                            base = cat.cost[i] + topology.path_cost[pi] + topology.path_cost[po]
                            grid[a, n] = min(grid[a, n], base)
                            opts.append((base + topology.node_cost[n], base, i, n, pi, po))
            opts.sort()
            self.options.append([o[2:] + (o[1],) for o in opts])
            self.host_base.append((np.array(insts), grid))
            self.share.append(topology.node_cost / group_size[(t, req.service)])

        self.inst_load = {t: np.zeros(cat.n_instances) for t in range(1, T + 1)}
        self.hosts = {t: {} for t in range(1, T + 1)}  # inst -> {node: refcount}
        self.link_bw = {t: np.zeros(topology.n_links) for t in range(1, T + 1)}
        self.link_traffic = {t: np.zeros(topology.n_links) for t in range(1, T + 1)}
        self.links_of = {t: {} for t in range(1, T + 1)}  # r -> {link: count}
        self.delay = {t: {} for t in range(1, T + 1)}
        self.use_prior = True

    # -- state helpers -------------------------------------------------
    def _node_load(self, t, n):
        return sum(self.inst_load[t][i] for i, hs in self.hosts[t].items() if n in hs)

    def _req_delay(self, t, r):
        req = self.scn.requests[r]
        cap = self.topo.link_capacity
        w = req.traffic
        if self.literal:
            total = sum(self.scn.requests[x].traffic for x in self.links_of[t])
            net = sum(c * (total - w) / cap[l] for l, c in self.links_of[t][r].items())
        else:
            lt = self.link_traffic[t]
            net = sum(c * (lt[l] - w) / cap[l] for l, c in self.links_of[t][r].items())
        return net + req.compute_delay

    def _add(self, t, r, i, n, pi, po):
        """Apply the option; return the previous delay table, or None if a constraint breaks."""
        req = self.scn.requests[r]
        topo = self.topo
        cat = self.scn.catalog
        if self.inst_load[t][i] + req.min_capacity > cat.capacity[i]:
            return None
        counts = {}
        for pid in (pi, po):
            for l in topo.paths[pid].links:
                counts[l] = counts.get(l, 0) + 1
        if any(self.link_bw[t][l] + c * req.min_bandwidth > topo.link_capacity[l]
               for l, c in counts.items()):
            return None
        hs = self.hosts[t].setdefault(i, {})
        hs[n] = hs.get(n, 0) + 1
        self.inst_load[t][i] += req.min_capacity
        for l, c in counts.items():
            self.link_bw[t][l] += c * req.min_bandwidth
            self.link_traffic[t][l] += req.traffic
        self.links_of[t][r] = counts
        ok = all(self._node_load(t, m) <= topo.node_capacity[m] for m in hs)
        if ok:
            new = {}
            for x in self.links_of[t]:
                d = self._req_delay(t, x)
                rq = self.scn.requests[x]
                prior = sum(self.delay[u].get(x, 0.0) for u in range(1, t)) if self.use_prior else 0.0
                if d > rq.max_delay or prior + d > rq.sla_budget:
                    ok = False
                    break
                new[x] = d
        if not ok:
            self._remove(t, r, i, n)
            return None
        old = self.delay[t]
        self.delay[t] = new
        return old

    def _remove(self, t, r, i, n):
        req = self.scn.requests[r]
        counts = self.links_of[t][r]
        hs = self.hosts[t][i]
        hs[n] -= 1
        if hs[n] == 0:
            del hs[n]
        if not hs:
            del self.hosts[t][i]
        self.inst_load[t][i] -= req.min_capacity
        for l, c in counts.items():
            self.link_bw[t][l] -= c * req.min_bandwidth
            self.link_traffic[t][l] -= req.traffic
        del self.links_of[t][r]

    def _item_bound(self, j):
        """Cheapest completion of item ``j``: a new host's cost is split over its group."""
        t, _ = self.items[j]
        insts, grid = self.host_base[j]
        extra = np.tile(self.share[j], (len(insts), 1))
        for a, i in enumerate(insts):
            for n in self.hosts[t].get(int(i), ()):
                extra[a, n] = 0.0
        return min(self.penalty, float((grid + extra).min()))

    # -- search ----------------------------------------------------------
    def run(self) -> Allocation:
        T = self.scn.horizon
        by_slot = {t: [k for k, (u, _) in enumerate(self.items) if u == t] for t in range(1, T + 1)}
        # Slots only interact through the SLA budget: solve them apart first.
        self.use_prior = False
        best_slot, value = {}, {}
        for t in range(1, T + 1):
            self.seq, self.tail = by_slot[t], [0.0] * (len(by_slot[t]) + 1)
            self._solve()
            best_slot[t], value[t] = self.best, self.best_cost
        combined = [opt for t in range(1, T + 1) for opt in best_slot[t]]
        alloc = self._build(combined)
        if self._sla_ok(alloc):
            return alloc
        self.use_prior = True
        self.seq = [k for t in range(1, T + 1) for k in by_slot[t]]
        self.tail = [sum(value[u] for u in range(self.items[k][0] + 1, T + 1)) for k in self.seq]
        self.tail.append(0.0)
        self._solve()
        return self._build(self.best)

    def _solve(self):
        self.choice = [None] * len(self.seq)
        self.best_cost = math.inf
        self.best = None
        self._dfs(0, 0.0)

    def _dfs(self, k, cost):
        tol = 1e-9 * max(1.0, abs(self.best_cost)) if math.isfinite(self.best_cost) else 0.0
        if k == len(self.seq):
            if cost < self.best_cost - tol:
                self.best_cost = cost
                self.best = list(self.choice)
            return
        t = self.items[self.seq[k]][0]
        lb = self.tail[k] + sum(self._item_bound(j) for j in self.seq[k:]
                                if self.items[j][0] == t)
        if cost + lb >= self.best_cost - tol:
            return
        j = self.seq[k]
        r = self.items[j][1]
        for opt in self.options[j]:
            i, n, pi, po, base = opt
            opened = n in self.hosts[t].get(i, {})
            old = self._add(t, r, i, n, pi, po)
            if old is None:
                continue
            self.choice[k] = opt
            self._dfs(k + 1, cost + base + (0.0 if opened else self.topo.node_cost[n]))
            self.delay[t] = old
            self._remove(t, r, i, n)
        self.choice[k] = None
        self._dfs(k + 1, cost + self.penalty)

    def _sla_ok(self, alloc):
        used = {}
        for slot in alloc.slots.values():
            for r, d in slot.delay.items():
                used[r] = used.get(r, 0.0) + d
        return all(d <= self.scn.requests[r].sla_budget for r, d in used.items())

    def _build(self, choices) -> Allocation:
        alloc = Allocation()
        for t in range(1, self.scn.horizon + 1):
            alloc.slots[t] = SlotAllocation(t)
        for (t, r), opt in zip(self.items, choices):
            slot = alloc.slots[t]
            if opt is None:
                slot.unsupported.add(r)
            else:
                i, n, pi, po, _ = opt
                slot.add_request(r, i, n, pi, po)
        for t, slot in alloc.slots.items():
            st = evaluate_slot(slot, self.scn, self.topo, self.delay_model)
            for k, r in enumerate(st.requests):
                slot.delay[r] = float(st.e2e[k])
                slot.path_cost[r] = float(st.path_cost[k])
        return alloc
