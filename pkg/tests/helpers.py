"""Builders for small hand-made topologies, catalogs and requests."""

import numpy as np

from ascetic.model import Allocation, SlotAllocation
from ascetic.topology import LinkSpec, NodeSpec, Topology, build_topology, enumerate_paths
from ascetic.workload import (InstanceSpec, Request, Scenario, ScenarioParams, ServiceCatalog,
                              generate_scenario)


def make_topology(n, edges, caps=None, costs=None, poa=None, k=3, max_hops=None, tiers=None):
    """``edges`` holds (src, dst) or (src, dst, capacity, cost) tuples."""
    caps = caps if caps is not None else [100.0] * n
    costs = costs if costs is not None else [10.0] * n
    tiers = tiers if tiers is not None else [0] * n
    nodes = [NodeSpec(i, tiers[i], float(caps[i]), float(costs[i])) for i in range(n)]
    links = []
    for e in edges:
        src, dst = e[0], e[1]
        cap, cost = (e[2], e[3]) if len(e) == 4 else (100.0, 10.0)
        links.append(LinkSpec(len(links), src, dst, float(cap), float(cost)))
    paths = enumerate_paths(nodes, links, k=k, max_hops=max_hops).paths
    return Topology(nodes, links, paths, range(n) if poa is None else poa)


def both_ways(pairs, cap=100.0, cost=10.0):
    out = []
    for a, b in pairs:
        out += [(a, b, cap, cost), (b, a, cap, cost)]
    return out


def make_catalog(entries):
    """``entries`` is a list of (service, capacity, cost)."""
    index = {}
    out = []
    for s, cap, cost in entries:
        out.append(InstanceSpec(len(out), s, index.get(s, 0), float(cap), float(cost)))
        index[s] = index.get(s, 0) + 1
    return ServiceCatalog(out)


def make_request(rid, service, trace, arrival=1, I=1.0, L=1.0, D=50.0, B=1.0, Z=1.0, sla=None):
    trace = tuple(trace)
    return Request(rid, arrival, service, trace, float(I), float(L), float(D), float(B),
                   float(Z), float(sla if sla is not None else D * len(trace)))


def make_scenario(horizon, catalog, requests, poa=None):
    return Scenario(horizon, catalog, requests, poa)


def random_allocation(scenario, topology, rng, multi_host=0.1, unsupported=0.1):
    """Arbitrary (not necessarily feasible) allocation with valid path endpoints."""
    alloc = Allocation()
    cat = scenario.catalog
    for t in range(1, scenario.horizon + 1):
        slot = SlotAllocation(t)
        hosts = {}
        for req in scenario.active(t):
            if rng.random() < unsupported:
                slot.unsupported.add(req.id)
                continue
            insts = cat.instances_of(req.service)
            inst = insts[int(rng.integers(len(insts)))]
            if inst not in hosts:
                hosts[inst] = int(rng.integers(topology.n_nodes))
            host = hosts[inst]
            poa = req.poa_at(t)
            ins = topology.paths_between(poa, host)
            outs = topology.paths_between(host, poa)
            slot.add_request(req.id, inst, host, ins[int(rng.integers(len(ins)))],
                             outs[int(rng.integers(len(outs)))])
            if rng.random() < multi_host:
                slot.place[inst].add(int(rng.integers(topology.n_nodes)))
        alloc.slots[t] = slot
    return alloc


def tiny_case(seed):
    """A random instance small enough for the exhaustive solver (k=2 paths)."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 6))
    topo = build_topology(n, seed=seed)
    small = make_topology(n, [(l.src, l.dst, l.bandwidth_capacity, l.link_cost)
                              for l in topo.links], caps=topo.node_capacity,
                          costs=topo.node_cost, poa=topo.poa_nodes, k=2)
    p = ScenarioParams(n_requests=int(rng.integers(1, 5)), horizon=int(rng.integers(1, 4)),
                       n_services=2, instances_per_service=2)
    return small, generate_scenario(small, p, seed)
