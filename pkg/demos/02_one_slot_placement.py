"""
Placing one slot of requests
============================

Generate a workload, then compare the water-filling heuristic against the
random and pin-once baselines on the same instance: cost, delay and how many
requests could not be served.
"""

from ascetic.model import check_constraints, evaluate_slot, objective_cost
from ascetic.orchestrator import solve_horizon
from ascetic.topology import build_topology
from ascetic.workload import ScenarioParams, generate_scenario

topo = build_topology(20, seed=1)
scn = generate_scenario(topo, ScenarioParams(n_requests=60, horizon=5), seed=1)
print(f"{scn.n_requests} requests over {scn.horizon} slots, "
      f"{scn.catalog.n_services} services, {scn.catalog.n_instances} instances")

for name in ("wise", "ccam", "random"):
    alloc = solve_horizon(name, scn, topo, seed=0)
    report = check_constraints(alloc, scn, topo, supported_only=True)
    unserved = sum(len(s.unsupported) for s in alloc.slots.values())
    delays = [evaluate_slot(s, scn, topo).e2e.mean() for s in alloc.slots.values()
              if s.supported]
    print(f"{name:>6}: cost {objective_cost(alloc, scn, topo):12.1f}   "
          f"mean delay {sum(delays) / len(delays):.3f} ms   unsupported {unserved:3d}   "
          f"feasible {report.feasible}")

# Inside one slot: where did each request go, and what did it cost?
slot = solve_horizon("wise", scn, topo).slots[1]
state = evaluate_slot(slot, scn, topo)
for r in slot.supported[:5]:
    k = state.row(r)
    print(f"request {r}: instance {slot.assign[r]} on node(s) {sorted(slot.place[slot.assign[r]])},"
          f" e2e {state.e2e[k]:.3f} ms, path cost {state.path_cost[k]:.1f}")
