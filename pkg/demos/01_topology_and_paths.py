"""
Tiered edge topology and candidate paths
========================================

Build a small three-tier edge network, look at what sits in each tier, and
list the candidate paths between an access point and a core node.
"""

import numpy as np

from ascetic.topology import build_topology

topo = build_topology(12, tiers=3, seed=7)
print(topo)

tiers = np.array([n.tier for n in topo.nodes])

# Nodes near the users are many and cheap to reach; core nodes are few and cheap to run.
for tier in range(topo.max_tier + 1):
    members = np.flatnonzero(tiers == tier)
    print(f"tier {tier}: nodes {members.tolist()}, "
          f"mean usage cost {topo.node_cost[members].mean():.1f}")

print("access points:", list(topo.poa_nodes))

# Every ordered pair keeps up to k loop-free paths, shortest in hops first.
poa = topo.poa_nodes[0]
core = int(np.flatnonzero(tiers == topo.max_tier)[0])
for pid in topo.paths_between(poa, core):
    path = topo.paths[pid]
    print(f"path {pid}: {path.hops} hops over links {list(path.links)}, cost {topo.path_cost[pid]:.1f}")

# A node reaches itself over a zero-link path, so a request may be served where it enters.
print("self path:", topo.paths[topo.paths_between(poa, poa)[0]])

# The text form round-trips exactly, which is what the CLI writes to disk.
assert type(topo).from_text(topo.to_text()) == topo
