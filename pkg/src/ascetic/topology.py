"""Tiered edge-cloud graph: nodes, directed links and an enumerated path set.

Nodes at tier 0 form the access layer and act as points of attachment (PoAs).
Higher tiers sit closer to the core and get more capacity for less money.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

__all__ = [
    "NodeSpec",
    "LinkSpec",
    "Path",
    "PathSet",
    "Topology",
    "TopologyParams",
    "build_topology",
    "enumerate_paths",
    "incidence",
]

TOPO_HEADER = "ascetic-topo v1"


@dataclass(frozen=True)
class NodeSpec:
    id: int
    tier: int
    compute_capacity: float
    compute_cost: float

    def __post_init__(self):
        if self.tier < 0:
            raise ValueError(f"node {self.id}: tier must be >= 0")
        if not self.compute_capacity > 0 or not self.compute_cost > 0:
            raise ValueError(f"node {self.id}: capacity and cost must be positive")


@dataclass(frozen=True)
class LinkSpec:
    id: int
    src: int
    dst: int
    bandwidth_capacity: float
    link_cost: float

    def __post_init__(self):
        if self.src == self.dst:
            raise ValueError(f"link {self.id}: self loop")
        if not self.bandwidth_capacity > 0 or not self.link_cost > 0:
            raise ValueError(f"link {self.id}: capacity and cost must be positive")


@dataclass(frozen=True)
class Path:
    """Directed simple path. ``links`` is empty for the trivial path of a node to itself."""

    id: int
    head: int
    tail: int
    links: tuple[int, ...]

    @property
    def hops(self) -> int:
        return len(self.links)


class PathSet(NamedTuple):
    paths: list[Path]
    unreachable: list[tuple[int, int]]


@dataclass
class TopologyParams:
    """Distributions used by :func:`build_topology` (defaults follow Table I)."""

    links_per_node: tuple[int, int] = (3, 5)
    link_cost: tuple[int, int] = (10, 20)
    link_capacity: tuple[int, int] = (100, 150)
    node_cost_base: float = 50.0
    node_capacity_base: float = 50.0
    k_paths: int = 3
    max_hops: int | None = None

    def validate(self):
        for name in ("links_per_node", "link_cost", "link_capacity"):
            lo, hi = getattr(self, name)
            if lo <= 0 or hi < lo:
                raise ValueError(f"{name}: need 0 < low <= high, got {(lo, hi)}")
        if self.node_cost_base <= 1:
            raise ValueError("node_cost_base must be > 1 (it is an exponent base)")
        if self.node_capacity_base <= 0:
            raise ValueError("node_capacity_base must be positive")
        if self.k_paths < 1:
            raise ValueError("k_paths must be >= 1")


class Topology:
    """Immutable edge-cloud graph with its path set and lookup tables."""

    def __init__(self, nodes: Sequence[NodeSpec], links: Sequence[LinkSpec],
                 paths: Sequence[Path], poa_nodes: Iterable[int]):
        self.nodes = tuple(nodes)
        self.links = tuple(links)
        self.paths = tuple(paths)
        self.poa_nodes = tuple(sorted(set(poa_nodes)))
        self._validate()

        self.node_capacity = np.array([n.compute_capacity for n in self.nodes], dtype=float)
        self.node_cost = np.array([n.compute_cost for n in self.nodes], dtype=float)
        self.link_capacity = np.array([l.bandwidth_capacity for l in self.links], dtype=float)
        self.link_cost = np.array([l.link_cost for l in self.links], dtype=float)
        self.path_cost = np.array([self.link_cost[list(p.links)].sum() if p.links else 0.0
                                   for p in self.paths])
        self._pair_paths: dict[tuple[int, int], tuple[int, ...]] = {}
        for p in self.paths:
            self._pair_paths.setdefault((p.head, p.tail), ())
            self._pair_paths[(p.head, p.tail)] += (p.id,)
        self._incidence = None

    def _validate(self):
        for idx, n in enumerate(self.nodes):
            if n.id != idx:
                raise ValueError("node ids must be 0..N-1 in order")
        seen = set()
        for idx, l in enumerate(self.links):
            if l.id != idx:
                raise ValueError("link ids must be 0..L-1 in order")
            if not (0 <= l.src < len(self.nodes) and 0 <= l.dst < len(self.nodes)):
                raise ValueError(f"link {l.id}: unknown endpoint")
            if (l.src, l.dst) in seen:
                raise ValueError(f"link {l.id}: parallel link {l.src}->{l.dst}")
            seen.add((l.src, l.dst))
        for idx, p in enumerate(self.paths):
            if p.id != idx:
                raise ValueError("path ids must be 0..P-1 in order")
            _check_path(p, self.nodes, self.links)
        for n in self.poa_nodes:
            if not 0 <= n < len(self.nodes):
                raise ValueError(f"PoA {n} is not a node")

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_links(self) -> int:
        return len(self.links)

    @property
    def n_paths(self) -> int:
        return len(self.paths)

    @property
    def max_tier(self) -> int:
        return max(n.tier for n in self.nodes)

    def paths_between(self, head: int, tail: int) -> tuple[int, ...]:
        return self._pair_paths.get((head, tail), ())

    def incidence(self, path: int, link: int) -> int:
        return incidence(self.paths[path], link, self.n_links)

    def incidence_matrix(self) -> np.ndarray:
        """Dense (P, L) 0/1 matrix of path-link membership."""
        if self._incidence is None:
            m = np.zeros((self.n_paths, self.n_links), dtype=np.int8)
            for p in self.paths:
                m[p.id, list(p.links)] = 1
            m.setflags(write=False)
            self._incidence = m
        return self._incidence

    def __eq__(self, other):
        if not isinstance(other, Topology):
            return NotImplemented
        return (self.nodes, self.links, self.paths, self.poa_nodes) == \
            (other.nodes, other.links, other.paths, other.poa_nodes)

    def __repr__(self):
        return (f"Topology(N={self.n_nodes}, L={self.n_links}, P={self.n_paths}, "
                f"poa={len(self.poa_nodes)})")

    def to_text(self) -> str:
        lines = [TOPO_HEADER]
        for n in self.nodes:
            lines.append(f"node {n.id} {n.tier} {n.compute_capacity!r} {n.compute_cost!r}")
        for l in self.links:
            lines.append(f"link {l.id} {l.src} {l.dst} {l.bandwidth_capacity!r} {l.link_cost!r}")
        for p in self.paths:
            links = ",".join(map(str, p.links)) or "-"
            lines.append(f"path {p.id} {p.head} {p.tail} {links}")
        lines.append("poa " + " ".join(map(str, self.poa_nodes)))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Topology":
        rows = [ln.split() for ln in text.splitlines() if ln.strip()]
        if not rows or " ".join(rows[0]) != TOPO_HEADER:
            raise ValueError(f"expected header {TOPO_HEADER!r}")
        nodes, links, paths, poa = [], [], [], []
        for row in rows[1:]:
            kind = row[0]
            if kind == "node":
                nodes.append(NodeSpec(int(row[1]), int(row[2]), float(row[3]), float(row[4])))
            elif kind == "link":
                links.append(LinkSpec(int(row[1]), int(row[2]), int(row[3]),
                                      float(row[4]), float(row[5])))
            elif kind == "path":
                ids = () if row[4] == "-" else tuple(int(x) for x in row[4].split(","))
                paths.append(Path(int(row[1]), int(row[2]), int(row[3]), ids))
            elif kind == "poa":
                poa = [int(x) for x in row[1:]]
            else:
                raise ValueError(f"unknown record {kind!r}")
        return cls(nodes, links, paths, poa)


def _check_path(p: Path, nodes, links):
    if not p.links:
        if p.head != p.tail:
            raise ValueError(f"path {p.id}: empty path must have head == tail")
        return
    visited = [p.head]
    at = p.head
    for lid in p.links:
        if not 0 <= lid < len(links):
            raise ValueError(f"path {p.id}: unknown link {lid}")
        link = links[lid]
        if link.src != at:
            raise ValueError(f"path {p.id}: links do not chain at node {at}")
        at = link.dst
        visited.append(at)
    if at != p.tail:
        raise ValueError(f"path {p.id}: ends at {at}, not tail {p.tail}")
    if len(set(visited)) != len(visited):
        raise ValueError(f"path {p.id}: repeated node")


def incidence(path: Path, link: int, n_links: int | None = None) -> int:
    """1 if ``link`` belongs to ``path`` else 0."""
    if link < 0 or (n_links is not None and link >= n_links):
        raise KeyError(f"unknown link {link}")
    return int(link in path.links)


# --------------------------------------------------------------------------
# k-shortest loop-free paths (Yen) under the key (hops, cost, node sequence)
# --------------------------------------------------------------------------

def _adjacency(n_nodes, links):
    adj = [[] for _ in range(n_nodes)]
    for l in links:
        adj[l.src].append((l.dst, l.id, float(l.link_cost)))
    for row in adj:
        row.sort()
    return adj


def _dijkstra(adj, source, target=None, banned_nodes=frozenset(), banned_links=frozenset()):
    """Best label per node where labels are (hops, cost, node_seq, link_seq).

    Lexicographic comparison of labels keeps subpath optimality, so the
    result is the unique minimum under the full key.
    """
    best = {source: (0, 0.0, (source,), ())}
    heap = [best[source]]
    done = set()
    while heap:
        label = heapq.heappop(heap)
        u = label[2][-1]
        if u in done or best.get(u) != label:
            continue
        done.add(u)
        if u == target:
            break
        hops, cost, seq, lseq = label
        for v, lid, c in adj[u]:
            if v in done or v in banned_nodes or lid in banned_links:
                continue
            cand = (hops + 1, cost + c, seq + (v,), lseq + (lid,))
            if v not in best or cand < best[v]:
                best[v] = cand
                heapq.heappush(heap, cand)
    return best


def _yen(adj, source, target, first, k, max_hops):
    found = [first]
    candidates = []
    seen = {first[2]}
    while len(found) < k:
        prev = found[-1]
        prev_nodes, prev_links = prev[2], prev[3]
        for i in range(len(prev_nodes) - 1):
            spur = prev_nodes[i]
            root_nodes = prev_nodes[:i + 1]
            root_links = prev_links[:i]
            banned_links = {f[3][i] for f in found if f[2][:i + 1] == root_nodes}
            banned_nodes = frozenset(root_nodes[:-1])
            labels = _dijkstra(adj, spur, target, banned_nodes, frozenset(banned_links))
            if target not in labels:
                continue
            h2, c2, seq2, lseq2 = labels[target]
            root_cost = _seq_cost(adj, root_nodes, root_links)
            cand = (i + h2, root_cost + c2, root_nodes + seq2[1:], root_links + lseq2)
            if cand[0] > max_hops or cand[2] in seen:
                continue
            seen.add(cand[2])
            heapq.heappush(candidates, cand)
        if not candidates:
            break
        found.append(heapq.heappop(candidates))
    return found


def _seq_cost(adj, nodes, link_ids):
    total = 0.0
    for u, lid in zip(nodes, link_ids):
        total += next(c for v, l, c in adj[u] if l == lid)
    return total


def enumerate_paths(nodes: Sequence[NodeSpec] | int, links: Sequence[LinkSpec], k: int = 3,
                    max_hops: int | None = None, include_self: bool = True) -> PathSet:
    """Up to ``k`` loop-free paths for every ordered pair of distinct nodes.

    Paths of a pair are ordered by hop count, then total link cost, then the
    node-id sequence. With ``include_self`` every node also gets a zero-link
    path to itself, so an instance hosted at the request's own PoA is routable.

    Returns
    -------
    PathSet
        ``paths`` with ids numbered in (head, tail, rank) order and
        ``unreachable`` listing ordered pairs without any path.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    n_nodes = nodes if isinstance(nodes, int) else len(nodes)
    if max_hops is None:
        max_hops = max(n_nodes - 1, 1)
    if max_hops < 1:
        raise ValueError("max_hops must be >= 1")
    adj = _adjacency(n_nodes, links)
    paths: list[Path] = []
    unreachable = []
    for a in range(n_nodes):
        labels = _dijkstra(adj, a)
        for b in range(n_nodes):
            if a == b:
                if include_self:
                    paths.append(Path(len(paths), a, a, ()))
                continue
            if b not in labels or labels[b][0] > max_hops:
                unreachable.append((a, b))
                continue
            for lab in _yen(adj, a, b, labels[b], k, max_hops) if k > 1 else [labels[b]]:
                paths.append(Path(len(paths), a, b, lab[3]))
    return PathSet(paths, unreachable)


# --------------------------------------------------------------------------
# Random tiered topology
# --------------------------------------------------------------------------

def _tier_sizes(n_nodes, tiers):
    weights = np.array([2.0 ** (tiers - 1 - t) for t in range(tiers)])
    sizes = np.maximum(1, np.floor(n_nodes * weights / weights.sum()).astype(int))
    while sizes.sum() > n_nodes:
        sizes[np.argmax(sizes)] -= 1
    sizes[0] += n_nodes - sizes.sum()
    return sizes


def _hop_distance(n_nodes, pairs, sources):
    adj = [[] for _ in range(n_nodes)]
    for a, b in pairs:
        adj[a].append(b)
        adj[b].append(a)
    dist = [math.inf] * n_nodes
    frontier = list(sources)
    for s in frontier:
        dist[s] = 0
    while frontier:
        nxt = []
        for u in frontier:
            for v in adj[u]:
                if dist[v] == math.inf:
                    dist[v] = dist[u] + 1
                    nxt.append(v)
        frontier = nxt
    return dist


def build_topology(n_nodes: int, tiers: int = 3, seed=None,
                   params: TopologyParams | None = None) -> Topology:
    """Draw a strongly connected tiered topology.

    The directed link count is drawn from U{3N, 5N} and clamped to
    [2(N-1), N(N-1)]. A bidirectional spanning tree that walks up the tiers
    guarantees strong connectivity; remaining links join random ordered pairs
    whose tiers differ by at most one (any pair once those run out).

    Tier of a node is its hop distance from the access layer, capped at
    ``tiers - 1``. Capacities scale with ``U(t, t+1)`` and costs with
    ``base ** U(T - t, T - t + 1)`` so the core is richer and cheaper.
    """
    params = params or TopologyParams()
    params.validate()
    if n_nodes < 2:
        raise ValueError("n_nodes must be >= 2")
    if tiers < 1:
        raise ValueError("tiers must be >= 1")
    rng = np.random.default_rng(seed)
    tiers_eff = min(tiers, n_nodes)
    sizes = _tier_sizes(n_nodes, tiers_eff)
    layer = np.repeat(np.arange(tiers_eff), sizes)

    lo, hi = params.links_per_node
    n_links = int(rng.integers(lo * n_nodes, hi * n_nodes + 1))
    n_links = int(np.clip(n_links, 2 * (n_nodes - 1), n_nodes * (n_nodes - 1)))

    pairs: list[tuple[int, int]] = []
    members = [np.flatnonzero(layer == t) for t in range(tiers_eff)]
    for t in range(tiers_eff - 1):
        for v in members[t]:
            parent = int(rng.choice(members[t + 1]))
            pairs += [(int(v), parent), (parent, int(v))]
    top = members[-1]
    for a, b in zip(top[:-1], top[1:]):
        pairs += [(int(a), int(b)), (int(b), int(a))]

    used = set(pairs)
    near, far = [], []
    for a in range(n_nodes):
        for b in range(n_nodes):
            if a != b and (a, b) not in used:
                (near if abs(layer[a] - layer[b]) <= 1 else far).append((a, b))
    need = n_links - len(pairs)
    for pool in (near, far):
        if need <= 0:
            break
        take = min(need, len(pool))
        picks = rng.choice(len(pool), size=take, replace=False)
        pairs += [pool[i] for i in sorted(picks)]
        need -= take

    access = members[0].tolist()
    dist = _hop_distance(n_nodes, pairs, access)
    tier_of = [int(min(d, tiers_eff - 1)) for d in dist]
    t_max = tiers_eff - 1

    nodes = []
    for n in range(n_nodes):
        t = tier_of[n]
        cap = max(1, math.ceil(params.node_capacity_base * rng.uniform(t, t + 1)))
        cost = float(params.node_cost_base ** rng.uniform(t_max - t, t_max - t + 1))
        nodes.append(NodeSpec(n, t, float(cap), cost))
    links = []
    clo, chi = params.link_cost
    blo, bhi = params.link_capacity
    for lid, (a, b) in enumerate(pairs):
        links.append(LinkSpec(lid, a, b, float(rng.integers(blo, bhi + 1)),
                              float(rng.integers(clo, chi + 1))))
    pathset = enumerate_paths(nodes, links, k=params.k_paths, max_hops=params.max_hops)
    return Topology(nodes, links, pathset.paths, [n for n in range(n_nodes) if tier_of[n] == 0])
