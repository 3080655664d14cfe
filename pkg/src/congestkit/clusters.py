"""Cluster collections: disjoint node clusters with leaders and oriented
connection trees.

A collection assigns some of the graph's nodes to disjoint clusters. Each
cluster has a leader and a connection tree: a tree of graph edges, oriented
child-to-parent toward the leader, that contains every member. Non-member
nodes may sit on a tree as pass-throughs, and trees of different clusters
may overlap on nodes and edges. The two load parameters are the maximum
tree diameter (beta) and the maximum number of distinct trees sharing one
edge (kappa).
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass

from .errors import CollectionError, GraphFormatError
from .graphs import Graph

INF = math.inf


@dataclass(frozen=True)
class ClusterCollection:
    """clusters: cluster id -> member set; leaders: cluster id -> node;
    steiner: cluster id -> set of (child, parent) oriented tree edges."""

    clusters: dict[int, frozenset[int]]
    leaders: dict[int, int]
    steiner: dict[int, frozenset[tuple[int, int]]]
    id_bits: int

    def cluster_ids(self) -> list[int]:
        return sorted(self.clusters)

    def member_of(self) -> dict[int, int]:
        """node -> cluster id over all members."""
        out: dict[int, int] = {}
        for cid, members in self.clusters.items():
            for v in members:
                out[v] = cid
        return out

    def covered(self) -> frozenset[int]:
        out: set[int] = set()
        for members in self.clusters.values():
            out.update(members)
        return frozenset(out)

    def tree_nodes(self, cid: int) -> frozenset[int]:
        nodes = {self.leaders[cid]} | set(self.clusters[cid])
        for c, p in self.steiner[cid]:
            nodes.add(c)
            nodes.add(p)
        return frozenset(nodes)

    def to_json(self) -> str:
        doc = {
            "id_bits": self.id_bits,
            "clusters": {str(c): sorted(m) for c, m in sorted(self.clusters.items())},
            "leaders": {str(c): l for c, l in sorted(self.leaders.items())},
            "steiner_edges": {
                str(c): sorted([list(e) for e in edges])
                for c, edges in sorted(self.steiner.items())
            },
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "ClusterCollection":
        doc = json.loads(text)
        try:
            clusters = {int(c): frozenset(m) for c, m in doc["clusters"].items()}
            leaders = {int(c): int(l) for c, l in doc["leaders"].items()}
            steiner = {
                int(c): frozenset((int(a), int(b)) for a, b in edges)
                for c, edges in doc["steiner_edges"].items()
            }
            id_bits = int(doc["id_bits"])
        except (KeyError, TypeError, ValueError) as exc:
            raise CollectionError("serialization", None, f"bad collection document: {exc}")
        return ClusterCollection(clusters, leaders, steiner, id_bits)


def singleton_collection(g: Graph, nodes: "set[int] | frozenset[int]") -> ClusterCollection:
    """One cluster per node, the node's identifier as the cluster id."""
    clusters = {g.ids[v]: frozenset([v]) for v in nodes}
    leaders = {g.ids[v]: v for v in nodes}
    steiner = {g.ids[v]: frozenset() for v in nodes}
    return ClusterCollection(clusters, leaders, steiner, g.id_bits)


@dataclass(frozen=True)
class CollectionStats:
    """Measured load parameters of a validated collection."""

    steiner_radius: int          # max tree diameter over clusters
    congestion: int              # max number of distinct trees on one edge
    node_congestion: int         # max number of distinct trees through one node
    min_cluster_distance: float  # inf when fewer than two clusters meet
    max_cluster_size: int


def _tree_diameter(nodes: set[int], adj: dict[int, list[int]]) -> int:
    """Diameter of a tree given its adjacency, by double sweep."""
    if len(nodes) <= 1:
        return 0
    start = min(nodes)

    def far(s: int) -> tuple[int, int]:
        dist = {s: 0}
        q = deque([s])
        best = (0, s)
        while q:
            u = q.popleft()
            for w in adj[u]:
                if w not in dist:
                    dist[w] = dist[u] + 1
                    if dist[w] > best[0]:
                        best = (dist[w], w)
                    q.append(w)
        return best

    _, a = far(start)
    d, _ = far(a)
    return d


def validate_collection(g: Graph, cc: ClusterCollection) -> CollectionStats:
    """Check every structural invariant; raise CollectionError naming the
    first violated one, otherwise return measured stats."""
    if set(cc.clusters) != set(cc.leaders) or set(cc.clusters) != set(cc.steiner):
        raise CollectionError("key-mismatch", None, "clusters, leaders, steiner must share keys")
    if cc.id_bits < 1:
        raise CollectionError("id-bits", cc.id_bits, "id_bits must be positive")
    for cid in cc.clusters:
        if cid < 0 or cid.bit_length() > cc.id_bits:
            raise CollectionError(
                "id-width", cid, f"cluster id {cid} does not fit in {cc.id_bits} bits"
            )

    seen: dict[int, int] = {}
    for cid, members in cc.clusters.items():
        if not members:
            raise CollectionError("empty-cluster", cid, f"cluster {cid} has no members")
        for v in members:
            if not 0 <= v < g.n:
                raise CollectionError("node-range", v, f"member {v} outside the graph")
            if v in seen:
                raise CollectionError(
                    "disjointness", v, f"node {v} in clusters {seen[v]} and {cid}"
                )
            seen[v] = cid

    edge_load: dict[tuple[int, int], int] = {}
    node_load: dict[int, int] = {}
    max_diameter = 0
    for cid in sorted(cc.clusters):
        members = cc.clusters[cid]
        leader = cc.leaders[cid]
        edges = cc.steiner[cid]
        if not 0 <= leader < g.n:
            raise CollectionError("leader-range", leader, f"leader {leader} outside the graph")
        adj: dict[int, list[int]] = {}
        parent: dict[int, int] = {}
        for child, par in edges:
            if not g.has_edge(child, par):
                raise CollectionError(
                    "edge-not-in-graph", (child, par), f"tree edge ({child}, {par}) absent from G"
                )
            if child in parent:
                raise CollectionError(
                    "orientation", child, f"node {child} has two parents in tree {cid}"
                )
            parent[child] = par
            adj.setdefault(child, []).append(par)
            adj.setdefault(par, []).append(child)
        tnodes = set(adj) | {leader} | set(members)
        if edges and len(edges) != len(set(adj)) - 1:
            raise CollectionError(
                "tree-structure", cid, f"tree {cid} edge count does not match a tree"
            )
        if leader in parent:
            raise CollectionError("orientation", leader, f"leader {leader} has a parent")
        # every tree node must reach the leader through parent pointers
        for v in sorted(tnodes):
            hops = 0
            w = v
            while w != leader:
                if w not in parent or hops > g.n:
                    raise CollectionError(
                        "tree-structure",
                        v,
                        f"node {v} cannot reach leader {leader} in tree {cid}",
                    )
                w = parent[w]
                hops += 1
        for v in members:
            if v not in tnodes:
                raise CollectionError(
                    "terminal-coverage", v, f"member {v} missing from tree {cid}"
                )
        for child, par in edges:
            ekey = (child, par) if child < par else (par, child)
            edge_load[ekey] = edge_load.get(ekey, 0) + 1
        for v in set(adj):
            node_load[v] = node_load.get(v, 0) + 1
        max_diameter = max(max_diameter, _tree_diameter(set(adj) | {leader}, adj))

    return CollectionStats(
        steiner_radius=max_diameter,
        congestion=max(edge_load.values(), default=0),
        node_congestion=max(node_load.values(), default=0),
        min_cluster_distance=min_cluster_distance(g, cc),
        max_cluster_size=max((len(m) for m in cc.clusters.values()), default=0),
    )


def _voronoi(g: Graph, cc: ClusterCollection) -> tuple[list[int | None], list[float]]:
    """Nearest-cluster labeling: label[v] = cluster id of the closest member
    node (ties to the smaller cluster id), dist[v] = hops to it."""
    label: list[int | None] = [None] * g.n
    dist: list[float] = [INF] * g.n
    frontier: list[int] = []
    for cid in sorted(cc.clusters):
        for v in cc.clusters[cid]:
            label[v] = cid
            dist[v] = 0
            frontier.append(v)
    d = 0
    while frontier:
        nxt: dict[int, int] = {}
        for u in sorted(frontier, key=lambda x: (label[x], x)):
            for w in g.adj[u]:
                if label[w] is None:
                    cur = nxt.get(w)
                    if cur is None or label[u] < cur:
                        nxt[w] = label[u]
        frontier = []
        d += 1
        for w, lab in nxt.items():
            label[w] = lab
            dist[w] = d
            frontier.append(w)
    return label, dist


def min_cluster_distance(g: Graph, cc: ClusterCollection) -> float:
    """Smallest hop distance between members of two different clusters.

    Exact: on a shortest path between the closest pair, some edge has
    differently-labeled endpoints, and there the label distances sum to the
    true distance; every differently-labeled edge gives a distance of some
    pair, so the minimum over edges is the minimum over pairs.
    """
    if len(cc.clusters) < 2:
        return INF
    label, dist = _voronoi(g, cc)
    best = INF
    for u, v in g.edges():
        if label[u] is not None and label[v] is not None and label[u] != label[v]:
            best = min(best, dist[u] + dist[v] + 1)
    return best


def cluster_components(g: Graph, cc: ClusterCollection, k: int) -> list[frozenset[int]]:
    """Components of the cluster graph where two clusters are linked iff
    their member distance is at most k. Union of Voronoi-touching edges;
    chains of touching cells along any short path keep components exact."""
    if k < 1:
        raise GraphFormatError(f"cluster_components needs k >= 1, got {k}")
    cids = sorted(cc.clusters)
    if not cids:
        return []
    parent = {c: c for c in cids}

    def find(c: int) -> int:
        while parent[c] != c:
            parent[c] = parent[parent[c]]
            c = parent[c]
        return c

    def union(a: int, b: int) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            if ra > rb:
                ra, rb = rb, ra
            parent[rb] = ra

    label, dist = _voronoi(g, cc)
    for u, v in g.edges():
        lu, lv = label[u], label[v]
        if lu is not None and lv is not None and lu != lv and dist[u] + dist[v] + 1 <= k:
            union(lu, lv)
    groups: dict[int, set[int]] = {}
    for c in cids:
        groups.setdefault(find(c), set()).add(c)
    return sorted((frozenset(s) for s in groups.values()), key=min)


def isolated_clusters(g: Graph, cc: ClusterCollection, k: int) -> frozenset[int]:
    """Clusters with no other cluster within hop distance k (oracle view)."""
    singles = {next(iter(comp)) for comp in cluster_components(g, cc, k) if len(comp) == 1}
    return frozenset(singles)


@dataclass(frozen=True)
class TreeView:
    """One node's view of one connection tree it participates in."""

    cid: int
    parent: int | None           # None at the root (leader)
    children: tuple[int, ...]
    is_member: bool
    is_leader: bool
    # members carry an in-cluster index; interior nodes carry, per child,
    # the contiguous index interval served through that child subtree.
    member_index: int | None
    child_intervals: tuple[tuple[int, int], ...]
    own_interval: tuple[int, int]


def build_tree_views(g: Graph, cc: ClusterCollection) -> dict[int, dict[int, TreeView]]:
    """Per-node, per-cluster tree roles, with in-cluster member numbering.

    Member indices come from a depth-first walk of each tree from its
    leader, visiting children in node order, numbering members as they are
    first reached. Each subtree therefore serves a contiguous index range,
    which is what downward routing uses.
    """
    views: dict[int, dict[int, TreeView]] = {}
    for cid in sorted(cc.clusters):
        members = cc.clusters[cid]
        leader = cc.leaders[cid]
        kids: dict[int, list[int]] = {}
        parent: dict[int, int | None] = {leader: None}
        for child, par in cc.steiner[cid]:
            kids.setdefault(par, []).append(child)
            parent[child] = par
        for v in kids:
            kids[v].sort()

        member_index: dict[int, int] = {}
        intervals: dict[int, tuple[int, int]] = {}
        counter = 0
        # iterative depth-first walk; recursion depth could hit tree height
        stack: list[tuple[int, int]] = [(leader, 0)]
        lo_at: dict[int, int] = {}
        while stack:
            v, stage = stack.pop()
            if stage == 0:
                lo_at[v] = counter
                if v in members:
                    member_index[v] = counter
                    counter += 1
                stack.append((v, 1))
                for w in reversed(kids.get(v, [])):
                    stack.append((w, 0))
            else:
                intervals[v] = (lo_at[v], counter)

        for v in sorted(parent):
            child_iv = tuple(intervals[w] for w in kids.get(v, []))
            views.setdefault(v, {})[cid] = TreeView(
                cid=cid,
                parent=parent[v],
                children=tuple(kids.get(v, [])),
                is_member=v in members,
                is_leader=v == leader,
                member_index=member_index.get(v),
                child_intervals=child_iv,
                own_interval=intervals[v],
            )
    return views


def edge_tree_index(
    g: Graph, cc: ClusterCollection
) -> dict[tuple[int, int], tuple[int, ...]]:
    """For each undirected edge, the sorted cluster ids whose tree uses it.
    Message frames address a tree by its position in this list."""
    out: dict[tuple[int, int], set[int]] = {}
    for cid in sorted(cc.steiner):
        for child, par in cc.steiner[cid]:
            ekey = (child, par) if child < par else (par, child)
            out.setdefault(ekey, set()).add(cid)
    return {e: tuple(sorted(s)) for e, s in out.items()}
