"""Undirected bounded-degree graphs with wide node identifiers.

Also home to the centralized oracles used by validators and reference
checks: BFS distances, power-graph adjacency, and hop-bounded components.
Simulated algorithms never call these; validators and tests do.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

from .errors import GraphFormatError

INF = math.inf

MAX_ID_BITS = 256


def log2_ceil(n: int) -> int:
    """The integer reading of log n used throughout: ceil(log2(max(n, 2)))."""
    return (max(n, 2) - 1).bit_length()


def log43_ceil(n: int) -> int:
    """Smallest i with (4/3)**i >= n, computed exactly in integers."""
    if n <= 1:
        return 0
    i = 0
    num = 1  # 4**i
    den = 1  # 3**i
    while num < n * den:
        i += 1
        num *= 4
        den *= 3
    return i


@dataclass(frozen=True)
class Graph:
    """Immutable simple graph. Nodes are indices 0..n-1; each node also has a
    distinct identifier of at most id_bits bits, which is what the simulated
    algorithms see."""

    n: int
    adj: tuple[tuple[int, ...], ...]
    ids: tuple[int, ...]
    id_bits: int
    _edge_set: frozenset[tuple[int, int]] = field(repr=False)

    @staticmethod
    def build(
        n: int,
        edges: list[tuple[int, int]],
        ids: list[int] | None = None,
        id_bits: int | None = None,
    ) -> "Graph":
        if n < 1:
            raise GraphFormatError(f"graph needs at least one node, got n={n}")
        seen: set[tuple[int, int]] = set()
        neigh: list[list[int]] = [[] for _ in range(n)]
        for u, v in edges:
            if not (0 <= u < n and 0 <= v < n):
                raise GraphFormatError(f"edge ({u}, {v}) out of range for n={n}")
            if u == v:
                raise GraphFormatError(f"self-loop at node {u}")
            key = (u, v) if u < v else (v, u)
            if key in seen:
                raise GraphFormatError(f"duplicate edge ({key[0]}, {key[1]})")
            seen.add(key)
            neigh[u].append(v)
            neigh[v].append(u)
        if ids is None:
            ids = list(range(n))
        if len(ids) != n:
            raise GraphFormatError(f"expected {n} identifiers, got {len(ids)}")
        if len(set(ids)) != n:
            raise GraphFormatError("node identifiers must be distinct")
        if id_bits is None:
            id_bits = max(2 * log2_ceil(n), max(ids).bit_length() if ids else 1)
        if id_bits > MAX_ID_BITS:
            raise GraphFormatError(f"id_bits {id_bits} exceeds the {MAX_ID_BITS} cap")
        for x in ids:
            if x < 0 or x.bit_length() > id_bits:
                raise GraphFormatError(f"identifier {x} does not fit in {id_bits} bits")
        return Graph(
            n=n,
            adj=tuple(tuple(sorted(a)) for a in neigh),
            ids=tuple(ids),
            id_bits=id_bits,
            _edge_set=frozenset(seen),
        )

    @property
    def m(self) -> int:
        return len(self._edge_set)

    @property
    def max_degree(self) -> int:
        return max((len(a) for a in self.adj), default=0)

    def degree(self, v: int) -> int:
        return len(self.adj[v])

    def neighbors(self, v: int) -> tuple[int, ...]:
        return self.adj[v]

    def has_edge(self, u: int, v: int) -> bool:
        return ((u, v) if u < v else (v, u)) in self._edge_set

    def edges(self) -> list[tuple[int, int]]:
        return sorted(self._edge_set)

    def induced(self, nodes: "frozenset[int] | set[int]") -> "tuple[Graph, dict[int, int]]":
        """Induced subgraph on the given nodes, keeping original identifiers.

        Returns the subgraph plus a mapping from original node index to the
        index inside the subgraph.
        """
        order = sorted(nodes)
        back = {u: i for i, u in enumerate(order)}
        sub_edges = [
            (back[u], back[v])
            for (u, v) in self._edge_set
            if u in back and v in back
        ]
        sub = Graph.build(
            n=len(order),
            edges=sub_edges,
            ids=[self.ids[u] for u in order],
            id_bits=self.id_bits,
        )
        return sub, back


def load_graph(text: str) -> Graph:
    """Parse the plain edge-list format.

    First non-comment line is "n m", followed by m lines "u v". An optional
    block of lines "id u value" assigns identifiers. Lines starting with '#'
    and blank lines are ignored.
    """
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise GraphFormatError("empty graph description")
    head = lines[0].split()
    if len(head) != 2:
        raise GraphFormatError(f"header must be 'n m', got {lines[0]!r}")
    try:
        n, m = int(head[0]), int(head[1])
    except ValueError as exc:
        raise GraphFormatError(f"header must be two integers, got {lines[0]!r}") from exc
    if m < 0:
        raise GraphFormatError(f"negative edge count {m}")
    if len(lines) < 1 + m:
        raise GraphFormatError(f"expected {m} edge lines, found {len(lines) - 1}")
    edges: list[tuple[int, int]] = []
    for ln in lines[1 : 1 + m]:
        parts = ln.split()
        if len(parts) != 2:
            raise GraphFormatError(f"edge line must be 'u v', got {ln!r}")
        try:
            edges.append((int(parts[0]), int(parts[1])))
        except ValueError as exc:
            raise GraphFormatError(f"edge line must be two integers, got {ln!r}") from exc
    ids: list[int] | None = None
    rest = lines[1 + m :]
    if rest:
        ids = list(range(n))
        assigned = set()
        for ln in rest:
            parts = ln.split()
            if len(parts) != 3 or parts[0] != "id":
                raise GraphFormatError(f"trailing line is not an 'id u value' entry: {ln!r}")
            try:
                u, value = int(parts[1]), int(parts[2])
            except ValueError as exc:
                raise GraphFormatError(f"bad id line {ln!r}") from exc
            if not 0 <= u < n:
                raise GraphFormatError(f"id line for out-of-range node {u}")
            if u in assigned:
                raise GraphFormatError(f"duplicate id line for node {u}")
            assigned.add(u)
            ids[u] = value
    return Graph.build(n, edges, ids)


def save_graph(g: Graph) -> str:
    """Serialize in canonical order: sorted edges, then one id line per node.

    load(save(g)) reproduces the same canonical bytes.
    """
    out = [f"{g.n} {g.m}"]
    out.extend(f"{u} {v}" for u, v in g.edges())
    out.extend(f"id {u} {g.ids[u]}" for u in range(g.n))
    return "\n".join(out) + "\n"


@dataclass(frozen=True)
class DistanceOracle:
    """Hop distances from a source set; unreachable nodes sit at infinity."""

    sources: frozenset[int]
    dist: tuple[float, ...]

    def __getitem__(self, v: int) -> float:
        return self.dist[v]


def bfs_distances(g: Graph, sources: "set[int] | frozenset[int] | list[int]") -> DistanceOracle:
    src = sorted(set(sources))
    if not src:
        raise GraphFormatError("bfs_distances needs a non-empty source set")
    for s in src:
        if not 0 <= s < g.n:
            raise GraphFormatError(f"source {s} out of range")
    dist: list[float] = [INF] * g.n
    q: deque[int] = deque()
    for s in src:
        dist[s] = 0
        q.append(s)
    while q:
        u = q.popleft()
        du = dist[u]
        for w in g.adj[u]:
            if dist[w] == INF:
                dist[w] = du + 1
                q.append(w)
    return DistanceOracle(sources=frozenset(src), dist=tuple(dist))


def power_adjacent(g: Graph, u: int, v: int, k: int) -> bool:
    """True iff u != v and their hop distance is at most k (adjacency in G**k)."""
    if k < 1:
        raise GraphFormatError(f"power_adjacent needs k >= 1, got {k}")
    if not (0 <= u < g.n and 0 <= v < g.n):
        raise GraphFormatError("node out of range")
    if u == v:
        return False
    # truncated BFS from u
    dist = {u: 0}
    q = deque([u])
    while q:
        w = q.popleft()
        dw = dist[w]
        if dw == k:
            continue
        for x in g.adj[w]:
            if x not in dist:
                if x == v:
                    return True
                dist[x] = dw + 1
                q.append(x)
    return False


def components_under(
    g: Graph, nodes: "set[int] | frozenset[int]", k: int
) -> list[frozenset[int]]:
    """Partition `nodes` into classes connected by chains of hop-<=k links.

    A link between two marked nodes may run through arbitrary intermediate
    nodes of the graph; only its endpoints need to be marked. k=1 on a full
    node set is the ordinary connected-components relation.
    """
    if k < 1:
        raise GraphFormatError(f"components_under needs k >= 1, got {k}")
    marked = set(nodes)
    for v in marked:
        if not 0 <= v < g.n:
            raise GraphFormatError(f"marked node {v} out of range")
    unseen = set(marked)
    comps: list[frozenset[int]] = []
    while unseen:
        seed = min(unseen)
        comp = {seed}
        unseen.discard(seed)
        frontier = [seed]
        while frontier:
            # expand a hop-k ball around the current frontier of marked nodes
            dist = {v: 0 for v in frontier}
            q = deque(frontier)
            frontier = []
            while q:
                w = q.popleft()
                dw = dist[w]
                if dw == k:
                    continue
                for x in g.adj[w]:
                    if x not in dist:
                        dist[x] = dw + 1
                        q.append(x)
                        if x in unseen:
                            comp.add(x)
                            unseen.discard(x)
                            frontier.append(x)
        comps.append(frozenset(comp))
    comps.sort(key=min)
    return comps
