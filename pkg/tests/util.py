"""Shared builders for test graphs and collections. Seeded and
deterministic."""

from __future__ import annotations

import random

from congestkit.clusters import ClusterCollection
from congestkit.graphs import Graph


def path_graph(n: int) -> Graph:
    return Graph.build(n, [(i, i + 1) for i in range(n - 1)])


def cycle_graph(n: int) -> Graph:
    edges = [(i, (i + 1) % n) for i in range(n)]
    return Graph.build(n, edges)


def grid_graph(rows: int, cols: int) -> Graph:
    def idx(r: int, c: int) -> int:
        return r * cols + c

    edges = []
    for r in range(rows):
        for c in range(cols):
            if c + 1 < cols:
                edges.append((idx(r, c), idx(r, c + 1)))
            if r + 1 < rows:
                edges.append((idx(r, c), idx(r + 1, c)))
    return Graph.build(rows * cols, edges)


def star_graph(n: int) -> Graph:
    return Graph.build(n, [(0, i) for i in range(1, n)])


def circulant_graph(n: int, offsets: list[int]) -> Graph:
    """Ring with chords: i adjacent to i +- o (mod n) for each offset.
    Degree 2*len(offsets) when n > 2*max(offsets)."""
    edges = set()
    for i in range(n):
        for o in offsets:
            j = (i + o) % n
            edges.add((i, j) if i < j else (j, i))
    return Graph.build(n, sorted(edges))


def complete_graph(n: int) -> Graph:
    return Graph.build(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def gnp_graph(n: int, p: float, seed: int) -> Graph:
    rng = random.Random(seed)
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p]
    return Graph.build(n, edges)


def regular_graph(n: int, d: int, seed: int) -> Graph:
    """d-regular graph by repeated pairing; retries until simple."""
    rng = random.Random(seed)
    assert n * d % 2 == 0
    for _ in range(10000):
        stubs = [v for v in range(n) for _ in range(d)]
        rng.shuffle(stubs)
        edges = set()
        ok = True
        for i in range(0, len(stubs), 2):
            u, v = stubs[i], stubs[i + 1]
            if u == v:
                ok = False
                break
            key = (u, v) if u < v else (v, u)
            if key in edges:
                ok = False
                break
            edges.add(key)
        if ok:
            return Graph.build(n, sorted(edges))
    raise AssertionError(f"could not sample a simple {d}-regular graph on {n} nodes")


def random_collection(n: int, seed: int, overlap: int = 1):
    """A random graph plus a random valid collection on it.

    Clusters are grown as BFS trees from random seeds over a random subset
    of nodes; with overlap > 1, extra pass-through nodes are grafted onto
    each tree so trees touch more of the graph.
    """
    rng = random.Random(seed)
    g = gnp_graph(n, min(1.0, 3.0 / max(n - 1, 1)), rng.randrange(2**32))
    k = rng.randint(1, max(1, n // 3))
    seeds = rng.sample(range(n), k)
    label = {}
    parent = {}
    for s in seeds:
        label[s] = s
    frontier = list(seeds)
    while frontier:
        nxt = []
        for u in sorted(frontier, key=lambda x: (label[x], x)):
            for w in g.adj[u]:
                if w not in label and rng.random() < 0.8:
                    label[w] = label[u]
                    parent[w] = u
                    nxt.append(w)
        frontier = nxt
    clusters = {}
    steiner = {}
    leaders = {}
    for i, s in enumerate(sorted(seeds)):
        members = frozenset(v for v in label if label[v] == s)
        clusters[i] = members
        steiner[i] = set((v, parent[v]) for v in members if v in parent)
        leaders[i] = s
    for i in sorted(clusters):
        for _ in range(overlap - 1):
            tree_nodes = {leaders[i]} | {a for e in steiner[i] for a in e}
            candidates = [
                (u, w)
                for u in sorted(tree_nodes)
                for w in g.adj[u]
                if w not in tree_nodes
            ]
            if not candidates:
                break
            u_on, w_new = rng.choice(candidates)
            steiner[i].add((w_new, u_on))
    cc = ClusterCollection(
        clusters={i: frozenset(m) for i, m in clusters.items()},
        leaders=leaders,
        steiner={i: frozenset(s) for i, s in steiner.items()},
        id_bits=max(1, (max(clusters) if clusters else 1).bit_length()),
    )
    return g, cc


def stacked_collection(n: int, stack: int, seed: int):
    """Collection with congestion exactly `stack`: single-member clusters
    whose trees all run along one shared backbone path to a common leader."""
    assert 2 <= stack < n
    rng = random.Random(seed)
    backbone = [(i, i + 1) for i in range(n - 1)]
    chords = [
        (i, j)
        for i in range(n)
        for j in range(i + 2, n)
        if rng.random() < 1.5 / n
    ]
    g = Graph.build(n, backbone + chords)
    clusters = {}
    leaders = {}
    steiner = {}
    for i in range(stack):
        clusters[i] = frozenset({i})
        leaders[i] = n - 1
        steiner[i] = frozenset((j, j + 1) for j in range(i, n - 1))
    cc = ClusterCollection(
        clusters=clusters,
        leaders=leaders,
        steiner=steiner,
        id_bits=max(1, (stack - 1).bit_length()),
    )
    return g, cc


def floyd_warshall(g: Graph) -> list[list[float]]:
    """Reference all-pairs distances, O(n^3); the oracle the BFS code is
    checked against."""
    inf = float("inf")
    d = [[inf] * g.n for _ in range(g.n)]
    for v in range(g.n):
        d[v][v] = 0
    for u, v in g.edges():
        d[u][v] = 1
        d[v][u] = 1
    for k in range(g.n):
        dk = d[k]
        for i in range(g.n):
            dik = d[i][k]
            if dik == inf:
                continue
            di = d[i]
            for j in range(g.n):
                alt = dik + dk[j]
                if alt < di[j]:
                    di[j] = alt
    return d
