"""Ball carving: grow well-separated clusters inside a seed set.

Two variants share a skeleton: start from singleton clusters on the seed
set, run phases in which clusters absorb nearby vertices through accepted
proposals or kill the proposers and stall, and end with clusters whose
pairwise distance exceeds the carving distance, at the price of a small
set of permanently dead vertices (at most |seeds|/x).

carve_distance_k separates to any distance. Each phase recolors all
clusters red/blue, then repeats steps where members of non-stalled
blue clusters flood tokens outward (everyone except blue vertices
forwards the first token they see), red vertices caught by a token
propose to the token's cluster, and a cluster accepts a batch only if it
grows its size by a (1 + 1/ProposalParameter) factor.

carve_fast separates to distance 1 using per-cluster levels and token
counters. Every vertex proposes to an adjacent non-stalled cluster that
is smaller in (level, color) order, blue below red; a cluster accepts a
batch only if the batch is at least ceil(t / (2 * PayPerKill)) where t
is its token counter, gaining one token per accepted vertex; otherwise
it pays PayPerKill tokens per killed proposer and stalls. Stalled
clusters level up at each phase end and get recolored; a finished
cluster sits at the top level.

Both carves run in-process and deterministically. Passing a SimConfig
routes the coloring's token floods through the round engine (identical
results, adds communication metrics to the phase records).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .clusters import ClusterCollection, cluster_components
from .coloring import BLUE, RED, color_red_blue
from .engine import SimConfig
from .errors import CarveError
from .graphs import Graph, log2_ceil, log43_ceil


@dataclass(frozen=True)
class CarveParamsE:
    """Parameters of the distance-k carve, from (n, x, k) only."""

    n: int
    x: int
    k: int
    phases: int
    proposal_parameter: int
    steps: int
    beta_bound: int
    kappa_bound: int

    @staticmethod
    def derive(n: int, x: int, k: int) -> "CarveParamsE":
        phases = log43_ceil(n) + 1
        pp = x * phases
        steps = (pp + 1) * log2_ceil(n)
        return CarveParamsE(
            n=n,
            x=x,
            k=k,
            phases=phases,
            proposal_parameter=pp,
            steps=steps,
            beta_bound=k * phases * steps,
            kappa_bound=2 * phases * min(k, steps),
        )


@dataclass(frozen=True)
class CarveParamsC:
    """Parameters of the levels carve, from (n, x) only."""

    n: int
    x: int
    levels: int
    phases: int
    pay_per_kill: int
    steps: int

    @staticmethod
    def derive(n: int, x: int) -> "CarveParamsC":
        levels = log43_ceil(n) + 1
        phases = 2 * levels + 2 * log2_ceil(n)
        ppk = 4 * phases * x
        params = CarveParamsC(
            n=n, x=x, levels=levels, phases=phases, pay_per_kill=ppk, steps=2 * ppk
        )
        assert params.steps == 8 * x * phases
        return params

    def total_tokens_bound(self, seed_count: int) -> int:
        return 4 * self.phases * seed_count


@dataclass
class PhaseRecord:
    """Per-phase accounting, JSON-friendly via as_dict."""

    phase: int
    steps_run: int
    accepted: int
    killed: int
    dead_total: int
    clusters: int
    max_component: int
    max_radius: int
    max_congestion: int
    max_step_tree_adds: int
    coloring_rounds: int = 0
    tokens_created: int | None = None
    tokens_alive: int | None = None
    max_level: int | None = None
    min_level: int | None = None
    stalled: int = 0

    def as_dict(self) -> dict:
        out = {
            "phase": self.phase,
            "steps_run": self.steps_run,
            "accepted": self.accepted,
            "killed": self.killed,
            "dead_total": self.dead_total,
            "clusters": self.clusters,
            "max_component": self.max_component,
            "max_radius": self.max_radius,
            "max_congestion": self.max_congestion,
            "max_step_tree_adds": self.max_step_tree_adds,
            "coloring_rounds": self.coloring_rounds,
            "stalled": self.stalled,
        }
        if self.tokens_created is not None:
            out["tokens_created"] = self.tokens_created
            out["tokens_alive"] = self.tokens_alive
            out["max_level"] = self.max_level
            out["min_level"] = self.min_level
        return out


def records_to_jsonl(records: list[PhaseRecord]) -> str:
    return "\n".join(json.dumps(r.as_dict(), sort_keys=True) for r in records)


class _CarveState:
    """Clusters, trees and bookkeeping shared by both carve variants."""

    def __init__(self, g: Graph, seeds: list[int]):
        self.g = g
        self.members: dict[int, set[int]] = {}
        self.founder: dict[int, int] = {}
        self.trees: dict[int, list[tuple[int, int]]] = {}
        self.tree_nodes: dict[int, set[int]] = {}
        self.node_cluster: list[int | None] = [None] * g.n
        self.dead: set[int] = set()
        self.edge_adds: dict[tuple[int, int], int] = {}
        for v in seeds:
            cid = g.ids[v]
            self.members[cid] = {v}
            self.founder[cid] = v
            self.trees[cid] = []
            self.tree_nodes[cid] = {v}
            self.node_cluster[v] = cid

    def attach(self, cid: int, v: int, parent: int, step_adds: dict) -> None:
        """Add v under parent in cid's tree; parent must be a tree node."""
        if v in self.tree_nodes[cid]:
            return
        self.trees[cid].append((v, parent))
        self.tree_nodes[cid].add(v)
        key = (v, parent) if v < parent else (parent, v)
        self.edge_adds[key] = self.edge_adds.get(key, 0) + 1
        step_adds.setdefault(key, set()).add(cid)

    def move(self, v: int, cid: int) -> None:
        old = self.node_cluster[v]
        if old is not None:
            self.members[old].discard(v)
        self.members[cid].add(v)
        self.node_cluster[v] = cid

    def kill(self, v: int) -> None:
        old = self.node_cluster[v]
        if old is not None:
            self.members[old].discard(v)
        self.node_cluster[v] = None
        self.dead.add(v)

    def drop_empty(self) -> list[int]:
        gone = [cid for cid, mem in self.members.items() if not mem]
        for cid in gone:
            del self.members[cid]
            del self.founder[cid]
            del self.trees[cid]
            del self.tree_nodes[cid]
        return gone

    def collection(self) -> ClusterCollection:
        return ClusterCollection(
            clusters={cid: frozenset(mem) for cid, mem in self.members.items()},
            leaders=dict(self.founder),
            steiner={cid: frozenset(edges) for cid, edges in self.trees.items()},
            id_bits=self.g.id_bits,
        )

    def max_radius(self) -> int:
        best = 0
        for cid, edges in self.trees.items():
            if not edges:
                continue
            adj: dict[int, list[int]] = {}
            for a, b in edges:
                adj.setdefault(a, []).append(b)
                adj.setdefault(b, []).append(a)
            dist = {self.founder[cid]: 0}
            queue = [self.founder[cid]]
            for u in queue:
                for w in adj.get(u, ()):
                    if w not in dist:
                        dist[w] = dist[u] + 1
                        queue.append(w)
            best = max(best, max(dist.values()))
        return best

    def max_congestion(self) -> int:
        return max(self.edge_adds.values(), default=0)


def _check_seed_set(g: Graph, seeds) -> list[int]:
    out = sorted(set(seeds))
    if out and (out[0] < 0 or out[-1] >= g.n):
        raise CarveError(f"seed set contains nodes outside 0..{g.n - 1}")
    return out


def _distance_k_flood(
    g: Graph, k: int, sources: list[tuple[int, int]], blocked: set[int]
) -> dict[int, tuple[int, int]]:
    """First-token BFS to distance k. sources are (node, cluster id) pairs;
    blocked vertices neither record nor forward. Ties per receiver go to
    the lowest (cluster id, sender index)."""
    visited: dict[int, tuple[int, int]] = {}
    frontier = sources
    for _ in range(k):
        best: dict[int, tuple[int, int]] = {}
        for u, cid in frontier:
            for w in g.neighbors(u):
                if w in blocked or w in visited:
                    continue
                cand = (cid, u)
                if w not in best or cand < best[w]:
                    best[w] = cand
        frontier = []
        for w in sorted(best):
            visited[w] = best[w]
            frontier.append((w, best[w][0]))
    return visited


def carve_distance_k(
    g: Graph,
    seeds,
    k: int,
    x: int,
    cfg: SimConfig | None = None,
    n_hint: int | None = None,
) -> tuple[ClusterCollection, set[int], list[PhaseRecord]]:
    """Carve clusters with pairwise distance > k out of the seed set.

    Guarantees validated by the test suite on every run: at most
    |seeds|/x vertices die, the rest of the seed set is clustered, final
    clusters are pairwise more than k apart, and at the end of phase i
    no group of mutually-within-k clusters has more than
    max(1, (3/4)^i |seeds|) clusters.
    """
    if k < 1:
        raise CarveError(f"carving distance must be >= 1, got {k}")
    if x < 1:
        raise CarveError(f"death budget parameter x must be >= 1, got {x}")
    seeds = _check_seed_set(g, seeds)
    params = CarveParamsE.derive(n_hint or g.n, x, k)
    state = _CarveState(g, seeds)
    records: list[PhaseRecord] = []
    if not seeds:
        return state.collection(), set(), records

    for phase in range(params.phases):
        coloring, _, metrics = color_red_blue(g, state.collection(), k, cfg=cfg)
        stalled: set[int] = set()
        accepted = killed = 0
        max_step_adds = 0
        steps_run = 0

        for _ in range(params.steps):
            active_blue = [
                cid
                for cid in sorted(state.members)
                if coloring[cid] == BLUE and cid not in stalled
            ]
            if not active_blue:
                break
            steps_run += 1

            sources = [
                (v, cid) for cid in active_blue for v in sorted(state.members[cid])
            ]
            blue_vertices = {
                v
                for cid, mem in state.members.items()
                if coloring[cid] == BLUE
                for v in mem
            }
            visited = _distance_k_flood(g, k, sources, blue_vertices)

            proposals: dict[int, list[int]] = {}
            for w in sorted(visited):
                own = state.node_cluster[w]
                if own is not None and coloring[own] == RED:
                    proposals.setdefault(visited[w][0], []).append(w)

            step_adds: dict[tuple[int, int], set[int]] = {}
            for cid in active_blue:
                batch = proposals.get(cid, [])
                if params.proposal_parameter * len(batch) >= len(state.members[cid]):
                    for v in batch:
                        chain = [v]
                        while chain[-1] not in state.tree_nodes[cid]:
                            chain.append(visited[chain[-1]][1])
                        for child, parent in zip(chain, chain[1:]):
                            state.attach(cid, child, parent, step_adds)
                        state.move(v, cid)
                    accepted += len(batch)
                else:
                    for v in batch:
                        state.kill(v)
                    killed += len(batch)
                    stalled.add(cid)
            for adds in step_adds.values():
                assert len(adds) <= 2, "an edge joined more than 2 trees in one step"
                max_step_adds = max(max_step_adds, len(adds))
            for cid in state.drop_empty():
                del coloring[cid]

        comps = cluster_components(g, state.collection(), k)
        records.append(
            PhaseRecord(
                phase=phase,
                steps_run=steps_run,
                accepted=accepted,
                killed=killed,
                dead_total=len(state.dead),
                clusters=len(state.members),
                max_component=max((len(c) for c in comps), default=0),
                max_radius=state.max_radius(),
                max_congestion=state.max_congestion(),
                max_step_tree_adds=max_step_adds,
                coloring_rounds=metrics.rounds_elapsed if metrics else 0,
                stalled=len(stalled),
            )
        )

    return state.collection(), set(state.dead), records


def carve_fast(
    g: Graph,
    seeds,
    x: int,
    cfg: SimConfig | None = None,
    n_hint: int | None = None,
) -> tuple[ClusterCollection, set[int], list[PhaseRecord]]:
    """Carve clusters with pairwise distance > 1 using levels and tokens.

    Validated guarantees: at most |seeds|/x deaths, final separation > 1,
    at most 4 * Phases * |seeds| tokens ever created, every surviving
    cluster at the top level (for n large enough that the doubling
    argument has room), and per-vertex potential 3*phase - 2*level +
    (1 if blue else 0) strictly increasing on every cluster change.
    """
    if x < 1:
        raise CarveError(f"death budget parameter x must be >= 1, got {x}")
    seeds = _check_seed_set(g, seeds)
    params = CarveParamsC.derive(n_hint or g.n, x)
    state = _CarveState(g, seeds)
    records: list[PhaseRecord] = []
    if not seeds:
        return state.collection(), set(), records

    level = {cid: 0 for cid in state.members}
    tokens = {cid: 1 for cid in state.members}
    colors: dict[int, str] = {}
    changed = set(state.members)
    tokens_created = len(seeds)

    def rank(cid: int) -> int:
        return 0 if colors[cid] == BLUE else 1

    for phase in range(params.phases):
        coloring_rounds = 0
        for lev in sorted({level[cid] for cid in changed}):
            group = {cid for cid in changed if level[cid] == lev}
            sub = ClusterCollection(
                clusters={cid: frozenset(state.members[cid]) for cid in group},
                leaders={cid: min(state.members[cid]) for cid in group},
                steiner={cid: frozenset() for cid in group},
                id_bits=g.id_bits,
            )
            fresh, _, metrics = color_red_blue(g, sub, 1, cfg=cfg)
            colors.update(fresh)
            if metrics:
                coloring_rounds += metrics.rounds_elapsed
        changed = set()
        stalled: set[int] = set()
        accepted = killed = 0
        max_step_adds = 0
        steps_run = 0

        for _ in range(params.steps):
            if all(cid in stalled for cid in state.members):
                break
            steps_run += 1

            proposals: dict[int, list[tuple[int, int]]] = {}
            for v in range(g.n):
                own = state.node_cluster[v]
                if own is None:
                    continue
                own_key = (level[own], rank(own))
                best = None
                for w in g.neighbors(v):
                    tgt = state.node_cluster[w]
                    if tgt is None or tgt == own or tgt in stalled:
                        continue
                    key = (level[tgt], rank(tgt), tgt, w)
                    if key[:2] < own_key and (best is None or key < best):
                        best = key
                if best is not None:
                    proposals.setdefault(best[2], []).append((v, best[3]))
                    tokens_created += 1

            step_adds: dict[tuple[int, int], set[int]] = {}
            for cid in sorted(state.members):
                if cid in stalled:
                    continue
                batch = proposals.get(cid, [])
                threshold = -(-tokens[cid] // (2 * params.pay_per_kill))
                if len(batch) >= threshold:
                    for v, w in sorted(batch):
                        old = state.node_cluster[v]
                        assert 2 * level[old] + rank(old) > 2 * level[cid] + rank(
                            cid
                        ), "potential did not increase on a cluster change"
                        state.attach(cid, v, w, step_adds)
                        state.move(v, cid)
                    tokens[cid] += len(batch)
                    accepted += len(batch)
                else:
                    for v, _ in batch:
                        state.kill(v)
                    tokens[cid] -= params.pay_per_kill * len(batch)
                    assert tokens[cid] >= 1, "token counter fell below 1"
                    killed += len(batch)
                    stalled.add(cid)
            for adds in step_adds.values():
                max_step_adds = max(max_step_adds, len(adds))
            for cid in state.drop_empty():
                del level[cid], tokens[cid], colors[cid]
                stalled.discard(cid)

        for cid in sorted(state.members):
            if cid in stalled:
                level[cid] = min(level[cid] + 1, params.levels)
                changed.add(cid)

        comps = cluster_components(g, state.collection(), 1)
        records.append(
            PhaseRecord(
                phase=phase,
                steps_run=steps_run,
                accepted=accepted,
                killed=killed,
                dead_total=len(state.dead),
                clusters=len(state.members),
                max_component=max((len(c) for c in comps), default=0),
                max_radius=state.max_radius(),
                max_congestion=state.max_congestion(),
                max_step_tree_adds=max_step_adds,
                coloring_rounds=coloring_rounds,
                tokens_created=tokens_created,
                tokens_alive=sum(tokens.values()),
                max_level=max(level.values(), default=0),
                min_level=min(level.values(), default=0),
                stalled=len(stalled),
            )
        )

    return state.collection(), set(state.dead), records
