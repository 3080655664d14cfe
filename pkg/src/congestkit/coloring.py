"""Balanced red/blue coloring of a cluster collection.

Two stages. First a connecting structure: every member of every cluster
floods a token carrying its cluster id for `reach` rounds, under strict
per-edge caps (at most two tokens ever cross an edge in each direction,
with distinct ids), and each non-isolated cluster then selects one short
path to a nearby cluster by backtracking the remembered arrival edges of
one received token. Second a coloring pass over the resulting selection
digraph: clusters with many incoming paths hand out alternating colors
to their selectors in balanced batches, the sparse rest is grouped into
stars via an MIS on the square of the leftover selection graph, and every
group is colored half-and-half rounding toward blue. The result gives
every group of nearby clusters a blue fraction between one half and
three quarters.

The token flood runs either as a pure in-process computation or on the
round engine (same rules, one program per node); both produce identical
receipt tables. The grouping stages run in-process: they touch only the
selection digraph, whose per-cluster degree observations the structure
already paid for.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .bitio import BitReader, BitWriter
from .clusters import ClusterCollection, cluster_components, isolated_clusters
from .engine import Message, NodeProgram, RoundMetrics, SimConfig, run
from .errors import StructureError
from .graphs import Graph
from .linial import color_by_ids, mis_from_coloring, square_adjacency

RED = "red"
BLUE = "blue"

# A cluster is heavy when at least this many selection paths point at it.
HEAVY_THRESHOLD = 12

# Each back-route reuses an edge some token crossed during the flood; at
# most two token ids per direction means at most this many trees share an
# edge.
MAX_TREES_PER_EDGE = 4


@dataclass(frozen=True)
class PathSelection:
    """One cluster's selected path to a nearby cluster.

    path runs leaf (a member of `cluster`) to root (a member of `target`),
    consecutive nodes adjacent in the graph.
    """

    cluster: int
    target: int
    leaf: int
    root: int
    path: tuple[int, ...]


@dataclass(frozen=True)
class ConnectingStructure:
    reach: int
    isolated: frozenset[int]
    selections: dict[int, PathSelection]
    edge_trees: dict[tuple[int, int], frozenset[int]]

    def incoming(self) -> dict[int, list[int]]:
        """Selecting clusters per target, ascending."""
        table: dict[int, list[int]] = {}
        for cid in sorted(self.selections):
            table.setdefault(self.selections[cid].target, []).append(cid)
        return table


def _membership(cc: ClusterCollection) -> dict[int, int]:
    owner: dict[int, int] = {}
    for cid, members in cc.clusters.items():
        for v in members:
            owner[v] = cid
    return owner


def _token_wave_central(
    g: Graph, owner: dict[int, int], reach: int
) -> list[dict[int, tuple[int, int]]]:
    """Receipt tables of the token flood: node -> {token id: (round, sender)}.

    Flood rules, applied in lockstep rounds:
      - round 1 delivers one token per covered node to each neighbor,
        carrying the node's cluster id;
      - a node forwards a token only on first receipt, to every edge except
        the arrival edge, and only while the receipt round is below reach;
      - a direction of an edge carries at most two tokens ever, with
        distinct ids;
      - tokens carrying the receiving node's own cluster id are dropped.
    Same-round arrivals are processed in ascending (token id, sender) order,
    so the remembered sender of a token is the lowest-numbered one.
    """
    receipts: list[dict[int, tuple[int, int]]] = [{} for _ in range(g.n)]
    sent: dict[tuple[int, int], list[int]] = {}
    pending: list[tuple[int, int, int]] = []

    def try_send(u: int, w: int, tok: int) -> None:
        load = sent.setdefault((u, w), [])
        if len(load) < 2 and tok not in load:
            load.append(tok)
            pending.append((u, w, tok))

    for v in range(g.n):
        cid = owner.get(v)
        if cid is None:
            continue
        for w in g.neighbors(v):
            try_send(v, w, cid)

    for rnd in range(1, reach + 1):
        arrivals = sorted((tok, w, u) for u, w, tok in pending)
        pending = []
        for tok, w, u in arrivals:
            if owner.get(w) == tok or tok in receipts[w]:
                continue
            receipts[w][tok] = (rnd, u)
            if rnd < reach:
                for x in g.neighbors(w):
                    if x != u:
                        try_send(w, x, tok)
    return receipts


class _TokenWaveProgram(NodeProgram):
    """Engine twin of the central flood. One message per direction per
    round: a 1-bit count header followed by one or two cluster ids."""

    def __init__(self, node: int, cid: int | None, id_bits: int, reach: int):
        self.node = node
        self.cid = cid
        self.id_bits = id_bits
        self.reach = reach
        self.receipts: dict[int, tuple[int, int]] = {}
        self._last = -1

    def init(self, ctx) -> None:
        super().init(ctx)
        self._sent: dict[int, list[int]] = {w: [] for w in ctx.neighbors}
        self._outgoing: dict[int, list[int]] = {}

    def _try_send(self, w: int, tok: int) -> None:
        load = self._sent[w]
        if len(load) < 2 and tok not in load:
            load.append(tok)
            self._outgoing.setdefault(w, []).append(tok)

    def on_round(self, rnd: int, inbox: dict[int, Message]) -> dict[int, Message]:
        self._last = rnd
        if rnd == 0:
            if self.cid is not None:
                for w in self.ctx.neighbors:
                    self._try_send(w, self.cid)
        else:
            arrivals = []
            for sender, msg in inbox.items():
                reader = BitReader(msg.value, msg.bits)
                for _ in range(reader.read(1) + 1):
                    arrivals.append((reader.read(self.id_bits), sender))
            for tok, sender in sorted(arrivals):
                if tok == self.cid or tok in self.receipts:
                    continue
                self.receipts[tok] = (rnd, sender)
                if rnd < self.reach:
                    for x in self.ctx.neighbors:
                        if x != sender:
                            self._try_send(x, tok)
        outbox = {}
        for w, toks in self._outgoing.items():
            writer = BitWriter()
            writer.append(len(toks) - 1, 1)
            for tok in toks:
                writer.append(tok, self.id_bits)
            outbox[w] = Message(writer.value, writer.bits)
        self._outgoing = {}
        return outbox

    def finished(self) -> bool:
        return self._last >= self.reach

    def output(self) -> object:
        return self.receipts


def _token_wave_engine(
    g: Graph, owner: dict[int, int], token_bits: int, reach: int, cfg: SimConfig
) -> tuple[list[dict[int, tuple[int, int]]], RoundMetrics]:
    frame = 1 + 2 * token_bits
    bw = cfg.effective_bandwidth
    if bw is not None and bw < frame:
        raise StructureError(
            f"token flood needs bandwidth >= {frame} bits "
            f"(1-bit count plus two ids), got {bw}"
        )
    outs, metrics = run(
        g,
        lambda v: _TokenWaveProgram(v, owner.get(v), token_bits, reach),
        cfg,
    )
    return list(outs), metrics


def _backtrack(
    owner: dict[int, int],
    receipts: list[dict[int, tuple[int, int]]],
    leaf: int,
    tok: int,
) -> tuple[int, ...]:
    path = [leaf]
    cur = leaf
    while tok in receipts[cur]:
        cur = receipts[cur][tok][1]
        path.append(cur)
        if len(path) > len(receipts) + 1:
            raise StructureError("token back-route does not terminate")
    if owner.get(cur) != tok:
        raise StructureError(
            f"back-route for token {tok} ended at node {cur}, not in that cluster"
        )
    return tuple(path)


def build_connecting_structure(
    g: Graph,
    cc: ClusterCollection,
    reach: int,
    cfg: SimConfig | None = None,
) -> tuple[ConnectingStructure, RoundMetrics | None]:
    """Token flood plus per-cluster path selection.

    With cfg the flood runs on the round engine and metrics are returned;
    without it the flood is computed in-process and metrics is None.
    Selection: each cluster with any member that received a foreign token
    picks its lowest-identifier such member as leaf, the lowest received
    token id at that leaf, and backtracks that token to its origin.
    """
    if reach < 1:
        raise StructureError(f"reach must be at least 1, got {reach}")
    owner = _membership(cc)
    metrics = None
    if cfg is None:
        receipts = _token_wave_central(g, owner, reach)
    else:
        receipts, metrics = _token_wave_engine(g, owner, cc.id_bits, reach, cfg)

    selections: dict[int, PathSelection] = {}
    quiet = []
    for cid in cc.cluster_ids():
        heard = [v for v in cc.clusters[cid] if receipts[v]]
        if not heard:
            quiet.append(cid)
            continue
        leaf = min(heard, key=lambda v: (g.ids[v], v))
        tok = min(receipts[leaf])
        path = _backtrack(owner, receipts, leaf, tok)
        if len(path) - 1 != receipts[leaf][tok][0]:
            raise StructureError(
                f"back-route length {len(path) - 1} disagrees with the "
                f"arrival round {receipts[leaf][tok][0]}"
            )
        selections[cid] = PathSelection(
            cluster=cid, target=tok, leaf=leaf, root=path[-1], path=path
        )

    edge_trees: dict[tuple[int, int], set[int]] = {}
    for sel in selections.values():
        for a, b in zip(sel.path, sel.path[1:]):
            key = (a, b) if a < b else (b, a)
            edge_trees.setdefault(key, set()).add(sel.root)

    cs = ConnectingStructure(
        reach=reach,
        isolated=frozenset(quiet),
        selections=selections,
        edge_trees={e: frozenset(r) for e, r in edge_trees.items()},
    )
    return cs, metrics


def validate_connecting_structure(
    g: Graph, cc: ClusterCollection, cs: ConnectingStructure
) -> None:
    """Structural checks plus the two load-bearing guarantees: the
    isolated set matches the distance oracle exactly, and no edge serves
    more than four back-route trees."""
    cids = set(cc.cluster_ids())
    if cs.isolated | set(cs.selections) != cids or cs.isolated & set(cs.selections):
        raise StructureError("isolated set and selections must partition the clusters")

    oracle = isolated_clusters(g, cc, cs.reach)
    if cs.isolated != oracle:
        raise StructureError(
            f"isolated set {sorted(cs.isolated)} disagrees with the "
            f"distance oracle {sorted(oracle)}"
        )

    for cid, sel in cs.selections.items():
        if sel.cluster != cid or sel.target == cid or sel.target not in cids:
            raise StructureError(f"selection for cluster {cid} is malformed")
        if sel.leaf not in cc.clusters[cid]:
            raise StructureError(f"leaf {sel.leaf} is not a member of cluster {cid}")
        if sel.root not in cc.clusters[sel.target]:
            raise StructureError(
                f"root {sel.root} is not a member of target {sel.target}"
            )
        if sel.path[0] != sel.leaf or sel.path[-1] != sel.root:
            raise StructureError(f"path endpoints disagree for cluster {cid}")
        if not 1 <= len(sel.path) - 1 <= cs.reach:
            raise StructureError(
                f"path for cluster {cid} has {len(sel.path) - 1} edges, "
                f"reach is {cs.reach}"
            )
        for a, b in zip(sel.path, sel.path[1:]):
            if not g.has_edge(a, b):
                raise StructureError(f"path for cluster {cid} uses non-edge {a}-{b}")

    rebuilt: dict[tuple[int, int], set[int]] = {}
    for sel in cs.selections.values():
        for a, b in zip(sel.path, sel.path[1:]):
            key = (a, b) if a < b else (b, a)
            rebuilt.setdefault(key, set()).add(sel.root)
    if {e: frozenset(r) for e, r in rebuilt.items()} != cs.edge_trees:
        raise StructureError("edge_trees does not match the recorded paths")
    for edge, roots in cs.edge_trees.items():
        if len(roots) > MAX_TREES_PER_EDGE:
            raise StructureError(
                f"edge {edge} serves {len(roots)} trees, "
                f"limit is {MAX_TREES_PER_EDGE}"
            )


def _alternating(members: list[int]) -> dict[int, str]:
    """Blue, red, blue, ... over ascending cluster ids: ceil(m/2) blue."""
    return {
        cid: BLUE if i % 2 == 0 else RED for i, cid in enumerate(sorted(members))
    }


def color_red_blue(
    g: Graph,
    cc: ClusterCollection,
    reach: int,
    cfg: SimConfig | None = None,
) -> tuple[dict[int, str], ConnectingStructure, RoundMetrics | None]:
    """Red/blue coloring with a bounded blue fraction in every group of
    clusters within distance `reach` of each other.

    Stages over the connecting structure's selection digraph:
      0. isolated clusters turn red;
      1. clusters with at least HEAVY_THRESHOLD incoming selections are
         heavy; each heavy cluster's selectors form a batch;
      2. heavy clusters not inside someone's batch turn blue;
      3. the still-uncolored (light) clusters form a graph over their
         selection pairs; an MIS on its square groups them into stars
         (each non-MIS cluster joins its lowest-id MIS cluster within two
         hops, a childless MIS cluster joins the star of its lowest-id
         neighbor, and a cluster with no light neighbors at all joins the
         batch of its selection target);
      4. every batch and star is colored alternately blue-first by
         ascending cluster id.
    """
    cs, metrics = build_connecting_structure(g, cc, reach, cfg=cfg)
    coloring: dict[int, str] = {cid: RED for cid in cs.isolated}

    incoming = cs.incoming()
    heavy = {d for d, srcs in incoming.items() if len(srcs) >= HEAVY_THRESHOLD}
    batches: dict[int, list[int]] = {d: list(incoming[d]) for d in sorted(heavy)}
    batched = {c for members in batches.values() for c in members}

    for d in sorted(heavy):
        if d not in batched:
            coloring[d] = BLUE

    remaining = sorted(
        cid for cid in cs.selections if cid not in batched and cid not in heavy
    )

    light_adj: dict[int, set[int]] = {cid: set() for cid in remaining}
    rem = set(remaining)
    for cid in remaining:
        tgt = cs.selections[cid].target
        if tgt in rem:
            light_adj[cid].add(tgt)
            light_adj[tgt].add(cid)

    stars: dict[int, list[int]] = {}
    if light_adj:
        sq = square_adjacency(light_adj)
        degree = max(len(ns) for ns in sq.values())
        palette = max(1, 4 * degree * degree)
        mis = mis_from_coloring(sq, color_by_ids(sq, dict(zip(rem, rem)), palette))
        stars = {m: [m] for m in sorted(mis)}
        star_of: dict[int, int] = {m: m for m in mis}
        for cid in sorted(rem - mis):
            host = min(x for x in sq[cid] if x in mis)
            stars[host].append(cid)
            star_of[cid] = host
        for m in sorted(mis):
            if len(stars[m]) > 1:
                continue
            if light_adj[m]:
                host = star_of[min(light_adj[m])]
                stars.pop(m)
                stars[host].append(m)
                star_of[m] = host
            else:
                tgt = cs.selections[m].target
                if tgt not in batched:
                    raise StructureError(
                        f"lone light cluster {m} selected {tgt}, which is in "
                        "no batch"
                    )
                stars.pop(m)
                host = next(d for d, mem in batches.items() if tgt in mem)
                batches[host].append(m)

    for members in batches.values():
        coloring.update(_alternating(members))
    for members in stars.values():
        coloring.update(_alternating(members))

    missing = set(cc.cluster_ids()) - set(coloring)
    if missing:
        raise StructureError(f"clusters left uncolored: {sorted(missing)}")
    return coloring, cs, metrics


def check_balance(
    g: Graph,
    cc: ClusterCollection,
    coloring: dict[int, str],
    reach: int,
) -> list[tuple[tuple[int, ...], int, int]]:
    """Per component of clusters within distance `reach`: (cluster ids,
    blue count, size). Components of a single cluster are exempt; every
    other component must have a blue fraction in [1/2, 3/4]."""
    if set(coloring) != set(cc.cluster_ids()):
        raise StructureError("coloring keys must be exactly the cluster ids")
    bad = {cid: c for cid, c in coloring.items() if c not in (RED, BLUE)}
    if bad:
        raise StructureError(f"unknown colors: {bad}")
    report = []
    for comp in cluster_components(g, cc, reach):
        blue = sum(1 for cid in comp if coloring[cid] == BLUE)
        report.append((tuple(sorted(comp)), blue, len(comp)))
        if len(comp) >= 2 and not (len(comp) <= 2 * blue and 4 * blue <= 3 * len(comp)):
            raise StructureError(
                f"component {sorted(comp)} has {blue}/{len(comp)} blue, "
                "outside [1/2, 3/4]"
            )
    return report


def coloring_to_json(coloring: dict[int, str]) -> str:
    return json.dumps({str(cid): c for cid, c in sorted(coloring.items())}, indent=2)


def coloring_from_json(text: str) -> dict[int, str]:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise StructureError(f"coloring is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise StructureError("coloring JSON must be an object")
    out = {}
    for key, val in raw.items():
        try:
            cid = int(key)
        except ValueError as exc:
            raise StructureError(f"cluster id {key!r} is not an integer") from exc
        if val not in (RED, BLUE):
            raise StructureError(f"cluster {key} has unknown color {val!r}")
        out[cid] = val
    return out
