"""Parallel aggregation over the connection trees of a cluster collection.

All clusters run at once. Frames addressed to a tree travel along its
oriented edges; trees sharing an edge interleave round-robin by cluster id,
one frame at a time, and the serialized stream is cut into bandwidth-sized
chunks, so a frame may straddle several rounds. Every primitive detects its
own completion locally (from child lists and the member-interval sizes of
the depth-first numbering), so measured round counts are honest.

Round-bound bookkeeping: the checkable bounds use the documented constant
AGG_ROUND_CONSTANT = 8. Broadcast, minimum, summation and convergecast move
payloads no wider than the bandwidth and stay within

    8 * max(1, ceil(kappa / b)) * (beta + kappa)

rounds. Gather and disseminate stream x bits per member and stay within

    8 * max(1, kappa) * (beta + ceil(N * x / b))

rounds, where N caps the cluster size. The streamed frames also carry a
member index of width_for(n) bits, so the second bound assumes the payload
is at least as wide as an index (x >= log2 n); transcript workloads satisfy
that.
"""

from __future__ import annotations

from collections import deque
from math import ceil

from .bitio import BitQueue, BitWriter, FrameBuffer, width_for
from .clusters import ClusterCollection, build_tree_views, edge_tree_index
from .engine import Message, NodeProgram, RoundMetrics, SimConfig, run
from .errors import AggregationError
from .graphs import Graph

AGG_ROUND_CONSTANT = 8
MAX_SPECIAL_NODES = 4

MIN = "MIN"
SUM_MOD = "SUM_MOD"
CONVERGECAST = "CONVERGECAST"


def aggregate_round_bound(beta: int, kappa: int, bandwidth: int | None) -> int:
    """Checkable round bound for broadcast / minimum / summation /
    convergecast, with the documented constant."""
    slow = 1 if bandwidth is None else max(1, ceil(kappa / bandwidth))
    return AGG_ROUND_CONSTANT * slow * (beta + kappa)


def token_round_bound(
    beta: int, kappa: int, size_cap: int, info_bits: int, bandwidth: int | None
) -> int:
    """Checkable round bound for gather / disseminate of info_bits per member
    in clusters of at most size_cap members."""
    chunks = 0 if bandwidth is None else ceil(size_cap * info_bits / bandwidth)
    return AGG_ROUND_CONSTANT * max(1, kappa) * (beta + chunks)


def _check_width(value: int, bits: int, what: str) -> None:
    if value < 0 or value.bit_length() > bits:
        raise AggregationError(f"{what} {value} does not fit in {bits} bits")


class _TreeTransport(NodeProgram):
    """Shared frame transport: per-neighbor round-robin serializer on the
    sending side, frame reassembly on the receiving side.

    Subclasses define the frame layout through head_width / body_widths,
    react to complete frames in handle_frame, seed initial frames in
    on_start, and report logical completion through done().
    """

    def __init__(self, node, views, edge_cids, bandwidth):
        self.node = node
        self.views = views              # cid -> TreeView for this node
        self.edge_cids = edge_cids      # neighbor -> ordered cids on that edge
        self.bandwidth = bandwidth

    # subclass hooks -------------------------------------------------
    def head_width(self, ncids: int) -> int:
        return width_for(ncids)

    def body_widths(self, cids: tuple[int, ...], head: int) -> list[int]:
        raise NotImplementedError

    def decode_head(self, cids: tuple[int, ...], head: int) -> tuple[int, int]:
        """head -> (cid, kind). Default: head is the edge-local tree index."""
        return cids[head], 0

    def on_start(self) -> None:
        raise NotImplementedError

    def handle_frame(self, sender: int, cid: int, kind: int, fields: tuple[int, ...]) -> None:
        raise NotImplementedError

    def done(self) -> bool:
        raise NotImplementedError

    # transport ------------------------------------------------------
    def init(self, ctx) -> None:
        super().init(ctx)
        self._queues: dict[int, dict[int, deque]] = {}
        self._wires: dict[int, BitQueue] = {}
        self._rr: dict[int, int] = {}
        self._bufs: dict[int, FrameBuffer] = {}
        for w, cids in self.edge_cids.items():
            self._queues[w] = {}
            self._wires[w] = BitQueue()
            self._rr[w] = 0
            self._bufs[w] = FrameBuffer(self._widths_fn(cids))
        self.on_start()

    def _widths_fn(self, cids: tuple[int, ...]):
        hw = self.head_width(len(cids))

        def fn(head):
            if head is None:
                return hw
            return self.body_widths(cids, head)

        return fn

    def send(self, neighbor: int, cid: int, head_kind: int, fields) -> None:
        """Queue one frame for the given tree toward a neighbor.

        head_kind folds any frame-kind tag into the edge-local tree index;
        subclasses with a single frame kind pass 0.
        """
        cids = self.edge_cids[neighbor]
        idx = cids.index(cid)
        nkinds = max(1, 2 ** (self.head_width(len(cids)) - width_for(len(cids))))
        head = idx * nkinds + head_kind
        w = BitWriter()
        w.append(head, self.head_width(len(cids)))
        for value, bits in fields:
            w.append(value, bits)
        self._queues[neighbor].setdefault(cid, deque()).append((w.value, w.bits))

    def _fill_wire(self, neighbor: int) -> None:
        cids = self.edge_cids[neighbor]
        wire = self._wires[neighbor]
        trees = self._queues[neighbor]
        while self.bandwidth is None or len(wire) < self.bandwidth:
            dq = None
            for off in range(len(cids)):
                i = (self._rr[neighbor] + off) % len(cids)
                cand = trees.get(cids[i])
                if cand:
                    dq = cand
                    break
            if dq is None:
                return
            value, bits = dq.popleft()
            wire.append(value, bits)
            self._rr[neighbor] = (i + 1) % len(cids)

    def on_round(self, rnd, inbox):
        for w in sorted(inbox):
            msg = inbox[w]
            for frame in self._bufs[w].feed(msg.value, msg.bits):
                cids = self.edge_cids[w]
                cid, kind = self.decode_head(cids, frame[0])
                self.handle_frame(w, cid, kind, frame[1:])
        out = {}
        for w in self._wires:
            self._fill_wire(w)
            wire = self._wires[w]
            if len(wire):
                budget = len(wire) if self.bandwidth is None else self.bandwidth
                chunk, k = wire.take(budget)
                out[w] = Message(chunk, k)
        return out

    def finished(self) -> bool:
        if not self.done():
            return False
        return all(len(q) == 0 for q in self._wires.values()) and all(
            not dq for trees in self._queues.values() for dq in trees.values()
        )


def _transport_run(g: Graph, cc: ClusterCollection, cfg: SimConfig, make):
    views = build_tree_views(g, cc)
    etrees = edge_tree_index(g, cc)
    per_node_edges: dict[int, dict[int, tuple[int, ...]]] = {v: {} for v in range(g.n)}
    for (u, v), cids in etrees.items():
        per_node_edges[u][v] = cids
        per_node_edges[v][u] = cids
    bandwidth = cfg.effective_bandwidth

    def factory(v: int):
        return make(v, views.get(v, {}), per_node_edges[v], bandwidth)

    return run(g, factory, cfg)


# -- broadcast -------------------------------------------------------


class _BroadcastProgram(_TreeTransport):
    def __init__(self, node, views, edge_cids, bandwidth, payload, value_bits):
        super().__init__(node, views, edge_cids, bandwidth)
        self.payload = payload
        self.value_bits = value_bits
        self.value: dict[int, int] = {}

    def body_widths(self, cids, head):
        return [self.value_bits]

    def on_start(self):
        for cid, view in self.views.items():
            if view.is_leader:
                self.value[cid] = self.payload[cid]
                self._push_down(cid)

    def _push_down(self, cid):
        for child in self.views[cid].children:
            self.send(child, cid, 0, [(self.value[cid], self.value_bits)])

    def handle_frame(self, sender, cid, kind, fields):
        self.value[cid] = fields[0]
        self._push_down(cid)

    def done(self):
        return all(cid in self.value for cid in self.views)

    def output(self):
        return {cid: self.value[cid] for cid, view in self.views.items() if view.is_member}


def tree_broadcast(
    g: Graph,
    cc: ClusterCollection,
    cfg: SimConfig,
    payload: dict[int, int],
    value_bits: int,
) -> tuple[list[dict[int, int]], RoundMetrics]:
    """Leaders push a value down their tree; every member receives it."""
    bw = cfg.effective_bandwidth
    if bw is not None and value_bits > bw:
        raise AggregationError(f"value width {value_bits} exceeds bandwidth {bw}")
    for cid in cc.clusters:
        if cid not in payload:
            raise AggregationError(f"no payload for cluster {cid}")
        _check_width(payload[cid], value_bits, "payload")
    outs, metrics = _transport_run(
        g, cc, cfg,
        lambda v, views, ec, b: _BroadcastProgram(v, views, ec, b, payload, value_bits),
    )
    return [out if out else {} for out in outs], metrics


# -- minimum / summation / convergecast ------------------------------


class _UpAggProgram(_TreeTransport):
    """MIN and SUM_MOD: one combined frame per tree edge, flowing leafward
    to leaderward once all child contributions are in."""

    def __init__(self, node, views, edge_cids, bandwidth, kind, inputs, value_bits):
        super().__init__(node, views, edge_cids, bandwidth)
        self.kind = kind
        self.inputs = inputs
        self.value_bits = value_bits
        self.state: dict[int, dict] = {}
        self.results: dict[int, int] = {}

    def _identity(self):
        return ((1 << self.value_bits) - 1) if self.kind == MIN else 0

    def _combine(self, a, b):
        if self.kind == MIN:
            return min(a, b)
        return (a + b) % (1 << self.value_bits)

    def body_widths(self, cids, head):
        return [self.value_bits]

    def on_start(self):
        for cid, view in self.views.items():
            acc = self._identity()
            if view.is_member:
                acc = self._combine(acc, self.inputs[self.node][cid])
            self.state[cid] = {"acc": acc, "pending": set(view.children)}
            if not view.children:
                self._emit(cid)

    def _emit(self, cid):
        view = self.views[cid]
        st = self.state[cid]
        if view.is_leader:
            self.results[cid] = st["acc"]
        else:
            self.send(view.parent, cid, 0, [(st["acc"], self.value_bits)])
        st["sent"] = True

    def handle_frame(self, sender, cid, kind, fields):
        st = self.state[cid]
        st["acc"] = self._combine(st["acc"], fields[0])
        st["pending"].discard(sender)
        if not st["pending"] and not st.get("sent"):
            self._emit(cid)

    def done(self):
        return all(st.get("sent") for st in self.state.values())

    def output(self):
        return self.results


class _ConvergecastProgram(_TreeTransport):
    """Special values flow leaderward as individual frames; alongside them
    each edge carries one subtree-count frame, which is what lets every node
    recognize locally that it has forwarded everything below it."""

    def __init__(self, node, views, edge_cids, bandwidth, inputs, value_bits):
        super().__init__(node, views, edge_cids, bandwidth)
        self.inputs = inputs
        self.value_bits = value_bits
        self.state: dict[int, dict] = {}
        self.results: dict[int, list[int]] = {}

    def head_width(self, ncids):
        return width_for(ncids) + 1  # low bit: 0 = count frame, 1 = value frame

    def decode_head(self, cids, head):
        return cids[head >> 1], head & 1

    def body_widths(self, cids, head):
        return [self.value_bits] if (head & 1) else [3]

    def on_start(self):
        for cid, view in self.views.items():
            own = []
            if view.is_member and cid in self.inputs.get(self.node, {}):
                own = [self.inputs[self.node][cid]]
            st = {
                "own": len(own),
                "pending": set(view.children),
                "child_total": 0,
                "forwarded": 0,
                "subtree": None,
                "count_sent": False,
            }
            self.state[cid] = st
            if view.is_leader:
                self.results[cid] = list(own)
            else:
                for value in own:
                    self.send(view.parent, cid, 1, [(value, self.value_bits)])
            st["forwarded"] += len(own)
            if not view.children:
                self._counts_complete(cid)

    def _counts_complete(self, cid):
        view = self.views[cid]
        st = self.state[cid]
        st["subtree"] = st["own"] + st["child_total"]
        if not view.is_leader:
            self.send(view.parent, cid, 0, [(st["subtree"], 3)])
        st["count_sent"] = True

    def handle_frame(self, sender, cid, kind, fields):
        view = self.views[cid]
        st = self.state[cid]
        if kind == 0:
            st["child_total"] += fields[0]
            st["pending"].discard(sender)
            if not st["pending"]:
                self._counts_complete(cid)
        else:
            if view.is_leader:
                self.results[cid].append(fields[0])
            else:
                self.send(view.parent, cid, 1, [(fields[0], self.value_bits)])
            st["forwarded"] += 1

    def done(self):
        return all(
            st["count_sent"] and st["forwarded"] == st["subtree"]
            for st in self.state.values()
        )

    def output(self):
        return {cid: tuple(sorted(vals)) for cid, vals in self.results.items()}


def tree_aggregate(
    g: Graph,
    cc: ClusterCollection,
    cfg: SimConfig,
    kind: str,
    inputs: dict[int, dict[int, int]],
    value_bits: int,
) -> tuple[dict[int, object], RoundMetrics]:
    """Leaders learn, per cluster, the minimum, the modular sum, or the
    sorted tuple of special values contributed by members."""
    if kind not in (MIN, SUM_MOD, CONVERGECAST):
        raise AggregationError(f"unknown aggregation kind {kind!r}")
    bw = cfg.effective_bandwidth
    if bw is not None and value_bits > bw:
        raise AggregationError(f"value width {value_bits} exceeds bandwidth {bw}")
    member = cc.member_of()
    for v, per_cluster in inputs.items():
        for cid, value in per_cluster.items():
            if member.get(v) != cid:
                raise AggregationError(f"input for node {v} in cluster {cid}, not a member")
            _check_width(value, value_bits, "input")
    if kind == CONVERGECAST:
        per_cluster_specials: dict[int, int] = {}
        for v, per_c in inputs.items():
            for cid in per_c:
                per_cluster_specials[cid] = per_cluster_specials.get(cid, 0) + 1
        for cid, count in per_cluster_specials.items():
            if count > MAX_SPECIAL_NODES:
                raise AggregationError(
                    f"cluster {cid} has {count} special nodes, cap is {MAX_SPECIAL_NODES}"
                )
        make = lambda v, views, ec, b: _ConvergecastProgram(
            v, views, ec, b, inputs, value_bits
        )
    else:
        for cid, members in cc.clusters.items():
            for v in members:
                if cid not in inputs.get(v, {}):
                    raise AggregationError(f"member {v} of cluster {cid} has no input")
        make = lambda v, views, ec, b: _UpAggProgram(
            v, views, ec, b, kind, inputs, value_bits
        )
    outs, metrics = _transport_run(g, cc, cfg, make)
    merged: dict[int, object] = {}
    for out in outs:
        if out:
            merged.update(out)
    for cid in cc.clusters:
        if cid not in merged:
            raise AggregationError(f"leader of cluster {cid} produced no result")
    return merged, metrics


# -- token learning: gather / disseminate ----------------------------


class _GatherProgram(_TreeTransport):
    def __init__(self, node, views, edge_cids, bandwidth, info, info_bits, index_bits):
        super().__init__(node, views, edge_cids, bandwidth)
        self.info = info
        self.info_bits = info_bits
        self.index_bits = index_bits
        self.handled: dict[int, int] = {}
        self.collected: dict[int, dict[int, int]] = {}

    def body_widths(self, cids, head):
        return [self.index_bits, self.info_bits]

    def _absorb(self, cid, index, value):
        view = self.views[cid]
        if view.is_leader:
            self.collected.setdefault(cid, {})[index] = value
        else:
            self.send(
                view.parent, cid, 0,
                [(index, self.index_bits), (value, self.info_bits)],
            )
        self.handled[cid] = self.handled.get(cid, 0) + 1

    def on_start(self):
        for cid, view in self.views.items():
            self.handled.setdefault(cid, 0)
            if view.is_member:
                self._absorb(cid, view.member_index, self.info[self.node])
            if view.is_leader:
                self.collected.setdefault(cid, {})

    def handle_frame(self, sender, cid, kind, fields):
        self._absorb(cid, fields[0], fields[1])

    def done(self):
        for cid, view in self.views.items():
            lo, hi = view.own_interval
            if self.handled[cid] != hi - lo:
                return False
        return True

    def output(self):
        return self.collected


class _DisseminateProgram(_TreeTransport):
    def __init__(self, node, views, edge_cids, bandwidth, by_index, info_bits, index_bits):
        super().__init__(node, views, edge_cids, bandwidth)
        self.by_index = by_index    # cid -> {member index: payload}, leaders only use it
        self.info_bits = info_bits
        self.index_bits = index_bits
        self.handled: dict[int, int] = {}
        self.received: dict[int, int] = {}

    def body_widths(self, cids, head):
        return [self.index_bits, self.info_bits]

    def _route(self, cid, index, value):
        view = self.views[cid]
        if view.is_member and view.member_index == index:
            self.received[cid] = value
        else:
            for child, (lo, hi) in zip(view.children, view.child_intervals):
                if lo <= index < hi:
                    self.send(
                        child, cid, 0,
                        [(index, self.index_bits), (value, self.info_bits)],
                    )
                    break
        self.handled[cid] = self.handled.get(cid, 0) + 1

    def on_start(self):
        for cid, view in self.views.items():
            self.handled.setdefault(cid, 0)
            if view.is_leader:
                for index, value in sorted(self.by_index[cid].items()):
                    self._route(cid, index, value)

    def handle_frame(self, sender, cid, kind, fields):
        self._route(cid, fields[0], fields[1])

    def done(self):
        for cid, view in self.views.items():
            lo, hi = view.own_interval
            if self.handled[cid] != hi - lo:
                return False
        return True

    def output(self):
        return self.received


def _member_numbering(g: Graph, cc: ClusterCollection) -> dict[int, dict[int, int]]:
    """cid -> {member node: depth-first index}, via the tree views."""
    views = build_tree_views(g, cc)
    numbering: dict[int, dict[int, int]] = {cid: {} for cid in cc.clusters}
    for v, per_cid in views.items():
        for cid, view in per_cid.items():
            if view.is_member:
                numbering[cid][v] = view.member_index
    return numbering


def token_learning_gather(
    g: Graph,
    cc: ClusterCollection,
    cfg: SimConfig,
    info: dict[int, int],
    info_bits: int,
) -> tuple[dict[int, dict[int, int]], RoundMetrics]:
    """Every leader learns the info of every member of its cluster,
    streaming index-tagged frames up the tree."""
    member = cc.member_of()
    for v in member:
        if v not in info:
            raise AggregationError(f"member {v} has no info to gather")
        _check_width(info[v], info_bits, "info")
    index_bits = width_for(g.n)
    outs, metrics = _transport_run(
        g, cc, cfg,
        lambda v, views, ec, b: _GatherProgram(v, views, ec, b, info, info_bits, index_bits),
    )
    numbering = _member_numbering(g, cc)
    result: dict[int, dict[int, int]] = {}
    for out in outs:
        if out:
            for cid, by_index in out.items():
                back = {idx: node for node, idx in numbering[cid].items()}
                result[cid] = {back[i]: value for i, value in by_index.items()}
    for cid in cc.clusters:
        if cid not in result:
            raise AggregationError(f"leader of cluster {cid} gathered nothing")
    return result, metrics


def token_learning_disseminate(
    g: Graph,
    cc: ClusterCollection,
    cfg: SimConfig,
    payloads: dict[int, dict[int, int]],
    info_bits: int,
) -> tuple[list[dict[int, int]], RoundMetrics]:
    """Every leader sends a distinct payload to each member of its cluster,
    routed down the tree by member-interval."""
    numbering = _member_numbering(g, cc)
    by_index: dict[int, dict[int, int]] = {}
    for cid, members in cc.clusters.items():
        if cid not in payloads:
            raise AggregationError(f"no payloads for cluster {cid}")
        per = payloads[cid]
        for v in members:
            if v not in per:
                raise AggregationError(f"member {v} of cluster {cid} has no payload")
        for v, value in per.items():
            if v not in members:
                raise AggregationError(f"payload for node {v}, not a member of {cid}")
            _check_width(value, info_bits, "payload")
        by_index[cid] = {numbering[cid][v]: value for v, value in per.items()}
    index_bits = width_for(g.n)
    outs, metrics = _transport_run(
        g, cc, cfg,
        lambda v, views, ec, b: _DisseminateProgram(
            v, views, ec, b, by_index, info_bits, index_bits
        ),
    )
    received: list[dict[int, int]] = []
    for v in range(g.n):
        received.append(outs[v] if outs[v] else {})
    return received, metrics
