"""Constraint systems of local bad events over shared random variables.

An instance places at most one event on each graph node. An event watches a
small set of variables, each owned by the event's node or one of its
neighbors, and "holds" (goes bad) on some of the joint value combinations.
Two events are dependent when they share a variable; the dependency degree d
is the maximum number of events any single event shares variables with.

This module provides the exact probability oracle (rational arithmetic, no
floats anywhere near a strict inequality), the classical criterion checks,
a validator, and a distributed fixing procedure: repeatedly resample the
variables of violated events that are local minima among their violated
dependency neighborhood. The fixing procedure exists twice, as a pure
reference and as a message-passing node program, and the two produce
bit-identical runs from the same seed.
"""

from __future__ import annotations

import itertools
import json
import warnings
from dataclasses import dataclass
from fractions import Fraction
from math import prod

from .engine import Message, NodeProgram, SimConfig, Simulation, tape_value
from .errors import BudgetExceeded, InstanceError
from .graphs import Graph, log2_ceil

DEFAULT_ENUM_BUDGET = 1 << 20

# Rational bounds on Euler's number, 50 decimal digits, truncation and its
# successor. Criterion comparisons decide strictly on one side or the other;
# a probability would need a denominator near 10**25 to fall between them.
E_LOW = Fraction(271828182845904523536028747135266249775724709369995, 10**50)
E_HIGH = Fraction(271828182845904523536028747135266249775724709369996, 10**50)

TABLE = "table"
SINKLESS = "sinkless"


@dataclass(frozen=True)
class VariableSpec:
    """One shared random variable: owning node and range size (values are
    drawn uniformly from [0, range_size))."""

    owner: int
    range_size: int


@dataclass(frozen=True)
class Event:
    """A bad event hosted at `node`, watching the variables in `vbl`
    (strictly increasing ids).

    kind "table": `table` is a bitmap over all joint values of vbl, read at
    the mixed-radix index whose least significant digit is the lowest
    variable id. Bit 1 means the event holds.

    kind "sinkless": the event holds exactly when every variable equals its
    entry in `bad_values`. The conditional probability then has a closed
    form (zero on any mismatch among set variables, else one over the
    product of the unset ranges), so the oracle never enumerates. Named for
    its flagship use, forbidding all edges to point at a node.
    """

    node: int
    vbl: tuple[int, ...]
    kind: str
    table: int | None = None
    bad_values: tuple[int, ...] | None = None

    def holds(self, values: dict[int, int]) -> bool:
        if self.kind == SINKLESS:
            return all(values[x] == b for x, b in zip(self.vbl, self.bad_values))
        index = 0
        weight = 1
        for x in self.vbl:
            index += values[x] * weight
            weight *= self._ranges[x]
        return (self.table >> index) & 1 == 1


@dataclass(frozen=True)
class LllInstance:
    """An event system over a communication graph.

    dep maps each event node to the frozenset of event nodes it shares a
    variable with; d is the largest such set. range_bounded is true when
    every event watches at most d**3 + 3*d + 1 variables and every range is
    at most max(2, d*d); only such instances may run under a finite
    bandwidth budget.
    """

    g: Graph
    variables: dict[int, VariableSpec]
    events: dict[int, Event]
    dep: dict[int, frozenset[int]]
    d: int
    range_bounded: bool

    @staticmethod
    def build(g: Graph, variables: dict[int, VariableSpec], events: list[Event] | dict[int, Event]) -> "LllInstance":
        if isinstance(events, dict):
            events = list(events.values())
        for vid, spec in variables.items():
            if not isinstance(vid, int) or vid < 0:
                raise InstanceError(f"variable id {vid!r} is not a non-negative integer")
            if not 0 <= spec.owner < g.n:
                raise InstanceError(f"variable {vid} owned by non-node {spec.owner}")
            if spec.range_size < 1:
                raise InstanceError(f"variable {vid} has empty range {spec.range_size}")
        by_node: dict[int, Event] = {}
        for ev in events:
            if not 0 <= ev.node < g.n:
                raise InstanceError(f"event on non-node {ev.node}")
            if ev.node in by_node:
                raise InstanceError(f"two events on node {ev.node}")
            if list(ev.vbl) != sorted(set(ev.vbl)):
                raise InstanceError(f"event at {ev.node}: vbl must be strictly increasing")
            allowed = {ev.node} | set(g.adj[ev.node])
            ranges = []
            for x in ev.vbl:
                if x not in variables:
                    raise InstanceError(f"event at {ev.node} watches unknown variable {x}")
                if variables[x].owner not in allowed:
                    raise InstanceError(
                        f"event at {ev.node} watches variable {x} owned by "
                        f"{variables[x].owner}, not the node or a neighbor"
                    )
                ranges.append(variables[x].range_size)
            if ev.kind == TABLE:
                if ev.table is None or ev.table < 0:
                    raise InstanceError(f"event at {ev.node}: missing or negative table")
                if ev.table.bit_length() > prod(ranges):
                    raise InstanceError(f"event at {ev.node}: table wider than its value space")
            elif ev.kind == SINKLESS:
                if ev.bad_values is None or len(ev.bad_values) != len(ev.vbl):
                    raise InstanceError(f"event at {ev.node}: bad_values must align with vbl")
                for b, r in zip(ev.bad_values, ranges):
                    if not 0 <= b < r:
                        raise InstanceError(f"event at {ev.node}: bad value {b} outside range {r}")
            else:
                raise InstanceError(f"event at {ev.node}: unknown predicate kind {ev.kind!r}")
            object.__setattr__(ev, "_range_map", {x: variables[x].range_size for x in ev.vbl})
            by_node[ev.node] = ev
        watchers: dict[int, list[int]] = {}
        for node, ev in by_node.items():
            for x in ev.vbl:
                watchers.setdefault(x, []).append(node)
        dep: dict[int, set[int]] = {node: set() for node in by_node}
        for nodes in watchers.values():
            for a in nodes:
                for b in nodes:
                    if a != b:
                        dep[a].add(b)
        d = max((len(s) for s in dep.values()), default=0)
        vbl_cap = d * d * d + 3 * d + 1
        range_cap = max(2, d * d)
        bounded = all(len(ev.vbl) <= vbl_cap for ev in by_node.values()) and all(
            variables[x].range_size <= range_cap for ev in by_node.values() for x in ev.vbl
        )
        return LllInstance(
            g=g,
            variables=dict(variables),
            events=by_node,
            dep={node: frozenset(s) for node, s in dep.items()},
            d=d,
            range_bounded=bounded,
        )


# Event.holds needs per-variable ranges for table indexing; build() stores
# them on the event under _range_map. Property indirection keeps Event frozen.
def _event_ranges(self):
    try:
        return object.__getattribute__(self, "_range_map")
    except AttributeError:
        raise InstanceError("event used outside a built instance") from None


Event._ranges = property(_event_ranges)


class Assignment:
    """Mutable variable valuation: each id maps to a value or None (unset),
    plus a set of ids marked frozen by the pre-shattering phase."""

    def __init__(self, ranges: dict[int, int]):
        self._ranges = dict(ranges)
        self.values: dict[int, int | None] = {vid: None for vid in ranges}
        self.frozen: set[int] = set()

    @classmethod
    def empty(cls, inst: LllInstance) -> "Assignment":
        return cls({vid: spec.range_size for vid, spec in inst.variables.items()})

    def set_value(self, vid: int, value: int) -> None:
        r = self._ranges.get(vid)
        if r is None:
            raise InstanceError(f"unknown variable {vid}")
        if not 0 <= value < r:
            raise InstanceError(f"value {value} outside range {r} for variable {vid}")
        self.values[vid] = value

    def unset(self, vid: int) -> None:
        if vid not in self._ranges:
            raise InstanceError(f"unknown variable {vid}")
        self.values[vid] = None

    def freeze(self, vid: int) -> None:
        if vid not in self._ranges:
            raise InstanceError(f"unknown variable {vid}")
        self.frozen.add(vid)

    def is_set(self, vid: int) -> bool:
        return self.values.get(vid) is not None

    def unset_ids(self) -> list[int]:
        return sorted(vid for vid, val in self.values.items() if val is None)

    def total(self) -> bool:
        return all(val is not None for val in self.values.values())

    def copy(self) -> "Assignment":
        dup = Assignment(self._ranges)
        dup.values = dict(self.values)
        dup.frozen = set(self.frozen)
        return dup

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Assignment)
            and self.values == other.values
            and self.frozen == other.frozen
        )


def event_probability(
    inst: LllInstance,
    event: int,
    partial: Assignment | None = None,
    budget: int = DEFAULT_ENUM_BUDGET,
) -> Fraction:
    """Exact probability that the event at `event` holds when its unset
    variables are drawn uniformly, conditioned on the set values.

    Enumeration cost is the product of the unset ranges; beyond `budget`
    the call raises BudgetExceeded unless the predicate kind carries a
    closed form.
    """
    ev = inst.events.get(event)
    if ev is None:
        raise InstanceError(f"no event on node {event}")
    fixed: dict[int, int] = {}
    unset: list[int] = []
    for x in ev.vbl:
        val = None if partial is None else partial.values.get(x)
        if val is None:
            unset.append(x)
        else:
            r = inst.variables[x].range_size
            if not 0 <= val < r:
                raise InstanceError(f"value {val} outside range {r} for variable {x}")
            fixed[x] = val
    if ev.kind == SINKLESS:
        for x, b in zip(ev.vbl, ev.bad_values):
            if x in fixed and fixed[x] != b:
                return Fraction(0)
        return Fraction(1, prod(inst.variables[x].range_size for x in unset))
    space = prod(inst.variables[x].range_size for x in unset)
    if space > budget:
        raise BudgetExceeded(space, budget, f"event at node {event}")
    count = 0
    domains = [range(inst.variables[x].range_size) for x in unset]
    values = dict(fixed)
    for combo in itertools.product(*domains):
        for x, v in zip(unset, combo):
            values[x] = v
        if ev.holds(values):
            count += 1
    return Fraction(count, space)


@dataclass(frozen=True)
class CriterionReport:
    """Worst event probability, dependency degree, and the classical
    sufficient conditions. Criteria are evaluated with the degree clamped
    to at least 1 so that an isolated certain event still fails; `d` itself
    reports the true maximum."""

    p: Fraction
    d: int
    lam: int | None
    value_epd: float
    value_epd2: float
    value_ped8: float
    value_pedl: float | None
    ok_epd: bool
    ok_epd2: bool
    ok_ped8: bool
    ok_pedl: bool | None

    def as_dict(self) -> dict:
        return {
            "p": f"{self.p.numerator}/{self.p.denominator}",
            "d": self.d,
            "lambda": self.lam,
            "value_epd": self.value_epd,
            "value_epd2": self.value_epd2,
            "value_ped8": self.value_ped8,
            "value_pedl": self.value_pedl,
            "ok_epd": self.ok_epd,
            "ok_epd2": self.ok_epd2,
            "ok_ped8": self.ok_ped8,
            "ok_pedl": self.ok_pedl,
        }


def _below_one(coeff: Fraction, e_power: int) -> bool:
    # decides coeff * e**e_power < 1 using the rational bounds on e
    if coeff * E_HIGH**e_power < 1:
        return True
    if coeff * E_LOW**e_power >= 1:
        return False
    raise InstanceError("criterion value indistinguishable from 1 at 50-digit precision")


def _approx(coeff: Fraction, e_power: int) -> float:
    try:
        return float(coeff * E_HIGH**e_power)
    except OverflowError:
        return float("inf")


def check_criteria(
    inst: LllInstance,
    lam: int | None = None,
    budget: int = DEFAULT_ENUM_BUDGET,
) -> CriterionReport:
    """Evaluate the sufficient conditions exactly. p is the maximum event
    probability under the empty assignment; with no events p is 0 and
    everything passes vacuously."""
    if lam is not None and lam < 1:
        raise InstanceError(f"criterion exponent must be positive, got {lam}")
    p = Fraction(0)
    for node in inst.events:
        q = event_probability(inst, node, None, budget=budget)
        if q > p:
            p = q
    de = max(inst.d, 1)
    return CriterionReport(
        p=p,
        d=inst.d,
        lam=lam,
        value_epd=_approx(p * de, 1),
        value_epd2=_approx(p * de * de, 1),
        value_ped8=_approx(p * de**8, 8),
        value_pedl=None if lam is None else _approx(p * de**lam, lam),
        ok_epd=_below_one(p * de, 1),
        ok_epd2=_below_one(p * de * de, 1),
        ok_ped8=_below_one(p * de**8, 8),
        ok_pedl=None if lam is None else _below_one(p * de**lam, lam),
    )


def validate_assignment(inst: LllInstance, a: Assignment) -> list[int]:
    """Nodes whose events hold under the total assignment `a`, sorted."""
    missing = [x for ev in inst.events.values() for x in ev.vbl if not a.is_set(x)]
    if missing:
        raise InstanceError(f"assignment leaves watched variables unset: {sorted(set(missing))[:8]}")
    bad = []
    for node in sorted(inst.events):
        ev = inst.events[node]
        if ev.holds({x: a.values[x] for x in ev.vbl}):
            bad.append(node)
    return bad


# ---------------------------------------------------------------------------
# resampling of local minima


@dataclass(frozen=True)
class CpsResult:
    """Outcome of the fixing procedure.

    iterations counts resampling passes (0 when the initial assignment is
    already good); comm_rounds is the engine round count, None for the pure
    reference; trace holds one (violated set, resampled set) pair per pass.
    """

    assignment: Assignment
    iterations: int
    success: bool
    violated: tuple[int, ...]
    trace: tuple[tuple[frozenset[int], frozenset[int]], ...]
    comm_rounds: int | None = None


def _keys(inst: LllInstance, priority: dict[int, int] | None) -> dict[int, tuple[int, int]]:
    if priority is None:
        return {node: (inst.g.ids[node], node) for node in inst.events}
    for node in inst.events:
        if node not in priority:
            raise InstanceError(f"priority map misses event node {node}")
    return {node: (priority[node], node) for node in inst.events}


def _local_minima(
    violated: set[int], dep: dict[int, frozenset[int]], key: dict[int, tuple[int, int]]
) -> frozenset[int]:
    out = []
    for a in violated:
        k = key[a]
        if all(key[b] > k for b in dep[a] if b in violated):
            out.append(a)
    return frozenset(out)


def _default_cap(n: int) -> int:
    return 20 * log2_ceil(n) + 40


class _VarLayout:
    """Shared precomputation for both fixing routes: per-owner variable
    order (tape positions are iteration * stride + slot), per-edge value
    frames, and the flag relay map for dependent events two hops apart."""

    def __init__(self, inst: LllInstance, key: dict[int, tuple[int, int]]):
        self.inst = inst
        g = inst.g
        self.owned: list[list[int]] = [[] for _ in range(g.n)]
        for vid in sorted(inst.variables):
            self.owned[inst.variables[vid].owner].append(vid)
        self.slot = {vid: j for vids in self.owned for j, vid in enumerate(vids)}
        self.stride = max((len(vids) for vids in self.owned), default=1) or 1
        self.width = {
            vid: (spec.range_size - 1).bit_length() for vid, spec in inst.variables.items()
        }
        self.key = key
        # value frames: owner w -> host u needs exactly these vids of w
        self.need: dict[tuple[int, int], list[int]] = {}
        for node, ev in inst.events.items():
            for x in ev.vbl:
                w = inst.variables[x].owner
                if w != node:
                    self.need.setdefault((w, node), []).append(x)
        for frame in self.need.values():
            frame.sort()
        self.hosts_of_var: dict[int, list[int]] = {}
        for node, ev in inst.events.items():
            for x in ev.vbl:
                self.hosts_of_var.setdefault(x, []).append(node)
        # split each event's dependencies by host distance (1 or 2 by the
        # ownership rule); two hops need a relay round
        self.near: dict[int, list[int]] = {}
        self.far: dict[int, list[int]] = {}
        self.far_sources: dict[int, dict[int, list[tuple[int, int]]]] = {}
        adj_pos = [{u: i for i, u in enumerate(g.adj[v])} for v in range(g.n)]
        for node in inst.events:
            nbrs = set(g.adj[node])
            self.near[node] = [b for b in inst.dep[node] if b in nbrs]
            self.far[node] = [b for b in inst.dep[node] if b not in nbrs]
            srcs: dict[int, list[tuple[int, int]]] = {}
            for b in self.far[node]:
                via = [(v, adj_pos[v][b]) for v in g.adj[node] if b in adj_pos[v]]
                if not via:
                    raise InstanceError(f"dependent events {node} and {b} have no common neighbor")
                srcs[b] = via
            self.far_sources[node] = srcs
        self.needs_relay = any(self.far[node] for node in inst.events)
        self.period = 4 if self.needs_relay else 3

    def pack(self, vids: list[int], values: dict[int, int | None]) -> Message:
        word = 0
        shift = 0
        for vid in vids:
            word |= values[vid] << shift
            shift += self.width[vid]
        return Message(word, max(1, shift))

    def unpack(self, vids: list[int], msg: Message) -> dict[int, int]:
        word = msg.value
        out = {}
        for vid in vids:
            w = self.width[vid]
            out[vid] = word & ((1 << w) - 1)
            word >>= w
        return out


def cps_reference(
    inst: LllInstance,
    seed: int = 0,
    round_cap: int | None = None,
    priority: dict[int, int] | None = None,
) -> CpsResult:
    """Pure run of the fixing procedure, drawing from the same positional
    tape as the node program, so both routes agree value for value."""
    key = _keys(inst, priority)
    lay = _VarLayout(inst, key)
    cap = _default_cap(inst.g.n) if round_cap is None else round_cap
    values: dict[int, int | None] = {}
    for vid, spec in inst.variables.items():
        values[vid] = tape_value(seed, spec.owner, lay.slot[vid], spec.range_size)
    status = {
        node: ev.holds({x: values[x] for x in ev.vbl}) for node, ev in inst.events.items()
    }
    violated = {node for node, bad in status.items() if bad}
    trace = []
    t = 0
    while violated and t < cap:
        t += 1
        minima = _local_minima(violated, inst.dep, key)
        trace.append((frozenset(violated), minima))
        touched: set[int] = set()
        for node in minima:
            touched.update(inst.events[node].vbl)
        for vid in sorted(touched):
            spec = inst.variables[vid]
            values[vid] = tape_value(
                seed, spec.owner, t * lay.stride + lay.slot[vid], spec.range_size
            )
        recheck = {h for vid in touched for h in lay.hosts_of_var[vid]}
        for node in recheck:
            ev = inst.events[node]
            if ev.holds({x: values[x] for x in ev.vbl}):
                violated.add(node)
            else:
                violated.discard(node)
    out = Assignment.empty(inst)
    for vid, val in values.items():
        out.set_value(vid, val)
    return CpsResult(
        assignment=out,
        iterations=t,
        success=not violated,
        violated=tuple(sorted(violated)),
        trace=tuple(trace),
    )


class _CpsProgram(NodeProgram):
    """Node program for the fixing procedure.

    Each pass takes period rounds: a values round (owners resample the
    variables picked last pass, then send fresh frames), a flag round
    (hosts evaluate their event and announce a violation by a 1-bit
    message), an optional relay round (flags forwarded for dependent events
    two hops apart, one bit per neighbor position), and a pick round (each
    violated host that is minimal among its violated dependents announces
    the resample). Absence of a message always means "false" or
    "unchanged".
    """

    def __init__(self, node: int, lay: _VarLayout):
        self.v = node
        self.lay = lay
        inst = lay.inst
        self.my_vars = lay.owned[node]
        self.ev = inst.events.get(node)
        self.values: dict[int, int | None] = {}
        self.view: dict[int, int] = {}
        self.flag = False
        self.in_i = False
        self.nbr_in_i: set[int] = set()
        self.nbr_flags: set[int] = set()
        self.relay_masks: dict[int, int] = {}
        self._done = False

    def finished(self) -> bool:
        return self._done

    def output(self):
        return dict(self.values)

    def on_round(self, rnd: int, inbox: dict[int, Message]) -> dict[int, Message]:
        lay = self.lay
        inst = lay.inst
        t, phase = divmod(rnd, lay.period)
        out: dict[int, Message] = {}
        if phase == 0:
            self.nbr_in_i = set(inbox)
            if t == 0:
                changed = list(self.my_vars)
            else:
                changed = [x for x in self.my_vars if self._resample_wanted(x)]
            for x in changed:
                spec = inst.variables[x]
                self.values[x] = self.ctx.draw_at(
                    t * lay.stride + lay.slot[x], spec.range_size
                )
                if self.ev is not None and x in self.ev._ranges:
                    self.view[x] = self.values[x]
            if changed:
                changed_set = set(changed)
                for u in self.ctx.neighbors:
                    frame = lay.need.get((self.v, u))
                    if frame and (t == 0 or changed_set & set(frame)):
                        out[u] = lay.pack(frame, self.values)
        elif phase == 1:
            for w, msg in inbox.items():
                frame = lay.need.get((w, self.v))
                if frame:
                    self.view.update(lay.unpack(frame, msg))
            if self.ev is not None:
                self.flag = self.ev.holds({x: self.view[x] for x in self.ev.vbl})
                if self.flag:
                    for u in self.ctx.neighbors:
                        out[u] = Message(1, 1)
        elif phase == 2 and lay.needs_relay:
            self.nbr_flags = set(inbox)
            mask = 0
            for i, u in enumerate(self.ctx.neighbors):
                if u in self.nbr_flags:
                    mask |= 1 << i
            if mask:
                for u in self.ctx.neighbors:
                    out[u] = Message(mask, self.ctx.degree)
        else:
            if lay.needs_relay:
                self.relay_masks = {w: msg.value for w, msg in inbox.items()}
            else:
                self.nbr_flags = set(inbox)
            self.in_i = False
            if self.ev is not None and self.flag:
                k = lay.key[self.v]
                worse = True
                for b in lay.near[self.v]:
                    if b in self.nbr_flags and lay.key[b] < k:
                        worse = False
                        break
                if worse:
                    for b in lay.far[self.v]:
                        if lay.key[b] < k and any(
                            (self.relay_masks.get(w, 0) >> pos) & 1
                            for w, pos in lay.far_sources[self.v][b]
                        ):
                            worse = False
                            break
                self.in_i = worse
                if self.in_i:
                    for u in self.ctx.neighbors:
                        out[u] = Message(1, 1)
        return out

    def _resample_wanted(self, vid: int) -> bool:
        for host in self.lay.hosts_of_var.get(vid, ()):
            if host == self.v:
                if self.in_i:
                    return True
            elif host in self.nbr_in_i:
                return True
        return False


def cps_solve(
    inst: LllInstance,
    cfg: SimConfig | None = None,
    round_cap: int | None = None,
    priority: dict[int, int] | None = None,
) -> CpsResult:
    """Run the fixing procedure as a message-passing protocol.

    Under a finite bandwidth budget the instance must be range bounded
    (each value then fits in an O(log d)-bit field); unbounded instances
    run in local mode, with a warning. Stops when nothing is violated or
    after round_cap resampling passes (success False, violated reported).
    """
    cfg = SimConfig() if cfg is None else cfg
    if not inst.range_bounded:
        if cfg.mode == "congest":
            raise InstanceError(
                "instance is not range bounded; a finite-bandwidth run cannot "
                "encode its values, use local mode"
            )
        warnings.warn("instance is not range bounded; proceeding in local mode")
    key = _keys(inst, priority)
    lay = _VarLayout(inst, key)
    cap = _default_cap(inst.g.n) if round_cap is None else round_cap
    programs = [_CpsProgram(v, lay) for v in range(inst.g.n)]
    sim = Simulation(inst.g, programs, cfg)
    trace = []
    t = 0
    while True:
        sim.step()
        sim.step()
        violated = frozenset(v for v in inst.events if programs[v].flag)
        if not violated or t >= cap:
            break
        if lay.needs_relay:
            sim.step()
        sim.step()
        minima = frozenset(v for v in violated if programs[v].in_i)
        trace.append((violated, minima))
        t += 1
    for p in programs:
        p._done = True
    out = Assignment.empty(inst)
    for v in range(inst.g.n):
        for vid, val in programs[v].values.items():
            out.set_value(vid, val)
    return CpsResult(
        assignment=out,
        iterations=t,
        success=not violated,
        violated=tuple(sorted(violated)),
        trace=tuple(trace),
        comm_rounds=sim.metrics.rounds_elapsed,
    )


# ---------------------------------------------------------------------------
# construction and serialization


def sinkless_instance(g: Graph) -> LllInstance:
    """One binary variable per edge (owned by the lower endpoint, value 0
    points at the lower endpoint), one event per non-isolated node that
    holds when every incident edge points at it."""
    edges = g.edges()
    variables = {i: VariableSpec(owner=u, range_size=2) for i, (u, v) in enumerate(edges)}
    incident: dict[int, list[int]] = {v: [] for v in range(g.n)}
    for i, (u, v) in enumerate(edges):
        incident[u].append(i)
        incident[v].append(i)
    events = []
    for v in range(g.n):
        if not incident[v]:
            continue
        vbl = tuple(sorted(incident[v]))
        bad = tuple(0 if edges[i][0] == v else 1 for i in vbl)
        events.append(Event(node=v, vbl=vbl, kind=SINKLESS, bad_values=bad))
    return LllInstance.build(g, variables, events)


def instance_to_json(inst: LllInstance) -> str:
    variables = [
        {"id": vid, "owner": spec.owner, "range": spec.range_size}
        for vid, spec in sorted(inst.variables.items())
    ]
    events = []
    for node in sorted(inst.events):
        ev = inst.events[node]
        entry: dict = {"node": node, "vbl": list(ev.vbl)}
        if ev.kind == SINKLESS:
            entry["predicate"] = SINKLESS
            entry["bad_values"] = list(ev.bad_values)
        else:
            entry["predicate"] = {"table": format(ev.table, "#x")}
        events.append(entry)
    return json.dumps({"variables": variables, "events": events}, indent=2, sort_keys=True)


def instance_from_json(text: str, g: Graph) -> LllInstance:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"instance JSON malformed: {exc}") from exc
    try:
        variables = {
            int(entry["id"]): VariableSpec(int(entry["owner"]), int(entry["range"]))
            for entry in doc["variables"]
        }
        events = []
        for entry in doc["events"]:
            pred = entry["predicate"]
            if pred == SINKLESS:
                events.append(
                    Event(
                        node=int(entry["node"]),
                        vbl=tuple(int(x) for x in entry["vbl"]),
                        kind=SINKLESS,
                        bad_values=tuple(int(b) for b in entry["bad_values"]),
                    )
                )
            else:
                table = pred["table"]
                if isinstance(table, str):
                    table = int(table, 0)
                events.append(
                    Event(
                        node=int(entry["node"]),
                        vbl=tuple(int(x) for x in entry["vbl"]),
                        kind=TABLE,
                        table=int(table),
                    )
                )
    except (KeyError, TypeError, ValueError) as exc:
        raise InstanceError(f"instance JSON malformed: {exc}") from exc
    return LllInstance.build(g, variables, events)
