"""Conditional-expectation derandomization for local event systems.

The randomized program under consideration is the bounded resampler: draw
every unset variable from a positional tape, then repeatedly resample the
locally-minimal violated events for a fixed number of passes. A run fails
at a node when its event still holds at the end. Fixing the tapes value by
value so that the exact expected failure count never rises turns the
program into a deterministic one: once the expectation is below one and
every tape is fixed, the failure count is an integer below one, hence
zero.

Fixing happens cluster by cluster over a network decomposition whose
cluster distance exceeds four times the program's information radius, so
same-class clusters touch disjoint neighborhoods and commute. The
distributed realization would gather each cluster's neighborhood at its
leader over the Steiner tree and disseminate the fixed values back; this
module performs those steps centrally and keeps the exact bookkeeping.

A second, direct variant fixes the instance's variables themselves (no
program, no tapes) over a few-color decomposition of the squared
dependency graph; it needs the raw event probabilities to sum below one
and runs without bandwidth limits.
"""

from __future__ import annotations

import itertools
import json
import warnings
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from math import prod

from .decompose import decompose_few_colors, decompose_logn
from .engine import SimConfig
from .errors import AuditError, BudgetExceeded, InstanceError
from .graphs import Graph, log2_ceil
from .lll import (
    DEFAULT_ENUM_BUDGET,
    Assignment,
    LllInstance,
    check_criteria,
    event_probability,
    validate_assignment,
)

DEFAULT_DERAND_BUDGET = 1 << 22

# the resampler needs a bounded number of simulator rounds per pass; the
# round budget is divided by this to get the pass budget
ROUNDS_PER_PASS = 4

ROUNDS_FACTOR = 4


@dataclass(frozen=True)
class DerandParams:
    """Knobs for one component derandomization.

    rounds is the simulator-round budget of the randomized program (the
    resampler completes rounds // ROUNDS_PER_PASS passes within it) and
    radius the verification radius, one for event systems. Same-class
    clusters must sit at distance at least 4*(rounds+radius)+1 so their
    fixings cannot interact."""

    rounds: int = 0
    radius: int = 1
    budget: int = DEFAULT_DERAND_BUDGET
    max_size: int | None = None

    def __post_init__(self):
        if self.rounds < 0:
            raise InstanceError(f"round budget must be >= 0, got {self.rounds}")
        if self.radius < 1:
            raise InstanceError(f"verification radius must be >= 1, got {self.radius}")
        if self.budget < 1:
            raise InstanceError(f"enumeration budget must be >= 1, got {self.budget}")

    @property
    def passes(self) -> int:
        return self.rounds // ROUNDS_PER_PASS

    @property
    def cluster_distance(self) -> int:
        return 4 * (self.rounds + self.radius) + 1

    @staticmethod
    def default_rounds(component_size: int) -> int:
        return ROUNDS_FACTOR * log2_ceil(max(component_size, 2))


class PartialFixing:
    """Per-node fixed tape prefixes; grows monotonically during a run."""

    def __init__(self, values: dict[int, list[int]] | None = None):
        self.values: dict[int, list[int]] = {
            w: list(vs) for w, vs in (values or {}).items()
        }

    def value_at(self, node: int, pos: int) -> int | None:
        prefix = self.values.get(node)
        if prefix is None or pos >= len(prefix):
            return None
        return prefix[pos]

    def append(self, node: int, value: int, range_size: int) -> None:
        if not 0 <= value < range_size:
            raise InstanceError(
                f"fixed value {value} outside range {range_size} at node {node}"
            )
        self.values.setdefault(node, []).append(value)

    def pop(self, node: int) -> None:
        self.values[node].pop()

    def fixed_nodes(self, lengths: dict[int, int]) -> set[int]:
        return {
            w for w, need in lengths.items()
            if need == 0 or len(self.values.get(w, [])) >= need
        }

    def copy(self) -> "PartialFixing":
        return PartialFixing(self.values)


@dataclass(frozen=True)
class ClusterLayers:
    """A cluster and its two surrounding distance shells: near reaches the
    program's information radius, far doubles it. Same-class layer unions
    are disjoint whenever the cluster distance exceeds four radii."""

    core: frozenset[int]
    near: frozenset[int]
    far: frozenset[int]

    @property
    def all_nodes(self) -> frozenset[int]:
        return self.core | self.near | self.far


def cluster_layers(g: Graph, members, reach: int) -> ClusterLayers:
    """BFS shells around the member set: (0, reach] and (reach, 2*reach]."""
    core = frozenset(members)
    dist = {v: 0 for v in core}
    queue = deque(sorted(core))
    while queue:
        u = queue.popleft()
        if dist[u] >= 2 * reach:
            continue
        for w in g.adj[u]:
            if w not in dist:
                dist[w] = dist[u] + 1
                queue.append(w)
    near = frozenset(v for v, d in dist.items() if 0 < d <= reach)
    far = frozenset(v for v, d in dist.items() if reach < d <= 2 * reach)
    return ClusterLayers(core, near, far)


class _ProgramLayout:
    """Positional tapes for one component: each node's tape is a run of
    per-pass blocks, one slot per owned unset variable in ascending id
    order."""

    def __init__(self, inst: LllInstance, comp_vars, base: Assignment, passes: int):
        self.passes = passes
        owned: dict[int, list[int]] = {}
        for x in sorted(comp_vars):
            if base.values[x] is None:
                owned.setdefault(inst.variables[x].owner, []).append(x)
        self.owned = owned
        self.slot = {x: i for xs in owned.values() for i, x in enumerate(xs)}
        self.block = {w: len(xs) for w, xs in owned.items()}
        self.length = {w: (passes + 1) * len(xs) for w, xs in owned.items()}
        self._ranges = {
            w: [inst.variables[x].range_size for x in xs] for w, xs in owned.items()
        }

    def position(self, inst: LllInstance, x: int, epoch: int) -> tuple[int, int]:
        w = inst.variables[x].owner
        return w, epoch * self.block[w] + self.slot[x]

    def range_of(self, node: int, pos: int) -> int:
        return self._ranges[node][pos % self.block[node]]

    def var_of(self, node: int, pos: int) -> int:
        return self.owned[node][pos % self.block[node]]


def _execute(inst, subset, base, layout, value_at, passes):
    """Run the bounded resampler over the given events with tape values
    supplied by value_at(node, pos); returns the final values of the unset
    variables those events watch."""
    watched = sorted(
        {x for v in subset for x in inst.events[v].vbl if base.values[x] is None}
    )
    values: dict[int, int] = {}
    for x in watched:
        w, pos = layout.position(inst, x, 0)
        values[x] = value_at(w, pos)

    def holds(v: int) -> bool:
        ev = inst.events[v]
        return ev.holds(
            {x: values.get(x, base.values[x]) for x in ev.vbl}
        )

    key = {v: (inst.g.ids[v], v) for v in subset}
    for t in range(1, passes + 1):
        violated = {v for v in subset if holds(v)}
        if not violated:
            break
        chosen = [
            v
            for v in violated
            if all(
                key[v] <= key[u]
                for u in inst.dep[v]
                if u in violated
            )
        ]
        for v in chosen:
            for x in inst.events[v].vbl:
                if base.values[x] is None:
                    w, pos = layout.position(inst, x, t)
                    values[x] = value_at(w, pos)
    return values


def _influence_ball(inst, comp_events, v, passes):
    """Events whose initial tapes can reach the failure flag at v: the
    dependency ball of radius 2*passes+1 (radius 0 for a pass-free run)."""
    if passes == 0:
        return frozenset([v])
    radius = 2 * passes + 1
    dist = {v: 0}
    queue = deque([v])
    while queue:
        u = queue.popleft()
        if dist[u] >= radius:
            continue
        for w in inst.dep[u]:
            if w in comp_events and w not in dist:
                dist[w] = dist[u] + 1
                queue.append(w)
    return frozenset(dist)


def _term_probability(inst, comp_events, base, layout, fixing, v, params):
    """Exact P(the run fails at v | fixed tape values)."""
    passes = params.passes
    if passes == 0:
        # no resampling: failure at v is the event holding under the fixed
        # initial draws, every other position integrates out uniformly
        conditioned = base.copy()
        for x in inst.events[v].vbl:
            if base.values[x] is None:
                w, pos = layout.position(inst, x, 0)
                val = fixing.value_at(w, pos)
                if val is not None:
                    conditioned.set_value(x, val)
        return event_probability(inst, v, conditioned, budget=params.budget)

    ball = _influence_ball(inst, comp_events, v, passes)
    ball_vars = sorted(
        {x for u in ball for x in inst.events[u].vbl if base.values[x] is None}
    )
    open_positions: list[tuple[int, int, int]] = []
    for t in range(passes + 1):
        for x in ball_vars:
            w, pos = layout.position(inst, x, t)
            if fixing.value_at(w, pos) is None:
                open_positions.append((w, pos, inst.variables[x].range_size))
    open_positions.sort()
    space = prod(r for _, _, r in open_positions)
    if space > params.budget:
        raise BudgetExceeded(
            space, params.budget, f"tape neighborhood of the event at node {v}"
        )

    fails = 0
    for combo in itertools.product(*[range(r) for _, _, r in open_positions]):
        trial = {
            (w, pos): val for (w, pos, _), val in zip(open_positions, combo)
        }

        def value_at(w, pos):
            fixed = fixing.value_at(w, pos)
            return trial[(w, pos)] if fixed is None else fixed

        values = _execute(inst, ball, base, layout, value_at, passes)
        ev = inst.events[v]
        if ev.holds({x: values.get(x, base.values[x]) for x in ev.vbl}):
            fails += 1
    return Fraction(fails, space)


def failure_expectation(component, inst, base, fixing, scope, params):
    """Exact expected number of failed events in scope when the resampler
    runs with the fixed tape values and uniform draws elsewhere.

    Computed term by term over the scope (linearity); each term enumerates
    only the tape positions inside its influence ball, and that product
    space is what the budget bounds."""
    comp_events = frozenset(component[0])
    layout = _ProgramLayout(inst, component[1], base, params.passes)
    out = Fraction(0)
    for v in sorted(scope):
        if v not in comp_events:
            raise InstanceError(f"scope node {v} is outside the component")
        out += _term_probability(inst, comp_events, base, layout, fixing, v, params)
    return out


def audit_to_jsonl(log: list[dict]) -> str:
    """One JSON object per fixed value."""
    return "\n".join(json.dumps(entry, sort_keys=True) for entry in log)


def _fail(message: str, log: list[dict]) -> AuditError:
    err = AuditError(message)
    err.audit_log = list(log)
    return err


def derandomize_component(
    component,
    inst: LllInstance,
    base: Assignment,
    params: DerandParams,
    cfg: SimConfig | None = None,
):
    """Fix the tapes of every node owning one of the component's unset
    variables so the resampler provably avoids all the component's events.

    Returns (tapes, assignment, audit log): the per-node fixed tapes, the
    base assignment extended with the final values of the component's
    variables, and one log entry per fixed value showing the exact
    expectation before and after. The expectation over the touched layer
    union must never rise and the component-wide bound must stay below
    one; any breach raises AuditError with the log attached."""
    comp_events = frozenset(component[0])
    comp_vars = frozenset(component[1])
    audit_log: list[dict] = []
    unknown = [v for v in comp_events if v not in inst.events]
    if unknown:
        raise InstanceError(f"component event nodes {sorted(unknown)} have no event")
    expected_vars = {
        x
        for v in comp_events
        for x in inst.events[v].vbl
        if base.values[x] is None
    }
    if comp_vars != expected_vars:
        raise InstanceError(
            "component variable set does not match the unset variables of its events"
        )
    if not comp_events:
        return {}, base.copy(), audit_log
    if params.max_size is not None and len(comp_events) > params.max_size:
        raise InstanceError(
            f"component has {len(comp_events)} events, cap is {params.max_size}"
        )
    if not inst.range_bounded:
        warnings.warn("instance is not range bounded; derandomizing anyway")

    layout = _ProgramLayout(inst, comp_vars, base, params.passes)
    comp_id = min(comp_events)

    hosts = set(comp_events) | {inst.variables[x].owner for x in comp_vars}
    host_graph, back = inst.g.induced(hosts)
    inv = {i: u for u, i in back.items()}
    nd = decompose_logn(host_graph, params.cluster_distance - 1, cfg=cfg)

    fixing = PartialFixing()
    bound = failure_expectation(component, inst, base, fixing, comp_events, params)
    if bound >= 1:
        raise _fail(
            f"initial expected failure count {bound} is not below one", audit_log
        )

    reach = params.rounds + params.radius
    for class_index, cc in enumerate(nd.color_classes):
        layer_map = {
            cid: cluster_layers(host_graph, cc.clusters[cid], reach)
            for cid in cc.cluster_ids()
        }
        taken: dict[int, int] = {}
        for cid in cc.cluster_ids():
            for i in layer_map[cid].all_nodes:
                if i in taken:
                    raise _fail(
                        f"layer unions of same-class clusters {taken[i]} and {cid} "
                        f"overlap at node {inv[i]}",
                        audit_log,
                    )
                taken[i] = cid

        for cid in cc.cluster_ids():
            lay = layer_map[cid]
            scope = frozenset(inv[i] for i in lay.all_nodes) & comp_events
            members = sorted(
                (inv[i] for i in lay.core), key=lambda u: (inst.g.ids[u], u)
            )
            before = failure_expectation(
                component, inst, base, fixing, scope, params
            )
            for w in members:
                for pos in range(layout.length.get(w, 0)):
                    rng = layout.range_of(w, pos)
                    for val in range(rng):
                        fixing.append(w, val, rng)
                        after = failure_expectation(
                            component, inst, base, fixing, scope, params
                        )
                        if after <= before:
                            break
                        fixing.pop(w)
                    else:
                        raise _fail(
                            f"no value at node {w} position {pos} keeps the "
                            f"expectation from rising",
                            audit_log,
                        )
                    bound -= before - after
                    audit_log.append(
                        {
                            "component": comp_id,
                            "class": class_index,
                            "cluster": cid,
                            "node": w,
                            "position": pos,
                            "value": fixing.value_at(w, pos),
                            "before": str(before),
                            "after": str(after),
                        }
                    )
                    if bound >= 1:
                        raise _fail(
                            f"expected failure count reached {bound} after fixing "
                            f"node {w} position {pos}",
                            audit_log,
                        )
                    before = after

    missing = [
        w
        for w in sorted(layout.length)
        if len(fixing.values.get(w, [])) < layout.length[w]
    ]
    if missing:
        raise _fail(f"nodes {missing} were never assigned to a cluster", audit_log)

    final = _execute(
        inst, comp_events, base, layout, fixing.value_at, params.passes
    )
    out = base.copy()
    for x in comp_vars:
        out.set_value(x, final[x])
        out.frozen.discard(x)
    failures = [
        v
        for v in sorted(comp_events)
        if inst.events[v].holds({x: out.values[x] for x in inst.events[v].vbl})
    ]
    if failures:
        raise _fail(
            f"derandomized run still fails at nodes {failures}", audit_log
        )
    tapes = {w: tuple(vals) for w, vals in sorted(fixing.values.items())}
    return tapes, out, audit_log


def deterministic_lll(
    inst: LllInstance,
    base: Assignment,
    residual,
    cfg: SimConfig | None = None,
    params: DerandParams | None = None,
    budget: int = DEFAULT_DERAND_BUDGET,
):
    """Derandomize every residual component; returns one extended
    assignment per component, each with zero violated events.

    With params unset, each component gets a pass-free program when its
    initial expected failure count is already below one (the usual case
    after pre-shattering) and the default round budget otherwise. The
    result is independent of any engine seed: the fixing is deterministic
    end to end."""
    out = []
    for comp in residual:
        chosen = params
        if chosen is None:
            initial = sum(
                event_probability(inst, v, base, budget=budget) for v in comp[0]
            )
            rounds = (
                0 if initial < 1 else DerandParams.default_rounds(len(comp[0]))
            )
            chosen = DerandParams(rounds=rounds, budget=budget)
        _, assignment, _ = derandomize_component(comp, inst, base, chosen, cfg=cfg)
        out.append(assignment)
    return out


def solve_range_bounded_lll(
    inst: LllInstance,
    cfg: SimConfig | None = None,
    require_power_criterion: bool = True,
    budget: int = DEFAULT_DERAND_BUDGET,
) -> Assignment:
    """Full pipeline: pre-shatter, then derandomize every residual
    component, then merge into one total assignment with no violated
    events.

    By default the instance must satisfy the eighth-power criterion
    p(ed)^8 < 1; with require_power_criterion=False only the weaker bound
    the pipeline actually relies on is enforced, sqrt(p)*(d+1) < 1, which
    admits inputs whose degree is too large for the stricter form."""
    from .preshatter import preshatter

    report = check_criteria(inst, budget=min(budget, DEFAULT_ENUM_BUDGET))
    if require_power_criterion:
        if not report.ok_ped8:
            err = InstanceError(
                f"criterion p(ed)^8 < 1 fails: value {report.value_ped8:.6g}"
            )
            err.report = report
            raise err
    elif not report.p * (inst.d + 1) ** 2 < 1:
        err = InstanceError(
            f"residual criterion sqrt(p)*(d+1) < 1 fails at p={report.p}, d={inst.d}"
        )
        err.report = report
        raise err

    base, residual = preshatter(inst, cfg, budget=min(budget, DEFAULT_ENUM_BUDGET))
    fixes = deterministic_lll(inst, base, residual, cfg=cfg, budget=budget)
    merged = base.copy()
    for (comp_events, comp_vars), fixed in zip(residual, fixes):
        for x in sorted(comp_vars):
            merged.set_value(x, fixed.values[x])
            merged.frozen.discard(x)
    bad = validate_assignment(inst, merged)
    if bad:
        raise AuditError(f"merged assignment still violates events at {bad}")
    return merged


def local_lambda_lll(
    inst: LllInstance,
    lam: int,
    cfg: SimConfig | None = None,
    budget: int = DEFAULT_DERAND_BUDGET,
    require_criterion: bool = True,
    trace: dict | None = None,
) -> Assignment:
    """Fix the instance's variables directly, cluster by cluster over a
    lam-color decomposition of the squared dependency graph, keeping the
    exact sum of conditional event probabilities below one throughout.

    An unbounded-bandwidth solver: refuses a bandwidth-limited config.
    Requires p(ed)^lam < 1 and, for the potential to start below one, raw
    event probabilities summing below one. require_criterion=False drops
    the first gate and relies on the second alone, which the fixing
    argument actually needs. A trace dict receives "initial" and
    "cluster_sums", the exact potential after every cluster."""
    if lam < 1:
        raise InstanceError(f"class budget must be >= 1, got {lam}")
    if cfg is not None and cfg.mode == "congest":
        raise InstanceError(
            "direct variable fixing needs unbounded messages; use local mode"
        )
    report = check_criteria(inst, lam=lam, budget=min(budget, DEFAULT_ENUM_BUDGET))
    if require_criterion and inst.events and not report.ok_pedl:
        err = InstanceError(
            f"criterion p(ed)^{lam} < 1 fails: value {report.value_pedl:.6g}"
        )
        err.report = report
        raise err

    a = Assignment.empty(inst)
    events = sorted(inst.events)
    if events:
        running = sum(event_probability(inst, v, a, budget=budget) for v in events)
        if running >= 1:
            raise InstanceError(
                f"event probabilities sum to {running}; direct fixing needs the "
                f"sum below one"
            )
        if trace is not None:
            trace["initial"] = running
            trace["cluster_sums"] = []

        if len(events) == 1:
            classes: list[list[list[int]]] = [[[events[0]]]]
        else:
            idx = {v: i for i, v in enumerate(events)}
            h_edges = sorted(
                {
                    (min(idx[u], idx[v]), max(idx[u], idx[v]))
                    for u in events
                    for v in inst.dep[u]
                }
            )
            h_graph = Graph.build(
                len(events), h_edges, ids=[inst.g.ids[v] for v in events]
            )
            square_edges = set(h_edges)
            for mid in range(h_graph.n):
                around = h_graph.adj[mid]
                for i, u in enumerate(around):
                    for v in around[i + 1 :]:
                        square_edges.add((min(u, v), max(u, v)))
            h2_graph = Graph.build(
                len(events), sorted(square_edges), ids=list(h_graph.ids)
            )
            lam_eff = max(1, min(lam, log2_ceil(h2_graph.n)))
            nd = decompose_few_colors(h2_graph, lam_eff, 1, cfg=cfg)
            classes = [
                [sorted(events[i] for i in cc.clusters[cid]) for cid in cc.cluster_ids()]
                for cc in nd.color_classes
            ]

        for cluster_list in classes:
            for members in cluster_list:
                for v in members:
                    for x in inst.events[v].vbl:
                        if a.values[x] is not None:
                            continue
                        spec = inst.variables[x]
                        for val in range(spec.range_size):
                            a.set_value(x, val)
                            after = sum(
                                event_probability(inst, u, a, budget=budget)
                                for u in events
                            )
                            if after <= running:
                                running = after
                                break
                            a.unset(x)
                        else:
                            raise AuditError(
                                f"no value of variable {x} keeps the probability "
                                f"sum from rising"
                            )
                if trace is not None:
                    trace["cluster_sums"].append(running)
                if running >= 1:
                    raise AuditError(
                        f"probability sum reached {running} after a cluster fixing"
                    )

    for x in sorted(inst.variables):
        if a.values[x] is None:
            a.set_value(x, 0)
    bad = validate_assignment(inst, a)
    if bad:
        raise AuditError(f"direct fixing left events violated at {bad}")
    return a
