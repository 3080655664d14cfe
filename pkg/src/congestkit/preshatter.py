"""Pre-shattering: fix most variables up front, leave small isolated residues.

The phase walks a distance-2 coloring of the dependency graph class by
class. A processed event samples its untouched variables; any event whose
conditional probability then reaches the square root of the worst initial
probability gets all its variables taken back (unset) and frozen, never to
be sampled again here. Frozen regions are what remains for a residual
solver, and they form small, variable-disjoint islands: every event outside
them ends fully assigned and avoided, and every event inside them would
fail with probability at most sqrt(p) if its frozen variables were redrawn.

All threshold comparisons are exact: q >= sqrt(p) is decided as q*q >= p.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction

from .engine import SimConfig, tape_value
from .errors import AuditError
from .linial import check_proper, color_by_ids, square_adjacency
from .lll import DEFAULT_ENUM_BUDGET, Assignment, LllInstance, check_criteria, event_probability

D2_COLOR_FACTOR = 4

# Largest dependency-connected residual component stays below this multiple
# of log2 n in seeded sweeps over bounded-degree inputs (empirical cushion
# over the worst observation, which was 5.4x at degree 10, n = 1024).
RESIDUAL_SIZE_FACTOR = 6


def distance2_coloring(inst: LllInstance) -> dict[int, int]:
    """Proper coloring of the square of the dependency graph, at most
    4 * max(d,1)**2 colors, from node identifiers."""
    if not inst.events:
        return {}
    adj2 = square_adjacency({v: set(inst.dep[v]) for v in inst.events})
    target = D2_COLOR_FACTOR * max(inst.d, 1) ** 2
    colors = color_by_ids(adj2, {v: inst.g.ids[v] for v in inst.events}, target)
    check_proper(adj2, colors)
    return colors


def _h_components(inst: LllInstance, members: set[int]) -> list[set[int]]:
    seen: set[int] = set()
    comps = []
    for start in sorted(members):
        if start in seen:
            continue
        comp = {start}
        queue = [start]
        seen.add(start)
        while queue:
            v = queue.pop()
            for u in inst.dep[v]:
                if u in members and u not in seen:
                    seen.add(u)
                    comp.add(u)
                    queue.append(u)
        comps.append(comp)
    return comps


def preshatter(
    inst: LllInstance,
    cfg: SimConfig | None = None,
    budget: int = DEFAULT_ENUM_BUDGET,
    trace: dict | None = None,
) -> tuple[Assignment, list[tuple[frozenset[int], frozenset[int]]]]:
    """Run the fixing phase; returns the partial assignment (unset variables
    are exactly the frozen ones) and the residual components, each a
    (dependency-connected event set, its unset variable set) pair.

    The freeze threshold is the square root of the worst initial event
    probability. A certain event among the fully assigned ones, or a
    residual violating its relaxed criterion although the input satisfied
    the strong one, raises AuditError.

    Passing a dict as trace fills it with the threshold base "p" and
    "freeze_q", each frozen event's conditional probability at the moment
    it crossed.
    """
    seed = 0 if cfg is None else cfg.seed
    if not inst.range_bounded:
        warnings.warn("instance is not range bounded; pre-shattering runs anyway")
    report = check_criteria(inst, budget=budget)
    p = report.p
    a = Assignment.empty(inst)
    colors = distance2_coloring(inst)

    slot: dict[int, int] = {}
    per_owner: dict[int, int] = {}
    for vid in sorted(inst.variables):
        w = inst.variables[vid].owner
        slot[vid] = per_owner.get(w, 0)
        per_owner[w] = slot[vid] + 1

    frozen_events: set[int] = set()

    def crossing(q: Fraction) -> bool:
        return q > 0 and q * q >= p

    def freeze(node: int) -> None:
        frozen_events.add(node)
        for x in inst.events[node].vbl:
            a.unset(x)
            a.freeze(x)

    def recheck(seeds: set[int]) -> None:
        # freezing unsets variables, which can push further neighbors over
        # the threshold; iterate to a fixpoint
        work = set(seeds)
        while work:
            batch = sorted(work)
            work = set()
            for e in batch:
                if e in frozen_events:
                    continue
                q = event_probability(inst, e, a, budget=budget)
                if crossing(q):
                    if trace is not None:
                        trace.setdefault("freeze_q", {})[e] = q
                    freeze(e)
                    work.update(b for b in inst.dep[e] if b not in frozen_events)

    for color in sorted(set(colors.values())):
        for node in sorted(v for v in inst.events if colors[v] == color):
            if node in frozen_events:
                continue
            sampled = False
            for x in inst.events[node].vbl:
                if a.values[x] is None and x not in a.frozen:
                    spec = inst.variables[x]
                    a.set_value(x, tape_value(seed, spec.owner, slot[x], spec.range_size))
                    sampled = True
            if sampled:
                recheck({node} | set(inst.dep[node]))

    # variables no event watches cannot affect any probability; settle them
    # so unset and frozen coincide on the whole variable set
    for x in sorted(inst.variables):
        if a.values[x] is None and x not in a.frozen:
            spec = inst.variables[x]
            a.set_value(x, tape_value(seed, spec.owner, slot[x], spec.range_size))

    flagged = {
        node
        for node, ev in inst.events.items()
        if any(a.values[x] is None for x in ev.vbl)
    }
    for node in inst.events:
        ev = inst.events[node]
        if node in flagged:
            q = event_probability(inst, node, a, budget=budget)
            if crossing(q):
                raise AuditError(f"residual event at {node} sits at or above the freeze threshold")
        elif ev.holds({x: a.values[x] for x in ev.vbl}):
            raise AuditError(f"fully assigned event at {node} still holds")

    components = []
    for comp in _h_components(inst, flagged):
        vids = frozenset(
            x for node in comp for x in inst.events[node].vbl if a.values[x] is None
        )
        components.append((frozenset(comp), vids))
    components.sort(key=lambda pair: min(pair[0]))
    seen_vars: set[int] = set()
    for _, vids in components:
        if seen_vars & vids:
            raise AuditError("residual components share a variable")
        seen_vars |= vids

    if report.ok_ped8 and not p * (inst.d + 1) ** 2 < 1:
        raise AuditError("residual criterion fails although the input met the strong one")
    if trace is not None:
        trace["p"] = p
        trace.setdefault("freeze_q", {})
    return a, components


@dataclass(frozen=True)
class ShatterReport:
    """Component-size statistics of one residual against the shattering
    thresholds: small components in the long-range relation graph (band of
    dependency distances [2*c2+1, 4*c2+2]) and moderately small components
    in the dependency graph itself."""

    events: int
    h_sizes: tuple[int, ...]
    z_sizes: tuple[int, ...]
    delta: int
    log_delta_n: float
    p1_ok: bool
    p2_bound: float
    p2_ok: bool
    c1: int
    c2: int
    implied_c3: int

    def as_dict(self) -> dict:
        return {
            "events": self.events,
            "h_sizes": list(self.h_sizes),
            "z_sizes": list(self.z_sizes),
            "delta": self.delta,
            "log_delta_n": self.log_delta_n,
            "p1_ok": self.p1_ok,
            "p2_bound": self.p2_bound,
            "p2_ok": self.p2_ok,
            "c1": self.c1,
            "c2": self.c2,
            "implied_c3": self.implied_c3,
        }


P2_CONSTANT = 4


def shattering_diagnostics(
    inst: LllInstance,
    residual: list[tuple[frozenset[int], frozenset[int]]],
    c1: int,
    c2: int,
) -> ShatterReport:
    """Measure one residual against the shattering thresholds.

    p1_ok: no component of the distance-band relation graph reaches
    log base delta of n events. p2_ok: no dependency component exceeds
    P2_CONSTANT * log_delta(n) * delta**(2*c2). An empty residual passes
    trivially. c1 and c2 are echoed with the implied failure-probability
    exponent c3 = c1 - 4*c2 - 2.
    """
    if c1 < 1 or c2 < 0:
        raise ValueError(f"need c1 >= 1 and c2 >= 0, got {c1}, {c2}")
    flagged = sorted(node for comp, _ in residual for node in comp)
    base = max(inst.d, 2)
    n = max(inst.g.n, 2)
    log_delta_n = math.log(n) / math.log(base)
    h_sizes = tuple(sorted((len(comp) for comp, _ in residual), reverse=True))

    lo, hi = 2 * c2 + 1, 4 * c2 + 2
    in_b = set(flagged)
    z_adj: dict[int, set[int]] = {v: set() for v in flagged}
    for v in flagged:
        dist = {v: 0}
        frontier = [v]
        depth = 0
        while frontier and depth < hi:
            depth += 1
            nxt = []
            for u in frontier:
                for w in inst.dep[u]:
                    if w not in dist:
                        dist[w] = depth
                        nxt.append(w)
            frontier = nxt
        for u, du in dist.items():
            if u != v and u in in_b and lo <= du <= hi:
                z_adj[v].add(u)
                z_adj[u].add(v)

    z_sizes = []
    seen: set[int] = set()
    for start in flagged:
        if start in seen:
            continue
        comp = {start}
        queue = [start]
        seen.add(start)
        while queue:
            v = queue.pop()
            for u in z_adj[v]:
                if u not in seen:
                    seen.add(u)
                    comp.add(u)
                    queue.append(u)
        z_sizes.append(len(comp))
    z_sizes = tuple(sorted(z_sizes, reverse=True))

    p2_bound = log_delta_n * float(base) ** (2 * c2)
    return ShatterReport(
        events=len(flagged),
        h_sizes=h_sizes,
        z_sizes=z_sizes,
        delta=base,
        log_delta_n=log_delta_n,
        p1_ok=(not z_sizes) or z_sizes[0] < log_delta_n,
        p2_bound=p2_bound,
        p2_ok=(not h_sizes) or h_sizes[0] <= P2_CONSTANT * p2_bound,
        c1=c1,
        c2=c2,
        implied_c3=c1 - 4 * c2 - 2,
    )
