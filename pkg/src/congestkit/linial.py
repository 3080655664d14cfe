"""Deterministic color reduction and MIS on small auxiliary graphs.

Used wherever the toolkit needs a symmetry-break that depends only on
identifiers: a polynomial color-reduction phase collapses a huge palette
(node identifiers) to roughly (degree * palette-digits)^2 colors, a few
phases reach a poly(degree) palette, class-by-class greedy sweeps finish
the job. Everything here is a pure function of the adjacency and the
starting colors; nodes may be arbitrary hashable keys.

Each reduction phase reads only each node's own color and its neighbors'
colors, and each greedy sweep processes one color class (an independent
set) at a time, so the schedule maps one-to-one onto synchronous rounds.
"""

from __future__ import annotations


def _is_prime(q: int) -> bool:
    if q < 2:
        return False
    if q % 2 == 0:
        return q == 2
    f = 3
    while f * f <= q:
        if q % f == 0:
            return False
        f += 2
    return True


def _next_prime(q: int) -> int:
    while not _is_prime(q):
        q += 1
    return q


def _phase_field(palette: int, degree: int) -> tuple[int, int]:
    """Smallest prime q with q^d >= palette and q > degree*(d-1): distinct
    degree-(d-1) polynomials over F_q collide with at most degree*(d-1)
    of the q evaluation points."""
    q = _next_prime(max(2, degree + 1))
    while True:
        d = 1
        while q**d < palette:
            d += 1
        if q > degree * (d - 1):
            return q, d
        q = _next_prime(q + 1)


def reduce_phase(
    adj: dict, colors: dict, palette: int
) -> tuple[dict, int]:
    """One color-reduction phase: palette -> q**2 for the phase field q.

    Requires a proper coloring; produces a proper coloring. Each node's new
    color depends only on its own and its neighbors' old colors.
    """
    degree = max((len(ns) for ns in adj.values()), default=0)
    q, d = _phase_field(palette, max(1, degree))

    def digits(c: int) -> list[int]:
        out = []
        for _ in range(d):
            out.append(c % q)
            c //= q
        return out

    def evaluate(coeffs: list[int], a: int) -> int:
        acc = 0
        for co in reversed(coeffs):
            acc = (acc * a + co) % q
        return acc

    new: dict = {}
    for v in adj:
        own = digits(colors[v])
        taken = [digits(colors[u]) for u in adj[v] if colors[u] != colors[v]]
        for a in range(q):
            mine = evaluate(own, a)
            if all(evaluate(t, a) != mine for t in taken):
                new[v] = a * q + mine
                break
        else:
            raise AssertionError("phase field too small for a collision-free point")
    return new, q * q


def greedy_reduce(adj: dict, colors: dict, palette: int, target: int) -> dict:
    """Proper recoloring into palette [0, target), target > max degree.

    Classes are swept from the top down; each class is an independent set,
    so all its nodes can move in the same round.
    """
    degree = max((len(ns) for ns in adj.values()), default=0)
    if target <= degree:
        raise ValueError(f"target {target} must exceed the degree {degree}")
    colors = dict(colors)
    for c in range(palette - 1, target - 1, -1):
        for v in [v for v in adj if colors[v] == c]:
            used = {colors[u] for u in adj[v]}
            colors[v] = next(x for x in range(target) if x not in used)
    return colors


def reduce_colors(adj: dict, colors: dict, palette: int, target: int) -> dict:
    """Phase reductions until they stop shrinking the palette, then greedy
    sweeps down to [0, target)."""
    if palette <= target:
        return dict(colors)
    while True:
        new_colors, new_palette = reduce_phase(adj, colors, palette)
        if new_palette >= palette:
            break
        colors, palette = new_colors, new_palette
    if palette > target:
        colors = greedy_reduce(adj, colors, palette, target)
    return colors


def color_by_ids(adj: dict, ids: dict, target: int) -> dict:
    """Proper coloring with palette [0, target) from distinct identifiers."""
    if not adj:
        return {}
    check_proper(adj, ids)
    palette = max(ids.values()) + 1
    return reduce_colors(adj, ids, palette, target)


def check_proper(adj: dict, colors: dict) -> None:
    for v, ns in adj.items():
        for u in ns:
            if colors[u] == colors[v]:
                raise AssertionError(f"nodes {v!r} and {u!r} share color {colors[v]}")


def mis_from_coloring(adj: dict, colors: dict) -> set:
    """Maximal independent set by sweeping color classes in ascending
    order; each class joins in parallel wherever no neighbor joined yet."""
    selected: set = set()
    blocked: set = set()
    for c in sorted(set(colors.values())):
        for v in sorted((v for v in adj if colors[v] == c), key=repr):
            if v not in blocked:
                selected.add(v)
                blocked.add(v)
                blocked.update(adj[v])
    return selected


def check_mis(adj: dict, mis: set) -> None:
    for v in mis:
        for u in adj[v]:
            if u in mis:
                raise AssertionError(f"MIS nodes {v!r} and {u!r} are adjacent")
    for v in adj:
        if v not in mis and not any(u in mis for u in adj[v]):
            raise AssertionError(f"node {v!r} has no MIS node in its closed neighborhood")


def square_adjacency(adj: dict) -> dict:
    """Adjacency of the square graph: distance one or two, same key set."""
    out = {v: set() for v in adj}
    for v, ns in adj.items():
        for u in ns:
            out[v].add(u)
            for w in adj[u]:
                if w != v:
                    out[v].add(w)
    return out
