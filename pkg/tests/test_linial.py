"""Color reduction and MIS utilities."""

import random

from hypothesis import given, settings
from hypothesis import strategies as st
import pytest

from congestkit.linial import (
    check_mis,
    check_proper,
    color_by_ids,
    greedy_reduce,
    mis_from_coloring,
    reduce_colors,
    reduce_phase,
    square_adjacency,
)


def distinct_ints(rng, count, bits):
    seen = set()
    while len(seen) < count:
        seen.add(rng.getrandbits(bits))
    return sorted(seen)


def random_adjacency(n, p, rng):
    adj = {v: set() for v in range(n)}
    for u in range(n):
        for v in range(u + 1, n):
            if rng.random() < p:
                adj[u].add(v)
                adj[v].add(u)
    return adj


def test_phase_preserves_properness_and_shrinks():
    rng = random.Random(7)
    adj = random_adjacency(30, 0.2, rng)
    ids = dict(zip(range(30), distinct_ints(rng, 30, 64)))
    colors, palette = reduce_phase(adj, ids, 1 << 64)
    check_proper(adj, colors)
    assert palette < 1 << 64
    assert all(c < palette for c in colors.values())


def test_reduce_colors_hits_target_fast():
    rng = random.Random(3)
    adj = random_adjacency(40, 0.15, rng)
    degree = max(len(ns) for ns in adj.values())
    ids = dict(zip(range(40), distinct_ints(rng, 40, 256)))
    target = 4 * degree * degree
    colors = reduce_colors(adj, ids, 1 << 256, target)
    check_proper(adj, colors)
    assert all(0 <= c < target for c in colors.values())


def test_color_by_ids_small_palette():
    adj = {0: {1}, 1: {0, 2}, 2: {1}}
    colors = color_by_ids(adj, {0: 900, 1: 901, 2: 902}, target=16)
    check_proper(adj, colors)
    assert all(c < 16 for c in colors.values())


def test_color_by_ids_rejects_duplicate_ids_on_edge():
    adj = {0: {1}, 1: {0}}
    with pytest.raises(AssertionError):
        color_by_ids(adj, {0: 5, 1: 5}, target=4)


def test_color_by_ids_empty():
    assert color_by_ids({}, {}, target=4) == {}


def test_greedy_reduce_needs_room():
    adj = {0: {1, 2}, 1: {0, 2}, 2: {0, 1}}
    with pytest.raises(ValueError):
        greedy_reduce(adj, {0: 0, 1: 1, 2: 2}, 3, target=2)


def test_greedy_reduce_triangle():
    adj = {0: {1, 2}, 1: {0, 2}, 2: {0, 1}}
    colors = greedy_reduce(adj, {0: 9, 1: 5, 2: 7}, 10, target=3)
    check_proper(adj, colors)
    assert sorted(colors.values()) == [0, 1, 2]


def test_mis_path():
    adj = {0: {1}, 1: {0, 2}, 2: {1, 3}, 3: {2}}
    mis = mis_from_coloring(adj, {0: 0, 1: 1, 2: 0, 3: 1})
    check_mis(adj, mis)
    assert mis == {0, 2}


def test_square_adjacency_path():
    adj = {0: {1}, 1: {0, 2}, 2: {1, 3}, 3: {2}}
    sq = square_adjacency(adj)
    assert sq[0] == {1, 2}
    assert sq[1] == {0, 2, 3}
    assert sq[3] == {1, 2}


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=0, max_value=2**31), st.integers(2, 18))
def test_random_graphs_color_and_mis(seed, n):
    rng = random.Random(seed)
    adj = random_adjacency(n, 0.3, rng)
    ids = dict(zip(range(n), rng.sample(range(1 << 40), n)))
    degree = max(len(ns) for ns in adj.values())
    target = max(1, 4 * degree * degree)
    colors = color_by_ids(adj, ids, target)
    check_proper(adj, colors)
    assert all(c < target for c in colors.values())
    mis = mis_from_coloring(adj, colors)
    check_mis(adj, mis)

    sq = square_adjacency(adj)
    sq_degree = max(len(ns) for ns in sq.values())
    sq_colors = color_by_ids(adj=sq, ids=ids, target=max(1, 4 * sq_degree * sq_degree))
    check_proper(sq, sq_colors)
    mis2 = mis_from_coloring(sq, sq_colors)
    check_mis(sq, mis2)


def test_determinism():
    rng = random.Random(11)
    adj = random_adjacency(25, 0.25, rng)
    ids = dict(zip(range(25), distinct_ints(rng, 25, 128)))
    a = color_by_ids(adj, ids, 512)
    b = color_by_ids(adj, ids, 512)
    assert a == b
    assert mis_from_coloring(adj, a) == mis_from_coloring(adj, b)


def test_phase_count_stays_tiny_for_huge_ids():
    adj = {0: {1}, 1: {0, 2}, 2: {1}}
    ids = {0: 1 << 255, 1: (1 << 254) + 3, 2: 17}
    phases = 0
    colors, palette = dict(ids), 1 << 256
    while palette > 64:
        colors, palette = reduce_phase(adj, colors, palette)
        phases += 1
        assert phases < 10
    check_proper(adj, colors)
