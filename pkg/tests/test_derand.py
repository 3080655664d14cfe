"""Derandomization: exact failure expectations, cluster-by-cluster tape
fixing, the end-to-end pipeline, and the direct variable-fixing solver."""

import itertools
import json
import random
from fractions import Fraction

import pytest

from congestkit.derand import (
    ROUNDS_PER_PASS,
    ClusterLayers,
    DerandParams,
    PartialFixing,
    _execute,
    _ProgramLayout,
    audit_to_jsonl,
    cluster_layers,
    derandomize_component,
    deterministic_lll,
    failure_expectation,
    local_lambda_lll,
    solve_range_bounded_lll,
)
from congestkit.engine import SimConfig
from congestkit.errors import AuditError, BudgetExceeded, InstanceError
from congestkit.graphs import Graph
from congestkit.lll import (
    Assignment,
    Event,
    LllInstance,
    VariableSpec,
    sinkless_instance,
    validate_assignment,
)
from congestkit.preshatter import preshatter

from util import circulant_graph, path_graph


def table_event(node, vbl, table):
    return Event(node=node, vbl=tuple(vbl), kind="table", table=table)


def whole_component(inst):
    events = frozenset(inst.events)
    variables = frozenset(x for v in events for x in inst.events[v].vbl)
    return events, variables


def shared_var_instance():
    # three events contest one range-3 variable; every value violates one,
    # so the expected failure count is exactly 1 under any program
    g = path_graph(3)
    variables = {0: VariableSpec(owner=1, range_size=3)}
    events = [table_event(v, (0,), 1 << i) for i, v in enumerate([0, 1, 2])]
    return LllInstance.build(g, variables, events)


def test_params_validation():
    p = DerandParams(rounds=8, radius=2)
    assert p.cluster_distance == 4 * (8 + 2) + 1
    assert p.passes == 8 // ROUNDS_PER_PASS
    assert DerandParams().passes == 0
    assert DerandParams.default_rounds(512) == 4 * 9
    assert DerandParams.default_rounds(1) == 4
    with pytest.raises(InstanceError):
        DerandParams(rounds=-1)
    with pytest.raises(InstanceError):
        DerandParams(radius=0)
    with pytest.raises(InstanceError):
        DerandParams(budget=0)


def test_partial_fixing_basics():
    f = PartialFixing()
    assert f.value_at(3, 0) is None
    f.append(3, 1, 2)
    f.append(3, 0, 2)
    assert f.value_at(3, 0) == 1
    assert f.value_at(3, 1) == 0
    assert f.value_at(3, 2) is None
    f.pop(3)
    assert f.value_at(3, 1) is None
    with pytest.raises(InstanceError):
        f.append(3, 2, 2)
    g = f.copy()
    g.append(3, 1, 2)
    assert f.value_at(3, 1) is None


def test_cluster_layers_shells():
    g = path_graph(7)
    lay = cluster_layers(g, {3}, reach=2)
    assert lay.core == frozenset({3})
    assert lay.near == frozenset({1, 2, 4, 5})
    assert lay.far == frozenset({0, 6})
    assert lay.all_nodes == frozenset(range(7))
    thin = cluster_layers(g, {0}, reach=1)
    assert thin.near == frozenset({1})
    assert thin.far == frozenset({2})


def test_failure_expectation_hand_values():
    # one binary variable in the middle of a path; the left event holds on
    # value 0, the right event never holds
    g = path_graph(3)
    inst = LllInstance.build(
        g,
        {0: VariableSpec(owner=1, range_size=2)},
        [table_event(0, (0,), 0b01), table_event(2, (0,), 0)],
    )
    comp = whole_component(inst)
    base = Assignment.empty(inst)
    params = DerandParams()
    assert failure_expectation(comp, inst, base, PartialFixing(), frozenset(), params) == 0
    assert failure_expectation(comp, inst, base, PartialFixing(), comp[0], params) == Fraction(1, 2)

    # once the tape is fully fixed the expectation is the actual count
    hit = PartialFixing({1: [0]})
    miss = PartialFixing({1: [1]})
    assert failure_expectation(comp, inst, base, hit, comp[0], params) == 1
    assert failure_expectation(comp, inst, base, miss, comp[0], params) == 0

    with pytest.raises(InstanceError):
        failure_expectation(comp, inst, base, PartialFixing(), frozenset({1}), params)


def test_derandomize_skips_rising_value():
    g = path_graph(3)
    inst = LllInstance.build(
        g,
        {0: VariableSpec(owner=1, range_size=2)},
        [table_event(0, (0,), 0b01), table_event(2, (0,), 0)],
    )
    comp = whole_component(inst)
    tapes, out, log = derandomize_component(
        comp, inst, Assignment.empty(inst), DerandParams()
    )
    # value 0 would raise the expectation from 1/2 to 1 and must be skipped
    assert tapes == {1: (1,)}
    assert out.values[0] == 1
    entries = [e for e in log if e["node"] == 1]
    assert len(entries) == 1
    assert entries[0]["value"] == 1
    assert Fraction(entries[0]["before"]) == Fraction(1, 2)
    assert Fraction(entries[0]["after"]) == 0
    assert validate_assignment(inst, out) == []


def path_chain_instance(n):
    # events 0..n-2 each watch their own bit and the next node's bit and
    # hold when the two bits agree, a half-probability chain
    g = path_graph(n)
    variables = {i: VariableSpec(owner=i, range_size=2) for i in range(n)}
    events = [table_event(v, (v, v + 1), 0b1001) for v in range(n - 1)]
    return LllInstance.build(g, variables, events)


def test_term_matches_joint_enumeration():
    # the per-event term enumerates only tapes inside its influence ball;
    # joint enumeration over every open position must give the same value
    inst = path_chain_instance(6)
    comp = whole_component(inst)
    base = Assignment.empty(inst)
    params = DerandParams(rounds=ROUNDS_PER_PASS)
    assert params.passes == 1
    layout = _ProgramLayout(inst, comp[1], base, params.passes)

    def joint(v, fixing):
        open_positions = [
            (w, pos, 2)
            for w in sorted(layout.length)
            for pos in range(layout.length[w])
            if fixing.value_at(w, pos) is None
        ]
        fails = 0
        for combo in itertools.product(*[range(r) for _, _, r in open_positions]):
            trial = {(w, p): val for (w, p, _), val in zip(open_positions, combo)}

            def value_at(w, pos):
                fixed = fixing.value_at(w, pos)
                return trial[(w, pos)] if fixed is None else fixed

            values = _execute(inst, comp[0], base, layout, value_at, params.passes)
            ev = inst.events[v]
            if ev.holds({x: values[x] for x in ev.vbl}):
                fails += 1
        return Fraction(fails, 2 ** len(open_positions))

    fixings = [PartialFixing(), PartialFixing({0: [1], 2: [1, 0], 3: [0]})]
    for fixing in fixings:
        for v in sorted(comp[0]):
            term = failure_expectation(
                comp, inst, base, fixing, frozenset({v}), params
            )
            assert term == joint(v, fixing)


def test_expectation_matches_monte_carlo():
    # thirty random checkpoints on a ring of dependent events: the exact
    # expectation must sit within four standard errors of sampling
    g = circulant_graph(8, [1])
    variables = {i: VariableSpec(owner=i, range_size=2) for i in range(8)}
    rng = random.Random(0)
    samples = 1500
    for _ in range(30):
        events = [
            table_event(v, tuple(sorted((v, (v + 1) % 8))), rng.randrange(16))
            for v in range(8)
        ]
        inst = LllInstance.build(g, variables, events)
        comp = whole_component(inst)
        base = Assignment.empty(inst)
        params = DerandParams(rounds=rng.choice([0, ROUNDS_PER_PASS]))
        layout = _ProgramLayout(inst, comp[1], base, params.passes)
        fixing = PartialFixing()
        for w in range(8):
            for pos in range(rng.randrange(layout.length[w] + 1)):
                fixing.append(w, rng.randrange(2), 2)
        v = rng.randrange(8)
        exact = failure_expectation(comp, inst, base, fixing, frozenset({v}), params)

        open_positions = [
            (w, pos)
            for w in range(8)
            for pos in range(layout.length[w])
            if fixing.value_at(w, pos) is None
        ]
        fails = 0
        for _ in range(samples):
            trial = {wp: rng.randrange(2) for wp in open_positions}

            def value_at(w, pos):
                fixed = fixing.value_at(w, pos)
                return trial[(w, pos)] if fixed is None else fixed

            values = _execute(inst, comp[0], base, layout, value_at, params.passes)
            ev = inst.events[v]
            if ev.holds({x: values[x] for x in ev.vbl}):
                fails += 1
        estimate = fails / samples
        q = float(exact)
        sigma = (q * (1 - q) / samples) ** 0.5
        if sigma == 0:
            assert estimate == q
        else:
            assert abs(estimate - q) <= 4 * sigma


def test_budget_exceeded_reports_need():
    inst = sinkless_instance(circulant_graph(24, [1, 2, 3, 4, 5]))
    comp = whole_component(inst)
    params = DerandParams(rounds=ROUNDS_PER_PASS)
    with pytest.raises(BudgetExceeded) as err:
        failure_expectation(
            comp, inst, Assignment.empty(inst), PartialFixing(), frozenset({0}), params
        )
    assert err.value.needed > err.value.budget == params.budget


def test_single_event_component():
    g = path_graph(1)
    inst = LllInstance.build(
        g, {0: VariableSpec(owner=0, range_size=3)}, [table_event(0, (0,), 1 << 2)]
    )
    # range 3 exceeds the degree-zero bound of 2, which only warns
    with pytest.warns(UserWarning, match="range bounded"):
        tapes, out, log = derandomize_component(
            whole_component(inst), inst, Assignment.empty(inst), DerandParams()
        )
    assert out.values[0] == 0
    assert tapes == {0: (0,)}
    assert validate_assignment(inst, out) == []


def test_two_events_share_binary_pair():
    # one event forbids (1,1), the other (0,0); the fixing has to thread
    # between them
    g = path_graph(2)
    inst = LllInstance.build(
        g,
        {0: VariableSpec(owner=0, range_size=2), 1: VariableSpec(owner=1, range_size=2)},
        [table_event(0, (0, 1), 0b1000), table_event(1, (0, 1), 0b0001)],
    )
    _, out, _ = derandomize_component(
        whole_component(inst), inst, Assignment.empty(inst), DerandParams()
    )
    assert {out.values[0], out.values[1]} == {0, 1}
    assert validate_assignment(inst, out) == []


def test_component_validation_and_hard_failures():
    inst = shared_var_instance()
    comp = whole_component(inst)
    base = Assignment.empty(inst)
    with pytest.raises(InstanceError):
        derandomize_component((comp[0] | {9}, comp[1]), inst, base, DerandParams())
    with pytest.raises(InstanceError):
        derandomize_component((comp[0], comp[1] | {7}), inst, base, DerandParams())
    with pytest.raises(InstanceError):
        derandomize_component(comp, inst, base, DerandParams(max_size=2))
    # the contested variable pins the expectation at exactly 1, which the
    # invariant rejects up front
    with pytest.raises(AuditError) as err:
        derandomize_component(comp, inst, base, DerandParams())
    assert err.value.audit_log == []
    # the automatic fallback to a longer program cannot help either
    with pytest.raises(AuditError):
        deterministic_lll(inst, base, [comp])


def test_whole_instance_audit_log():
    inst = sinkless_instance(circulant_graph(24, [1, 2, 3, 4, 5]))
    comp = whole_component(inst)
    base = Assignment.empty(inst)
    tapes, out, log = derandomize_component(
        comp, inst, base, DerandParams(), cfg=SimConfig(seed=1)
    )
    assert validate_assignment(inst, out) == []
    assert out.total()
    # one tape slot per owned variable, all of them fixed
    assert sum(len(t) for t in tapes.values()) == len(comp[1])
    assert len(log) == len(comp[1])
    for entry in log:
        assert Fraction(entry["after"]) <= Fraction(entry["before"]) < 1
        assert entry["component"] == 0
    lines = audit_to_jsonl(log).splitlines()
    assert len(lines) == len(log)
    parsed = json.loads(lines[0])
    assert set(parsed) == {
        "component", "class", "cluster", "node", "position", "value",
        "before", "after",
    }
    # the fixing consults no randomness, so the engine seed is irrelevant
    _, again, _ = derandomize_component(
        comp, inst, base, DerandParams(), cfg=SimConfig(seed=99)
    )
    assert again == out


def test_disconnected_components_fix_independently():
    # two dependency-disconnected triangles; each component's result must
    # not depend on whether the other is being solved alongside it
    g = Graph.build(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)])
    variables = {i: VariableSpec(owner=i, range_size=2) for i in range(6)}
    events = [
        table_event(v, tuple(sorted((v, base + (v - base + 1) % 3))), 0b1000)
        for base in (0, 3)
        for v in range(base, base + 3)
    ]
    inst = LllInstance.build(g, variables, events)
    base_a = Assignment.empty(inst)
    left = (frozenset({0, 1, 2}), frozenset({0, 1, 2}))
    right = (frozenset({3, 4, 5}), frozenset({3, 4, 5}))
    both = deterministic_lll(inst, base_a, [left, right])
    alone = deterministic_lll(inst, base_a, [left])
    assert [both[0].values[x] for x in sorted(left[1])] == [
        alone[0].values[x] for x in sorted(left[1])
    ]
    merged = base_a.copy()
    for (events_, vars_), fixed in zip([left, right], both):
        for x in vars_:
            merged.set_value(x, fixed.values[x])
    assert validate_assignment(inst, merged) == []
    assert deterministic_lll(inst, base_a, []) == []


def test_pipeline_sinkless_circulant():
    g = circulant_graph(512, [1, 2, 3, 4, 5])
    inst = sinkless_instance(g)
    for seed in (0, 1):
        cfg = SimConfig(seed=seed)
        out = solve_range_bounded_lll(inst, cfg, require_power_criterion=False)
        assert out.total()
        assert validate_assignment(inst, out) == []
        # the merge only touches residual variables
        base, residual = preshatter(inst, cfg)
        touched = set().union(*(vars_ for _, vars_ in residual)) if residual else set()
        for x in inst.variables:
            if x not in touched and base.values[x] is not None:
                assert out.values[x] == base.values[x]


def test_pipeline_gates():
    inst = sinkless_instance(circulant_graph(64, [1, 2, 3, 4, 5]))
    # ten-regular inputs sit far above the eighth-power threshold
    with pytest.raises(InstanceError) as err:
        solve_range_bounded_lll(inst)
    assert err.value.report.ok_ped8 is False

    # p = 1/3 with dependency degree 2 fails even the weaker bound
    contested = shared_var_instance()
    with pytest.raises(InstanceError) as err2:
        solve_range_bounded_lll(contested, require_power_criterion=False)
    assert err2.value.report.p == Fraction(1, 3)

    # events that never hold sail through and leave nothing to derandomize
    g = path_graph(4)
    calm = LllInstance.build(
        g,
        {i: VariableSpec(owner=i, range_size=2) for i in range(4)},
        [table_event(v, (v,), 0) for v in range(4)],
    )
    out = solve_range_bounded_lll(calm)
    assert out.total()
    assert validate_assignment(calm, out) == []


def test_local_lambda_single_event():
    g = path_graph(2)
    inst = LllInstance.build(
        g, {0: VariableSpec(owner=0, range_size=4)}, [table_event(0, (0,), 1 << 3)]
    )
    out = local_lambda_lll(inst, 1, cfg=SimConfig(mode="local"))
    assert out.total()
    assert out.values[0] != 3
    assert validate_assignment(inst, out) == []


def test_local_lambda_seventeen_regular():
    # degree seventeen is the smallest regular sinkless degree that clears
    # the cube criterion, and three classes suffice for it
    g = circulant_graph(46, [1, 2, 3, 4, 5, 6, 7, 8, 23])
    assert all(len(g.adj[v]) == 17 for v in range(46))
    inst = sinkless_instance(g)
    out = local_lambda_lll(inst, 3, cfg=SimConfig(mode="local"))
    assert out.total()
    assert validate_assignment(inst, out) == []


def test_local_lambda_refusals():
    g14 = circulant_graph(32, [1, 2, 3, 4, 5, 6, 7])
    inst14 = sinkless_instance(g14)
    with pytest.raises(InstanceError) as err:
        local_lambda_lll(inst14, 3, cfg=SimConfig(mode="local"))
    assert err.value.report.value_pedl > 1

    good = sinkless_instance(circulant_graph(46, [1, 2, 3, 4, 5, 6, 7, 8, 23]))
    with pytest.raises(InstanceError):
        local_lambda_lll(good, 3, cfg=SimConfig())
    with pytest.raises(InstanceError):
        local_lambda_lll(good, 0, cfg=SimConfig(mode="local"))

    # ten isolated events of probability 1/8 pass the criterion but their
    # probabilities sum to 5/4, so the potential cannot start below one
    g = Graph.build(10, [])
    variables = {
        3 * i + j: VariableSpec(owner=i, range_size=2)
        for i in range(10)
        for j in range(3)
    }
    events = [
        table_event(i, (3 * i, 3 * i + 1, 3 * i + 2), 1 << 7) for i in range(10)
    ]
    heavy = LllInstance.build(g, variables, events)
    with pytest.raises(InstanceError) as err2:
        local_lambda_lll(heavy, 1, cfg=SimConfig(mode="local"))
    assert "sum" in str(err2.value)
