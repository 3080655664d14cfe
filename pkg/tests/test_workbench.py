"""Generators, instance builders, experiment runner, CLI."""

import json

import pytest

from congestkit.cli import main
from congestkit.errors import ConfigError, InstanceError
from congestkit.graphs import Graph
from congestkit.lll import check_criteria, event_probability, Assignment
from congestkit.workbench import (
    ExperimentConfig,
    generate_graph,
    make_instance,
    run_experiment,
)


def test_generators_structure():
    g = generate_graph({"kind": "path", "n": 3})
    assert g.n == 3 and len(g.edges()) == 2

    t = generate_graph({"kind": "torus", "w": 4, "h": 4})
    assert t.n == 16
    assert all(t.degree(v) == 4 for v in range(16))

    c = generate_graph({"kind": "complete", "n": 5})
    assert len(c.edges()) == 10

    ring = generate_graph({"kind": "circulant", "n": 6, "offsets": [1]})
    assert all(ring.degree(v) == 2 for v in range(6))


def test_generators_deterministic():
    a = generate_graph({"kind": "regular", "n": 64, "degree": 4, "seed": 1})
    b = generate_graph({"kind": "regular", "n": 64, "degree": 4, "seed": 1})
    assert a.edges() == b.edges()
    assert all(a.degree(v) == 4 for v in range(64))
    c = generate_graph({"kind": "regular", "n": 64, "degree": 4, "seed": 2})
    assert c.edges() != a.edges()

    e1 = generate_graph({"kind": "er", "n": 50, "p": 0.2, "max_degree": 5, "seed": 7})
    e2 = generate_graph({"kind": "er", "n": 50, "p": 0.2, "max_degree": 5, "seed": 7})
    assert e1.edges() == e2.edges()
    assert max(e1.degree(v) for v in range(50)) <= 5


def test_generator_rejections():
    with pytest.raises(ConfigError):
        generate_graph({"kind": "complete", "n": 17})
    with pytest.raises(ConfigError):
        generate_graph({"kind": "regular", "n": 5, "degree": 3, "seed": 0})
    with pytest.raises(ConfigError):
        generate_graph({"kind": "regular", "n": 4, "degree": 4, "seed": 0})
    with pytest.raises(ConfigError):
        generate_graph({"kind": "mystery"})
    with pytest.raises(ConfigError):
        generate_graph({"kind": "path"})
    with pytest.raises(ConfigError):
        generate_graph({"kind": "er", "n": 10, "p": 1.5, "max_degree": 3, "seed": 0})
    with pytest.raises(ConfigError):
        generate_graph({"kind": "circulant", "n": 8, "offsets": [5]})


def test_sinkless_instance_kind():
    g = generate_graph({"kind": "circulant", "n": 8, "offsets": [1]})
    inst = make_instance("sinkless", g)
    assert len(inst.events) == 8
    with pytest.raises(InstanceError):
        make_instance("sinkless", Graph.build(3, [(0, 1)]))


def test_synthetic_monotone_exact_probability():
    g = generate_graph({"kind": "path", "n": 4})
    inst = make_instance(
        "synthetic-monotone", g, {"p_target": "1/8", "vars": 3, "range": 2}
    )
    assert len(inst.events) == 4
    a = Assignment.empty(inst)
    for ev in inst.events.values():
        assert event_probability(inst, ev.node, a) == pytest.approx(1 / 8)
        assert ev.vbl == tuple(range(ev.node * 3, ev.node * 3 + 3))

    # the bad set is a lower set: zeroing any coordinate of a bad point
    # stays bad
    inst2 = make_instance(
        "synthetic-monotone", g, {"p_target": "3/8", "vars": 3, "range": 2}
    )
    ev = inst2.events[0]
    bad = [i for i in range(8) if ev.table >> i & 1]
    for i in bad:
        for bit in range(3):
            assert (i & ~(1 << bit)) in bad


def test_synthetic_monotone_rejects_unrepresentable():
    g = generate_graph({"kind": "path", "n": 2})
    with pytest.raises(ConfigError):
        make_instance("synthetic-monotone", g, {"p_target": "1/5", "vars": 3})
    with pytest.raises(ConfigError):
        make_instance("synthetic-monotone", g, {"p_target": "3/2", "vars": 3})


def test_rigged_fixtures():
    g = generate_graph({"kind": "path", "n": 2})
    single = make_instance("rigged", g, {"variant": "single"})
    a = Assignment.empty(single)
    assert event_probability(single, 0, a) == pytest.approx(1 / 2)

    double = make_instance("rigged", g, {"variant": "double"})
    assert len(double.events) == 2
    report = check_criteria(double)
    assert report.p == pytest.approx(1 / 4)
    with pytest.raises(ConfigError):
        make_instance("rigged", g, {"variant": "triple"})
    with pytest.raises(ConfigError):
        make_instance("exotic", g)


def test_config_schema_validation():
    with pytest.raises(ConfigError, match="command"):
        ExperimentConfig.from_dict({"graph": {"kind": "path", "n": 3}})
    with pytest.raises(ConfigError, match="graph"):
        ExperimentConfig.from_dict({"command": "carve", "graph": {"n": 3}})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(
            {"command": "carve", "graph": {"kind": "path", "n": 3}, "x": "two"}
        )
    cfg = ExperimentConfig.from_dict(
        {"command": "carve", "graph": {"kind": "path", "n": 8}, "seeds": [3, 4]}
    )
    assert cfg.seeds == (3, 4) and cfg.x == 2


def test_run_experiment_decompose_and_report(tmp_path):
    cfg = ExperimentConfig.from_dict(
        {
            "command": "decompose",
            "graph": {"kind": "torus", "w": 4, "h": 4},
            "k": 2,
            "seeds": [0, 1],
        }
    )
    report = run_experiment(cfg)
    assert report.overall_pass
    assert report.guarantees["colors"] and report.guarantees["separation"]
    assert report.to_json() == run_experiment(cfg).to_json()

    paths = report.write_csv(tmp_path)
    names = {p.name for p in paths}
    assert "runs.csv" in names and "phases.csv" in names
    header = (tmp_path / "runs.csv").read_text().splitlines()[0]
    assert "seed" in header


def test_run_experiment_carve_guarantees():
    cfg = ExperimentConfig.from_dict(
        {
            "command": "carve",
            "graph": {"kind": "regular", "n": 64, "degree": 4, "seed": 5},
            "k": 2,
            "x": 3,
            "seeds": [0],
        }
    )
    report = run_experiment(cfg)
    assert report.overall_pass
    run = report.runs[0]
    assert run["clustered_fraction"] >= 1 - 1 / 3
    assert run["min_separation"] > 2

    levels = ExperimentConfig.from_dict(
        {
            "command": "carve",
            "graph": {"kind": "torus", "w": 6, "h": 6},
            "variant": "levels",
            "x": 2,
            "seeds": [0],
        }
    )
    rep2 = run_experiment(levels)
    assert rep2.overall_pass and rep2.guarantees["tokens"]


def test_run_experiment_lll_and_pipeline():
    cfg = ExperimentConfig.from_dict(
        {
            "command": "lll",
            "graph": {"kind": "circulant", "n": 48, "offsets": [1, 2]},
            "instance": {"kind": "sinkless"},
            "seeds": [0, 1],
        }
    )
    report = run_experiment(cfg)
    assert report.overall_pass and report.guarantees["valid"]

    pipe = ExperimentConfig.from_dict(
        {
            "command": "pipeline",
            "graph": {"kind": "circulant", "n": 128, "offsets": [1, 2, 3, 4, 5]},
            "instance": {"kind": "sinkless"},
            "seeds": [0],
        }
    )
    rep2 = run_experiment(pipe)
    assert rep2.overall_pass
    assert rep2.runs[0]["violated"] == 0


def test_run_experiment_embeds_failures():
    # a certain event breaks the residual criterion inside the run
    cfg = ExperimentConfig.from_dict(
        {
            "command": "pipeline",
            "graph": {"kind": "complete", "n": 4},
            "instance": {"kind": "synthetic-monotone", "params": {"p_target": "1/1", "vars": 1}},
            "seeds": [0],
        }
    )
    report = run_experiment(cfg)
    assert not report.overall_pass
    assert report.guarantees["no_errors"] is False
    assert "error" in report.runs[0]


def test_cli_roundtrip(tmp_path, capsys):
    out = tmp_path / "report.json"
    code = main(
        [
            "decompose",
            "--graph", '{"kind": "torus", "w": 4, "h": 4}',
            "-k", "1",
            "--seeds", "0,1",
            "--report", str(out),
        ]
    )
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["pass"] is True and doc["command"] == "decompose"
    assert "generated_at" not in doc

    # identical invocation gives identical bytes
    out2 = tmp_path / "report2.json"
    main(
        [
            "decompose",
            "--graph", '{"kind": "torus", "w": 4, "h": 4}',
            "-k", "1",
            "--seeds", "0,1",
            "--report", str(out2),
        ]
    )
    assert out.read_bytes() == out2.read_bytes()
    capsys.readouterr()


def test_cli_config_file_overrides_flags(tmp_path, capsys):
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text(json.dumps({"graph": {"kind": "path", "n": 12}, "k": 3}))
    out = tmp_path / "report.json"
    code = main(
        [
            "decompose",
            "--config", str(cfg_file),
            "--graph", '{"kind": "path", "n": 4}',
            "-k", "1",
            "--report", str(out),
        ]
    )
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["config"]["k"] == 3
    assert doc["config"]["graph"]["n"] == 12
    capsys.readouterr()


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["decompose", "--graph", '{"kind": "mystery"}']) == 2
    assert main(["decompose", "--graph", "not json"]) == 2

    bad_cfg = tmp_path / "bad.json"
    bad_cfg.write_text("{broken")
    assert main(["decompose", "--config", str(bad_cfg)]) == 2

    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2
    capsys.readouterr()


def test_cli_guarantee_failure_exits_one(tmp_path, capsys):
    # an all-zero orientation on a cycle leaves a sink, so validation fails
    g_vars = {str(i): 0 for i in range(4)}
    bad = tmp_path / "assignment.json"
    bad.write_text(json.dumps(g_vars))
    code = main(
        [
            "validate",
            "--graph", '{"kind": "circulant", "n": 4, "offsets": [1]}',
            "--instance", '{"kind": "sinkless"}',
            "--artifact", str(bad),
            "--artifact-kind", "assignment",
        ]
    )
    assert code == 1
    capsys.readouterr()


def test_cli_validate_decomposition(tmp_path, capsys):
    from congestkit.decompose import decompose_logn

    g = generate_graph({"kind": "torus", "w": 4, "h": 4})
    nd = decompose_logn(g, 2)
    art = tmp_path / "nd.json"
    art.write_text(nd.to_json())
    code = main(
        [
            "validate",
            "--graph", '{"kind": "torus", "w": 4, "h": 4}',
            "--artifact", str(art),
            "--artifact-kind", "decomposition",
        ]
    )
    assert code == 0
    capsys.readouterr()


def test_cli_bench(capsys):
    code = main(
        [
            "bench",
            "--graph", '{"kind": "torus", "w": 4, "h": 4}',
            "--algorithm", "cps",
            "--instance", '{"kind": "sinkless"}',
            "--seeds", "0,1,2",
        ]
    )
    assert code == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["aggregates"]["seed_count"] == 3
