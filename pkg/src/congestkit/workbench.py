"""Operational surface: graph generators, instance builders, experiment
configuration, and metrics reporting.

Everything here is deterministic given its inputs. Reports serialize to
the same bytes for the same config unless timestamps are requested, so
runs can be diffed."""

from __future__ import annotations

import csv
import io
import json
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path

import jsonschema

from .carving import CarveParamsC, CarveParamsE, carve_distance_k, carve_fast
from .clusters import validate_collection
from .decompose import decompose_few_colors, decompose_logn, validate_decomposition
from .derand import deterministic_lll
from .engine import SimConfig
from .errors import CongestKitError, ConfigError, InstanceError
from .graphs import Graph, load_graph, log2_ceil
from .lll import (
    Event,
    LllInstance,
    VariableSpec,
    check_criteria,
    cps_solve,
    sinkless_instance,
    validate_assignment,
)
from .preshatter import preshatter

MAX_REGULAR_ATTEMPTS = 2000


def _spec_int(spec: dict, key: str, minimum: int = 0) -> int:
    try:
        value = spec[key]
    except KeyError:
        raise ConfigError(f"graph spec is missing {key!r}") from None
    if not isinstance(value, int) or isinstance(value, bool) or value < minimum:
        raise ConfigError(f"graph spec {key}={value!r} must be an integer >= {minimum}")
    return value


def _pairing_regular(n: int, d: int, seed: int) -> list[tuple[int, int]]:
    # pairing model with rejection: shuffle n*d port stubs, pair them up,
    # retry on self loops or repeated edges
    rng = random.Random(("regular", n, d, seed).__repr__())
    stubs = [v for v in range(n) for _ in range(d)]
    for _ in range(MAX_REGULAR_ATTEMPTS):
        rng.shuffle(stubs)
        edges = set()
        ok = True
        for i in range(0, len(stubs), 2):
            u, v = stubs[i], stubs[i + 1]
            if u == v or (min(u, v), max(u, v)) in edges:
                ok = False
                break
            edges.add((min(u, v), max(u, v)))
        if ok:
            return sorted(edges)
    raise ConfigError(
        f"no simple {d}-regular graph found for n={n}, seed={seed} within "
        f"{MAX_REGULAR_ATTEMPTS} attempts"
    )


def generate_graph(spec: dict) -> Graph:
    """Build a graph from a generator spec, deterministically.

    Kinds: path(n), complete(n <= 16), torus(w, h), regular(n, degree,
    seed), er(n, p, max_degree, seed), circulant(n, offsets)."""
    if not isinstance(spec, dict):
        raise ConfigError(f"graph spec must be an object, got {type(spec).__name__}")
    kind = spec.get("kind")
    if kind == "path":
        n = _spec_int(spec, "n", 1)
        return Graph.build(n, [(i, i + 1) for i in range(n - 1)])
    if kind == "complete":
        n = _spec_int(spec, "n", 1)
        if n > 16:
            raise ConfigError(f"complete graphs are capped at 16 nodes, got {n}")
        return Graph.build(n, [(i, j) for i in range(n) for j in range(i + 1, n)])
    if kind == "torus":
        w = _spec_int(spec, "w", 1)
        h = _spec_int(spec, "h", 1)
        edges = set()
        for r in range(h):
            for c in range(w):
                v = r * w + c
                for u in (r * w + (c + 1) % w, ((r + 1) % h) * w + c):
                    if u != v:
                        edges.add((min(u, v), max(u, v)))
        return Graph.build(w * h, sorted(edges))
    if kind == "regular":
        n = _spec_int(spec, "n", 2)
        d = _spec_int(spec, "degree", 1)
        seed = _spec_int(spec, "seed")
        if d >= n or n * d % 2:
            raise ConfigError(f"no simple {d}-regular graph on {n} nodes exists")
        return Graph.build(n, _pairing_regular(n, d, seed))
    if kind == "er":
        n = _spec_int(spec, "n", 1)
        cap = _spec_int(spec, "max_degree", 1)
        seed = _spec_int(spec, "seed")
        p = spec.get("p")
        if not isinstance(p, (int, float)) or not 0 <= p <= 1:
            raise ConfigError(f"edge probability p={p!r} must be in [0, 1]")
        rng = random.Random(("er", n, p, cap, seed).__repr__())
        degree = [0] * n
        edges = []
        for u in range(n):
            for v in range(u + 1, n):
                if rng.random() < p and degree[u] < cap and degree[v] < cap:
                    edges.append((u, v))
                    degree[u] += 1
                    degree[v] += 1
        return Graph.build(n, edges)
    if kind == "circulant":
        n = _spec_int(spec, "n", 2)
        offsets = spec.get("offsets")
        if not isinstance(offsets, list) or not offsets:
            raise ConfigError("circulant spec needs a non-empty offsets list")
        edges = set()
        for v in range(n):
            for off in offsets:
                if not isinstance(off, int) or not 1 <= off <= n // 2:
                    raise ConfigError(f"circulant offset {off!r} outside [1, n/2]")
                u = (v + off) % n
                if u != v:
                    edges.add((min(u, v), max(u, v)))
        return Graph.build(n, sorted(edges))
    raise ConfigError(f"unknown graph kind {kind!r}")


def _parse_fraction(value) -> Fraction:
    if isinstance(value, str):
        try:
            return Fraction(value)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"bad probability {value!r}: {exc}") from exc
    if isinstance(value, int) and not isinstance(value, bool):
        return Fraction(value)
    raise ConfigError(
        f"probability must be an exact string like '1/8', got {value!r}"
    )


def make_instance(kind: str, g: Graph, params: dict | None = None) -> LllInstance:
    """Build a constraint instance of the named kind on the graph.

    sinkless: one binary variable per edge, event at each node holds when
    all incident edges point at it. synthetic-monotone: per node, a fresh
    block of variables with a monotone truth table hitting an exact
    target probability. rigged: the single / double event fixtures."""
    params = params or {}
    if kind == "sinkless":
        if g.n == 0 or any(not g.adj[v] for v in range(g.n)):
            raise InstanceError("sinkless orientation needs minimum degree 1")
        return sinkless_instance(g)
    if kind == "synthetic-monotone":
        p_target = _parse_fraction(params.get("p_target", "1/8"))
        vars_per_event = params.get("vars", 3)
        range_size = params.get("range", 2)
        if not isinstance(vars_per_event, int) or vars_per_event < 1:
            raise ConfigError(f"vars={vars_per_event!r} must be a positive integer")
        if not isinstance(range_size, int) or range_size < 2:
            raise ConfigError(f"range={range_size!r} must be an integer >= 2")
        space = range_size**vars_per_event
        bad = p_target * space
        if not 0 <= p_target <= 1 or bad.denominator != 1:
            raise ConfigError(
                f"p_target={p_target} is not exactly representable over "
                f"{vars_per_event} variables of range {range_size}"
            )
        # the first m points of the value cube form a monotone lower set:
        # clearing any bit of a member only decreases its index
        table = (1 << int(bad)) - 1
        variables = {}
        events = []
        for v in range(g.n):
            vbl = tuple(v * vars_per_event + j for j in range(vars_per_event))
            for x in vbl:
                variables[x] = VariableSpec(owner=v, range_size=range_size)
            events.append(Event(node=v, vbl=vbl, kind="table", table=table))
        return LllInstance.build(g, variables, events)
    if kind == "rigged":
        variant = params.get("variant", "single")
        if variant == "single":
            if g.n < 1:
                raise ConfigError("rigged single fixture needs a node")
            variables = {0: VariableSpec(owner=0, range_size=2)}
            events = [Event(node=0, vbl=(0,), kind="table", table=0b01)]
            return LllInstance.build(g, variables, events)
        if variant == "double":
            if g.n < 2 or not g.has_edge(0, 1):
                raise ConfigError("rigged double fixture needs the edge (0, 1)")
            variables = {
                0: VariableSpec(owner=0, range_size=2),
                1: VariableSpec(owner=1, range_size=2),
            }
            events = [
                Event(node=0, vbl=(0, 1), kind="table", table=0b1000),
                Event(node=1, vbl=(0, 1), kind="table", table=0b0001),
            ]
            return LllInstance.build(g, variables, events)
        raise ConfigError(f"unknown rigged variant {variant!r}")
    raise ConfigError(f"unknown instance kind {kind!r}")


_SCHEMA = None


def config_schema() -> dict:
    global _SCHEMA
    if _SCHEMA is None:
        text = (
            resources.files("congestkit").joinpath("data/config.schema.json").read_text()
        )
        _SCHEMA = json.loads(text)
    return _SCHEMA


@dataclass(frozen=True)
class ExperimentConfig:
    """Schema-validated description of one experiment."""

    command: str
    graph: dict
    instance: dict = field(default_factory=lambda: {"kind": "sinkless"})
    k: int = 1
    x: int = 2
    lam: int | None = None
    seeds: tuple[int, ...] = (0,)
    bandwidth_bits: int | None = None
    mode: str = "congest"
    budget: int | None = None
    strict_criterion: bool = False
    variant: str = "distance"
    algorithm: str = "decompose"
    artifact: str | None = None
    artifact_kind: str | None = None
    report: str | None = None
    csv_dir: str | None = None
    timestamps: bool = False

    @staticmethod
    def from_dict(doc: dict) -> "ExperimentConfig":
        try:
            jsonschema.validate(doc, config_schema())
        except jsonschema.ValidationError as exc:
            path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"config invalid at {path}: {exc.message}") from exc
        fields = dict(doc)
        if "seeds" in fields:
            fields["seeds"] = tuple(fields["seeds"])
        return ExperimentConfig(**fields)

    def to_dict(self) -> dict:
        out = {
            "command": self.command,
            "graph": self.graph,
            "instance": self.instance,
            "k": self.k,
            "x": self.x,
            "seeds": list(self.seeds),
            "mode": self.mode,
            "strict_criterion": self.strict_criterion,
            "variant": self.variant,
            "algorithm": self.algorithm,
            "timestamps": self.timestamps,
        }
        # output destinations are deliberately not echoed so the report
        # bytes depend only on the experiment itself
        for key in ("lam", "bandwidth_bits", "budget", "artifact", "artifact_kind"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        return out

    def sim_config(self, seed: int) -> SimConfig:
        return SimConfig(
            bandwidth_bits=self.bandwidth_bits, mode=self.mode, seed=seed
        )

    def build_graph(self, seed: int) -> Graph:
        if "file" in self.graph:
            return load_graph(Path(self.graph["file"]).read_text())
        spec = dict(self.graph)
        spec.setdefault("seed", seed)
        return generate_graph(spec)


@dataclass
class MetricsReport:
    """Per-run metrics plus aggregates; every asserted guarantee is a
    named boolean, and the report passes iff all of them are true."""

    command: str
    config: dict
    runs: list[dict]
    aggregates: dict
    guarantees: dict[str, bool]
    phase_tables: dict[str, list[dict]] = field(default_factory=dict)

    @property
    def overall_pass(self) -> bool:
        return all(self.guarantees.values())

    def to_json(self, timestamp: str | None = None) -> str:
        doc = {
            "command": self.command,
            "config": self.config,
            "runs": self.runs,
            "aggregates": self.aggregates,
            "guarantees": self.guarantees,
            "pass": self.overall_pass,
        }
        if timestamp is not None:
            doc["generated_at"] = timestamp
        return json.dumps(_jsonable(doc), indent=2, sort_keys=True)

    def write_csv(self, directory: str | Path) -> list[Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        written = []
        tables = {"runs": self.runs, **self.phase_tables}
        for name, rows in tables.items():
            if not rows:
                continue
            keys = sorted({k for row in rows for k in row})
            path = directory / f"{name}.csv"
            buf = io.StringIO()
            writer = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
            writer.writeheader()
            for row in rows:
                writer.writerow({k: _csv_cell(row.get(k)) for k in keys})
            path.write_text(buf.getvalue())
            written.append(path)
        return written


def _jsonable(value):
    # inf (an unclustered-or-single-cluster separation) is not valid JSON
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def _csv_cell(value):
    if value is None:
        return ""
    if isinstance(value, (list, tuple)):
        return " ".join(str(v) for v in value)
    return value


def _aggregate(runs: list[dict], key: str) -> dict:
    values = [r[key] for r in runs if isinstance(r.get(key), (int, float))]
    if not values:
        return {}
    return {
        f"{key}_min": min(values),
        f"{key}_max": max(values),
        f"{key}_mean": sum(values) / len(values),
    }


def _run_decompose(cfg: ExperimentConfig, seed: int, phase_rows: list[dict]) -> dict:
    g = cfg.build_graph(seed)
    sim = cfg.sim_config(seed)
    if cfg.lam is not None:
        nd = decompose_few_colors(g, cfg.lam, cfg.k, cfg=sim)
        color_bound = cfg.lam
    else:
        nd = decompose_logn(g, cfg.k, cfg=sim)
        color_bound = log2_ceil(g.n) + 1
    report = validate_decomposition(g, nd)
    run = {
        "seed": seed,
        "n": g.n,
        "colors": nd.colors,
        "color_bound": color_bound,
        "min_separation": report.min_separation,
        "max_steiner_radius": report.max_steiner_radius,
        "max_congestion": report.max_congestion,
        "rounds": None,
        "colors_ok": nd.colors <= color_bound,
        "separation_ok": report.min_separation > cfg.k,
    }
    if cfg.lam is not None:
        x = max(2, _ceil_root_local(g.n, cfg.lam))
        shrink_ok = True
        for st in nd.stats:
            if (st.seeds - st.clustered) * x > st.seeds:
                shrink_ok = False
        run["residue_shrink_ok"] = shrink_ok
    for idx, st in enumerate(nd.stats):
        phase_rows.append({"seed": seed, "class": idx, **st.as_dict()})
    return run


def _ceil_root_local(n: int, lam: int) -> int:
    x = max(1, round(n ** (1.0 / lam)))
    while x**lam < n:
        x += 1
    while x > 1 and (x - 1) ** lam >= n:
        x -= 1
    return x


def _run_carve(cfg: ExperimentConfig, seed: int, phase_rows: list[dict]) -> dict:
    g = cfg.build_graph(seed)
    sim = cfg.sim_config(seed)
    seeds_set = set(range(g.n))
    if cfg.variant == "levels":
        if cfg.k != 1:
            raise ConfigError("the levels carve only separates at distance 1")
        cc, dead, records = carve_fast(g, seeds_set, cfg.x, cfg=sim)
        params = CarveParamsC.derive(g.n, cfg.x)
        tokens = sum(r.tokens_created or 0 for r in records)
        bounds = {
            "tokens": tokens,
            "tokens_bound": params.total_tokens_bound(len(seeds_set)),
            "tokens_ok": tokens <= params.total_tokens_bound(len(seeds_set)),
        }
    else:
        cc, dead, records = carve_distance_k(g, seeds_set, cfg.k, cfg.x, cfg=sim)
        params = CarveParamsE.derive(g.n, cfg.x, cfg.k)
        bounds = {}
    stats = validate_collection(g, cc)
    clustered = len(cc.covered())
    component_ok = all(
        r.max_component <= 1
        or r.max_component * 4 ** (r.phase + 1) <= 3 ** (r.phase + 1) * len(seeds_set)
        for r in records
    )
    run = {
        "seed": seed,
        "n": g.n,
        "clustered_fraction": clustered / max(len(seeds_set), 1),
        "dead": len(dead),
        "beta": stats.steiner_radius,
        "kappa": stats.congestion,
        "min_separation": stats.min_cluster_distance,
        "rounds": sum(r.coloring_rounds for r in records),
        "fraction_ok": clustered * cfg.x >= len(seeds_set) * (cfg.x - 1),
        "dead_ok": len(dead) * cfg.x <= len(seeds_set),
        "separation_ok": stats.min_cluster_distance > cfg.k,
        "component_ok": component_ok,
        **bounds,
    }
    if cfg.variant != "levels":
        run["beta_ok"] = stats.steiner_radius <= params.beta_bound
        run["kappa_ok"] = stats.congestion <= params.kappa_bound
    for r in records:
        phase_rows.append({"seed": seed, **r.as_dict()})
    return run


def _run_lll(cfg: ExperimentConfig, seed: int) -> dict:
    g = cfg.build_graph(seed)
    inst = make_instance(cfg.instance["kind"], g, cfg.instance.get("params"))
    sim = cfg.sim_config(seed)
    result = cps_solve(inst, sim)
    return {
        "seed": seed,
        "n": g.n,
        "iterations": result.iterations,
        "rounds": result.comm_rounds,
        "violated": len(result.violated),
        "iteration_bound": 10 * log2_ceil(max(g.n, 2)),
        "valid_ok": result.success and not result.violated,
    }


def _run_pipeline(cfg: ExperimentConfig, seed: int) -> dict:
    g = cfg.build_graph(seed)
    inst = make_instance(cfg.instance["kind"], g, cfg.instance.get("params"))
    sim = cfg.sim_config(seed)
    report = check_criteria(inst)
    if cfg.strict_criterion and not report.ok_ped8:
        raise InstanceError(
            f"criterion p(ed)^8 < 1 fails: value {report.value_ped8:.6g}"
        )
    if not report.p * (inst.d + 1) ** 2 < 1:
        raise InstanceError(
            f"residual criterion sqrt(p)*(d+1) < 1 fails at p={report.p}, d={inst.d}"
        )
    base, residual = preshatter(inst, sim)
    fixes = deterministic_lll(inst, base, residual, cfg=sim)
    merged = base.copy()
    for (_, vars_), fixed in zip(residual, fixes):
        for x in sorted(vars_):
            merged.set_value(x, fixed.values[x])
            merged.frozen.discard(x)
    violated = validate_assignment(inst, merged)
    return {
        "seed": seed,
        "n": g.n,
        "residual_components": len(residual),
        "residual_sizes": sorted((len(ev) for ev, _ in residual), reverse=True),
        "violated": len(violated),
        "rounds": None,
        "valid_ok": not violated,
    }


def _run_validate(cfg: ExperimentConfig, seed: int) -> dict:
    from .decompose import NetworkDecomposition

    if cfg.artifact is None or cfg.artifact_kind is None:
        raise ConfigError("validate needs artifact and artifact_kind")
    g = cfg.build_graph(seed)
    text = Path(cfg.artifact).read_text()
    if cfg.artifact_kind == "decomposition":
        nd = NetworkDecomposition.from_json(text)
        report = validate_decomposition(g, nd)
        return {
            "seed": seed,
            "n": g.n,
            "colors": nd.colors,
            "min_separation": report.min_separation,
            "valid_ok": report.min_separation > nd.k,
        }
    if cfg.artifact_kind == "assignment":
        inst = make_instance(cfg.instance["kind"], g, cfg.instance.get("params"))
        values = {int(k): v for k, v in json.loads(text).items()}
        from .lll import Assignment

        a = Assignment.empty(inst)
        for x, value in values.items():
            a.set_value(x, value)
        violated = validate_assignment(inst, a)
        return {
            "seed": seed,
            "n": g.n,
            "violated": len(violated),
            "valid_ok": not violated,
        }
    raise ConfigError(f"unknown artifact kind {cfg.artifact_kind!r}")


def _run_bench(cfg: ExperimentConfig, seed: int) -> dict:
    g = cfg.build_graph(seed)
    sim = cfg.sim_config(seed)
    if cfg.algorithm == "decompose":
        nd = decompose_logn(g, cfg.k, cfg=sim)
        return {"seed": seed, "n": g.n, "colors": nd.colors, "rounds": None}
    if cfg.algorithm == "carve":
        _, dead, records = carve_distance_k(g, set(range(g.n)), cfg.k, cfg.x, cfg=sim)
        return {
            "seed": seed,
            "n": g.n,
            "dead": len(dead),
            "rounds": sum(r.coloring_rounds for r in records),
        }
    if cfg.algorithm == "cps":
        inst = make_instance(cfg.instance["kind"], g, cfg.instance.get("params"))
        result = cps_solve(inst, sim)
        return {
            "seed": seed,
            "n": g.n,
            "iterations": result.iterations,
            "rounds": result.comm_rounds,
        }
    raise ConfigError(f"unknown bench algorithm {cfg.algorithm!r}")


_RUNNERS = {
    "decompose": _run_decompose,
    "carve": _run_carve,
    "lll": _run_lll,
    "pipeline": _run_pipeline,
    "validate": _run_validate,
    "bench": _run_bench,
}


def run_experiment(cfg: ExperimentConfig) -> MetricsReport:
    """Run the configured command over every seed and assemble the report.

    Upstream failures are embedded per run (with the guarantee marked
    failed) rather than aborting the whole experiment."""
    runner = _RUNNERS.get(cfg.command)
    if runner is None:
        raise ConfigError(f"unknown command {cfg.command!r}")
    runs: list[dict] = []
    phase_rows: list[dict] = []
    errors = 0
    for seed in cfg.seeds:
        try:
            if cfg.command in ("decompose", "carve"):
                run = runner(cfg, seed, phase_rows)
            else:
                run = runner(cfg, seed)
        except ConfigError:
            raise
        except CongestKitError as exc:
            errors += 1
            run = {"seed": seed, "error": f"{type(exc).__name__}: {exc}"}
        runs.append(run)

    guarantees: dict[str, bool] = {}
    checks = sorted(
        {key for run in runs for key in run if key.endswith("_ok")}
    )
    for key in checks:
        guarantees[key.removesuffix("_ok")] = all(
            run.get(key, False) for run in runs
        )
    if errors or not runs:
        guarantees["no_errors"] = errors == 0 and bool(runs)

    aggregates: dict = {"seed_count": len(runs), "errors": errors}
    for key in ("rounds", "iterations", "clustered_fraction", "dead", "violated",
                "colors", "residual_components"):
        aggregates.update(_aggregate(runs, key))

    phase_tables = {"phases": phase_rows} if phase_rows else {}
    return MetricsReport(
        command=cfg.command,
        config=cfg.to_dict(),
        runs=runs,
        aggregates=aggregates,
        guarantees=guarantees,
        phase_tables=phase_tables,
    )
