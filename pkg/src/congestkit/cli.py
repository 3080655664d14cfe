"""Command line entry point.

Exit codes: 0 all guarantees hold, 1 a guarantee failed, 2 bad usage or
configuration, 3 internal error."""

from __future__ import annotations

import argparse
import datetime
import json
import sys
import traceback
from pathlib import Path

from .errors import ConfigError, CongestKitError
from .workbench import ExperimentConfig, run_experiment

COMMANDS = ("decompose", "carve", "lll", "pipeline", "validate", "bench")


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="JSON config file; its fields override flags")
    sub.add_argument("--graph", help="generator spec as JSON, e.g. "
                     '\'{"kind": "torus", "w": 4, "h": 4}\'')
    sub.add_argument("--graph-file", help="edge list file to load instead")
    sub.add_argument("--instance", help="instance spec as JSON")
    sub.add_argument("-k", type=int, help="separation parameter")
    sub.add_argument("-x", type=int, help="loss exponent")
    sub.add_argument("--lam", type=int, help="color budget for the few-colors variant")
    sub.add_argument("--seeds", help="comma separated seed list")
    sub.add_argument("--bandwidth", type=int, dest="bandwidth_bits",
                     help="per edge per round message budget in bits")
    sub.add_argument("--mode", choices=["congest", "local"])
    sub.add_argument("--budget", type=int, help="enumeration budget")
    sub.add_argument("--strict-criterion", action="store_true", default=None,
                     help="require the strong criterion before the pipeline runs")
    sub.add_argument("--variant", choices=["distance", "levels"],
                     help="carve variant")
    sub.add_argument("--algorithm", choices=["decompose", "carve", "cps"],
                     help="what bench measures")
    sub.add_argument("--artifact", help="file to validate")
    sub.add_argument("--artifact-kind", choices=["decomposition", "assignment"])
    sub.add_argument("--report", help="where to write the JSON report")
    sub.add_argument("--csv-dir", help="directory for CSV tables")
    sub.add_argument("--timestamps", action="store_true", default=None,
                     help="stamp the report with the generation time")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="congestkit",
        description="clustering, decomposition and constraint solving "
        "experiments on simulated networks",
    )
    subs = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        _add_common(subs.add_parser(name))
    return parser


def _merge_config(args: argparse.Namespace) -> ExperimentConfig:
    doc: dict = {"command": args.command}
    if args.graph is not None:
        try:
            doc["graph"] = json.loads(args.graph)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"--graph is not valid JSON: {exc}") from exc
    if args.graph_file is not None:
        doc["graph"] = {"file": args.graph_file}
    if args.instance is not None:
        try:
            doc["instance"] = json.loads(args.instance)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"--instance is not valid JSON: {exc}") from exc
    if args.seeds is not None:
        try:
            doc["seeds"] = [int(s) for s in args.seeds.split(",") if s.strip()]
        except ValueError as exc:
            raise ConfigError(f"--seeds must be comma separated integers: {exc}") from exc
    for key in ("k", "x", "lam", "bandwidth_bits", "mode", "budget",
                "strict_criterion", "variant", "algorithm", "artifact",
                "artifact_kind", "report", "csv_dir", "timestamps"):
        value = getattr(args, key)
        if value is not None:
            doc[key] = value
    if args.config is not None:
        try:
            file_doc = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(file_doc, dict):
            raise ConfigError("config file must hold a JSON object")
        doc.update(file_doc)
        doc["command"] = args.command
    return ExperimentConfig.from_dict(doc)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _merge_config(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    try:
        report = run_experiment(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CongestKitError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except Exception:
        traceback.print_exc()
        return 3

    stamp = None
    if cfg.timestamps:
        stamp = datetime.datetime.now(datetime.timezone.utc).isoformat()
    text = report.to_json(timestamp=stamp)
    if cfg.report is not None:
        Path(cfg.report).write_text(text + "\n")
    else:
        print(text)
    if cfg.csv_dir is not None:
        report.write_csv(cfg.csv_dir)

    for name, ok in sorted(report.guarantees.items()):
        status = "pass" if ok else "FAIL"
        print(f"{name}: {status}", file=sys.stderr)
    return 0 if report.overall_pass else 1


if __name__ == "__main__":
    sys.exit(main())
