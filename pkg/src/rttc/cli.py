"""Operator command line: ingestion, servers, runs, sweeps, reports.

Exit codes: 0 success, 1 per-query errors occurred, 2 configuration
error, 3 I/O error. ``RTTC_LOG`` selects the log level.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

from rttc.errors import ConfigError, IoError, RttcError

log = logging.getLogger("rttc")

EXIT_OK = 0
EXIT_QUERY_ERRORS = 1
EXIT_CONFIG = 2
EXIT_IO = 3


def _setup_logging() -> None:
    level = os.environ.get("RTTC_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))


def _dump_json(obj, path: Path) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def cmd_kb_ingest(args) -> int:
    from rttc.gateway import HashingEmbedder
    from rttc.kb import KnowledgeBase

    try:
        text = Path(args.input).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read {args.input}: {exc}") from exc
    records = []
    for i, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
            records.append((d["prompt"], d.get("completion", ""), d["domain"]))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ConfigError(f"{args.input}:{i}: bad record: {exc}") from exc
    kb = KnowledgeBase(dim=args.dim)
    count = kb.ingest(records, HashingEmbedder(dim=args.dim))
    kb.save(args.out)
    print(json.dumps({"ingested": count, "out": str(args.out)}))
    return EXIT_OK


def cmd_kb_serve(args) -> int:
    from rttc import kb_service

    kb_service.serve(args.base, bind=args.bind)
    return EXIT_OK


def cmd_model_sim_serve(args) -> int:
    from rttc import model_service

    model_service.serve(bind=args.bind, dim=args.dim)
    return EXIT_OK


def _run_stream_from_args(args):
    from rttc.config import build_deps, load_queries, load_run_config
    from rttc.pipeline import run_stream
    from rttc.qsc import QscState

    config = load_run_config(args.config)
    queries = load_queries(args.queries)
    if not queries:
        raise ConfigError(f"no queries in {args.queries}")
    qsc_state = None
    if getattr(args, "qsc_state", None) and Path(args.qsc_state).exists():
        qsc_state = QscState.load(args.qsc_state)
    deps = build_deps(config, qsc_state=qsc_state)
    outcomes, errors = run_stream(queries, config.pipeline, deps)
    if getattr(args, "qsc_state", None) and deps.qsc is not None:
        deps.qsc.save(args.qsc_state)
    return config, queries, outcomes, errors


def cmd_run(args) -> int:
    from rttc.metrics import build_metrics

    config, _, outcomes, errors = _run_stream_from_args(args)
    out_path = Path(args.out)
    try:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        with out_path.open("w", encoding="utf-8") as fh:
            for o in outcomes:
                fh.write(json.dumps(o.to_json_dict(), sort_keys=True) + "\n")
            for e in errors:
                fh.write(json.dumps(e.to_json_dict(), sort_keys=True) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {out_path}: {exc}") from exc
    if outcomes:
        metrics = build_metrics(outcomes, len(errors), config.cost)
    else:
        metrics = {"error_count": len(errors)}
    _dump_json(metrics, out_path.with_suffix(out_path.suffix + ".metrics.json"))
    return EXIT_OK if not errors else EXIT_QUERY_ERRORS


def cmd_sweep(args) -> int:
    from rttc.config import build_deps, load_queries, load_run_config
    from rttc.pipeline import sweep_threshold

    try:
        taus = [float(t) for t in args.taus.split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --taus value: {exc}") from exc
    if not taus:
        raise ConfigError("--taus must list at least one threshold")
    if len(set(taus)) != len(taus):
        raise ConfigError("--taus contains duplicates")
    if sorted(taus) != taus:
        raise ConfigError("--taus must be ascending")
    config = load_run_config(args.config)
    queries = load_queries(args.queries)
    if not queries:
        raise ConfigError(f"no queries in {args.queries}")
    rows = sweep_threshold(
        queries,
        taus,
        config.pipeline,
        make_deps=lambda: build_deps(config),
        cost_params=config.cost,
    )
    out = Path(args.out)
    _dump_json(rows, out.with_suffix(".json"))
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        with out.with_suffix(".csv").open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["tau", "no_adaptation", "rag", "ttt", "mean_cost", "error_count"]
            )
            for row in rows:
                dist = row["distribution"]
                writer.writerow(
                    [
                        row["tau"],
                        dist["NoAdaptation"],
                        dist["Rag"],
                        dist["Ttt"],
                        row.get("mean_cost", ""),
                        row["error_count"],
                    ]
                )
    except OSError as exc:
        raise IoError(f"cannot write {out}: {exc}") from exc
    return EXIT_OK


def cmd_report(args) -> int:
    from rttc.cost import CostParams, StrategyMode
    from rttc.errors import EmptyInput
    from rttc.metrics import build_metrics
    from rttc.pipeline import RoutingOutcome

    try:
        raw_params = json.loads(Path(args.cost_params).read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoError(f"cannot read {args.cost_params}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"bad cost params: {exc}") from exc
    try:
        mode = None
        if "mode" in raw_params:
            mode = StrategyMode(raw_params.pop("mode"))
        params = CostParams.from_json_dict(raw_params)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad cost params: {exc!r}") from exc

    try:
        lines = Path(args.outcomes).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise IoError(f"cannot read {args.outcomes}: {exc}") from exc
    outcomes = []
    error_count = 0
    parsed_any = False
    for i, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.outcomes}:{i}: {exc}") from exc
        parsed_any = True
        if "error" in d:
            error_count += 1
        else:
            outcomes.append(RoutingOutcome.from_json_dict(d))
    if not parsed_any:
        raise ConfigError(f"{args.outcomes} contains no outcome records")
    try:
        metrics = build_metrics(outcomes, error_count, params, mode=mode)
    except EmptyInput:
        metrics = {"error_count": error_count}
    print(json.dumps(metrics, sort_keys=True, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rttc")
    sub = parser.add_subparsers(dest="command", required=True)

    kb = sub.add_parser("kb", help="knowledge base commands")
    kb_sub = kb.add_subparsers(dest="kb_command", required=True)
    ingest = kb_sub.add_parser("ingest", help="embed a JSONL corpus into a base dir")
    ingest.add_argument("--input", required=True)
    ingest.add_argument("--out", required=True)
    ingest.add_argument("--dim", type=int, default=64)
    ingest.set_defaults(func=cmd_kb_ingest)
    serve = kb_sub.add_parser("serve", help="serve retrieval over HTTP")
    serve.add_argument("--base", required=True)
    serve.add_argument("--bind", default="127.0.0.1:8080")
    serve.set_defaults(func=cmd_kb_serve)

    run = sub.add_parser("run", help="route a query stream")
    run.add_argument("--config", required=True)
    run.add_argument("--queries", required=True)
    run.add_argument("--out", required=True)
    run.add_argument("--qsc-state", dest="qsc_state", default=None)
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="run once per reward threshold")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--queries", required=True)
    sweep.add_argument("--taus", required=True)
    sweep.add_argument("--out", required=True)
    sweep.set_defaults(func=cmd_sweep)

    report = sub.add_parser("report", help="aggregate metrics from outcomes")
    report.add_argument("--outcomes", required=True)
    report.add_argument("--cost-params", dest="cost_params", required=True)
    report.set_defaults(func=cmd_report)

    sim = sub.add_parser("model-sim", help="simulated model backend")
    sim_sub = sim.add_subparsers(dest="sim_command", required=True)
    sim_serve = sim_sub.add_parser("serve", help="serve the model wire protocol")
    sim_serve.add_argument("--bind", default="127.0.0.1:8081")
    sim_serve.add_argument("--dim", type=int, default=64)
    sim_serve.set_defaults(func=cmd_model_sim_serve)

    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IoError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except RttcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_QUERY_ERRORS


if __name__ == "__main__":
    sys.exit(main())
