"""Command-line front end: each pipeline stage as a subcommand.

Exit codes are scriptable: 0 success, 1 usage or internal error, 2 trace
finished but reported exceptions, 3 design ended infeasible.  Every run
writes its artifacts under a fresh directory; nothing is modified in
place.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

from .assembly import assemble, plan_connections, plan_to_dict
from .fixtures.circuits import build_store
from .kg import Store, Triplet
from .netlist import apply_sizing, emit, parse, save_net_roles
from .pipeline import PipelineError, RunManifest, run_design
from .simbridge import BackendConfig, evaluate
from .sizing import (BOConfig, FoMConfig, MetricTerm, comparator_fom,
                     opamp_fom, run_bo, space_from_netlist, write_trajectory)
from .strategy import ProviderConfig
from .trace import (TraceConfig, boxes_from_file, read_pgm, report_to_dict,
                    trace_to_netlist)

__all__ = ["cmd_assemble", "cmd_design", "cmd_kg", "cmd_size", "cmd_trace",
           "main"]

log = logging.getLogger(__name__)


class CliError(Exception):
    """Usage-level problem; reported on stderr with exit code 1."""


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; 2 is reserved for trace
    # exceptions here, so route usage problems to exit code 1 instead
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _require(path_str: str | None, what: str, directory: bool = False
             ) -> Path:
    if not path_str:
        raise CliError(f"--{what} is required")
    path = Path(path_str)
    if not path.exists():
        raise CliError(f"{what} path {path_str!r} does not exist")
    if directory and not path.is_dir():
        raise CliError(f"{what} path {path_str!r} is not a directory")
    return path


def _out_dir(args, default: str | None = None) -> Path:
    target = args.out or default
    if not target:
        raise CliError("--out is required")
    path = Path(target)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_config(args) -> dict:
    if not args.config:
        return {}
    path = _require(args.config, "config")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise CliError(f"config {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# subcommands


def cmd_trace(args) -> int:
    image = read_pgm(_require(args.image, "image"))
    boxes = boxes_from_file(_require(args.boxes, "boxes"))
    config = TraceConfig(threshold=args.threshold)
    netlist, result = trace_to_netlist(image, boxes, config)
    out = _out_dir(args)
    (out / "netlist.sp").write_text(emit(netlist), encoding="utf-8")
    with open(out / "trace_report.json", "w", encoding="utf-8") as fh:
        json.dump(report_to_dict(netlist, result), fh, indent=2,
                  sort_keys=True)
        fh.write("\n")
    print(f"traced {len(boxes)} boxes: {len(result.nets)} nets, "
          f"{len(result.junctions)} junction dots, "
          f"{len(result.exceptions)} exceptions -> {out}")
    for reason, ids in result.exceptions:
        print(f"  exception: {reason} (boxes: {', '.join(ids)})")
    if result.exceptions and not args.allow_exceptions:
        return 2
    return 0


def cmd_kg(args) -> int:
    if args.action == "build":
        out = _out_dir(args)
        store = build_store()
        store.save(out)
        triplets = sum(len(e.triplets()) for e in store.entities())
        print(f"built store with {len(store)} entities, "
              f"{triplets} triplets -> {out}")
        return 0
    store = Store.load(_require(args.store, "store", directory=True))
    if args.action == "query":
        if not args.pattern:
            raise CliError("query needs at least one --pattern relation=object")
        patterns = []
        for raw in args.pattern:
            if "=" not in raw:
                raise CliError(f"pattern {raw!r} is not relation=object")
            relation, obj = raw.split("=", 1)
            patterns.append(Triplet(None, relation.strip(), obj.strip()))
        hits = store.query(patterns)
        if not hits:
            print("no matches")
            return 0
        for rank, hit in enumerate(hits, start=1):
            print(f"{rank}. {hit.entity.entity_id} "
                  f"[{hit.entity.entity_class}] "
                  f"matched {hit.matched}/{len(patterns)}")
        return 0
    # export
    out = args.out
    if not out:
        raise CliError("--out is required")
    statements = store.export_statements()
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    Path(out).write_text("\n".join(statements) + "\n", encoding="utf-8")
    print(f"exported {len(statements)} statements -> {out}")
    return 0


def cmd_assemble(args) -> int:
    store = Store.load(_require(args.store, "store", directory=True))
    if not args.part:
        raise CliError("assemble needs at least one --part entity id")
    parts = [store.get(p) for p in args.part]
    plan = plan_connections(parts)
    circuit = assemble(parts, plan)
    out = _out_dir(args)
    (out / "netlist.sp").write_text(emit(circuit.netlist), encoding="utf-8")
    save_net_roles(circuit.netlist, out / "net_roles.json")
    with open(out / "plan.json", "w", encoding="utf-8") as fh:
        json.dump(plan_to_dict(plan), fh, indent=2, sort_keys=True)
        fh.write("\n")
    exposures = ", ".join(f"{role}={net}"
                          for role, net in sorted(circuit.exposures.items()))
    print(f"assembled {len(circuit.netlist.components)} components from "
          f"{len(parts)} parts -> {out}")
    print(f"  exposures: {exposures}")
    return 0


def _fom_from_flag(name: str) -> FoMConfig:
    if name == "opamp":
        return opamp_fom()
    if name == "comparator":
        return comparator_fom()
    if name.startswith(("min:", "max:")):
        goal = "minimize" if name.startswith("min:") else "maximize"
        return FoMConfig((MetricTerm(name[4:], goal),))
    raise CliError(f"unknown merit profile {name!r}; use opamp, comparator, "
                   "min:<metric>, or max:<metric>")


def cmd_size(args) -> int:
    netlist = parse(_require(args.netlist, "netlist")
                    .read_text(encoding="utf-8"))
    space = space_from_netlist(netlist)
    config = _load_config(args)
    backend_cfg = config.get("backend", {"kind": "synthetic",
                                         "model": args.model})
    try:
        backend = BackendConfig(**backend_cfg)
    except TypeError as exc:
        raise CliError(f"bad backend config: {exc}") from exc
    fom = _fom_from_flag(args.fom)
    bo = BOConfig(n_init=args.n_init, n_iter=args.n_iter,
                  budget=max(args.budget, args.n_init + args.n_iter),
                  seed=args.seed if args.seed is not None else 0)
    result = run_bo(space, fom, lambda a: evaluate(None, a, backend), bo)
    out = _out_dir(args)
    write_trajectory(result, out / "trajectory.csv")
    (out / "best_netlist.sp").write_text(
        emit(apply_sizing(netlist, result.best.assignment)),
        encoding="utf-8")
    with open(out / "best.json", "w", encoding="utf-8") as fh:
        json.dump({"fom": result.best.fom,
                   "assignment": result.best.assignment,
                   "measurements": result.best.measurements,
                   "evaluations": result.evaluations},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"sized {space.effective_dim} free parameters over "
          f"{result.evaluations} evaluations; best merit "
          f"{result.best.fom:.6g} -> {out}")
    return 0


def cmd_design(args) -> int:
    spec_path = _require(args.spec, "spec")
    store_path = _require(args.store, "store", directory=True)
    config = _load_config(args)
    try:
        backend = BackendConfig(**config.get(
            "backend", {"kind": "synthetic", "model": "surrogate_opamp"}))
        provider = ProviderConfig(**config.get("provider", {}))
        bo = BOConfig(**config.get("bo", {}))
    except TypeError as exc:
        raise CliError(f"bad run config: {exc}") from exc
    if args.seed is not None:
        bo = replace(bo, seed=args.seed)
    if not args.out:
        raise CliError("--out is required")
    manifest = RunManifest(
        spec_path=str(spec_path), store_path=str(store_path),
        backend=backend, provider=provider, bo=bo, out_dir=args.out,
        max_attempts=args.max_attempts
        if args.max_attempts is not None
        else int(config.get("max_attempts", 3)))
    run_id = args.run_id or datetime.now(timezone.utc).strftime(
        "%Y%m%dT%H%M%SZ")
    report, run_dir = run_design(manifest, run_id)
    for attempt in report.attempts:
        verdict = "met" if attempt.met else "missed"
        print(f"attempt {attempt.index}: {'+'.join(attempt.topology)} "
              f"-> {verdict} (merit {attempt.fom:.6g})")
        for line in attempt.unmet:
            print(f"  unmet: {line}")
    print(f"status: {report.status} "
          f"(best attempt {report.best_attempt}) -> {run_dir}")
    if report.status != "met":
        if report.reason:
            print(f"reason: {report.reason}")
        return 3
    return 0


# ---------------------------------------------------------------------------
# wiring


def _build_parser() -> _Parser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="override the optimizer seed")
    common.add_argument("--config", default=None,
                        help="JSON run configuration file")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true",
                        help="log progress to stderr")

    parser = _Parser(prog="analogkit",
                     description="schematic-to-sized-netlist toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_trace = sub.add_parser("trace", parents=[common],
                             help="raster schematic to netlist")
    p_trace.add_argument("image", help="PGM image file")
    p_trace.add_argument("boxes", help="labeled-box JSONL file")
    p_trace.add_argument("--threshold", type=int, default=128)
    p_trace.add_argument("--allow-exceptions", action="store_true",
                         help="exit 0 even when the trace reports "
                              "exceptions")
    p_trace.set_defaults(func=cmd_trace)

    p_kg = sub.add_parser("kg", parents=[common],
                          help="store build, query, export")
    p_kg.add_argument("action", choices=["build", "query", "export"])
    p_kg.add_argument("--store", default=None, help="store directory")
    p_kg.add_argument("--pattern", action="append", default=[],
                      metavar="RELATION=OBJECT")
    p_kg.set_defaults(func=cmd_kg)

    p_asm = sub.add_parser("assemble", parents=[common],
                           help="wire stored parts into one circuit")
    p_asm.add_argument("--store", default=None, help="store directory")
    p_asm.add_argument("--part", action="append", default=[],
                       metavar="ENTITY_ID")
    p_asm.set_defaults(func=cmd_assemble)

    p_size = sub.add_parser("size", parents=[common],
                            help="optimize one netlist standalone")
    p_size.add_argument("--netlist", default=None, help="netlist file")
    p_size.add_argument("--model", default="sphere",
                        help="synthetic backend model")
    p_size.add_argument("--fom", default="min:sphere",
                        help="opamp | comparator | min:<m> | max:<m>")
    p_size.add_argument("--n-init", type=int, default=20)
    p_size.add_argument("--n-iter", type=int, default=30)
    p_size.add_argument("--budget", type=int, default=2000)
    p_size.set_defaults(func=cmd_size)

    p_design = sub.add_parser("design", parents=[common],
                              help="full specification-to-netlist loop")
    p_design.add_argument("--spec", default=None,
                          help="specification JSON file")
    p_design.add_argument("--store", default=None, help="store directory")
    p_design.add_argument("--run-id", default=None,
                          help="name of the run directory "
                               "(default: UTC timestamp)")
    p_design.add_argument("--max-attempts", type=int, default=None)
    p_design.set_defaults(func=cmd_design)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # library errors: report, do not traceback
        if args.verbose:
            raise
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
