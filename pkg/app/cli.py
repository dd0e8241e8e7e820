# app/cli.py
"""
Batch front end: staircase sweeps, candidate extraction, optimization and plan
verification. Every command reads files, writes files atomically and records
a manifest next to its output.

Exit codes: 0 success, 2 input error, 3 output error, 4 infeasible plan or
failed verification.
"""
import argparse
import logging
import sys
from typing import Dict, List, Optional

from app import config
from app.catalog import resolve_gpu
from app.errors import InputError
from app.files import atomic_write_text, dumps, load_layers, load_model, read_json, validate
from app.manifest import RECORDER
from app.optimizer import optimize_accuracy, optimize_latency
from app.profile import identify_candidates, profile_csv_text
from app.schemas import OptimizationPlan, ProfileTable
from app.sources import AnalyticalProfileSource, EmpiricalProfileSource, ProfileSource
from app.verify import verify_plan

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_IO = 3
EXIT_INFEASIBLE = 4


def _source(args: argparse.Namespace) -> ProfileSource:
    if getattr(args, "profile", None):
        return EmpiricalProfileSource(args.profile)
    if not getattr(args, "gpu", None):
        raise InputError("either --profile or --gpu is required")
    return AnalyticalProfileSource(resolve_gpu(args.gpu, args.policy), getattr(args, "widths", None))


def _inputs(args: argparse.Namespace, *names: str) -> List[str]:
    return [getattr(args, n) for n in names if getattr(args, n, None)]


def _finish(args: argparse.Namespace, text: str, params: Dict, inputs: List[str], notes: List[str]) -> None:
    atomic_write_text(args.out, text)
    manifest = RECORDER.record(args.command, inputs, params, [args.out], notes)
    RECORDER.write(manifest, args.out)
    logger.info("wrote out=%s", args.out)


def cmd_staircase(args: argparse.Namespace) -> int:
    gpu = resolve_gpu(args.gpu, args.policy)
    source = AnalyticalProfileSource(gpu, args.widths)
    tables = source.tables_for(load_layers(args.layer))
    _finish(
        args,
        profile_csv_text(tables.values(), gpu),
        {"widths": args.widths, "policy": args.policy, "gpu": gpu.name},
        _inputs(args, "layer", "gpu"),
        [],
    )
    return EXIT_OK


def cmd_candidates(args: argparse.Namespace) -> int:
    source = _source(args)
    if isinstance(source, EmpiricalProfileSource):
        tables: Dict[str, ProfileTable] = source.tables
    else:
        if not args.layer:
            raise InputError("--layer is required with --gpu")
        tables = source.tables_for(load_layers(args.layer))
    payload = {"layers": [identify_candidates(t, args.m).model_dump(mode="json") for t in tables.values()]}
    _finish(
        args,
        dumps(payload),
        {"m": args.m, "widths": args.widths, "policy": args.policy},
        _inputs(args, "profile", "layer", "gpu"),
        source.notes,
    )
    return EXIT_OK


def cmd_optimize(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    source = _source(args)
    tables = source.tables_for_model(model)
    if args.mode == "accuracy":
        plan = optimize_accuracy(model, tables, m=args.m, metric=args.metric)
    else:
        plan = optimize_latency(
            model, tables, m=args.m, tau=args.tau, delta=args.delta,
            max_retries=args.max_retries, metric=args.metric,
        )
    _finish(
        args,
        dumps(plan.model_dump(mode="json")),
        {
            "mode": args.mode, "m": args.m, "tau": args.tau, "tau_final": plan.tau_final,
            "delta": args.delta, "metric": args.metric, "max_retries": args.max_retries,
            "policy": args.policy, "widths": args.widths,
        },
        _inputs(args, "model", "profile", "gpu"),
        [*source.notes, *plan.notes],
    )
    logger.info(
        "plan model=%s feasible=%s latency_ratio=%.6f total_pg=%d",
        plan.model_name, plan.feasible, plan.latency_ratio, plan.total_pg,
    )
    return EXIT_OK if plan.feasible else EXIT_INFEASIBLE


def cmd_verify(args: argparse.Namespace) -> int:
    plan = validate(OptimizationPlan, read_json(args.plan), args.plan)
    if args.profile:
        source = EmpiricalProfileSource(args.profile)
        tables = source.tables_for_model(load_model(args.model)) if args.model else source.tables
    else:
        if not args.model:
            raise InputError("--model is required with --gpu")
        tables = _source(args).tables_for_model(load_model(args.model))
    report = verify_plan(plan, tables, args.delta)
    text = report.render()
    sys.stdout.write(text)
    if args.out:
        _finish(args, text, {"delta": args.delta}, _inputs(args, "plan", "profile", "model", "gpu"), [])
    return EXIT_OK if report.passed else EXIT_INFEASIBLE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tailtrim",
        description="Model GPU wave quantization of conv layers and tune layer widths around it.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    gpu_opts = argparse.ArgumentParser(add_help=False)
    gpu_opts.add_argument("--policy", help="block-per-filter or fixed:<threads_per_block>")
    gpu_opts.add_argument("--widths", help="width grid, e.g. 64:512, 1:512:8 or 10%%:100%%:10%%")

    st = sub.add_parser("staircase", parents=[gpu_opts], help="latency staircase of a width sweep")
    st.add_argument("--layer", required=True, help="layer or model JSON")
    st.add_argument("--gpu", required=True, help="catalog name or GPU spec JSON")
    st.add_argument("--out", required=True)
    st.set_defaults(handler=cmd_staircase)

    cd = sub.add_parser("candidates", parents=[gpu_opts], help="tail-free candidate widths per layer")
    src = cd.add_mutually_exclusive_group(required=True)
    src.add_argument("--profile", help="profile CSV")
    src.add_argument("--gpu", help="catalog name or GPU spec JSON (needs --layer)")
    cd.add_argument("--layer", help="layer or model JSON")
    cd.add_argument("--m", type=int, default=config.DEFAULT_M)
    cd.add_argument("--out", required=True)
    cd.set_defaults(handler=cmd_candidates)

    op = sub.add_parser("optimize", parents=[gpu_opts], help="optimize layer widths")
    op.add_argument("--model", required=True, help="model JSON")
    src = op.add_mutually_exclusive_group(required=True)
    src.add_argument("--profile", help="profile CSV")
    src.add_argument("--gpu", help="catalog name or GPU spec JSON")
    op.add_argument("--mode", choices=["latency", "accuracy"], default="latency")
    op.add_argument("--m", type=int, default=config.DEFAULT_M)
    op.add_argument("--tau", type=float, help="parameter-gain tolerance (default: a fraction of model size)")
    op.add_argument("--delta", type=float, default=config.DEFAULT_DELTA)
    op.add_argument("--metric", choices=["width", "params"], default=config.DEFAULT_METRIC)
    op.add_argument("--max-retries", type=int, default=config.DEFAULT_MAX_RETRIES)
    op.add_argument("--out", required=True)
    op.set_defaults(handler=cmd_optimize)

    vf = sub.add_parser("verify", parents=[gpu_opts], help="recheck a plan against a profile")
    vf.add_argument("--plan", required=True)
    src = vf.add_mutually_exclusive_group(required=True)
    src.add_argument("--profile", help="profile CSV")
    src.add_argument("--gpu", help="catalog name or GPU spec JSON (needs --model)")
    vf.add_argument("--model", help="model JSON: required with --gpu, adds layer geometry to --profile")
    vf.add_argument("--delta", type=float)
    vf.add_argument("--out", help="also write the report here")
    vf.set_defaults(handler=cmd_verify)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else config.LOG_LEVEL,
        format="%(levelname)s %(name)s %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.handler(args)
    except InputError as e:
        logger.debug("input error", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as e:
        print(f"error: cannot write output: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
