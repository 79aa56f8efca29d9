"""
Command-line entry point.

    gbenders solve  {lp-benders,2ssmilp,miblp,milp}  --instance FILE
    gbenders oracle {lp,vf-grid,miblp-enum,2ssmilp-ef} --instance FILE
    gbenders sample {vf,reaction,dual,primal} --instance FILE --grid LO:HI:STEP

Results go to stdout as JSON; traces and samples go to CSV files.
Exit codes: 0 solved, 1 infeasible, 2 unbounded or assumption violated,
3 limit reached, 4 input error.
"""
import argparse
import json
import logging
import math
import re
import sys
import time
from dataclasses import replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import coloredlogs
import humanfriendly
import numpy as np

from src.core.benders import (
    evaluate_reaction,
    solve_2ssmilp,
    solve_lp_benders,
    solve_miblp,
)
from src.core.branch_bound import extract_dual_function, solve_milp
from src.core.errors import (
    AssumptionViolated,
    BadRange,
    BoxTooLarge,
    DimensionMismatch,
    GBendersError,
    InstanceError,
    MilpStatus,
    NotOptimal,
    NumericalBreakdown,
    ReactionStatus,
    SolveStatus,
)
from src.core.instances import (
    LP_BENDERS,
    MIBLP,
    MILP,
    TWO_STAGE,
    load_instance,
    random_lp_benders,
    random_miblp,
    random_two_stage,
)
from src.core.oracle import (
    oracle_2ssmilp,
    oracle_lp,
    oracle_miblp,
    oracle_reaction_grid,
    oracle_vf_grid,
)
from src.core.piecewise import (
    GlobalDual,
    GlobalPrimal,
    eval_global,
    eval_global_primal,
    grid_points,
    sample_grid,
    samples_frame,
    write_samples,
)
from src.core.settings import Settings, load_settings

logger = logging.getLogger("gbenders")

EXIT_OK = 0
EXIT_INFEASIBLE = 1
EXIT_UNBOUNDED = 2
EXIT_LIMIT = 3
EXIT_INPUT = 4

STATUS_EXIT = {
    SolveStatus.OPTIMAL: EXIT_OK,
    SolveStatus.INFEASIBLE: EXIT_INFEASIBLE,
    SolveStatus.UNBOUNDED: EXIT_UNBOUNDED,
    SolveStatus.ITERATION_LIMIT: EXIT_LIMIT,
    SolveStatus.STALLED: EXIT_LIMIT,
}

# options whose values may start with a minus sign
VALUE_OPTIONS = ("--grid",)
_NEGATIVE_VALUE = re.compile(r"^-[\d.]")

MILP_EXIT = {
    MilpStatus.OPTIMAL: EXIT_OK,
    MilpStatus.INFEASIBLE: EXIT_INFEASIBLE,
    MilpStatus.UNBOUNDED: EXIT_UNBOUNDED,
    MilpStatus.ABORTED: EXIT_LIMIT,
}

GENERATORS: Dict[str, Callable] = {
    LP_BENDERS: random_lp_benders,
    TWO_STAGE: random_two_stage,
    MIBLP: random_miblp,
}


class UsageError(Exception):
    """Raised instead of argparse's own exit so bad arguments map to exit 4."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def parse_grid_spec(text: str) -> Tuple[float, float, float]:
    """LO:HI:STEP to its three numbers."""
    parts = text.split(":")
    if len(parts) != 3:
        raise BadRange(f"Grid must read LO:HI:STEP, got {text!r}")
    try:
        lo, hi, step = (float(p) for p in parts)
    except ValueError as exc:
        raise BadRange(f"Grid must read LO:HI:STEP, got {text!r}") from exc
    return lo, hi, step


def parse_grid(text: str) -> List[float]:
    """LO:HI:STEP to the inclusive grid."""
    return grid_points(*parse_grid_spec(text))


def attach_negative_values(argv: Sequence[str]) -> List[str]:
    """
    Joins "--grid -2:10:0.25" into "--grid=-2:10:0.25"; argparse would
    otherwise read the value as an unknown option.
    """
    tokens, joined = list(argv), []
    i = 0
    while i < len(tokens):
        token = tokens[i]
        following = tokens[i + 1] if i + 1 < len(tokens) else ""
        if token in VALUE_OPTIONS and _NEGATIVE_VALUE.match(following):
            joined.append(f"{token}={tokens[i + 1]}")
            i += 2
            continue
        joined.append(token)
        i += 1
    return joined


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--instance", help="instance file (JSON)")
    parser.add_argument("--seed", type=int, help="generate a random instance of the kind")
    parser.add_argument("--settings", help="settings YAML (default: repository settings.yaml)")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR")
    parser.add_argument("--workers", type=int, help="threads for independent solves")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gbenders", description="Generalized Benders decomposition solvers")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    solve = commands.add_parser("solve", help="run a decomposition driver")
    solve.add_argument("kind", choices=[LP_BENDERS, TWO_STAGE, MIBLP, MILP])
    _common(solve)
    solve.add_argument("--tol", type=float, help="absolute gap tolerance")
    solve.add_argument("--max-iters", type=int, help="iteration limit")
    solve.add_argument("--trace-out", help="write the iteration trace as CSV")
    solve.add_argument("--dump-cuts", help="write the cut blocks as JSON")

    oracle = commands.add_parser("oracle", help="run a brute-force verifier")
    oracle.add_argument("kind", choices=["lp", "vf-grid", "miblp-enum", "2ssmilp-ef"])
    _common(oracle)
    oracle.add_argument("--grid", help="LO:HI:STEP for vf-grid")
    oracle.add_argument("--out", help="CSV path for vf-grid (default stdout)")

    sample = commands.add_parser("sample", help="sample a function on a grid")
    sample.add_argument("kind", choices=["vf", "reaction", "dual", "primal"])
    _common(sample)
    sample.add_argument("--grid", required=True, help="LO:HI:STEP")
    sample.add_argument(
        "--at",
        type=float,
        action="append",
        help="anchor rhs for dual and primal; repeat to combine anchors",
    )
    sample.add_argument("--out", help="CSV path (default stdout)")
    return parser


def _settings(args) -> Settings:
    try:
        settings = load_settings(args.settings)
    except (ValueError, FileNotFoundError) as exc:
        raise UsageError(str(exc)) from exc
    if args.workers is not None:
        if args.workers < 1:
            raise UsageError("--workers must be at least 1")
        settings = replace(
            settings,
            benders=replace(settings.benders, workers=args.workers),
            oracle=replace(settings.oracle, workers=args.workers),
        )
    return settings


def _instance(args, kind: str):
    if args.instance:
        return load_instance(args.instance, kind)
    if args.seed is not None:
        if kind not in GENERATORS:
            raise UsageError(f"No random generator for {kind} instances")
        logger.info("Generating a random %s instance with seed %d", kind, args.seed)
        return GENERATORS[kind](args.seed)
    raise UsageError("Either --instance or --seed is required")


def _plain(value):
    if value is None:
        return None
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [float(v) for v in value.reshape(-1)]
    if isinstance(value, float) and not math.isfinite(value):
        return "inf" if value > 0 else "-inf"
    return value


def _emit(document: dict) -> None:
    sys.stdout.write(json.dumps(document, indent=2) + "\n")


def _write_samples(samples, path: Optional[str]) -> None:
    if path:
        write_samples(samples, path)
        logger.info("Wrote %d samples to %s", len(samples), path)
    else:
        sys.stdout.write(samples_frame(samples).to_csv(index=False))


def _solve(args, settings: Settings) -> int:
    if args.kind == MILP:
        instance = _instance(args, MILP)
        result = solve_milp(instance.to_problem(), settings.bnb, settings.lp)
        document = {
            "command": "solve milp",
            "status": result.status.value,
            "value": _plain(result.value),
            "y": _plain(result.y),
            "nodes": result.tree.node_count,
        }
        if result.status == MilpStatus.OPTIMAL:
            document["dual"] = extract_dual_function(result.tree).to_dict()
        _emit(document)
        return MILP_EXIT[result.status]

    drivers = {
        LP_BENDERS: solve_lp_benders,
        TWO_STAGE: solve_2ssmilp,
        MIBLP: solve_miblp,
    }
    instance = _instance(args, args.kind)
    result = drivers[args.kind](instance, args.tol, args.max_iters, settings)
    if args.trace_out:
        result.trace.to_csv(args.trace_out)
        logger.info("Wrote %d trace rows to %s", len(result.trace), args.trace_out)
    if args.dump_cuts:
        with open(args.dump_cuts, "w", encoding="utf-8") as handle:
            json.dump(list(result.cuts), handle, indent=2)
    document = {"command": f"solve {args.kind}"}
    document.update(result.summary())
    _emit(document)
    return STATUS_EXIT[result.status]


def _oracle(args, settings: Settings) -> int:
    if args.kind == "vf-grid":
        if not args.grid:
            raise UsageError("oracle vf-grid needs --grid")
        instance = _instance(args, MILP)
        _write_samples(oracle_vf_grid(instance, parse_grid(args.grid), settings), args.out)
        return EXIT_OK
    if args.kind == "lp":
        result = oracle_lp(_instance(args, LP_BENDERS), settings)
    elif args.kind == "miblp-enum":
        result = oracle_miblp(_instance(args, MIBLP), settings)
    else:
        result = oracle_2ssmilp(_instance(args, TWO_STAGE), settings)
    document = {"command": f"oracle {args.kind}"}
    document.update(result.summary())
    _emit(document)
    return STATUS_EXIT[result.status]


def _scalar_reaction(instance) -> None:
    if instance.b2.size != 1 or instance.leader_rows().size != 0:
        raise DimensionMismatch(
            "Reaction sampling needs one follower row and no leader rows involving y"
        )


def _sample(args, settings: Settings) -> int:
    grid = parse_grid(args.grid)
    if args.kind == "vf":
        _write_samples(oracle_vf_grid(_instance(args, MILP), grid, settings), args.out)
        return EXIT_OK

    instance = _instance(args, MIBLP)
    _scalar_reaction(instance)
    if args.kind == "reaction":
        _write_samples(oracle_reaction_grid(instance, grid, settings), args.out)
        return EXIT_OK

    if not args.at:
        raise UsageError(f"sample {args.kind} needs --at")
    primals, duals = GlobalPrimal(), GlobalDual()
    for anchor in args.at:
        cert = evaluate_reaction(instance, [], [anchor], settings)
        if args.kind == "primal":
            if cert.primal is None:
                logger.error("Follower is infeasible at %g; no primal function", anchor)
                return EXIT_INFEASIBLE
            primals = primals.add(cert.primal)
        else:
            if cert.status != ReactionStatus.OPTIMAL:
                logger.error("Reaction is %s at %g; no dual function", cert.status.value, anchor)
                return EXIT_INFEASIBLE
            duals = duals.add(cert.dual, cert.primal)

    lo, hi, step = parse_grid_spec(args.grid)
    if args.kind == "primal":
        samples = sample_grid(lambda beta: eval_global_primal(primals, [beta]), lo, hi, step)
    else:
        samples = sample_grid(lambda beta: eval_global(duals, [], [beta]), lo, hi, step)
    _write_samples(samples, args.out)
    return EXIT_OK


HANDLERS = {"solve": _solve, "oracle": _oracle, "sample": _sample}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Runs one command and returns its exit code."""
    try:
        argv = sys.argv[1:] if argv is None else argv
        args = build_parser().parse_args(attach_negative_values(argv))
        settings = _settings(args)
    except UsageError as exc:
        sys.stderr.write(f"gbenders: {exc}\n")
        return EXIT_INPUT

    level = (args.log_level or settings.cli.log_level).upper()
    coloredlogs.install(level=level, stream=sys.stderr, fmt="%(asctime)s %(name)s %(levelname)s %(message)s")

    started = time.monotonic()
    try:
        code = HANDLERS[args.command](args, settings)
    except (UsageError, InstanceError, BadRange, BoxTooLarge, DimensionMismatch) as exc:
        logger.error("%s", exc)
        code = EXIT_INPUT
    except AssumptionViolated as exc:
        logger.error("Assumption violated: %s", exc)
        code = EXIT_UNBOUNDED
    except (NumericalBreakdown, NotOptimal) as exc:
        logger.error("Solve stopped: %s", exc)
        code = EXIT_LIMIT
    except GBendersError as exc:
        logger.error("%s", exc)
        code = EXIT_INPUT
    logger.info(
        "%s %s finished with exit code %d in %s",
        args.command,
        args.kind,
        code,
        humanfriendly.format_timespan(time.monotonic() - started),
    )
    return code


if __name__ == "__main__":
    sys.exit(main())
