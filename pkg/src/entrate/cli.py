"""Command-line interface.

Subcommands:

    entrate validate MODEL
    entrate entropy MODEL [--terms N | --accuracy DELTA | --sweep N1,N2,...]
    entrate oracle MODEL --length N
    entrate generate MODEL --length N --seed S --out FILE [--with-states]
    entrate estimate SEQUENCE --q Q [--max-iters K] [--tol T] [--seed-init S]
    entrate gilbert --P P --Q Q --h H [H ...]

Exit codes: 0 success, 2 domain or validation failure, 3 numerical failure,
4 unreadable or malformed input.
"""

import argparse
import hashlib
import json
import logging
import math
import sys
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from opentelemetry import trace
from pydantic import BaseModel, Field

from .callbacks import LoggingCallbacks
from .config import (
    ModelConfig,
    RuntimeEnv,
    initialize_environment,
    load_model_config,
    load_sequence,
    write_sequence,
)
from .engine import (
    EntropyEstimate,
    build_orbit,
    convergence_table,
    entropy_rate,
    gamma_sup,
    terms_for_accuracy,
)
from .errors import EXIT_DOMAIN, EXIT_OK, EntrateError, ParameterOutOfRange
from .estimator import EmParameters, estimate_entropy_from_sequence
from .gilbert import DEFAULT_TERMS, capacity_sweep
from .model import sample_sequence, validate_parameters
from .oracle import joint_entropies
from .utils.observability import setup_logging, setup_tracing

logger = logging.getLogger(__name__)
tracer = trace.get_tracer(__name__)

DEFAULT_ENTROPY_TERMS = 50


class RunReport(BaseModel):
    """Structured record of one CLI invocation.

    Attributes:
        command: The command line that was run.
        input_digest: SHA-256 of the input file, or of the parameters when the
            command reads no file.
        results: Numeric results of the command.
        diagnostics: Supporting quantities (gamma, B, N, residuals, ...).
        elapsed_seconds: Wall-clock time of the command.
    """

    command: list[str]
    input_digest: str | None = None
    results: dict[str, Any] = Field(default_factory=dict)
    diagnostics: dict[str, Any] = Field(default_factory=dict)
    elapsed_seconds: float = 0.0


@dataclass
class Outcome:
    """What a command handler produced."""

    results: dict[str, Any]
    diagnostics: dict[str, Any] = field(default_factory=dict)
    lines: list[str] = field(default_factory=list)
    input_digest: str | None = None
    exit_code: int = EXIT_OK


Handler = Callable[[argparse.Namespace, RuntimeEnv], Outcome]


def _file_digest(path: str | Path) -> str | None:
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    except OSError:
        return None


def _parameter_digest(params: dict[str, Any]) -> str:
    return hashlib.sha256(json.dumps(params, sort_keys=True).encode()).hexdigest()


def _log_base(args: argparse.Namespace, config: ModelConfig) -> float:
    if args.log_base is None:
        return config.base
    return math.e if args.log_base == "e" else 2.0


def _estimate_lines(estimate: EntropyEstimate) -> list[str]:
    bound = f"{estimate.err_bound:.4e}" if estimate.certified else "uncertified"
    return [
        f"H_N:        {estimate.value:.15f}",
        f"err_bound:  {bound}",
        f"N:          {estimate.N}",
        f"gamma:      {estimate.gamma:.10f}",
        f"B:          {estimate.B:.6g}",
        f"phi_hat:    {np.array2string(estimate.phi_hat, precision=10)}",
        f"residual:   {estimate.residual:.3e}",
    ]


def cmd_validate(args: argparse.Namespace, env: RuntimeEnv) -> Outcome:
    """Report every violated validity condition of a model file."""
    config = load_model_config(args.model)
    violations = validate_parameters(config.transition, config.epsilon)
    outcome = Outcome(
        results={
            "valid": not violations,
            "violations": [v.model_dump() for v in violations],
        },
        input_digest=_file_digest(args.model),
    )
    if violations:
        outcome.exit_code = EXIT_DOMAIN
        outcome.lines = [f"❌ {v.condition}: {v.message}" for v in violations]
        return outcome

    model = config.to_model()
    gamma = gamma_sup(model, build_orbit(model, 0))
    outcome.diagnostics = {"gamma": gamma, "q": config.q}
    outcome.lines = [f"✅ Model is valid (q={config.q}, gamma={gamma:.10f})"]
    return outcome


def cmd_entropy(args: argparse.Namespace, env: RuntimeEnv) -> Outcome:
    """Entropy rate at a fixed depth, a target accuracy, or a list of depths."""
    config = load_model_config(args.model)
    base = _log_base(args, config)
    model = config.to_model()
    digest = _file_digest(args.model)

    if args.sweep:
        table = convergence_table(model, args.sweep, base=base)
        lines = [f"{'N':>6}  {'H_N':>19}  {'err_bound':>11}"]
        lines += [f"{e.N:>6}  {e.value:.15f}  {e.err_bound:11.4e}" for e in table]
        return Outcome(
            results={"table": [e.to_dict() for e in table]},
            diagnostics={"gamma": table[-1].gamma if table else None},
            lines=lines,
            input_digest=digest,
        )

    if args.accuracy is not None:
        N = terms_for_accuracy(model, args.accuracy, base=base)
    else:
        N = DEFAULT_ENTROPY_TERMS if args.terms is None else args.terms
        if N < 0:
            raise ParameterOutOfRange(f"--terms must be >= 0, got {N}")
    estimate = entropy_rate(model, N, base=base, summand=args.summand)
    return Outcome(
        results={"value": estimate.value, "err_bound": estimate.err_bound},
        diagnostics=estimate.to_dict(),
        lines=_estimate_lines(estimate),
        input_digest=digest,
    )


def cmd_oracle(args: argparse.Namespace, env: RuntimeEnv) -> Outcome:
    """Brute-force S_1..S_n and G_2..G_n."""
    config = load_model_config(args.model)
    model = config.to_model(check_invertible=False)
    result = joint_entropies(
        model,
        args.length,
        initial=args.initial,
        base=_log_base(args, config),
        max_length=env.oracle_max_length,
        max_leaves=env.oracle_max_leaves,
        workers=env.worker_count,
    )
    lines = [f"{'n':>3}  {'S_n':>19}  {'G_n':>19}  {'seconds':>9}"]
    for n, (s, seconds) in enumerate(zip(result.s, result.elapsed, strict=True), 1):
        g = f"{result.g[n - 2]:.15f}" if n >= 2 else ""
        lines.append(f"{n:>3}  {s:19.15f}  {g:>19}  {seconds:9.4f}")
    return Outcome(
        results=result.to_dict(),
        lines=lines,
        input_digest=_file_digest(args.model),
    )


def cmd_generate(args: argparse.Namespace, env: RuntimeEnv) -> Outcome:
    """Sample an observation sequence and write it to a file."""
    config = load_model_config(args.model)
    model = config.to_model(check_invertible=False)
    sequence = sample_sequence(model, args.length, args.seed, initial=args.initial)
    write_sequence(args.out, sequence, with_states=args.with_states)
    counts = np.bincount(sequence.symbols, minlength=model.q)
    return Outcome(
        results={"out": str(args.out), "length": len(sequence), "seed": args.seed},
        diagnostics={"symbol_counts": counts.tolist()},
        lines=[f"✅ Wrote {len(sequence)} symbols to {args.out}"],
        input_digest=_file_digest(args.model),
    )


def cmd_estimate(args: argparse.Namespace, env: RuntimeEnv) -> Outcome:
    """Fit a model to a sequence file and report the entropy of the fit."""
    if args.q < 2:
        raise ParameterOutOfRange(f"--q must be >= 2, got {args.q}")
    sequence = load_sequence(args.sequence, args.q)
    theta0 = EmParameters.initial_guess(sequence, seed=args.seed_init)
    base = math.e if args.log_base == "e" else 2.0
    result = estimate_entropy_from_sequence(
        sequence,
        theta0,
        max_iters=args.max_iters,
        tol=args.tol,
        N=args.terms,
        base=base,
        callbacks=LoggingCallbacks(),
    )
    estimate = result.entropy
    lines = _estimate_lines(estimate) + [
        f"EM:         {result.em.iterations} iterations, "
        f"{'converged' if result.em.converged else 'not converged'}",
        f"epsilon:    {np.array2string(result.em.epsilon_hat, precision=6)}",
    ]
    return Outcome(
        results={
            "value": estimate.value,
            "certified": estimate.certified,
            "em": result.em.to_dict(),
        },
        diagnostics=estimate.to_dict(),
        lines=lines,
        input_digest=_file_digest(args.sequence),
    )


def cmd_gilbert(args: argparse.Namespace, env: RuntimeEnv) -> Outcome:
    """Capacity bounds of the Gilbert channel for one or more h values."""
    bounds = capacity_sweep(args.P, args.Q, args.h, N=args.terms, mapping=args.mapping)
    lines = [
        f"{'h':>6}  {'lower':>19}  {'upper':>19}  "
        f"{'corrected lower':>19}  {'corrected upper':>19}"
    ]
    lines += [
        f"{b.h:>6g}  {b.lower:.15f}  {b.upper:.15f}  "
        f"{b.corrected_lower:19.15f}  {b.corrected_upper:19.15f}"
        for b in bounds
    ]
    params = {"P": args.P, "Q": args.Q, "h": args.h, "N": args.terms}
    return Outcome(
        results={"bounds": [b.to_dict() for b in bounds]},
        diagnostics={"mapping": args.mapping, "N": args.terms},
        lines=lines,
        input_digest=_parameter_digest(params),
    )


def _depth_list(text: str) -> list[int]:
    try:
        depths = [int(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"invalid depth list '{text}'") from e
    if not depths or min(depths) < 0:
        raise argparse.ArgumentTypeError(f"invalid depth list '{text}'")
    return depths


def build_parser() -> argparse.ArgumentParser:
    """Build the argument parser with all subcommands."""
    parser = argparse.ArgumentParser(
        prog="entrate",
        description="Entropy rate of hidden Markov processes with unambiguous symbols",
    )
    parser.add_argument(
        "--json", action="store_true", help="emit a JSON run report on stdout"
    )
    parser.add_argument(
        "--show-config", action="store_true", help="print runtime configuration"
    )

    # Same flags after the subcommand; SUPPRESS keeps the top-level value
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", default=argparse.SUPPRESS)
    common.add_argument(
        "--show-config", action="store_true", default=argparse.SUPPRESS
    )
    log_base = argparse.ArgumentParser(add_help=False)
    log_base.add_argument(
        "--log-base", choices=["2", "e"], default=None, help="entropy logarithm base"
    )

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common], help="check model validity")
    p.add_argument("model", type=Path, help="model configuration JSON")
    p.set_defaults(handler=cmd_validate)

    p = sub.add_parser("entropy", parents=[common, log_base], help="entropy rate")
    p.add_argument("model", type=Path, help="model configuration JSON")
    depth = p.add_mutually_exclusive_group()
    depth.add_argument("--terms", type=int, help="truncation depth N")
    depth.add_argument("--accuracy", type=float, help="target error bound")
    depth.add_argument("--sweep", type=_depth_list, help="comma-separated depths")
    p.add_argument(
        "--summand",
        choices=["predictive", "belief"],
        default="predictive",
        help="per-belief entropy term",
    )
    p.set_defaults(handler=cmd_entropy)

    p = sub.add_parser("oracle", parents=[common, log_base], help="brute force G_n")
    p.add_argument("model", type=Path, help="model configuration JSON")
    p.add_argument("--length", type=int, required=True, help="longest word length")
    p.add_argument(
        "--initial", choices=["stationary", "uniform"], default="stationary"
    )
    p.set_defaults(handler=cmd_oracle)

    p = sub.add_parser("generate", parents=[common], help="sample a sequence")
    p.add_argument("model", type=Path, help="model configuration JSON")
    p.add_argument("--length", type=int, required=True, help="number of symbols")
    p.add_argument("--seed", type=int, required=True, help="random seed")
    p.add_argument("--out", type=Path, required=True, help="output sequence file")
    p.add_argument("--with-states", action="store_true", help="also write states")
    p.add_argument(
        "--initial", choices=["stationary", "uniform"], default="stationary"
    )
    p.set_defaults(handler=cmd_generate)

    p = sub.add_parser("estimate", parents=[common, log_base], help="fit and entropy")
    p.add_argument("sequence", type=Path, help="sequence file")
    p.add_argument("--q", type=int, required=True, help="alphabet size")
    p.add_argument("--max-iters", type=int, default=500, help="EM iteration cap")
    p.add_argument("--tol", type=float, default=1e-6, help="EM parameter tolerance")
    p.add_argument("--seed-init", type=int, default=None, help="initial guess seed")
    p.add_argument("--terms", type=int, default=100, help="truncation depth N")
    p.set_defaults(handler=cmd_estimate)

    p = sub.add_parser("gilbert", parents=[common], help="Gilbert channel capacity")
    p.add_argument("--P", type=float, required=True, help="good-to-bad probability")
    p.add_argument("--Q", type=float, required=True, help="bad-to-good probability")
    p.add_argument(
        "--h", type=float, nargs="+", required=True, help="bad-state noise values"
    )
    p.add_argument("--terms", type=int, default=DEFAULT_TERMS, help="depth N")
    p.add_argument("--mapping", choices=["direct", "flip"], default="direct")
    p.set_defaults(handler=cmd_gilbert)

    return parser


def run(argv: Sequence[str] | None = None) -> int:
    """Run the CLI and return the process exit code.

    Args:
        argv: Arguments without the program name; ``sys.argv[1:]`` when None.

    Returns:
        0 on success, otherwise the exit code of the failure family.
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    env = initialize_environment(RuntimeEnv, print_config=args.show_config)
    setup_logging(env.log_level)
    provider = setup_tracing(env.trace_exporter, env.otlp_endpoint)

    handler: Handler = args.handler
    started = time.perf_counter()
    try:
        with tracer.start_as_current_span(f"cli.{args.command}"):
            outcome = handler(args, env)
    except EntrateError as e:
        logger.debug(f"{args.command} failed", exc_info=True)
        print(f"❌ {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    finally:
        if provider is not None:
            provider.shutdown()
    elapsed = time.perf_counter() - started

    if args.json:
        report = RunReport(
            command=["entrate", *argv],
            input_digest=outcome.input_digest,
            results=outcome.results,
            diagnostics=outcome.diagnostics,
            elapsed_seconds=elapsed,
        )
        print(report.model_dump_json(indent=2))
    else:
        print("\n".join(outcome.lines))
        print(f"\n⏱️ {elapsed:.4f}s")
    return outcome.exit_code


def main() -> None:
    """Console script entry point."""
    sys.exit(run())
