"""Command-line front end: run scenarios, sweep parameters, inspect chains.

Exit codes: 0 on success, 1 when a chain or audit check fails, 2 for usage
errors, 3 when a round aborts (the diagnostic names the stage) and 4 for any
other simulator error.
"""

import argparse
import asyncio
import sys
from collections.abc import Sequence
from pathlib import Path

import structlog
import uvicorn

from pofl_sim import __version__
from pofl_sim.chain.state import ChainState, validate_chain
from pofl_sim.config import Settings, get_settings
from pofl_sim.errors import PoflError, StageError, UsageError
from pofl_sim.logging import setup_logging
from pofl_sim.serialization import canonical_json
from pofl_sim.simulation.orchestrator import SimulationState, run_round
from pofl_sim.simulation.outputs import write_run
from pofl_sim.simulation.scenario import (
    ScenarioConfig,
    default_scenario,
    load_scenario,
)
from pofl_sim.simulation.sweeps import AXES, run_sweep
from pofl_sim.store import ReportStore
from pofl_sim.trading.oracle import GridSpec, audit_draws

logger = structlog.stdlib.get_logger()

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_STAGE = 3
EXIT_ERROR = 4


def _write(text: str) -> None:
    sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _diagnose(**fields: object) -> None:
    sys.stderr.write(canonical_json(fields).decode())
    sys.stderr.write("\n")


def _scenario(path: Path | None, seed: int | None = None) -> ScenarioConfig:
    config = load_scenario(path) if path is not None else default_scenario()
    if seed is None:
        return config
    if seed < 0:
        raise UsageError(f"seed must be non-negative, got {seed}")
    return config.model_copy(update={"seed": seed})


def _parse_values(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise UsageError(f"--values expects comma-separated numbers: {exc}") from exc


def _store(settings: Settings, db: Path | None) -> ReportStore:
    return ReportStore(db_path=db if db is not None else settings.db_file)


async def _persist(store: ReportStore, state: SimulationState) -> None:
    await store.init_db()
    await store.replace_all(state.reports, state.chain)


def cmd_run(args: argparse.Namespace, settings: Settings) -> int:
    config = _scenario(args.config, args.seed)
    state = SimulationState(config)
    code = EXIT_OK
    try:
        while state.pending and (args.rounds is None or state.rounds < args.rounds):
            run_round(config, state, settings)
    except StageError as exc:
        _diagnose(
            error=type(exc.cause).__name__,
            stage=exc.stage,
            round=state.rounds,
            message=str(exc.cause),
        )
        code = EXIT_STAGE
    write_run(state, args.out)
    if not args.no_store:
        asyncio.run(_persist(_store(settings, args.db), state))
    _write(f"rounds={state.rounds} height={state.chain.height} out={args.out}")
    return code


def cmd_sweep(args: argparse.Namespace, settings: Settings) -> int:
    config = _scenario(args.config)
    table = run_sweep(config, args.axis, _parse_values(args.values), settings=settings)
    text = table.to_csv()
    if args.out is None:
        _write(text)
    else:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(text, encoding="utf-8")
    return EXIT_OK


def cmd_verify_chain(args: argparse.Namespace, settings: Settings) -> int:
    try:
        data = args.file.read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read {args.file}: {exc.strerror}") from exc
    if not validate_chain(data, check_payloads=not args.headers_only):
        _write(f"invalid chain: {args.file}")
        return EXIT_CHECK_FAILED
    chain = ChainState.loads(data)
    if args.json:
        _write(chain.to_json().decode())
        return EXIT_OK
    tip = chain.blocks[-1].digest().hex() if len(chain) else "-"
    _write(f"valid chain: height={chain.height} blocks={len(chain)} tip={tip}")
    return EXIT_OK


def cmd_report(args: argparse.Namespace, settings: Settings) -> int:
    store = _store(settings, args.db)

    async def _load() -> bool:
        await store.init_db()
        return await store.load_from_db()

    if not asyncio.run(_load()):
        raise UsageError("no stored reports; run a scenario first")
    report = store.get_report(args.round)
    if report is None:
        raise UsageError(f"no report for round {args.round}")
    _write(report.to_json().decode())
    return EXIT_OK


def cmd_audit(args: argparse.Namespace, settings: Settings) -> int:
    grid = GridSpec(step=settings.grid_step, span=settings.grid_span)
    audit = audit_draws(args.draws, args.seed, grid, fake_steps=args.fake_steps)
    _write(
        canonical_json(
            {
                "draws": audit.draws,
                "bid_mismatches": audit.bid_mismatches,
                "markup_mismatches": audit.markup_mismatches,
                "ic_violations": audit.ic_violations,
                "passed": audit.passed,
            }
        ).decode()
    )
    return EXIT_OK if audit.passed else EXIT_CHECK_FAILED


def cmd_serve(args: argparse.Namespace, settings: Settings) -> int:
    uvicorn.run(
        "pofl_sim.app:create_app",
        factory=True,
        host=args.host or settings.app_host,
        port=args.port or settings.app_port,
        loop="uvloop",
        log_level=settings.log_level.lower(),
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pofl-sim",
        description="Simulate Proof-of-Federated-Learning mining rounds.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="run every task of a scenario")
    run.add_argument("--config", type=Path, help="scenario TOML file")
    run.add_argument("--seed", type=int, help="override the scenario seed")
    run.add_argument("--out", type=Path, required=True, help="output directory")
    run.add_argument("--rounds", type=int, help="stop after this many rounds")
    run.add_argument("--db", type=Path, help="report database")
    run.add_argument(
        "--no-store", action="store_true", help="do not persist the reports"
    )
    run.set_defaults(handler=cmd_run)

    sweep = commands.add_parser("sweep", help="vary one parameter")
    sweep.add_argument("--axis", required=True, choices=AXES)
    sweep.add_argument("--values", required=True, help="comma-separated values")
    sweep.add_argument("--config", type=Path, help="scenario TOML file")
    sweep.add_argument("--out", type=Path, help="CSV file; stdout by default")
    sweep.set_defaults(handler=cmd_sweep)

    verify = commands.add_parser("verify-chain", help="validate a chain dump")
    verify.add_argument("--file", type=Path, required=True)
    verify.add_argument(
        "--headers-only",
        action="store_true",
        help="skip parsing the garbled circuits in V_m",
    )
    verify.add_argument(
        "--json", action="store_true", help="print the block headers as JSON"
    )
    verify.set_defaults(handler=cmd_verify_chain)

    report = commands.add_parser("report", help="print a stored round report")
    report.add_argument("--round", type=int, required=True)
    report.add_argument("--db", type=Path, help="report database")
    report.set_defaults(handler=cmd_report)

    audit = commands.add_parser(
        "audit", help="check the trading game's closed forms against brute force"
    )
    audit.add_argument("--draws", type=int, default=100)
    audit.add_argument("--seed", type=int, default=0)
    audit.add_argument("--fake-steps", type=int, default=21)
    audit.set_defaults(handler=cmd_audit)

    serve = commands.add_parser("serve", help="start the inspection service")
    serve.add_argument("--host")
    serve.add_argument("--port", type=int)
    serve.set_defaults(handler=cmd_serve)
    return parser


def main(argv: Sequence[str] | None = None, settings: Settings | None = None) -> int:
    """Parse arguments, run one command and return its exit code."""
    args = build_parser().parse_args(argv)
    settings = settings or get_settings()
    setup_logging(settings.app_env, settings.log_level)
    try:
        code: int = args.handler(args, settings)
    except UsageError as exc:
        _diagnose(error="UsageError", message=str(exc))
        return EXIT_USAGE
    except StageError as exc:
        _diagnose(error=type(exc.cause).__name__, stage=exc.stage, message=str(exc))
        return EXIT_STAGE
    except PoflError as exc:
        logger.error("command_failed", command=args.command, error=str(exc))
        _diagnose(error=type(exc).__name__, message=str(exc))
        return EXIT_ERROR
    return code
