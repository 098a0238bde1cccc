"""``txlens`` command line.

Exit status: 0 SAFE, 1 SUSPICIOUS, 2 MALICIOUS; 10 and above are
operational failures (10 is bad configuration or usage, higher codes name
the pipeline stage that failed).
"""
from __future__ import annotations

import json
import logging
import os
import sys
from pathlib import Path
from typing import Mapping, Optional, Sequence

import click
from dotenv import load_dotenv

from . import __version__
from .consensus import ConsensusConfig, TieBreak
from .errors import TxLensError
from .evm import ZERO_ADDRESS
from .evaluation import EvalCase, load_manifest, run_eval
from .features import load_weight_config
from .ingest import CallSpec, CommandDecompiler, EtherscanClient, SourceKind, TraceSource
from .llm import backends_from_env, parse_backend
from .llm.backends import DEFAULT_TIMEOUT, dedupe_ids
from .llm.prompt import DEFAULT_SECTION_BUDGET
from .pipeline import STAGE_EXIT, PipelineError, RunConfig, RunMode, analyze, load_history, run_analysis
from .threatdb import load_db

CONFIG_EXIT = STAGE_EXIT["config"]


class ConfigProblem(click.ClickException):
    exit_code = CONFIG_EXIT


def _env_int(env: Mapping[str, str], name: str, default: int) -> int:
    raw = env.get(name)
    if raw in (None, ""):
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigProblem(f"{name} must be an integer, got {raw!r}") from None


def _backends(descriptors: Sequence[str], env: Mapping[str, str]):
    try:
        if descriptors:
            return dedupe_ids([parse_backend(d, i, env) for i, d in enumerate(descriptors, start=1)])
        backends = backends_from_env(env)
    except TxLensError as exc:
        raise ConfigProblem(str(exc)) from None
    if not backends:
        raise ConfigProblem("no models configured; pass --models or set MODEL_1, MODEL_2, ...")
    return backends


def _consensus(backends, max_rounds: int, primary: Optional[str], tie_break: str) -> ConsensusConfig:
    try:
        cfg = ConsensusConfig(n=max(2, len(backends)), max_rounds=max_rounds, primary_model=primary,
                              tie_break=TieBreak(tie_break.upper()))
        cfg.check_models([b.id for b in backends])
    except ValueError as exc:
        raise ConfigProblem(str(exc)) from None
    return cfg


def _weights(path: Optional[str]):
    if path is None:
        return None
    try:
        return load_weight_config(path)
    except (OSError, TxLensError) as exc:
        raise ConfigProblem(f"weights: {exc}") from None


def _split_args(values: Sequence[str]) -> tuple[str, ...]:
    if len(values) == 1 and "," in values[0]:
        return tuple(v.strip() for v in values[0].split(","))
    return tuple(values)


def _live_source(mode: RunMode, env: Mapping[str, str]) -> TraceSource:
    try:
        if mode is RunMode.HISTORICAL:
            url = env.get("RPC_URL")
            if not url:
                raise ConfigProblem("historical mode needs --trace or RPC_URL (a node with debug_traceTransaction)")
            return TraceSource(SourceKind.CHAIN_EXPLORER, url)
        url = env.get("SIMULATOR_URL")
        if not url:
            raise ConfigProblem("simulation mode needs --trace or SIMULATOR_URL")
        key = env.get("SIMULATOR_API_KEY")
        if key:
            return TraceSource(SourceKind.REMOTE_SIMULATOR, url, key)
        return TraceSource(SourceKind.LOCAL_SIMULATOR, url)
    except ValueError as exc:
        raise ConfigProblem(str(exc)) from None


common = [
    click.option("--db", "db_paths", multiple=True, type=click.Path(), help="Threat DB file or directory (repeatable)."),
    click.option("--weights", type=click.Path(), help="JSON weight config for the four evidence categories."),
    click.option("--hints", type=click.Path(), help="JSON storage-slot hints."),
    click.option("--models", multiple=True, help="Model descriptor remote:<name>@<url> or scripted:<path> (repeatable)."),
    click.option("--primary", help="Model id that writes the final summary."),
    click.option("--max-rounds", type=int, default=3, show_default=True, help="Maximum self-reflection rounds."),
    click.option("--tie-break", type=click.Choice(["higher_severity", "lowest_model_index"], case_sensitive=False),
                 default="higher_severity", show_default=True),
    click.option("--out", type=click.Path(), help="Output directory (default $TXLENS_OUT_DIR or ./out)."),
    click.option("--budget", type=int, help="Per-section prompt character budget."),
    click.option("--timeout", type=float, default=DEFAULT_TIMEOUT, show_default=True, help="Per-model timeout (s)."),
    click.option("--env-file", type=click.Path(), help="Environment file loaded before anything else (default ./.env)."),
]


def with_common(fn):
    for opt in reversed(common):
        fn = opt(fn)
    return fn


@click.group()
@click.version_option(__version__, prog_name="txlens")
@click.option("-v", "--verbose", count=True, help="More logging (repeatable).")
@click.option("--env-file", type=click.Path(), help="Environment file (read by main() before parsing).")
def cli(verbose: int, env_file: Optional[str]):
    """Explain and rate an EVM transaction before it is signed."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


@cli.command("analyze")
@click.option("--mode", type=click.Choice(["historical", "simulate"], case_sensitive=False), required=True)
@click.option("--tx", "tx_hash", help="Transaction hash (historical mode).")
@click.option("--to", "to_addr", help="Contract address (simulation mode).")
@click.option("--sig", help='Function signature, e.g. "approve(address,uint256)".')
@click.option("--args", "call_args", multiple=True, help="Call argument (repeatable, or one comma-separated value).")
@click.option("--from", "sender", help="Sender address for simulation.")
@click.option("--value", default="0", show_default=True, help="Wei sent with the simulated call.")
@click.option("--trace", "trace_path", type=click.Path(), help="Recorded trace file instead of a live source.")
@click.option("--trace-format", type=click.Choice(["normalized", "geth", "tenderly"]), default="normalized",
              show_default=True)
@click.option("--history", type=click.Path(), help="JSON list of the sender's recent [nonce, unix_ts] pairs.")
@click.option("--chain-id", type=int, default=1, show_default=True)
@with_common
def analyze_cmd(mode, tx_hash, to_addr, sig, call_args, sender, value, trace_path, trace_format, history, chain_id,
                db_paths, weights, hints, models, primary, max_rounds, tie_break, out, budget, timeout, env_file):
    """Analyze one transaction (historical) or one contract call (simulate)."""
    env = os.environ
    run_mode = RunMode(mode.upper())
    target = None
    if run_mode is RunMode.HISTORICAL:
        if tx_hash is None and trace_path is None:
            raise ConfigProblem("historical mode needs --tx (or --trace for a recorded trace)")
        target = tx_hash
    else:
        if to_addr and sig:
            try:
                target = CallSpec(to_addr, sig, _split_args(call_args), sender=sender or ZERO_ADDRESS,
                                  value=int(value, 0))
                target.calldata()
            except (ValueError, TypeError) as exc:
                raise ConfigProblem(f"bad call description: {exc}") from None
        elif trace_path is None:
            raise ConfigProblem("simulation mode needs --to, --sig and --args (or --trace)")

    source = TraceSource(SourceKind.FIXTURE_FILE, trace_path) if trace_path else _live_source(run_mode, env)
    backends = _backends(models, env)
    explorer = None
    if env.get("EXPLORER_API_URL"):
        explorer = EtherscanClient(env["EXPLORER_API_URL"], env.get("EXPLORER_API_KEY"), chain_id)
    decompiler = CommandDecompiler(env["TXLENS_DECOMPILER"]) if env.get("TXLENS_DECOMPILER") else None
    try:
        history_items = load_history(history) if history else None
    except (OSError, ValueError) as exc:
        raise ConfigProblem(f"history: {exc}") from None

    try:
        cfg = RunConfig(
            mode=run_mode,
            trace_source=source,
            backends=backends,
            consensus=_consensus(backends, max_rounds, primary, tie_break),
            db_paths=[Path(p) for p in db_paths],
            weight_config=_weights(weights),
            slot_hints_path=Path(hints) if hints else None,
            history=history_items,
            output_dir=Path(out or env.get("TXLENS_OUT_DIR") or "out"),
            trace_format=trace_format,
            section_budget=budget or _env_int(env, "PROMPT_SECTION_BUDGET", DEFAULT_SECTION_BUDGET),
            timeout=timeout,
            explorer=explorer,
            decompiler=decompiler,
            chain_id=chain_id,
        )
    except ValueError as exc:
        raise ConfigProblem(str(exc)) from None
    _, code = run_analysis(cfg, target)
    sys.exit(code)


@cli.command("eval")
@click.option("--cases", required=True, type=click.Path(), help="Case manifest JSON.")
@click.option("--runs", type=click.IntRange(min=1), default=3, show_default=True)
@click.option("--workers", type=int, help="Parallel cases (default $TXLENS_WORKERS or 1).")
@with_common
def eval_cmd(cases, runs, workers, db_paths, weights, hints, models, primary, max_rounds, tie_break, out, budget,
             timeout, env_file):
    """Precision, recall and F1 over a labelled fixture corpus."""
    env = os.environ
    try:
        case_list = load_manifest(cases)
        db = load_db([Path(p) for p in db_paths])
    except TxLensError as exc:
        raise ConfigProblem(str(exc)) from None
    backends = _backends(models, env)
    consensus = _consensus(backends, max_rounds, primary, tie_break)
    weight_config = _weights(weights)
    section_budget = budget or _env_int(env, "PROMPT_SECTION_BUDGET", DEFAULT_SECTION_BUDGET)

    def analyze_case(case: EvalCase):
        cfg = RunConfig(
            mode=RunMode.BATCH_EVAL,
            trace_source=TraceSource(SourceKind.FIXTURE_FILE, str(case.fixture)),
            backends=backends,
            consensus=consensus,
            weight_config=weight_config,
            slot_hints_path=Path(hints) if hints else None,
            output_dir=None,
            section_budget=section_budget,
            timeout=timeout,
        )
        return analyze(cfg, db=db).report.decided_label

    metrics = run_eval(case_list, runs, analyze_case, workers or _env_int(env, "TXLENS_WORKERS", 1))
    click.echo(f"{len(case_list)} cases x {runs} run(s)")
    click.echo(metrics.format_table(), nl=False)
    out_dir = Path(out or env.get("TXLENS_OUT_DIR") or "out")
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "eval-metrics.json"
    path.write_text(json.dumps(metrics.to_dict(), indent=2) + "\n")
    click.echo(f"Metrics written to {path}")


def _env_file_arg(argv: Sequence[str]) -> Optional[str]:
    for i, arg in enumerate(argv):
        if arg == "--env-file" and i + 1 < len(argv):
            return argv[i + 1]
        if arg.startswith("--env-file="):
            return arg.split("=", 1)[1]
    return None


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point. The env file is read before flags are parsed; flags still win."""
    argv = list(sys.argv[1:] if argv is None else argv)
    env_file = _env_file_arg(argv)
    if env_file is not None:
        if not Path(env_file).is_file():
            click.echo(f"txlens: env file {env_file} not found", err=True)
            return CONFIG_EXIT
        load_dotenv(env_file, override=False)
    elif Path(".env").is_file():
        load_dotenv(".env", override=False)
    try:
        cli.main(args=argv, prog_name="txlens", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else CONFIG_EXIT
    except click.ClickException as exc:
        exc.show()
        return CONFIG_EXIT
    except click.Abort:
        return CONFIG_EXIT
    except PipelineError as exc:
        click.echo(f"txlens: error in stage {exc.stage}: {exc.cause}", err=True)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
