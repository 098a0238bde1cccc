"""End-to-end analysis: ingest, enrich, features, threat lookup, models, consensus, report."""
from __future__ import annotations

import enum
import json
import logging
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence, TextIO, Union

from .consensus import ConsensusConfig, run_consensus, summarize
from .errors import ConsensusAbort
from .features import (
    assemble_feature_vector,
    extract_behavior,
    extract_gas_context,
    extract_ui_features,
    load_slot_hints,
)
from .ingest import CallSpec, TraceSource, enrich_code_snippets, fetch_trace, load_trace_file
from .ingest.snippets import Decompiler, SourceClient
from .ingest.sources import SourceKind
from .llm import ModelBackend, ModelOutput, ask, build_prompt, build_reflection_prompt, build_summary_prompt
from .llm.backends import DEFAULT_TIMEOUT
from .llm.prompt import DEFAULT_SECTION_BUDGET
from .model import RiskLabel
from .reporting import AnalysisReport, ReportMeta, build_report, dumps_report, render_summary
from .threatdb import ThreatDB, load_db, query_all

log = logging.getLogger(__name__)

EXIT_CODES = {RiskLabel.SAFE: 0, RiskLabel.SUSPICIOUS: 1, RiskLabel.MALICIOUS: 2}

# operational failures, one code per stage
STAGE_EXIT = {
    "config": 10,
    "ingest": 11,
    "enrich": 12,
    "features": 13,
    "database": 14,
    "models": 15,
    "consensus": 16,
    "report": 17,
}


class RunMode(str, enum.Enum):
    HISTORICAL = "HISTORICAL"
    SIMULATE = "SIMULATE"
    BATCH_EVAL = "BATCH_EVAL"


class PipelineError(Exception):
    def __init__(self, stage: str, cause: BaseException | str):
        self.stage = stage
        self.cause = cause
        super().__init__(f"{stage}: {cause}")

    @property
    def exit_code(self) -> int:
        return STAGE_EXIT[self.stage]


Target = Union[str, CallSpec, None]


@dataclass
class RunConfig:
    mode: RunMode
    trace_source: TraceSource
    backends: Sequence[ModelBackend]
    consensus: ConsensusConfig = field(default_factory=ConsensusConfig)
    db_paths: Sequence[Path] = ()
    weight_config: Optional[Mapping] = None
    slot_hints_path: Optional[Path] = None
    history: Optional[Sequence] = None
    output_dir: Optional[Path] = Path("out")
    trace_format: str = "normalized"
    section_budget: int = DEFAULT_SECTION_BUDGET
    timeout: float = DEFAULT_TIMEOUT
    explorer: Optional[SourceClient] = None
    decompiler: Optional[Decompiler] = None
    chain_id: int = 1
    clock: Optional[Callable[[], datetime]] = None

    def __post_init__(self):
        self.mode = RunMode(self.mode)
        if len(self.backends) < 2:
            raise ValueError("at least two model backends are required")
        self.consensus.check_models([b.id for b in self.backends])


def check_target(cfg: RunConfig, target: Target) -> None:
    if cfg.mode is RunMode.HISTORICAL and cfg.trace_source.is_live and not isinstance(target, str):
        raise ValueError("historical mode needs a transaction hash")
    if cfg.mode is RunMode.SIMULATE and cfg.trace_source.is_live and not isinstance(target, CallSpec):
        raise ValueError("simulation mode needs a contract address, function signature and arguments")


def tx_reference_for(cfg: RunConfig, target: Target) -> str:
    if isinstance(target, str):
        return target.lower()
    if isinstance(target, CallSpec):
        return f"sim-{target.to}-{target.calldata()[:4].hex()}"
    return Path(cfg.trace_source.locator).name.split(".")[0]


def report_filename(tx_reference: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", tx_reference) + ".report.json"


@dataclass(frozen=True)
class Analysis:
    report: AnalysisReport
    report_json: str
    summary_text: str
    report_path: Optional[Path]

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.report.decided_label]


class _Stage:
    """Re-raises anything escaping the block as a PipelineError for ``name``."""

    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is None or isinstance(exc, PipelineError):
            return False
        if not isinstance(exc, Exception):
            return False
        raise PipelineError(self.name, exc) from exc


def load_history(path: Path) -> list:
    doc = json.loads(Path(path).read_text())
    if not isinstance(doc, list):
        raise ValueError(f"{path}: expected a JSON list of [nonce, timestamp] pairs or timestamps")
    return [tuple(item) if isinstance(item, list) else item for item in doc]


def _initial_outputs(backends: Sequence[ModelBackend], prompt, timeout: float) -> tuple[list[ModelOutput], list[str]]:
    def one(b):
        try:
            return ask(b, prompt, timeout)
        except Exception as exc:  # reported below
            return exc

    with ThreadPoolExecutor(max_workers=len(backends)) as pool:
        results = list(pool.map(one, backends))
    outputs, notes = [], []
    for b, r in zip(backends, results):
        if isinstance(r, Exception):
            notes.append(f"initial round: model {b.id} dropped ({r})")
            log.warning(notes[-1])
        else:
            outputs.append(r)
    return outputs, notes


def analyze(cfg: RunConfig, target: Target = None, db: Optional[ThreatDB] = None) -> Analysis:
    """Run the full pipeline; raises :class:`PipelineError` naming the failing stage."""
    with _Stage("config"):
        check_target(cfg, target)
        tx_reference = tx_reference_for(cfg, target)

    with _Stage("ingest"):
        src = cfg.trace_source
        if src.kind is SourceKind.FIXTURE_FILE:
            tx, trace = load_trace_file(src.locator, cfg.trace_format)
        else:
            tx, trace = fetch_trace(src, target, chain_id=cfg.chain_id)

    with _Stage("enrich"):
        trace = enrich_code_snippets(trace, cfg.explorer, cfg.decompiler)

    with _Stage("database"):
        if db is None:
            db = load_db(cfg.db_paths)

    with _Stage("features"):
        hints = load_slot_hints(cfg.slot_hints_path) if cfg.slot_hints_path else None
        behavior = extract_behavior(tx, trace, hints)
        context = extract_gas_context(tx, trace, cfg.history)
        ui = extract_ui_features(tx)

    with _Stage("database"):
        hits = query_all(db, tx, trace, ui)

    with _Stage("features"):
        fv = assemble_feature_vector(behavior, context, ui, hits, cfg.weight_config)

    with _Stage("models"):
        base = build_prompt(fv, budget=cfg.section_budget)
        outputs, notes = _initial_outputs(cfg.backends, base, cfg.timeout)
        if len(outputs) < 2:
            raise ConsensusAbort(f"only {len(outputs)} model(s) answered: " + "; ".join(notes))

    by_id = {b.id: b for b in cfg.backends}
    primary = cfg.consensus.primary_model or cfg.backends[0].id

    def reflector(own: ModelOutput, counters: Sequence[ModelOutput], round_no: int) -> ModelOutput:
        prompt = build_reflection_prompt(own, counters, base, round=round_no)
        return ask(by_id[own.model_id], prompt, cfg.timeout)

    def summarizer(agreed: Sequence[ModelOutput]) -> ModelOutput:
        def ask_primary(outs):
            return ask(by_id[primary], build_summary_prompt(outs, base), cfg.timeout)

        return summarize(agreed, primary, ask_primary)

    with _Stage("consensus"):
        consensus_cfg = cfg.consensus
        if consensus_cfg.primary_model is None:
            consensus_cfg = ConsensusConfig(consensus_cfg.n, consensus_cfg.max_rounds, primary, consensus_cfg.tie_break)
        result = run_consensus(outputs, reflector, summarizer, consensus_cfg)
        if notes:
            result = replace(result, notes=tuple(notes) + result.notes)

    with _Stage("report"):
        stamp = cfg.clock() if cfg.clock else None
        report = build_report(result, fv, ReportMeta(tx_reference, timestamp=stamp))
        text = dumps_report(report)
        summary = render_summary(report)
        path = None
        if cfg.output_dir is not None:
            out = Path(cfg.output_dir)
            out.mkdir(parents=True, exist_ok=True)
            path = out / report_filename(tx_reference)
            path.write_text(text)
    return Analysis(report, text, summary, path)


def run_analysis(
    cfg: RunConfig,
    target: Target = None,
    stdout: Optional[TextIO] = None,
    stderr: Optional[TextIO] = None,
) -> tuple[Optional[AnalysisReport], int]:
    """Analyze and print; returns the report (None on failure) and the process exit code."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        analysis = analyze(cfg, target)
    except PipelineError as err:
        print(f"txlens: error in stage {err.stage}: {err.cause}", file=stderr)
        return None, err.exit_code
    stdout.write(analysis.summary_text)
    if analysis.report_path is not None:
        print(f"Report written to {analysis.report_path}", file=stdout)
    return analysis.report, analysis.exit_code
