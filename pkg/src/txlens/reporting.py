"""User-facing summary text and the structured JSON audit report."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from fractions import Fraction
from functools import lru_cache
from importlib import resources
from typing import Mapping, Optional

import jsonschema

from . import __version__
from .consensus import ConsensusMode, ConsensusResult
from .features.vector import DIMENSIONS, FeatureVector
from .model import RiskLabel

REPORT_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ComponentScore:
    score: float
    weight: float
    reasoning: str


@dataclass(frozen=True)
class ModelVerdict:
    id: str
    risk: RiskLabel
    confidence: float


@dataclass(frozen=True)
class ConsensusMeta:
    mode: ConsensusMode
    rounds_used: int
    primary_model: str
    models: tuple[ModelVerdict, ...]
    tally: Optional[Mapping[str, float]] = None


@dataclass(frozen=True)
class AnalysisReport:
    tx_reference: str
    decided_label: RiskLabel
    confidence: float
    summary: str
    justification: str
    recommendations: tuple[str, ...]
    component_scores: Mapping[str, ComponentScore]
    consensus_meta: ConsensusMeta
    tool_version: str
    timestamp: datetime
    notes: tuple[str, ...] = field(default=())

    def __post_init__(self):
        weights = sum(c.weight for c in self.component_scores.values())
        if set(self.component_scores) != set(DIMENSIONS) or abs(weights - 1) > 1e-9:
            raise ValueError("component weights must cover all four dimensions and sum to 1")


@dataclass(frozen=True)
class ReportMeta:
    tx_reference: str
    tool_version: str = __version__
    timestamp: Optional[datetime] = None


def _component_reasoning(fv: FeatureVector) -> dict[str, str]:
    b, c, ui = fv.behavior, fv.context, fv.ui
    kinds = sorted({s.kind.value for s in b.state_changes})
    behavior = (
        f"{len(b.call_chain)} call(s), {len(b.transfers)} asset transfer(s), "
        f"{len(b.approvals)} approval(s), {len(b.state_changes)} state change(s)"
        + (f" ({', '.join(kinds)})" if kinds else "")
        + f"; execution {b.status}"
    )
    fee = "n/a" if c.price_to_basefee_ratio is None else f"{float(c.price_to_basefee_ratio):.3f}"
    flags = [name for name, on in (
        ("excessive unused gas", c.excessive_unused_flag),
        ("fee acceleration", c.acceleration_flag),
        ("rapid sequence", c.rapid_sequence_flag),
    ) if on]
    context = (
        f"unused gas ratio {float(c.unused_gas_ratio):.3f}, fee/base-fee ratio {fee}; "
        + (f"flags: {', '.join(flags)}" if flags else "no flags")
    )
    if ui.present:
        ui_text = (
            f"domain {ui.main_domain or 'unknown'}; {len(ui.signing_initiation_sites)} signing site(s), "
            f"{len(ui.calldata_construction_sites)} calldata construction site(s)"
        )
    else:
        ui_text = "UI not available"
    if fv.database:
        counts: dict[str, int] = {}
        for hit in fv.database:
            counts[hit.kind.value] = counts.get(hit.kind.value, 0) + 1
        database = f"{len(fv.database)} hit(s): " + ", ".join(f"{k} x{n}" for k, n in counts.items())
    else:
        database = "no threat-intelligence hits"
    return {"behavior": behavior, "context": context, "ui": ui_text, "database": database}


def _merged_recommendations(result: ConsensusResult) -> tuple[str, ...]:
    recs = list(result.final.recommendations)
    if result.mode is ConsensusMode.WEIGHTED_VOTE:
        for o in result.final_round:
            if o.risk is result.decided_label:
                recs += [r for r in o.recommendations if r not in recs]
    return tuple(recs)


def build_report(result: ConsensusResult, fv: FeatureVector, meta: ReportMeta) -> AnalysisReport:
    final_round = result.final_round
    reasoning = _component_reasoning(fv)
    components = {}
    for d in DIMENSIONS:
        # decimal-exact mean, so 0.1 and 0.1 average to 0.1 rather than 0.10000000000000002
        mean = sum(Fraction(repr(float(o.importance[d]))) for o in final_round) / len(final_round)
        components[d] = ComponentScore(float(min(Fraction(1), max(Fraction(0), mean))), fv.weights[d], reasoning[d])
    tally = result.tally.as_floats() if result.tally is not None else None
    if tally is not None:
        tally = {k.upper(): v for k, v in tally.items()}
    return AnalysisReport(
        tx_reference=meta.tx_reference,
        decided_label=result.decided_label,
        confidence=result.final.confidence,
        summary=result.final.summary,
        justification=result.final.justification,
        recommendations=_merged_recommendations(result),
        component_scores=components,
        consensus_meta=ConsensusMeta(
            mode=result.mode,
            rounds_used=result.rounds_used,
            primary_model=result.primary_model,
            models=tuple(ModelVerdict(o.model_id, o.risk, o.confidence) for o in final_round),
            tally=tally,
        ),
        tool_version=meta.tool_version,
        timestamp=meta.timestamp or datetime.now(timezone.utc),
        notes=tuple(result.notes),
    )


def report_to_dict(report: AnalysisReport) -> dict:
    meta = report.consensus_meta
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "tx_reference": report.tx_reference,
        "risk": report.decided_label.name,
        "confidence": report.confidence,
        "summary": report.summary,
        "justification": report.justification,
        "recommendations": list(report.recommendations),
        "components": {
            d: {"score": c.score, "weight": c.weight, "reasoning": c.reasoning}
            for d, c in ((d, report.component_scores[d]) for d in DIMENSIONS)
        },
        "consensus": {
            "mode": meta.mode.value,
            "rounds_used": meta.rounds_used,
            "primary_model": meta.primary_model,
            "models": [{"id": m.id, "risk": m.risk.name, "confidence": m.confidence} for m in meta.models],
            "tally": dict(meta.tally) if meta.tally is not None else None,
        },
        "notes": list(report.notes),
        "tool_version": report.tool_version,
        "timestamp": report.timestamp.astimezone(timezone.utc).isoformat(),
    }


def report_from_dict(doc: Mapping) -> AnalysisReport:
    validate_report_document(doc)
    c = doc["consensus"]
    return AnalysisReport(
        tx_reference=doc["tx_reference"],
        decided_label=RiskLabel[doc["risk"]],
        confidence=doc["confidence"],
        summary=doc["summary"],
        justification=doc["justification"],
        recommendations=tuple(doc["recommendations"]),
        component_scores={d: ComponentScore(**doc["components"][d]) for d in DIMENSIONS},
        consensus_meta=ConsensusMeta(
            mode=ConsensusMode(c["mode"]),
            rounds_used=c["rounds_used"],
            primary_model=c["primary_model"],
            models=tuple(ModelVerdict(m["id"], RiskLabel[m["risk"]], m["confidence"]) for m in c["models"]),
            tally=c.get("tally"),
        ),
        tool_version=doc["tool_version"],
        timestamp=datetime.fromisoformat(doc["timestamp"]),
        notes=tuple(doc.get("notes", ())),
    )


@lru_cache(maxsize=1)
def report_schema() -> dict:
    text = resources.files("txlens").joinpath("schemas/report.schema.json").read_text()
    return json.loads(text)


_FORMATS = jsonschema.FormatChecker()


@_FORMATS.checks("date-time", raises=ValueError)
def _is_datetime(value) -> bool:
    # jsonschema only checks date-time when an optional extra is installed
    if not isinstance(value, str):
        return True
    return datetime.fromisoformat(value).tzinfo is not None


def validate_report_document(doc: Mapping) -> None:
    """Raise ``jsonschema.ValidationError`` unless ``doc`` matches the shipped schema."""
    jsonschema.validate(doc, report_schema(), format_checker=_FORMATS)


def dumps_report(report: AnalysisReport) -> str:
    doc = report_to_dict(report)
    validate_report_document(doc)
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def emit_report_json(result: ConsensusResult, fv: FeatureVector, meta: ReportMeta) -> str:
    return dumps_report(build_report(result, fv, meta))


def parse_report_json(text: str) -> AnalysisReport:
    return report_from_dict(json.loads(text))


def provenance(meta: ConsensusMeta) -> str:
    if meta.mode is ConsensusMode.UNANIMOUS:
        how = "unanimous"
    elif meta.mode is ConsensusMode.REFLECTED_CONSENSUS:
        how = f"consensus after {meta.rounds_used} reflection round(s)"
    else:
        how = "weighted vote"
    return f"Decision: {how} ({len(meta.models)} models, primary {meta.primary_model})"


def render_summary(report: AnalysisReport) -> str:
    bar = "=" * 64
    lines = [
        bar,
        f"  {report.decided_label.name}   confidence {report.confidence * 100:.1f}%",
        bar,
        "",
        "Summary:",
        report.summary.strip() or "(no summary)",
        "",
    ]
    if report.justification.strip():
        lines += ["Reasoning:", report.justification.strip(), ""]
    lines.append("Recommendations:")
    if report.recommendations:
        lines += [f"  {i}. {rec}" for i, rec in enumerate(report.recommendations, start=1)]
    else:
        lines.append("  none")
    lines += ["", provenance(report.consensus_meta)]
    return "\n".join(lines) + "\n"
