from __future__ import annotations

from pathlib import Path

import pytest

from txlens.llm import ModelOutput
from txlens.model import RiskLabel

REPO = Path(__file__).resolve().parent.parent
CORPUS = REPO / "corpus"
TRACES = CORPUS / "traces"
MODELS = [CORPUS / "models" / f"analyst-{x}.json" for x in "abc"]

EVEN = {"behavior": 0.25, "context": 0.25, "ui": 0.25, "database": 0.25}

# criterion number -> (title, outcome); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[str, str]] = {}


def mo(model_id: str, risk, confidence, recs=(), importance=None, justification="", summary="") -> ModelOutput:
    risk = RiskLabel.parse(risk) if isinstance(risk, str) else risk
    return ModelOutput(
        model_id=model_id,
        risk=risk,
        confidence=confidence,
        justification=justification or f"{model_id} thinks {risk.value}",
        summary=summary or f"{risk.value} per {model_id}",
        importance=importance or EVEN,
        recommendations=tuple(recs),
    )


def feature_vector(path, db=None, weights=None):
    """Features for a fixture file, exactly as the pipeline assembles them."""
    from txlens.features import (assemble_feature_vector, extract_behavior, extract_gas_context,
                                 extract_ui_features)
    from txlens.ingest import load_trace_file
    from txlens.threatdb import query_all

    tx, trace = load_trace_file(path)
    ui = extract_ui_features(tx)
    hits = query_all(db, tx, trace, ui) if db is not None else []
    return assemble_feature_vector(extract_behavior(tx, trace), extract_gas_context(tx, trace), ui, hits, weights)


@pytest.fixture
def corpus() -> Path:
    return CORPUS


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, outcome = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2}: {outcome}  {title}")
