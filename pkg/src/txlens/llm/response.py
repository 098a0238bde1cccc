"""Structured model verdicts and the strict reply schema."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Mapping

from ..errors import NoJsonError, SchemaError
from ..features.vector import DIMENSIONS
from ..model import RiskLabel

IMPORTANCE_TOLERANCE = 0.02
_SUM_EPS = 1e-9

REPLY_SCHEMA_TEXT = (
    '{"risk": "safe" | "suspicious" | "malicious", '
    '"confidence": <number between 0 and 1>, '
    '"justification": <string>, '
    '"summary": <string>, '
    '"importance": {"behavior": <number>, "context": <number>, "ui": <number>, "database": <number>}, '
    '"recommendations": [<string>, ...]}'
)


@dataclass(frozen=True)
class ModelOutput:
    model_id: str
    risk: RiskLabel
    confidence: float
    justification: str
    summary: str
    importance: Mapping[str, float]
    recommendations: tuple[str, ...] = ()
    # pipeline annotations, never part of the model's reply
    notes: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")
        if set(self.importance) != set(DIMENSIONS):
            raise ValueError(f"importance must cover exactly {DIMENSIONS}")
        if abs(sum(self.importance.values()) - 1.0) > _SUM_EPS:
            raise ValueError("importance must sum to 1")
        object.__setattr__(self, "importance", {d: float(self.importance[d]) for d in DIMENSIONS})
        object.__setattr__(self, "recommendations", tuple(self.recommendations))
        object.__setattr__(self, "notes", tuple(self.notes))

    def to_reply(self) -> dict:
        return {
            "risk": self.risk.value,
            "confidence": self.confidence,
            "justification": self.justification,
            "summary": self.summary,
            "importance": dict(self.importance),
            "recommendations": list(self.recommendations),
        }


def render_model_output(output: ModelOutput) -> str:
    """Serialize ``output`` in the exact reply schema the models are asked for."""
    return json.dumps(output.to_reply())


def extract_json_object(raw: str) -> dict:
    """First decodable JSON object in ``raw``, ignoring prose and code fences."""
    decoder = json.JSONDecoder()
    start = raw.find("{")
    while start != -1:
        try:
            obj, _ = decoder.raw_decode(raw, start)
        except json.JSONDecodeError:
            obj = None
        if isinstance(obj, dict):
            return obj
        start = raw.find("{", start + 1)
    raise NoJsonError("no JSON object in model reply")


def _number(value: Any, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise SchemaError(name, f"expected a finite number, got {value!r}")
    return float(value)


def _string(obj: dict, name: str) -> str:
    value = obj.get(name)
    if not isinstance(value, str):
        raise SchemaError(name, "expected a string")
    return value


def validate_reply(obj: Mapping, model_id: str) -> ModelOutput:
    risk_raw = obj.get("risk")
    if not isinstance(risk_raw, str):
        raise SchemaError("risk", "expected a string")
    try:
        risk = RiskLabel.parse(risk_raw)
    except ValueError:
        raise SchemaError("risk", f"unknown label {risk_raw!r}") from None

    if "confidence" not in obj:
        raise SchemaError("confidence", "missing")
    confidence = _number(obj["confidence"], "confidence")
    if not 0.0 <= confidence <= 1.0:
        raise SchemaError("confidence", f"{confidence} outside [0, 1]")

    importance_raw = obj.get("importance")
    if not isinstance(importance_raw, dict) or set(importance_raw) != set(DIMENSIONS):
        raise SchemaError("importance", f"expected an object with keys {DIMENSIONS}")
    importance = {d: _number(importance_raw[d], f"importance.{d}") for d in DIMENSIONS}
    if any(v < 0 for v in importance.values()):
        raise SchemaError("importance", "weights must be non-negative")
    total = sum(importance.values())
    if abs(total - 1.0) > IMPORTANCE_TOLERANCE:
        raise SchemaError("importance", f"weights sum to {total:.4f}, not 1")
    if abs(total - 1.0) > _SUM_EPS:
        importance = {d: v / total for d, v in importance.items()}

    recs = obj.get("recommendations")
    if not isinstance(recs, list) or not all(isinstance(r, str) for r in recs):
        raise SchemaError("recommendations", "expected a list of strings")

    return ModelOutput(
        model_id=model_id,
        risk=risk,
        confidence=confidence,
        justification=_string(obj, "justification"),
        summary=_string(obj, "summary"),
        importance=importance,
        recommendations=tuple(recs),
    )


def parse_model_response(raw: str, model_id: str) -> ModelOutput:
    """Parse and validate a model reply.

    Importance weights within 0.02 of summing to one are rescaled to sum
    exactly; anything further off is a SchemaError.
    """
    return validate_reply(extract_json_object(raw), model_id)
