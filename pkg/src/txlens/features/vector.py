"""The four-part weighted feature vector handed to the models."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Optional, Sequence

from ..errors import ConfigError
from ..threatdb import ThreatHit
from .behavior import BehaviorFeatures
from .gas import GasContextFindings
from .ui import UIFindings

DIMENSIONS = ("behavior", "context", "ui", "database")

DEFAULT_WEIGHTS = {
    "behavior": Fraction(2, 5),
    "context": Fraction(1, 5),
    "ui": Fraction(1, 4),
    "database": Fraction(3, 20),
}


@dataclass(frozen=True)
class FeatureVector:
    behavior: BehaviorFeatures
    context: GasContextFindings
    ui: UIFindings
    database: tuple[ThreatHit, ...]
    weights: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "database", tuple(self.database))
        if set(self.weights) != set(DIMENSIONS):
            raise ValueError(f"weights must cover exactly {DIMENSIONS}")
        if any(w < 0 for w in self.weights.values()) or abs(sum(self.weights.values()) - 1) > 1e-9:
            raise ValueError("weights must be non-negative and sum to 1")
        object.__setattr__(self, "weights", {d: float(self.weights[d]) for d in DIMENSIONS})


def _as_fraction(value) -> Fraction:
    if isinstance(value, bool) or not isinstance(value, (int, float, str, Fraction)):
        raise ConfigError(f"weight must be a number, got {value!r}")
    try:
        # str() keeps decimal intent: 0.1 becomes 1/10, not its binary expansion
        return Fraction(str(value)) if isinstance(value, float) else Fraction(value)
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"bad weight {value!r}: {exc}") from None


def normalize_weights(weight_config: Optional[Mapping], ui_present: bool = True) -> dict[str, Fraction]:
    raw = DEFAULT_WEIGHTS if weight_config is None else weight_config
    missing = set(DIMENSIONS) - set(raw)
    extra = set(raw) - set(DIMENSIONS)
    if missing or extra:
        raise ConfigError(f"weight config needs exactly {DIMENSIONS}; missing {sorted(missing)}, unknown {sorted(extra)}")
    weights = {d: _as_fraction(raw[d]) for d in DIMENSIONS}
    if any(w < 0 for w in weights.values()):
        raise ConfigError("weights must be non-negative")
    if sum(weights.values()) == 0:
        raise ConfigError("weights sum to zero")
    if not ui_present:
        # scaling the rest by 1/(1 - ui) hands the UI share out proportionally
        weights["ui"] = Fraction(0)
        if sum(weights.values()) == 0:
            raise ConfigError("all weight is on UI features but none are present")
    total = sum(weights.values())
    return {d: w / total for d, w in weights.items()}


def assemble_feature_vector(
    behavior: BehaviorFeatures,
    context: GasContextFindings,
    ui: UIFindings,
    db_hits: Sequence[ThreatHit],
    weight_config: Optional[Mapping] = None,
) -> FeatureVector:
    weights = normalize_weights(weight_config, ui_present=ui.present)
    return FeatureVector(behavior, context, ui, tuple(db_hits), {d: float(w) for d, w in weights.items()})


def load_weight_config(path: str | Path) -> dict[str, Fraction]:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected an object")
    weights = {k: _as_fraction(v) for k, v in doc.items()}
    normalize_weights(weights)  # validate eagerly
    return weights
