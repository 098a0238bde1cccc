"""Precision/recall/F1 over a labelled fixture corpus, repeated across runs."""
from __future__ import annotations

import enum
import json
import logging
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Callable, Optional, Sequence

from .errors import ConfigError
from .model import RiskLabel

log = logging.getLogger(__name__)


class GroundTruth(str, enum.Enum):
    PHISHING = "PHISHING"
    BENIGN = "BENIGN"


@dataclass(frozen=True)
class EvalCase:
    fixture: Path
    ground_truth: GroundTruth

    def __post_init__(self):
        object.__setattr__(self, "fixture", Path(self.fixture))
        object.__setattr__(self, "ground_truth", GroundTruth(self.ground_truth))


@dataclass(frozen=True)
class RunCounts:
    tp: int
    fp: int
    fn: int
    tn: int
    excluded: int = 0

    @property
    def precision(self) -> Fraction:
        flagged = self.tp + self.fp
        return Fraction(self.tp, flagged) if flagged else Fraction(0)

    @property
    def recall(self) -> Fraction:
        positives = self.tp + self.fn
        return Fraction(self.tp, positives) if positives else Fraction(0)

    @property
    def f1(self) -> Fraction:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else Fraction(0)


@dataclass(frozen=True)
class MetricSummary:
    values: tuple[Fraction, ...]

    @property
    def mean(self) -> Fraction:
        return sum(self.values, Fraction(0)) / len(self.values)

    @property
    def std(self) -> float:
        # population standard deviation; exact zero when all runs agree
        return float(statistics.pstdev(self.values))


@dataclass(frozen=True)
class EvalMetrics:
    runs: tuple[RunCounts, ...]

    @property
    def precision(self) -> MetricSummary:
        return MetricSummary(tuple(r.precision for r in self.runs))

    @property
    def recall(self) -> MetricSummary:
        return MetricSummary(tuple(r.recall for r in self.runs))

    @property
    def f1(self) -> MetricSummary:
        return MetricSummary(tuple(r.f1 for r in self.runs))

    def to_dict(self) -> dict:
        out = {}
        for name in ("precision", "recall", "f1"):
            m: MetricSummary = getattr(self, name)
            out[name] = {"mean": float(m.mean), "std": m.std, "per_run": [float(v) for v in m.values]}
        out["runs"] = [
            {"tp": r.tp, "fp": r.fp, "fn": r.fn, "tn": r.tn, "excluded": r.excluded} for r in self.runs
        ]
        return out

    def format_table(self) -> str:
        rows = [f"{'metric':<10} {'mean':>8} {'std':>8}"]
        for name in ("precision", "recall", "f1"):
            m: MetricSummary = getattr(self, name)
            rows.append(f"{name:<10} {float(m.mean):>8.4f} {m.std:>8.4f}")
        return "\n".join(rows) + "\n"


def flagged(label: RiskLabel) -> bool:
    return label in (RiskLabel.SUSPICIOUS, RiskLabel.MALICIOUS)


def count_run(cases: Sequence[EvalCase], labels: Sequence[Optional[RiskLabel]]) -> RunCounts:
    """Tally one run. ``None`` marks an operational failure for that case."""
    tp = fp = fn = tn = excluded = 0
    for case, label in zip(cases, labels, strict=True):
        if case.ground_truth is GroundTruth.PHISHING:
            if label is not None and flagged(label):
                tp += 1
            else:
                fn += 1
        elif label is None:
            excluded += 1
        elif flagged(label):
            fp += 1
        else:
            tn += 1
    return RunCounts(tp, fp, fn, tn, excluded)


AnalyzeFn = Callable[[EvalCase], RiskLabel]


def run_eval(cases: Sequence[EvalCase], runs: int, analyze_fn: AnalyzeFn, workers: int = 1) -> EvalMetrics:
    """Analyze every case ``runs`` times and score each run.

    A case whose analysis raises is a missed detection when it is phishing
    and is left out of the run when it is benign.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    if not cases:
        raise ValueError("no evaluation cases")

    def one(case: EvalCase) -> Optional[RiskLabel]:
        try:
            return analyze_fn(case)
        except Exception as exc:
            log.warning("case %s failed (%s); counted as %s", case.fixture,
                        exc, "a miss" if case.ground_truth is GroundTruth.PHISHING else "excluded")
            return None

    results = []
    for _ in range(runs):
        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            labels = list(pool.map(one, cases))
        results.append(count_run(cases, labels))
    return EvalMetrics(tuple(results))


def load_manifest(path: str | Path) -> list[EvalCase]:
    """Read ``[{"fixture": ..., "ground_truth": "PHISHING"|"BENIGN"}]``; fixture paths are relative to the manifest."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read manifest {path}: {exc}") from None
    if not isinstance(doc, list):
        raise ConfigError(f"{path}: manifest must be a JSON list")
    cases = []
    for i, item in enumerate(doc):
        try:
            fixture = Path(item["fixture"])
            cases.append(EvalCase(fixture if fixture.is_absolute() else path.parent / fixture, item["ground_truth"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: entry {i} is invalid ({exc})") from None
    return cases
