"""Multi-model consensus with self-reflection rounds and confidence-weighted fallback voting.

While fewer than ``max_rounds`` reflection rounds have run: if every model
gives the same label, one model summarizes and that is the decision;
otherwise each model is re-asked with all other models' verdicts as
counterarguments. If the rounds run out, labels are scored by summed
confidence and the best-scoring label wins.
"""
from __future__ import annotations

import enum
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Mapping, Optional, Sequence

from .errors import ConsensusAbort
from .llm.response import ModelOutput
from .model import RiskLabel

log = logging.getLogger(__name__)

DEFAULT_MAX_ROUNDS = 3


class ConsensusMode(str, enum.Enum):
    UNANIMOUS = "UNANIMOUS"
    REFLECTED_CONSENSUS = "REFLECTED_CONSENSUS"
    WEIGHTED_VOTE = "WEIGHTED_VOTE"


class TieBreak(str, enum.Enum):
    HIGHER_SEVERITY = "HIGHER_SEVERITY"
    LOWEST_MODEL_INDEX = "LOWEST_MODEL_INDEX"


@dataclass(frozen=True)
class ConsensusConfig:
    n: int = 3
    max_rounds: int = DEFAULT_MAX_ROUNDS
    primary_model: Optional[str] = None
    tie_break: TieBreak = TieBreak.HIGHER_SEVERITY

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("consensus needs at least two models")
        if self.max_rounds < 0:
            raise ValueError("max_rounds must be >= 0")
        object.__setattr__(self, "tie_break", TieBreak(self.tie_break))

    def check_models(self, model_ids: Sequence[str]) -> None:
        if self.primary_model is not None and self.primary_model not in model_ids:
            raise ValueError(f"primary model {self.primary_model!r} is not configured")


@dataclass(frozen=True)
class VoteTally:
    scores: Mapping[RiskLabel, Fraction]

    def as_floats(self) -> dict[str, float]:
        return {label.value: float(score) for label, score in self.scores.items()}


@dataclass(frozen=True)
class ConsensusResult:
    final: ModelOutput
    decided_label: RiskLabel
    mode: ConsensusMode
    rounds_used: int
    transcripts: tuple[tuple[ModelOutput, ...], ...]
    primary_model: str
    tally: Optional[VoteTally] = None
    notes: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.mode is ConsensusMode.UNANIMOUS and self.rounds_used != 0:
            raise ValueError("a unanimous result uses zero reflection rounds")

    @property
    def final_round(self) -> tuple[ModelOutput, ...]:
        return self.transcripts[-1]


def _confidence(c) -> Fraction:
    if isinstance(c, (Fraction, int)):
        return Fraction(c)
    # decimal reading of the float, so 0.8 + 0.7 tallies to exactly 3/2
    return Fraction(repr(float(c)))


def tally_votes(outputs: Sequence[ModelOutput]) -> VoteTally:
    """Score(r) = sum of confidences of the outputs labelled r, for observed labels only."""
    scores: dict[RiskLabel, Fraction] = {}
    for o in outputs:
        scores[o.risk] = scores.get(o.risk, Fraction(0)) + _confidence(o.confidence)
    return VoteTally(scores)


def weighted_vote(
    outputs: Sequence[ModelOutput],
    tie_break: TieBreak = TieBreak.HIGHER_SEVERITY,
) -> tuple[RiskLabel, ModelOutput, VoteTally]:
    """Confidence-weighted argmax over labels.

    Tied labels go to the more severe one (HIGHER_SEVERITY) or to the label
    of the earliest model (LOWEST_MODEL_INDEX). The surfaced output is the
    most confident one carrying the winning label, earliest model first on
    equal confidence.
    """
    if not outputs:
        raise ValueError("weighted_vote needs at least one output")
    tally = tally_votes(outputs)
    best = max(tally.scores.values())
    tied = [label for label, score in tally.scores.items() if score == best]
    if len(tied) == 1 or tie_break is TieBreak.HIGHER_SEVERITY:
        label = max(tied, key=lambda r: r.severity)
    else:
        label = next(o.risk for o in outputs if o.risk in tied)
    candidates = [(i, o) for i, o in enumerate(outputs) if o.risk is label]
    _, chosen = max(candidates, key=lambda pair: (_confidence(pair[1].confidence), -pair[0]))
    return label, chosen, tally


Reflector = Callable[[ModelOutput, Sequence[ModelOutput], int], ModelOutput]
Summarizer = Callable[[Sequence[ModelOutput]], ModelOutput]


def summarize(
    outputs: Sequence[ModelOutput],
    primary: str,
    ask: Callable[[Sequence[ModelOutput]], ModelOutput],
) -> ModelOutput:
    """Have the primary model merge agreeing outputs into one verdict.

    The consensus label always wins: a summary that disagrees keeps its text
    but is relabelled, with a note. If the summarizer fails, the primary
    model's own output is returned unchanged.
    """
    if not outputs:
        raise ValueError("nothing to summarize")
    label = outputs[0].risk
    if any(o.risk is not label for o in outputs):
        raise ValueError("summarize requires outputs that share one label")
    own = next((o for o in outputs if o.model_id == primary), outputs[0])
    try:
        summary = ask(outputs)
    except Exception as exc:
        log.warning("summarizer %s failed, using its own output: %s", primary, exc)
        return replace(own, notes=own.notes + (f"summarizer failed ({exc}); primary model output used",))
    if summary.risk is not label:
        note = f"summarizer returned {summary.risk.value}; consensus label {label.value} kept"
        log.warning(note)
        summary = replace(summary, risk=label, notes=summary.notes + (note,))
    return summary


def _unanimous(outputs: Sequence[ModelOutput]) -> bool:
    return len({o.risk for o in outputs}) == 1


def _reflect_round(
    outputs: Sequence[ModelOutput], reflector: Reflector, round_no: int, workers: Optional[int],
) -> tuple[list[ModelOutput], list[str]]:
    def one(i: int):
        own = outputs[i]
        counters = [o for j, o in enumerate(outputs) if j != i]
        try:
            return reflector(own, counters, round_no)
        except Exception as exc:  # a failed model leaves the pool
            return exc

    with ThreadPoolExecutor(max_workers=workers or len(outputs)) as pool:
        results = list(pool.map(one, range(len(outputs))))
    survivors, notes = [], []
    for own, res in zip(outputs, results):
        if isinstance(res, Exception):
            notes.append(f"round {round_no}: model {own.model_id} dropped ({res})")
            log.warning(notes[-1])
        else:
            survivors.append(res)
    return survivors, notes


def run_consensus(
    initial_outputs: Sequence[ModelOutput],
    reflector: Reflector,
    summarizer: Summarizer,
    cfg: ConsensusConfig = ConsensusConfig(),
    workers: Optional[int] = None,
) -> ConsensusResult:
    """Drive reflection rounds until agreement or ``cfg.max_rounds``, then vote.

    ``reflector(own, counters, round)`` returns the model's reassessment for
    that round; ``summarizer(outputs)`` produces the final verdict on
    agreement. Rounds are barriers: all reflections of a round complete
    before the next one starts. Transcript entry 0 is the initial outputs.
    """
    outputs = list(initial_outputs)
    if len(outputs) < 2:
        raise ValueError("consensus needs at least two initial outputs")
    primary = cfg.primary_model or outputs[0].model_id
    transcripts = [tuple(outputs)]
    notes: list[str] = []

    rounds = 0
    while rounds < cfg.max_rounds:
        if _unanimous(outputs):
            mode = ConsensusMode.UNANIMOUS if rounds == 0 else ConsensusMode.REFLECTED_CONSENSUS
            final = summarizer(outputs)
            return ConsensusResult(final, outputs[0].risk, mode, rounds, tuple(transcripts), primary,
                                   notes=tuple(notes) + final.notes)
        outputs, dropped = _reflect_round(outputs, reflector, rounds + 1, workers)
        notes += dropped
        if len(outputs) < 2:
            raise ConsensusAbort(f"only {len(outputs)} model(s) left after round {rounds + 1}: " + "; ".join(notes))
        transcripts.append(tuple(outputs))
        rounds += 1

    label, chosen, tally = weighted_vote(outputs, cfg.tie_break)
    return ConsensusResult(chosen, label, ConsensusMode.WEIGHTED_VOTE, rounds, tuple(transcripts), primary,
                           tally=tally, notes=tuple(notes))
