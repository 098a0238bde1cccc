"""Prompt construction for analysis, self-reflection and summarization."""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Optional, Sequence

from ..features.vector import DIMENSIONS, FeatureVector
from ..threatdb import ThreatHit
from .response import REPLY_SCHEMA_TEXT, ModelOutput, render_model_output

DEFAULT_SECTION_BUDGET = 8000
TRUNCATED = "[truncated]"

ROLE_PREAMBLE = (
    "You are a blockchain security analyst reviewing an Ethereum transaction before the user signs it. "
    "The transaction was simulated against a fork of current chain state; nothing has been broadcast. "
    "Decide whether it is safe, suspicious or malicious (for example phishing, approval draining, "
    "ownership or proxy takeover, or a user interface that hides what is really being signed)."
)

TASK = (
    "Assess the evidence in four categories: behavior (what the transaction does on-chain), "
    "context (gas and sender patterns), ui (the web page that built the transaction) and database "
    "(threat-intelligence matches). The weights below say how much each category is expected to matter "
    "for this transaction; report your own importance weights."
)

SCHEMA_INSTRUCTIONS = (
    "Reply with exactly one JSON object and nothing else, using this shape:\n"
    + REPLY_SCHEMA_TEXT
    + "\nThe four importance weights must sum to 1. Recommendations are short, concrete actions for the user."
)

REFLECT_INSTRUCTION = (
    "Other analysts reviewed the same evidence and reached different conclusions. Treat their assessments "
    "as counterarguments: re-examine the evidence, keep or change your label on the merits, and reply with "
    "the same JSON schema as before."
)


class PromptKind(str, enum.Enum):
    ANALYZE = "analyze"
    REFLECT = "reflect"
    SUMMARIZE = "summarize"


@dataclass(frozen=True)
class Prompt:
    role_preamble: str
    evidence_sections: tuple[tuple[str, str], ...]
    weights_note: str
    output_schema_instructions: str
    counterexamples: Optional[tuple[str, ...]] = None
    own_prior: Optional[str] = None
    instruction: Optional[str] = None
    kind: PromptKind = PromptKind.ANALYZE
    round: int = 0

    @property
    def sections(self) -> dict[str, str]:
        return dict(self.evidence_sections)

    def system_text(self) -> str:
        return self.role_preamble

    def user_text(self) -> str:
        parts = [TASK, ""]
        for name, body in self.evidence_sections:
            parts += [f"## {name.upper()}", body, ""]
        parts += [self.weights_note, ""]
        if self.own_prior is not None:
            parts += ["## YOUR PREVIOUS ASSESSMENT", self.own_prior, ""]
        if self.counterexamples:
            title = "OTHER ANALYSTS' ASSESSMENTS" if self.kind is PromptKind.REFLECT else "ANALYST ASSESSMENTS"
            parts += [f"## {title}", *self.counterexamples, ""]
        if self.instruction:
            parts += [self.instruction, ""]
        parts.append(self.output_schema_instructions)
        return "\n".join(parts)

    def render(self) -> str:
        return self.system_text() + "\n\n" + self.user_text()


def _truncate(text: str, budget: int) -> str:
    if len(text) <= budget:
        return text
    keep = max(0, budget - len(TRUNCATED) - 1)
    return text[:keep] + "\n" + TRUNCATED


def _ratio(value) -> str:
    return "n/a" if value is None else f"{float(value):.3f}"


def _render_behavior(fv: FeatureVector) -> str:
    b = fv.behavior
    lines = [f"Execution status: {b.status}" + (" (contract creation)" if b.contract_creation else "")]
    if b.top_level_selector is not None:
        lines.append(f"Top-level selector: 0x{b.top_level_selector.hex()}")
    lines.append(f"Call chain ({len(b.call_chain)} call(s)):")
    for row in b.call_chain:
        sel = f"0x{row.selector.hex()}" if row.selector else "-"
        fn = f" {row.function}" if row.function else ""
        flags = " REVERTED" if row.reverted else ""
        lines.append(
            f"  {'  ' * row.depth}[{row.depth}] {row.call_kind.value} {row.caller} -> {row.callee} "
            f"selector {sel}{fn} value {row.value}{flags}"
        )
    lines.append("Asset transfers:" if b.transfers else "Asset transfers: none")
    for t in b.transfers:
        asset = "native ETH" if t.token is None else f"ERC-20 {t.token}"
        lines.append(f"  - transfer {t.amount} of {asset} from {t.sender} to {t.recipient} [{t.evidence.value}]")
    lines.append("Approvals:" if b.approvals else "Approvals: none")
    for a in b.approvals:
        if a.amount is not None:
            what = f"approve amount {a.amount}"
        else:
            what = f"setApprovalForAll approved={a.approved_all}"
        flag = " UNLIMITED" if a.unlimited else ""
        lines.append(f"  - {what} on token {a.token}: owner {a.owner} spender {a.spender}{flag}")
    lines.append("State changes:" if b.state_changes else "State changes: none")
    for s in b.state_changes:
        lines.append(f"  - {s.kind.value}: {s.description}")
    for note in b.notes:
        lines.append(f"Note: {note}")
    for ex in b.code_excerpts:
        lines += [f"Code of {ex.address} ({ex.origin}):", ex.text]
    return "\n".join(lines)


def _render_context(fv: FeatureVector) -> str:
    c = fv.context
    lines = [
        f"Gas limit {c.gas_limit}, gas used {c.gas_used}, unused ratio {_ratio(c.unused_gas_ratio)}"
        + (" (FLAG: excessive unused gas)" if c.excessive_unused_flag else ""),
        f"Effective gas price / base fee: {_ratio(c.price_to_basefee_ratio)}"
        + (" (FLAG: possible acceleration or front-running)" if c.acceleration_flag else ""),
        "Rapid transaction sequence from sender: " + ("yes (FLAG)" if c.rapid_sequence_flag else "no"),
    ]
    lines += [f"Note: {n}" for n in c.notes]
    return "\n".join(lines)


def _render_ui(fv: FeatureVector) -> str:
    ui = fv.ui
    if not ui.present:
        return "UI: not available"
    lines = [f"Origin URL: {ui.origin_url or 'unknown'}", f"Main domain: {ui.main_domain or 'unknown'}"]
    lines.append("Signing initiation sites:" if ui.signing_initiation_sites else "Signing initiation sites: none")
    for s in ui.signing_initiation_sites:
        lines.append(f"  - script {s.script_index} line {s.line}: {s.api_name}")
    lines.append("Calldata construction sites:" if ui.calldata_construction_sites else "Calldata construction sites: none")
    for s in ui.calldata_construction_sites:
        lines.append(f"  - script {s.script_index} line {s.line} ({s.pattern}): {s.snippet}")
    lines += [f"Note: {n}" for n in ui.notes]
    return "\n".join(lines)


def render_hit(hit: ThreatHit) -> str:
    severity = hit.severity.value if hit.severity else "-"
    return f"- {hit.kind.value} {hit.subject} | {hit.label} | severity {severity} | source {hit.source}"


def _render_database(hits: Sequence[ThreatHit]) -> str:
    if not hits:
        return "No threat-intelligence hits."
    return "\n".join(render_hit(h) for h in hits)


def build_prompt(
    fv: FeatureVector,
    hits: Optional[Sequence[ThreatHit]] = None,
    budget: int = DEFAULT_SECTION_BUDGET,
) -> Prompt:
    """Analyst prompt for ``fv``; ``hits`` defaults to the vector's own database hits."""
    hits = fv.database if hits is None else hits
    sections = (
        ("behavior", _render_behavior(fv)),
        ("context", _render_context(fv)),
        ("ui", _render_ui(fv)),
        ("database", _render_database(hits)),
    )
    weights = ", ".join(f"{d} {fv.weights[d]:.3f}" for d in DIMENSIONS)
    return Prompt(
        role_preamble=ROLE_PREAMBLE,
        evidence_sections=tuple((name, _truncate(body, budget)) for name, body in sections),
        weights_note=f"Evidence weights: {weights}.",
        output_schema_instructions=SCHEMA_INSTRUCTIONS,
    )


def render_verdict(output: ModelOutput) -> str:
    return (
        f"- {output.model_id}: {output.risk.value} (confidence {output.confidence:.2f})\n"
        f"  justification: {output.justification}"
    )


def build_reflection_prompt(
    own: ModelOutput,
    counters: Sequence[ModelOutput],
    base: Prompt,
    round: Optional[int] = None,
) -> Prompt:
    if not counters:
        raise ValueError("reflection needs at least one counter-assessment")
    ordered = sorted(counters, key=lambda o: o.model_id)
    return replace(
        base,
        own_prior=render_model_output(own),
        counterexamples=tuple(render_verdict(o) for o in ordered),
        instruction=REFLECT_INSTRUCTION,
        kind=PromptKind.REFLECT,
        round=base.round + 1 if round is None else round,
    )


def build_summary_prompt(outputs: Sequence[ModelOutput], base: Prompt, round: int = 0) -> Prompt:
    label = outputs[0].risk.value
    recs = sorted({r for o in outputs for r in o.recommendations})
    instruction = (
        f"All analysts agree the transaction is {label}. Merge their reasoning into one final assessment "
        f"for the user. The risk field must be \"{label}\". Candidate recommendations: "
        + ("; ".join(recs) if recs else "none")
        + "."
    )
    return replace(
        base,
        counterexamples=tuple(render_verdict(o) for o in outputs),
        instruction=instruction,
        kind=PromptKind.SUMMARIZE,
        round=round,
    )
