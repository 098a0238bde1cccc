"""Behavioral features: call chain, asset movements, approvals, storage writes."""
from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Optional

from eth_abi import decode
from eth_abi.exceptions import DecodingError

from ..errors import LoadError
from ..evm import (
    APPROVE,
    EIP1967_ADMIN_SLOT,
    EIP1967_BEACON_SLOT,
    EIP1967_IMPLEMENTATION_SLOT,
    KNOWN_SELECTORS,
    SET_APPROVAL_FOR_ALL,
    TRANSFER,
    TRANSFER_FROM,
    TRANSFER_TOPIC,
    normalize_address,
    to_word,
    word_hex,
)
from ..model import CallKind, CallNode, ExecutionTrace, TxEnvelope

log = logging.getLogger(__name__)

# approvals at or above this are reported as effectively unlimited
UNLIMITED_ALLOWANCE = 1 << 128


@dataclass(frozen=True)
class CallRow:
    depth: int
    call_kind: CallKind
    caller: str
    callee: str
    selector: Optional[bytes]
    value: int = 0
    reverted: bool = False

    @property
    def function(self) -> Optional[str]:
        return KNOWN_SELECTORS.get(self.selector) if self.selector else None


def extract_call_chain(trace: ExecutionTrace) -> list[CallRow]:
    """Pre-order rows for every call in the tree, reverted ones included."""
    return [
        CallRow(n.depth, n.call_kind, n.caller, n.callee, n.selector, n.value, n.reverted)
        for n in trace.nodes()
    ]


def _effective_nodes(trace: ExecutionTrace) -> Iterator[CallNode]:
    """Pre-order nodes whose effects were not rolled back."""
    stack = [trace.root]
    while stack:
        node = stack.pop()
        if node.reverted:
            continue
        yield node
        stack.extend(reversed(node.children))


class AssetKind(str, enum.Enum):
    NATIVE = "NATIVE"
    ERC20 = "ERC20"


class Evidence(str, enum.Enum):
    VALUE_FIELD = "VALUE_FIELD"
    SELECTOR_CALL = "SELECTOR_CALL"
    EVENT_LOG = "EVENT_LOG"
    BOTH = "BOTH"


@dataclass(frozen=True)
class TokenTransfer:
    asset: AssetKind
    sender: str
    recipient: str
    amount: int
    evidence: Evidence
    token: Optional[str] = None

    def __post_init__(self):
        if self.amount <= 0:
            raise ValueError("transfer amount must be positive")
        if self.asset is AssetKind.NATIVE and (self.evidence is not Evidence.VALUE_FIELD or self.token):
            raise ValueError("native transfers carry VALUE_FIELD evidence and no token")
        if self.asset is AssetKind.ERC20 and not self.token:
            raise ValueError("ERC-20 transfers need a token address")


def _decode_erc20_call(node: CallNode) -> Optional[tuple[str, str, int]]:
    args = node.input[4:]
    try:
        if node.selector == TRANSFER:
            to, amount = decode(["address", "uint256"], args)
            return node.caller, normalize_address(to), amount
        src, to, amount = decode(["address", "address", "uint256"], args)
        return normalize_address(src), normalize_address(to), amount
    except (DecodingError, ValueError) as exc:
        log.warning("undecodable %s arguments in call to %s: %s", node.selector.hex(), node.callee, exc)
        return None


def _decode_transfer_log(entry) -> Optional[tuple[str, str, str, int]]:
    if len(entry.topics) != 3 or entry.topics[0] != TRANSFER_TOPIC or len(entry.data) != 32:
        return None  # ERC-721 Transfer has 4 topics
    if any(entry.topics[i][:12] != bytes(12) for i in (1, 2)):
        return None
    src = "0x" + entry.topics[1][12:].hex()
    dst = "0x" + entry.topics[2][12:].hex()
    return entry.emitter, src, dst, int.from_bytes(entry.data, "big")


def detect_token_transfers(trace: ExecutionTrace) -> list[TokenTransfer]:
    """Native and ERC-20 movements, pre-order, then unmatched Transfer logs.

    A ``transfer``/``transferFrom`` call whose effect is confirmed by a
    Transfer event of the same token, parties and amount is reported once
    with evidence BOTH. Calls inside reverted subtrees are skipped.
    """
    logs = [(i, _decode_transfer_log(e)) for i, e in enumerate(trace.logs)]
    unmatched = {i: d for i, d in logs if d is not None}
    out: list[TokenTransfer] = []
    for node in _effective_nodes(trace):
        if node.value > 0:
            out.append(TokenTransfer(AssetKind.NATIVE, node.caller, node.callee, node.value, Evidence.VALUE_FIELD))
        if node.call_kind is not CallKind.CALL or node.selector not in (TRANSFER, TRANSFER_FROM):
            continue
        decoded = _decode_erc20_call(node)
        if decoded is None:
            continue
        src, dst, amount = decoded
        if amount == 0:
            log.info("zero-amount token transfer on %s ignored", node.callee)
            continue
        evidence = Evidence.SELECTOR_CALL
        for i, d in sorted(unmatched.items()):
            if d == (node.callee, src, dst, amount):
                del unmatched[i]
                evidence = Evidence.BOTH
                break
        out.append(TokenTransfer(AssetKind.ERC20, src, dst, amount, evidence, token=node.callee))
    for _, (token, src, dst, amount) in sorted(unmatched.items()):
        if amount > 0:
            out.append(TokenTransfer(AssetKind.ERC20, src, dst, amount, Evidence.EVENT_LOG, token=token))
    return out


@dataclass(frozen=True)
class ApprovalFinding:
    token: str
    owner: str
    spender: str
    selector: bytes
    amount: Optional[int] = None
    approved_all: Optional[bool] = None

    @property
    def unlimited(self) -> bool:
        if self.amount is not None:
            return self.amount >= UNLIMITED_ALLOWANCE
        return bool(self.approved_all)


def detect_approvals(trace: ExecutionTrace) -> list[ApprovalFinding]:
    """``approve`` and ``setApprovalForAll`` calls that took effect."""
    out = []
    for node in _effective_nodes(trace):
        if node.call_kind is not CallKind.CALL or node.selector not in (APPROVE, SET_APPROVAL_FOR_ALL):
            continue
        try:
            if node.selector == APPROVE:
                spender, amount = decode(["address", "uint256"], node.input[4:])
                out.append(ApprovalFinding(node.callee, node.caller, normalize_address(spender), APPROVE, amount=amount))
            else:
                operator, approved = decode(["address", "bool"], node.input[4:])
                out.append(ApprovalFinding(
                    node.callee, node.caller, normalize_address(operator), SET_APPROVAL_FOR_ALL, approved_all=approved,
                ))
        except (DecodingError, ValueError) as exc:
            log.warning("undecodable approval arguments in call to %s: %s", node.callee, exc)
    return out


class StateChangeKind(str, enum.Enum):
    OWNERSHIP_CHANGE = "OWNERSHIP_CHANGE"
    ROLE_UPDATE = "ROLE_UPDATE"
    PROXY_UPGRADE = "PROXY_UPGRADE"
    BALANCE_WRITE = "BALANCE_WRITE"
    UNCLASSIFIED_WRITE = "UNCLASSIFIED_WRITE"


HINTABLE_KINDS = (StateChangeKind.OWNERSHIP_CHANGE, StateChangeKind.ROLE_UPDATE, StateChangeKind.BALANCE_WRITE)

_WELL_KNOWN_SLOTS = {
    EIP1967_IMPLEMENTATION_SLOT: (StateChangeKind.PROXY_UPGRADE, "proxy implementation"),
    EIP1967_BEACON_SLOT: (StateChangeKind.PROXY_UPGRADE, "proxy beacon"),
    EIP1967_ADMIN_SLOT: (StateChangeKind.OWNERSHIP_CHANGE, "proxy admin"),
}


@dataclass(frozen=True)
class StateChangeFinding:
    kind: StateChangeKind
    contract: str
    slot: bytes
    old_value: bytes
    new_value: bytes
    description: str

    def __post_init__(self):
        if self.old_value == self.new_value:
            raise ValueError("a state change needs old != new")


SlotHints = Mapping[tuple[str, bytes], StateChangeKind]


def _word_text(word: bytes) -> str:
    if word[:12] == bytes(12) and word[12:] != bytes(20):
        return "0x" + word[12:].hex()
    return word_hex(word)


def analyze_storage_writes(trace: ExecutionTrace, slot_hints: Optional[SlotHints] = None) -> list[StateChangeFinding]:
    hints = {(normalize_address(c), to_word(s)): StateChangeKind(k) for (c, s), k in (slot_hints or {}).items()}
    out = []
    for w in trace.storage_writes:
        if w.is_noop:
            continue
        kind = hints.get((w.contract, w.slot))
        what = "hinted slot"
        if kind is None:
            kind, what = _WELL_KNOWN_SLOTS.get(w.slot, (StateChangeKind.UNCLASSIFIED_WRITE, "slot"))
        desc = f"{what} {word_hex(w.slot)} of {w.contract}: {_word_text(w.old_value)} -> {_word_text(w.new_value)}"
        out.append(StateChangeFinding(kind, w.contract, w.slot, w.old_value, w.new_value, desc))
    return out


def load_slot_hints(path: str | Path) -> dict[tuple[str, bytes], StateChangeKind]:
    """Read a ``{"hints": [{"contract", "slot", "kind"}]}`` file."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise LoadError(str(path), exc.lineno, exc.msg) from None
    hints = {}
    for i, h in enumerate(doc.get("hints", []) if isinstance(doc, dict) else []):
        try:
            kind = StateChangeKind(h["kind"])
            if kind not in HINTABLE_KINDS:
                raise ValueError(f"kind {kind.value} cannot be hinted")
            hints[(normalize_address(h["contract"]), to_word(h["slot"]))] = kind
        except (KeyError, TypeError, ValueError) as exc:
            raise LoadError(str(path), None, f"hints[{i}]: {exc}") from None
    return hints


@dataclass(frozen=True)
class CodeExcerpt:
    address: str
    origin: str  # "verified" or "decompiled"
    text: str


@dataclass(frozen=True)
class BehaviorFeatures:
    call_chain: tuple[CallRow, ...] = ()
    transfers: tuple[TokenTransfer, ...] = ()
    approvals: tuple[ApprovalFinding, ...] = ()
    state_changes: tuple[StateChangeFinding, ...] = ()
    code_excerpts: tuple[CodeExcerpt, ...] = ()
    status: str = "SUCCESS"
    top_level_selector: Optional[bytes] = None
    contract_creation: bool = False
    notes: tuple[str, ...] = field(default=())


def extract_behavior(
    tx: TxEnvelope,
    trace: ExecutionTrace,
    slot_hints: Optional[SlotHints] = None,
    excerpt_chars: int = 2000,
) -> BehaviorFeatures:
    excerpts = []
    for addr, snip in trace.code_snippets.items():
        if snip.verified_source:
            excerpts.append(CodeExcerpt(addr, "verified", snip.verified_source[:excerpt_chars]))
        elif snip.decompiled:
            excerpts.append(CodeExcerpt(addr, "decompiled", snip.decompiled[:excerpt_chars]))
    notes = []
    reverted = sum(1 for row in extract_call_chain(trace) if row.reverted)
    if reverted:
        notes.append(f"{reverted} call(s) reverted inside the trace")
    return BehaviorFeatures(
        call_chain=tuple(extract_call_chain(trace)),
        transfers=tuple(detect_token_transfers(trace)),
        approvals=tuple(detect_approvals(trace)),
        state_changes=tuple(analyze_storage_writes(trace, slot_hints)),
        code_excerpts=tuple(excerpts),
        status=trace.status.value,
        top_level_selector=tx.selector,
        contract_creation=tx.is_creation,
        notes=tuple(notes),
    )
