"""Shared domain types: transactions, call trees, storage writes and risk labels.

All types are frozen dataclasses holding tuples, so instances can be shared
between threads freely. Addresses are lowercase ``0x`` hex strings, words are
32-byte ``bytes``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

from .evm import WORD, normalize_address


class RiskLabel(enum.Enum):
    SAFE = "safe"
    SUSPICIOUS = "suspicious"
    MALICIOUS = "malicious"

    @property
    def severity(self) -> int:
        return _SEVERITY[self]

    def __lt__(self, other: "RiskLabel") -> bool:
        if not isinstance(other, RiskLabel):
            return NotImplemented
        return self.severity < other.severity

    def __le__(self, other: "RiskLabel") -> bool:
        if not isinstance(other, RiskLabel):
            return NotImplemented
        return self.severity <= other.severity

    def __gt__(self, other: "RiskLabel") -> bool:
        if not isinstance(other, RiskLabel):
            return NotImplemented
        return self.severity > other.severity

    def __ge__(self, other: "RiskLabel") -> bool:
        if not isinstance(other, RiskLabel):
            return NotImplemented
        return self.severity >= other.severity

    @classmethod
    def parse(cls, text: str) -> "RiskLabel":
        return cls(text.strip().lower())


_SEVERITY = {RiskLabel.SAFE: 0, RiskLabel.SUSPICIOUS: 1, RiskLabel.MALICIOUS: 2}


class CallKind(str, enum.Enum):
    CALL = "CALL"
    DELEGATECALL = "DELEGATECALL"
    STATICCALL = "STATICCALL"
    CREATE = "CREATE"


class TraceStatus(str, enum.Enum):
    SUCCESS = "SUCCESS"
    REVERT = "REVERT"


class ScriptKind(str, enum.Enum):
    INLINE = "inline"
    EXTERNAL = "external"


@dataclass(frozen=True)
class PageScript:
    source_kind: ScriptKind
    content: str
    url: Optional[str] = None


@dataclass(frozen=True)
class TxEnvelope:
    chain_id: int
    sender: str
    recipient: Optional[str]
    value: int
    calldata: bytes
    gas_limit: int
    effective_gas_price: int
    base_fee: int
    nonce: int
    origin_url: Optional[str] = None
    page_scripts: Optional[tuple[PageScript, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "sender", normalize_address(self.sender))
        if self.recipient is not None:
            object.__setattr__(self, "recipient", normalize_address(self.recipient))
        for name in ("value", "gas_limit", "effective_gas_price", "base_fee", "nonce"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.page_scripts is not None:
            object.__setattr__(self, "page_scripts", tuple(self.page_scripts))

    @property
    def is_creation(self) -> bool:
        return self.recipient is None

    @property
    def selector(self) -> Optional[bytes]:
        return selector_of(self.calldata)


@dataclass(frozen=True)
class CallNode:
    call_kind: CallKind
    caller: str
    callee: str
    value: int = 0
    input: bytes = b""
    output: bytes = b""
    gas_used: int = 0
    depth: int = 0
    children: tuple["CallNode", ...] = ()
    reverted: bool = False

    def __post_init__(self):
        object.__setattr__(self, "call_kind", CallKind(self.call_kind))
        object.__setattr__(self, "caller", normalize_address(self.caller))
        object.__setattr__(self, "callee", normalize_address(self.callee))
        object.__setattr__(self, "children", tuple(self.children))

    @property
    def selector(self) -> Optional[bytes]:
        return selector_of(self.input)

    def walk(self) -> Iterator["CallNode"]:
        """Pre-order traversal of this node and its descendants."""
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def walk_with_path(self) -> Iterator[tuple[tuple[int, ...], "CallNode"]]:
        # iterative: call depth can reach 1024, past Python's recursion limit
        stack: list[tuple[tuple[int, ...], CallNode]] = [((), self)]
        while stack:
            path, node = stack.pop()
            yield path, node
            for i in range(len(node.children) - 1, -1, -1):
                stack.append((path + (i,), node.children[i]))


@dataclass(frozen=True)
class StorageWrite:
    contract: str
    slot: bytes
    old_value: bytes
    new_value: bytes

    def __post_init__(self):
        object.__setattr__(self, "contract", normalize_address(self.contract))
        for name in ("slot", "old_value", "new_value"):
            if len(getattr(self, name)) != WORD:
                raise ValueError(f"{name} must be {WORD} bytes")

    @property
    def is_noop(self) -> bool:
        return self.old_value == self.new_value


@dataclass(frozen=True)
class LogEntry:
    emitter: str
    topics: tuple[bytes, ...] = ()
    data: bytes = b""

    def __post_init__(self):
        object.__setattr__(self, "emitter", normalize_address(self.emitter))
        object.__setattr__(self, "topics", tuple(self.topics))
        for t in self.topics:
            if len(t) != WORD:
                raise ValueError("log topics must be 32 bytes")


@dataclass(frozen=True)
class CodeSnippet:
    verified_source: Optional[str] = None
    decompiled: Optional[str] = None


@dataclass(frozen=True)
class ExecutionTrace:
    root: CallNode
    storage_writes: tuple[StorageWrite, ...] = ()
    logs: tuple[LogEntry, ...] = ()
    gas_used: int = 0
    status: TraceStatus = TraceStatus.SUCCESS
    code_snippets: dict[str, CodeSnippet] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "storage_writes", tuple(self.storage_writes))
        object.__setattr__(self, "logs", tuple(self.logs))
        object.__setattr__(self, "status", TraceStatus(self.status))
        snippets = {normalize_address(k): v for k, v in self.code_snippets.items()}
        object.__setattr__(self, "code_snippets", dict(sorted(snippets.items())))

    def nodes(self) -> Iterator[CallNode]:
        return self.root.walk()

    def callees(self) -> list[str]:
        """Distinct callee addresses in pre-order of first appearance."""
        seen: dict[str, None] = {}
        for node in self.nodes():
            seen.setdefault(node.callee)
        return list(seen)


def selector_of(calldata: bytes) -> Optional[bytes]:
    """First four bytes of ``calldata``, or None when it is shorter than that."""
    if len(calldata) < 4:
        return None
    return bytes(calldata[:4])


def max_severity(labels: Sequence[RiskLabel]) -> RiskLabel:
    if not labels:
        raise ValueError("max_severity requires at least one label")
    return max(labels, key=lambda label: label.severity)


@dataclass(frozen=True)
class Violation:
    invariant: str
    location: str
    detail: str = ""

    def __str__(self) -> str:
        text = f"{self.invariant} at {self.location}"
        return f"{text}: {self.detail}" if self.detail else text


def _path_str(path: tuple[int, ...]) -> str:
    return "root" + "".join(f".children[{i}]" for i in path)


def validate_trace(trace: ExecutionTrace, tx: Optional[TxEnvelope] = None) -> list[Violation]:
    """Check the structural invariants of a trace (and its envelope, if given).

    Violations are returned, not raised.
    """
    out: list[Violation] = []
    if trace.root.depth != 0:
        out.append(Violation("root-depth", "root", f"depth={trace.root.depth}"))

    callees: set[str] = set()
    for path, node in trace.root.walk_with_path():
        callees.add(node.callee)
        where = _path_str(path)
        if node.call_kind is CallKind.STATICCALL and node.value != 0:
            out.append(Violation("static-call-value", where, f"value={node.value}"))
        for i, child in enumerate(node.children):
            if child.depth != node.depth + 1:
                out.append(Violation(
                    "depth-monotonicity", f"{where}.children[{i}]",
                    f"depth={child.depth}, parent depth={node.depth}",
                ))

    for i, write in enumerate(trace.storage_writes):
        if write.contract not in callees:
            out.append(Violation("storage-write-outside-call-tree", f"storage_writes[{i}]", write.contract))
    for i, log in enumerate(trace.logs):
        if len(log.topics) > 4:
            out.append(Violation("log-topic-count", f"logs[{i}]", f"{len(log.topics)} topics"))

    if tx is not None:
        if trace.gas_used > tx.gas_limit:
            out.append(Violation(
                "gas-exceeds-limit", "trace", f"gas_used={trace.gas_used} > gas_limit={tx.gas_limit}"
            ))
        if tx.value > 0 and tx.gas_limit < 21000:
            out.append(Violation("intrinsic-gas", "tx", f"gas_limit={tx.gas_limit} < 21000"))
    return out
