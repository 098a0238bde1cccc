"""Malicious-indicator database: address/domain blacklists, contract tags, selector patterns.

On-disk files, recognized by name suffix:

``*addresses.txt``   ``<hex20><TAB><source>`` per line, ``#`` comments
``*domains.txt``     ``<domain><TAB><source>`` per line
``*tags.json``       ``{"<hex20>": ["tag", ...]}``
``*patterns.json``   ``[{"selector", "calldata_regex", "label", "severity"}]``

A directory loads every recognized file in it, in name order.
"""
from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Mapping, Optional, Sequence

from eth_abi import decode

from .errors import LoadError
from .evm import hex_to_bytes, normalize_address
from .model import CallKind, ExecutionTrace, RiskLabel, TxEnvelope

if TYPE_CHECKING:
    from .features.ui import UIFindings

_DOMAIN_RE = re.compile(r"^(?=.{1,253}$)([a-z0-9_]([a-z0-9_-]{0,61}[a-z0-9_])?\.)+[a-z0-9-]{2,63}$")


class HitKind(str, enum.Enum):
    ADDRESS = "ADDRESS"
    DOMAIN = "DOMAIN"
    TAG = "TAG"
    PATTERN = "PATTERN"


@dataclass(frozen=True)
class ThreatHit:
    kind: HitKind
    subject: str
    label: str
    severity: Optional[RiskLabel]
    source: str

    def __post_init__(self):
        if not self.subject:
            raise ValueError("threat hit subject must be non-empty")


@dataclass(frozen=True)
class SelectorPattern:
    selector: bytes
    calldata_regex: Optional[str]
    label: str
    severity: RiskLabel

    def __post_init__(self):
        if len(self.selector) != 4:
            raise ValueError("selector must be 4 bytes")
        if self.severity is RiskLabel.SAFE:
            raise ValueError("pattern severity must be SUSPICIOUS or MALICIOUS")
        if self.calldata_regex is not None:
            re.compile(self.calldata_regex)

    def matches(self, calldata: bytes) -> bool:
        """Selector equality, then the regex (if any) searched over lowercase calldata hex, no ``0x``."""
        if calldata[:4] != self.selector:
            return False
        return self.calldata_regex is None or re.search(self.calldata_regex, calldata.hex()) is not None


@dataclass(frozen=True)
class ThreatDB:
    blacklisted_addresses: Mapping[str, str] = field(default_factory=dict)
    blacklisted_domains: Mapping[str, str] = field(default_factory=dict)
    contract_tags: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    selector_patterns: tuple[SelectorPattern, ...] = ()

    def __len__(self) -> int:
        return (len(self.blacklisted_addresses) + len(self.blacklisted_domains)
                + len(self.contract_tags) + len(self.selector_patterns))


def _tsv_lines(path: Path) -> Iterable[tuple[int, str, str]]:
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, source = line.partition("\t")
        yield lineno, key.strip(), source.strip() or path.name


def _json(path: Path):
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise LoadError(str(path), exc.lineno, exc.msg) from None


def _json_line(path: Path, needle: str) -> Optional[int]:
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if needle in line:
            return lineno
    return None


def _expand(paths: Sequence[str | Path]) -> list[Path]:
    files = []
    for p in map(Path, paths):
        if p.is_dir():
            files.extend(sorted(f for f in p.iterdir() if f.is_file() and _kind_of(f)))
        else:
            if not p.exists():
                raise LoadError(str(p), None, "no such file")
            files.append(p)
    return files


def _kind_of(path: Path) -> Optional[str]:
    name = path.name.lower()
    for suffix in ("addresses.txt", "domains.txt", "tags.json", "patterns.json"):
        if name.endswith(suffix):
            return suffix
    return None


def load_db(paths: Sequence[str | Path]) -> ThreatDB:
    """Union of all files; duplicates collapse and the last source wins."""
    addresses: dict[str, str] = {}
    domains: dict[str, str] = {}
    tags: dict[str, list[str]] = {}
    patterns: dict[tuple[bytes, Optional[str]], SelectorPattern] = {}

    for path in _expand(paths):
        kind = _kind_of(path)
        if kind == "addresses.txt":
            for lineno, key, source in _tsv_lines(path):
                try:
                    addresses[normalize_address(key)] = source
                except ValueError as exc:
                    raise LoadError(str(path), lineno, str(exc)) from None
        elif kind == "domains.txt":
            for lineno, key, source in _tsv_lines(path):
                domain = key.lower().rstrip(".")
                if not _DOMAIN_RE.match(domain):
                    raise LoadError(str(path), lineno, f"not a domain: {key!r}")
                domains[domain] = source
        elif kind == "tags.json":
            doc = _json(path)
            if not isinstance(doc, dict):
                raise LoadError(str(path), 1, "expected an object of address -> [tags]")
            for addr, values in doc.items():
                line = _json_line(path, addr)
                try:
                    key = normalize_address(addr)
                except ValueError as exc:
                    raise LoadError(str(path), line, str(exc)) from None
                if not isinstance(values, list) or not all(isinstance(v, str) for v in values):
                    raise LoadError(str(path), line, f"tags for {addr} must be a list of strings")
                merged = tags.setdefault(key, [])
                merged.extend(v for v in values if v not in merged)
        elif kind == "patterns.json":
            doc = _json(path)
            if not isinstance(doc, list):
                raise LoadError(str(path), 1, "expected a list of patterns")
            for i, entry in enumerate(doc):
                try:
                    selector = hex_to_bytes(entry["selector"])
                    pattern = SelectorPattern(
                        selector, entry.get("calldata_regex"), str(entry["label"]), RiskLabel.parse(entry["severity"])
                    )
                except (KeyError, TypeError, ValueError, re.error, AttributeError) as exc:
                    line = _json_line(path, str(entry.get("selector"))) if isinstance(entry, dict) else None
                    raise LoadError(str(path), line, f"pattern #{i}: {exc}") from None
                patterns[(pattern.selector, pattern.calldata_regex)] = pattern
        else:
            raise LoadError(str(path), None, "unrecognized threat-db file name")

    return ThreatDB(
        blacklisted_addresses=addresses,
        blacklisted_domains=domains,
        contract_tags={k: tuple(v) for k, v in tags.items()},
        selector_patterns=tuple(patterns.values()),
    )


_BORROWED_CODE = {CallKind.DELEGATECALL}

_ARG_ADDRESS_SELECTORS = {
    bytes.fromhex("a9059cbb"): ["address", "uint256"],
    bytes.fromhex("095ea7b3"): ["address", "uint256"],
    bytes.fromhex("a22cb465"): ["address", "bool"],
    bytes.fromhex("23b872dd"): ["address", "address", "uint256"],
}


def _argument_addresses(calldata: bytes) -> list[str]:
    types = _ARG_ADDRESS_SELECTORS.get(calldata[:4])
    if types is None:
        return []
    try:
        values = decode(types, calldata[4:])
    except Exception:
        return []
    return [normalize_address(v) for t, v in zip(types, values) if t == "address"]


def query_all(db: ThreatDB, tx: TxEnvelope, trace: ExecutionTrace, ui: Optional["UIFindings"] = None) -> list[ThreatHit]:
    """Every indicator hit for one transaction, in a fixed order.

    Order: call-tree addresses (pre-order, first appearance), addresses
    passed as token-call arguments (spender/recipient), the page domain,
    then selector patterns per call (delegated frames skipped).
    """
    hits: list[ThreatHit] = []
    seen: set[str] = set()

    def check_address(addr: str, where: str):
        if addr in seen:
            return
        seen.add(addr)
        if addr in db.blacklisted_addresses:
            hits.append(ThreatHit(HitKind.ADDRESS, addr, f"blacklisted address ({where})",
                                  RiskLabel.MALICIOUS, db.blacklisted_addresses[addr]))
        for tag in db.contract_tags.get(addr, ()):
            hits.append(ThreatHit(HitKind.TAG, addr, tag, None, "contract-tags"))

    nodes = list(trace.nodes())
    for node in nodes:
        check_address(node.caller, "call tree")
        check_address(node.callee, "call tree")
    if tx.recipient is not None:
        check_address(tx.recipient, "call tree")
    for node in nodes:
        for addr in _argument_addresses(node.input):
            check_address(addr, "call argument")

    if ui is not None and ui.main_domain and ui.main_domain in db.blacklisted_domains:
        hits.append(ThreatHit(HitKind.DOMAIN, ui.main_domain, "blacklisted domain",
                              RiskLabel.MALICIOUS, db.blacklisted_domains[ui.main_domain]))

    emitted: set[tuple] = set()
    for node in nodes:
        if node.call_kind in _BORROWED_CODE:
            continue  # same calldata as the proxy frame above it
        for pattern in db.selector_patterns:
            if pattern.matches(node.input):
                key = (node.callee, pattern.selector, pattern.calldata_regex)
                if key not in emitted:
                    emitted.add(key)
                    hits.append(ThreatHit(HitKind.PATTERN, f"{node.callee}:0x{pattern.selector.hex()}",
                                          pattern.label, pattern.severity, "patterns"))
    return hits
