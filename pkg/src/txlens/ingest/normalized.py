"""Parse and serialize the normalized trace document (schema_version 1).

Wei amounts are decimal strings since 256-bit values overflow JSON numbers.
"""
from __future__ import annotations

import json
from typing import Any, Optional

from ..errors import SchemaError, ValidationError
from ..evm import hex_to_bytes, normalize_address, to_word, word_hex
from ..model import (
    CallKind,
    CallNode,
    CodeSnippet,
    ExecutionTrace,
    LogEntry,
    PageScript,
    ScriptKind,
    StorageWrite,
    TraceStatus,
    TxEnvelope,
    validate_trace,
)

SCHEMA_VERSION = 1

_MISSING = object()


def _get(obj: dict, key: str, path: str, default: Any = _MISSING) -> Any:
    if not isinstance(obj, dict):
        raise SchemaError(path, "expected an object")
    if key not in obj:
        if default is _MISSING:
            raise SchemaError(f"{path}.{key}", "missing")
        return default
    return obj[key]


def _int(obj: dict, key: str, path: str) -> int:
    value = _get(obj, key, path)
    if isinstance(value, bool) or not isinstance(value, int) or value < 0:
        raise SchemaError(f"{path}.{key}", "expected a non-negative integer")
    return value


def _wei(obj: dict, key: str, path: str) -> int:
    value = _get(obj, key, path)
    if not isinstance(value, str) or not value.isdigit():
        raise SchemaError(f"{path}.{key}", "expected a decimal string")
    return int(value)


def _address(obj: dict, key: str, path: str, nullable: bool = False) -> Optional[str]:
    value = _get(obj, key, path)
    if value is None and nullable:
        return None
    try:
        return normalize_address(value)
    except ValueError as exc:
        raise SchemaError(f"{path}.{key}", str(exc)) from None


def _bytes(obj: dict, key: str, path: str) -> bytes:
    value = _get(obj, key, path)
    try:
        return hex_to_bytes(value)
    except ValueError as exc:
        raise SchemaError(f"{path}.{key}", str(exc)) from None


def _word(obj: dict, key: str, path: str) -> bytes:
    value = _get(obj, key, path)
    try:
        return to_word(value)
    except ValueError as exc:
        raise SchemaError(f"{path}.{key}", str(exc)) from None


def _opt_str(obj: dict, key: str, path: str) -> Optional[str]:
    value = _get(obj, key, path, None)
    if value is not None and not isinstance(value, str):
        raise SchemaError(f"{path}.{key}", "expected a string or null")
    return value


def _list(obj: dict, key: str, path: str, nullable: bool = False) -> Optional[list]:
    value = _get(obj, key, path, None if nullable else _MISSING)
    if value is None and nullable:
        return None
    if not isinstance(value, list):
        raise SchemaError(f"{path}.{key}", "expected an array")
    return value


def _enum(enum_cls, obj: dict, key: str, path: str):
    value = _get(obj, key, path)
    try:
        return enum_cls(value)
    except ValueError:
        raise SchemaError(f"{path}.{key}", f"unknown value {value!r}") from None


def _parse_tx(obj: dict) -> TxEnvelope:
    p = "$.tx"
    scripts_raw = _list(obj, "page_scripts", p, nullable=True)
    scripts = None
    if scripts_raw is not None:
        scripts = []
        for i, s in enumerate(scripts_raw):
            sp = f"{p}.page_scripts[{i}]"
            content = _get(s, "content", sp)
            if not isinstance(content, str):
                raise SchemaError(f"{sp}.content", "expected a string")
            scripts.append(PageScript(_enum(ScriptKind, s, "source_kind", sp), content, _opt_str(s, "url", sp)))
    chain_id = _int(obj, "chain_id", p)
    return TxEnvelope(
        chain_id=chain_id,
        sender=_address(obj, "from", p),
        recipient=_address(obj, "to", p, nullable=True),
        value=_wei(obj, "value", p),
        calldata=_bytes(obj, "calldata", p),
        gas_limit=_int(obj, "gas_limit", p),
        effective_gas_price=_wei(obj, "effective_gas_price", p),
        base_fee=_wei(obj, "base_fee", p),
        nonce=_int(obj, "nonce", p),
        origin_url=_opt_str(obj, "origin_url", p),
        page_scripts=tuple(scripts) if scripts is not None else None,
    )


def _parse_call(obj: dict, path: str, depth: int) -> CallNode:
    reverted = _get(obj, "reverted", path)
    if not isinstance(reverted, bool):
        raise SchemaError(f"{path}.reverted", "expected a boolean")
    children = [
        _parse_call(child, f"{path}.children[{i}]", depth + 1)
        for i, child in enumerate(_list(obj, "children", path))
    ]
    return CallNode(
        call_kind=_enum(CallKind, obj, "call_kind", path),
        caller=_address(obj, "caller", path),
        callee=_address(obj, "callee", path),
        value=_wei(obj, "value", path),
        input=_bytes(obj, "input", path),
        output=_bytes(obj, "output", path),
        gas_used=_int(obj, "gas_used", path),
        depth=depth,
        children=tuple(children),
        reverted=reverted,
    )


def _parse_trace(obj: dict, snippets: dict) -> ExecutionTrace:
    p = "$.trace"
    writes = []
    for i, w in enumerate(_list(obj, "storage_writes", p)):
        wp = f"{p}.storage_writes[{i}]"
        writes.append(StorageWrite(_address(w, "contract", wp), _word(w, "slot", wp), _word(w, "old", wp), _word(w, "new", wp)))
    logs = []
    for i, entry in enumerate(_list(obj, "logs", p)):
        lp = f"{p}.logs[{i}]"
        topics_raw = _list(entry, "topics", lp)
        topics = []
        for j, t in enumerate(topics_raw):
            try:
                topics.append(to_word(t))
            except ValueError as exc:
                raise SchemaError(f"{lp}.topics[{j}]", str(exc)) from None
        if len(topics) > 4:
            raise SchemaError(f"{lp}.topics", "at most 4 topics")
        logs.append(LogEntry(_address(entry, "emitter", lp), tuple(topics), _bytes(entry, "data", lp)))
    return ExecutionTrace(
        root=_parse_call(_get(obj, "root", p), f"{p}.root", 0),
        storage_writes=tuple(writes),
        logs=tuple(logs),
        gas_used=_int(obj, "gas_used", p),
        status=_enum(TraceStatus, obj, "status", p),
        code_snippets=snippets,
    )


def _parse_snippets(obj: Any) -> dict[str, CodeSnippet]:
    if obj is None:
        return {}
    if not isinstance(obj, dict):
        raise SchemaError("$.code_snippets", "expected an object")
    out = {}
    for addr, entry in obj.items():
        sp = f"$.code_snippets[{addr!r}]"
        try:
            key = normalize_address(addr)
        except ValueError as exc:
            raise SchemaError(sp, str(exc)) from None
        out[key] = CodeSnippet(_opt_str(entry, "verified_source", sp), _opt_str(entry, "decompiled", sp))
    return out


def load_document(document: bytes | str) -> dict:
    if isinstance(document, bytes):
        try:
            document = document.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise SchemaError("$", f"not UTF-8: {exc}") from None
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise SchemaError("$", f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise SchemaError("$", "expected an object")
    return doc


def parse_document(doc: dict) -> tuple[TxEnvelope, ExecutionTrace]:
    version = _get(doc, "schema_version", "$")
    if version != SCHEMA_VERSION:
        raise SchemaError("$.schema_version", f"unsupported version {version!r}")
    tx = _parse_tx(_get(doc, "tx", "$"))
    trace = _parse_trace(_get(doc, "trace", "$"), _parse_snippets(doc.get("code_snippets")))
    violations = validate_trace(trace, tx)
    if violations:
        raise ValidationError(violations)
    return tx, trace


def parse_normalized_trace(document: bytes | str) -> tuple[TxEnvelope, ExecutionTrace]:
    """Parse a normalized trace document into a validated (envelope, trace) pair.

    Raises SchemaError naming the JSON path of the first bad field, or
    ValidationError carrying every invariant violation.
    """
    return parse_document(load_document(document))


def _call_to_dict(node: CallNode) -> dict:
    return {
        "call_kind": node.call_kind.value,
        "caller": node.caller,
        "callee": node.callee,
        "value": str(node.value),
        "input": "0x" + node.input.hex(),
        "output": "0x" + node.output.hex(),
        "gas_used": node.gas_used,
        "reverted": node.reverted,
        "children": [_call_to_dict(c) for c in node.children],
    }


def to_document(tx: TxEnvelope, trace: ExecutionTrace) -> dict:
    scripts = None
    if tx.page_scripts is not None:
        scripts = [
            {"source_kind": s.source_kind.value, "content": s.content, "url": s.url}
            for s in tx.page_scripts
        ]
    return {
        "schema_version": SCHEMA_VERSION,
        "tx": {
            "chain_id": tx.chain_id,
            "from": tx.sender,
            "to": tx.recipient,
            "value": str(tx.value),
            "calldata": "0x" + tx.calldata.hex(),
            "gas_limit": tx.gas_limit,
            "effective_gas_price": str(tx.effective_gas_price),
            "base_fee": str(tx.base_fee),
            "nonce": tx.nonce,
            "origin_url": tx.origin_url,
            "page_scripts": scripts,
        },
        "trace": {
            "status": trace.status.value,
            "gas_used": trace.gas_used,
            "root": _call_to_dict(trace.root),
            "storage_writes": [
                {"contract": w.contract, "slot": word_hex(w.slot), "old": word_hex(w.old_value), "new": word_hex(w.new_value)}
                for w in trace.storage_writes
            ],
            "logs": [
                {"emitter": log.emitter, "topics": [word_hex(t) for t in log.topics], "data": "0x" + log.data.hex()}
                for log in trace.logs
            ],
        },
        "code_snippets": {
            addr: {"verified_source": s.verified_source, "decompiled": s.decompiled}
            for addr, s in trace.code_snippets.items()
        },
    }


def serialize_normalized_trace(tx: TxEnvelope, trace: ExecutionTrace) -> str:
    return json.dumps(to_document(tx, trace), indent=2) + "\n"
