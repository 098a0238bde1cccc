"""Convert external simulator output into the normalized trace document.

Two families are understood:

* geth-style JSON-RPC captures (anvil, reth, geth): ``callTracer`` frames,
  optional ``prestateTracer`` diff, receipt and block header.
* Tenderly simulation API responses.

Both return a plain normalized *document* (dict); parsing and validation
happen afterwards in :mod:`txlens.ingest.normalized`.
"""
from __future__ import annotations

from typing import Any, Iterable, Optional

from ..errors import AdapterError
from ..evm import WORD, hex_to_bytes, normalize_address, to_word, word_hex
from .normalized import SCHEMA_VERSION

_CALL_KINDS = {
    "CALL": "CALL",
    "CALLCODE": "CALL",
    "SELFDESTRUCT": "CALL",
    "DELEGATECALL": "DELEGATECALL",
    "STATICCALL": "STATICCALL",
    "CREATE": "CREATE",
    "CREATE2": "CREATE",
}


def as_int(value: Any, default: Optional[int] = None) -> int:
    """Accept JSON ints, ``0x`` hex strings and decimal strings."""
    if value is None:
        if default is None:
            raise AdapterError("missing numeric field")
        return default
    if isinstance(value, bool):
        raise AdapterError(f"boolean where a number was expected: {value!r}")
    if isinstance(value, int):
        return value
    if isinstance(value, str):
        text = value.strip()
        try:
            if text.lower().startswith("0x"):
                return int(text, 16) if len(text) > 2 else 0
            return int(text)
        except ValueError:
            pass
    raise AdapterError(f"not a number: {value!r}")


def _hex(value: Any) -> str:
    if value in (None, ""):
        return "0x"
    try:
        return "0x" + hex_to_bytes(value).hex()
    except ValueError as exc:
        raise AdapterError(str(exc)) from None


def _addr(value: Any) -> str:
    try:
        return normalize_address(value)
    except ValueError as exc:
        raise AdapterError(str(exc)) from None


def _kind(raw: Any) -> str:
    kind = _CALL_KINDS.get(str(raw).upper())
    if kind is None:
        raise AdapterError(f"unknown call type {raw!r}")
    return kind


def _frame(frame: dict, *, kind_key: str, used_key: str, calls_key: str = "calls") -> dict:
    if not isinstance(frame, dict):
        raise AdapterError("call frame is not an object")
    kind = _kind(frame.get(kind_key))
    value = 0 if kind in ("STATICCALL", "DELEGATECALL") else as_int(frame.get("value"), 0)
    children = frame.get(calls_key) or []
    return {
        "call_kind": kind,
        "caller": _addr(frame.get("from")),
        "callee": _addr(frame.get("to")),
        "value": str(value),
        "input": _hex(frame.get("input")),
        "output": _hex(frame.get("output")),
        "gas_used": as_int(frame.get(used_key), 0),
        "reverted": bool(frame.get("error")),
        "children": [_frame(c, kind_key=kind_key, used_key=used_key, calls_key=calls_key) for c in children],
    }


def _frame_logs(frame: dict, parent_reverted: bool = False) -> Iterable[dict]:
    # logs of reverted frames were rolled back
    reverted = parent_reverted or bool(frame.get("error"))
    if not reverted:
        yield from frame.get("logs") or []
    for child in frame.get("calls") or []:
        yield from _frame_logs(child, reverted)


def _log(entry: dict) -> dict:
    try:
        return {
            "emitter": _addr(entry["address"]),
            "topics": [word_hex(to_word(t)) for t in entry.get("topics") or []],
            "data": _hex(entry.get("data")),
        }
    except (KeyError, ValueError) as exc:
        raise AdapterError(f"bad log entry: {exc}") from None


def _storage_writes_from_prestate(diff: Optional[dict]) -> list[dict]:
    if not diff:
        return []
    if "pre" not in diff or "post" not in diff:
        raise AdapterError("prestate diff must have 'pre' and 'post'")
    pre, post = diff["pre"] or {}, diff["post"] or {}
    writes = []
    for addr in sorted(set(pre) | set(post), key=str.lower):
        before = {word_hex(to_word(k)): to_word(v) for k, v in ((pre.get(addr) or {}).get("storage") or {}).items()}
        after = {word_hex(to_word(k)): to_word(v) for k, v in ((post.get(addr) or {}).get("storage") or {}).items()}
        for slot in sorted(set(before) | set(after)):
            # diff mode omits slots cleared to zero from "post"
            old = before.get(slot, bytes(WORD))
            new = after.get(slot, bytes(WORD))
            writes.append({"contract": _addr(addr), "slot": slot, "old": word_hex(old), "new": word_hex(new)})
    return writes


def _ui_fields(bundle: dict) -> dict:
    return {"origin_url": bundle.get("origin_url"), "page_scripts": bundle.get("page_scripts")}


def normalize_geth_bundle(bundle: dict) -> dict:
    """Normalize a recorded geth-style capture.

    Expected keys: ``transaction`` (eth_getTransactionByHash result or the
    call object for debug_traceCall), ``call_trace`` (callTracer result,
    ideally with ``withLog``), and optionally ``receipt``, ``block``
    (header with ``baseFeePerGas``), ``state_diff`` (prestateTracer,
    ``diffMode``), ``chain_id``, ``origin_url``, ``page_scripts``.
    """
    if not isinstance(bundle, dict) or "transaction" not in bundle or "call_trace" not in bundle:
        raise AdapterError("geth bundle needs 'transaction' and 'call_trace'")
    tx = bundle["transaction"]
    receipt = bundle.get("receipt")
    block = bundle.get("block") or {}
    root = _frame(bundle["call_trace"], kind_key="type", used_key="gasUsed")

    if receipt:
        gas_used = as_int(receipt.get("gasUsed"))
        status = "SUCCESS" if as_int(receipt.get("status"), 1) == 1 else "REVERT"
        logs = [_log(e) for e in receipt.get("logs") or []]
        price = as_int(receipt.get("effectiveGasPrice", tx.get("gasPrice")), 0)
    else:
        gas_used = root["gas_used"]
        status = "REVERT" if root["reverted"] else "SUCCESS"
        logs = [_log(e) for e in _frame_logs(bundle["call_trace"])]
        price = as_int(tx.get("gasPrice", tx.get("maxFeePerGas")), 0)

    to = tx.get("to")
    return {
        "schema_version": SCHEMA_VERSION,
        "tx": {
            "chain_id": as_int(tx.get("chainId", bundle.get("chain_id")), 1),
            "from": _addr(tx.get("from")),
            "to": _addr(to) if to else None,
            "value": str(as_int(tx.get("value"), 0)),
            "calldata": _hex(tx.get("input", tx.get("data"))),
            "gas_limit": as_int(tx.get("gas")),
            "effective_gas_price": str(price),
            "base_fee": str(as_int(block.get("baseFeePerGas"), 0)),
            "nonce": as_int(tx.get("nonce"), 0),
            **_ui_fields(bundle),
        },
        "trace": {
            "status": status,
            "gas_used": gas_used,
            "root": root,
            "storage_writes": _storage_writes_from_prestate(bundle.get("state_diff")),
            "logs": logs,
        },
        "code_snippets": {},
    }


def normalize_tenderly(response: dict, extra: Optional[dict] = None) -> dict:
    """Normalize a Tenderly ``/simulate`` response body.

    Only the fields below are consumed; everything else is ignored:
    ``transaction.{from,to,input,value,gas,gas_price,nonce,network_id,
    status,gas_used}`` and ``transaction.transaction_info.{call_trace,
    state_diff,logs}``.
    """
    extra = extra or {}
    try:
        tx = response["transaction"]
        info = tx["transaction_info"]
        call_trace = info["call_trace"]
    except (KeyError, TypeError):
        raise AdapterError("not a Tenderly simulation response") from None

    root = _frame(call_trace, kind_key="call_type", used_key="gas_used")
    writes = []
    for diff in info.get("state_diff") or []:
        for raw in diff.get("raw") or []:
            writes.append({
                "contract": _addr(raw.get("address") or diff.get("address")),
                "slot": word_hex(to_word(raw["key"])),
                "old": word_hex(to_word(raw.get("original") or "0x")),
                "new": word_hex(to_word(raw.get("dirty") or "0x")),
            })
    logs = [_log(entry.get("raw") or {}) for entry in info.get("logs") or []]
    header = (response.get("simulation") or {}).get("block_header") or {}
    base_fee = header.get("baseFeePerGas", header.get("base_fee_per_gas", tx.get("base_fee")))
    to = tx.get("to")
    return {
        "schema_version": SCHEMA_VERSION,
        "tx": {
            "chain_id": as_int(tx.get("network_id"), 1),
            "from": _addr(tx.get("from")),
            "to": _addr(to) if to else None,
            "value": str(as_int(tx.get("value"), 0)),
            "calldata": _hex(tx.get("input")),
            "gas_limit": as_int(tx.get("gas")),
            "effective_gas_price": str(as_int(tx.get("gas_price"), 0)),
            "base_fee": str(as_int(base_fee, 0)),
            "nonce": as_int(tx.get("nonce"), 0),
            **_ui_fields(extra),
        },
        "trace": {
            "status": "SUCCESS" if tx.get("status", True) else "REVERT",
            "gas_used": as_int(tx.get("gas_used"), root["gas_used"]),
            "root": root,
            "storage_writes": writes,
            "logs": logs,
        },
        "code_snippets": {},
    }
