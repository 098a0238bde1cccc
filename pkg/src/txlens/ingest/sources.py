"""Trace sources: recorded fixtures, local/remote simulators, chain nodes.

Nothing here ever submits a transaction; live sources are only asked to
trace or simulate.
"""
from __future__ import annotations

import enum
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union
from urllib.parse import urlparse

import httpx
from eth_abi import encode

from ..errors import AdapterError, TransportError
from ..evm import ZERO_ADDRESS, hex_to_bytes, normalize_address, selector_for
from ..model import ExecutionTrace, TxEnvelope
from .adapters import normalize_geth_bundle, normalize_tenderly
from .normalized import load_document, parse_document

log = logging.getLogger(__name__)

TX_HASH_RE = re.compile(r"^0x[0-9a-fA-F]{64}$")


class SourceKind(str, enum.Enum):
    FIXTURE_FILE = "FIXTURE_FILE"
    LOCAL_SIMULATOR = "LOCAL_SIMULATOR"
    REMOTE_SIMULATOR = "REMOTE_SIMULATOR"
    CHAIN_EXPLORER = "CHAIN_EXPLORER"


def _is_url(text: str) -> bool:
    parsed = urlparse(text)
    return parsed.scheme in ("http", "https") and bool(parsed.netloc)


@dataclass(frozen=True)
class TraceSource:
    kind: SourceKind
    locator: str
    credentials: Optional[str] = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", SourceKind(self.kind))
        if self.kind in (SourceKind.REMOTE_SIMULATOR, SourceKind.CHAIN_EXPLORER) and not _is_url(self.locator):
            raise ValueError(f"{self.kind.value} requires a URL locator, got {self.locator!r}")

    @property
    def is_live(self) -> bool:
        return _is_url(self.locator)


@dataclass(frozen=True)
class CallSpec:
    """A contract call to simulate (Simulation mode)."""

    to: str
    signature: str
    args: tuple[str, ...] = ()
    sender: str = ZERO_ADDRESS
    value: int = 0
    gas: int = 3_000_000

    def __post_init__(self):
        object.__setattr__(self, "to", normalize_address(self.to))
        object.__setattr__(self, "sender", normalize_address(self.sender))
        object.__setattr__(self, "args", tuple(self.args))

    def calldata(self) -> bytes:
        types = signature_types(self.signature)
        if len(types) != len(self.args):
            raise ValueError(f"{self.signature} takes {len(types)} argument(s), got {len(self.args)}")
        values = [_coerce_arg(t, a) for t, a in zip(types, self.args)]
        return selector_for(canonical_signature(self.signature)) + encode(types, values)


def signature_types(signature: str) -> list[str]:
    m = re.fullmatch(r"\s*(\w+)\s*\((.*)\)\s*", signature)
    if m is None:
        raise ValueError(f"malformed function signature {signature!r}")
    inner = m.group(2).strip()
    if "(" in inner:
        raise ValueError("tuple arguments are not supported")
    # tolerate named params: "transfer(address to, uint256 amount)"
    types = [part.split()[0] for part in inner.split(",")] if inner else []
    # selectors hash the canonical spelling, so the uint/int aliases must be widened
    return [re.sub(r"^(u?int)(?=$|\[)", r"\g<1>256", t) for t in types]


def canonical_signature(signature: str) -> str:
    name = signature.strip().split("(", 1)[0].strip()
    return f"{name}({','.join(signature_types(signature))})"


def _coerce_arg(abi_type: str, raw: str):
    if abi_type.endswith("]"):
        raise ValueError(f"array argument {abi_type} is not supported")
    if abi_type == "address":
        return normalize_address(raw)
    if abi_type == "bool":
        if raw.lower() not in ("true", "false", "1", "0"):
            raise ValueError(f"not a bool: {raw!r}")
        return raw.lower() in ("true", "1")
    if abi_type.startswith(("uint", "int")):
        return int(raw, 0)
    if abi_type.startswith("bytes"):
        return hex_to_bytes(raw)
    if abi_type == "string":
        return raw
    raise ValueError(f"unsupported argument type {abi_type}")


TxReference = Union[str, CallSpec]


class JsonRpcClient:
    def __init__(self, url: str, client: Optional[httpx.Client] = None, timeout: float = 30.0):
        self.url = url
        self._client = client or httpx.Client(timeout=timeout)
        self._next_id = 0

    def call(self, method: str, *params):
        self._next_id += 1
        body = {"jsonrpc": "2.0", "id": self._next_id, "method": method, "params": list(params)}
        try:
            resp = self._client.post(self.url, json=body)
            resp.raise_for_status()
            payload = resp.json()
        except (httpx.HTTPError, json.JSONDecodeError) as exc:
            raise TransportError(f"{method}: {exc}") from exc
        if payload.get("error"):
            raise TransportError(f"{method}: {payload['error']}")
        return payload.get("result")


_CALL_TRACER = {"tracer": "callTracer", "tracerConfig": {"withLog": True}}
_PRESTATE_DIFF = {"tracer": "prestateTracer", "tracerConfig": {"diffMode": True}}


def _rpc_historical(rpc: JsonRpcClient, tx_hash: str) -> dict:
    tx = rpc.call("eth_getTransactionByHash", tx_hash)
    if tx is None:
        raise TransportError(f"transaction {tx_hash} not found")
    receipt = rpc.call("eth_getTransactionReceipt", tx_hash)
    block = rpc.call("eth_getBlockByNumber", tx["blockNumber"], False) if tx.get("blockNumber") else None
    return {
        "transaction": tx,
        "receipt": receipt,
        "block": block,
        "call_trace": rpc.call("debug_traceTransaction", tx_hash, _CALL_TRACER),
        "state_diff": _optional_prestate(rpc, "debug_traceTransaction", tx_hash),
    }


def _optional_prestate(rpc: JsonRpcClient, method: str, *args):
    try:
        return rpc.call(method, *args, _PRESTATE_DIFF)
    except TransportError as exc:
        log.warning("storage diff unavailable, continuing without storage writes: %s", exc)
        return None


def _rpc_simulate(rpc: JsonRpcClient, spec: CallSpec) -> dict:
    call = {
        "from": spec.sender,
        "to": spec.to,
        "data": "0x" + spec.calldata().hex(),
        "value": hex(spec.value),
        "gas": hex(spec.gas),
    }
    block = rpc.call("eth_getBlockByNumber", "latest", False)
    call_with_meta = dict(
        call,
        input=call["data"],
        gasPrice=rpc.call("eth_gasPrice"),
        nonce=rpc.call("eth_getTransactionCount", spec.sender, "latest"),
        chainId=rpc.call("eth_chainId"),
    )
    return {
        "transaction": call_with_meta,
        "block": block,
        "call_trace": rpc.call("debug_traceCall", call, "latest", _CALL_TRACER),
        "state_diff": _optional_prestate(rpc, "debug_traceCall", call, "latest"),
    }


def _tenderly_simulate(source: TraceSource, spec: CallSpec, client: Optional[httpx.Client], chain_id: int) -> dict:
    body = {
        "network_id": str(chain_id),
        "from": spec.sender,
        "to": spec.to,
        "input": "0x" + spec.calldata().hex(),
        "gas": spec.gas,
        "value": str(spec.value),
        "save": False,
        "simulation_type": "full",
    }
    headers = {"X-Access-Key": source.credentials} if source.credentials else {}
    http = client or httpx.Client(timeout=60.0)
    try:
        resp = http.post(source.locator, json=body, headers=headers)
        resp.raise_for_status()
        return resp.json()
    except (httpx.HTTPError, json.JSONDecodeError) as exc:
        raise TransportError(f"simulation request failed: {exc}") from exc


def normalize_recorded(payload: dict, fmt: str) -> dict:
    """Turn a recorded external-tool payload into a normalized document."""
    try:
        if fmt == "normalized":
            return payload
        if fmt == "geth":
            return normalize_geth_bundle(payload)
        if fmt == "tenderly":
            return normalize_tenderly(payload)
    except AdapterError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise AdapterError(f"cannot convert {fmt} output: {exc}") from exc
    raise AdapterError(f"unknown trace format {fmt!r}")


def load_trace_file(path: str | Path, fmt: str = "normalized") -> tuple[TxEnvelope, ExecutionTrace]:
    payload = load_document(Path(path).read_bytes())
    return parse_document(normalize_recorded(payload, fmt))


def fetch_trace(
    source: TraceSource,
    tx_reference: TxReference,
    *,
    client: Optional[httpx.Client] = None,
    chain_id: int = 1,
) -> tuple[TxEnvelope, ExecutionTrace]:
    """Produce a validated (envelope, trace) pair from ``source``.

    ``tx_reference`` is a 32-byte transaction hash (Historical mode) or a
    :class:`CallSpec` (Simulation mode). File-backed sources ignore it and
    never touch the network.
    """
    if isinstance(tx_reference, str) and source.is_live:
        check_tx_hash(tx_reference)
    if source.kind is SourceKind.CHAIN_EXPLORER and not isinstance(tx_reference, str):
        raise ValueError("the chain explorer source only replays historical transactions")

    if source.kind is SourceKind.FIXTURE_FILE:
        return load_trace_file(source.locator)

    if source.kind is SourceKind.LOCAL_SIMULATOR and not source.is_live:
        return load_trace_file(source.locator, "geth")

    if source.kind is SourceKind.REMOTE_SIMULATOR:
        if not isinstance(tx_reference, CallSpec):
            raise ValueError("the remote simulator needs a call description, not a transaction hash")
        payload = _tenderly_simulate(source, tx_reference, client, chain_id)
        return parse_document(normalize_recorded(payload, "tenderly"))

    rpc = JsonRpcClient(source.locator, client)
    if isinstance(tx_reference, CallSpec):
        bundle = _rpc_simulate(rpc, tx_reference)
    else:
        bundle = _rpc_historical(rpc, tx_reference)
    return parse_document(normalize_recorded(bundle, "geth"))


def check_tx_hash(value: str) -> str:
    if not TX_HASH_RE.match(value):
        raise ValueError(f"expected a 32-byte transaction hash, got {value!r}")
    return value.lower()

