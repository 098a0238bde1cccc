"""Best-effort code enrichment for contracts seen in a trace.

Verified source from a block explorer is preferred; a decompiler is the
fallback. Failures never abort analysis, they only leave the address
without an entry.
"""
from __future__ import annotations

import logging
import shlex
import subprocess
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import Optional, Protocol

import httpx

from ..model import CodeSnippet, ExecutionTrace

log = logging.getLogger(__name__)


class SourceClient(Protocol):
    def verified_source(self, address: str) -> Optional[str]: ...


class Decompiler(Protocol):
    def decompile(self, address: str) -> Optional[str]: ...


class EtherscanClient:
    """``getsourcecode`` against an Etherscan-compatible API."""

    def __init__(self, api_url: str, api_key: Optional[str] = None, chain_id: Optional[int] = None,
                 client: Optional[httpx.Client] = None):
        self.api_url = api_url
        self.api_key = api_key
        self.chain_id = chain_id
        self._client = client or httpx.Client(timeout=20.0)

    def verified_source(self, address: str) -> Optional[str]:
        params = {"module": "contract", "action": "getsourcecode", "address": address}
        if self.api_key:
            params["apikey"] = self.api_key
        if self.chain_id is not None:
            params["chainid"] = str(self.chain_id)
        resp = self._client.get(self.api_url, params=params)
        resp.raise_for_status()
        result = resp.json().get("result")
        if not isinstance(result, list) or not result:
            return None
        source = result[0].get("SourceCode") or ""
        return source or None


class CommandDecompiler:
    """Runs an external decompiler, e.g. ``heimdall decompile {address} --rpc-url ...``.

    ``{address}`` in the command template is substituted; stdout is the result.
    """

    def __init__(self, command: str, timeout: float = 120.0):
        self.command = command
        self.timeout = timeout

    def decompile(self, address: str) -> Optional[str]:
        argv = [part.replace("{address}", address) for part in shlex.split(self.command)]
        proc = subprocess.run(argv, capture_output=True, text=True, timeout=self.timeout, check=False)
        if proc.returncode != 0:
            raise RuntimeError(proc.stderr.strip() or f"exit status {proc.returncode}")
        return proc.stdout or None


def _lookup(address: str, explorer: Optional[SourceClient], decompiler: Optional[Decompiler]) -> Optional[CodeSnippet]:
    if explorer is not None:
        try:
            source = explorer.verified_source(address)
        except Exception as exc:  # any client failure is non-fatal
            log.warning("explorer lookup failed for %s: %s", address, exc)
            source = None
        if source:
            return CodeSnippet(verified_source=source)
    if decompiler is not None:
        try:
            text = decompiler.decompile(address)
        except Exception as exc:
            log.warning("decompiler failed for %s: %s", address, exc)
            text = None
        if text:
            return CodeSnippet(decompiled=text)
    log.warning("no code available for %s", address)
    return None


def enrich_code_snippets(
    trace: ExecutionTrace,
    explorer: Optional[SourceClient] = None,
    decompiler: Optional[Decompiler] = None,
    max_workers: int = 4,
) -> ExecutionTrace:
    """Return a copy of ``trace`` with code for every callee lacking an entry."""
    missing = [addr for addr in trace.callees() if addr not in trace.code_snippets]
    if not missing or (explorer is None and decompiler is None):
        return trace
    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as pool:
        found = list(pool.map(lambda a: _lookup(a, explorer, decompiler), missing))
    snippets = dict(trace.code_snippets)
    for addr, snippet in zip(missing, found):
        if snippet is not None:
            snippets[addr] = snippet
    return replace(trace, code_snippets=snippets)
