"""Frontend features: signing/calldata sites in page scripts and the page's main domain.

The scan is token based, not a JavaScript parser.
"""
from __future__ import annotations

import ipaddress
import re
from dataclasses import dataclass, field
from typing import Optional
from urllib.parse import urlsplit

from publicsuffix2 import get_sld

from ..model import TxEnvelope

SIGNING_APIS = ("eth_sendTransaction", "eth_signTypedData", "personal_sign", "sendTransaction(")

_CALLDATA_PATTERNS = (
    ("encodeFunctionData", re.compile(r"\bencodeFunctionData\b")),
    ("data-hex-literal", re.compile(r"""\bdata\s*:\s*[`'"]0x[0-9a-fA-F]*""")),
    ("hex-concatenation", re.compile(r"""[`'"]0x[0-9a-fA-F]*[`'"]\s*\+|\+\s*[`'"][0-9a-fA-F]{8,}""")),
    ("selector-literal", re.compile(r"""[`'"]0x[0-9a-fA-F]{8}[`'"]""")),
)

SNIPPET_CHARS = 160
_MINIFIED_LINE = 2000


@dataclass(frozen=True)
class CalldataSite:
    script_index: int
    line: int
    snippet: str
    pattern: str = ""


@dataclass(frozen=True)
class SigningSite:
    script_index: int
    line: int
    api_name: str


@dataclass(frozen=True)
class UIFindings:
    present: bool = False
    main_domain: Optional[str] = None
    origin_url: Optional[str] = None
    calldata_construction_sites: tuple[CalldataSite, ...] = ()
    signing_initiation_sites: tuple[SigningSite, ...] = ()
    notes: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if not self.present and (
            self.main_domain or self.origin_url or self.calldata_construction_sites
            or self.signing_initiation_sites or self.notes
        ):
            raise ValueError("absent UI findings must be empty")


def registrable_domain(url_or_host: str) -> Optional[str]:
    """Public-suffix-aware main domain; IP hosts are returned as-is."""
    text = url_or_host.strip()
    host = urlsplit(text if "://" in text else f"//{text}").hostname
    if not host:
        return None
    host = host.rstrip(".").lower()
    try:
        ipaddress.ip_address(host)
        return host
    except ValueError:
        pass
    labels = host.split(".")
    if len(labels) < 2:
        return host
    sld = get_sld(host)
    return sld or ".".join(labels[-2:])


def _snippet(line: str, start: int) -> str:
    lo = max(0, start - SNIPPET_CHARS // 2)
    return line[lo:lo + SNIPPET_CHARS].strip()


def extract_ui_features(tx: TxEnvelope) -> UIFindings:
    if tx.origin_url is None and not tx.page_scripts:
        return UIFindings()
    notes = []
    domain = None
    if tx.origin_url is not None:
        domain = registrable_domain(tx.origin_url)
        if domain is None:
            notes.append(f"could not extract a domain from {tx.origin_url!r}")
    calldata_sites, signing_sites = [], []
    for idx, script in enumerate(tx.page_scripts or ()):
        label = script.url or f"inline #{idx}"
        if not script.content.strip():
            notes.append(f"script {idx} ({label}) has no content")
            continue
        for lineno, line in enumerate(script.content.splitlines(), start=1):
            if len(line) > _MINIFIED_LINE:
                notes.append(f"script {idx} line {lineno} is {len(line)} chars (minified?)")
            for api in SIGNING_APIS:
                if api in line:
                    signing_sites.append(SigningSite(idx, lineno, api.rstrip("(")))
            for name, pattern in _CALLDATA_PATTERNS:
                m = pattern.search(line)
                if m:
                    calldata_sites.append(CalldataSite(idx, lineno, _snippet(line, m.start()), name))
                    break
    return UIFindings(
        present=True,
        main_domain=domain,
        origin_url=tx.origin_url,
        calldata_construction_sites=tuple(calldata_sites),
        signing_initiation_sites=tuple(signing_sites),
        notes=tuple(notes),
    )
