"""Low-level EVM helpers: hex normalization, selectors, well-known constants."""
from __future__ import annotations

import re

from eth_utils import function_signature_to_4byte_selector, keccak

WORD = 32
ZERO_ADDRESS = "0x" + "00" * 20

_HEX_RE = re.compile(r"^(0x)?([0-9a-fA-F]*)$")
_ADDRESS_RE = re.compile(r"^(0x)?[0-9a-fA-F]{40}$")


def normalize_address(value: str) -> str:
    """Return ``value`` as lowercase ``0x``-prefixed hex; checksummed input is accepted."""
    if not isinstance(value, str) or not _ADDRESS_RE.match(value):
        raise ValueError(f"not a 20-byte hex address: {value!r}")
    return "0x" + value[-40:].lower()


def hex_to_bytes(value: str) -> bytes:
    if not isinstance(value, str):
        raise ValueError(f"expected hex string, got {type(value).__name__}")
    m = _HEX_RE.match(value)
    if m is None:
        raise ValueError(f"not a hex string: {value!r}")
    digits = m.group(2)
    if len(digits) % 2:
        digits = "0" + digits
    return bytes.fromhex(digits)


def to_word(value: bytes | str | int) -> bytes:
    """Zero-left-pad a slot/value to the 32-byte EVM word."""
    if isinstance(value, int):
        if value < 0 or value >= 1 << 256:
            raise ValueError(f"word out of range: {value}")
        return value.to_bytes(WORD, "big")
    raw = hex_to_bytes(value) if isinstance(value, str) else bytes(value)
    if len(raw) > WORD:
        raise ValueError(f"word wider than 32 bytes: {len(raw)}")
    return raw.rjust(WORD, b"\x00")


def word_hex(word: bytes) -> str:
    return "0x" + word.hex()


def selector_for(signature: str) -> bytes:
    """4-byte function selector of a canonical signature like ``transfer(address,uint256)``."""
    return function_signature_to_4byte_selector(signature)


def event_topic(signature: str) -> bytes:
    return keccak(text=signature)


def eip1967_slot(label: str) -> bytes:
    return ((int.from_bytes(keccak(text=label), "big") - 1) % (1 << 256)).to_bytes(WORD, "big")


TRANSFER = bytes.fromhex("a9059cbb")
TRANSFER_FROM = bytes.fromhex("23b872dd")
APPROVE = bytes.fromhex("095ea7b3")
SET_APPROVAL_FOR_ALL = bytes.fromhex("a22cb465")

TRANSFER_TOPIC = bytes.fromhex("ddf252ad1be2c89b69c2b068fc378daa952ba7f163c4a11628f55a4df523b3ef")
APPROVAL_TOPIC = bytes.fromhex("8c5be1e5ebec7d5bd14f71427d1e84f3dd0314c0f7b2291e5b200ac8c7c3b925")

EIP1967_IMPLEMENTATION_SLOT = bytes.fromhex(
    "360894a13ba1a3210667c828492db98dca3e2076cc3735a920a3ca505d382bbc"
)
EIP1967_ADMIN_SLOT = bytes.fromhex(
    "b53127684a568b3173ae13b9f8a6016e243e63b6e8ee1178d6a717850b5d6103"
)
EIP1967_BEACON_SLOT = bytes.fromhex(
    "a3f0ad74e5423aebfd80d3ef4346578335a9a72aeaee59ff6cb3582b35133d50"
)

KNOWN_SELECTORS = {
    TRANSFER: "transfer(address,uint256)",
    TRANSFER_FROM: "transferFrom(address,address,uint256)",
    APPROVE: "approve(address,uint256)",
    SET_APPROVAL_FOR_ALL: "setApprovalForAll(address,bool)",
    bytes.fromhex("3659cfe6"): "upgradeTo(address)",
    bytes.fromhex("4f1ef286"): "upgradeToAndCall(address,bytes)",
    bytes.fromhex("f2fde38b"): "transferOwnership(address)",
    bytes.fromhex("2f2ff15d"): "grantRole(bytes32,address)",
    bytes.fromhex("d505accf"): "permit(address,address,uint256,uint256,uint8,bytes32,bytes32)",
    bytes.fromhex("6a761202"): (
        "execTransaction(address,uint256,bytes,uint8,uint256,uint256,uint256,address,address,bytes)"
    ),
}

MAX_UINT256 = (1 << 256) - 1
