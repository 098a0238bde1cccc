"""Contextual features from gas accounting and sender history."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

from ..model import ExecutionTrace, TxEnvelope


@dataclass(frozen=True)
class GasThresholds:
    """Flag thresholds. Exceeding (strictly) a ratio sets its flag."""

    unused_gas_ratio: Fraction = Fraction(9, 10)
    price_to_basefee_ratio: Fraction = Fraction(3)
    rapid_tx_count: int = 3
    rapid_window_seconds: int = 60


@dataclass(frozen=True)
class GasContextFindings:
    unused_gas_ratio: Fraction
    excessive_unused_flag: bool
    # None when the base fee is zero (pre-London chains, some L2s)
    price_to_basefee_ratio: Optional[Fraction]
    acceleration_flag: bool
    rapid_sequence_flag: bool
    gas_limit: int = 0
    gas_used: int = 0
    notes: tuple[str, ...] = field(default=())


def _rapid_sequence(history: Sequence, count: int, window: int) -> bool:
    """True when some ``window``-second span holds at least ``count`` transactions."""
    times = sorted(int(item[1]) if isinstance(item, (tuple, list)) else int(item) for item in history)
    lo = 0
    for hi, t in enumerate(times):
        while t - times[lo] > window:
            lo += 1
        if hi - lo + 1 >= count:
            return True
    return False


def extract_gas_context(
    tx: TxEnvelope,
    trace: ExecutionTrace,
    recent_nonce_timestamps: Optional[Sequence] = None,
    thresholds: GasThresholds = GasThresholds(),
) -> GasContextFindings:
    """Exact ratios for unused gas and fee premium, plus the rapid-sequence flag.

    ``recent_nonce_timestamps`` holds the sender's recent transactions as
    ``(nonce, unix_seconds)`` pairs (bare timestamps are accepted too).
    """
    if tx.gas_limit <= 0:
        raise ValueError("gas_limit must be positive")
    notes = []
    unused = Fraction(tx.gas_limit - trace.gas_used, tx.gas_limit)
    if tx.base_fee == 0:
        ratio = None
        notes.append("base fee is zero; fee premium not computed")
    else:
        ratio = Fraction(tx.effective_gas_price, tx.base_fee)
    rapid = False
    if recent_nonce_timestamps:
        rapid = _rapid_sequence(recent_nonce_timestamps, thresholds.rapid_tx_count, thresholds.rapid_window_seconds)
    return GasContextFindings(
        unused_gas_ratio=unused,
        excessive_unused_flag=unused > thresholds.unused_gas_ratio,
        price_to_basefee_ratio=ratio,
        acceleration_flag=ratio is not None and ratio > thresholds.price_to_basefee_ratio,
        rapid_sequence_flag=rapid,
        gas_limit=tx.gas_limit,
        gas_used=trace.gas_used,
        notes=tuple(notes),
    )
