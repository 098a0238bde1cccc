from .behavior import (
    ApprovalFinding,
    AssetKind,
    BehaviorFeatures,
    CallRow,
    Evidence,
    StateChangeFinding,
    StateChangeKind,
    TokenTransfer,
    analyze_storage_writes,
    detect_approvals,
    detect_token_transfers,
    extract_behavior,
    extract_call_chain,
    load_slot_hints,
)
from .gas import GasContextFindings, GasThresholds, extract_gas_context
from .ui import UIFindings, extract_ui_features, registrable_domain
from .vector import DEFAULT_WEIGHTS, DIMENSIONS, FeatureVector, assemble_feature_vector, load_weight_config

__all__ = [
    "ApprovalFinding",
    "AssetKind",
    "BehaviorFeatures",
    "CallRow",
    "DEFAULT_WEIGHTS",
    "DIMENSIONS",
    "Evidence",
    "FeatureVector",
    "GasContextFindings",
    "GasThresholds",
    "StateChangeFinding",
    "StateChangeKind",
    "TokenTransfer",
    "UIFindings",
    "analyze_storage_writes",
    "assemble_feature_vector",
    "detect_approvals",
    "detect_token_transfers",
    "extract_behavior",
    "extract_call_chain",
    "extract_gas_context",
    "extract_ui_features",
    "load_slot_hints",
    "load_weight_config",
    "registrable_domain",
]
