from __future__ import annotations

import json
from fractions import Fraction

import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from conftest import CORPUS, TRACES
from keccak_oracle import eip1967, keccak256, selector
from txlens.errors import ConfigError, LoadError
from txlens.features import (
    DEFAULT_WEIGHTS,
    AssetKind,
    Evidence,
    StateChangeKind,
    analyze_storage_writes,
    assemble_feature_vector,
    detect_approvals,
    detect_token_transfers,
    extract_behavior,
    extract_call_chain,
    extract_gas_context,
    extract_ui_features,
    load_slot_hints,
    load_weight_config,
    registrable_domain,
)
from txlens.features.vector import normalize_weights
from txlens.ingest import load_trace_file
from txlens.model import (
    CallKind,
    CallNode,
    ExecutionTrace,
    LogEntry,
    PageScript,
    ScriptKind,
    StorageWrite,
    TxEnvelope,
)

USER = "0x" + "11" * 20
TOKEN = "0x" + "22" * 20
DEST = "0x" + "33" * 20
OTHER = "0x" + "44" * 20


def word(x) -> bytes:
    if isinstance(x, str):
        return bytes.fromhex(x[2:]).rjust(32, b"\x00")
    return x.to_bytes(32, "big")


def calldata(sig: str, *args) -> bytes:
    # hand-rolled static ABI encoding, independent of eth_abi
    return selector(sig) + b"".join(word(a) for a in args)


def transfer_log(token, src, dst, amount) -> LogEntry:
    return LogEntry(token, (keccak256(b"Transfer(address,address,uint256)"), word(src), word(dst)), word(amount))


def tx(**kw) -> TxEnvelope:
    base = dict(chain_id=1, sender=USER, recipient=TOKEN, value=0, calldata=b"", gas_limit=100_000,
                effective_gas_price=30, base_fee=10, nonce=1)
    base.update(kw)
    return TxEnvelope(**base)


def call(callee=TOKEN, data=b"", caller=USER, kind=CallKind.CALL, value=0, depth=0, children=(), reverted=False):
    return CallNode(kind, caller, callee, value=value, input=data, depth=depth, children=tuple(children),
                    reverted=reverted)


# call chain

def test_approval_phish_chain_has_two_rows_ending_in_approve():
    _, trace = load_trace_file(TRACES / "approval-phish.json")
    rows = extract_call_chain(trace)
    assert len(rows) == 2
    assert rows[1].selector == selector("approve(address,uint256)")
    assert rows[1].selector.hex() == "095ea7b3"
    assert rows[1].call_kind is CallKind.DELEGATECALL
    assert rows[0].function == "approve(address,uint256)"


def _count_raw(node: dict) -> int:
    return 1 + sum(_count_raw(c) for c in node["children"])


@pytest.mark.parametrize("path", sorted(TRACES.glob("*.json")), ids=lambda p: p.stem)
def test_chain_length_matches_raw_node_count(path):
    raw = json.loads(path.read_text())
    _, trace = load_trace_file(path)
    rows = extract_call_chain(trace)
    assert len(rows) == _count_raw(raw["trace"]["root"])
    assert rows[0].depth == 0


def test_chain_keeps_reverted_rows():
    inner = call(DEST, depth=1, reverted=True)
    rows = extract_call_chain(ExecutionTrace(call(children=[inner])))
    assert [r.reverted for r in rows] == [False, True]


# transfers

def test_native_transfer():
    trace = ExecutionTrace(call(DEST, value=5 * 10**17), gas_used=21_000)
    (t,) = detect_token_transfers(trace)
    assert (t.asset, t.sender, t.recipient, t.amount, t.evidence, t.token) == (
        AssetKind.NATIVE, USER, DEST, 5 * 10**17, Evidence.VALUE_FIELD, None)


def test_erc20_transfer_confirmed_by_log_is_reported_once():
    amount = 1000 * 10**6
    root = call(TOKEN, calldata("transfer(address,uint256)", DEST, amount))
    trace = ExecutionTrace(root, logs=(transfer_log(TOKEN, USER, DEST, amount),))
    (t,) = detect_token_transfers(trace)
    assert t.evidence is Evidence.BOTH
    assert (t.token, t.sender, t.recipient, t.amount) == (TOKEN, USER, DEST, amount)


def test_erc20_fixture_amount_matches_independently_decoded_log():
    raw = json.loads((TRACES / "erc20-transfer.json").read_text())
    (entry,) = raw["trace"]["logs"]
    assert entry["topics"][0] == "0x" + keccak256(b"Transfer(address,address,uint256)").hex()
    expected = int(entry["data"], 16)
    dst = "0x" + entry["topics"][2][-40:]
    _, trace = load_trace_file(TRACES / "erc20-transfer.json")
    (t,) = detect_token_transfers(trace)
    assert (t.amount, t.recipient, t.evidence) == (expected, dst, Evidence.BOTH)


def test_call_without_log_and_log_without_call():
    root = call(TOKEN, calldata("transfer(address,uint256)", DEST, 7))
    trace = ExecutionTrace(root, logs=(transfer_log(OTHER, USER, DEST, 9),))
    kinds = [(t.token, t.amount, t.evidence) for t in detect_token_transfers(trace)]
    assert kinds == [(TOKEN, 7, Evidence.SELECTOR_CALL), (OTHER, 9, Evidence.EVENT_LOG)]


def test_transfer_from_inside_claim_contract():
    inner = call(TOKEN, calldata("transferFrom(address,address,uint256)", USER, DEST, 42),
                 caller=OTHER, depth=1)
    trace = ExecutionTrace(call(OTHER, children=[inner]))
    (t,) = detect_token_transfers(trace)
    assert (t.sender, t.recipient, t.amount, t.token) == (USER, DEST, 42, TOKEN)


def test_reverted_subtree_moves_nothing():
    inner = call(DEST, value=10, caller=TOKEN, depth=2)
    mid = call(TOKEN, calldata("transfer(address,uint256)", DEST, 5), caller=OTHER, depth=1,
               children=[inner], reverted=True)
    trace = ExecutionTrace(call(OTHER, children=[mid]))
    assert detect_token_transfers(trace) == []


def test_delegatecall_with_same_input_not_double_counted():
    data = calldata("transfer(address,uint256)", DEST, 3)
    impl = call(OTHER, data, caller=TOKEN, kind=CallKind.DELEGATECALL, depth=1)
    trace = ExecutionTrace(call(TOKEN, data, children=[impl]))
    assert len(detect_token_transfers(trace)) == 1


def test_zero_amount_transfer_skipped():
    trace = ExecutionTrace(call(TOKEN, calldata("transfer(address,uint256)", DEST, 0)))
    assert detect_token_transfers(trace) == []


@given(st.lists(st.integers(min_value=0, max_value=10**24), min_size=1, max_size=8))
def test_native_transfer_count_equals_nonzero_value_calls(values):
    children = [call(DEST, caller=TOKEN, value=v, depth=1) for v in values]
    trace = ExecutionTrace(call(TOKEN, children=children))
    native = [t for t in detect_token_transfers(trace) if t.asset is AssetKind.NATIVE]
    assert len(native) == sum(1 for v in values if v > 0)
    assert sum(t.amount for t in native) == sum(values)


# approvals

def test_unlimited_approve_in_fixture():
    _, trace = load_trace_file(TRACES / "approval-phish.json")
    (a,) = detect_approvals(trace)
    assert a.amount == 2**256 - 1 and a.unlimited
    assert a.spender == "0x0000db5c8b030ae20308ac975898e09741e70000"


@pytest.mark.parametrize("amount,unlimited", [(1000, False), (2**128 - 1, False), (2**128, True)])
def test_approve_unlimited_threshold(amount, unlimited):
    trace = ExecutionTrace(call(TOKEN, calldata("approve(address,uint256)", DEST, amount)))
    (a,) = detect_approvals(trace)
    assert a.unlimited is unlimited


def test_set_approval_for_all():
    trace = ExecutionTrace(call(TOKEN, calldata("setApprovalForAll(address,bool)", DEST, 1)))
    (a,) = detect_approvals(trace)
    assert a.approved_all is True and a.unlimited and a.spender == DEST


# storage writes

def _write(slot, old=0, new=1, contract=TOKEN):
    return StorageWrite(contract, word(slot) if isinstance(slot, int) else slot, word(old), word(new))


def test_noop_write_dropped_and_plain_write_unclassified():
    trace = ExecutionTrace(call(), storage_writes=(_write(3, 5, 5), _write(4)))
    (f,) = analyze_storage_writes(trace)
    assert f.kind is StateChangeKind.UNCLASSIFIED_WRITE and f.slot == word(4)


def test_eip1967_slots_classified_via_oracle():
    writes = (
        _write(eip1967("eip1967.proxy.implementation"), new=int(OTHER, 16)),
        _write(eip1967("eip1967.proxy.admin"), new=int(DEST, 16)),
        _write(eip1967("eip1967.proxy.beacon")),
    )
    kinds = [f.kind for f in analyze_storage_writes(ExecutionTrace(call(), storage_writes=writes))]
    assert kinds == [StateChangeKind.PROXY_UPGRADE, StateChangeKind.OWNERSHIP_CHANGE, StateChangeKind.PROXY_UPGRADE]


def test_hint_overrides_classification():
    hints = {(TOKEN.upper().replace("0X", "0x"), "0x07"): StateChangeKind.BALANCE_WRITE}
    (f,) = analyze_storage_writes(ExecutionTrace(call(), storage_writes=(_write(7),)), hints)
    assert f.kind is StateChangeKind.BALANCE_WRITE


def test_slot_hint_file(tmp_path):
    hints = load_slot_hints(CORPUS / "hints" / "slot-hints.json")
    assert hints and set(hints.values()) == {StateChangeKind.BALANCE_WRITE}
    bad = tmp_path / "h.json"
    bad.write_text(json.dumps({"hints": [{"contract": TOKEN, "slot": "0x1", "kind": "PROXY_UPGRADE"}]}))
    with pytest.raises(LoadError):
        load_slot_hints(bad)


def test_behavior_bundle_for_proxy_upgrade_fixture():
    tx_, trace = load_trace_file(TRACES / "proxy-upgrade.json")
    b = extract_behavior(tx_, trace)
    assert [s.kind for s in b.state_changes] == [StateChangeKind.PROXY_UPGRADE]
    assert b.status == "SUCCESS" and b.top_level_selector == tx_.selector


# gas context

def test_gas_ratios_are_exact():
    g = extract_gas_context(tx(gas_limit=1_000_000, effective_gas_price=100, base_fee=20),
                            ExecutionTrace(call(), gas_used=21_000))
    assert g.unused_gas_ratio == Fraction(979, 1000)
    assert g.price_to_basefee_ratio == 5
    assert g.excessive_unused_flag and g.acceleration_flag and not g.rapid_sequence_flag


def test_gas_anomaly_fixture_flags():
    tx_, trace = load_trace_file(TRACES / "gas-anomaly.json")
    g = extract_gas_context(tx_, trace)
    assert g.unused_gas_ratio == Fraction(979, 1000) and g.excessive_unused_flag


def test_fully_used_gas_and_zero_base_fee():
    g = extract_gas_context(tx(gas_limit=21_000, base_fee=0), ExecutionTrace(call(), gas_used=21_000))
    assert g.unused_gas_ratio == 0 and not g.excessive_unused_flag
    assert g.price_to_basefee_ratio is None and not g.acceleration_flag
    assert any("base fee" in n for n in g.notes)


def test_thresholds_are_strict():
    g = extract_gas_context(tx(gas_limit=100, effective_gas_price=30, base_fee=10), ExecutionTrace(call(), gas_used=10))
    assert g.unused_gas_ratio == Fraction(9, 10) and not g.excessive_unused_flag
    assert g.price_to_basefee_ratio == 3 and not g.acceleration_flag


@pytest.mark.parametrize("history,flag", [
    ([(1, 0), (2, 30), (3, 60)], True),
    ([(1, 0), (2, 30), (3, 61)], False),
    ([100, 5, 110, 500], False),
    ([100, 5, 110, 120], True),
])
def test_rapid_sequence(history, flag):
    g = extract_gas_context(tx(), ExecutionTrace(call(), gas_used=21_000), history)
    assert g.rapid_sequence_flag is flag


def test_rapid_history_file():
    doc = json.loads((CORPUS / "history" / "rapid.json").read_text())
    from txlens.pipeline import load_history

    g = extract_gas_context(tx(), ExecutionTrace(call(), gas_used=21_000), load_history(CORPUS / "history" / "rapid.json"))
    assert doc and g.rapid_sequence_flag


@given(st.integers(1, 10**9), st.data())
def test_unused_ratio_monotone_in_gas_used(limit, data):
    a = data.draw(st.integers(0, limit))
    b = data.draw(st.integers(a, limit))
    ra = extract_gas_context(tx(gas_limit=limit), ExecutionTrace(call(), gas_used=a)).unused_gas_ratio
    rb = extract_gas_context(tx(gas_limit=limit), ExecutionTrace(call(), gas_used=b)).unused_gas_ratio
    assert 0 <= rb <= ra <= 1


# UI

def test_ui_absent():
    u = extract_ui_features(tx())
    assert not u.present and u.main_domain is None and u.signing_initiation_sites == ()


def test_signing_site_line_number():
    lines = [f"// line {i}" for i in range(1, 12)] + ["await eth.request({method: 'eth_sendTransaction'})"]
    u = extract_ui_features(tx(page_scripts=(PageScript(ScriptKind("inline"), "\n".join(lines)),)))
    (s,) = u.signing_initiation_sites
    assert (s.script_index, s.line, s.api_name) == (0, 12, "eth_sendTransaction")


def test_fixture_ui_features():
    tx_, _ = load_trace_file(TRACES / "approval-phish.json")
    u = extract_ui_features(tx_)
    assert u.main_domain == "drainer-example.io"
    assert [c.pattern for c in u.calldata_construction_sites] == ["encodeFunctionData"]
    assert [(s.line, s.api_name) for s in u.signing_initiation_sites] == [(5, "eth_sendTransaction")]


@pytest.mark.parametrize("url,domain", [
    ("https://app.example-defi.com/swap?x=1", "example-defi.com"),
    ("https://a.b.example.co.uk/", "example.co.uk"),
    ("http://127.0.0.1:8080/x", "127.0.0.1"),
    ("localhost", "localhost"),
])
def test_registrable_domain(url, domain):
    assert registrable_domain(url) == domain


# weights

def test_default_weights():
    w = normalize_weights(None, ui_present=True)
    assert w == {"behavior": Fraction(2, 5), "context": Fraction(1, 5), "ui": Fraction(1, 4), "database": Fraction(3, 20)}


def test_ui_absent_redistributes_proportionally():
    w = normalize_weights(None, ui_present=False)
    assert w == {"behavior": Fraction(8, 15), "context": Fraction(4, 15), "ui": 0, "database": Fraction(1, 5)}


def test_feature_vector_uses_ui_presence():
    tx_, trace = load_trace_file(TRACES / "benign-transfer.json")
    b = extract_behavior(tx_, trace)
    fv = assemble_feature_vector(b, extract_gas_context(tx_, trace), extract_ui_features(tx_), [])
    assert fv.weights["ui"] == 0
    assert fv.weights["behavior"] == pytest.approx(8 / 15)


def test_custom_weights_echoed(tmp_path):
    p = tmp_path / "w.json"
    p.write_text(json.dumps({"behavior": 0.1, "context": 0.2, "ui": 0.3, "database": 0.4}))
    w = normalize_weights(load_weight_config(p))
    assert w == {"behavior": Fraction(1, 10), "context": Fraction(1, 5), "ui": Fraction(3, 10), "database": Fraction(2, 5)}
    assert load_weight_config(CORPUS / "weights" / "default.json") == DEFAULT_WEIGHTS


@pytest.mark.parametrize("cfg", [
    {"behavior": 0, "context": 0, "ui": 0, "database": 0},
    {"behavior": -1, "context": 1, "ui": 0.5, "database": 0.5},
    {"behavior": 1, "context": 0, "ui": 0},
    {"behavior": 1, "context": 0, "ui": 0, "database": 0, "extra": 1},
    {"behavior": "x", "context": 0, "ui": 0, "database": 0},
    {"behavior": True, "context": 0, "ui": 0, "database": 0},
])
def test_bad_weight_configs(cfg):
    with pytest.raises(ConfigError):
        normalize_weights(cfg)


def test_all_weight_on_missing_ui_rejected():
    with pytest.raises(ConfigError):
        normalize_weights({"behavior": 0, "context": 0, "ui": 1, "database": 0}, ui_present=False)


weights4 = st.fixed_dictionaries({d: st.fractions(min_value=0, max_value=100) for d in ("behavior", "context", "ui", "database")})


@given(weights4, st.booleans())
def test_normalized_weights_sum_to_one(cfg, ui_present):
    rest = sum(v for k, v in cfg.items() if k != "ui" or ui_present)
    assume(rest > 0)
    w = normalize_weights(cfg, ui_present)
    assert sum(w.values()) == 1
    assert all(v >= 0 for v in w.values())
    if not ui_present:
        assert w["ui"] == 0
    # proportions between the remaining dimensions are preserved
    for a in ("behavior", "context", "database"):
        for b in ("behavior", "context", "database"):
            assert w[a] * cfg[b] == w[b] * cfg[a]
