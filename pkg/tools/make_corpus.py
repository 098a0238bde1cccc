#!/usr/bin/env python3
"""Regenerate corpus/ (trace fixtures, threat DB, scripted models, eval set).

Output is deterministic; run from the repository root:

    python3 tools/make_corpus.py
"""
from __future__ import annotations

import json
import shutil
from pathlib import Path

from eth_abi import encode

from txlens.evm import (
    APPROVAL_TOPIC,
    EIP1967_ADMIN_SLOT,
    EIP1967_IMPLEMENTATION_SLOT,
    MAX_UINT256,
    TRANSFER_TOPIC,
    event_topic,
    selector_for,
    to_word,
    word_hex,
)
from txlens.ingest import load_trace_file, serialize_normalized_trace
from txlens.model import CallNode, ExecutionTrace, LogEntry, PageScript, ScriptKind, StorageWrite, TxEnvelope

ROOT = Path(__file__).resolve().parent.parent / "corpus"
GWEI = 10**9
ETH = 10**18

USER = "0x7a16ff8270133f063aab6c9977183d9e72835428"
DRAINER = "0x0000db5c8b030ae20308ac975898e09741e70000"
SCAM_WALLET = "0x9d3e6c5f0b1a2d4c8e7f60a1b2c3d4e5f6a7b8c9"
USDC = "0xa0b86991c6218b36c1d19d4a2e9eb0ce3606eb48"
USDC_IMPL = "0x43506849d7c04f9138d1a2050bbf3a0c054402dd"
DAI = "0x6b175474e89094c44da98b954eedeac495271d0f"
NFT = "0xbc4ca0eda7647a8ab7c2061c2e118a18a936f13d"
MERCHANT = "0x3f5ce5fbfe3e9af3971dd833d26ba9b5c936f0be"
FRIEND = "0x8ba1f109551bd432803012645ac136ddd64dba72"
PROXY = "0x5e3ef299fddf15eaa0432e6e66473ace8c13d908"
EVIL_IMPL = "0xbadc0dedeadbeef0000000000000000000000001"
FRESH = "0x4e83362442b8d1bec281594cea3050c8eb01311c"
CLAIM = "0xc1a1000000000000000000000000000000c1a100"

SIG_APPROVE = "approve(address,uint256)"
SIG_TRANSFER = "transfer(address,uint256)"
SIG_TRANSFER_FROM = "transferFrom(address,address,uint256)"
SIG_SET_ALL = "setApprovalForAll(address,bool)"
SIG_UPGRADE = "upgradeTo(address)"
SIG_CHANGE_ADMIN = "changeAdmin(address)"
SIG_CLAIM = "claimRewards()"


def calldata(sig: str, types: list[str], args: list) -> bytes:
    return selector_for(sig) + encode(types, args)


def word_int(n: int) -> bytes:
    return n.to_bytes(32, "big")


def addr_topic(addr: str) -> bytes:
    return to_word(addr)


def transfer_log(token: str, src: str, dst: str, amount: int) -> LogEntry:
    return LogEntry(token, (TRANSFER_TOPIC, addr_topic(src), addr_topic(dst)), word_int(amount))


def approval_log(token: str, owner: str, spender: str, amount: int) -> LogEntry:
    return LogEntry(token, (APPROVAL_TOPIC, addr_topic(owner), addr_topic(spender)), word_int(amount))


def phishing_page(url: str) -> tuple[str, tuple[PageScript, ...]]:
    script = "\n".join([
        "async function claim() {",
        "  const provider = window.ethereum;",
        "  const iface = new ethers.Interface(ABI);",
        "  const data = iface.encodeFunctionData('approve', [SPENDER, MAX]);",
        "  await provider.request({ method: 'eth_sendTransaction', params: [{ to: TOKEN, data }] });",
        "}",
    ])
    return url, (PageScript(ScriptKind.INLINE, script),
                 PageScript(ScriptKind.EXTERNAL, "/* bundled wallet connector */", url.rstrip("/") + "/connect.js"))


def tx(to, data=b"", *, value=0, gas_limit=100_000, price=25 * GWEI, base=20 * GWEI, nonce=42,
       origin=None, scripts=None, sender=USER) -> TxEnvelope:
    return TxEnvelope(1, sender, to, value, data, gas_limit, price, base, nonce, origin, scripts)


def call(kind, caller, callee, data=b"", *, value=0, gas=30_000, depth=0, children=(), reverted=False,
         output=b"") -> CallNode:
    return CallNode(kind, caller, callee, value, data, output, gas, depth, tuple(children), reverted)


# ---------------------------------------------------------------- fixtures

def approval_phish(spender=DRAINER, amount=MAX_UINT256, token=USDC, origin="https://app.drainer-example.io/claim"):
    data = calldata(SIG_APPROVE, ["address", "uint256"], [spender, amount])
    url, scripts = phishing_page(origin) if origin else (None, None)
    envelope = tx(token, data, gas_limit=60_000, origin=url, scripts=scripts)
    # USDC is a proxy: the approve runs in its implementation via DELEGATECALL
    children = [call("DELEGATECALL", token, USDC_IMPL, data, gas=38_000, depth=1, output=word_int(1))] \
        if token == USDC else []
    root = call("CALL", USER, token, data, gas=46_000, output=word_int(1), children=children)
    return envelope, ExecutionTrace(root, logs=(approval_log(token, USER, spender, amount),), gas_used=46_000)


def benign_eth_transfer(to=FRIEND, value=ETH // 2):
    envelope = tx(to, value=value, gas_limit=21_000)
    return envelope, ExecutionTrace(call("CALL", USER, to, value=value, gas=21_000), gas_used=21_000)


def erc20_transfer(to=MERCHANT, amount=1_000 * 10**6, token=USDC, origin="https://app.uniswap.org/"):
    data = calldata(SIG_TRANSFER, ["address", "uint256"], [to, amount])
    scripts = (PageScript(ScriptKind.INLINE, "const tx = await signer.sendTransaction(req);"),)
    envelope = tx(token, data, gas_limit=65_000, origin=origin, scripts=scripts if origin else None)
    root = call("CALL", USER, token, data, gas=51_000, output=word_int(1))
    return envelope, ExecutionTrace(root, logs=(transfer_log(token, USER, to, amount),), gas_used=51_000)


def proxy_upgrade(impl=EVIL_IMPL):
    data = calldata(SIG_UPGRADE, ["address"], [impl])
    envelope = tx(PROXY, data, gas_limit=80_000, nonce=7)
    write = StorageWrite(PROXY, EIP1967_IMPLEMENTATION_SLOT, to_word("0x" + "11" * 20), to_word(impl))
    upgraded = LogEntry(PROXY, (event_topic("Upgraded(address)"), addr_topic(impl)), b"")
    return envelope, ExecutionTrace(call("CALL", USER, PROXY, data, gas=38_000), (write,), (upgraded,), 38_000)


def admin_change(new_admin=SCAM_WALLET):
    data = calldata(SIG_CHANGE_ADMIN, ["address"], [new_admin])
    envelope = tx(PROXY, data, gas_limit=70_000, nonce=8)
    write = StorageWrite(PROXY, EIP1967_ADMIN_SLOT, to_word(USER), to_word(new_admin))
    return envelope, ExecutionTrace(call("CALL", USER, PROXY, data, gas=33_000), (write,), (), 33_000)


def gas_anomaly(to=FRESH, value=ETH // 10):
    envelope = tx(to, value=value, gas_limit=1_000_000, price=100 * GWEI, base=20 * GWEI)
    return envelope, ExecutionTrace(call("CALL", USER, to, value=value, gas=21_000), gas_used=21_000)


def nft_set_all(operator=SCAM_WALLET):
    data = calldata(SIG_SET_ALL, ["address", "bool"], [operator, True])
    envelope = tx(NFT, data, gas_limit=60_000)
    return envelope, ExecutionTrace(call("CALL", USER, NFT, data, gas=46_500), gas_used=46_500)


def claim_drain():
    """A 'claim' contract that pulls previously approved tokens to the drainer."""
    amount = 25_000 * 10**18
    inner = calldata(SIG_TRANSFER_FROM, ["address", "address", "uint256"], [USER, DRAINER, amount])
    outer = selector_for(SIG_CLAIM)
    child = call("CALL", CLAIM, DAI, inner, gas=35_000, depth=1, output=word_int(1))
    root = call("CALL", USER, CLAIM, outer, gas=61_000, children=[child])
    envelope = tx(CLAIM, outer, gas_limit=120_000)
    return envelope, ExecutionTrace(root, logs=(transfer_log(DAI, USER, DRAINER, amount),), gas_used=61_000)


def lookalike_eth_claim():
    """ETH sent to a fresh address from a page not on any list: nothing stands out."""
    url = "https://uniswap-airdrop.net/claim"
    script = "await window.ethereum.request({ method: 'eth_sendTransaction', params: [{ to: VAULT, value: FEE }] });"
    envelope = tx(FRESH, value=ETH // 20, gas_limit=21_000, origin=url,
                  scripts=(PageScript(ScriptKind.INLINE, script),))
    return envelope, ExecutionTrace(call("CALL", USER, FRESH, value=ETH // 20, gas=21_000), gas_used=21_000)


MAIN_FIXTURES = {
    "approval-phish": approval_phish,
    "benign-transfer": benign_eth_transfer,
    "erc20-transfer": erc20_transfer,
    "proxy-upgrade": proxy_upgrade,
    "gas-anomaly": gas_anomaly,
}

EVAL_CASES = [
    ("phish-01-unlimited-approve-drainer", "PHISHING", approval_phish),
    ("phish-02-unlimited-approve-unknown", "PHISHING", lambda: approval_phish(spender=FRESH, token=DAI, origin=None)),
    ("phish-03-nft-set-approval-for-all", "PHISHING", nft_set_all),
    ("phish-04-erc20-to-listed-wallet", "PHISHING", lambda: erc20_transfer(to=SCAM_WALLET, origin=None)),
    ("phish-05-eth-to-listed-wallet", "PHISHING", lambda: benign_eth_transfer(to=DRAINER)),
    ("phish-06-proxy-upgrade", "PHISHING", proxy_upgrade),
    ("phish-07-proxy-admin-change", "PHISHING", admin_change),
    ("phish-08-approve-from-listed-domain", "PHISHING",
     lambda: approval_phish(spender=FRESH, amount=5_000 * 10**6, origin="https://drainer-example.io/")),
    ("phish-09-limited-approve-drainer", "PHISHING", lambda: approval_phish(amount=900 * 10**6, origin=None)),
    ("phish-10-gas-anomaly", "PHISHING", gas_anomaly),
    ("phish-11-claim-drains-dai", "PHISHING", claim_drain),
    ("phish-12-lookalike-eth-claim", "PHISHING", lookalike_eth_claim),
    ("benign-01-eth-to-friend", "BENIGN", benign_eth_transfer),
    ("benign-02-usdc-to-merchant", "BENIGN", erc20_transfer),
]


# ---------------------------------------------------------------- recorded captures

def geth_bundle() -> dict:
    """What an anvil fork returns for the erc20-transfer fixture (hex-encoded numbers)."""
    envelope, trace = erc20_transfer(origin=None)
    data = "0x" + envelope.calldata.hex()
    log = trace.logs[0]
    return {
        "chain_id": 1,
        "transaction": {
            "from": USER, "to": USDC, "input": data, "value": "0x0", "gas": hex(envelope.gas_limit),
            "gasPrice": hex(envelope.effective_gas_price), "nonce": hex(envelope.nonce), "chainId": "0x1",
        },
        "receipt": {
            "status": "0x1", "gasUsed": hex(trace.gas_used), "effectiveGasPrice": hex(envelope.effective_gas_price),
            "logs": [{"address": USDC, "topics": [word_hex(t) for t in log.topics], "data": "0x" + log.data.hex()}],
        },
        "block": {"number": "0x1312d00", "baseFeePerGas": hex(envelope.base_fee)},
        "call_trace": {
            "type": "CALL", "from": USER, "to": USDC, "value": "0x0", "gas": hex(envelope.gas_limit),
            "gasUsed": hex(trace.gas_used), "input": data, "output": "0x" + "00" * 31 + "01",
        },
        "state_diff": {
            "pre": {USDC: {"storage": {
                "0x" + "a1" * 32: "0x" + (5_000 * 10**6).to_bytes(32, "big").hex(),
                "0x" + "b2" * 32: "0x0",
            }}},
            "post": {USDC: {"storage": {
                "0x" + "a1" * 32: "0x" + (4_000 * 10**6).to_bytes(32, "big").hex(),
                "0x" + "b2" * 32: "0x" + (1_000 * 10**6).to_bytes(32, "big").hex(),
            }}},
        },
    }


def tenderly_response() -> dict:
    """Tenderly /simulate body for an unlimited approval to the drainer (trimmed to consumed fields)."""
    data = calldata(SIG_APPROVE, ["address", "uint256"], [DRAINER, MAX_UINT256])
    allowance_slot = "0x" + "c3" * 32
    return {
        "simulation": {"id": "sim-0001", "block_header": {"number": "0x1312d00", "baseFeePerGas": hex(20 * GWEI)}},
        "transaction": {
            "from": USER, "to": USDC, "input": "0x" + data.hex(), "value": "0", "gas": 60000,
            "gas_price": str(25 * GWEI), "nonce": 42, "network_id": "1", "status": True, "gas_used": 46000,
            "transaction_info": {
                "call_trace": {
                    "call_type": "CALL", "from": USER, "to": USDC, "value": "0", "gas": 60000, "gas_used": 46000,
                    "input": "0x" + data.hex(), "output": "0x" + "00" * 31 + "01", "calls": None,
                },
                "state_diff": [{
                    "address": USDC,
                    "raw": [{"address": USDC, "key": allowance_slot, "original": "0x" + "00" * 32,
                             "dirty": "0x" + "ff" * 32}],
                }],
                "logs": [{"name": "Approval", "raw": {
                    "address": USDC,
                    "topics": [word_hex(APPROVAL_TOPIC), word_hex(addr_topic(USER)), word_hex(addr_topic(DRAINER))],
                    "data": "0x" + "ff" * 32,
                }}],
            },
        },
    }


# ---------------------------------------------------------------- threat DB, hints, weights

def db_files() -> dict[str, str]:
    drainer_hex = DRAINER[2:]
    return {
        "addresses.txt": "\n".join([
            "# address<TAB>source",
            f"{DRAINER}\tcommunity-drainer-list",
            f"{SCAM_WALLET.upper().replace('0X', '0x')}\tscam-report-feed",
        ]) + "\n",
        "domains.txt": "# domain<TAB>source\ndrainer-example.io\tphishing-domain-feed\n",
        "tags.json": json.dumps({
            DRAINER: ["drainer", "Inferno-style"],
            USDC: ["stablecoin"],
        }, indent=2) + "\n",
        "patterns.json": json.dumps([
            {
                "selector": "0x095ea7b3",
                "calldata_regex": f"^095ea7b3000000000000000000000000{drainer_hex}",
                "label": "approval to known drainer spender",
                "severity": "malicious",
            },
            {
                "selector": "0xa22cb465",
                "calldata_regex": None,
                "label": "blanket NFT operator approval",
                "severity": "suspicious",
            },
        ], indent=2) + "\n",
    }


# ---------------------------------------------------------------- scripted models

def reply(risk, confidence, justification, summary, importance, recommendations=()):
    keys = ("behavior", "context", "ui", "database")
    return {
        "risk": risk, "confidence": confidence, "justification": justification, "summary": summary,
        "importance": dict(zip(keys, importance)), "recommendations": list(recommendations),
    }


REJECT = ["Reject this transaction in your wallet.", "Revoke any allowance already granted to the spender."]


def model_script(model_id: str, persona: int) -> dict:
    """Rules keyed on prompt evidence. ``persona`` varies confidence and disagreement patterns."""
    conf = [0.95, 0.9, 0.85][persona]
    summaries = [
        {"kind": "summarize", "contains": "agree the transaction is malicious", "reply": reply(
            "malicious", conf, "The analysts agree: the transaction hands control of user assets to a hostile party.",
            "Do not sign: this transaction gives an attacker control over your assets.",
            (0.5, 0.1, 0.15, 0.25), REJECT)},
        {"kind": "summarize", "contains": "agree the transaction is suspicious", "reply": reply(
            "suspicious", conf, "The analysts agree the transaction has risky traits that need verification.",
            "Be careful: verify the recipient and the page before signing.",
            (0.4, 0.3, 0.15, 0.15), ["Verify the destination address out of band."])},
        {"kind": "summarize", "contains": "agree the transaction is safe", "reply": reply(
            "safe", conf, "The analysts agree the transaction does what it appears to do.",
            "Looks fine: a plain transfer with no risk indicators.",
            (0.5, 0.2, 0.15, 0.15), [])},
    ]
    db_hit = reply("malicious", conf, "Threat intelligence lists a participant of this transaction.",
                   "A listed address, domain or calldata pattern is involved.", (0.3, 0.05, 0.15, 0.5), REJECT)
    unlimited = reply("malicious", conf - 0.05, "The call grants an unbounded token allowance to a third party.",
                      "Unbounded allowance to an unknown spender.", (0.6, 0.1, 0.1, 0.2), REJECT)
    operator = reply("malicious", conf - 0.05, "The call gives an operator control over every token in the collection.",
                     "Blanket operator approval.", (0.6, 0.1, 0.1, 0.2), REJECT)
    # persona 0 starts unsure on proxy takeovers and comes round after one reflection
    upgrade_mal = reply("malicious", conf, "A proxy implementation or admin slot is rewritten to an unknown contract.",
                        "Proxy takeover.", (0.7, 0.1, 0.05, 0.15),
                        REJECT[:1] + ["Check the new implementation with the project team."])
    upgrade_sus = reply("suspicious", 0.6, "A proxy slot changes; this can be a legitimate maintenance upgrade.",
                        "Proxy change needs review.", (0.6, 0.2, 0.05, 0.15), ["Confirm the upgrade with the project."])
    upgrade = [upgrade_sus, upgrade_mal] if persona == 0 else [upgrade_mal]
    # never converges: SAFE 0.9, MALICIOUS 0.8, MALICIOUS 0.7
    gas = [
        reply("safe", 0.9, "A plain value transfer; an oversized gas limit alone is not harmful.",
              "Overpaid gas, otherwise ordinary.", (0.3, 0.5, 0.1, 0.1), []),
        reply("malicious", 0.8, "Gas limit and fee premium far above need match scripted drainer front-ends.",
              "Anomalous gas settings.", (0.2, 0.6, 0.1, 0.1), REJECT[:1]),
        reply("malicious", 0.7, "Fee premium and unused gas suggest an automated, rushed submission.",
              "Anomalous gas settings.", (0.2, 0.6, 0.1, 0.1), REJECT[:1]),
    ][persona]
    safe = reply("safe", conf, "Ordinary transfer with no threat-intelligence match and normal gas settings.",
                 "Looks fine.", (0.5, 0.2, 0.15, 0.15), [])
    return {
        "id": model_id,
        "rules": summaries + [
            {"regex": r"\n- (ADDRESS|DOMAIN|PATTERN) ", "replies": [db_hit]},
            {"contains": " UNLIMITED", "replies": [unlimited]},
            {"contains": "approved=True", "replies": [operator]},
            {"regex": r"- (PROXY_UPGRADE|OWNERSHIP_CHANGE):", "replies": upgrade},
            {"contains": "FLAG: excessive unused gas", "replies": [gas]},
        ],
        "default": [safe],
    }


def write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def dump(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def main() -> None:
    if ROOT.exists():
        shutil.rmtree(ROOT)
    for name, make in MAIN_FIXTURES.items():
        write(ROOT / "traces" / f"{name}.json", serialize_normalized_trace(*make()))

    write(ROOT / "recorded" / "erc20-transfer.geth.json", dump(geth_bundle()))
    write(ROOT / "recorded" / "approval.tenderly.json", dump(tenderly_response()))
    # goldens are produced by the adapters and reviewed by hand
    write(ROOT / "recorded" / "erc20-transfer.golden.json",
          serialize_normalized_trace(*load_trace_file(ROOT / "recorded" / "erc20-transfer.geth.json", "geth")))
    write(ROOT / "recorded" / "approval.golden.json",
          serialize_normalized_trace(*load_trace_file(ROOT / "recorded" / "approval.tenderly.json", "tenderly")))

    for name, text in db_files().items():
        write(ROOT / "db" / name, text)
    write(ROOT / "hints" / "slot-hints.json", dump({"hints": [
        {"contract": USDC, "slot": "0x" + "a1" * 32, "kind": "BALANCE_WRITE"},
        {"contract": USDC, "slot": "0x" + "b2" * 32, "kind": "BALANCE_WRITE"},
    ]}))
    write(ROOT / "weights" / "default.json", dump({"behavior": 0.4, "context": 0.2, "ui": 0.25, "database": 0.15}))
    write(ROOT / "history" / "rapid.json", dump([[39, 1_700_000_000], [40, 1_700_000_020], [41, 1_700_000_041]]))

    for i, model_id in enumerate(("analyst-a", "analyst-b", "analyst-c")):
        write(ROOT / "models" / f"{model_id}.json", dump(model_script(model_id, i)))

    manifest = []
    for name, truth, make in EVAL_CASES:
        write(ROOT / "eval" / f"{name}.json", serialize_normalized_trace(*make()))
        manifest.append({"fixture": f"{name}.json", "ground_truth": truth})
    write(ROOT / "eval" / "manifest.json", dump(manifest))


if __name__ == "__main__":
    main()
