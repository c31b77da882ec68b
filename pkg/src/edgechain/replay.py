"""Rebuild contract state by re-executing every transaction on a chain."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Any

from .contracts import Authority, CodeId, ContractCall, ContractEngine, ContractError
from .hashing import canonical
from .ledger import Block, TxKind, validate_chain


@dataclass
class ReplayResult:
    engine: ContractEngine
    chain_ok: bool
    first_bad_height: int | None
    transactions: int = 0
    mismatches: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.chain_ok and not self.mismatches

    def snapshot(self) -> dict[str, Any]:
        return self.engine.snapshot()

    def summary(self) -> dict[str, Any]:
        """Registry, balance and credit overview of the rebuilt state."""
        records = []
        reg = self.engine.active.get(CodeId.REGISTRATION)
        if reg is not None:
            storage = self.engine.account(reg).storage
            records = [storage[k] for k in sorted(storage) if k.startswith("dev:")]
        credits = [r.credit for r in records]
        devices = [r.account_address for r in records]
        return {
            "chain_ok": self.chain_ok,
            "first_bad_height": self.first_bad_height,
            "transactions": self.transactions,
            "mismatches": len(self.mismatches),
            "devices": len(records),
            "legacy_devices": sum(r.legacy for r in records),
            "blocked_devices": sum(r.is_blocked for r in records),
            "mean_credit": sum(credits) / len(credits) if credits else None,
            "device_coins_cents": sum(self.engine.balances.get(a, 0) for a in devices),
            "revenue_cents": self.engine.balances.get(self.engine.edge, 0),
            "total_coins_cents": self.engine.total_coins(),
        }


def _proxy_of(blocks: list[Block]) -> str | None:
    for b in blocks:
        for tx in b.txs:
            if tx.kind is TxKind.DEPLOY and tx.payload["code_id"] == CodeId.REGISTRATION.value:
                return tx.payload["params"].get("proxy")
    return None


def replay_blocks(blocks: list[Block], block_cap: int | None = None) -> ReplayResult:
    """Validate ``blocks`` and fold their transactions into a fresh engine.

    Each logged call is re-invoked and its outcome compared with the one
    recorded; differences are collected as mismatches. Replay stops at the
    first invalid block.
    """
    if not blocks or blocks[0].genesis is None:
        raise ValueError("chain must start with a genesis block")
    ok, bad = validate_chain(blocks, block_cap) if block_cap else validate_chain(blocks)
    genesis = blocks[0].genesis
    edge = blocks[0].miner
    engine = ContractEngine(edge, _proxy_of(blocks), None, dict(genesis.initial_accounts))
    result = ReplayResult(engine, ok, bad)
    for block in blocks:
        if bad is not None and block.height >= bad:
            break
        for tx in block.txs:
            result.transactions += 1
            engine.clock = tx.timestamp
            p = tx.payload
            try:
                if tx.kind is TxKind.DEPLOY:
                    acc = engine.deploy_contract(CodeId(p["code_id"]), tx.sender, Authority(p["authority"]),
                                                 p["params"])
                    if acc.address != p["address"]:
                        result.mismatches.append(f"{tx.tx_id}: deploy address {acc.address} != {p['address']}")
                    continue
                res = engine.invoke(ContractCall(tx.sender, p["contract"], p["function"], p["args"],
                                                 Authority(p["authority"])))
            except (ContractError, KeyError, ValueError) as exc:
                result.mismatches.append(f"{tx.tx_id}: {type(exc).__name__}: {exc}")
                continue
            got = res.value if res.ok else res.reason
            if res.ok != p["ok"] or canonical(got) != canonical(p["result"]):
                result.mismatches.append(f"{tx.tx_id}: outcome differs from record")
    return result


def kind_counts(blocks: list[Block]) -> Counter:
    return Counter(tx.kind.value for b in blocks for tx in b.txs)
