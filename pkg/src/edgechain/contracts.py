"""Deterministic contract engine.

Contracts are native Python classes behind a uniform dispatch table, not a
bytecode VM. Every invocation runs against buffered storage views and
commits atomically; the call, its arguments and its outcome are recorded as
one transaction. Coin balances live at account level (not in contract
storage) so that redeploying a contract never touches them.
"""

from __future__ import annotations

import json
from collections.abc import Callable, Iterator, Mapping
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

from .hashing import canonical, make_address
from .ledger import Block, Chain, Transaction, TxKind

MINT_ADDRESS = "0x" + "0" * 40


class Authority(str, Enum):
    EDGE_SERVER = "EdgeServer"
    DEVICE = "Device"
    PROXY = "Proxy"


class CodeId(str, Enum):
    REGISTRATION = "RegistrationContract"
    ALLOCATION = "AllocationContract"


class ContractError(Exception):
    pass


class UnknownContractError(ContractError):
    pass


class UnknownFunctionError(ContractError):
    pass


class AuthorityError(ContractError):
    pass


class Rejected(Exception):
    """Raised by contract code for a policy denial; becomes a failed
    ``CallResult`` rather than an engine error."""

    def __init__(self, reason: str) -> None:
        super().__init__(reason)
        self.reason = reason


class InsufficientBalance(Rejected):
    pass


@dataclass(frozen=True)
class ContractFunction:
    handler: Callable[[CallContext, dict[str, Any]], Any]
    authorities: frozenset[Authority]
    kind: TxKind

    @property
    def edge_only(self) -> bool:
        return self.authorities == frozenset({Authority.EDGE_SERVER})


def function(kind: TxKind, *authorities: Authority) -> Callable:
    """Mark a contract method as externally callable."""

    def wrap(fn: Callable) -> Callable:
        fn._contract_fn = (kind, frozenset(authorities))
        return fn

    return wrap


class NativeContract:
    code_id: CodeId

    @classmethod
    def functions(cls) -> dict[str, ContractFunction]:
        table = {}
        for name in dir(cls):
            attr = getattr(cls, name)
            spec = getattr(attr, "_contract_fn", None)
            if spec is not None:
                table[name] = ContractFunction(attr, spec[1], spec[0])
        return table


@dataclass
class ContractAccount:
    address: str
    code_id: CodeId
    owner: str
    params: dict[str, Any]
    storage: dict[str, Any] = field(default_factory=dict)
    active: bool = True


@dataclass(frozen=True)
class ContractCall:
    caller: str
    contract: str
    function: str
    args: dict[str, Any]
    authority: Authority


@dataclass(frozen=True)
class Event:
    contract: str
    name: str
    payload: dict[str, Any]
    block_height: int
    tx_id: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {"height": self.block_height, "contract": self.contract, "name": self.name, "payload": self.payload}


@dataclass(frozen=True)
class CallResult:
    ok: bool
    value: Any = None
    reason: str | None = None
    events: tuple[tuple[str, dict[str, Any]], ...] = ()
    tx_id: str | None = None


@dataclass(frozen=True)
class CoinAccount:
    address: str
    balance: int  # cents

    def __str__(self) -> str:
        return f"{self.address}: {format_coins(self.balance)}"


def format_coins(cents: int) -> str:
    sign = "-" if cents < 0 else ""
    cents = abs(cents)
    return f"{sign}{cents // 100}.{cents % 100:02d}"


class StorageView:
    """Write buffer over a storage dict. Values must be treated as immutable."""

    _DELETED = object()

    def __init__(self, base: dict[str, Any]) -> None:
        self._base = base
        self._writes: dict[str, Any] = {}

    def get(self, key: str, default: Any = None) -> Any:
        if key in self._writes:
            v = self._writes[key]
            return default if v is self._DELETED else v
        return self._base.get(key, default)

    def __contains__(self, key: str) -> bool:
        return self.get(key, self._DELETED) is not self._DELETED

    def __getitem__(self, key: str) -> Any:
        v = self.get(key, self._DELETED)
        if v is self._DELETED:
            raise KeyError(key)
        return v

    def __setitem__(self, key: str, value: Any) -> None:
        self._writes[key] = value

    def __delitem__(self, key: str) -> None:
        self._writes[key] = self._DELETED

    def commit(self) -> None:
        for k, v in self._writes.items():
            if v is self._DELETED:
                self._base.pop(k, None)
            else:
                self._base[k] = v


class CallContext:
    def __init__(self, engine: ContractEngine, account: ContractAccount, call: ContractCall, timeslot: int) -> None:
        self.engine = engine
        self.account = account
        self.caller = call.caller
        self.authority = call.authority
        self.timeslot = timeslot
        self.params = account.params
        self.storage = StorageView(account.storage)
        self._foreign: dict[str, StorageView] = {}
        self.balances = StorageView(engine.balances)
        self.events: list[tuple[str, dict[str, Any]]] = []

    def foreign(self, address: str) -> StorageView:
        if address not in self._foreign:
            self._foreign[address] = StorageView(self.engine.account(address).storage)
        return self._foreign[address]

    def emit(self, name: str, payload: dict[str, Any]) -> None:
        self.events.append((name, payload))

    def balance(self, address: str) -> int:
        return self.balances.get(address, 0)

    def transfer(self, src: str, dst: str, cents: int) -> None:
        if cents < 0:
            raise Rejected("negative transfer")
        if src != MINT_ADDRESS:
            have = self.balance(src)
            if have < cents:
                raise InsufficientBalance(f"balance {format_coins(have)} < {format_coins(cents)}")
            self.balances[src] = have - cents
        self.balances[dst] = self.balance(dst) + cents

    def commit(self) -> None:
        self.storage.commit()
        for view in self._foreign.values():
            view.commit()
        self.balances.commit()


class ContractEngine:
    """Executes contract calls in order and logs each one on ``chain``.

    With ``chain=None`` the engine only executes; that is how replay folds a
    persisted chain back into state.
    """

    def __init__(self, edge_address: str, proxy_address: str | None, chain: Chain | None = None,
                 initial_balances: Mapping[str, int] | None = None,
                 code: Mapping[CodeId, type[NativeContract]] | None = None) -> None:
        if code is None:
            from .programs import PROGRAMS as code
        self.edge = edge_address
        self.proxy = proxy_address
        self.chain = chain
        self.code = dict(code)
        self._tables = {cid: cls.functions() for cid, cls in self.code.items()}
        self.accounts: dict[str, ContractAccount] = {}
        self.active: dict[CodeId, str] = {}
        self.retired: list[str] = []
        self.balances: dict[str, int] = dict(initial_balances or {})
        if chain is not None and initial_balances is None:
            self.balances = {a: b for a, b in chain.genesis.initial_accounts}
        self.events: list[Event] = []
        self._queued: dict[str, list[Event]] = {}
        self._deploys = 0
        self._seq = 0
        self.clock = 0
        if chain is not None:
            chain.add_listener(self._on_block)

    # -- authority -----------------------------------------------------
    def _check_authority(self, caller: str, authority: Authority) -> None:
        if authority is Authority.EDGE_SERVER and caller != self.edge:
            raise AuthorityError(f"{caller} does not hold edge-server authority")
        if authority is Authority.PROXY and caller != self.proxy:
            raise AuthorityError(f"{caller} does not hold proxy authority")
        if authority is Authority.DEVICE and caller in (self.edge, self.proxy):
            raise AuthorityError("system accounts cannot act with device authority")

    # -- deployment ----------------------------------------------------
    def deploy_contract(self, code_id: CodeId, caller: str, authority: Authority = Authority.EDGE_SERVER,
                        params: dict[str, Any] | None = None) -> ContractAccount:
        self._check_authority(caller, authority)
        if authority is not Authority.EDGE_SERVER:
            raise AuthorityError("only the edge server deploys contracts")
        code_id = CodeId(code_id)
        if code_id not in self.code:
            raise UnknownContractError(code_id.value)
        params = dict(params or {})
        address = make_address("contract", code_id.value, self._deploys)
        self._deploys += 1
        account = ContractAccount(address, code_id, caller, params)
        old = self.active.get(code_id)
        if old is not None:
            self.accounts[old].active = False
            self.retired.append(old)
        self.accounts[address] = account
        self.active[code_id] = address
        self._log(caller, TxKind.DEPLOY,
                  {"code_id": code_id.value, "address": address, "params": params, "authority": authority.value},
                  [("ContractDeployed", {"code_id": code_id.value, "address": address})])
        return account

    def account(self, address: str) -> ContractAccount:
        try:
            return self.accounts[address]
        except KeyError:
            raise UnknownContractError(address) from None

    def address_of(self, code_id: CodeId) -> str:
        try:
            return self.active[code_id]
        except KeyError:
            raise UnknownContractError(f"{code_id.value} is not deployed") from None

    # -- invocation ----------------------------------------------------
    def invoke(self, call: ContractCall) -> CallResult:
        account = self.account(call.contract)
        if not account.active:
            raise UnknownContractError(f"{call.contract} was superseded by a redeployment")
        fn = self._tables[account.code_id].get(call.function)
        if fn is None:
            raise UnknownFunctionError(f"{account.code_id.value}.{call.function}")
        self._check_authority(call.caller, call.authority)
        if call.authority not in fn.authorities:
            raise AuthorityError(f"{call.function} does not accept {call.authority.value} authority")
        ctx = CallContext(self, account, call, self.clock)
        try:
            value = fn.handler(ctx, call.args)
        except Rejected as rej:
            payload = self._payload(call, ok=False, result=rej.reason)
            tx_id = self._log(call.caller, fn.kind, payload, [])
            return CallResult(False, None, rej.reason, (), tx_id)
        payload = self._payload(call, ok=True, result=value)
        if fn.kind is TxKind.REGISTER:
            payload["registers"] = call.args.get("address")
        # log first: a transaction the chain refuses must not change state
        tx_id = self._log(call.caller, fn.kind, payload, ctx.events)
        ctx.commit()
        return CallResult(True, value, None, tuple(ctx.events), tx_id)

    def call(self, code_id: CodeId, function: str, caller: str, authority: Authority, **args: Any) -> CallResult:
        return self.invoke(ContractCall(caller, self.address_of(code_id), function, args, authority))

    @staticmethod
    def _payload(call: ContractCall, *, ok: bool, result: Any) -> dict[str, Any]:
        return {
            "contract": call.contract,
            "function": call.function,
            "args": call.args,
            "authority": call.authority.value,
            "ok": ok,
            "result": result,
        }

    def _log(self, sender: str, kind: TxKind, payload: dict[str, Any],
             events: list[tuple[str, dict[str, Any]]]) -> str | None:
        if self.chain is None:
            return None
        # sequence number keeps otherwise identical calls distinct
        payload["seq"] = self._seq
        self._seq += 1
        tx = Transaction.create(sender, kind, payload, self.clock)
        self.chain.submit_transaction(tx)
        contract = payload.get("contract", payload.get("address", ""))
        if events:
            self._queued[tx.tx_id] = [Event(contract, name, p, -1, tx.tx_id) for name, p in events]
        return tx.tx_id

    def _on_block(self, block: Block) -> None:
        for tx in block.txs:
            for ev in self._queued.pop(tx.tx_id, ()):
                self.events.append(Event(ev.contract, ev.name, ev.payload, block.height, ev.tx_id))

    # -- coins ---------------------------------------------------------
    def coin_account(self, address: str) -> CoinAccount:
        return CoinAccount(address, self.balances.get(address, 0))

    def total_coins(self) -> int:
        return sum(self.balances.values())

    # -- events --------------------------------------------------------
    def watch_events(self, contract: str | None = None, name: str | None = None) -> EventWatcher:
        return EventWatcher(self, contract, name)

    def export_events(self, path: str | Path) -> int:
        with open(path, "w", encoding="ascii") as fh:
            for ev in self.events:
                fh.write(canonical(ev.to_dict()) + "\n")
        return len(self.events)

    # -- state ---------------------------------------------------------
    def snapshot(self) -> dict[str, Any]:
        """Canonical, JSON-ready view of all contract storage and balances."""
        return json.loads(canonical({
            "accounts": {
                a: {"code_id": acc.code_id.value, "active": acc.active, "params": acc.params,
                    "storage": {k: _plain(v) for k, v in acc.storage.items()}}
                for a, acc in self.accounts.items()
            },
            "balances": dict(self.balances),
        }))


def _plain(value: Any) -> Any:
    to_dict = getattr(value, "to_dict", None)
    return to_dict() if to_dict else value


class EventWatcher:
    """Cursor over committed events; each ``poll`` returns only new matches."""

    def __init__(self, engine: ContractEngine, contract: str | None, name: str | None) -> None:
        self._engine = engine
        self._contract = contract
        self._name = name
        self._cursor = 0

    def poll(self) -> list[Event]:
        log = self._engine.events
        new = log[self._cursor:]
        self._cursor = len(log)
        return [e for e in new
                if (self._contract is None or e.contract == self._contract)
                and (self._name is None or e.name == self._name)]

    def __iter__(self) -> Iterator[Event]:
        return iter(self.poll())


def load_events(path: str | Path) -> list[dict[str, Any]]:
    with open(path, encoding="ascii") as fh:
        return [json.loads(line) for line in fh if line.strip()]
