from __future__ import annotations

import pytest
from conftest import EDGE, PROXY, device, make_system

from edgechain.contracts import (
    Authority,
    AuthorityError,
    CodeId,
    ContractCall,
    UnknownContractError,
    UnknownFunctionError,
    format_coins,
    load_events,
)
from edgechain.programs import PROGRAMS
from edgechain.registry import Registry

DEV = device(1).account_address


def registered(system):
    chain, engine, registry = system
    registry.register_device(device(1), Authority.DEVICE)
    return chain, engine, registry


def test_deploy_and_redeploy(system):
    chain, engine, _ = system
    old = engine.address_of(CodeId.REGISTRATION)
    assert engine.account(old).storage == {}
    new = engine.deploy_contract(CodeId.REGISTRATION, EDGE, Authority.EDGE_SERVER, {})
    assert new.address != old and new.storage == {}
    assert old in engine.retired
    with pytest.raises(UnknownContractError):
        engine.invoke(ContractCall(EDGE, old, "set_priority", {"address": DEV, "priority": 1}, Authority.EDGE_SERVER))
    kinds = [tx.kind.value for tx in chain.pending.values()]
    assert kinds.count("Deploy") == 3


def test_deploy_requires_edge(system):
    _, engine, _ = system
    with pytest.raises(AuthorityError):
        engine.deploy_contract(CodeId.ALLOCATION, DEV, Authority.DEVICE, {})
    with pytest.raises(AuthorityError):
        engine.deploy_contract(CodeId.ALLOCATION, DEV, Authority.EDGE_SERVER, {})


def test_register_emits_event(system):
    chain, engine, registry = registered(system)
    watcher = engine.watch_events(name="RegistrationEvent")
    chain.mine_all(EDGE, 0)
    events = watcher.poll()
    assert len(events) == 1 and events[0].payload["address"] == DEV
    assert watcher.poll() == []


def test_edge_only_functions_exhaustive(system):
    """For every edge-only function, only EdgeServer authority gets through."""
    _, engine, registry = registered(system)
    for code_id, cls in PROGRAMS.items():
        for name, fn in cls.functions().items():
            if not fn.edge_only:
                continue
            for auth, caller in ((Authority.DEVICE, DEV), (Authority.PROXY, PROXY)):
                with pytest.raises(AuthorityError):
                    engine.call(code_id, name, caller, auth, address=DEV)
            # right authority claimed by the wrong caller
            with pytest.raises(AuthorityError):
                engine.call(code_id, name, DEV, Authority.EDGE_SERVER, address=DEV)


def test_device_cannot_set_priority(system):
    _, engine, _ = registered(system)
    with pytest.raises(AuthorityError):
        engine.call(CodeId.REGISTRATION, "set_priority", DEV, Authority.DEVICE, address=DEV, priority=1)


def test_unknown_function(system):
    _, engine, _ = system
    with pytest.raises(UnknownFunctionError):
        engine.call(CodeId.REGISTRATION, "selfdestruct", EDGE, Authority.EDGE_SERVER)


def test_coin_examples(system):
    _, engine, registry = registered(system)
    assert registry.get(DEV).coin_balance == 20000
    r = engine.call(CodeId.ALLOCATION, "charge", EDGE, Authority.EDGE_SERVER, address=DEV, cents=1000)
    assert r.ok and r.value == 19000 and format_coins(r.value) == "190.00"
    engine.call(CodeId.ALLOCATION, "refund", EDGE, Authority.EDGE_SERVER, address=DEV, cents=1000)
    r = engine.call(CodeId.ALLOCATION, "charge", EDGE, Authority.EDGE_SERVER, address=DEV, cents=2949)
    assert format_coins(r.value) == "170.51"
    before = engine.snapshot()
    r = engine.call(CodeId.ALLOCATION, "charge", EDGE, Authority.EDGE_SERVER, address=DEV, cents=30000)
    assert not r.ok and "balance" in r.reason and r.tx_id is not None
    assert engine.snapshot() == before  # rejection is atomic


def test_conservation_except_mint(system):
    _, engine, registry = system
    total0 = engine.total_coins()
    for i in range(3):
        registry.register_device(device(i), Authority.DEVICE)
    assert engine.total_coins() == total0 + 3 * 20000
    for i in range(3):
        engine.call(CodeId.ALLOCATION, "charge", EDGE, Authority.EDGE_SERVER, address=device(i).account_address,
                    cents=777 * (i + 1))
    engine.call(CodeId.ALLOCATION, "refund", EDGE, Authority.EDGE_SERVER, address=device(0).account_address, cents=5)
    assert engine.total_coins() == total0 + 3 * 20000


def test_watchers_fan_out_and_block_order(system):
    chain, engine, registry = registered(system)
    a = engine.watch_events(name="AllocationAccepted")
    b = engine.watch_events(name="AllocationAccepted")
    for i in range(3):
        engine.clock = i
        engine.call(CodeId.ALLOCATION, "decide", EDGE, Authority.EDGE_SERVER, request_id=f"r{i}", device=DEV,
                    verdict="Accept", reason="Accepted", price=1.0, cents=100, demand=[1, 1, 1, 1], start=i,
                    lifetime=1)
        chain.mine_all(EDGE, i)
    ea, eb = a.poll(), b.poll()
    assert [e.payload["request_id"] for e in ea] == ["r0", "r1", "r2"] == [e.payload["request_id"] for e in eb]
    assert [e.block_height for e in ea] == sorted(e.block_height for e in ea)


def test_empty_event_stream():
    _, engine, _ = make_system()
    assert engine.watch_events(name="AllocationAccepted").poll() == []


def test_event_export(system, tmp_path):
    chain, engine, _ = registered(system)
    chain.mine_all(EDGE, 0)
    n = engine.export_events(tmp_path / "ev.jsonl")
    rows = load_events(tmp_path / "ev.jsonl")
    assert n == len(rows) > 0
    assert set(rows[0]) == {"height", "contract", "name", "payload"}


def test_determinism_of_invoke():
    def run():
        _, engine, registry = make_system()
        registry.register_device(device(1), Authority.DEVICE)
        engine.call(CodeId.ALLOCATION, "charge", EDGE, Authority.EDGE_SERVER, address=DEV, cents=123)
        return engine.snapshot(), [(e.name, e.payload) for e in engine.events]

    assert run() == run()


def test_registry_wrapper_requires_deployed_contracts():
    from edgechain.contracts import ContractEngine

    engine = ContractEngine(EDGE, PROXY, None, {})
    with pytest.raises(UnknownContractError):
        Registry(engine).get(DEV)
