"""Randomized property suites, 10,000 cases each."""

from __future__ import annotations

import math
from dataclasses import replace

from conftest import EDGE, PROXY, device, make_system
from hypothesis import given, settings
from hypothesis import strategies as st

from edgechain.admission import PricingParams, ResourceRequest, Scheduler, admit, admit_with
from edgechain.contracts import Authority, CodeId
from edgechain.credit import CreditManager, CreditPolicy, coin_return
from edgechain.ledger import Chain, GenesisConfig, Transaction, TxKind, mine_block, validate_chain
from edgechain.registry import ActivityEvent
from edgechain.replay import replay_blocks

CASES = settings(max_examples=10_000, derandomize=True)
EDGE_AUTH = Authority.EDGE_SERVER

demand_st = st.tuples(*[st.integers(0, 12)] * 4)
request_st = st.tuples(demand_st, st.integers(1, 4), st.integers(0, 3))
batch_st = st.lists(request_st, max_size=12)
cap_st = st.tuples(*[st.integers(0, 40)] * 4)
params_st = st.builds(PricingParams, st.sampled_from([2.0, 10.0, 100.0]), st.sampled_from([1.0, 1.35, 2.0, 3.0]))


def to_batch(raw):
    return [ResourceRequest(f"r{i:02d}", f"d{i % 3}", tuple(float(x) for x in d), lvl, 1, arr)
            for i, (d, lvl, arr) in enumerate(raw)]


def oracle_price(req, cap, p):
    """Independent evaluation of beta^L * sum_j r_j * alpha^(r_j / c_j)."""
    return math.pow(p.beta, req.priority) * math.fsum(
        r * math.pow(p.alpha, r / c) for r, c in zip(req.demand, cap) if r > 0)


# -- admission ---------------------------------------------------------------

@CASES
@given(batch_st, cap_st, params_st, st.sampled_from(list(Scheduler)),
       st.one_of(st.none(), st.dictionaries(st.sampled_from(["d0", "d1", "d2"]), st.integers(0, 50_000))))
def test_no_oversubscription(raw, cap, params, sched, budgets):
    batch = to_batch(raw)
    if budgets is not None:
        budgets = {f"d{k}": budgets.get(f"d{k}", 0) for k in range(3)}
    res = admit_with(sched, batch, cap, params, budgets)
    by = {r.request_id: r for r in batch}
    for j in range(4):
        used = sum(by[rid].demand[j] for rid in res.accepted)
        assert used <= cap[j]
        assert res.available[j] == cap[j] - used
    assert len(res.accepted) == len(set(res.accepted))
    spent = {}
    for rid in res.accepted:
        spent[by[rid].device] = spent.get(by[rid].device, 0) + res.by_id()[rid].cents
    if budgets is not None:
        assert all(spent[d] <= budgets[d] for d in spent)


@CASES
@given(batch_st, cap_st, params_st)
def test_greedy_trace_oracle(raw, cap, params):
    batch = to_batch(raw)
    res = admit(batch, cap, params)
    decisions = res.by_id()
    by = {r.request_id: r for r in batch}
    c = [float(x) for x in cap]
    remaining = set(by)
    for rid in res.accepted:
        feasible = [q for q in remaining if by[q].fits(c)]
        assert rid in feasible
        prices = {q: oracle_price(by[q], c, params) for q in feasible}
        assert prices[rid] <= min(prices.values()) * (1 + 1e-12)
        assert math.isclose(decisions[rid].price, prices[rid], rel_tol=1e-12)
        remaining.discard(rid)
        c = [x - r for x, r in zip(c, by[rid].demand)]
    assert not any(by[q].fits(c) for q in remaining)  # loop ran until nothing fit
    assert res.price_evaluations <= 2 * len(batch) * max(res.k, 1)


# -- ledger ------------------------------------------------------------------

MINER = "0x" + "a" * 40


def build_chain(blocks_txs):
    chain = Chain.init_genesis(GenesisConfig(difficulty_bits=0, initial_accounts=((MINER, 1),)), MINER, 8)
    n = 0
    for t, size in enumerate(blocks_txs):
        for _ in range(size):
            addr = f"0xd{n:039d}"
            chain.submit_transaction(Transaction.create(addr, TxKind.REGISTER, {"registers": addr}, t))
            n += 1
        chain.mine_pending(MINER, t)
    return chain


@CASES
@given(st.lists(st.integers(1, 4), min_size=1, max_size=5), st.data())
def test_hash_linkage_and_tamper(sizes, data):
    blocks = list(build_chain(sizes).blocks)
    assert validate_chain(blocks, 8) == (True, None)
    for i in range(1, len(blocks)):
        assert blocks[i].prev_hash == blocks[i - 1].block_hash
    h = data.draw(st.integers(1, len(blocks) - 1))
    b = blocks[h]
    how = data.draw(st.sampled_from(["timestamp", "nonce", "prev_hash", "payload", "swap_tx", "remine"]))
    if how == "timestamp":
        bad = replace(b, timestamp=b.timestamp + 1)
    elif how == "nonce":
        bad = replace(b, nonce=b.nonce + 1)
    elif how == "prev_hash":
        bad = replace(b, prev_hash="0" * 64)
    elif how == "payload":
        tx = b.txs[0]
        bad = replace(b, txs=(replace(tx, payload={**tx.payload, "x": 1}), *b.txs[1:]))
    elif how == "swap_tx":
        tx = b.txs[0]
        forged = Transaction.create(tx.sender, tx.kind, {**tx.payload, "x": 1}, tx.timestamp)
        bad = replace(b, txs=(forged, *b.txs[1:]))
    else:  # a valid block with different contents, re-mined in place
        tx = b.txs[0]
        forged = Transaction.create(tx.sender, tx.kind, {**tx.payload, "x": 1}, tx.timestamp)
        bad = mine_block(b.height, b.prev_hash, b.timestamp, b.miner, (forged, *b.txs[1:]), 0)
    tampered = blocks[:h] + [bad] + blocks[h + 1:]
    ok, where = validate_chain(tampered, 8)
    if how == "remine":
        if h == len(blocks) - 1:
            assert ok  # the head can always be rewritten by the miner; linkage guards only its successors
        else:
            assert (ok, where) == (False, h + 1)
    else:
        assert (ok, where) == (False, h)


# -- contracts: replay and conservation ----------------------------------------

op_st = st.tuples(st.sampled_from(["register", "charge", "refund", "credit", "block", "priority", "decide",
                                   "activity", "mine"]),
                  st.integers(0, 3), st.integers(0, 30_000))


def apply_ops(ops, with_chain):
    chain, engine, registry = make_system(with_chain=with_chain)
    minted = 0
    for t, (op, k, v) in enumerate(ops):
        engine.clock = t
        addr = device(k).account_address
        if op == "register":
            if registry.get(addr) is None:
                registry.register_device(device(k), Authority.DEVICE)
                minted += registry.initial_coins
        elif op == "charge":
            engine.call(CodeId.ALLOCATION, "charge", EDGE, EDGE_AUTH, address=addr, cents=v)
        elif op == "refund":
            engine.call(CodeId.ALLOCATION, "refund", EDGE, EDGE_AUTH, address=addr, cents=v % 5000)
        elif op == "credit":
            engine.call(CodeId.REGISTRATION, "set_credit", EDGE, EDGE_AUTH, address=addr, credit=v % 120)
        elif op == "block":
            engine.call(CodeId.REGISTRATION, "set_blocked", EDGE, EDGE_AUTH, address=addr, flag=bool(v % 2))
        elif op == "priority":
            engine.call(CodeId.REGISTRATION, "set_priority", EDGE, EDGE_AUTH, address=addr, priority=v % 6)
        elif op == "decide":
            engine.call(CodeId.ALLOCATION, "decide", EDGE, EDGE_AUTH, request_id=f"r{v % 4}", device=addr,
                        verdict="Accept" if v % 3 else "Deny", reason="Accepted", price=1.0, cents=1,
                        demand=[1, 1, 1, 1], start=t, lifetime=1)
        elif op == "activity":
            legacy = f"0xleg{k}"
            before = registry.get(legacy)
            registry.proxy_observe([ActivityEvent(legacy, 42024 + v % 2, f"d{v % 3}", 10, t)])
            if before is None:
                minted += registry.initial_coins
        elif op == "mine" and chain is not None:
            chain.mine_all(EDGE, t)
    return chain, engine, registry, minted


@CASES
@given(st.lists(op_st, max_size=14))
def test_replay_state_equality(ops):
    chain, engine, _, _ = apply_ops(ops, with_chain=True)
    chain.mine_all(EDGE, len(ops))
    res = replay_blocks(chain.blocks)
    assert res.ok, res.mismatches
    assert res.snapshot() == engine.snapshot()


@CASES
@given(st.lists(op_st, max_size=20))
def test_coin_conservation(ops):
    _, engine, _, minted = apply_ops(ops, with_chain=False)
    assert engine.total_coins() == 10_000_000 + minted
    assert all(v >= 0 for v in engine.balances.values())


# -- credit --------------------------------------------------------------------

@CASES
@given(st.lists(st.one_of(st.integers(-25, 5), st.just("unblock")), max_size=30),
       st.integers(1, 100), st.integers(0, 5), st.integers(-20, 0))
def test_credit_bounds_and_block_equivalence(steps, initial, good, bad):
    policy = CreditPolicy(initial_credit=initial, max_credit=100, delta_good=good, delta_bad=bad)
    _, engine, registry = make_system(with_chain=False)
    # the contract's initial credit must agree with the policy
    reg = engine.account(engine.address_of(CodeId.REGISTRATION))
    reg.params["initial_credit"] = initial
    registry.register_device(device(0), Authority.DEVICE)
    addr = device(0).account_address
    registry.set_credit(addr, initial)
    mgr = CreditManager(policy, registry)
    mgr.open(addr)
    for s in steps:
        if s == "unblock":
            mgr.unblock(addr)
        elif not mgr.is_blocked(addr):
            mgr.apply(addr, s)
        rec = registry.get(addr)
        acc = mgr.account(addr)
        assert 0 <= acc.credit <= policy.max_credit
        assert rec.credit == acc.credit
        assert rec.is_blocked == (rec.credit == 0) == acc.blocked


@CASES
@given(st.integers(0, 1_000_000), st.integers(-100, 100), st.sampled_from([0.0, 0.25, 0.5, 1.0, 2.0]),
       st.integers(0, 5))
def test_coin_return_linearity(charged, delta, eta, good):
    policy = CreditPolicy(eta=eta, delta_good=good)
    value = coin_return(charged, delta, policy)
    raw = charged + round(delta * eta * 100)
    cap = round(charged + eta * good * 100)
    assert 0 <= value <= max(cap, 0)
    if 0 <= raw <= cap:
        assert value - charged == round(delta * eta * 100)
    assert PROXY != EDGE
