"""Hot numeric kernels.

Each kernel exists as a loop form (compiled by numba when enabled) and the
admission kernels also have a vectorized numpy form used when numba is off.
The two forms make the same decisions up to floating-point rounding: numpy's
vectorized ``pow`` may differ from libm's in the last bit, so prices agree to
~1e-15 relative and each path is bit-reproducible on its own.
``tests/test_kernels.py`` checks agreement and ``benchmarks/bench_kernels.py``
times the two against each other.

Verdict codes are shared with :mod:`edgechain.admission`.
"""

from __future__ import annotations

import numpy as np

from ._jit import USE_NUMBA, njit

PENDING = 0
ACCEPT = 1
DENY_INFEASIBLE = 2
DENY_COINS = 3
DENY_BLOCKED = 4
DENY_EXHAUSTED = 5

SCHED_PRICING = 0
SCHED_FCFS = 1
SCHED_PRIORITY = 2


def total_price_loop(demand_row, cap, alpha, prio_factor):
    """prio_factor * sum_j r_j * alpha**(r_j / c_j); zero demands add nothing."""
    s = 0.0
    for j in range(demand_row.shape[0]):
        r = demand_row[j]
        if r > 0.0:
            s += r * alpha ** (r / cap[j])
    return prio_factor * s


def price_to_cents(price):
    # round-half-even, same rule in Python and numba
    return round(price * 100.0)


def greedy_admit_loop(demand, prio_factor, tie_rank, cap, alpha, payer, balance, enforce_budget,
                      verdict, price, cents, order):
    """Greedy minimum-price admission over one batch.

    Each round denies requests no longer componentwise feasible, prices the
    rest, and accepts the cheapest (ties: lowest ``tie_rank``). With
    ``enforce_budget`` the cheapest request is denied instead when its payer
    cannot cover the price. ``cap`` and ``balance`` are updated in place.
    Returns ``(accepted_count, price_evaluations)``.
    """
    n, m = demand.shape
    k = 0
    evals = 0
    while True:
        best = -1
        best_price = 0.0
        for i in range(n):
            if verdict[i] != PENDING:
                continue
            feasible = True
            for j in range(m):
                if demand[i, j] > cap[j]:
                    feasible = False
                    break
            if not feasible:
                verdict[i] = DENY_INFEASIBLE
                continue
            p = total_price_loop(demand[i], cap, alpha, prio_factor[i])
            evals += 1
            if best < 0 or p < best_price or (p == best_price and tie_rank[i] < tie_rank[best]):
                best = i
                best_price = p
        if best < 0:
            break
        c = price_to_cents(best_price)
        price[best] = best_price
        if enforce_budget and balance[payer[best]] < c:
            verdict[best] = DENY_COINS
            continue
        verdict[best] = ACCEPT
        cents[best] = c
        if enforce_budget:
            balance[payer[best]] -= c
        for j in range(m):
            cap[j] -= demand[best, j]
        order[k] = best
        k += 1
    return k, evals


def greedy_admit_numpy(demand, prio_factor, tie_rank, cap, alpha, payer, balance, enforce_budget,
                       verdict, price, cents, order):
    k = 0
    evals = 0
    pending = verdict == PENDING
    while True:
        feasible = pending & np.all(demand <= cap, axis=1)
        verdict[pending & ~feasible] = DENY_INFEASIBLE
        pending = feasible
        idx = np.flatnonzero(pending)
        if idx.size == 0:
            break
        d = demand[idx]
        positive = d > 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(positive, d * alpha ** np.where(positive, d / cap, 0.0), 0.0)
        s = np.zeros(idx.size)
        for j in range(d.shape[1]):
            s = s + terms[:, j]
        p = prio_factor[idx] * s
        evals += idx.size
        cand = idx[p == p.min()]
        best = int(cand[np.argmin(tie_rank[cand])])
        best_price = float(p.min())
        c = price_to_cents(best_price)
        price[best] = best_price
        pending[best] = False
        if enforce_budget and balance[payer[best]] < c:
            verdict[best] = DENY_COINS
            continue
        verdict[best] = ACCEPT
        cents[best] = c
        if enforce_budget:
            balance[payer[best]] -= c
        cap -= demand[best]
        order[k] = best
        k += 1
    return k, evals


def sequential_admit_loop(demand, prio_factor, scan, cap, alpha, payer, balance, enforce_budget,
                          verdict, price, cents, order):
    """Accept in ``scan`` order whatever still fits (FCFS / priority baselines)."""
    n, m = demand.shape
    k = 0
    for s in range(scan.shape[0]):
        i = scan[s]
        if verdict[i] != PENDING:
            continue
        feasible = True
        for j in range(m):
            if demand[i, j] > cap[j]:
                feasible = False
                break
        if not feasible:
            verdict[i] = DENY_INFEASIBLE
            continue
        p = total_price_loop(demand[i], cap, alpha, prio_factor[i])
        c = price_to_cents(p)
        price[i] = p
        if enforce_budget and balance[payer[i]] < c:
            verdict[i] = DENY_COINS
            continue
        verdict[i] = ACCEPT
        cents[i] = c
        if enforce_budget:
            balance[payer[i]] -= c
        for j in range(m):
            cap[j] -= demand[i, j]
        order[k] = i
        k += 1
    return k


def sequential_admit_numpy(demand, prio_factor, scan, cap, alpha, payer, balance, enforce_budget,
                           verdict, price, cents, order):
    k = 0
    for i in scan:
        if verdict[i] != PENDING:
            continue
        if np.any(demand[i] > cap):
            verdict[i] = DENY_INFEASIBLE
            continue
        p = total_price_loop(demand[i], cap, alpha, prio_factor[i])
        c = price_to_cents(p)
        price[i] = p
        if enforce_budget and balance[payer[i]] < c:
            verdict[i] = DENY_COINS
            continue
        verdict[i] = ACCEPT
        cents[i] = c
        if enforce_budget:
            balance[payer[i]] -= c
        cap -= demand[i]
        order[k] = i
        k += 1
    return k


total_price_jit = njit(total_price_loop)
price_to_cents_jit = njit(price_to_cents)

if USE_NUMBA:
    # the loop bodies call these by global name; rebind to compiled versions
    total_price_loop = total_price_jit  # noqa: F811
    price_to_cents = price_to_cents_jit  # noqa: F811
    greedy_admit_jit = njit(greedy_admit_loop)
    sequential_admit_jit = njit(sequential_admit_loop)
    greedy_admit = greedy_admit_jit
    sequential_admit = sequential_admit_jit
else:
    greedy_admit_jit = greedy_admit_loop
    sequential_admit_jit = sequential_admit_loop
    greedy_admit = greedy_admit_numpy
    sequential_admit = sequential_admit_numpy


def simulate_loop(slot_ptr, demand, level, lifetime, device, tie_rank,
                  dev_thres, balance, credit, blocked, cap_total,
                  alpha, level_factor, scheduler,
                  max_credit, delta_good, delta_bad_price, delta_bad_freq,
                  freq_limit, freq_window, eta, refund_cap_mult, revenue0,
                  verdict, price, cents, delta, used):
    """Whole-run economic simulation without the ledger.

    Mirrors the per-timeslot order of the full pipeline: release expired
    allocations and refund, gate blocked devices, evaluate behaviour and
    update credit, exhaustion check, admission, reserve and charge.
    ``balance``, ``credit``, ``blocked`` are updated in place; per-request
    outputs go to ``verdict``/``price``/``cents``/``delta``; ``used[t]`` is
    the per-resource used amount after admission at slot ``t``.
    ``level_factor[L]`` is ``beta**L``, computed by the caller so every path
    uses the same value. Returns the final revenue balance in cents.
    """
    n_slots = slot_ptr.shape[0] - 1
    m = cap_total.shape[0]
    n_dev = balance.shape[0]
    cap = cap_total.copy()
    revenue = revenue0
    live = np.empty(demand.shape[0], dtype=np.int64)
    live_end = np.empty(demand.shape[0], dtype=np.int64)
    n_live = 0
    hist = np.full((n_dev, max(freq_limit, 1)), -(1 << 40), dtype=np.int64)
    hptr = np.zeros(n_dev, dtype=np.int64)
    good_cap = eta * delta_good * 100.0
    for t in range(n_slots):
        # release: start + lifetime <= t
        w = 0
        for q in range(n_live):
            i = live[q]
            if live_end[q] <= t:
                for j in range(m):
                    cap[j] += demand[i, j]
                ret = cents[i] + round(delta[i] * eta * 100.0)
                hi = round(refund_cap_mult * cents[i] + good_cap)
                if ret > hi:
                    ret = hi
                if ret < 0:
                    ret = 0
                if ret > revenue:
                    ret = revenue
                revenue -= ret
                balance[device[i]] += ret
            else:
                live[w] = i
                live_end[w] = live_end[q]
                w += 1
        n_live = w

        lo = slot_ptr[t]
        hi_i = slot_ptr[t + 1]
        n = hi_i - lo
        if n == 0:
            for j in range(m):
                used[t, j] = cap_total[j] - cap[j]
            continue
        snap = cap.copy()
        sub_verdict = np.zeros(n, dtype=np.int8)
        for s in range(n):
            i = lo + s
            d = device[i]
            if blocked[d]:
                sub_verdict[s] = DENY_BLOCKED
                continue
            dc = 0
            bad = False
            if freq_limit > 0 and hist[d, hptr[d]] > t - freq_window:
                dc += delta_bad_freq
                bad = True
            hist[d, hptr[d]] = t
            hptr[d] = (hptr[d] + 1) % hist.shape[1]
            feasible = True
            for j in range(m):
                if demand[i, j] > snap[j]:
                    feasible = False
                    break
            if feasible:
                quote = total_price_loop(demand[i], snap, alpha, level_factor[level[i]])
                if quote > dev_thres[d]:
                    dc += delta_bad_price
                    bad = True
            if not bad:
                dc = delta_good
            delta[i] = dc
            c = credit[d] + dc
            if c < 0:
                c = 0
            if c > max_credit:
                c = max_credit
            credit[d] = c
            if c == 0:
                blocked[d] = True
                sub_verdict[s] = DENY_BLOCKED

        any_feasible = False
        for s in range(n):
            if sub_verdict[s] != PENDING:
                continue
            ok = True
            for j in range(m):
                if demand[lo + s, j] > cap[j]:
                    ok = False
                    break
            if ok:
                any_feasible = True
                break
        if not any_feasible:
            for s in range(n):
                if sub_verdict[s] == PENDING:
                    sub_verdict[s] = DENY_EXHAUSTED
        else:
            sub_demand = demand[lo:hi_i]
            pf = np.empty(n)
            for s in range(n):
                pf[s] = level_factor[level[lo + s]]
            sub_price = np.zeros(n)
            sub_cents = np.zeros(n, dtype=np.int64)
            order = np.full(n, -1, dtype=np.int64)
            payer = device[lo:hi_i]
            if scheduler == SCHED_PRICING:
                k, _ = greedy_admit(sub_demand, pf, tie_rank[lo:hi_i], cap, alpha, payer, balance, True,
                                    sub_verdict, sub_price, sub_cents, order)
            else:
                if scheduler == SCHED_PRIORITY:
                    scan = np.argsort(level[lo:hi_i], kind="mergesort")
                else:
                    scan = np.arange(n)
                k = sequential_admit(sub_demand, pf, scan, cap, alpha, payer, balance, True,
                                     sub_verdict, sub_price, sub_cents, order)
            for s in range(n):
                price[lo + s] = sub_price[s]
            for q in range(k):
                s = order[q]
                i = lo + s
                cents[i] = sub_cents[s]
                revenue += sub_cents[s]
                live[n_live] = i
                live_end[n_live] = t + lifetime[i]
                n_live += 1
        for s in range(n):
            verdict[lo + s] = sub_verdict[s]
        for j in range(m):
            used[t, j] = cap_total[j] - cap[j]
    return revenue


simulate_run = njit(simulate_loop)
