"""Dynamic pricing and request admission.

Price of request ``i`` against available capacity ``C``::

    P_i = beta**L_i * sum_j r_ij * alpha**(r_ij / c_j)

Admission is greedy: repeatedly deny whatever no longer fits, accept the
cheapest feasible request, shrink ``C``, until nothing fits. FCFS and
strict-priority scanners are provided as baselines.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import kernels
from .kernels import ACCEPT, DENY_BLOCKED, DENY_COINS, DENY_EXHAUSTED, DENY_INFEASIBLE

RESOURCES = ("cpu", "memory", "storage", "bandwidth")
M = len(RESOURCES)


class InfeasibleRequestError(ValueError):
    """A price was asked for demand that exceeds the available capacity."""


class Verdict(str, Enum):
    ACCEPT = "Accept"
    DENY = "Deny"


class Reason(str, Enum):
    ACCEPTED = "Accepted"
    INFEASIBLE = "Infeasible"
    INSUFFICIENT_COINS = "InsufficientCoins"
    BLOCKED = "Blocked"
    EXHAUSTED = "Exhausted"


_REASON_BY_CODE = {
    ACCEPT: Reason.ACCEPTED,
    DENY_INFEASIBLE: Reason.INFEASIBLE,
    DENY_COINS: Reason.INSUFFICIENT_COINS,
    DENY_BLOCKED: Reason.BLOCKED,
    DENY_EXHAUSTED: Reason.EXHAUSTED,
}
CODE_BY_REASON = {v: k for k, v in _REASON_BY_CODE.items()}


class Scheduler(str, Enum):
    PRICING = "Pricing"
    FCFS = "FCFS"
    PRIORITY = "Priority"

    @property
    def code(self) -> int:
        return {Scheduler.PRICING: kernels.SCHED_PRICING, Scheduler.FCFS: kernels.SCHED_FCFS,
                Scheduler.PRIORITY: kernels.SCHED_PRIORITY}[self]

    @classmethod
    def parse(cls, name: str) -> Scheduler:
        for s in cls:
            if s.value.lower() == str(name).lower():
                return s
        raise ValueError(f"unknown scheduler {name!r}; expected one of {[s.value for s in cls]}")


@dataclass(frozen=True)
class PricingParams:
    alpha: float = 100.0
    beta: float = 1.35

    def __post_init__(self) -> None:
        if not self.alpha > 1:
            raise ValueError(f"alpha must be > 1, got {self.alpha}")
        # beta == 1 is admitted so sweeps can start at 1.0; priority then has no effect
        if not self.beta >= 1:
            raise ValueError(f"beta must be >= 1, got {self.beta}")


@dataclass(frozen=True)
class ResourceRequest:
    request_id: str
    device: str
    demand: tuple[float, ...]
    priority: int
    lifetime: int
    arrival: int

    def __post_init__(self) -> None:
        if any(x < 0 for x in self.demand):
            raise ValueError(f"negative demand in {self.request_id}")
        if self.priority not in (1, 2, 3, 4):
            raise ValueError(f"priority must be in 1..4, got {self.priority}")
        if self.lifetime < 1:
            raise ValueError("lifetime must be >= 1")

    def fits(self, available: Sequence[float]) -> bool:
        return all(r <= c for r, c in zip(self.demand, available))


@dataclass(frozen=True)
class AdmissionDecision:
    request_id: str
    verdict: Verdict
    price: float | None
    reason: Reason
    cents: int = 0


@dataclass(frozen=True)
class AdmissionResult:
    decisions: tuple[AdmissionDecision, ...]  # batch order
    accepted: tuple[str, ...]  # acceptance order
    available: tuple[float, ...]  # capacity left after acceptances
    price_evaluations: int = 0

    @property
    def k(self) -> int:
        return len(self.accepted)

    def by_id(self) -> dict[str, AdmissionDecision]:
        return {d.request_id: d for d in self.decisions}


def unit_price(r: float, c: float, level: int, params: PricingParams) -> float:
    if r > 0 and c <= 0:
        raise InfeasibleRequestError(f"demand {r} against zero capacity")
    exponent = r / c if r > 0 else 0.0
    return params.alpha ** exponent * params.beta ** level


def total_price(request: ResourceRequest, available: Sequence[float], params: PricingParams) -> float:
    if not request.fits(available):
        raise InfeasibleRequestError(f"{request.request_id} does not fit {tuple(available)}")
    d = np.asarray(request.demand, dtype=np.float64)
    c = np.asarray(available, dtype=np.float64)
    return float(kernels.total_price_loop(d, c, params.alpha, params.beta ** request.priority))


def tie_ranks(batch: Sequence[ResourceRequest]) -> np.ndarray:
    """Rank used to break equal prices: earliest arrival, then request id."""
    order = sorted(range(len(batch)), key=lambda i: (batch[i].arrival, batch[i].request_id))
    rank = np.empty(len(batch), dtype=np.int64)
    rank[order] = np.arange(len(batch))
    return rank


def _run(batch: Sequence[ResourceRequest], available: Sequence[float], params: PricingParams,
         scheduler: Scheduler, budgets: Mapping[str, int] | None) -> AdmissionResult:
    n = len(batch)
    cap = np.array(available, dtype=np.float64)
    if n == 0:
        return AdmissionResult((), (), tuple(float(x) for x in cap))
    demand = np.array([r.demand for r in batch], dtype=np.float64).reshape(n, -1)
    if demand.shape[1] != cap.shape[0]:
        raise ValueError("demand and capacity dimensions differ")
    prio = np.array([params.beta ** r.priority for r in batch])
    payers = sorted({r.device for r in batch})
    payer_index = {d: i for i, d in enumerate(payers)}
    payer = np.array([payer_index[r.device] for r in batch], dtype=np.int64)
    enforce = budgets is not None
    balance = np.array([budgets[d] if enforce else 0 for d in payers], dtype=np.int64)
    verdict = np.zeros(n, dtype=np.int8)
    price = np.zeros(n)
    cents = np.zeros(n, dtype=np.int64)
    order = np.full(n, -1, dtype=np.int64)
    evals = 0
    if scheduler is Scheduler.PRICING:
        k, evals = kernels.greedy_admit(demand, prio, tie_ranks(batch), cap, params.alpha, payer, balance,
                                        enforce, verdict, price, cents, order)
    else:
        if scheduler is Scheduler.PRIORITY:
            scan = np.argsort(np.array([r.priority for r in batch]), kind="mergesort")
        else:
            scan = np.arange(n)
        k = kernels.sequential_admit(demand, prio, scan, cap, params.alpha, payer, balance, enforce,
                                     verdict, price, cents, order)
    decisions = []
    for i, r in enumerate(batch):
        code = int(verdict[i])
        reason = _REASON_BY_CODE[code]
        priced = code in (ACCEPT, DENY_COINS)
        decisions.append(AdmissionDecision(
            r.request_id,
            Verdict.ACCEPT if code == ACCEPT else Verdict.DENY,
            float(price[i]) if priced else None,
            reason,
            int(cents[i]),
        ))
    accepted = tuple(batch[int(i)].request_id for i in order[:k])
    return AdmissionResult(tuple(decisions), accepted, tuple(float(x) for x in cap), int(evals))


def admit(batch: Sequence[ResourceRequest], available: Sequence[float], params: PricingParams,
          budgets: Mapping[str, int] | None = None) -> AdmissionResult:
    """Greedy minimum-price admission.

    ``budgets`` maps device address to spendable cents; when given, the
    cheapest request is denied with ``InsufficientCoins`` if its device
    cannot pay, and the next cheapest is considered.
    """
    return _run(batch, available, params, Scheduler.PRICING, budgets)


def admit_fcfs(batch: Sequence[ResourceRequest], available: Sequence[float],
               params: PricingParams | None = None, budgets: Mapping[str, int] | None = None) -> AdmissionResult:
    return _run(batch, available, params or PricingParams(), Scheduler.FCFS, budgets)


def admit_priority(batch: Sequence[ResourceRequest], available: Sequence[float],
                   params: PricingParams | None = None, budgets: Mapping[str, int] | None = None) -> AdmissionResult:
    """Level 1 first, FCFS within a level."""
    return _run(batch, available, params or PricingParams(), Scheduler.PRIORITY, budgets)


def admit_with(scheduler: Scheduler, batch: Sequence[ResourceRequest], available: Sequence[float],
               params: PricingParams, budgets: Mapping[str, int] | None = None) -> AdmissionResult:
    return _run(batch, available, params, scheduler, budgets)
