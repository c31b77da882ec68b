"""Per-device credit scoring, blocking at zero credit, and coin returns.

Amounts of coins are integer cents throughout.
"""

from __future__ import annotations

from collections import Counter, deque
from collections.abc import Iterable
from dataclasses import dataclass, field
from enum import Enum


class Violation(str, Enum):
    PRICE_EXCEEDED = "PriceExceeded"
    FREQUENCY_EXCEEDED = "FrequencyExceeded"
    WRONG_PORT = "WrongPort"
    UNKNOWN_DESTINATION = "UnknownDestination"


class DeviceBlockedError(RuntimeError):
    pass


class UnregisteredDeviceError(LookupError):
    pass


@dataclass(frozen=True)
class CreditPolicy:
    initial_credit: int = 100
    max_credit: int = 100
    eta: float = 1.0
    price_threshold_factor: float = 1.5
    freq_limit: int = 10
    freq_window: int = 10
    delta_good: int = 1
    delta_bad: int = -10
    refund_cap_multiple: float = 1.0

    def __post_init__(self) -> None:
        # zero initial credit would start every device blocked
        if not 1 <= self.initial_credit <= self.max_credit:
            raise ValueError("need 1 <= initial_credit <= max_credit")
        if self.eta < 0:
            raise ValueError("eta must be >= 0")
        if self.freq_window < 1 or self.freq_limit < 1:
            raise ValueError("freq_window and freq_limit must be >= 1")
        if self.delta_good < 0 or self.delta_bad > 0:
            raise ValueError("need delta_good >= 0 and delta_bad <= 0")
        if self.price_threshold_factor <= 0:
            raise ValueError("price_threshold_factor must be > 0")


@dataclass
class CreditAccount:
    device: str
    credit: int
    price_threshold: float
    request_history: deque = field(default_factory=deque)
    violations: Counter = field(default_factory=Counter)

    @classmethod
    def open(cls, device: str, policy: CreditPolicy, price_threshold: float = float("inf")) -> CreditAccount:
        return cls(device, policy.initial_credit, price_threshold, deque(maxlen=policy.freq_limit))

    @property
    def blocked(self) -> bool:
        return self.credit == 0


def evaluate_request(account: CreditAccount, request_id: str, timeslot: int, computed_price: float | None,
                     policy: CreditPolicy) -> tuple[int, list[Violation]]:
    """Score one resource request and record it in the frequency window.

    ``computed_price`` is the quote against current capacity, or ``None``
    when the request cannot be priced (it does not fit); the price rule is
    skipped then.
    """
    if account.blocked:
        raise DeviceBlockedError(account.device)
    found = []
    hist = account.request_history
    if len(hist) == policy.freq_limit and hist[0][0] > timeslot - policy.freq_window:
        found.append(Violation.FREQUENCY_EXCEEDED)
    hist.append((timeslot, request_id))
    if computed_price is not None and computed_price > account.price_threshold:
        found.append(Violation.PRICE_EXCEEDED)
    return _delta(found, policy, reward=True), found


def evaluate_activity(account: CreditAccount | None, violations: Iterable[Violation],
                      policy: CreditPolicy) -> int:
    """Conformant activity earns nothing; each violation costs ``delta_bad``."""
    if account is None:
        raise UnregisteredDeviceError("activity from an unregistered device")
    return _delta(list(violations), policy, reward=False)


def _delta(found: list[Violation], policy: CreditPolicy, *, reward: bool) -> int:
    if not found:
        return policy.delta_good if reward else 0
    return policy.delta_bad * len(found)


def apply_delta(account: CreditAccount, delta: int, policy: CreditPolicy,
                violations: Iterable[Violation] = ()) -> bool:
    """Clamp ``credit + delta`` into ``[0, max_credit]``. Returns True when the
    device has just reached zero and must be blocked."""
    was_blocked = account.blocked
    account.credit = min(max(account.credit + delta, 0), policy.max_credit)
    account.violations.update(violations)
    return account.credit == 0 and not was_blocked


def coin_return(charged_cents: int, delta: int, policy: CreditPolicy) -> int:
    """``charged + delta * eta``, floored at 0 and capped at
    ``refund_cap_multiple * charged + eta * delta_good``."""
    if charged_cents < 0:
        raise ValueError("charged amount must be >= 0")
    value = charged_cents + round(delta * policy.eta * 100.0)
    cap = round(policy.refund_cap_multiple * charged_cents + policy.eta * policy.delta_good * 100.0)
    return max(0, min(value, cap))


class CreditManager:
    """Off-chain credit accounts mirrored onto the registry contract.

    ``registry`` needs ``set_credit(address, credit)`` and
    ``set_blocked(address, flag)``. A credit change is written on chain only
    when the value moves; reaching zero also records a block.
    """

    def __init__(self, policy: CreditPolicy, registry=None) -> None:
        self.policy = policy
        self.registry = registry
        self.accounts: dict[str, CreditAccount] = {}

    def open(self, device: str, price_threshold: float = float("inf")) -> CreditAccount:
        acc = CreditAccount.open(device, self.policy, price_threshold)
        self.accounts[device] = acc
        return acc

    def account(self, device: str) -> CreditAccount:
        try:
            return self.accounts[device]
        except KeyError:
            raise UnregisteredDeviceError(device) from None

    def is_blocked(self, device: str) -> bool:
        return self.account(device).blocked

    def evaluate_request(self, device: str, request_id: str, timeslot: int,
                         computed_price: float | None) -> tuple[int, list[Violation]]:
        return evaluate_request(self.account(device), request_id, timeslot, computed_price, self.policy)

    def evaluate_activity(self, device: str, violations: Iterable[Violation]) -> int:
        return evaluate_activity(self.accounts.get(device), violations, self.policy)

    def apply(self, device: str, delta: int, violations: Iterable[Violation] = ()) -> bool:
        """Apply ``delta``; returns True when the device was just blocked."""
        acc = self.account(device)
        before = acc.credit
        just_blocked = apply_delta(acc, delta, self.policy, violations)
        if self.registry is not None:
            if acc.credit != before:
                self.registry.set_credit(device, acc.credit)
            if just_blocked:
                self.registry.set_blocked(device, True)
        return just_blocked

    def unblock(self, device: str) -> None:
        acc = self.account(device)
        if not acc.blocked:
            return
        acc.credit = self.policy.initial_credit
        acc.request_history.clear()
        if self.registry is not None:
            self.registry.set_blocked(device, False)
