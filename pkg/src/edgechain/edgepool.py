"""Edge resource pool: total capacity W, availability C, and live
allocations with lifetimes."""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass

from .admission import AdmissionDecision, ResourceRequest, Verdict


class PoolConsistencyError(RuntimeError):
    """Admission and pool disagree; the run must stop."""


class DuplicateAllocationError(PoolConsistencyError):
    pass


@dataclass(frozen=True)
class Allocation:
    request_id: str
    device: str
    demand: tuple[float, ...]
    start: int
    lifetime: int
    coins_charged: int  # cents

    def __post_init__(self) -> None:
        if self.lifetime < 1:
            raise ValueError("lifetime must be >= 1")

    @property
    def end(self) -> int:
        """First timeslot at which the allocation no longer holds resources."""
        return self.start + self.lifetime


class Pool:
    def __init__(self, total: Sequence[float]) -> None:
        if any(w < 0 for w in total):
            raise ValueError("capacity must be nonnegative")
        self.total = tuple(float(w) for w in total)
        self.available = list(self.total)
        self.live: list[Allocation] = []  # acceptance order
        self._ids: set[str] = set()

    def snapshot(self) -> tuple[float, ...]:
        return tuple(self.available)

    def reserve(self, decision: AdmissionDecision, request: ResourceRequest, start: int) -> Allocation:
        if decision.verdict is not Verdict.ACCEPT or decision.request_id != request.request_id:
            raise PoolConsistencyError(f"reserve without an accept decision for {request.request_id}")
        if request.request_id in self._ids:
            raise DuplicateAllocationError(request.request_id)
        if not request.fits(self.available):
            raise PoolConsistencyError(f"{request.request_id} exceeds availability {self.snapshot()}")
        for j, r in enumerate(request.demand):
            self.available[j] -= r
        alloc = Allocation(request.request_id, request.device, request.demand, start, request.lifetime,
                           decision.cents)
        self.live.append(alloc)
        self._ids.add(alloc.request_id)
        return alloc

    def release_expired(self, now: int) -> list[Allocation]:
        """Remove allocations with ``start + lifetime <= now``, in acceptance order."""
        keep, released = [], []
        for a in self.live:
            if a.end <= now:
                for j, r in enumerate(a.demand):
                    self.available[j] += r
                released.append(a)
                self._ids.discard(a.request_id)
            else:
                keep.append(a)
        self.live = keep
        return released

    def is_exhausted(self, batch: Iterable[ResourceRequest]) -> bool:
        """True when no request fits; an empty batch is vacuously exhausted."""
        return not any(r.fits(self.available) for r in batch)

    def used(self) -> tuple[float, ...]:
        return tuple(w - c for w, c in zip(self.total, self.available))

    def utilization(self) -> tuple[float, ...]:
        return tuple((w - c) / w if w > 0 else 0.0 for w, c in zip(self.total, self.available))

    def check_identity(self, tol: float = 1e-9) -> None:
        """``available + sum(live demands) == total`` and ``available >= 0``."""
        held = [0.0] * len(self.total)
        for a in self.live:
            for j, r in enumerate(a.demand):
                held[j] += r
        for j, w in enumerate(self.total):
            if self.available[j] < -tol or abs(self.available[j] + held[j] - w) > tol:
                raise PoolConsistencyError(f"resource {j}: available {self.available[j]} + held {held[j]} != {w}")
