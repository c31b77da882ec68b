"""Seeded workload generation.

All randomness comes from numpy's PCG64 generator. One ``SeedSequence``
per run is split into independent child streams (fleet setup, requests,
legacy activity) so that, for example, turning legacy traffic off does not
change the request stream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .admission import PricingParams, ResourceRequest, total_price
from .config import ExperimentConfig, LevelProfile, RequestsPerSlot
from .hashing import hash_obj, make_address


@dataclass(frozen=True)
class DeviceSpec:
    address: str
    level: int
    misbehaving: bool
    index: int


@dataclass(frozen=True)
class Fleet:
    devices: tuple[DeviceSpec, ...]
    by_level: dict[int, tuple[int, ...]]
    legacy: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.devices)


def streams(seed: int) -> dict[str, np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(3)
    return {name: np.random.Generator(np.random.PCG64(s)) for name, s in zip(("fleet", "requests", "activity"), children)}


def build_fleet(cfg: ExperimentConfig, rng: np.random.Generator) -> Fleet:
    per = cfg.fleet.devices_per_level
    total = 4 * per
    n_bad = int(round(cfg.fleet.misbehaving_fraction * total))
    bad = set(rng.permutation(total)[:n_bad].tolist()) if n_bad else set()
    devices = []
    by_level: dict[int, list[int]] = {1: [], 2: [], 3: [], 4: []}
    for lvl in (1, 2, 3, 4):
        for k in range(per):
            idx = len(devices)
            devices.append(DeviceSpec(make_address("device", lvl, k), lvl, idx in bad, idx))
            by_level[lvl].append(idx)
    legacy = tuple(make_address("legacy", k) for k in range(cfg.fleet.legacy_devices))
    return Fleet(tuple(devices), {k: tuple(v) for k, v in by_level.items()}, legacy)


def price_threshold(profile: LevelProfile, level: int, total: tuple[float, ...], params: PricingParams,
                    factor: float) -> float:
    """Threshold for a device: ``factor`` times the price of its registered
    maximum demand against the full capacity."""
    probe = ResourceRequest("probe", "probe", tuple(float(x) for x in profile.max_demand()), level, 1, 0)
    return factor * total_price(probe, total, params)


def generate_batch(rng: np.random.Generator, profiles: dict[int, LevelProfile], t: int, fleet: Fleet,
                   per_slot: RequestsPerSlot, level_weights: tuple[float, ...] = (1, 1, 1, 1),
                   misbehaving_factor: float = 2.0) -> list[ResourceRequest]:
    """Draw one timeslot's requests.

    Count from ``per_slot``; per request a level (weighted), a device of
    that level, and integer demand/lifetime uniformly from the level's
    ranges. Misbehaving devices scale their demand by ``misbehaving_factor``.
    """
    n = per_slot.draw(rng)
    if n == 0:
        return []
    w = np.asarray(level_weights, dtype=np.float64)
    levels = rng.choice(4, size=n, p=w / w.sum()) + 1
    u = rng.random((n, 6))
    batch = []
    for i in range(n):
        lvl = int(levels[i])
        prof = profiles[lvl]
        members = fleet.by_level[lvl]
        dev = fleet.devices[members[min(int(u[i, 0] * len(members)), len(members) - 1)]]
        demand = []
        for j, (lo, hi) in enumerate(prof.demand_ranges()):
            x = lo + min(int(u[i, j + 1] * (hi - lo + 1)), hi - lo)
            if dev.misbehaving:
                x = int(round(x * misbehaving_factor))
            demand.append(float(x))
        lo, hi = prof.lifetime
        lifetime = lo + min(int(u[i, 5] * (hi - lo + 1)), hi - lo)
        rid = "0x" + hash_obj(["req", dev.address, t, i, demand, lifetime])[:32]
        batch.append(ResourceRequest(rid, dev.address, tuple(demand), lvl, lifetime, t))
    return batch


@dataclass(frozen=True)
class Workload:
    """A whole run's requests packed into flat arrays, batch ``t`` being
    rows ``slot_ptr[t]:slot_ptr[t+1]`` in generation order."""

    slot_ptr: np.ndarray
    demand: np.ndarray
    level: np.ndarray
    lifetime: np.ndarray
    device: np.ndarray
    tie_rank: np.ndarray
    request_ids: tuple[str, ...]

    @property
    def n_requests(self) -> int:
        return int(self.slot_ptr[-1])

    def batch(self, t: int, fleet: Fleet) -> list[ResourceRequest]:
        lo, hi = int(self.slot_ptr[t]), int(self.slot_ptr[t + 1])
        return [
            ResourceRequest(self.request_ids[i], fleet.devices[int(self.device[i])].address,
                            tuple(float(x) for x in self.demand[i]), int(self.level[i]), int(self.lifetime[i]), t)
            for i in range(lo, hi)
        ]


def generate_workload(cfg: ExperimentConfig, seed: int, fleet: Fleet | None = None) -> tuple[Fleet, Workload]:
    rngs = streams(seed)
    fleet = fleet or build_fleet(cfg, rngs["fleet"])
    index = {d.address: d.index for d in fleet.devices}
    ptr = [0]
    rows: list[ResourceRequest] = []
    ranks: list[int] = []
    for t in range(cfg.timeslots):
        batch = generate_batch(rngs["requests"], cfg.profiles, t, fleet, cfg.requests_per_slot,
                               cfg.level_weights, cfg.fleet.misbehaving_factor)
        order = sorted(range(len(batch)), key=lambda i: batch[i].request_id)
        r = [0] * len(batch)
        for pos, i in enumerate(order):
            r[i] = pos
        rows.extend(batch)
        ranks.extend(r)
        ptr.append(len(rows))
    n = len(rows)
    m = len(cfg.capacity)
    demand = np.array([q.demand for q in rows], dtype=np.float64).reshape(n, m)
    return fleet, Workload(
        slot_ptr=np.array(ptr, dtype=np.int64),
        demand=demand,
        level=np.array([q.priority for q in rows], dtype=np.int64),
        lifetime=np.array([q.lifetime for q in rows], dtype=np.int64),
        device=np.array([index[q.device] for q in rows], dtype=np.int64),
        tie_rank=np.array(ranks, dtype=np.int64),
        request_ids=tuple(q.request_id for q in rows),
    )
