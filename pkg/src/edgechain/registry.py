"""Device registration, proxy observation of legacy devices, and matching
observed activity against the registered (MUD-style) specification."""

from __future__ import annotations

import json
from collections.abc import Iterable, Iterator
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

from .contracts import Authority, CodeId, ContractEngine
from .credit import UnregisteredDeviceError, Violation
from .hashing import make_address

Range = tuple[float, float]


class RegistrationError(ValueError):
    pass


@dataclass(frozen=True)
class DeviceAttributes:
    """The fields a device fills in itself at registration."""

    account_address: str
    network_port: int = 42024
    io_data_types: tuple[str, ...] = ("text",)
    bandwidth_request: Range = (0.0, 0.0)
    cpu_request: Range = (0.0, 0.0)
    memory_request: Range = (0.0, 0.0)
    storage_request: Range = (0.0, 0.0)
    mac_address: str = "00-00-00-00-00-00"
    legacy: bool = False
    allowed_destinations: tuple[str, ...] = ()

    def validate(self) -> None:
        for name in ("bandwidth_request", "cpu_request", "memory_request", "storage_request"):
            lo, hi = getattr(self, name)
            if not 0 <= lo <= hi:
                raise RegistrationError(f"{name}: need 0 <= min <= max, got [{lo}, {hi}]")
        if not 0 < self.network_port < 65536:
            raise RegistrationError(f"network_port out of range: {self.network_port}")
        if not self.account_address:
            raise RegistrationError("account_address is empty")

    def to_args(self) -> dict[str, Any]:
        d = asdict(self)
        d["address"] = d.pop("account_address")
        for k in ("io_data_types", "allowed_destinations"):
            d[k] = sorted(d[k])
        for k in ("bandwidth_request", "cpu_request", "memory_request", "storage_request"):
            d[k] = [float(x) for x in d[k]]
        return d


@dataclass(frozen=True)
class DeviceRecord:
    account_address: str
    network_port: int
    io_data_types: tuple[str, ...]
    bandwidth_request: Range
    cpu_request: Range
    memory_request: Range
    storage_request: Range
    mac_address: str
    legacy: bool
    allowed_destinations: tuple[str, ...]
    learning_until: int
    # edge-server fields
    priority: int = 4
    credit: int = 100
    is_blocked: bool = False
    is_registered: bool = True
    last_request_id: str = ""
    coin_balance: int = 0  # cents; filled from the balance book on read, not stored

    EDGE_FIELDS = ("priority", "coin_balance", "credit", "is_blocked", "is_registered", "last_request_id")

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d.pop("coin_balance")
        for k in ("io_data_types", "allowed_destinations", "bandwidth_request", "cpu_request",
                  "memory_request", "storage_request"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_args(cls, args: dict[str, Any], *, learning_until: int, priority: int, credit: int) -> DeviceRecord:
        return cls(
            account_address=args["address"],
            network_port=int(args["network_port"]),
            io_data_types=tuple(sorted(args["io_data_types"])),
            bandwidth_request=tuple(args["bandwidth_request"]),
            cpu_request=tuple(args["cpu_request"]),
            memory_request=tuple(args["memory_request"]),
            storage_request=tuple(args["storage_request"]),
            mac_address=args["mac_address"],
            legacy=bool(args["legacy"]),
            allowed_destinations=tuple(sorted(args["allowed_destinations"])),
            learning_until=learning_until,
            priority=priority,
            credit=credit,
        )

    def shape(self) -> dict[str, Any]:
        """Record layout without identity, used to compare legacy and
        non-legacy registrations."""
        d = self.to_dict()
        for k in ("account_address", "legacy", "mac_address"):
            d.pop(k)
        return d


@dataclass(frozen=True)
class ActivityEvent:
    device: str
    port_used: int
    destination: str
    bytes: int
    timeslot: int

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ActivityEvent:
        if set(d) != {"device", "port_used", "destination", "bytes", "timeslot"}:
            raise ValueError(f"bad activity record keys {sorted(d)}")
        ev = cls(str(d["device"]), int(d["port_used"]), str(d["destination"]), int(d["bytes"]), int(d["timeslot"]))
        if ev.bytes < 0 or ev.timeslot < 0:
            raise ValueError("negative bytes or timeslot")
        return ev


def match_spec(record: DeviceRecord | None, event: ActivityEvent) -> list[Violation]:
    """Compare one observed activity with the registered specification.

    Destinations seen before ``record.learning_until`` are being learned and
    never count as unknown.
    """
    if record is None:
        raise UnregisteredDeviceError(event.device)
    found = []
    if event.port_used != record.network_port:
        found.append(Violation.WRONG_PORT)
    if event.timeslot >= record.learning_until and event.destination not in record.allowed_destinations:
        found.append(Violation.UNKNOWN_DESTINATION)
    return found


@dataclass
class ObserveResult:
    registrations: list[str] = field(default_factory=list)
    logged: list[tuple[ActivityEvent, list[Violation]]] = field(default_factory=list)
    dropped_blocked: int = 0
    malformed: int = 0


class Registry:
    """Registry operations on top of the registration contract."""

    def __init__(self, engine: ContractEngine, initial_coins_cents: int = 20000) -> None:
        self.engine = engine
        self.initial_coins = initial_coins_cents
        self._last_seen: dict[str, int] = {}

    @property
    def address(self) -> str:
        return self.engine.address_of(CodeId.REGISTRATION)

    def register_device(self, attrs: DeviceAttributes, authority: Authority) -> DeviceRecord:
        attrs.validate()
        caller = self.engine.proxy if authority is Authority.PROXY else attrs.account_address
        res = self.engine.call(CodeId.REGISTRATION, "register", caller, authority, **attrs.to_args())
        if not res.ok:
            raise RegistrationError(res.reason)
        mint = self.engine.call(CodeId.ALLOCATION, "mint", self.engine.edge, Authority.EDGE_SERVER,
                                address=attrs.account_address, cents=self.initial_coins)
        if not mint.ok:  # pragma: no cover - mint has no rejection path
            raise RegistrationError(mint.reason)
        return self.get(attrs.account_address)

    def get(self, address: str) -> DeviceRecord | None:
        rec = self.engine.account(self.address).storage.get("dev:" + address)
        if rec is None:
            return None
        return replace(rec, coin_balance=self.engine.balances.get(address, 0))

    def require(self, address: str) -> DeviceRecord:
        rec = self.get(address)
        if rec is None:
            raise UnregisteredDeviceError(address)
        return rec

    def records(self) -> Iterator[DeviceRecord]:
        storage = self.engine.account(self.address).storage
        for key in sorted(k for k in storage if k.startswith("dev:")):
            yield self.get(key[4:])

    def set_blocked(self, address: str, flag: bool, authority: Authority = Authority.EDGE_SERVER,
                    caller: str | None = None) -> DeviceRecord:
        caller = caller or (self.engine.edge if authority is Authority.EDGE_SERVER else address)
        res = self.engine.call(CodeId.REGISTRATION, "set_blocked", caller, authority, address=address, flag=flag)
        if not res.ok:
            raise UnregisteredDeviceError(res.reason)
        return self.get(address)

    def set_priority(self, address: str, priority: int) -> DeviceRecord:
        res = self.engine.call(CodeId.REGISTRATION, "set_priority", self.engine.edge, Authority.EDGE_SERVER,
                               address=address, priority=priority)
        if not res.ok:
            raise RegistrationError(res.reason)
        return self.get(address)

    def set_credit(self, address: str, credit: int) -> None:
        res = self.engine.call(CodeId.REGISTRATION, "set_credit", self.engine.edge, Authority.EDGE_SERVER,
                               address=address, credit=credit)
        if not res.ok:
            raise RegistrationError(res.reason)

    def proxy_observe(self, events: Iterable[ActivityEvent | dict[str, Any]],
                      defaults: DeviceAttributes | None = None) -> ObserveResult:
        """Log legacy-device activity through the proxy.

        Unknown devices are registered on first sight from ``defaults`` (or,
        without defaults, with the port of that first event); destinations
        are learned during the learning window. Events from
        blocked devices are dropped without analysis. Malformed records and
        records going back in time for a device are counted and skipped.
        """
        out = ObserveResult()
        for raw in events:
            try:
                ev = raw if isinstance(raw, ActivityEvent) else ActivityEvent.from_dict(raw)
            except (ValueError, TypeError, KeyError):
                out.malformed += 1
                continue
            if ev.timeslot < self._last_seen.get(ev.device, -1):
                out.malformed += 1
                continue
            self._last_seen[ev.device] = ev.timeslot
            rec = self.get(ev.device)
            if rec is None:
                base = defaults or DeviceAttributes(ev.device, network_port=ev.port_used)
                attrs = replace(base, account_address=ev.device, legacy=True, mac_address=mac_for(ev.device))
                self.register_device(attrs, Authority.PROXY)
                out.registrations.append(ev.device)
                rec = self.get(ev.device)
            if rec.is_blocked:
                out.dropped_blocked += 1
                continue
            res = self.engine.call(CodeId.REGISTRATION, "log_activity", self.engine.proxy, Authority.PROXY,
                                   **ev.to_dict())
            out.logged.append((ev, [Violation(v) for v in res.value["violations"]]))
        return out


def mac_for(address: str) -> str:
    h = make_address("mac", address)[2:14]
    return "-".join(h[i:i + 2] for i in range(0, 12, 2)).upper()


def read_activity_stream(path: str | Path) -> Iterator[dict[str, Any] | None]:
    """Line-delimited JSON activity records; unparsable lines yield ``None``
    so the observer counts them as malformed."""
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError:
                yield None


def write_activity_stream(events: Iterable[ActivityEvent], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ev in events:
            fh.write(json.dumps(ev.to_dict(), sort_keys=True) + "\n")
