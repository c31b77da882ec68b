"""The two fixed contract programs: device registration and resource
allocation (requests, decisions and coin movements)."""

from __future__ import annotations

from dataclasses import replace
from typing import Any

from .contracts import MINT_ADDRESS, Authority, CallContext, CodeId, NativeContract, Rejected, function
from .ledger import TxKind
from .registry import ActivityEvent, DeviceRecord, match_spec

EDGE = Authority.EDGE_SERVER
_REGISTER_KEYS = {"address", "network_port", "io_data_types", "bandwidth_request", "cpu_request",
                  "memory_request", "storage_request", "mac_address", "legacy", "allowed_destinations"}


def _record(ctx: CallContext, address: str, storage=None) -> DeviceRecord:
    rec = (storage if storage is not None else ctx.storage).get("dev:" + address)
    if rec is None:
        raise Rejected(f"unregistered device {address}")
    return rec


class RegistrationContract(NativeContract):
    """Device records. Params: ``initial_credit``, ``max_credit``,
    ``learning_window`` and ``proxy``."""

    code_id = CodeId.REGISTRATION

    @staticmethod
    @function(TxKind.REGISTER, Authority.DEVICE, Authority.PROXY)
    def register(ctx: CallContext, args: dict[str, Any]) -> dict[str, Any]:
        if set(args) != _REGISTER_KEYS:
            raise Rejected(f"bad registration fields {sorted(set(args) ^ _REGISTER_KEYS)}")
        address = args["address"]
        if ctx.authority is Authority.DEVICE and (ctx.caller != address or args["legacy"]):
            raise Rejected("a device registers only itself, as non-legacy")
        if ctx.authority is Authority.PROXY and not args["legacy"]:
            raise Rejected("the proxy registers legacy devices only")
        if "dev:" + address in ctx.storage:
            raise Rejected(f"duplicate address {address}")
        for name in ("bandwidth_request", "cpu_request", "memory_request", "storage_request"):
            lo, hi = args[name]
            if not 0 <= lo <= hi:
                raise Rejected(f"malformed range {name}")
        rec = DeviceRecord.from_args(args, learning_until=ctx.timeslot + int(ctx.params.get("learning_window", 20)),
                                     priority=4, credit=int(ctx.params.get("initial_credit", 100)))
        ctx.storage["dev:" + address] = rec
        ctx.emit("RegistrationEvent", {"address": address, "legacy": rec.legacy})
        return rec.to_dict()

    @staticmethod
    @function(TxKind.ATTRIBUTE_UPDATE, EDGE)
    def set_priority(ctx: CallContext, args: dict[str, Any]) -> int:
        rec = _record(ctx, args["address"])
        p = int(args["priority"])
        if p not in (1, 2, 3, 4):
            raise Rejected(f"priority {p} not in 1..4")
        ctx.storage["dev:" + rec.account_address] = replace(rec, priority=p)
        return p

    @staticmethod
    @function(TxKind.CREDIT_UPDATE, EDGE)
    def set_credit(ctx: CallContext, args: dict[str, Any]) -> dict[str, Any]:
        """Store a new credit value; reaching zero blocks in the same commit."""
        rec = _record(ctx, args["address"])
        credit = int(args["credit"])
        if not 0 <= credit <= int(ctx.params.get("max_credit", 100)):
            raise Rejected(f"credit {credit} out of bounds")
        blocked = rec.is_blocked or credit == 0
        ctx.storage["dev:" + rec.account_address] = replace(rec, credit=credit, is_blocked=blocked)
        ctx.emit("CreditUpdated", {"address": rec.account_address, "credit": credit})
        if blocked and not rec.is_blocked:
            ctx.emit("DeviceBlocked", {"address": rec.account_address})
        return {"credit": credit, "blocked": blocked}

    @staticmethod
    @function(TxKind.BLOCK_DEVICE, EDGE)
    def set_blocked(ctx: CallContext, args: dict[str, Any]) -> dict[str, Any]:
        """Blocking zeroes credit; unblocking restores the initial credit, so
        ``is_blocked`` and ``credit == 0`` always coincide."""
        rec = _record(ctx, args["address"])
        flag = bool(args["flag"])
        if flag:
            new = replace(rec, is_blocked=True, credit=0)
        elif rec.is_blocked:
            new = replace(rec, is_blocked=False, credit=int(ctx.params.get("initial_credit", 100)))
        else:
            new = rec
        ctx.storage["dev:" + rec.account_address] = new
        if new.is_blocked != rec.is_blocked:
            ctx.emit("DeviceBlocked" if flag else "DeviceUnblocked", {"address": rec.account_address})
        return {"blocked": new.is_blocked, "credit": new.credit}

    @staticmethod
    @function(TxKind.ACTIVITY_LOG, Authority.PROXY, EDGE)
    def log_activity(ctx: CallContext, args: dict[str, Any]) -> dict[str, Any]:
        ev = ActivityEvent.from_dict(args)
        rec = _record(ctx, ev.device)
        if rec.is_blocked:
            raise Rejected(f"device {ev.device} is blocked")
        found = match_spec(rec, ev)
        if ev.timeslot < rec.learning_until and ev.destination not in rec.allowed_destinations:
            learned = tuple(sorted((*rec.allowed_destinations, ev.destination)))
            ctx.storage["dev:" + ev.device] = replace(rec, allowed_destinations=learned)
        if found:
            ctx.emit("ActivityViolation", {"device": ev.device, "violations": [v.value for v in found]})
        return {"violations": [v.value for v in found]}


class AllocationContract(NativeContract):
    """Requests, admission decisions and coin movements. Params:
    ``registration`` (address of the registration contract). The edge-server
    address is the revenue account."""

    code_id = CodeId.ALLOCATION

    @staticmethod
    def _registry(ctx: CallContext):
        return ctx.foreign(ctx.params["registration"])

    @staticmethod
    @function(TxKind.RESOURCE_REQUEST, Authority.DEVICE)
    def request(ctx: CallContext, args: dict[str, Any]) -> dict[str, Any]:
        reg = AllocationContract._registry(ctx)
        rec = _record(ctx, args["device"], reg)
        if ctx.caller != rec.account_address:
            raise Rejected("devices request only for themselves")
        reg["dev:" + rec.account_address] = replace(rec, last_request_id=args["request_id"])
        return {"blocked": rec.is_blocked, "priority": rec.priority}

    @staticmethod
    @function(TxKind.ADMISSION_DECISION, EDGE)
    def decide(ctx: CallContext, args: dict[str, Any]) -> str:
        rid = args["request_id"]
        if args["verdict"] == "Accept":
            key = "alloc:" + rid
            if key in ctx.storage:
                raise Rejected(f"duplicate allocation {rid}")
            ctx.storage[key] = {"device": args["device"], "demand": list(args["demand"]),
                                "start": int(args["start"]), "lifetime": int(args["lifetime"]),
                                "cents": int(args["cents"])}
            ctx.emit("AllocationAccepted", {"request_id": rid, "device": args["device"], "price": args["price"]})
        else:
            ctx.emit("AllocationDenied", {"request_id": rid, "device": args["device"], "reason": args["reason"]})
        return args["verdict"]

    @staticmethod
    @function(TxKind.COIN_TRANSFER, EDGE)
    def mint(ctx: CallContext, args: dict[str, Any]) -> int:
        ctx.transfer(MINT_ADDRESS, args["address"], int(args["cents"]))
        return ctx.balance(args["address"])

    @staticmethod
    @function(TxKind.COIN_TRANSFER, EDGE)
    def charge(ctx: CallContext, args: dict[str, Any]) -> int:
        ctx.transfer(args["address"], ctx.engine.edge, int(args["cents"]))
        return ctx.balance(args["address"])

    @staticmethod
    @function(TxKind.COIN_TRANSFER, EDGE)
    def refund(ctx: CallContext, args: dict[str, Any]) -> int:
        """Pay back ``cents`` from revenue; closes the allocation if named."""
        rid = args.get("request_id")
        if rid is not None:
            if "alloc:" + rid not in ctx.storage:
                raise Rejected(f"no live allocation {rid}")
            del ctx.storage["alloc:" + rid]
        ctx.transfer(ctx.engine.edge, args["address"], int(args["cents"]))
        return ctx.balance(args["address"])


PROGRAMS = {CodeId.REGISTRATION: RegistrationContract, CodeId.ALLOCATION: AllocationContract}
