"""Canonical serialization and hashing shared by the ledger and contracts."""

from __future__ import annotations

import hashlib
import json
from typing import Any

ZERO_HASH = "0" * 64


def canonical(obj: Any) -> str:
    """Field-ordered, whitespace-free JSON. Floats use Python's shortest
    round-trip repr, so the encoding is deterministic; coin amounts are
    integer cents."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True, allow_nan=False)


def sha256_hex(data: str | bytes) -> str:
    if isinstance(data, str):
        data = data.encode("ascii")
    return hashlib.sha256(data).hexdigest()


def hash_obj(obj: Any) -> str:
    return sha256_hex(canonical(obj))


def make_address(*parts: Any) -> str:
    """Deterministic 160-bit account address, ``0x`` + 40 lowercase hex."""
    return "0x" + hash_obj(["addr", *parts])[:40]


def leading_zero_bits(hex_digest: str) -> int:
    value = int(hex_digest, 16)
    return 256 - value.bit_length()
