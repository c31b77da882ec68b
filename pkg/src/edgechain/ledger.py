"""Permissioned hash-chained ledger with a single miner.

Byte layout of a persisted chain: ASCII text, one block per line, each line
the canonical JSON (sorted keys, no whitespace) of ``Block.to_dict()``,
terminated by ``\\n``. Line 0 is the genesis block and carries the
``GenesisConfig``. Loading is strict: unknown or missing keys are errors.
"""

from __future__ import annotations

import hashlib
import json
from collections.abc import Callable, Iterable, Iterator
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

from .hashing import ZERO_HASH, canonical, hash_obj, leading_zero_bits, sha256_hex

DEFAULT_DIFFICULTY_BITS = 12
DEFAULT_BLOCK_CAP = 208


class LedgerError(Exception):
    pass


class ConfigurationError(LedgerError):
    pass


class InvalidTransactionError(LedgerError):
    pass


class DuplicateTransactionError(LedgerError):
    pass


class UnknownSenderError(LedgerError):
    pass


class AuthorizationError(LedgerError):
    pass


class PeerNotWhitelistedError(LedgerError):
    pass


class ChainFormatError(LedgerError):
    pass


class TxKind(str, Enum):
    REGISTER = "Register"
    RESOURCE_REQUEST = "ResourceRequest"
    ADMISSION_DECISION = "AdmissionDecision"
    COIN_TRANSFER = "CoinTransfer"
    CREDIT_UPDATE = "CreditUpdate"
    ACTIVITY_LOG = "ActivityLog"
    BLOCK_DEVICE = "BlockDevice"
    DEPLOY = "Deploy"
    ATTRIBUTE_UPDATE = "AttributeUpdate"


@dataclass(frozen=True)
class GenesisConfig:
    difficulty_bits: int = DEFAULT_DIFFICULTY_BITS
    timestamp: int = 0
    chain_id: str = "edgechain-sim"
    # (address, balance in cents)
    initial_accounts: tuple[tuple[str, int], ...] = ()

    def __post_init__(self) -> None:
        if not isinstance(self.difficulty_bits, int) or not 0 <= self.difficulty_bits <= 32:
            raise ConfigurationError(f"difficulty_bits must be an integer in [0, 32], got {self.difficulty_bits!r}")
        if not self.chain_id:
            raise ConfigurationError("chain_id must be nonempty")
        for address, balance in self.initial_accounts:
            if balance < 0:
                raise ConfigurationError(f"negative initial balance for {address}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "chain_id": self.chain_id,
            "difficulty_bits": self.difficulty_bits,
            "initial_accounts": [[a, b] for a, b in self.initial_accounts],
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> GenesisConfig:
        _expect_keys(d, {"chain_id", "difficulty_bits", "initial_accounts", "timestamp"}, "genesis")
        return cls(
            difficulty_bits=d["difficulty_bits"],
            timestamp=d["timestamp"],
            chain_id=d["chain_id"],
            initial_accounts=tuple((a, b) for a, b in d["initial_accounts"]),
        )


def sign(sender: str, payload: dict[str, Any]) -> str:
    """Simulated signature: a hash stamp over sender and payload."""
    return sha256_hex(sender + "|" + canonical(payload))


@dataclass(frozen=True)
class Transaction:
    sender: str
    kind: TxKind
    payload: dict[str, Any]
    timestamp: int
    signature: str
    tx_id: str

    @classmethod
    def create(cls, sender: str, kind: TxKind, payload: dict[str, Any], timestamp: int) -> Transaction:
        signature = sign(sender, payload)
        body = _tx_body(sender, kind, payload, timestamp, signature)
        return cls(sender, TxKind(kind), payload, timestamp, signature, hash_obj(body))

    def body(self) -> dict[str, Any]:
        return _tx_body(self.sender, self.kind, self.payload, self.timestamp, self.signature)

    def verify(self) -> bool:
        return self.signature == sign(self.sender, self.payload) and self.tx_id == hash_obj(self.body())

    def to_dict(self) -> dict[str, Any]:
        d = self.body()
        d["tx_id"] = self.tx_id
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> Transaction:
        _expect_keys(d, {"sender", "kind", "payload", "timestamp", "signature", "tx_id"}, "transaction")
        try:
            kind = TxKind(d["kind"])
        except ValueError as exc:
            raise ChainFormatError(f"unknown transaction kind {d['kind']!r}") from exc
        return cls(d["sender"], kind, d["payload"], d["timestamp"], d["signature"], d["tx_id"])


def _tx_body(sender: str, kind: TxKind, payload: dict[str, Any], timestamp: int, signature: str) -> dict[str, Any]:
    return {
        "kind": TxKind(kind).value,
        "payload": payload,
        "sender": sender,
        "signature": signature,
        "timestamp": timestamp,
    }


def tx_root(txs: Iterable[Transaction], genesis: GenesisConfig | None = None) -> str:
    return hash_obj({"genesis": genesis.to_dict() if genesis else None, "txs": [t.tx_id for t in txs]})


def header_prefix(height: int, prev_hash: str, root: str, timestamp: int, miner: str) -> str:
    # nonce is appended last so the prefix digest state can be reused while searching
    return f"{height}|{prev_hash}|{root}|{timestamp}|{miner}|"


def search_nonce(prefix: str, difficulty_bits: int) -> tuple[int, str]:
    """Deterministic proof-of-work: counts nonces upward from 0."""
    base = hashlib.sha256(prefix.encode("ascii"))
    shift = 256 - difficulty_bits
    nonce = 0
    while True:
        h = base.copy()
        h.update(str(nonce).encode("ascii"))
        digest = h.digest()
        if difficulty_bits == 0 or int.from_bytes(digest, "big") >> shift == 0:
            return nonce, digest.hex()
        nonce += 1


@dataclass(frozen=True)
class Block:
    height: int
    prev_hash: str
    timestamp: int
    miner: str
    txs: tuple[Transaction, ...]
    nonce: int
    block_hash: str
    genesis: GenesisConfig | None = None

    @property
    def tx_root(self) -> str:
        return tx_root(self.txs, self.genesis)

    def compute_hash(self) -> str:
        prefix = header_prefix(self.height, self.prev_hash, self.tx_root, self.timestamp, self.miner)
        return sha256_hex(prefix + str(self.nonce))

    def to_dict(self) -> dict[str, Any]:
        return {
            "block_hash": self.block_hash,
            "genesis": self.genesis.to_dict() if self.genesis else None,
            "height": self.height,
            "miner": self.miner,
            "nonce": self.nonce,
            "prev_hash": self.prev_hash,
            "timestamp": self.timestamp,
            "txs": [t.to_dict() for t in self.txs],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> Block:
        _expect_keys(d, {"block_hash", "genesis", "height", "miner", "nonce", "prev_hash", "timestamp", "txs"}, "block")
        genesis = GenesisConfig.from_dict(d["genesis"]) if d["genesis"] is not None else None
        return cls(
            height=d["height"],
            prev_hash=d["prev_hash"],
            timestamp=d["timestamp"],
            miner=d["miner"],
            txs=tuple(Transaction.from_dict(t) for t in d["txs"]),
            nonce=d["nonce"],
            block_hash=d["block_hash"],
            genesis=genesis,
        )

    def serialize(self) -> str:
        return canonical(self.to_dict())


def mine_block(height: int, prev_hash: str, timestamp: int, miner: str, txs: tuple[Transaction, ...],
               difficulty_bits: int, genesis: GenesisConfig | None = None) -> Block:
    root = tx_root(txs, genesis)
    nonce, digest = search_nonce(header_prefix(height, prev_hash, root, timestamp, miner), difficulty_bits)
    return Block(height, prev_hash, timestamp, miner, txs, nonce, digest, genesis)


@dataclass(frozen=True)
class Receipt:
    tx_id: str
    pool_size: int


class Chain:
    """The miner's chain: committed blocks plus the pending transaction pool."""

    def __init__(self, genesis: GenesisConfig, miner: str, block_cap: int = DEFAULT_BLOCK_CAP,
                 _blocks: list[Block] | None = None) -> None:
        if block_cap < 1:
            raise ConfigurationError("block_cap must be >= 1")
        self.genesis = genesis
        self.miner = miner
        self.block_cap = block_cap
        self.pending: dict[str, Transaction] = {}
        self._seen: set[str] = set()
        self._known: set[str] = {miner} | {a for a, _ in genesis.initial_accounts}
        self._listeners: list[Callable[[Block], None]] = []
        if _blocks is None:
            _blocks = [mine_block(0, ZERO_HASH, genesis.timestamp, miner, (), genesis.difficulty_bits, genesis)]
        self.blocks: list[Block] = []
        for b in _blocks:
            self._index(b)
            self.blocks.append(b)

    @classmethod
    def init_genesis(cls, config: GenesisConfig, miner: str, block_cap: int = DEFAULT_BLOCK_CAP) -> Chain:
        return cls(config, miner, block_cap)

    @classmethod
    def from_blocks(cls, blocks: list[Block], block_cap: int = DEFAULT_BLOCK_CAP) -> Chain:
        if not blocks or blocks[0].genesis is None:
            raise ChainFormatError("chain must start with a genesis block")
        return cls(blocks[0].genesis, blocks[0].miner, block_cap, _blocks=list(blocks))

    def _index(self, block: Block) -> None:
        for tx in block.txs:
            self._seen.add(tx.tx_id)
            self._learn(tx)

    def _learn(self, tx: Transaction) -> None:
        if tx.kind is TxKind.REGISTER:
            addr = tx.payload.get("registers")
            if isinstance(addr, str):
                self._known.add(addr)
            self._known.add(tx.sender)

    @property
    def height(self) -> int:
        return self.blocks[-1].height

    @property
    def head(self) -> Block:
        return self.blocks[-1]

    def __len__(self) -> int:
        return len(self.blocks)

    def is_known(self, address: str) -> bool:
        return address in self._known

    def add_listener(self, fn: Callable[[Block], None]) -> None:
        self._listeners.append(fn)

    def submit_transaction(self, tx: Transaction) -> Receipt:
        if not tx.verify():
            raise InvalidTransactionError(f"transaction {tx.tx_id[:12]} does not verify")
        if tx.tx_id in self._seen:
            raise DuplicateTransactionError(tx.tx_id)
        if tx.kind is not TxKind.REGISTER and tx.sender not in self._known:
            raise UnknownSenderError(f"{tx.sender} is not registered (kind {tx.kind.value})")
        self._seen.add(tx.tx_id)
        self.pending[tx.tx_id] = tx
        self._learn(tx)
        return Receipt(tx.tx_id, len(self.pending))

    def mine_pending(self, caller: str, timestamp: int | None = None) -> Block | None:
        """Mine one block of at most ``block_cap`` pending transactions, or
        return ``None`` if the pool is empty."""
        if caller != self.miner:
            raise AuthorizationError(f"{caller} is not the miner of this chain")
        if not self.pending:
            return None
        ids = list(self.pending)[: self.block_cap]
        txs = tuple(self.pending.pop(i) for i in ids)
        ts = self.head.timestamp if timestamp is None else timestamp
        block = mine_block(self.height + 1, self.head.block_hash, ts, self.miner, txs, self.genesis.difficulty_bits)
        self.blocks.append(block)
        for fn in self._listeners:
            fn(block)
        return block

    def mine_all(self, caller: str, timestamp: int | None = None) -> list[Block]:
        mined = []
        while (block := self.mine_pending(caller, timestamp)) is not None:
            mined.append(block)
        return mined

    def transactions(self) -> Iterator[tuple[int, Transaction]]:
        for block in self.blocks:
            for tx in block.txs:
                yield block.height, tx

    def validate(self) -> tuple[bool, int | None]:
        return validate_chain(self.blocks, self.block_cap)

    def save(self, path: str | Path) -> None:
        save_chain(self.blocks, path)


def validate_chain(blocks: list[Block], block_cap: int = DEFAULT_BLOCK_CAP) -> tuple[bool, int | None]:
    """Return ``(True, None)`` or ``(False, height_of_first_bad_block)``."""
    if not blocks:
        return False, 0
    genesis = blocks[0].genesis
    if genesis is None:
        return False, 0
    bits = genesis.difficulty_bits
    miner = blocks[0].miner
    for i, b in enumerate(blocks):
        ok = (
            b.height == i
            and (b.prev_hash == ZERO_HASH) == (i == 0)
            and (i == 0 or b.prev_hash == blocks[i - 1].block_hash)
            and (b.genesis is not None) == (i == 0)
            and b.miner == miner
            and len(b.txs) <= block_cap
            and all(tx.verify() for tx in b.txs)
            and b.compute_hash() == b.block_hash
            and leading_zero_bits(b.block_hash) >= bits
        )
        if not ok:
            return False, i
    return True, None


def save_chain(blocks: Iterable[Block], path: str | Path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for b in blocks:
            fh.write(b.serialize())
            fh.write("\n")


def load_chain(path: str | Path) -> list[Block]:
    raw = Path(path).read_bytes()
    if not raw:
        raise ChainFormatError(f"{path}: empty chain file")
    try:
        text = raw.decode("ascii")
    except UnicodeDecodeError as exc:
        raise ChainFormatError(f"{path}: non-ASCII byte at offset {exc.start}") from exc
    if not text.endswith("\n"):
        raise ChainFormatError(f"{path}: truncated final record")
    blocks = []
    for lineno, line in enumerate(text[:-1].split("\n")):
        try:
            d = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ChainFormatError(f"{path}:{lineno + 1}: {exc}") from exc
        if not isinstance(d, dict):
            raise ChainFormatError(f"{path}:{lineno + 1}: record is not an object")
        try:
            block = Block.from_dict(d)
        except (KeyError, TypeError, ValueError, ConfigurationError) as exc:
            raise ChainFormatError(f"{path}:{lineno + 1}: {exc}") from exc
        if block.serialize() != line:
            raise ChainFormatError(f"{path}:{lineno + 1}: record is not in canonical form")
        blocks.append(block)
    return blocks


def _expect_keys(d: Any, keys: set[str], what: str) -> None:
    if not isinstance(d, dict) or set(d) != keys:
        got = sorted(d) if isinstance(d, dict) else type(d).__name__
        raise ChainFormatError(f"malformed {what}: expected keys {sorted(keys)}, got {got}")


class NodeRole(str, Enum):
    FULL_MINER = "FullMiner"
    LIGHT_CLIENT = "LightClient"
    PROXY = "Proxy"


@dataclass
class Node:
    """A chain participant. Only the ``FullMiner`` owns a writable chain;
    other roles hold replicas filled by ``sync_node``."""

    address: str
    endpoint: str
    role: NodeRole
    blocks: list[Block]
    enode_whitelist: set[tuple[str, str]] = field(default_factory=set)
    chain: Chain | None = None

    @classmethod
    def full_miner(cls, chain: Chain, endpoint: str, whitelist: Iterable[tuple[str, str]] = ()) -> Node:
        return cls(chain.miner, endpoint, NodeRole.FULL_MINER, chain.blocks, set(whitelist), chain)

    @classmethod
    def light(cls, address: str, endpoint: str, genesis_block: Block,
              whitelist: Iterable[tuple[str, str]], role: NodeRole = NodeRole.LIGHT_CLIENT) -> Node:
        if role is NodeRole.FULL_MINER:
            raise ConfigurationError("light replicas cannot hold the miner role")
        replica = Block.from_dict(json.loads(genesis_block.serialize()))
        return cls(address, endpoint, role, [replica], set(whitelist))

    @property
    def height(self) -> int:
        return self.blocks[-1].height

    def mine_pending(self, timestamp: int | None = None) -> Block | None:
        if self.role is not NodeRole.FULL_MINER or self.chain is None:
            raise AuthorizationError(f"{self.role.value} node {self.address} may not mine")
        return self.chain.mine_pending(self.address, timestamp)


def sync_node(light: Node, full: Node) -> int:
    """Copy the blocks ``light`` is missing from ``full``; returns the count."""
    if (full.address, full.endpoint) not in light.enode_whitelist:
        raise PeerNotWhitelistedError(f"{full.address}@{full.endpoint} is not whitelisted by {light.address}")
    if light.blocks[0].block_hash != full.blocks[0].block_hash:
        raise LedgerError("genesis mismatch: nodes belong to different chains")
    start = len(light.blocks)
    missing = full.blocks[start:]
    if start and missing and missing[0].prev_hash != light.blocks[-1].block_hash:
        raise LedgerError("replica diverged from the full node")
    for b in missing:
        light.blocks.append(Block.from_dict(json.loads(b.serialize())))
    return len(missing)
