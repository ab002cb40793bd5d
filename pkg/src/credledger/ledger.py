"""Append-only hash-chained transaction log sealed into Merkle-rooted blocks.

Persistence is a single append-only file of length-prefixed canonical
records: each accepted transaction is written when accepted and each block
header when sealed, in commit order. A record's stored bytes must be the
exact canonical encoding of its parsed form, so any byte-level tampering is
detectable by re-encoding alone, before the hash checks even run.
"""

from __future__ import annotations

import hashlib
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Literal, Optional, Sequence

from .canonical import EncodingError, canonical_bytes, parse_canonical, parse_hex
from .identity import IdentityError, SignedTransaction, verify_transaction

__all__ = [
    "Block",
    "ChainAudit",
    "CorruptLedger",
    "Ledger",
    "LedgerError",
    "BadSignature",
    "NonceReplay",
    "NotFound",
    "NothingToSeal",
    "TxReceipt",
    "ZERO_HASH",
    "audit_records",
    "merkle_root",
    "read_records",
]

ZERO_HASH = bytes(32)

AuditReason = Literal[
    "PrevHashMismatch", "MerkleMismatch", "BlockHashMismatch", "TxHashMismatch"
]


class LedgerError(Exception):
    pass


class BadSignature(LedgerError):
    pass


class NonceReplay(LedgerError):
    pass


class NothingToSeal(LedgerError):
    pass


class NotFound(LedgerError):
    pass


class CorruptLedger(LedgerError):
    """Persisted ledger failed structural or integrity checks."""


def merkle_root(hashes: Sequence[bytes]) -> bytes:
    """Binary Merkle root over the given 32-byte leaves.

    Pairs are concatenated and SHA-256 hashed level by level; an odd
    trailing node is paired with itself, so a single leaf reduces to
    SHA-256(h || h). The empty list hashes to SHA-256 of the empty
    byte string.
    """
    if not hashes:
        return hashlib.sha256(b"").digest()
    level = list(hashes)
    while True:
        if len(level) % 2 == 1:
            level.append(level[-1])
        level = [
            hashlib.sha256(level[i] + level[i + 1]).digest()
            for i in range(0, len(level), 2)
        ]
        if len(level) == 1:
            return level[0]


@dataclass(frozen=True)
class Block:
    height: int
    prev_hash: bytes
    tx_hashes: tuple[bytes, ...]
    merkle_root: bytes
    sealed_at: int
    block_hash: bytes

    @staticmethod
    def hash_fields(
        height: int,
        prev_hash: bytes,
        merkle: bytes,
        sealed_at: int,
        tx_hashes: Sequence[bytes],
    ) -> bytes:
        doc = {
            "height": height,
            "merkle_root": merkle.hex(),
            "prev_hash": prev_hash.hex(),
            "sealed_at": sealed_at,
            "tx_hashes": [h.hex() for h in tx_hashes],
        }
        return hashlib.sha256(canonical_bytes(doc)).digest()

    def to_doc(self) -> dict:
        return {
            "block_hash": self.block_hash.hex(),
            "height": self.height,
            "merkle_root": self.merkle_root.hex(),
            "prev_hash": self.prev_hash.hex(),
            "sealed_at": self.sealed_at,
            "tx_hashes": [h.hex() for h in self.tx_hashes],
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "Block":
        expected = {"block_hash", "height", "merkle_root", "prev_hash", "sealed_at", "tx_hashes"}
        if not isinstance(doc, dict) or set(doc) != expected:
            raise EncodingError("block record fields mismatch")
        height = doc["height"]
        sealed_at = doc["sealed_at"]
        for name, value in (("height", height), ("sealed_at", sealed_at)):
            if isinstance(value, bool) or not isinstance(value, int) or value < 0:
                raise EncodingError(f"block {name} must be a non-negative integer")
        if not isinstance(doc["tx_hashes"], list):
            raise EncodingError("block tx_hashes must be a list")
        return cls(
            height=height,
            prev_hash=parse_hex(doc["prev_hash"], 32, "prev_hash"),
            tx_hashes=tuple(
                parse_hex(h, 32, f"tx_hashes[{i}]") for i, h in enumerate(doc["tx_hashes"])
            ),
            merkle_root=parse_hex(doc["merkle_root"], 32, "merkle_root"),
            sealed_at=sealed_at,
            block_hash=parse_hex(doc["block_hash"], 32, "block_hash"),
        )


@dataclass
class TxReceipt:
    tx_hash: bytes
    height: Optional[int] = None
    index: Optional[int] = None

    def to_doc(self) -> dict:
        doc: dict = {"tx_hash": self.tx_hash.hex()}
        if self.height is not None:
            doc["height"] = self.height
            doc["index"] = self.index
        return doc


@dataclass(frozen=True)
class ChainAudit:
    ok: bool
    first_bad_height: Optional[int] = None
    reason: Optional[AuditReason] = None

    def to_doc(self) -> dict:
        doc: dict = {"ok": self.ok}
        if not self.ok:
            doc["first_bad_height"] = self.first_bad_height
            doc["reason"] = self.reason
        return doc


_LEN = struct.Struct(">I")


def _frame(record: bytes) -> bytes:
    return _LEN.pack(len(record)) + record


def read_records(data: bytes) -> list[bytes]:
    """Split a ledger file into raw records; strict about framing."""
    records = []
    offset = 0
    while offset < len(data):
        if offset + _LEN.size > len(data):
            raise CorruptLedger(f"truncated length prefix at byte {offset}")
        (length,) = _LEN.unpack_from(data, offset)
        offset += _LEN.size
        if offset + length > len(data):
            raise CorruptLedger(f"record at byte {offset} overruns file")
        records.append(data[offset : offset + length])
        offset += length
    return records


def _parse_record(raw: bytes) -> tuple[str, dict]:
    doc = parse_canonical(raw)
    if not isinstance(doc, dict) or set(doc) != {"kind", "record"}:
        raise EncodingError("ledger record must be {kind, record}")
    kind = doc["kind"]
    if kind not in ("tx", "block"):
        raise EncodingError(f"unknown record kind: {kind!r}")
    return kind, doc["record"]


def audit_records(raw_records: Iterable[bytes]) -> ChainAudit:
    """Recompute every hash and link from raw stored bytes.

    Corruption is a result, not an error: structural failures map to
    TxHashMismatch or BlockHashMismatch at the height they would seal into.
    """
    prev_hash = ZERO_HASH
    expect_height = 0
    pending: list[bytes] = []

    def bad(reason: AuditReason, height: int) -> ChainAudit:
        return ChainAudit(ok=False, first_bad_height=height, reason=reason)

    for raw in raw_records:
        try:
            kind, record = _parse_record(raw)
        except EncodingError:
            return bad("TxHashMismatch", expect_height)
        if kind == "tx":
            try:
                tx = SignedTransaction.from_doc(record)
            except (IdentityError, EncodingError):
                return bad("TxHashMismatch", expect_height)
            if not verify_transaction(tx):
                return bad("TxHashMismatch", expect_height)
            pending.append(tx.tx_hash)
        else:
            try:
                block = Block.from_doc(record)
            except EncodingError:
                return bad("BlockHashMismatch", expect_height)
            if block.height != expect_height or block.prev_hash != prev_hash:
                return bad("PrevHashMismatch", expect_height)
            if merkle_root(block.tx_hashes) != block.merkle_root:
                return bad("MerkleMismatch", expect_height)
            if list(block.tx_hashes) != pending:
                return bad("TxHashMismatch", expect_height)
            recomputed = Block.hash_fields(
                block.height, block.prev_hash, block.merkle_root, block.sealed_at, block.tx_hashes
            )
            if recomputed != block.block_hash:
                return bad("BlockHashMismatch", expect_height)
            prev_hash = block.block_hash
            expect_height += 1
            pending = []
    return ChainAudit(ok=True)


class Ledger:
    """Single-writer transaction log. The caller serializes writes."""

    def __init__(self, path: Optional[Path] = None, fsync: bool = True) -> None:
        self.path = Path(path) if path is not None else None
        self._fsync = fsync
        self._records: list[bytes] = []
        self.blocks: list[Block] = []
        self.pending: list[SignedTransaction] = []
        self._txs: dict[bytes, SignedTransaction] = {}
        self._tx_raw: dict[bytes, bytes] = {}
        self._last_nonce: dict[str, int] = {}
        self._file = None
        if self.path is not None:
            if self.path.exists() and self.path.stat().st_size:
                raise LedgerError(f"{self.path} already holds records; use Ledger.open")
            self._file = open(self.path, "ab")

    @classmethod
    def open(cls, path: Path, fsync: bool = True) -> "Ledger":
        """Load a persisted ledger; raises CorruptLedger on any structural
        failure. Trailing transactions without a sealing block stay pending."""
        data = Path(path).read_bytes()
        raws = read_records(data)
        ledger = cls.__new__(cls)
        ledger.path = Path(path)
        ledger._fsync = fsync
        ledger._records = []
        ledger.blocks = []
        ledger.pending = []
        ledger._txs = {}
        ledger._tx_raw = {}
        ledger._last_nonce = {}
        ledger._file = None
        for raw in raws:
            try:
                kind, record = _parse_record(raw)
                if kind == "tx":
                    tx = SignedTransaction.from_doc(record)
                    ledger.pending.append(tx)
                    ledger._txs[tx.tx_hash] = tx
                    ledger._tx_raw[tx.tx_hash] = raw
                    ledger._last_nonce[tx.sender.display] = tx.nonce
                else:
                    block = Block.from_doc(record)
                    ledger.blocks.append(block)
                    ledger.pending = []
            except (EncodingError, IdentityError) as exc:
                raise CorruptLedger(f"unreadable ledger record: {exc}") from exc
            ledger._records.append(raw)
        ledger._file = open(ledger.path, "ab")
        return ledger

    def close(self) -> None:
        if self._file is not None:
            self._file.close()
            self._file = None

    def _write(self, raw: bytes) -> None:
        self._records.append(raw)
        if self._file is not None:
            self._file.write(_frame(raw))

    def flush(self) -> None:
        if self._file is not None:
            self._file.flush()
            if self._fsync:
                os.fsync(self._file.fileno())

    @property
    def head(self) -> Optional[Block]:
        return self.blocks[-1] if self.blocks else None

    @property
    def height(self) -> int:
        return len(self.blocks) - 1

    def next_nonce(self, sender: str) -> int:
        return self._last_nonce.get(sender, -1) + 1

    def append(self, tx: SignedTransaction) -> TxReceipt:
        if not verify_transaction(tx):
            raise BadSignature("transaction signature or sender binding invalid")
        last = self._last_nonce.get(tx.sender.display, -1)
        if tx.nonce <= last:
            raise NonceReplay(
                f"nonce {tx.nonce} not above last accepted {last} for {tx.sender.display}"
            )
        raw = canonical_bytes({"kind": "tx", "record": tx.to_doc()})
        self._write(raw)
        self.pending.append(tx)
        self._txs[tx.tx_hash] = tx
        self._tx_raw[tx.tx_hash] = raw
        self._last_nonce[tx.sender.display] = tx.nonce
        return TxReceipt(tx_hash=tx.tx_hash)

    def seal_block(self, now: int) -> Block:
        if self.blocks and not self.pending:
            raise NothingToSeal("no pending transactions")
        height = len(self.blocks)
        prev = self.blocks[-1].block_hash if self.blocks else ZERO_HASH
        tx_hashes = tuple(tx.tx_hash for tx in self.pending)
        root = merkle_root(tx_hashes)
        block = Block(
            height=height,
            prev_hash=prev,
            tx_hashes=tx_hashes,
            merkle_root=root,
            sealed_at=now,
            block_hash=Block.hash_fields(height, prev, root, now, tx_hashes),
        )
        self._write(canonical_bytes({"kind": "block", "record": block.to_doc()}))
        self.flush()
        self.blocks.append(block)
        self.pending = []
        return block

    def transactions_in(self, block: Block) -> list[SignedTransaction]:
        return [self._txs[h] for h in block.tx_hashes]

    def verify_chain(self) -> ChainAudit:
        return audit_records(self._records)

    def get_block(self, height: int) -> Block:
        if 0 <= height < len(self.blocks):
            return self.blocks[height]
        raise NotFound(f"no block at height {height}")

    def get_tx(self, tx_hash: bytes) -> SignedTransaction:
        try:
            return self._txs[tx_hash]
        except KeyError:
            raise NotFound(f"no transaction {tx_hash.hex()}") from None

    def get_tx_doc_bytes(self, tx_hash: bytes) -> bytes:
        """The stored transaction, bit-exact as canonical bytes."""
        tx = self.get_tx(tx_hash)
        return canonical_bytes(tx.to_doc())
