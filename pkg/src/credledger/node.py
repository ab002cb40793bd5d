"""The long-running node: transaction intake, sealing, queries, persistence.

Writes are serialized by a single lock (append -> seal -> apply, then
fsync before acknowledging); reads run concurrently against the current
sealed state. The HTTP layer is unauthenticated transport - authority
lives in per-transaction signatures, as with wallet-signed calls.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

from fastapi import FastAPI, Request, Response

from .canonical import EncodingError, canonical_bytes, parse_hex
from .cas import BlobStore, CasError, Cid, IntegrityFailure
from .cas import NotFound as BlobNotFound
from .cas import TooLarge
from .chainstate import ChainState
from .identity import (
    Address,
    IdentityError,
    KeyPair,
    SignedTransaction,
    generate_keypair,
    load_keypair,
    save_keypair,
    verify_transaction,
)
from .ledger import (
    BadSignature,
    CorruptLedger,
    Ledger,
    NonceReplay,
    NotFound,
    TxReceipt,
)
from .verifier import (
    NodeUnconfigured,
    QrError,
    Verifier,
    VerifyQuery,
)

__all__ = [
    "ClockSkew",
    "ConfigInvalid",
    "Node",
    "NodeConfig",
    "SnapshotMismatch",
    "build_app",
]

logger = logging.getLogger("credledger.node")

LEDGER_FILE = "ledger.log"
SNAPSHOT_FILE = "snapshot.json"
GENESIS_FILE = "genesis.json"


class ConfigInvalid(Exception):
    pass


class SnapshotMismatch(Exception):
    """A readable snapshot disagrees with full replay."""


class ClockSkew(Exception):
    """Transaction timestamp outside the accepted bound; never reaches the ledger."""


@dataclass
class NodeConfig:
    data_dir: Path
    government: str
    listen: str = "127.0.0.1:8545"
    block_interval: int = 1
    signing_key_path: Optional[Path] = None
    clock_skew: int = 86400
    fsync: bool = True

    def validate(self) -> None:
        if self.block_interval < 1:
            raise ConfigInvalid("block_interval must be >= 1")
        if self.clock_skew < 0:
            raise ConfigInvalid("clock_skew must be >= 0")
        try:
            Address.parse(self.government)
        except IdentityError as exc:
            raise ConfigInvalid(f"government address: {exc}") from exc
        try:
            Path(self.data_dir).mkdir(parents=True, exist_ok=True)
            probe = Path(self.data_dir) / ".writable"
            probe.write_bytes(b"")
            probe.unlink()
        except OSError as exc:
            raise ConfigInvalid(f"data directory not writable: {exc}") from exc


class Node:
    """Single-authority node owning ledger, state, blob store, and verifier."""

    def __init__(self, config: NodeConfig) -> None:
        self.config = config
        self._write_lock = threading.Lock()
        self._events_by_tx: dict[bytes, list[dict]] = {}
        self.ledger: Ledger
        self.state: ChainState
        self.store: BlobStore
        self.signing_key: Optional[KeyPair] = None

    # -- lifecycle -------------------------------------------------------------

    @classmethod
    def boot(cls, config: NodeConfig) -> "Node":
        config.validate()
        node = cls(config)
        data_dir = Path(config.data_dir)
        node.store = BlobStore(data_dir / "blobs")
        node.signing_key = node._load_signing_key()

        ledger_path = data_dir / LEDGER_FILE
        genesis_path = data_dir / GENESIS_FILE
        government = Address.parse(config.government)

        if not ledger_path.exists():
            node.state = ChainState()
            node.state.init_genesis(government)
            node.ledger = Ledger(ledger_path, fsync=config.fsync)
            node.ledger.seal_block(now=int(time.time()))
            genesis_path.write_text(
                json.dumps({"government": government.display}, sort_keys=True) + "\n"
            )
            node.snapshot()
            return node

        if genesis_path.exists():
            recorded = json.loads(genesis_path.read_text())["government"]
            if recorded != government.display:
                raise ConfigInvalid(
                    f"data dir was initialized with government {recorded}, not {government.display}"
                )
        node.ledger = Ledger.open(ledger_path, fsync=config.fsync)
        audit = node.ledger.verify_chain()
        if not audit.ok:
            raise CorruptLedger(
                f"chain audit failed at height {audit.first_bad_height}: {audit.reason}"
            )
        node.state = node._replay(government)
        return node

    def _load_signing_key(self) -> Optional[KeyPair]:
        path = self.config.signing_key_path
        if path is None:
            return None
        path = Path(path)
        if path.exists():
            return load_keypair(path)
        keypair = generate_keypair()
        save_keypair(keypair, path)
        logger.info("generated report signing key at %s", path)
        return keypair

    def _replay(self, government: Address) -> ChainState:
        """Rebuild state from the ledger, cross-checking any snapshot at the
        height it was taken; a stale snapshot (crash leftover) is fine, a
        snapshot that disagrees with replay is not."""
        snap_root, snap_height = self._read_snapshot()
        state = ChainState()
        state.init_genesis(government)
        self._events_by_tx.clear()
        for block in self.ledger.blocks:
            for tx in self.ledger.transactions_in(block):
                self._events_by_tx[tx.tx_hash] = state.apply(tx, block.height)
            if snap_root is not None and block.height == snap_height:
                if state.state_root() != snap_root:
                    raise SnapshotMismatch(
                        f"snapshot at height {snap_height} disagrees with replay"
                    )
        if snap_root is not None and snap_height > self.ledger.height:
            raise SnapshotMismatch(
                f"snapshot claims height {snap_height} beyond ledger head {self.ledger.height}"
            )
        return state

    def _read_snapshot(self) -> tuple[Optional[bytes], int]:
        path = Path(self.config.data_dir) / SNAPSHOT_FILE
        if not path.exists():
            return None, -1
        try:
            snap, height = ChainState.from_snapshot(path.read_bytes())
        except (ValueError, KeyError, TypeError, EncodingError) as exc:
            # unreadable snapshot is not trusted; replay remains the truth
            logger.warning("snapshot unreadable (%s); continuing from replay", exc)
            return None, -1
        return snap.state_root(), height

    def close(self) -> None:
        try:
            self.snapshot()
        finally:
            self.ledger.close()

    # -- writes -----------------------------------------------------------------

    def submit(self, tx: SignedTransaction) -> tuple[TxReceipt, list[dict]]:
        with self._write_lock:
            if not verify_transaction(tx):
                raise BadSignature("transaction failed signature or sender binding")
            now = int(time.time())
            if abs(tx.timestamp - now) > self.config.clock_skew:
                raise ClockSkew(
                    f"timestamp {tx.timestamp} outside +/-{self.config.clock_skew}s of node clock"
                )
            receipt = self.ledger.append(tx)
            events: list[dict] = []
            if len(self.ledger.pending) >= self.config.block_interval:
                block = self.ledger.seal_block(now=now)
                for index, sealed in enumerate(self.ledger.transactions_in(block)):
                    tx_events = self.state.apply(sealed, block.height)
                    self._events_by_tx[sealed.tx_hash] = tx_events
                    if sealed.tx_hash == tx.tx_hash:
                        receipt.height = block.height
                        receipt.index = index
                        events = tx_events
            else:
                self.ledger.flush()
            return receipt, events

    def snapshot(self) -> Path:
        """Atomically persist canonical state + root (write temp, rename)."""
        path = Path(self.config.data_dir) / SNAPSHOT_FILE
        tmp = path.with_suffix(".tmp")
        tmp.write_bytes(self.state.snapshot_bytes(max(self.ledger.height, 0)))
        tmp.rename(path)
        return path

    # -- reads -------------------------------------------------------------------

    def read_lock(self) -> threading.Lock:
        """Readers share the writer lock so every GET observes a fully
        applied sealed state, never a half-applied transaction."""
        return self._write_lock

    def events_for(self, tx_hash: bytes) -> Optional[list[dict]]:
        return self._events_by_tx.get(tx_hash)

    def verifier(self) -> Verifier:
        return Verifier(self.state, self.store, self.signing_key)

    def verify(self, query: VerifyQuery):
        return self.verifier().verify(
            query, ledger_height=max(self.ledger.height, 0), checked_at=int(time.time())
        )


def _canonical_response(doc: Any, status_code: int = 200) -> Response:
    return Response(
        content=canonical_bytes(doc),
        status_code=status_code,
        media_type="application/json",
    )


def _error(status_code: int, code: str, detail: str = "") -> Response:
    doc: dict = {"error": code}
    if detail:
        doc["detail"] = detail
    return _canonical_response(doc, status_code)


def build_app(node: Node) -> FastAPI:
    app = FastAPI(title="credledger", docs_url=None, redoc_url=None)

    @app.post("/v1/tx")
    async def submit_tx(request: Request) -> Response:
        body = await request.body()
        try:
            doc = json.loads(body.decode("utf-8"))
            tx = SignedTransaction.from_doc(doc)
        except (ValueError, IdentityError, EncodingError) as exc:
            return _error(400, "MalformedTransaction", str(exc))
        try:
            receipt, events = node.submit(tx)
        except BadSignature as exc:
            return _error(400, "BadSignature", str(exc))
        except NonceReplay as exc:
            return _error(409, "NonceReplay", str(exc))
        except ClockSkew as exc:
            return _error(400, "ClockSkew", str(exc))
        return _canonical_response({"receipt": receipt.to_doc(), "events": events})

    @app.get("/v1/roles/{address}")
    def get_role(address: str) -> Response:
        try:
            addr = Address.parse(address)
        except IdentityError as exc:
            return _error(400, "BadAddress", str(exc))
        with node.read_lock():
            role = node.state.role_of(addr).value
        return _canonical_response({"address": addr.display, "role": role})

    @app.get("/v1/nonce/{address}")
    def get_nonce(address: str) -> Response:
        try:
            addr = Address.parse(address)
        except IdentityError as exc:
            return _error(400, "BadAddress", str(exc))
        with node.read_lock():
            next_nonce = node.ledger.next_nonce(addr.display)
        return _canonical_response({"address": addr.display, "next_nonce": next_nonce})

    @app.get("/v1/certificates/{issuer}/{cert_id}")
    def get_certificate(issuer: str, cert_id: str) -> Response:
        try:
            addr = Address.parse(issuer)
        except IdentityError as exc:
            return _error(400, "BadAddress", str(exc))
        with node.read_lock():
            _, record = node.state.verify_certificate(addr, cert_id)
            doc = record.to_doc() if record is not None else None
        if doc is None:
            return _error(404, "NotFound", f"no certificate {cert_id} for {issuer}")
        return _canonical_response(doc)

    @app.get("/v1/verify")
    def verify(
        i: Optional[str] = None,
        c: Optional[str] = None,
        h: Optional[str] = None,
        d: Optional[str] = None,
        qr: Optional[str] = None,
    ) -> Response:
        try:
            query = _parse_verify_params(i, c, h, d, qr)
        except (ValueError, IdentityError, EncodingError, CasError) as exc:
            return _error(400, "BadQuery", str(exc))
        try:
            with node.read_lock():
                report = node.verify(query)
        except QrError as exc:
            return _error(400, "BadQuery", str(exc))
        except NodeUnconfigured as exc:
            return _error(503, "NodeUnconfigured", str(exc))
        return Response(content=report.to_bytes(), media_type="application/json")

    @app.post("/v1/metadata")
    async def put_metadata(request: Request) -> Response:
        body = await request.body()
        try:
            cid = node.store.put(body)
        except TooLarge as exc:
            return _error(413, "TooLarge", str(exc))
        except CasError as exc:
            return _error(500, "StorageFailure", str(exc))
        return _canonical_response({"cid": cid.text})

    @app.get("/v1/metadata/{cid}")
    def get_metadata(cid: str) -> Response:
        try:
            parsed = Cid.parse(cid)
        except CasError as exc:
            return _error(400, "BadCid", str(exc))
        try:
            content = node.store.get(parsed)
        except BlobNotFound:
            return _error(404, "NotFound", cid)
        except IntegrityFailure as exc:
            return _error(500, "IntegrityFailure", str(exc))
        return Response(content=content, media_type="application/octet-stream")

    @app.get("/v1/blocks/{height}")
    def get_block(height: int) -> Response:
        try:
            with node.read_lock():
                doc = node.ledger.get_block(height).to_doc()
        except NotFound as exc:
            return _error(404, "NotFound", str(exc))
        return _canonical_response(doc)

    @app.get("/v1/tx/{tx_hash}")
    def get_tx(tx_hash: str) -> Response:
        try:
            digest = parse_hex(tx_hash, 32, "tx_hash")
            with node.read_lock():
                raw = node.ledger.get_tx_doc_bytes(digest)
        except EncodingError as exc:
            return _error(400, "BadHash", str(exc))
        except NotFound as exc:
            return _error(404, "NotFound", str(exc))
        return Response(content=raw, media_type="application/json")

    @app.get("/v1/head")
    def get_head() -> Response:
        with node.read_lock():
            head = node.ledger.head
        if head is None:
            return _canonical_response({"height": None})
        return _canonical_response(
            {
                "block_hash": head.block_hash.hex(),
                "height": head.height,
                "sealed_at": head.sealed_at,
                "tx_count": len(head.tx_hashes),
            }
        )

    @app.get("/v1/state-root")
    def get_state_root() -> Response:
        with node.read_lock():
            root = node.state.state_root().hex()
        return _canonical_response({"state_root": root})

    @app.get("/v1/stats")
    def get_stats() -> Response:
        with node.read_lock():
            doc = node.state.stats()
        return _canonical_response(doc)

    @app.get("/v1/audit")
    def get_audit() -> Response:
        with node.read_lock():
            doc = node.ledger.verify_chain().to_doc()
        return _canonical_response(doc)

    return app


def _parse_verify_params(
    i: Optional[str],
    c: Optional[str],
    h: Optional[str],
    d: Optional[str],
    qr: Optional[str],
) -> VerifyQuery:
    given = [name for name, value in (("i", i), ("c", c), ("h", h), ("d", d), ("qr", qr)) if value]
    if sorted(given) == ["c", "i"]:
        return VerifyQuery.by_id(Address.parse(i), c)
    if given == ["h"]:
        return VerifyQuery.by_metadata_hash(parse_hex(h, 32, "h"))
    if given == ["d"]:
        return VerifyQuery.by_cid(Cid.parse(d))
    if given == ["qr"]:
        return VerifyQuery.by_qr(qr)
    raise ValueError("query must be exactly one of i&c, h, d, or qr")
