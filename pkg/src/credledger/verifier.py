"""Public verification pipeline and signed, portable verification reports.

A query resolves a certificate by (issuer, cert_id), metadata hash, CID,
or a scanned QR payload; the pipeline fetches the off-chain metadata,
re-derives its hash and CID, cross-checks them against the on-ledger
record, and emits a report signed by the node's reporting key. Reports
interchange as canonical documents (".scvr" files).
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from typing import Any, Optional
from urllib.parse import quote, unquote

from cryptography.hazmat.primitives.asymmetric import ed25519

from .canonical import EncodingError, canonical_bytes, parse_hex
from .cas import BlobStore, CasError, Cid, canonicalize_metadata, compute_cid
from .chainstate import CertificateRecord, ChainState
from .identity import Address, IdentityError, KeyPair

__all__ = [
    "NodeUnconfigured",
    "QrError",
    "BadScheme",
    "BadVersion",
    "BadComponent",
    "MalformedComponent",
    "VerificationReport",
    "Verifier",
    "VerifyQuery",
    "check_report",
    "decode_qr_payload",
    "encode_qr_payload",
]

QR_SCHEME = "shikkha"
QR_PREFIX = "shikkha:verify?"


class NodeUnconfigured(Exception):
    """No report-signing keypair is configured."""


class QrError(ValueError):
    pass


class BadScheme(QrError):
    pass


class BadVersion(QrError):
    pass


class MalformedComponent(QrError):
    pass


class BadComponent(QrError):
    """Invalid component passed to the encoder."""


def encode_qr_payload(issuer: Address, cert_id: str, cid: Cid) -> str:
    """Render the verification URI; percent-encoding applies to cert_id only."""
    if not isinstance(issuer, Address):
        raise BadComponent("issuer must be an Address")
    if not isinstance(cid, Cid):
        raise BadComponent("cid must be a Cid")
    if not isinstance(cert_id, str) or not cert_id:
        raise BadComponent("cert_id must be a non-empty string")
    return (
        f"{QR_PREFIX}v=1&i={issuer.display}&c={quote(cert_id, safe='')}&d={cid.text}"
    )


def decode_qr_payload(uri: str) -> tuple[Address, str, Cid]:
    """Strict inverse of encode_qr_payload; total on arbitrary strings."""
    if not isinstance(uri, str):
        raise BadScheme("payload is not a string")
    scheme, sep, rest = uri.partition(":")
    if not sep or scheme != QR_SCHEME:
        raise BadScheme(f"expected {QR_SCHEME!r} scheme")
    action, sep, query = rest.partition("?")
    if not sep or action != "verify":
        raise MalformedComponent("expected verify?<query>")
    params: dict[str, str] = {}
    for pair in query.split("&"):
        key, sep, value = pair.partition("=")
        if not sep or key in params:
            raise MalformedComponent(f"bad query pair {pair!r}")
        params[key] = value
    if set(params) != {"v", "i", "c", "d"}:
        raise MalformedComponent(f"query keys must be exactly v,i,c,d; got {sorted(params)}")
    if params["v"] != "1":
        raise BadVersion(f"unsupported version {params['v']!r}")
    try:
        issuer = Address.parse(params["i"])
    except IdentityError as exc:
        raise MalformedComponent(f"issuer: {exc}") from None
    raw_c = params["c"]
    # only unreserved characters or full percent-escapes may appear in c
    if not re.fullmatch(r"(?:[A-Za-z0-9._~-]|%[0-9A-Fa-f]{2})+", raw_c or ""):
        raise MalformedComponent(f"cert_id component not percent-encoded: {raw_c!r}")
    try:
        cert_id = unquote(raw_c, errors="strict")
    except UnicodeDecodeError as exc:
        raise MalformedComponent(f"cert_id percent-decoding failed: {exc}") from None
    try:
        cid = Cid.parse(params["d"])
    except CasError as exc:
        raise MalformedComponent(f"cid: {exc}") from None
    return issuer, cert_id, cid


@dataclass(frozen=True)
class VerifyQuery:
    """Exactly one lookup key: id pair, metadata hash, CID, or QR payload."""

    kind: str  # "id" | "metadata_hash" | "cid" | "qr"
    issuer: Optional[Address] = None
    cert_id: Optional[str] = None
    metadata_hash: Optional[bytes] = None
    cid: Optional[Cid] = None
    qr_payload: Optional[str] = None

    @classmethod
    def by_id(cls, issuer: Address, cert_id: str) -> "VerifyQuery":
        return cls(kind="id", issuer=issuer, cert_id=cert_id)

    @classmethod
    def by_metadata_hash(cls, digest: bytes) -> "VerifyQuery":
        if len(digest) != 32:
            raise ValueError("metadata hash must be 32 bytes")
        return cls(kind="metadata_hash", metadata_hash=digest)

    @classmethod
    def by_cid(cls, cid: Cid) -> "VerifyQuery":
        return cls(kind="cid", cid=cid)

    @classmethod
    def by_qr(cls, payload: str) -> "VerifyQuery":
        return cls(kind="qr", qr_payload=payload)


@dataclass(frozen=True)
class VerificationReport:
    doc: dict

    @property
    def status(self) -> str:
        return self.doc["status"]

    def to_bytes(self) -> bytes:
        return canonical_bytes(self.doc)


def _sign_report(doc: dict, keypair: KeyPair) -> dict:
    unsigned = {k: v for k, v in doc.items() if k != "signature"}
    signature = keypair.sign(canonical_bytes(unsigned))
    signed = dict(unsigned)
    signed["signature"] = signature.hex()
    return signed


def check_report(report: Any, expected_node_key: Optional[bytes] = None) -> bool:
    """True iff the report's signature covers every other field and, when
    given, the signing key matches. Never raises."""
    try:
        if isinstance(report, VerificationReport):
            doc = report.doc
        elif isinstance(report, (bytes, bytearray)):
            doc = json.loads(bytes(report).decode("utf-8"))
        else:
            doc = report
        if not isinstance(doc, dict):
            return False
        node_key = parse_hex(doc["node_public_key"], 32, "node_public_key")
        signature = parse_hex(doc["signature"], 64, "signature")
        if expected_node_key is not None and node_key != expected_node_key:
            return False
        unsigned = {k: v for k, v in doc.items() if k != "signature"}
        message = canonical_bytes(unsigned)
        ed25519.Ed25519PublicKey.from_public_bytes(node_key).verify(signature, message)
        return True
    except Exception:
        return False


class Verifier:
    """Stateless pipeline over read access to chain state and the blob store."""

    def __init__(
        self,
        state: ChainState,
        store: BlobStore,
        signing_key: Optional[KeyPair],
    ) -> None:
        self._state = state
        self._store = store
        self._key = signing_key

    def verify(self, query: VerifyQuery, ledger_height: int, checked_at: int) -> VerificationReport:
        if self._key is None:
            raise NodeUnconfigured("no report signing key configured")
        record, echo, qr_cid = self._resolve(query)
        doc: dict[str, Any] = {
            "version": 1,
            "query_echo": echo,
            "ledger_height": ledger_height,
            "checked_at": checked_at,
            "node_public_key": self._key.public_key.hex(),
        }
        if record is None:
            doc["status"] = "Unknown"
            return VerificationReport(_sign_report(doc, self._key))

        doc["issuer"] = record.issuer
        doc["cert_id"] = record.cert_id
        doc["cid"] = record.cid
        doc["metadata_hash"] = record.metadata_hash.hex()
        inst = self._state.institutions.get(record.issuer)
        if inst is not None:
            doc["institution_name"] = inst.name

        status, metadata = self._inspect_metadata(record)
        if qr_cid is not None and qr_cid.text != record.cid:
            # the scanned code binds a different blob than the ledger does
            status, metadata = "IntegrityFailure", None
        doc["status"] = status
        if metadata is not None:
            doc["metadata"] = metadata
        if status == "Revoked" and record.revoked_at is not None:
            doc["revoked_at"] = record.revoked_at
            doc["revocation_reason"] = record.revocation_reason
        return VerificationReport(_sign_report(doc, self._key))

    def _resolve(
        self, query: VerifyQuery
    ) -> tuple[Optional[CertificateRecord], dict, Optional[Cid]]:
        if query.kind == "id":
            assert query.issuer is not None and query.cert_id is not None
            _, record = self._state.verify_certificate(query.issuer, query.cert_id)
            echo = {"kind": "id", "issuer": query.issuer.display, "cert_id": query.cert_id}
            return record, echo, None
        if query.kind == "metadata_hash":
            assert query.metadata_hash is not None
            record = self._state.find_by_metadata_hash(query.metadata_hash)
            echo = {"kind": "metadata_hash", "metadata_hash": query.metadata_hash.hex()}
            return record, echo, None
        if query.kind == "cid":
            assert query.cid is not None
            record = self._state.find_by_cid(query.cid.text)
            echo = {"kind": "cid", "cid": query.cid.text}
            return record, echo, None
        if query.kind == "qr":
            assert query.qr_payload is not None
            issuer, cert_id, cid = decode_qr_payload(query.qr_payload)
            _, record = self._state.verify_certificate(issuer, cert_id)
            echo = {
                "kind": "qr",
                "issuer": issuer.display,
                "cert_id": cert_id,
                "cid": cid.text,
            }
            return record, echo, cid
        raise ValueError(f"unknown query kind {query.kind!r}")

    def _inspect_metadata(
        self, record: CertificateRecord
    ) -> tuple[str, Optional[dict]]:
        """Fetch and cross-check the metadata blob; returns (status, metadata)."""
        try:
            content = self._store.get(Cid.parse(record.cid))
        except CasError:
            return "IntegrityFailure", None
        if hashlib.sha256(content).digest() != record.metadata_hash:
            return "IntegrityFailure", None
        if compute_cid(content).text != record.cid:
            return "IntegrityFailure", None
        try:
            doc = json.loads(content.decode("utf-8"))
            if canonicalize_metadata(doc) != content:
                return "IntegrityFailure", None
        except (ValueError, CasError, EncodingError):
            return "IntegrityFailure", None
        return record.status, doc
