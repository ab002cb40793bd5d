"""Embedded content-addressed blob store with IPFS-compatible identifiers.

Every blob is a single raw block addressed by a CIDv1 (codec raw 0x55,
multihash sha2-256), rendered as multibase base32-lowercase text. Blobs
live in a two-level hex-sharded directory and are re-hashed on every read.
"""

from __future__ import annotations

import base64
import hashlib
import re
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Any, Mapping

from .canonical import canonical_bytes

__all__ = [
    "BlobStore",
    "CasError",
    "Cid",
    "IntegrityFailure",
    "MAX_BLOCK_SIZE",
    "METADATA_SCHEMA",
    "NotFound",
    "SchemaViolation",
    "TooLarge",
    "canonicalize_metadata",
    "compute_cid",
    "metadata_hash",
]

MAX_BLOCK_SIZE = 1 << 20  # single raw block, no chunking

# CIDv1 header: version 1, codec raw (0x55), sha2-256 (0x12), digest length 0x20.
# All four values fit in one varint byte each.
_CID_PREFIX = bytes([0x01, 0x55, 0x12, 0x20])

METADATA_SCHEMA = "shikkhachain/cert/v1"

_HEX64_RE = re.compile(r"^[0-9a-f]{64}$")
_DATE_RE = re.compile(r"^(\d{4})-(\d{2})-(\d{2})$")
_ADDRESS_RE = re.compile(r"^0x[0-9a-f]{40}$")


class CasError(Exception):
    """Base error for the content-addressed store."""


class TooLarge(CasError):
    pass


class NotFound(CasError):
    pass


class IntegrityFailure(CasError):
    """Stored bytes no longer hash to their identifier."""


class SchemaViolation(CasError):
    pass


@dataclass(frozen=True)
class Cid:
    """Content identifier: version 1, raw codec, sha2-256 digest."""

    digest: bytes

    def __post_init__(self) -> None:
        if len(self.digest) != 32:
            raise CasError("CID digest must be exactly 32 bytes")

    @property
    def text(self) -> str:
        raw = _CID_PREFIX + self.digest
        return "b" + base64.b32encode(raw).decode("ascii").rstrip("=").lower()

    @classmethod
    def parse(cls, text: str) -> "Cid":
        if not isinstance(text, str) or not text.startswith("b"):
            raise CasError(f"CID must be multibase base32-lowercase: {text!r}")
        body = text[1:]
        if body != body.lower() or not re.fullmatch(r"[a-z2-7]+", body or "-"):
            raise CasError(f"CID has invalid base32 characters: {text!r}")
        padding = "=" * ((8 - len(body) % 8) % 8)
        try:
            raw = base64.b32decode(body.upper() + padding)
        except Exception as exc:
            raise CasError(f"CID base32 decode failed: {text!r}") from exc
        if len(raw) != len(_CID_PREFIX) + 32 or not raw.startswith(_CID_PREFIX):
            raise CasError(f"unsupported CID profile (want v1/raw/sha2-256): {text!r}")
        cid = cls(raw[len(_CID_PREFIX):])
        if cid.text != text:
            raise CasError(f"CID text is not canonical: {text!r}")
        return cid

    def __str__(self) -> str:
        return self.text


def compute_cid(content: bytes) -> Cid:
    if len(content) > MAX_BLOCK_SIZE:
        raise TooLarge(f"content is {len(content)} bytes; limit {MAX_BLOCK_SIZE}")
    return Cid(hashlib.sha256(content).digest())


class BlobStore:
    """Disk-backed blob store, sharded as <root>/ab/cd/<full digest hex>."""

    def __init__(self, root: Path) -> None:
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, cid: Cid) -> Path:
        hexd = cid.digest.hex()
        return self.root / hexd[:2] / hexd[2:4] / hexd

    def put(self, content: bytes) -> Cid:
        cid = compute_cid(content)
        path = self._path(cid)
        if path.exists():
            return cid
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        try:
            tmp.write_bytes(content)
            tmp.rename(path)
        except OSError as exc:
            raise CasError(f"storage failure: {exc}") from exc
        return cid

    def get(self, cid: Cid) -> bytes:
        path = self._path(cid)
        try:
            content = path.read_bytes()
        except FileNotFoundError:
            raise NotFound(cid.text) from None
        if hashlib.sha256(content).digest() != cid.digest:
            raise IntegrityFailure(f"stored bytes no longer hash to {cid.text}")
        return content

    def __contains__(self, cid: Cid) -> bool:
        return self._path(cid).exists()


_REQUIRED_FIELDS = (
    "cert_id",
    "student_name",
    "student_id_hash",
    "degree",
    "field_of_study",
    "institution_address",
    "institution_name",
    "issue_date",
)


def canonicalize_metadata(doc: Mapping[str, Any]) -> bytes:
    """Validate a certificate metadata document and return its canonical bytes.

    The canonical form always serializes `extra` (possibly empty) and omits
    `grade` entirely when absent; no other byte form of a document is legal.
    """
    if not isinstance(doc, Mapping):
        raise SchemaViolation("metadata must be a map")
    allowed = set(_REQUIRED_FIELDS) | {"schema", "grade", "extra"}
    unknown = set(doc) - allowed
    if unknown:
        raise SchemaViolation(f"unknown metadata fields: {sorted(unknown)}")
    if doc.get("schema") != METADATA_SCHEMA:
        raise SchemaViolation(f"schema must be {METADATA_SCHEMA!r}")
    out: dict[str, Any] = {"schema": METADATA_SCHEMA}
    for field in _REQUIRED_FIELDS:
        value = doc.get(field)
        if not isinstance(value, str) or not value:
            raise SchemaViolation(f"missing or non-string field: {field}")
        out[field] = value
    if not _HEX64_RE.match(out["student_id_hash"]):
        raise SchemaViolation("student_id_hash must be 64 lowercase hex chars")
    if not _ADDRESS_RE.match(out["institution_address"]):
        raise SchemaViolation("institution_address must be a 0x-prefixed address")
    m = _DATE_RE.match(out["issue_date"])
    if not m:
        raise SchemaViolation("issue_date must be an ISO-8601 date (YYYY-MM-DD)")
    try:
        date(int(m.group(1)), int(m.group(2)), int(m.group(3)))
    except ValueError as exc:
        raise SchemaViolation(f"issue_date is not a real date: {exc}") from exc
    if "grade" in doc and doc["grade"] is not None:
        if not isinstance(doc["grade"], str) or not doc["grade"]:
            raise SchemaViolation("grade must be a non-empty string when present")
        out["grade"] = doc["grade"]
    extra = doc.get("extra", {})
    if not isinstance(extra, Mapping):
        raise SchemaViolation("extra must be a string-keyed map")
    for key, value in extra.items():
        if not isinstance(key, str) or not isinstance(value, str):
            raise SchemaViolation("extra entries must map strings to strings")
    out["extra"] = dict(extra)
    return canonical_bytes(out)


def metadata_hash(canonical: bytes) -> bytes:
    """SHA-256 of canonical metadata bytes; the on-ledger commitment."""
    return hashlib.sha256(canonical).digest()
