"""Keys, addresses, and signed state-transition requests.

Accounts are Ed25519 keypairs; an address is the last 20 bytes of the
SHA-256 of the 32-byte public key. Transactions sign the canonical
encoding of (payload, sender, nonce, timestamp), which doubles as the
transaction hash preimage.
"""

from __future__ import annotations

import hashlib
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Optional

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric import ed25519

from .canonical import EncodingError, canonical_bytes, parse_hex

__all__ = [
    "Address",
    "IdentityError",
    "KeyPair",
    "PAYLOAD_TYPES",
    "SignedTransaction",
    "authorize_regulator_payload",
    "canonical_encode",
    "deactivate_institution_payload",
    "derive_address",
    "generate_keypair",
    "issue_certificate_payload",
    "load_keypair",
    "register_institution_payload",
    "revoke_certificate_payload",
    "revoke_regulator_payload",
    "save_keypair",
    "sign_transaction",
    "validate_payload",
    "verify_transaction",
]

CERT_ID_RE = re.compile(r"^[A-Za-z0-9._-]{1,128}$")
_ADDRESS_RE = re.compile(r"^0x[0-9a-f]{40}$")


class IdentityError(ValueError):
    """Malformed key material, address, or transaction payload."""


@dataclass(frozen=True)
class Address:
    """20-byte identity derived from a verification key."""

    bytes: bytes

    def __post_init__(self) -> None:
        if len(self.bytes) != 20:
            raise IdentityError("address must be exactly 20 bytes")

    @property
    def display(self) -> str:
        return "0x" + self.bytes.hex()

    @classmethod
    def parse(cls, text: str) -> "Address":
        if not isinstance(text, str) or not _ADDRESS_RE.match(text):
            raise IdentityError(f"invalid address: {text!r}")
        return cls(bytes.fromhex(text[2:]))

    def __str__(self) -> str:
        return self.display


@dataclass(frozen=True)
class KeyPair:
    """Ed25519 signing keypair. `secret_key` is the 32-byte seed."""

    public_key: bytes
    secret_key: bytes

    def sign(self, message: bytes) -> bytes:
        key = ed25519.Ed25519PrivateKey.from_private_bytes(self.secret_key)
        return key.sign(message)

    @property
    def address(self) -> Address:
        return derive_address(self.public_key)


def generate_keypair(seed: Optional[bytes] = None) -> KeyPair:
    """Create a keypair, deterministically when a 32-byte seed is given."""
    if seed is None:
        seed = os.urandom(32)
    elif len(seed) != 32:
        raise IdentityError("invalid seed length")
    key = ed25519.Ed25519PrivateKey.from_private_bytes(seed)
    public = key.public_key().public_bytes(
        encoding=serialization.Encoding.Raw,
        format=serialization.PublicFormat.Raw,
    )
    return KeyPair(public_key=public, secret_key=seed)


def derive_address(public_key: bytes) -> Address:
    if len(public_key) != 32:
        raise IdentityError("public key must be exactly 32 bytes")
    return Address(hashlib.sha256(public_key).digest()[-20:])


def save_keypair(keypair: KeyPair, path: Path) -> None:
    """Write the 64-byte (seed || public key) hex key file, owner-only mode."""
    path = Path(path)
    path.write_text((keypair.secret_key + keypair.public_key).hex() + "\n")
    os.chmod(path, 0o600)


def load_keypair(path: Path) -> KeyPair:
    text = Path(path).read_text().strip()
    try:
        raw = bytes.fromhex(text)
    except ValueError as exc:
        raise IdentityError(f"key file {path}: not hex") from exc
    if len(raw) != 64:
        raise IdentityError(f"key file {path}: expected 64 bytes, got {len(raw)}")
    keypair = generate_keypair(seed=raw[:32])
    if keypair.public_key != raw[32:]:
        raise IdentityError(f"key file {path}: public key does not match seed")
    return keypair


# Tagged union of state-transition requests. Each entry maps the payload
# "type" tag to its required fields and per-field validators.
def _field_address(value: Any, field: str) -> None:
    if not isinstance(value, str) or not _ADDRESS_RE.match(value):
        raise IdentityError(f"payload field {field}: invalid address")


def _field_string(value: Any, field: str) -> None:
    if not isinstance(value, str):
        raise IdentityError(f"payload field {field}: expected string")


def _field_cert_id(value: Any, field: str) -> None:
    if not isinstance(value, str) or not CERT_ID_RE.match(value):
        raise IdentityError(f"payload field {field}: invalid certificate id")


def _field_cid(value: Any, field: str) -> None:
    if not isinstance(value, str) or not value.startswith("b") or len(value) < 2:
        raise IdentityError(f"payload field {field}: invalid CID text")


def _field_hash(value: Any, field: str) -> None:
    try:
        parse_hex(value, 32, field)
    except EncodingError as exc:
        raise IdentityError(str(exc)) from exc


PAYLOAD_TYPES: Mapping[str, Mapping[str, Any]] = {
    "authorize_regulator": {"regulator": _field_address},
    "revoke_regulator": {"regulator": _field_address},
    "register_institution": {"institution": _field_address, "name": _field_string},
    "deactivate_institution": {"institution": _field_address},
    "issue_certificate": {
        "cert_id": _field_cert_id,
        "cid": _field_cid,
        "metadata_hash": _field_hash,
    },
    "revoke_certificate": {"cert_id": _field_cert_id, "reason": _field_string},
}


def validate_payload(payload: Any) -> None:
    if not isinstance(payload, dict):
        raise IdentityError("payload must be a map")
    tag = payload.get("type")
    if tag not in PAYLOAD_TYPES:
        raise IdentityError(f"unknown payload type: {tag!r}")
    fields = PAYLOAD_TYPES[tag]
    expected = set(fields) | {"type"}
    if set(payload) != expected:
        raise IdentityError(
            f"payload {tag}: expected fields {sorted(expected)}, got {sorted(payload)}"
        )
    for name, check in fields.items():
        check(payload[name], name)


def authorize_regulator_payload(regulator: Address) -> dict:
    return {"type": "authorize_regulator", "regulator": regulator.display}


def revoke_regulator_payload(regulator: Address) -> dict:
    return {"type": "revoke_regulator", "regulator": regulator.display}


def register_institution_payload(institution: Address, name: str) -> dict:
    return {"type": "register_institution", "institution": institution.display, "name": name}


def deactivate_institution_payload(institution: Address) -> dict:
    return {"type": "deactivate_institution", "institution": institution.display}


def issue_certificate_payload(cert_id: str, cid_text: str, metadata_hash: bytes) -> dict:
    return {
        "type": "issue_certificate",
        "cert_id": cert_id,
        "cid": cid_text,
        "metadata_hash": metadata_hash.hex(),
    }


def revoke_certificate_payload(cert_id: str, reason: str) -> dict:
    return {"type": "revoke_certificate", "cert_id": cert_id, "reason": reason}


def canonical_encode(payload: Mapping, sender: Address, nonce: int, timestamp: int) -> bytes:
    """The byte-exact signing document; its SHA-256 is the transaction hash."""
    validate_payload(payload)
    if isinstance(nonce, bool) or not isinstance(nonce, int) or nonce < 0:
        raise IdentityError("nonce must be a non-negative integer")
    if isinstance(timestamp, bool) or not isinstance(timestamp, int) or timestamp < 0:
        raise IdentityError("timestamp must be a non-negative integer")
    return canonical_bytes(
        {
            "nonce": nonce,
            "payload": dict(payload),
            "sender": sender.display,
            "timestamp": timestamp,
        }
    )


@dataclass(frozen=True)
class SignedTransaction:
    payload: dict
    sender: Address
    nonce: int
    timestamp: int
    signature: bytes
    public_key: bytes

    @property
    def signing_bytes(self) -> bytes:
        return canonical_encode(self.payload, self.sender, self.nonce, self.timestamp)

    @property
    def tx_hash(self) -> bytes:
        return hashlib.sha256(self.signing_bytes).digest()

    def to_doc(self) -> dict:
        return {
            "nonce": self.nonce,
            "payload": dict(self.payload),
            "public_key": self.public_key.hex(),
            "sender": self.sender.display,
            "signature": self.signature.hex(),
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_doc(cls, doc: Any) -> "SignedTransaction":
        if not isinstance(doc, dict):
            raise IdentityError("transaction must be a map")
        expected = {"nonce", "payload", "public_key", "sender", "signature", "timestamp"}
        if set(doc) != expected:
            raise IdentityError(f"transaction fields must be exactly {sorted(expected)}")
        payload = doc["payload"]
        validate_payload(payload)
        nonce = doc["nonce"]
        timestamp = doc["timestamp"]
        if isinstance(nonce, bool) or not isinstance(nonce, int) or nonce < 0:
            raise IdentityError("nonce must be a non-negative integer")
        if isinstance(timestamp, bool) or not isinstance(timestamp, int) or timestamp < 0:
            raise IdentityError("timestamp must be a non-negative integer")
        try:
            public_key = parse_hex(doc["public_key"], 32, "public_key")
            signature = parse_hex(doc["signature"], 64, "signature")
        except EncodingError as exc:
            raise IdentityError(str(exc)) from exc
        return cls(
            payload=dict(payload),
            sender=Address.parse(doc["sender"]),
            nonce=nonce,
            timestamp=timestamp,
            signature=signature,
            public_key=public_key,
        )


def sign_transaction(
    keypair: KeyPair, payload: Mapping, nonce: int, timestamp: int
) -> SignedTransaction:
    sender = keypair.address
    message = canonical_encode(payload, sender, nonce, timestamp)
    return SignedTransaction(
        payload=dict(payload),
        sender=sender,
        nonce=nonce,
        timestamp=timestamp,
        signature=keypair.sign(message),
        public_key=keypair.public_key,
    )


def verify_transaction(tx: SignedTransaction) -> bool:
    """True iff the signature covers the canonical encoding and the sender
    address is bound to the signing key. Never raises on malformed input."""
    try:
        if derive_address(tx.public_key) != tx.sender:
            return False
        message = tx.signing_bytes
        key = ed25519.Ed25519PublicKey.from_public_bytes(tx.public_key)
        key.verify(tx.signature, message)
        return True
    except (InvalidSignature, IdentityError, EncodingError, ValueError, TypeError):
        return False
