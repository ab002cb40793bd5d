"""Deterministic state machine: role registry plus certificate lifecycle.

State is derived purely by replaying ledger transactions in order; the
state root is the SHA-256 of the canonically encoded full state, so two
nodes that applied the same sequence expose identical digests. Rule
violations never raise out of `apply`: the transaction stays on the ledger
and yields a Rejected event, mirroring failed on-chain calls.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .canonical import canonical_bytes, parse_canonical, parse_hex
from .cas import Cid, CasError
from .identity import CERT_ID_RE, Address, SignedTransaction

__all__ = [
    "AlreadyInitialized",
    "CertificateRecord",
    "ChainState",
    "Event",
    "Rejection",
    "Role",
]

Event = dict

REJECTION_REASONS = (
    "Unauthorized",
    "RoleConflict",
    "BadName",
    "DuplicateId",
    "CidMismatch",
    "BadId",
    "NotFound",
    "AlreadyRevoked",
)


class Role(str, Enum):
    GOVERNMENT = "Government"
    REGULATOR = "Regulator"
    INSTITUTION = "Institution"
    PUBLIC = "Public"


class AlreadyInitialized(Exception):
    pass


class Rejection(Exception):
    """A rule violation; `apply` converts it into a Rejected event."""

    def __init__(self, reason: str, detail: str) -> None:
        assert reason in REJECTION_REASONS
        super().__init__(f"{reason}: {detail}")
        self.reason = reason
        self.detail = detail

    def to_event(self) -> Event:
        return {"type": "Rejected", "reason": self.reason, "detail": self.detail}


@dataclass
class RegulatorEntry:
    active: bool
    authorized_by: str
    since: int

    def to_doc(self) -> dict:
        return {"active": self.active, "authorized_by": self.authorized_by, "since": self.since}


@dataclass
class InstitutionEntry:
    name: str
    active: bool
    registered_by: str
    since: int

    def to_doc(self) -> dict:
        return {
            "active": self.active,
            "name": self.name,
            "registered_by": self.registered_by,
            "since": self.since,
        }


@dataclass
class CertificateRecord:
    cert_id: str
    issuer: str
    cid: str
    metadata_hash: bytes
    issued_at: int
    status: str  # "Valid" | "Revoked"
    revoked_at: Optional[int] = None
    revocation_reason: Optional[str] = None

    def to_doc(self) -> dict:
        doc: dict = {
            "cert_id": self.cert_id,
            "cid": self.cid,
            "issued_at": self.issued_at,
            "issuer": self.issuer,
            "metadata_hash": self.metadata_hash.hex(),
            "status": self.status,
        }
        if self.revoked_at is not None:
            doc["revocation_reason"] = self.revocation_reason
            doc["revoked_at"] = self.revoked_at
        return doc


def _cert_key(issuer: str, cert_id: str) -> str:
    return f"{issuer}/{cert_id}"


class ChainState:
    """Registry and certificate state; single writer, driven by ledger order."""

    def __init__(self) -> None:
        self.government: Optional[str] = None
        self.regulators: dict[str, RegulatorEntry] = {}
        self.institutions: dict[str, InstitutionEntry] = {}
        self.certificates: dict[str, CertificateRecord] = {}
        # lookup indexes; first registration wins on (improper) reuse
        self._by_metadata_hash: dict[str, str] = {}
        self._by_cid: dict[str, str] = {}

    # -- genesis and roles ---------------------------------------------------

    def init_genesis(self, government: Address) -> None:
        if self.government is not None:
            raise AlreadyInitialized("government already set at genesis")
        self.government = government.display

    def role_of(self, address: Address) -> Role:
        """Active-role view; deactivated entries read back as Public."""
        display = address.display
        if display == self.government:
            return Role.GOVERNMENT
        reg = self.regulators.get(display)
        if reg is not None and reg.active:
            return Role.REGULATOR
        inst = self.institutions.get(display)
        if inst is not None and inst.active:
            return Role.INSTITUTION
        return Role.PUBLIC

    # -- transaction dispatch --------------------------------------------------

    def apply(self, tx: SignedTransaction, height: int) -> list[Event]:
        sender = tx.sender
        payload = tx.payload
        ts = tx.timestamp
        try:
            tag = payload["type"]
            if tag == "authorize_regulator":
                event = self.authorize_regulator(sender, Address.parse(payload["regulator"]), ts)
            elif tag == "revoke_regulator":
                event = self.revoke_regulator(sender, Address.parse(payload["regulator"]))
            elif tag == "register_institution":
                event = self.register_institution(
                    sender, Address.parse(payload["institution"]), payload["name"], ts
                )
            elif tag == "deactivate_institution":
                event = self.deactivate_institution(sender, Address.parse(payload["institution"]))
            elif tag == "issue_certificate":
                event = self.issue_certificate(
                    sender,
                    payload["cert_id"],
                    payload["cid"],
                    parse_hex(payload["metadata_hash"], 32, "metadata_hash"),
                    ts,
                )
            elif tag == "revoke_certificate":
                event = self.revoke_certificate(sender, payload["cert_id"], payload["reason"], ts)
            else:
                raise Rejection("Unauthorized", f"unknown payload type {tag!r}")
        except Rejection as rej:
            return [rej.to_event()]
        return [event]

    # -- registry rules --------------------------------------------------------

    def authorize_regulator(self, sender: Address, regulator: Address, ts: int) -> Event:
        if self.role_of(sender) != Role.GOVERNMENT:
            raise Rejection("Unauthorized", "only the Government authorizes regulators")
        target = regulator.display
        if target == self.government:
            raise Rejection("RoleConflict", "target is the Government")
        inst = self.institutions.get(target)
        if inst is not None and inst.active:
            raise Rejection("RoleConflict", "target is an active Institution")
        entry = self.regulators.get(target)
        if entry is not None and entry.active:
            raise Rejection("RoleConflict", "target is already an active Regulator")
        self.regulators[target] = RegulatorEntry(
            active=True, authorized_by=sender.display, since=ts
        )
        return {"type": "RegulatorAuthorized", "regulator": target, "by": sender.display}

    def revoke_regulator(self, sender: Address, regulator: Address) -> Event:
        if self.role_of(sender) != Role.GOVERNMENT:
            raise Rejection("Unauthorized", "only the Government revokes regulators")
        entry = self.regulators.get(regulator.display)
        if entry is None or not entry.active:
            raise Rejection("NotFound", "target is not an active Regulator")
        entry.active = False
        return {"type": "RegulatorRevoked", "regulator": regulator.display, "by": sender.display}

    def register_institution(
        self, sender: Address, institution: Address, name: str, ts: int
    ) -> Event:
        if self.role_of(sender) != Role.REGULATOR:
            raise Rejection("Unauthorized", "only an active Regulator registers institutions")
        if not isinstance(name, str) or not name or len(name) > 256:
            raise Rejection("BadName", "name must be 1-256 characters")
        target = institution.display
        if target == self.government:
            raise Rejection("RoleConflict", "target is the Government")
        reg = self.regulators.get(target)
        if reg is not None and reg.active:
            raise Rejection("RoleConflict", "target is an active Regulator")
        entry = self.institutions.get(target)
        if entry is not None and entry.active:
            raise Rejection("RoleConflict", "target is already an active Institution")
        self.institutions[target] = InstitutionEntry(
            name=name, active=True, registered_by=sender.display, since=ts
        )
        return {
            "type": "InstitutionRegistered",
            "institution": target,
            "name": name,
            "by": sender.display,
        }

    def deactivate_institution(self, sender: Address, institution: Address) -> Event:
        if self.role_of(sender) != Role.REGULATOR:
            raise Rejection("Unauthorized", "only an active Regulator deactivates institutions")
        entry = self.institutions.get(institution.display)
        if entry is None or not entry.active:
            raise Rejection("NotFound", "target is not an active Institution")
        # existing certificates keep their status; only future issuance stops
        entry.active = False
        return {
            "type": "InstitutionDeactivated",
            "institution": institution.display,
            "by": sender.display,
        }

    # -- certificate rules -------------------------------------------------------

    def issue_certificate(
        self, sender: Address, cert_id: str, cid_text: str, metadata_hash: bytes, ts: int
    ) -> Event:
        if self.role_of(sender) != Role.INSTITUTION:
            raise Rejection("Unauthorized", "only an active Institution issues certificates")
        if not isinstance(cert_id, str) or not CERT_ID_RE.match(cert_id):
            raise Rejection("BadId", "cert_id must be 1-128 chars of [A-Za-z0-9._-]")
        try:
            cid = Cid.parse(cid_text)
        except CasError as exc:
            raise Rejection("CidMismatch", f"unparseable CID: {exc}") from None
        if cid.digest != metadata_hash:
            raise Rejection("CidMismatch", "CID digest does not equal metadata hash")
        key = _cert_key(sender.display, cert_id)
        if key in self.certificates:
            raise Rejection("DuplicateId", f"certificate {cert_id} already issued by sender")
        record = CertificateRecord(
            cert_id=cert_id,
            issuer=sender.display,
            cid=cid.text,
            metadata_hash=metadata_hash,
            issued_at=ts,
            status="Valid",
        )
        self.certificates[key] = record
        self._by_metadata_hash.setdefault(metadata_hash.hex(), key)
        self._by_cid.setdefault(cid.text, key)
        return {
            "type": "CertificateIssued",
            "issuer": sender.display,
            "cert_id": cert_id,
            "cid": cid.text,
        }

    def revoke_certificate(self, sender: Address, cert_id: str, reason: str, ts: int) -> Event:
        if self.role_of(sender) != Role.INSTITUTION:
            raise Rejection("Unauthorized", "only the issuing active Institution revokes")
        record = self.certificates.get(_cert_key(sender.display, cert_id))
        if record is None:
            # issuer-scoped ids: the same id under another issuer is not ours to touch
            if any(r.cert_id == cert_id for r in self.certificates.values()):
                raise Rejection("Unauthorized", "certificate was issued by a different institution")
            raise Rejection("NotFound", f"no certificate {cert_id} issued by sender")
        if record.status == "Revoked":
            raise Rejection("AlreadyRevoked", f"certificate {cert_id} is already revoked")
        if not isinstance(reason, str):
            raise Rejection("BadName", "reason must be a string")
        record.status = "Revoked"
        record.revoked_at = ts
        record.revocation_reason = reason
        return {
            "type": "CertificateRevoked",
            "issuer": sender.display,
            "cert_id": cert_id,
            "reason": reason,
        }

    # -- reads --------------------------------------------------------------------

    def verify_certificate(
        self, issuer: Address, cert_id: str
    ) -> tuple[str, Optional[CertificateRecord]]:
        record = self.certificates.get(_cert_key(issuer.display, cert_id))
        if record is None:
            return "Unknown", None
        return record.status, record

    def find_by_metadata_hash(self, digest: bytes) -> Optional[CertificateRecord]:
        key = self._by_metadata_hash.get(digest.hex())
        return self.certificates.get(key) if key else None

    def find_by_cid(self, cid_text: str) -> Optional[CertificateRecord]:
        key = self._by_cid.get(cid_text)
        return self.certificates.get(key) if key else None

    def stats(self) -> dict:
        per_institution: dict[str, int] = {}
        issued = 0
        revoked = 0
        for record in self.certificates.values():
            issued += 1
            per_institution[record.issuer] = per_institution.get(record.issuer, 0) + 1
            if record.status == "Revoked":
                revoked += 1
        return {
            "institutions_active": sum(1 for e in self.institutions.values() if e.active),
            "issued_total": issued,
            "per_institution": per_institution,
            "regulators_active": sum(1 for e in self.regulators.values() if e.active),
            "revoked_total": revoked,
        }

    # -- digests and snapshots -------------------------------------------------------

    def to_doc(self) -> dict:
        return {
            "certificates": {k: r.to_doc() for k, r in self.certificates.items()},
            "government": self.government,
            "institutions": {k: e.to_doc() for k, e in self.institutions.items()},
            "regulators": {k: e.to_doc() for k, e in self.regulators.items()},
        }

    def state_root(self) -> bytes:
        return hashlib.sha256(canonical_bytes(self.to_doc())).digest()

    def snapshot_bytes(self, height: int) -> bytes:
        """Snapshot = full state + root, stamped with the sealed height it reflects."""
        return canonical_bytes(
            {
                "height": height,
                "state": self.to_doc(),
                "state_root": self.state_root().hex(),
            }
        )

    @classmethod
    def from_snapshot(cls, data: bytes) -> tuple["ChainState", int]:
        """Rebuild (state, height) from a snapshot file; raises on malformed
        or internally inconsistent input."""
        doc = parse_canonical(data)
        if not isinstance(doc, dict) or set(doc) != {"height", "state", "state_root"}:
            raise ValueError("snapshot must be {height, state, state_root}")
        height = doc["height"]
        if isinstance(height, bool) or not isinstance(height, int) or height < 0:
            raise ValueError("snapshot height must be a non-negative integer")
        state_doc = doc["state"]
        state = cls()
        state.government = state_doc["government"]
        for addr, entry in state_doc["regulators"].items():
            state.regulators[addr] = RegulatorEntry(
                active=entry["active"], authorized_by=entry["authorized_by"], since=entry["since"]
            )
        for addr, entry in state_doc["institutions"].items():
            state.institutions[addr] = InstitutionEntry(
                name=entry["name"],
                active=entry["active"],
                registered_by=entry["registered_by"],
                since=entry["since"],
            )
        for key, rec in state_doc["certificates"].items():
            record = CertificateRecord(
                cert_id=rec["cert_id"],
                issuer=rec["issuer"],
                cid=rec["cid"],
                metadata_hash=parse_hex(rec["metadata_hash"], 32, "metadata_hash"),
                issued_at=rec["issued_at"],
                status=rec["status"],
                revoked_at=rec.get("revoked_at"),
                revocation_reason=rec.get("revocation_reason"),
            )
            state.certificates[key] = record
            state._by_metadata_hash.setdefault(record.metadata_hash.hex(), key)
            state._by_cid.setdefault(record.cid, key)
        if state.state_root().hex() != doc["state_root"]:
            raise ValueError("snapshot state_root does not match its state")
        return state, height
