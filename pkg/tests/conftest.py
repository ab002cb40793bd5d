import contextlib
import hashlib
import threading
import time
from pathlib import Path

import pytest
import uvicorn

from credledger.cas import canonicalize_metadata
from credledger.identity import (
    KeyPair,
    authorize_regulator_payload,
    generate_keypair,
    issue_certificate_payload,
    register_institution_payload,
    sign_transaction,
)
from credledger.node import Node, NodeConfig

NOW = 1_760_000_000  # fixed reference timestamp for deterministic fixtures


def seeded(tag: bytes) -> KeyPair:
    return generate_keypair(hashlib.sha256(tag).digest())


@pytest.fixture
def gov_key() -> KeyPair:
    return seeded(b"government")


@pytest.fixture
def reg_key() -> KeyPair:
    return seeded(b"regulator")


@pytest.fixture
def inst_key() -> KeyPair:
    return seeded(b"institution")


@pytest.fixture
def public_key_pair() -> KeyPair:
    return seeded(b"public")


def make_metadata(cert_id: str, institution: KeyPair, **overrides) -> dict:
    doc = {
        "schema": "shikkhachain/cert/v1",
        "cert_id": cert_id,
        "student_name": "Aarif Hossain",
        "student_id_hash": hashlib.sha256(b"salt|" + cert_id.encode()).hexdigest(),
        "degree": "BSc in Computer Science and Engineering",
        "field_of_study": "Computer Science",
        "institution_address": institution.address.display,
        "institution_name": "Dhaka University",
        "issue_date": "2025-02-14",
        "grade": "3.85",
        "extra": {},
    }
    doc.update(overrides)
    return doc


def boot_node(tmp_path: Path, gov: KeyPair, name: str = "node", fsync: bool = True) -> Node:
    data_dir = tmp_path / name
    config = NodeConfig(
        data_dir=data_dir,
        government=gov.address.display,
        signing_key_path=data_dir / "report.key",
        fsync=fsync,
    )
    return Node.boot(config)


def setup_institution(node: Node, gov: KeyPair, reg: KeyPair, inst: KeyPair) -> None:
    """Genesis -> authorize regulator -> register institution."""
    now = int(time.time())
    node.submit(sign_transaction(gov, authorize_regulator_payload(reg.address), 0, now))
    node.submit(
        sign_transaction(
            reg, register_institution_payload(inst.address, "Dhaka University"), 0, now
        )
    )


def issue_certificate(node: Node, inst: KeyPair, cert_id: str, nonce: int) -> tuple[dict, bytes]:
    """Upload metadata and issue; returns (metadata_doc, canonical_bytes)."""
    doc = make_metadata(cert_id, inst)
    canonical = canonicalize_metadata(doc)
    cid = node.store.put(canonical)
    payload = issue_certificate_payload(cert_id, cid.text, hashlib.sha256(canonical).digest())
    node.submit(sign_transaction(inst, payload, nonce, int(time.time())))
    return doc, canonical


@pytest.fixture
def live_node(tmp_path, gov_key):
    node = boot_node(tmp_path, gov_key)
    yield node
    node.close()


@contextlib.contextmanager
def http_server(node):
    """Serve a node over real HTTP on an ephemeral port."""
    from credledger.node import build_app

    config = uvicorn.Config(
        build_app(node), host="127.0.0.1", port=0, log_level="warning", access_log=False
    )
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 10
    while not server.started:
        if time.time() > deadline:
            raise RuntimeError("uvicorn did not start in time")
        time.sleep(0.01)
    port = server.servers[0].sockets[0].getsockname()[1]
    try:
        yield f"http://127.0.0.1:{port}"
    finally:
        server.should_exit = True
        thread.join(timeout=10)
