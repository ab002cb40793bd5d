import hashlib
import json
import random
import time

import pytest
from fastapi.testclient import TestClient

from credledger.canonical import canonical_bytes
from credledger.cas import canonicalize_metadata, compute_cid
from credledger.identity import (
    authorize_regulator_payload,
    issue_certificate_payload,
    register_institution_payload,
    revoke_certificate_payload,
    sign_transaction,
)
from credledger.ledger import BadSignature, CorruptLedger, NonceReplay
from credledger.node import (
    ClockSkew,
    ConfigInvalid,
    Node,
    NodeConfig,
    SnapshotMismatch,
    build_app,
)

from conftest import boot_node, issue_certificate, make_metadata, seeded, setup_institution

GOV = seeded(b"gov")
REG = seeded(b"reg")
INST = seeded(b"inst")
PUBLIC = seeded(b"public")


class TestBoot:
    def test_fresh_boot_seals_genesis(self, tmp_path):
        node = boot_node(tmp_path, GOV)
        assert node.ledger.head.height == 0
        assert node.state.role_of(GOV.address).value == "Government"
        node.close()

    def test_reboot_restores_state_root(self, tmp_path):
        node = boot_node(tmp_path, GOV)
        setup_institution(node, GOV, REG, INST)
        issue_certificate(node, INST, "C-1", nonce=0)
        root = node.state.state_root()
        height = node.ledger.head.height
        node.close()
        again = boot_node(tmp_path, GOV)
        assert again.state.state_root() == root
        assert again.ledger.head.height == height
        again.close()

    def test_boot_rejects_flipped_ledger_byte(self, tmp_path):
        node = boot_node(tmp_path, GOV)
        setup_institution(node, GOV, REG, INST)
        node.close()
        path = tmp_path / "node" / "ledger.log"
        raw = bytearray(path.read_bytes())
        raw[len(raw) // 2] ^= 0x10
        path.write_bytes(bytes(raw))
        with pytest.raises(CorruptLedger):
            boot_node(tmp_path, GOV)

    def test_boot_rejects_other_government(self, tmp_path):
        boot_node(tmp_path, GOV).close()
        with pytest.raises(ConfigInvalid):
            boot_node(tmp_path, REG)

    def test_unreadable_snapshot_falls_back_to_replay(self, tmp_path):
        node = boot_node(tmp_path, GOV)
        setup_institution(node, GOV, REG, INST)
        node.close()
        snap = tmp_path / "node" / "snapshot.json"
        snap.write_bytes(snap.read_bytes()[: len(snap.read_bytes()) // 2])
        again = boot_node(tmp_path, GOV)
        assert again.state.role_of(INST.address).value == "Institution"
        again.close()

    def test_stale_snapshot_from_crash_is_accepted(self, tmp_path):
        node = boot_node(tmp_path, GOV)
        setup_institution(node, GOV, REG, INST)
        node.snapshot()
        # transactions after the snapshot, then no clean shutdown
        issue_certificate(node, INST, "C-1", nonce=0)
        root = node.state.state_root()
        node.ledger.close()
        again = boot_node(tmp_path, GOV)
        assert again.state.state_root() == root
        again.close()

    def test_consistent_but_wrong_snapshot_aborts(self, tmp_path):
        from credledger.chainstate import ChainState

        node = boot_node(tmp_path, GOV)
        setup_institution(node, GOV, REG, INST)
        height = node.ledger.head.height
        node.close()
        # internally consistent snapshot that disagrees with replay at its height
        forged = ChainState()
        forged.init_genesis(GOV.address)
        forged.authorize_regulator(GOV.address, PUBLIC.address, 123)
        (tmp_path / "node" / "snapshot.json").write_bytes(forged.snapshot_bytes(height))
        with pytest.raises(SnapshotMismatch):
            boot_node(tmp_path, GOV)

    def test_snapshot_beyond_ledger_aborts(self, tmp_path):
        node = boot_node(tmp_path, GOV)
        state_copy = node.state
        node.close()
        (tmp_path / "node" / "snapshot.json").write_bytes(state_copy.snapshot_bytes(99))
        with pytest.raises(SnapshotMismatch):
            boot_node(tmp_path, GOV)

    def test_bad_config_rejected(self, tmp_path):
        with pytest.raises(ConfigInvalid):
            NodeConfig(data_dir=tmp_path, government="not-an-address").validate()
        with pytest.raises(ConfigInvalid):
            NodeConfig(
                data_dir=tmp_path, government=GOV.address.display, block_interval=0
            ).validate()


class TestSubmit:
    def test_issue_flow_events(self, tmp_path):
        node = boot_node(tmp_path, GOV)
        receipt, events = node.submit(
            sign_transaction(GOV, authorize_regulator_payload(REG.address), 0, int(time.time()))
        )
        assert receipt.height == 1
        assert events[0]["type"] == "RegulatorAuthorized"
        node.close()

    def test_policy_rejection_is_recorded_on_ledger(self, tmp_path):
        node = boot_node(tmp_path, GOV)
        receipt, events = node.submit(
            sign_transaction(PUBLIC, authorize_regulator_payload(REG.address), 0, int(time.time()))
        )
        assert events[0]["type"] == "Rejected"
        assert node.ledger.get_tx(receipt.tx_hash) is not None
        assert node.events_for(receipt.tx_hash) == events
        node.close()

    def test_bad_signature_never_reaches_ledger(self, tmp_path):
        from dataclasses import replace

        node = boot_node(tmp_path, GOV)
        tx = sign_transaction(GOV, authorize_regulator_payload(REG.address), 0, int(time.time()))
        with pytest.raises(BadSignature):
            node.submit(replace(tx, signature=bytes(64)))
        assert node.ledger.head.height == 0
        node.close()

    def test_nonce_replay_rejected(self, tmp_path):
        node = boot_node(tmp_path, GOV)
        tx = sign_transaction(GOV, authorize_regulator_payload(REG.address), 0, int(time.time()))
        node.submit(tx)
        with pytest.raises(NonceReplay):
            node.submit(tx)
        node.close()

    def test_clock_skew_rejected(self, tmp_path):
        node = boot_node(tmp_path, GOV)
        stale = sign_transaction(
            GOV, authorize_regulator_payload(REG.address), 0, int(time.time()) - 200_000
        )
        with pytest.raises(ClockSkew):
            node.submit(stale)
        node.close()

    def test_block_interval_batches(self, tmp_path):
        data_dir = tmp_path / "batch"
        config = NodeConfig(
            data_dir=data_dir,
            government=GOV.address.display,
            block_interval=3,
            signing_key_path=data_dir / "report.key",
        )
        node = Node.boot(config)
        now = int(time.time())
        r1, e1 = node.submit(sign_transaction(GOV, authorize_regulator_payload(REG.address), 0, now))
        assert r1.height is None and e1 == []
        r2, _ = node.submit(
            sign_transaction(REG, register_institution_payload(INST.address, "DU"), 0, now)
        )
        assert r2.height is None
        r3, e3 = node.submit(
            sign_transaction(GOV, authorize_regulator_payload(PUBLIC.address), 1, now)
        )
        assert r3.height == 1 and e3[0]["type"] == "RegulatorAuthorized"
        # the earlier pending txs were applied with the same seal
        assert node.events_for(r1.tx_hash)[0]["type"] == "RegulatorAuthorized"
        assert node.events_for(r2.tx_hash)[0]["type"] == "InstitutionRegistered"
        node.close()


class TestCrashRecovery:
    def test_kill_between_submits_loses_nothing(self, tmp_path):
        """Abandon the node object without shutdown at random points; all
        acknowledged transactions must survive the restart."""
        rng = random.Random(41)
        for trial in range(20):
            data_dir = tmp_path / f"crash-{trial}"
            config = NodeConfig(
                data_dir=data_dir,
                government=GOV.address.display,
                signing_key_path=data_dir / "report.key",
            )
            node = Node.boot(config)
            now = int(time.time())
            node.submit(sign_transaction(GOV, authorize_regulator_payload(REG.address), 0, now))
            node.submit(
                sign_transaction(REG, register_institution_payload(INST.address, "DU"), 0, now)
            )
            acked = []
            for i in range(rng.randrange(1, 8)):
                _, canonical = issue_certificate(node, INST, f"C-{i}", nonce=i)
                acked.append((f"C-{i}", canonical))
            root = node.state.state_root()
            # simulate SIGKILL: drop without close/snapshot (data is fsynced)
            node.ledger._file.close()
            del node
            revived = Node.boot(config)
            assert revived.state.state_root() == root
            for cert_id, canonical in acked:
                status, record = revived.state.verify_certificate(INST.address, cert_id)
                assert status == "Valid"
                assert record.metadata_hash == hashlib.sha256(canonical).digest()
            revived.close()


@pytest.fixture
def api(tmp_path):
    node = boot_node(tmp_path, GOV)
    setup_institution(node, GOV, REG, INST)
    client = TestClient(build_app(node))
    yield node, client
    node.close()


def issue_via_api(node, client, cert_id: str, nonce: int) -> tuple[dict, str]:
    doc = make_metadata(cert_id, INST)
    canonical = canonicalize_metadata(doc)
    upload = client.post("/v1/metadata", content=canonical)
    assert upload.status_code == 200
    cid_text = upload.json()["cid"]
    payload = issue_certificate_payload(cert_id, cid_text, hashlib.sha256(canonical).digest())
    tx = sign_transaction(INST, payload, nonce, int(time.time()))
    response = client.post("/v1/tx", content=canonical_bytes(tx.to_doc()))
    assert response.status_code == 200
    assert response.json()["events"][0]["type"] == "CertificateIssued"
    return doc, cid_text


class TestHttpApi:
    def test_submit_and_events(self, api):
        node, client = api
        tx = sign_transaction(
            GOV, authorize_regulator_payload(PUBLIC.address), 1, int(time.time())
        )
        response = client.post("/v1/tx", content=canonical_bytes(tx.to_doc()))
        assert response.status_code == 200
        body = response.json()
        assert body["events"][0]["type"] == "RegulatorAuthorized"
        assert body["receipt"]["tx_hash"] == tx.tx_hash.hex()

    def test_malformed_tx_rejected(self, api):
        _, client = api
        response = client.post("/v1/tx", content=b'{"not": "a tx"}')
        assert response.status_code == 400
        assert response.json()["error"] == "MalformedTransaction"

    def test_bad_signature_rejected(self, api):
        _, client = api
        tx = sign_transaction(GOV, authorize_regulator_payload(PUBLIC.address), 1, int(time.time()))
        doc = tx.to_doc()
        doc["signature"] = "0" * 128
        response = client.post("/v1/tx", content=canonical_bytes(doc))
        assert response.status_code == 400
        assert response.json()["error"] == "BadSignature"

    def test_nonce_replay_conflict(self, api):
        _, client = api
        tx = sign_transaction(GOV, authorize_regulator_payload(PUBLIC.address), 1, int(time.time()))
        assert client.post("/v1/tx", content=canonical_bytes(tx.to_doc())).status_code == 200
        response = client.post("/v1/tx", content=canonical_bytes(tx.to_doc()))
        assert response.status_code == 409
        assert response.json()["error"] == "NonceReplay"

    def test_roles_endpoint(self, api):
        _, client = api
        for key, role in ((GOV, "Government"), (REG, "Regulator"), (INST, "Institution"), (PUBLIC, "Public")):
            body = client.get(f"/v1/roles/{key.address.display}").json()
            assert body == {"address": key.address.display, "role": role}

    def test_nonce_endpoint(self, api):
        _, client = api
        body = client.get(f"/v1/nonce/{GOV.address.display}").json()
        assert body == {"address": GOV.address.display, "next_nonce": 1}

    def test_certificate_lifecycle_over_http(self, api):
        node, client = api
        issue_via_api(node, client, "HTTP-1", nonce=0)
        record = client.get(f"/v1/certificates/{INST.address.display}/HTTP-1").json()
        assert record["status"] == "Valid"

        report = client.get(
            "/v1/verify", params={"i": INST.address.display, "c": "HTTP-1"}
        ).json()
        assert report["status"] == "Valid"

        revoke = sign_transaction(
            INST, revoke_certificate_payload("HTTP-1", "records error"), 1, int(time.time())
        )
        assert client.post("/v1/tx", content=canonical_bytes(revoke.to_doc())).status_code == 200
        report = client.get(
            "/v1/verify", params={"i": INST.address.display, "c": "HTTP-1"}
        ).json()
        assert report["status"] == "Revoked"

    def test_verify_by_hash_cid_and_qr(self, api):
        node, client = api
        doc, cid_text = issue_via_api(node, client, "HTTP-2", nonce=0)
        digest = hashlib.sha256(canonicalize_metadata(doc)).hexdigest()
        by_hash = client.get("/v1/verify", params={"h": digest}).json()
        by_cid = client.get("/v1/verify", params={"d": cid_text}).json()
        qr = f"shikkha:verify?v=1&i={INST.address.display}&c=HTTP-2&d={cid_text}"
        by_qr = client.get("/v1/verify", params={"qr": qr}).json()
        assert by_hash["status"] == by_cid["status"] == by_qr["status"] == "Valid"
        assert by_hash["cert_id"] == by_cid["cert_id"] == by_qr["cert_id"] == "HTTP-2"

    def test_verify_requires_exactly_one_key(self, api):
        _, client = api
        assert client.get("/v1/verify").status_code == 400
        response = client.get(
            "/v1/verify", params={"h": "00" * 32, "d": compute_cid(b"x").text}
        )
        assert response.status_code == 400

    def test_metadata_round_trip(self, api):
        _, client = api
        content = canonicalize_metadata(make_metadata("META-1", INST))
        cid_text = client.post("/v1/metadata", content=content).json()["cid"]
        fetched = client.get(f"/v1/metadata/{cid_text}")
        assert fetched.content == content
        assert client.get(f"/v1/metadata/{compute_cid(b'absent').text}").status_code == 404

    def test_metadata_too_large(self, api):
        _, client = api
        assert client.post("/v1/metadata", content=b"\0" * ((1 << 20) + 1)).status_code == 413

    def test_chain_queries(self, api):
        node, client = api
        head = client.get("/v1/head").json()
        assert head["height"] == node.ledger.head.height
        block = client.get("/v1/blocks/0").json()
        assert block["height"] == 0
        assert client.get("/v1/blocks/999").status_code == 404
        tx_hash = node.ledger.blocks[1].tx_hashes[0]
        fetched = client.get(f"/v1/tx/{tx_hash.hex()}")
        assert fetched.status_code == 200
        assert json.loads(fetched.content)["sender"] == GOV.address.display
        assert client.get(f"/v1/tx/{'0' * 64}").status_code == 404

    def test_stats_and_audit(self, api):
        node, client = api
        issue_via_api(node, client, "S-1", nonce=0)
        stats = client.get("/v1/stats").json()
        assert stats["issued_total"] == 1
        assert stats["per_institution"] == {INST.address.display: 1}
        assert client.get("/v1/audit").json() == {"ok": True}

    def test_gets_never_change_state_root(self, api):
        node, client = api
        issue_via_api(node, client, "G-1", nonce=0)
        root = client.get("/v1/state-root").json()["state_root"]
        for path in (
            "/v1/head",
            "/v1/stats",
            "/v1/audit",
            f"/v1/roles/{GOV.address.display}",
            f"/v1/certificates/{INST.address.display}/G-1",
        ):
            client.get(path)
        client.get("/v1/verify", params={"i": INST.address.display, "c": "G-1"})
        assert client.get("/v1/state-root").json()["state_root"] == root

    def test_responses_are_canonical_bytes(self, api):
        node, client = api
        response = client.get("/v1/stats")
        assert response.content == canonical_bytes(json.loads(response.content))


class TestTwoNodeDeterminism:
    def test_same_sequence_same_state_root(self, tmp_path):
        txs = []
        now = int(time.time())
        txs.append(sign_transaction(GOV, authorize_regulator_payload(REG.address), 0, now))
        txs.append(sign_transaction(REG, register_institution_payload(INST.address, "DU"), 0, now))
        doc = make_metadata("D-1", INST)
        canonical = canonicalize_metadata(doc)
        cid = compute_cid(canonical)
        txs.append(
            sign_transaction(
                INST,
                issue_certificate_payload("D-1", cid.text, hashlib.sha256(canonical).digest()),
                0,
                now,
            )
        )
        roots = []
        for name in ("a", "b"):
            node = boot_node(tmp_path, GOV, name=name)
            client = TestClient(build_app(node))
            for tx in txs:
                assert client.post("/v1/tx", content=canonical_bytes(tx.to_doc())).status_code == 200
            roots.append(client.get("/v1/state-root").content)
            node.close()
        assert roots[0] == roots[1]
