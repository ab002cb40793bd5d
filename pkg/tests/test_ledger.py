import hashlib
import random

import pytest

from credledger.identity import (
    authorize_regulator_payload,
    register_institution_payload,
    sign_transaction,
)
from credledger.ledger import (
    BadSignature,
    ChainAudit,
    CorruptLedger,
    Ledger,
    NonceReplay,
    NotFound,
    NothingToSeal,
    ZERO_HASH,
    merkle_root,
)

from conftest import seeded

NOW = 1_760_000_000


def brute_force_merkle(leaves):
    """Independent pairwise reduction; duplicates any odd trailing node,
    including a lone leaf, so at least one hashing round always runs."""
    if not leaves:
        return hashlib.sha256(b"").digest()
    level = list(leaves)
    done = False
    while not done:
        nxt = []
        for i in range(0, len(level), 2):
            left = level[i]
            right = level[i + 1] if i + 1 < len(level) else level[i]
            nxt.append(hashlib.sha256(left + right).digest())
        level = nxt
        done = len(level) == 1
    return level[0]


def make_tx(kp, nonce, target=None):
    target = target if target is not None else kp.address
    return sign_transaction(kp, authorize_regulator_payload(target), nonce, NOW)


class TestMerkleRoot:
    def test_empty_list_golden(self):
        # SHA-256 of the empty byte string; oracle: any SHA-256 tool
        assert (
            merkle_root([]).hex()
            == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        )

    def test_single_leaf_duplicates(self):
        leaf = hashlib.sha256(b"leaf").digest()
        assert merkle_root([leaf]) == hashlib.sha256(leaf + leaf).digest()

    def test_agrees_with_brute_force_oracle(self):
        rng = random.Random(3)
        for length in range(17):
            for _ in range(100):
                leaves = [bytes(rng.getrandbits(8) for _ in range(32)) for _ in range(length)]
                assert merkle_root(leaves) == brute_force_merkle(leaves)

    def test_four_leaves_explicit(self):
        leaves = [hashlib.sha256(bytes([i])).digest() for i in range(4)]
        left = hashlib.sha256(leaves[0] + leaves[1]).digest()
        right = hashlib.sha256(leaves[2] + leaves[3]).digest()
        assert merkle_root(leaves) == hashlib.sha256(left + right).digest()


class TestAppendSeal:
    def test_append_returns_pending_receipt(self):
        ledger = Ledger()
        kp = seeded(b"a")
        receipt = ledger.append(make_tx(kp, 0))
        assert receipt.height is None
        assert receipt.tx_hash == ledger.pending[0].tx_hash

    def test_nonce_replay_rejected(self):
        ledger = Ledger()
        kp = seeded(b"a")
        tx = make_tx(kp, 0)
        ledger.append(tx)
        with pytest.raises(NonceReplay):
            ledger.append(tx)

    def test_nonce_must_strictly_increase(self):
        ledger = Ledger()
        kp = seeded(b"a")
        ledger.append(make_tx(kp, 5))
        with pytest.raises(NonceReplay):
            ledger.append(make_tx(kp, 5))
        with pytest.raises(NonceReplay):
            ledger.append(make_tx(kp, 3))
        ledger.append(make_tx(kp, 6))

    def test_bad_signature_rejected(self):
        from dataclasses import replace

        ledger = Ledger()
        kp = seeded(b"a")
        tx = replace(make_tx(kp, 0), signature=bytes(64))
        with pytest.raises(BadSignature):
            ledger.append(tx)

    def test_genesis_seal_empty(self):
        ledger = Ledger()
        block = ledger.seal_block(now=NOW)
        assert block.height == 0
        assert block.prev_hash == ZERO_HASH
        assert block.merkle_root == hashlib.sha256(b"").digest()
        assert block.tx_hashes == ()

    def test_seal_drains_pending_in_acceptance_order(self):
        ledger = Ledger()
        ledger.seal_block(now=NOW)
        keys = [seeded(bytes([i])) for i in range(3)]
        hashes = []
        for kp in keys:
            tx = make_tx(kp, 0)
            hashes.append(tx.tx_hash)
            ledger.append(tx)
        block = ledger.seal_block(now=NOW + 1)
        assert list(block.tx_hashes) == hashes
        assert ledger.pending == []

    def test_seal_empty_non_genesis_rejected(self):
        ledger = Ledger()
        ledger.seal_block(now=NOW)
        with pytest.raises(NothingToSeal):
            ledger.seal_block(now=NOW + 1)

    def test_chain_links(self):
        ledger = Ledger()
        ledger.seal_block(now=NOW)
        for i in range(4):
            ledger.append(make_tx(seeded(bytes([i])), 0))
            ledger.seal_block(now=NOW + i)
        for height, block in enumerate(ledger.blocks):
            assert block.height == height
            if height:
                assert block.prev_hash == ledger.blocks[height - 1].block_hash


class TestQuery:
    def test_head_on_empty_chain(self):
        assert Ledger().head is None

    def test_genesis_by_height(self):
        ledger = Ledger()
        sealed = ledger.seal_block(now=NOW)
        assert ledger.get_block(0) == sealed

    def test_tx_round_trip_bit_exact(self):
        ledger = Ledger()
        kp = seeded(b"a")
        tx = make_tx(kp, 0)
        ledger.append(tx)
        assert ledger.get_tx(tx.tx_hash) == tx

    def test_not_found(self):
        ledger = Ledger()
        with pytest.raises(NotFound):
            ledger.get_block(0)
        with pytest.raises(NotFound):
            ledger.get_tx(bytes(32))


def build_chain(path, n_txs=10, fsync=False):
    ledger = Ledger(path, fsync=fsync)
    ledger.seal_block(now=NOW)
    gov = seeded(b"gov")
    reg = seeded(b"reg")
    nonce = {id(gov): 0, id(reg): 0}
    for i in range(n_txs):
        kp = gov if i % 2 == 0 else reg
        payload = (
            authorize_regulator_payload(seeded(bytes([i])).address)
            if i % 2 == 0
            else register_institution_payload(seeded(bytes([i])).address, f"Inst {i}")
        )
        ledger.append(sign_transaction(kp, payload, nonce[id(kp)], NOW + i))
        nonce[id(kp)] += 1
        ledger.seal_block(now=NOW + i)
    return ledger


class TestVerifyChain:
    def test_fresh_chain_audits_clean(self, tmp_path):
        ledger = build_chain(tmp_path / "ledger.log")
        assert ledger.verify_chain() == ChainAudit(ok=True)

    def test_persistence_round_trip(self, tmp_path):
        path = tmp_path / "ledger.log"
        ledger = build_chain(path)
        ledger.close()
        reopened = Ledger.open(path)
        assert [b.block_hash for b in reopened.blocks] == [b.block_hash for b in ledger.blocks]
        assert reopened.verify_chain().ok is True

    def test_single_bit_mutations_always_detected(self, tmp_path):
        path = tmp_path / "ledger.log"
        build_chain(path, n_txs=8).close()
        original = path.read_bytes()
        rng = random.Random(17)
        for _ in range(300):
            pos = rng.randrange(len(original) * 8)
            mutated = bytearray(original)
            mutated[pos // 8] ^= 1 << (pos % 8)
            path.write_bytes(bytes(mutated))
            try:
                audit = Ledger.open(path).verify_chain()
                assert audit.ok is False, f"undetected mutation at bit {pos}"
            except CorruptLedger:
                pass
        path.write_bytes(original)
        assert Ledger.open(path).verify_chain().ok is True

    def test_spliced_prev_hash_reported(self, tmp_path):
        path = tmp_path / "ledger.log"
        ledger = build_chain(path, n_txs=4)
        # rebuild block 3's record with a forged prev_hash and consistent block_hash
        from credledger.canonical import canonical_bytes
        from credledger.ledger import Block, _frame

        target = ledger.blocks[3]
        forged_prev = bytes(32)
        forged = Block(
            height=target.height,
            prev_hash=forged_prev,
            tx_hashes=target.tx_hashes,
            merkle_root=target.merkle_root,
            sealed_at=target.sealed_at,
            block_hash=Block.hash_fields(
                target.height, forged_prev, target.merkle_root, target.sealed_at, target.tx_hashes
            ),
        )
        ledger.close()
        data = path.read_bytes()
        old_record = canonical_bytes({"kind": "block", "record": target.to_doc()})
        new_record = canonical_bytes({"kind": "block", "record": forged.to_doc()})
        assert old_record in data
        path.write_bytes(data.replace(_frame(old_record), _frame(new_record)))
        audit = Ledger.open(path).verify_chain()
        assert audit.ok is False
        assert audit.first_bad_height == 3
        assert audit.reason == "PrevHashMismatch"

    def test_tx_flip_reported_as_tx_or_merkle(self, tmp_path):
        path = tmp_path / "ledger.log"
        ledger = build_chain(path, n_txs=4)
        tx = ledger.transactions_in(ledger.blocks[2])[0]
        ledger.close()
        data = path.read_bytes()
        needle = tx.signature.hex().encode()
        flipped = needle[:-1] + (b"0" if needle[-1:] != b"0" else b"1")
        path.write_bytes(data.replace(needle, flipped, 1))
        audit = Ledger.open(path).verify_chain()
        assert audit.ok is False
        assert audit.first_bad_height == 2
        assert audit.reason in ("TxHashMismatch", "MerkleMismatch")

    def test_truncated_file_is_corrupt(self, tmp_path):
        path = tmp_path / "ledger.log"
        build_chain(path, n_txs=4).close()
        data = path.read_bytes()
        path.write_bytes(data[:-3])
        with pytest.raises(CorruptLedger):
            Ledger.open(path)


class TestPendingReload:
    def test_trailing_unsealed_txs_stay_pending(self, tmp_path):
        path = tmp_path / "ledger.log"
        ledger = Ledger(path, fsync=False)
        ledger.seal_block(now=NOW)
        kp = seeded(b"a")
        ledger.append(make_tx(kp, 0))
        ledger.flush()
        ledger.close()
        reopened = Ledger.open(path)
        assert len(reopened.pending) == 1
        assert reopened.next_nonce(kp.address.display) == 1
