import pytest

from confexec import codec
from confexec.chain import EMPTY_ROOT, Block, MerkleProof, SignedTransaction, TxKind
from confexec.crypto import Rng, hash_bytes, node_keypair_from_seed
from confexec.ledger import Ledger


def keys(i):
    return node_keypair_from_seed(Rng(b"acct").child(i).bytes(32))


def plain_tx(k, nonce, to=b"\x01" * 20, amount=1):
    return SignedTransaction.create(k.private, k.public, TxKind.PLAIN, codec.encode({"to": to, "amount": amount}), nonce)


@pytest.fixture
def ledger():
    accounts = {keys(i).address: 1000 for i in range(5)}
    return Ledger(accounts=accounts)


def test_genesis_head(ledger):
    number, h = ledger.chain_head()
    assert number == 0 and h == ledger.get_block(0).block_hash


def test_valid_tx_lands_in_next_block(ledger):
    tx = plain_tx(keys(0), 0)
    assert ledger.submit(tx).accepted
    block = ledger.produce_block()
    assert list(block.transactions) == [tx]
    assert ledger.receipt(1, 0).ok


def test_replayed_nonce_rejected(ledger):
    tx = plain_tx(keys(0), 0)
    ledger.submit(tx)
    res = ledger.submit(tx)
    assert not res.accepted and res.reason == "stale nonce"


def test_flipped_signature_bits_rejected(ledger):
    tx = plain_tx(keys(0), 0)
    for bit in range(0, len(tx.signature) * 8, 7):
        sig = bytearray(tx.signature)
        sig[bit // 8] ^= 1 << (bit % 8)
        forged = SignedTransaction(tx.sender, tx.sender_key, tx.kind, tx.payload, tx.nonce, bytes(sig))
        res = ledger.submit(forged)
        assert not res.accepted and res.reason == "bad signature"


def test_empty_block(ledger):
    block = ledger.produce_block()
    assert len(block.transactions) == 0 and block.merkle_root == EMPTY_ROOT


def test_submission_order_preserved(ledger):
    txs = [plain_tx(keys(i), 0) for i in range(3)]
    for tx in txs:
        ledger.submit(tx)
    assert list(ledger.produce_block().transactions) == txs


def test_per_sender_nonce_order_within_global_order(ledger):
    rng = Rng(b"order")
    nonces = [0] * 5
    for _ in range(100):
        s = rng.randbelow(5)
        ledger.submit(plain_tx(keys(s), nonces[s]))
        nonces[s] += 1
    block = ledger.produce_block()
    assert len(block.transactions) == 100
    last = {}
    for tx in block.transactions:
        assert tx.nonce > last.get(tx.sender, -1)
        last[tx.sender] = tx.nonce


def test_head_advances(ledger):
    for k in range(1, 6):
        ledger.produce_block()
        number, h = ledger.chain_head()
        assert number == k and ledger.get_block(number).block_hash == h


def test_inclusion_proofs_exhaustive():
    accounts = {keys(i).address: 10**6 for i in range(3)}
    ledger = Ledger(accounts=accounts)
    rng = Rng(b"proofs")
    nonces = [0, 0, 0]
    for _ in range(50):
        for _ in range(rng.randbelow(6)):
            s = rng.randbelow(3)
            ledger.submit(plain_tx(keys(s), nonces[s]))
            nonces[s] += 1
        ledger.produce_block()
    checked = 0
    for number in range(1, 51):
        block = ledger.get_block(number)
        for i, tx in enumerate(block.transactions):
            proof = ledger.prove_inclusion(number, i)
            assert Ledger.verify_inclusion(block.header, tx, proof)
            for j, (sib, left) in enumerate(proof.sibling_path):
                bad = list(proof.sibling_path)
                bad[j] = (hash_bytes(sib), left)
                forged = MerkleProof(proof.leaf_index, tuple(bad))
                assert not Ledger.verify_inclusion(block.header, tx, forged)
            checked += 1
    assert checked > 50


def test_single_leaf_proof(ledger):
    tx = plain_tx(keys(0), 0)
    ledger.submit(tx)
    ledger.produce_block()
    ledger.produce_block()
    proof = ledger.prove_inclusion(1, 0)
    assert Ledger.verify_inclusion(ledger.get_block(1).header, tx, proof)
    assert not Ledger.verify_inclusion(ledger.get_block(2).header, tx, proof)


def test_block_round_trip(ledger):
    ledger.submit(plain_tx(keys(0), 0))
    block = ledger.produce_block()
    again = Block.decode(block.encode())
    assert again.block_hash == block.block_hash and again.recomputed_root() == block.merkle_root


def test_reorg_requeues():
    led = Ledger(accounts={keys(0).address: 100}, reorg_capable=True)
    tx = plain_tx(keys(0), 0)
    led.submit(tx)
    dropped = led.produce_block()
    led.reorg()
    assert led.chain_head()[0] == 0 and led.pending == [tx]
    assert led.dropped == [dropped]
