import pytest
from hypothesis import given, settings, strategies as st

from confexec.crypto import (
    IntegrityError,
    KeyRole,
    KeyRoleError,
    RequestKeyPair,
    Rng,
    SymmetricKey,
    aead_decrypt,
    aead_encrypt,
    context_ad,
    derive_fresh_key,
    hash_bytes,
    node_keypair_from_seed,
    open_as_node,
    pk_decrypt,
    pk_encrypt,
    seal_to_node,
    sign,
    verify,
)

# sha256 of the empty string, from FIPS 180-2 test vectors
EMPTY_SHA256 = "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"


def flip(data: bytes, bit: int) -> bytes:
    b = bytearray(data)
    b[bit // 8] ^= 1 << (bit % 8)
    return bytes(b)


def test_empty_digest_is_fixed():
    assert hash_bytes(b"").hex() == EMPTY_SHA256


def test_hash_deterministic_and_bit_sensitive():
    rng = Rng(b"hash")
    for i in range(1000):
        x = rng.bytes(1 + rng.randbelow(64))
        assert hash_bytes(x) == hash_bytes(bytes(x))
        assert hash_bytes(flip(x, rng.randbelow(len(x) * 8))) != hash_bytes(x)


@pytest.fixture(scope="module")
def nodes():
    return [node_keypair_from_seed(Rng(b"n").child(i).bytes(32)) for i in range(2)]


def test_sign_verify_round_trip(nodes):
    sig = sign(nodes[0].private, b"hello")
    assert verify(nodes[0].public, b"hello", sig)
    assert not verify(nodes[1].public, b"hello", sig)


def test_verify_rejects_every_flipped_message_bit(nodes):
    msg = b"publish range 4..9"
    sig = sign(nodes[0].private, msg)
    assert all(not verify(nodes[0].public, flip(msg, i), sig) for i in range(len(msg) * 8))


def key(role=KeyRole.STATE, epoch=0, label=b"k"):
    return derive_fresh_key(role, epoch, Rng(label))


@pytest.mark.parametrize("plaintext", [b"", b"x", bytes(1000)])
def test_aead_round_trip(plaintext):
    k = key()
    ad = context_ad(b"a" * 20, 0, KeyRole.STATE)
    assert aead_decrypt(k, aead_encrypt(k, plaintext, ad, Rng(1)), ad) == plaintext


def test_aead_rotated_key_fails():
    old, new = key(epoch=0, label=b"e0"), key(epoch=1, label=b"e1")
    ad = context_ad(b"a" * 20, 0, KeyRole.STATE)
    ct = aead_encrypt(old, b"state", ad, Rng(1))
    with pytest.raises(IntegrityError):
        aead_decrypt(new, ct, ad)


def test_aead_associated_data_mutations_fail():
    k = key()
    ad = context_ad(b"a" * 20, 3, KeyRole.STATE)
    ct = aead_encrypt(k, b"payload", ad, Rng(2))
    rng = Rng(b"ad")
    for _ in range(100):
        bad = flip(ad, rng.randbelow(len(ad) * 8))
        with pytest.raises(IntegrityError):
            aead_decrypt(k, ct, bad)


def test_aead_role_is_enforced():
    k = key(KeyRole.CODE)
    with pytest.raises(KeyRoleError):
        aead_encrypt(k, b"x", b"", Rng(1), KeyRole.STATE)


def test_pk_round_trip_and_epoch_isolation():
    e0 = derive_fresh_key(KeyRole.TX, 0, Rng(b"tx0"))
    e1 = derive_fresh_key(KeyRole.TX, 1, Rng(b"tx1"))
    assert isinstance(e0, RequestKeyPair)
    ct = pk_encrypt(e0.public, b"request", Rng(3), epoch=0)
    assert pk_decrypt(e0.private, ct, 0) == b"request"
    with pytest.raises(IntegrityError):
        pk_decrypt(e1.private, ct, 1)
    with pytest.raises(IntegrityError):
        pk_decrypt(e1.private, ct, 0)


def test_pk_random_payloads_round_trip():
    kp = derive_fresh_key(KeyRole.TX, 0, Rng(b"tx"))
    rng = Rng(b"payloads")
    for i in range(1000):
        data = rng.bytes(rng.randbelow(200))
        assert pk_decrypt(kp.private, pk_encrypt(kp.public, data, rng, 0), 0) == data


def test_seal_to_node(nodes):
    ct = seal_to_node(nodes[0].public, b"envelope", Rng(4))
    assert open_as_node(nodes[0], ct) == b"envelope"
    with pytest.raises(IntegrityError):
        open_as_node(nodes[1], ct)


def test_derivation_determinism_and_collisions():
    assert key(label=b"same") == key(label=b"same")
    rng = Rng(b"many")
    a, b = derive_fresh_key(KeyRole.INFO, 0, rng), derive_fresh_key(KeyRole.INFO, 0, rng)
    assert a.material != b.material
    rng = Rng(b"scan")
    seen = {derive_fresh_key(KeyRole.STATE, 0, rng).material for _ in range(10_000)}
    assert len(seen) == 10_000


def test_symmetric_key_repr_hides_material():
    k = SymmetricKey(b"\x07" * 32, KeyRole.INFO, 2)
    assert "07" not in repr(k)


@settings(max_examples=50)
@given(st.binary(max_size=64), st.integers(0, 10**6))
def test_rng_children_are_reproducible(label, n):
    assert Rng(label).child(n).bytes(16) == Rng(label).child(n).bytes(16)


@given(st.integers(1, 1000))
def test_randbelow_in_range(n):
    rng = Rng(n)
    assert all(0 <= rng.randbelow(n) < n for _ in range(20))
