"""Cryptographic primitives and the protocol key hierarchy.

SHA-256 digests, Ed25519 signatures, ChaCha20-Poly1305 for symmetric AEAD and
an X25519 + HKDF + ChaCha20-Poly1305 hybrid for public-key encryption. All
randomness (key material, nonces, ephemeral keys) is drawn from a
:class:`Rng`, so a whole simulation replays bit-identically from one seed.
"""

from __future__ import annotations

import functools
import hashlib
import hmac
import struct
from dataclasses import dataclass
from enum import Enum

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from . import codec

DIGEST_SIZE = 32
KEY_SIZE = 32
NONCE_SIZE = 12
ADDRESS_SIZE = 20

_RAW = serialization.Encoding.Raw
_RAW_PUB = serialization.PublicFormat.Raw


class CryptoError(Exception):
    pass


class IntegrityError(CryptoError):
    """Authentication failed: wrong key, wrong context or tampered bytes."""


class KeyFormatError(CryptoError):
    pass


class KeyRoleError(CryptoError):
    pass


# --------------------------------------------------------------------------
# hashing


def hash_bytes(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def hash_concat(*parts: bytes) -> bytes:
    h = hashlib.sha256()
    for part in parts:
        h.update(struct.pack(">I", len(part)))
        h.update(part)
    return h.digest()


def address_of(public: bytes) -> bytes:
    """Account address: truncated hash of the verification key."""
    return hash_bytes(bytes(public[:32]))[:ADDRESS_SIZE]


# --------------------------------------------------------------------------
# deterministic randomness


class Rng:
    """Splittable deterministic byte generator (SHA-256 in counter mode).

    ``child(label)`` derives an independent stream, so components can draw
    without perturbing each other's sequences.
    """

    __slots__ = ("_seed", "_counter", "_buf")

    def __init__(self, seed: bytes | int | str):
        if isinstance(seed, int):
            seed = seed.to_bytes(16, "big", signed=True)
        elif isinstance(seed, str):
            seed = seed.encode()
        self._seed = hash_concat(b"rng", bytes(seed))
        self._counter = 0
        self._buf = b""

    @property
    def seed(self) -> bytes:
        return self._seed

    def child(self, *labels: bytes | str | int) -> "Rng":
        parts = [self._seed]
        for label in labels:
            if isinstance(label, int):
                label = label.to_bytes(16, "big", signed=True)
            elif isinstance(label, str):
                label = label.encode()
            parts.append(label)
        return Rng(hash_concat(*parts))

    def bytes(self, n: int) -> bytes:
        while len(self._buf) < n:
            self._buf += hashlib.sha256(
                self._seed + self._counter.to_bytes(8, "big")
            ).digest()
            self._counter += 1
        out, self._buf = self._buf[:n], self._buf[n:]
        return out

    def randbelow(self, n: int) -> int:
        if n <= 0:
            raise ValueError("n must be positive")
        k = max(1, (n - 1).bit_length())
        nbytes = (k + 7) // 8
        mask = (1 << k) - 1
        while True:
            r = int.from_bytes(self.bytes(nbytes), "big") & mask
            if r < n:
                return r

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi]."""
        return lo + self.randbelow(hi - lo + 1)

    def random(self) -> float:
        return int.from_bytes(self.bytes(7), "big") / float(1 << 56)

    def shuffle(self, items: list) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]


# --------------------------------------------------------------------------
# key types


class KeyRole(str, Enum):
    INFO = "info"
    CODE = "code"
    STATE = "state"
    RESULT = "result"
    TX = "tx"
    NODE = "node"


SYMMETRIC_ROLES = (KeyRole.INFO, KeyRole.CODE, KeyRole.STATE, KeyRole.RESULT)


@dataclass(frozen=True)
class SymmetricKey:
    material: bytes
    role: KeyRole
    epoch: int = 0

    def __repr__(self) -> str:
        return f"SymmetricKey(role={self.role.value}, epoch={self.epoch})"


@dataclass(frozen=True)
class NodeKeyPair:
    """TEE identity. ``public`` is the Ed25519 verification key followed by
    the X25519 key peers use to encrypt envelopes to this node."""

    private: bytes
    public: bytes

    @property
    def address(self) -> bytes:
        return address_of(self.public)

    def __repr__(self) -> str:
        return f"NodeKeyPair(address={self.address.hex()})"


@dataclass(frozen=True)
class RequestKeyPair:
    private: bytes
    public: bytes
    epoch: int

    def __repr__(self) -> str:
        return f"RequestKeyPair(epoch={self.epoch})"


def _ed25519(private: bytes) -> Ed25519PrivateKey:
    if not isinstance(private, (bytes, bytearray)) or len(private) != KEY_SIZE:
        raise KeyFormatError("signing key must be 32 bytes")
    return Ed25519PrivateKey.from_private_bytes(bytes(private))


def _x25519_from_seed(seed: bytes) -> X25519PrivateKey:
    return X25519PrivateKey.from_private_bytes(hash_concat(b"x25519", seed))


def node_keypair_from_seed(seed: bytes) -> NodeKeyPair:
    sk = _ed25519(seed)
    sign_pub = sk.public_key().public_bytes(_RAW, _RAW_PUB)
    enc_pub = _x25519_from_seed(seed).public_key().public_bytes(_RAW, _RAW_PUB)
    return NodeKeyPair(private=bytes(seed), public=sign_pub + enc_pub)


def request_keypair_from_seed(seed: bytes, epoch: int) -> RequestKeyPair:
    sk = X25519PrivateKey.from_private_bytes(bytes(seed))
    return RequestKeyPair(
        private=bytes(seed),
        public=sk.public_key().public_bytes(_RAW, _RAW_PUB),
        epoch=epoch,
    )


def derive_fresh_key(role: KeyRole | str, epoch: int, rng: Rng):
    """Draw a new key for ``role`` from ``rng``.

    Returns a :class:`SymmetricKey` for info/code/state/result roles, a
    :class:`RequestKeyPair` for ``tx`` and a :class:`NodeKeyPair` for ``node``.
    """
    role = KeyRole(role)
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    material = rng.bytes(KEY_SIZE)
    if role is KeyRole.TX:
        return request_keypair_from_seed(material, epoch)
    if role is KeyRole.NODE:
        return node_keypair_from_seed(material)
    return SymmetricKey(material=material, role=role, epoch=epoch)


# --------------------------------------------------------------------------
# signatures


def sign(private: bytes, msg: bytes) -> bytes:
    return _ed25519(private).sign(bytes(msg))


def verify(public: bytes, msg: bytes, sig: bytes) -> bool:
    if not isinstance(public, (bytes, bytearray)) or len(public) < 32:
        raise KeyFormatError("verification key must be at least 32 bytes")
    return _verify(bytes(public[:32]), bytes(msg), bytes(sig))


# every replica re-checks the same signatures; the check is pure
@functools.lru_cache(maxsize=16384)
def _verify(public: bytes, msg: bytes, sig: bytes) -> bool:
    try:
        Ed25519PublicKey.from_public_bytes(public).verify(sig, msg)
    except (InvalidSignature, ValueError):
        return False
    return True


# --------------------------------------------------------------------------
# symmetric AEAD


def context_ad(address: bytes, epoch: int, role: KeyRole | str) -> bytes:
    """Associated data binding a ciphertext to (contract, epoch, role)."""
    return codec.encode([bytes(address), int(epoch), KeyRole(role).value])


def aead_encrypt(
    key: SymmetricKey,
    plaintext: bytes,
    associated_data: bytes,
    rng: Rng,
    purpose: KeyRole | str | None = None,
) -> bytes:
    if purpose is not None and KeyRole(purpose) is not key.role:
        raise KeyRoleError(f"{key.role.value} key used for {KeyRole(purpose).value}")
    nonce = rng.bytes(NONCE_SIZE)
    return nonce + ChaCha20Poly1305(key.material).encrypt(
        nonce, bytes(plaintext), bytes(associated_data)
    )


def aead_decrypt(
    key: SymmetricKey,
    ciphertext: bytes,
    associated_data: bytes,
    purpose: KeyRole | str | None = None,
) -> bytes:
    if purpose is not None and KeyRole(purpose) is not key.role:
        raise KeyRoleError(f"{key.role.value} key used for {KeyRole(purpose).value}")
    if len(ciphertext) < NONCE_SIZE + 16:
        raise IntegrityError("ciphertext too short")
    nonce, body = ciphertext[:NONCE_SIZE], ciphertext[NONCE_SIZE:]
    try:
        return ChaCha20Poly1305(key.material).decrypt(
            nonce, bytes(body), bytes(associated_data)
        )
    except InvalidTag as exc:
        raise IntegrityError("authentication failed") from exc


# --------------------------------------------------------------------------
# hybrid public-key encryption

_PK_HEADER = struct.Struct(">q")


def _hybrid_key(shared: bytes, eph_pub: bytes, recipient_pub: bytes, epoch: int) -> bytes:
    return HKDF(
        algorithm=hashes.SHA256(),
        length=KEY_SIZE,
        salt=eph_pub + recipient_pub,
        info=b"pk-encrypt" + _PK_HEADER.pack(epoch),
    ).derive(shared)


def pk_encrypt(public: bytes, plaintext: bytes, rng: Rng, epoch: int = 0) -> bytes:
    """Encrypt to an X25519 public key. The epoch travels in clear in the
    header so the receiver can select the matching private key."""
    if len(public) != 32:
        raise KeyFormatError("encryption key must be 32 bytes")
    eph = X25519PrivateKey.from_private_bytes(rng.bytes(KEY_SIZE))
    eph_pub = eph.public_key().public_bytes(_RAW, _RAW_PUB)
    shared = eph.exchange(X25519PublicKey.from_public_bytes(bytes(public)))
    key = _hybrid_key(shared, eph_pub, bytes(public), epoch)
    nonce = rng.bytes(NONCE_SIZE)
    header = _PK_HEADER.pack(epoch) + eph_pub
    return header + nonce + ChaCha20Poly1305(key).encrypt(nonce, bytes(plaintext), header)


def pk_ciphertext_epoch(ciphertext: bytes) -> int:
    if len(ciphertext) < _PK_HEADER.size:
        raise IntegrityError("ciphertext too short")
    return _PK_HEADER.unpack(ciphertext[: _PK_HEADER.size])[0]


@functools.lru_cache(maxsize=256)
def _x25519_private(private: bytes) -> tuple[X25519PrivateKey, bytes]:
    sk = X25519PrivateKey.from_private_bytes(private)
    return sk, sk.public_key().public_bytes(_RAW, _RAW_PUB)


def pk_decrypt(private: bytes, ciphertext: bytes, epoch: int = 0) -> bytes:
    hsize = _PK_HEADER.size + 32
    if len(ciphertext) < hsize + NONCE_SIZE + 16:
        raise IntegrityError("ciphertext too short")
    if pk_ciphertext_epoch(ciphertext) != epoch:
        raise IntegrityError("key epoch mismatch")
    header = ciphertext[:hsize]
    eph_pub = header[_PK_HEADER.size :]
    nonce = ciphertext[hsize : hsize + NONCE_SIZE]
    body = ciphertext[hsize + NONCE_SIZE :]
    try:
        sk, recipient_pub = _x25519_private(bytes(private))
    except ValueError as exc:
        raise KeyFormatError(str(exc)) from exc
    shared = sk.exchange(X25519PublicKey.from_public_bytes(eph_pub))
    key = _hybrid_key(shared, eph_pub, recipient_pub, epoch)
    try:
        return ChaCha20Poly1305(key).decrypt(nonce, bytes(body), header)
    except InvalidTag as exc:
        raise IntegrityError("authentication failed") from exc


def seal_to_node(node_public: bytes, plaintext: bytes, rng: Rng) -> bytes:
    """Encrypt to a node's TEE identity (its X25519 half)."""
    if len(node_public) != 64:
        raise KeyFormatError("node public key must be 64 bytes")
    return pk_encrypt(node_public[32:], plaintext, rng)


def open_as_node(keys: NodeKeyPair, ciphertext: bytes) -> bytes:
    sk = _x25519_from_seed(keys.private)
    raw = sk.private_bytes(
        serialization.Encoding.Raw,
        serialization.PrivateFormat.Raw,
        serialization.NoEncryption(),
    )
    return pk_decrypt(raw, ciphertext)


def prf(key: bytes, *parts: bytes) -> bytes:
    return hmac.new(bytes(key), hash_concat(*parts), hashlib.sha256).digest()
