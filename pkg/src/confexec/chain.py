"""Transactions, blocks and Merkle inclusion proofs."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import cached_property

from . import codec
from .crypto import DIGEST_SIZE, address_of, hash_bytes, hash_concat, sign, verify


class TxKind(str, Enum):
    REGISTER = "register"
    WITHDRAW = "withdraw"
    DEPLOY_PC = "deploy_pc"
    INVOKE_PC = "invoke_pc"
    PUBLISH = "publish"
    PLAIN = "plain"


@dataclass(frozen=True)
class SignedTransaction:
    sender: bytes
    sender_key: bytes
    kind: TxKind
    payload: bytes
    nonce: int
    signature: bytes

    @staticmethod
    def signing_bytes(kind: TxKind, payload: bytes, nonce: int) -> bytes:
        return codec.encode([b"tx", TxKind(kind).value, bytes(payload), int(nonce)])

    @classmethod
    def create(cls, private: bytes, public: bytes, kind: TxKind, payload: bytes, nonce: int):
        kind = TxKind(kind)
        sig = sign(private, cls.signing_bytes(kind, payload, nonce))
        return cls(address_of(public), bytes(public), kind, bytes(payload), int(nonce), sig)

    def verify_signature(self) -> bool:
        if address_of(self.sender_key) != self.sender:
            return False
        return verify(
            self.sender_key, self.signing_bytes(self.kind, self.payload, self.nonce), self.signature
        )

    def to_obj(self) -> list:
        return [self.sender, self.sender_key, self.kind.value, self.payload, self.nonce, self.signature]

    @classmethod
    def from_obj(cls, obj: list) -> "SignedTransaction":
        sender, key, kind, payload, nonce, sig = obj
        return cls(sender, key, TxKind(kind), payload, nonce, sig)

    def encode(self) -> bytes:
        return codec.encode(self.to_obj())

    @classmethod
    def decode(cls, data: bytes) -> "SignedTransaction":
        return cls.from_obj(codec.decode(data))

    @cached_property
    def digest(self) -> bytes:
        return hash_bytes(self.encode())


# --------------------------------------------------------------------------
# Merkle tree

EMPTY_ROOT = hash_bytes(b"")


def _leaf(digest: bytes) -> bytes:
    return hash_bytes(b"\x00" + digest)


def _node(left: bytes, right: bytes) -> bytes:
    return hash_bytes(b"\x01" + left + right)


def _levels(leaf_digests: list[bytes]) -> list[list[bytes]]:
    level = [_leaf(d) for d in leaf_digests]
    levels = [level]
    while len(level) > 1:
        nxt = []
        for i in range(0, len(level), 2):
            if i + 1 < len(level):
                nxt.append(_node(level[i], level[i + 1]))
            else:
                # odd node is promoted unchanged, no duplication
                nxt.append(level[i])
        level = nxt
        levels.append(level)
    return levels


def merkle_root(leaf_digests: list[bytes]) -> bytes:
    if not leaf_digests:
        return EMPTY_ROOT
    return _levels(leaf_digests)[-1][0]


@dataclass(frozen=True)
class MerkleProof:
    leaf_index: int
    # (sibling digest, True if the sibling sits on the left)
    sibling_path: tuple[tuple[bytes, bool], ...]


def merkle_proof(leaf_digests: list[bytes], index: int) -> MerkleProof:
    if not 0 <= index < len(leaf_digests):
        raise IndexError(f"leaf index {index} out of range")
    path = []
    pos = index
    for level in _levels(leaf_digests)[:-1]:
        sib = pos ^ 1
        if sib < len(level):
            path.append((level[sib], sib < pos))
        pos //= 2
    return MerkleProof(index, tuple(path))


def fold_proof(leaf_digest: bytes, proof: MerkleProof) -> bytes:
    acc = _leaf(leaf_digest)
    for sibling, on_left in proof.sibling_path:
        acc = _node(sibling, acc) if on_left else _node(acc, sibling)
    return acc


# --------------------------------------------------------------------------
# blocks


@dataclass(frozen=True)
class BlockHeader:
    number: int
    parent_hash: bytes
    merkle_root: bytes
    tick: int

    def encode(self) -> bytes:
        return codec.encode([self.number, self.parent_hash, self.merkle_root, self.tick])

    @cached_property
    def block_hash(self) -> bytes:
        return hash_concat(b"block", self.encode())


@dataclass(frozen=True)
class Block:
    header: BlockHeader
    transactions: tuple[SignedTransaction, ...]

    @property
    def number(self) -> int:
        return self.header.number

    @property
    def block_hash(self) -> bytes:
        return self.header.block_hash

    @property
    def parent_hash(self) -> bytes:
        return self.header.parent_hash

    @property
    def merkle_root(self) -> bytes:
        return self.header.merkle_root

    @property
    def ref(self) -> tuple[int, bytes]:
        return (self.number, self.block_hash)

    @classmethod
    def build(cls, number: int, parent_hash: bytes, txs, tick: int) -> "Block":
        txs = tuple(txs)
        root = merkle_root([t.digest for t in txs])
        return cls(BlockHeader(number, parent_hash, root, tick), txs)

    def recomputed_root(self) -> bytes:
        return merkle_root([t.digest for t in self.transactions])

    def to_obj(self) -> list:
        h = self.header
        return [h.number, h.parent_hash, h.merkle_root, h.tick, [t.to_obj() for t in self.transactions]]

    @classmethod
    def from_obj(cls, obj: list) -> "Block":
        number, parent, root, tick, txs = obj
        return cls(
            BlockHeader(number, parent, root, tick),
            tuple(SignedTransaction.from_obj(t) for t in txs),
        )

    def encode(self) -> bytes:
        return codec.encode(self.to_obj())

    @classmethod
    def decode(cls, data: bytes) -> "Block":
        return cls.from_obj(codec.decode(data))


GENESIS_PARENT = bytes(DIGEST_SIZE)
