"""Replicated blob store with Random Subnet Threshold Signature (RSTS)
confirmations, plus the exact failure probability of the scheme."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Callable, Iterable, NamedTuple

from . import codec
from .crypto import Rng, hash_bytes, hash_concat, sign, verify


class BlobKind(str, Enum):
    INFO = "info"
    CODE = "code"
    STATE = "state"
    CHECKPOINT = "checkpoint"


@dataclass(frozen=True)
class StorageBlob:
    kind: BlobKind
    ciphertext: bytes

    @property
    def digest(self) -> bytes:
        return hash_bytes(self.ciphertext)


class ParameterError(ValueError):
    pass


# --------------------------------------------------------------------------
# subnet selection


def subnet_seed(round_seed: bytes, blob_digest: bytes) -> bytes:
    return hash_concat(b"rsts-subnet", round_seed, blob_digest)


def select_subnet(seed: bytes, n: int, s: int) -> list[int]:
    """Draw ``s`` distinct node indices out of ``n``, uniform over subsets."""
    if n <= 0 or s <= 0:
        raise ParameterError("n and s must be positive")
    if s > n:
        raise ParameterError(f"subnet size {s} exceeds node count {n}")
    rng = Rng(seed)
    chosen: dict[int, int] = {}
    out = []
    # sparse partial Fisher-Yates, O(s) memory even for large n
    for i in range(s):
        j = i + rng.randbelow(n - i)
        vi, vj = chosen.get(i, i), chosen.get(j, j)
        chosen[j] = vi
        out.append(vj)
    return out


def effective_threshold(n: int, s: int, t: int) -> tuple[int, int]:
    """Clamp (s, t) to a registry of ``n`` nodes."""
    s_eff = min(s, n)
    return s_eff, min(t, s_eff)


# --------------------------------------------------------------------------
# acknowledgements and receipts


def ack_message(digest: bytes) -> bytes:
    return codec.encode([b"rsts-ack", bytes(digest)])


@dataclass(frozen=True)
class Ack:
    address: bytes
    signature: bytes


def make_ack(private: bytes, address: bytes, digest: bytes) -> Ack:
    return Ack(address, sign(private, ack_message(digest)))


@dataclass(frozen=True)
class RSTSReceipt:
    digest: bytes
    subnet: tuple[bytes, ...]
    confirmations: tuple[Ack, ...]

    def to_obj(self) -> list:
        return [
            self.digest,
            list(self.subnet),
            [[a.address, a.signature] for a in self.confirmations],
        ]

    @classmethod
    def from_obj(cls, obj) -> "RSTSReceipt":
        digest, subnet, confs = obj
        return cls(digest, tuple(subnet), tuple(Ack(a, s) for a, s in confs))


def subnet_addresses(registry: list[tuple[bytes, bytes]], round_seed: bytes, digest: bytes, s: int) -> tuple[bytes, ...]:
    s_eff = min(s, len(registry))
    idx = select_subnet(subnet_seed(round_seed, digest), len(registry), s_eff)
    return tuple(registry[i][0] for i in idx)


def build_receipt(
    digest: bytes,
    subnet: Iterable[bytes],
    acks: Iterable[Ack],
    registry: list[tuple[bytes, bytes]],
    t: int,
) -> RSTSReceipt | None:
    """Keep exactly ``t`` valid confirmations from subnet members, ordered by
    address, or return None when fewer than ``t`` are valid."""
    subnet = tuple(subnet)
    members = set(subnet)
    keys = dict(registry)
    valid: dict[bytes, Ack] = {}
    msg = ack_message(digest)
    for ack in acks:
        if ack.address in members and ack.address in keys and ack.address not in valid:
            if verify(keys[ack.address], msg, ack.signature):
                valid[ack.address] = ack
    if len(valid) < t:
        return None
    chosen = tuple(valid[a] for a in sorted(valid)[:t])
    return RSTSReceipt(digest, subnet, chosen)


def verify_receipt(
    receipt: RSTSReceipt,
    registry: list[tuple[bytes, bytes]],
    round_seed: bytes,
    s: int,
    t: int,
) -> str | None:
    """Return None when valid, else a short failure reason."""
    s_eff, t_eff = effective_threshold(len(registry), s, t)
    if not registry:
        return "empty registry"
    expected = subnet_addresses(registry, round_seed, receipt.digest, s_eff)
    if tuple(receipt.subnet) != expected:
        return "subnet mismatch"
    keys = dict(registry)
    seen = set()
    msg = ack_message(receipt.digest)
    for ack in receipt.confirmations:
        if ack.address in seen:
            return "duplicate confirmation"
        seen.add(ack.address)
        if ack.address not in expected:
            return "confirmer outside subnet"
        if not verify(keys[ack.address], msg, ack.signature):
            return "bad confirmation signature"
    if len(seen) < t_eff:
        return "insufficient confirmations"
    return None


# --------------------------------------------------------------------------
# node-local store and network-wide fetch


@dataclass
class StorageNode:
    address: bytes
    blobs: dict[bytes, bytes] = field(default_factory=dict)
    withhold: bool = False
    online: bool = True

    def store(self, ciphertext: bytes) -> bytes:
        digest = hash_bytes(ciphertext)
        # content is immutable once written
        self.blobs.setdefault(digest, bytes(ciphertext))
        return digest

    def serve(self, digest: bytes) -> bytes | None:
        if not self.online or self.withhold:
            return None
        return self.blobs.get(digest)


class NotFound(LookupError):
    pass


def fetch(digest: bytes, holders: Iterable[StorageNode]) -> bytes:
    """Return the blob from the first reachable holder that serves it."""
    for node in holders:
        data = node.serve(digest)
        if data is not None and hash_bytes(data) == digest:
            return data
    raise NotFound(digest.hex())


def dump_store(nodes: Iterable[StorageNode], directory) -> None:
    """Write digest-named ciphertext files and a JSON index."""
    import json
    from pathlib import Path

    root = Path(directory)
    blob_dir = root / "blobs"
    blob_dir.mkdir(parents=True, exist_ok=True)
    index: dict[str, list[str]] = {}
    for node in nodes:
        for digest, data in sorted(node.blobs.items()):
            name = digest.hex()
            path = blob_dir / name
            if not path.exists():
                path.write_bytes(data)
            index.setdefault(name, []).append(node.address.hex())
    (root / "blob_index.json").write_text(
        json.dumps({k: sorted(v) for k, v in sorted(index.items())}, indent=1)
    )


# --------------------------------------------------------------------------
# dissemination over a scheduler


class Disseminator:
    """Collects signed acknowledgements for one batch of blobs.

    ``send(dst_address, blob, want_ack)`` is provided by the transport; acks
    are fed back through :meth:`on_ack`. ``done`` fires once with a mapping
    digest -> receipt, or with None when the timeout expires first.
    """

    def __init__(
        self,
        scheduler,
        blobs: list[tuple[StorageBlob, tuple[bytes, ...]]],
        registry: list[tuple[bytes, bytes]],
        t: int,
        timeout: int,
        done: Callable[[dict[bytes, RSTSReceipt] | None], None],
    ):
        self.scheduler = scheduler
        self.registry = registry
        self.t = t
        self.done = done
        self.subnets = {blob.digest: subnet for blob, subnet in blobs}
        self.acks: dict[bytes, dict[bytes, Ack]] = {d: {} for d in self.subnets}
        self.finished = False
        self._timer = scheduler.schedule(timeout, self._expire)

    def on_ack(self, digest: bytes, ack: Ack) -> None:
        if self.finished or digest not in self.acks:
            return
        if ack.address in self.subnets[digest]:
            self.acks[digest].setdefault(ack.address, ack)
        self._check()

    def receipts(self) -> dict[bytes, RSTSReceipt] | None:
        out = {}
        for digest, subnet in self.subnets.items():
            r = build_receipt(digest, subnet, self.acks[digest].values(), self.registry, self.t)
            if r is None:
                return None
            out[digest] = r
        return out

    def _check(self) -> None:
        if all(len(a) >= self.t for a in self.acks.values()):
            receipts = self.receipts()
            if receipts is not None:
                self.finished = True
                self.scheduler.cancel(self._timer)
                self.done(receipts)

    def _expire(self) -> None:
        if not self.finished:
            self.finished = True
            self.done(None)


# --------------------------------------------------------------------------
# failure probability


class ExactProbability(NamedTuple):
    exact: Fraction
    approx: float
    log10: float


def fraction_log10(p: Fraction) -> float:
    if p == 0:
        return float("-inf")
    return math.log10(p.numerator) - math.log10(p.denominator)


def exact_probability(p: Fraction) -> ExactProbability:
    lg = fraction_log10(p)
    # float() underflows to 0.0 below ~1e-308; keep the log alongside
    return ExactProbability(p, float(p), lg)


def rsts_epsilon(n: int, m: int, s: int, t: int) -> ExactProbability:
    """Probability that a random size-``s`` subnet holds at least ``t`` of the
    ``m`` adversarial nodes (hypergeometric upper tail), exactly."""
    for name, v in (("n", n), ("m", m), ("s", s), ("t", t)):
        if not isinstance(v, int) or isinstance(v, bool):
            raise ParameterError(f"{name} must be an integer")
    if not (0 <= m <= n and 0 < t <= s <= n):
        raise ParameterError("require 0 <= m <= n and 0 < t <= s <= n")
    if m < t:
        return exact_probability(Fraction(0))
    total = math.comb(n, s)
    hits = sum(math.comb(m, k) * math.comb(n - m, s - k) for k in range(t, min(s, m) + 1))
    return exact_probability(Fraction(hits, total))
