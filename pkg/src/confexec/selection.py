"""Per-round committee selection with a coprime stride."""

from __future__ import annotations

from math import gcd

from .crypto import hash_concat


class SelectionError(ValueError):
    pass


def _check(n: int, c: int) -> None:
    if n <= 0 or c <= 0:
        raise SelectionError("node count and committee size must be positive")
    if c > n:
        raise SelectionError(f"committee size {c} exceeds node count {n}")


def committee_stride(n: int, c: int) -> int:
    """floor(n / c), the starting point of the stride search."""
    _check(n, c)
    return n // c


def compute_step(n: int, c: int) -> int:
    """Smallest integer >= floor(n/c) that is coprime with ``n``."""
    step = committee_stride(n, c)
    while gcd(step, n) != 1:
        step += 1
    return step


def select_committee(seed: int, n: int, c: int) -> list[int]:
    """Indices ``((seed mod n) + k*step) mod n`` for k in 0..c-1.

    The stride is coprime with ``n`` so the indices are pairwise distinct.
    """
    step = compute_step(n, c)
    start = seed % n
    return [(start + k * step) % n for k in range(c)]


def round_seed(block_hash: bytes) -> int:
    """Round seed derived from a block hash, only known once the block exists."""
    return int.from_bytes(hash_concat(b"round-seed", block_hash), "big")


def is_selected(index: int, block_hash: bytes, n: int, c: int) -> bool:
    return index in select_committee(round_seed(block_hash), n, min(c, n))
