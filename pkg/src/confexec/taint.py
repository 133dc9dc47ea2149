"""Taint tracking for the observable surface.

Secrets are byte patterns registered by the enclaves and clients; every byte
sequence an adversary could see (chain transactions, network messages,
host-visible enclave output) is recorded as an observation. A violation is a
secret occurring as a contiguous substring of an observation.
"""

from __future__ import annotations

from dataclasses import dataclass

from .crypto import hash_bytes

MIN_SECRET_LEN = 16


@dataclass(frozen=True)
class Violation:
    label: str
    channel: str
    secret_digest: str

    def to_json(self) -> dict:
        return {"label": self.label, "channel": self.channel, "secret": self.secret_digest}


class TaintLedger:
    def __init__(self, min_len: int = MIN_SECRET_LEN):
        self.min_len = min_len
        self.secrets: dict[bytes, str] = {}
        self.public: set[bytes] = set()
        self.observations: dict[bytes, tuple[str, bytes]] = {}

    # --------------------------------------------------------- secrets

    def mark_public(self, data: bytes) -> None:
        """Values that are public by design (addresses, public keys)."""
        self.public.add(bytes(data))

    def register(self, label: str, data: bytes) -> None:
        data = bytes(data)
        if len(data) < self.min_len or data in self.public or data in self.secrets:
            return
        self.secrets[data] = label

    def register_value(self, label: str, value) -> None:
        """Register a byte string, or every byte/str leaf of a structure."""
        if value is None:
            return
        if isinstance(value, (bytes, bytearray)):
            self.register(label, bytes(value))
        elif isinstance(value, str):
            self.register(label, value.encode())
        elif isinstance(value, dict):
            for k, v in value.items():
                self.register_value(label, k)
                self.register_value(label, v)
        elif isinstance(value, (list, tuple)):
            for v in value:
                self.register_value(label, v)

    # ---------------------------------------------------- observations

    def observe(self, channel: str, data: bytes) -> None:
        data = bytes(data)
        key = hash_bytes(data)
        if key not in self.observations:
            self.observations[key] = (channel, data)

    def check(self) -> list[Violation]:
        found: dict[tuple[bytes, str], Violation] = {}
        secrets = [x for x in self.secrets if x not in self.public]
        for channel, data in self.observations.values():
            for secret in secrets:
                if (secret, channel) not in found and secret in data:
                    found[(secret, channel)] = Violation(self.secrets[secret], channel, hash_bytes(secret).hex()[:16])
        return sorted(found.values(), key=lambda v: (v.label, v.channel, v.secret_digest))


def taint_check(report: dict) -> list[dict]:
    """Violations recorded in a RunReport."""
    return list(report.get("taint", []))
