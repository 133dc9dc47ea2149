"""Management contract (MC) and program contract (PC) state machines.

:class:`OnchainState` is a pure, deterministic transition system over
blocks. The ledger runs it to produce the canonical state and every enclave
runs an identical replica over verified blocks, which is how enclaves learn
the checkpoint (LEB), integrity hashes, registry and key schedule without
trusting their host.
"""

from __future__ import annotations

import copy
import functools
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from . import codec
from .chain import SignedTransaction, TxKind
from .crypto import address_of, hash_concat, verify
from .storage import RSTSReceipt, effective_threshold, verify_receipt

ENCLAVE_MEASUREMENT = hash_concat(b"enclave-program", b"v1")

BlockRef = tuple  # (number, hash)


@dataclass
class OnchainParams:
    mkrp: int = 100
    transition_window: int = 10
    min_deposit: int = 100
    request_fee: int = 1
    base_fee: int = 1
    rsts_s: int = 3
    rsts_t: int = 2
    tx_base_cost: int = 21000
    byte_cost: int = 16


class Reason(str, Enum):
    NOT_REGISTERED = "sender not registered"
    BAD_SIGNATURE = "bad signature"
    START_MISMATCH = "startBlock != LEB"
    STALE_END = "freshness: endBlock behind LEB"
    NONCANONICAL_END = "freshness: endBlock not canonical"
    FUTURE_END = "freshness: endBlock not final"
    EMPTY_RANGE = "endBlock not after startBlock"
    BAD_RECEIPT = "missing or invalid storage receipt"
    BAD_OUTPUT = "malformed output"
    BAD_ROTATION = "invalid key rotation"
    DUPLICATE_NODE = "duplicate registration"
    INVALID_ATTESTATION = "invalid attestation"
    LOW_DEPOSIT = "deposit below minimum"
    INSUFFICIENT_BALANCE = "insufficient balance"
    UNKNOWN_NODE = "unknown node"
    UNKNOWN_PC = "unknown program contract"
    MALFORMED = "malformed payload"

    @property
    def is_freshness(self) -> bool:
        return self.value.startswith("freshness")


def attestation_message(public: bytes) -> bytes:
    return codec.encode([b"attest", ENCLAVE_MEASUREMENT, bytes(public)])


# --------------------------------------------------------------------------
# payload types


@dataclass(frozen=True)
class KeyAnnouncement:
    epoch: int
    public: bytes
    envelope_digest: bytes

    def to_obj(self):
        return [self.epoch, self.public, self.envelope_digest]

    @classmethod
    def from_obj(cls, obj):
        return cls(*obj) if obj is not None else None


@dataclass(frozen=True)
class ResultRecord:
    request_id: tuple[int, int]
    # public marker when no ciphertext can be produced, e.g. "stale_key"
    marker: Optional[str]
    ciphertext: Optional[bytes]

    def to_obj(self):
        return [list(self.request_id), self.marker, self.ciphertext]

    @classmethod
    def from_obj(cls, obj):
        rid, marker, ct = obj
        return cls(tuple(rid), marker, ct)


@dataclass(frozen=True)
class ContractOutput:
    address: bytes
    h_inf: Optional[bytes]
    h_code: Optional[bytes]
    h_st: Optional[bytes]
    results: tuple[ResultRecord, ...] = ()
    public_log: tuple[bytes, ...] = ()

    def to_obj(self):
        return [
            self.address, self.h_inf, self.h_code, self.h_st,
            [r.to_obj() for r in self.results], list(self.public_log),
        ]

    @classmethod
    def from_obj(cls, obj):
        address, hi, hc, hs, results, log = obj
        return cls(address, hi, hc, hs, tuple(ResultRecord.from_obj(r) for r in results), tuple(log))


@dataclass(frozen=True)
class PublishPayload:
    start: BlockRef
    end: BlockRef
    outputs: tuple[ContractOutput, ...]
    rotation: Optional[KeyAnnouncement]
    receipts: tuple[RSTSReceipt, ...]
    signature: bytes = b""

    def body_obj(self):
        return [
            list(self.start), list(self.end),
            [o.to_obj() for o in self.outputs],
            self.rotation.to_obj() if self.rotation else None,
            [r.to_obj() for r in self.receipts],
        ]

    @functools.cached_property
    def _body(self) -> bytes:
        return codec.encode([b"publish"] + self.body_obj())

    def body_bytes(self) -> bytes:
        return self._body

    def encode(self) -> bytes:
        return codec.encode(self.body_obj() + [self.signature])

    @classmethod
    def decode(cls, data: bytes) -> "PublishPayload":
        # immutable, and every replica decodes the same transaction
        return _decode_publish(bytes(data))

    @classmethod
    def _decode(cls, data: bytes) -> "PublishPayload":
        start, end, outputs, rotation, receipts, sig = codec.decode(data)
        return cls(
            tuple(start), tuple(end),
            tuple(ContractOutput.from_obj(o) for o in outputs),
            KeyAnnouncement.from_obj(rotation),
            tuple(RSTSReceipt.from_obj(r) for r in receipts),
            sig,
        )


@functools.lru_cache(maxsize=4096)
def _decode_publish(data: bytes) -> PublishPayload:
    return PublishPayload._decode(data)


# --------------------------------------------------------------------------
# state


@dataclass
class NodeRecord:
    public: bytes
    deposit: int
    envelope_digest: Optional[bytes]
    registered_at: int


@dataclass
class KeySchedule:
    """PubK_tx status after a block: current epoch and the retiring one."""

    installed_at: int
    current: KeyAnnouncement
    generated_round: int
    previous: Optional[KeyAnnouncement] = None
    previous_expiry: int = -1

    def accepts(self, epoch: int, block: int) -> bool:
        if epoch == self.current.epoch:
            return True
        return self.previous is not None and epoch == self.previous.epoch and block <= self.previous_expiry


@dataclass
class MCState:
    leb: BlockRef
    mkrp: int
    keys: Optional[KeySchedule] = None
    node_list: dict[bytes, NodeRecord] = field(default_factory=dict)
    prog_list: dict[bytes, bytes] = field(default_factory=dict)
    prog_codes: dict[bytes, bytes] = field(default_factory=dict)
    prog_states: dict[bytes, bytes] = field(default_factory=dict)


@dataclass
class RequestRecord:
    request_id: tuple[int, int]
    enc_input: bytes
    enc_kres: bytes
    sender: bytes
    fee: int


@dataclass
class PCState:
    address: bytes
    owner: bytes
    enc_code: bytes
    enc_config: bytes
    deploy_id: tuple[int, int]
    requests: list[RequestRecord] = field(default_factory=list)
    results: dict[tuple[int, int], ResultRecord] = field(default_factory=dict)


@dataclass
class Receipt:
    ok: bool
    reason: Optional[Reason] = None
    info: dict = field(default_factory=dict)


def pc_address(sender: bytes, nonce: int) -> bytes:
    return hash_concat(b"pc", sender, nonce.to_bytes(8, "big"))[:20]


class OnchainState:
    def __init__(self, params: OnchainParams, genesis_hash: bytes, accounts: dict[bytes, int] | None = None):
        self.params = params
        self.balances: dict[bytes, int] = dict(accounts or {})
        self.mc = MCState(leb=(0, genesis_hash), mkrp=params.mkrp)
        self.pcs: dict[bytes, PCState] = {}
        self.block_hashes: list[bytes] = [genesis_hash]
        self.current_block = 0
        self.pending_fees: dict[int, int] = {}
        self.registry_history: list[tuple[int, tuple[tuple[bytes, bytes], ...]]] = [(0, ())]
        self.key_history: list[KeySchedule] = []
        self.accepted_publishes: list[dict] = []
        self.remuneration_paid: dict[tuple[int, int], int] = {}

    def clone(self) -> "OnchainState":
        return copy.deepcopy(self)

    # ---------------------------------------------------------------- views

    def registry(self) -> list[tuple[bytes, bytes]]:
        return [(a, r.public) for a, r in self.mc.node_list.items()]

    def registry_at(self, number: int) -> list[tuple[bytes, bytes]]:
        snap: tuple = ()
        for block, entries in self.registry_history:
            if block > number:
                break
            snap = entries
        return list(snap)

    def key_schedule_at(self, number: int) -> Optional[KeySchedule]:
        found = None
        for ks in self.key_history:
            if ks.installed_at > number:
                break
            found = ks
        return found

    def is_canonical(self, ref: BlockRef) -> bool:
        number, h = ref
        return 0 <= number < len(self.block_hashes) and self.block_hashes[number] == h

    # ---------------------------------------------------------- block hooks

    def begin_block(self, number: int, block_hash: bytes) -> None:
        if number != len(self.block_hashes):
            raise ValueError(f"expected block {len(self.block_hashes)}, got {number}")
        self.block_hashes.append(block_hash)
        self.current_block = number

    def end_block(self) -> None:
        snap = tuple(self.registry())
        if snap != self.registry_history[-1][1]:
            self.registry_history.append((self.current_block, snap))

    def apply_block(self, block) -> list[Receipt]:
        self.begin_block(block.number, block.block_hash)
        receipts = [self.apply(tx, i) for i, tx in enumerate(block.transactions)]
        self.end_block()
        return receipts

    def tx_cost(self, tx: SignedTransaction) -> int:
        return self.params.tx_base_cost + self.params.byte_cost * len(tx.payload)

    def apply(self, tx: SignedTransaction, index: int) -> Receipt:
        try:
            body = codec.decode(tx.payload) if tx.kind is not TxKind.PUBLISH else None
        except ValueError:
            return Receipt(False, Reason.MALFORMED)
        try:
            if tx.kind is TxKind.REGISTER:
                return self.mc_register(tx.sender, **body)
            if tx.kind is TxKind.WITHDRAW:
                return self.mc_withdraw(tx.sender)
            if tx.kind is TxKind.PUBLISH:
                try:
                    payload = PublishPayload.decode(tx.payload)
                except (ValueError, TypeError):
                    return Receipt(False, Reason.MALFORMED)
                return self.mc_publish(tx.sender, payload)
            if tx.kind is TxKind.DEPLOY_PC:
                return self.pc_deploy(tx.sender, tx.nonce, body["code"], body["config"], (self.current_block, index))
            if tx.kind is TxKind.INVOKE_PC:
                return self.pc_execute(tx.sender, body["target"], body["input"], body["kres"], (self.current_block, index))
            if tx.kind is TxKind.PLAIN:
                return self._transfer(tx.sender, body["to"], body["amount"])
        except (KeyError, TypeError, ValueError):
            return Receipt(False, Reason.MALFORMED)
        return Receipt(False, Reason.MALFORMED)

    # ------------------------------------------------------------------ MC

    def mc_register(
        self,
        sender: bytes,
        public: bytes,
        attester: bytes,
        attestation: bytes,
        deposit: int,
        genesis_key=None,
        envelope_digest: bytes | None = None,
    ) -> Receipt:
        if sender in self.mc.node_list:
            return Receipt(False, Reason.DUPLICATE_NODE)
        if address_of(public) != sender or len(public) != 64:
            return Receipt(False, Reason.INVALID_ATTESTATION)
        msg = attestation_message(public)
        if not self.mc.node_list:
            # bootstrap: first node self-attests and installs the initial PubK_tx
            if attester != sender or not verify(public, msg, attestation) or genesis_key is None:
                return Receipt(False, Reason.INVALID_ATTESTATION)
        else:
            rec = self.mc.node_list.get(attester)
            if rec is None or not verify(rec.public, msg, attestation):
                return Receipt(False, Reason.INVALID_ATTESTATION)
        if deposit < self.params.min_deposit:
            return Receipt(False, Reason.LOW_DEPOSIT)
        if self.balances.get(sender, 0) < deposit:
            return Receipt(False, Reason.INSUFFICIENT_BALANCE)
        self.balances[sender] -= deposit
        if not self.mc.node_list:
            ann = KeyAnnouncement.from_obj(genesis_key)
            self._install_key(ann, generated_round=0, previous=None, expiry=-1)
        self.mc.node_list[sender] = NodeRecord(public, deposit, envelope_digest, self.current_block)
        return Receipt(True, info={"index": len(self.mc.node_list) - 1})

    def mc_withdraw(self, sender: bytes) -> Receipt:
        rec = self.mc.node_list.pop(sender, None)
        if rec is None:
            return Receipt(False, Reason.UNKNOWN_NODE)
        self.balances[sender] = self.balances.get(sender, 0) + rec.deposit
        return Receipt(True, info={"refund": rec.deposit})

    def _install_key(self, ann: KeyAnnouncement, generated_round: int, previous, expiry: int) -> None:
        ks = KeySchedule(self.current_block, ann, generated_round, previous, expiry)
        self.mc.keys = ks
        self.key_history.append(ks)

    def check_publish(self, sender: bytes, payload: PublishPayload) -> Optional[Reason]:
        rec = self.mc.node_list.get(sender)
        if rec is None:
            return Reason.NOT_REGISTERED
        if not verify(rec.public, payload.body_bytes(), payload.signature):
            return Reason.BAD_SIGNATURE
        start, end = tuple(payload.start), tuple(payload.end)
        if end[0] >= self.current_block:
            return Reason.FUTURE_END
        if not self.is_canonical(end):
            return Reason.NONCANONICAL_END
        if end[0] <= start[0]:
            return Reason.EMPTY_RANGE
        if start != tuple(self.mc.leb):
            if end[0] < self.mc.leb[0]:
                return Reason.STALE_END
            return Reason.START_MISMATCH
        # outputs
        for out in payload.outputs:
            if out.address not in self.pcs:
                return Reason.BAD_OUTPUT
            for r in out.results:
                if r.request_id[0] <= start[0] or r.request_id[0] > end[0]:
                    return Reason.BAD_OUTPUT
        if payload.rotation is not None:
            ks = self.mc.keys
            if ks is None or payload.rotation.epoch != ks.current.epoch + 1:
                return Reason.BAD_ROTATION
        # every newly referenced blob needs an RSTS receipt
        needed = set()
        for out in payload.outputs:
            for h, table in ((out.h_inf, self.mc.prog_list), (out.h_code, self.mc.prog_codes), (out.h_st, self.mc.prog_states)):
                if h is not None and table.get(out.address) != h:
                    needed.add(h)
        if payload.rotation is not None:
            needed.add(payload.rotation.envelope_digest)
        receipts = {r.digest: r for r in payload.receipts}
        registry = self.registry_at(end[0])
        s, t = effective_threshold(len(registry), self.params.rsts_s, self.params.rsts_t)
        for digest in needed:
            r = receipts.get(digest)
            if r is None or verify_receipt(r, registry, end[1], s, t) is not None:
                return Reason.BAD_RECEIPT
        return None

    def mc_publish(self, sender: bytes, payload: PublishPayload) -> Receipt:
        reason = self.check_publish(sender, payload)
        if reason is not None:
            return Receipt(False, reason)
        start, end = tuple(payload.start), tuple(payload.end)
        for out in payload.outputs:
            if out.h_inf is not None:
                self.mc.prog_list[out.address] = out.h_inf
            if out.h_code is not None:
                self.mc.prog_codes[out.address] = out.h_code
            if out.h_st is not None:
                self.mc.prog_states[out.address] = out.h_st
            pc = self.pcs[out.address]
            for r in out.results:
                # results are write-once
                pc.results.setdefault(tuple(r.request_id), r)
        if payload.rotation is not None:
            old = self.mc.keys
            self._install_key(
                payload.rotation,
                generated_round=end[0],
                previous=old.current,
                expiry=self.current_block + self.params.transition_window,
            )
        self.mc.leb = end
        fees = sum(self.pending_fees.pop(b, 0) for b in range(start[0] + 1, end[0] + 1))
        remuneration = self.params.base_fee + fees
        self.balances[sender] = self.balances.get(sender, 0) + remuneration
        self.remuneration_paid[(start[0], end[0])] = self.remuneration_paid.get((start[0], end[0]), 0) + 1
        self.accepted_publishes.append(
            {"block": self.current_block, "sender": sender, "start": start[0], "end": end[0], "remuneration": remuneration}
        )
        return Receipt(True, info={"remuneration": remuneration})

    # ------------------------------------------------------------------ PC

    def pc_deploy(self, sender: bytes, nonce: int, enc_code: bytes, enc_config: bytes, request_id) -> Receipt:
        address = pc_address(sender, nonce)
        if address in self.pcs:
            return Receipt(False, Reason.MALFORMED)
        self.pcs[address] = PCState(address, sender, enc_code, enc_config, request_id)
        return Receipt(True, info={"address": address})

    def pc_execute(self, sender: bytes, target: bytes, enc_input: bytes, enc_kres: bytes, request_id) -> Receipt:
        pc = self.pcs.get(target)
        if pc is None:
            return Receipt(False, Reason.UNKNOWN_PC)
        fee = self.params.request_fee
        if self.balances.get(sender, 0) < fee:
            return Receipt(False, Reason.INSUFFICIENT_BALANCE)
        self.balances[sender] -= fee
        self.pending_fees[request_id[0]] = self.pending_fees.get(request_id[0], 0) + fee
        pc.requests.append(RequestRecord(request_id, enc_input, enc_kres, sender, fee))
        return Receipt(True, info={"request_id": request_id})

    def pc_read_result(self, target: bytes, request_id) -> Optional[ResultRecord]:
        """The published result record, or None while pending."""
        pc = self.pcs.get(target)
        if pc is None:
            raise KeyError("unknown program contract")
        request_id = tuple(request_id)
        if request_id != pc.deploy_id and not any(r.request_id == request_id for r in pc.requests):
            raise KeyError("unknown request id")
        return pc.results.get(request_id)

    def _transfer(self, sender: bytes, to: bytes, amount: int) -> Receipt:
        if amount < 0 or self.balances.get(sender, 0) < amount:
            return Receipt(False, Reason.INSUFFICIENT_BALANCE)
        self.balances[sender] -= amount
        self.balances[to] = self.balances.get(to, 0) + amount
        return Receipt(True)

    # ---------------------------------------------------------------- audit

    def snapshot(self) -> dict:
        """JSON-friendly MC/PC view for the audit trail."""
        mc = self.mc
        return {
            "block": self.current_block,
            "leb": [mc.leb[0], mc.leb[1].hex()],
            "key_epoch": mc.keys.current.epoch if mc.keys else None,
            "nodes": [a.hex() for a in mc.node_list],
            "prog_list": {a.hex(): h.hex() for a, h in sorted(mc.prog_list.items())},
            "prog_codes": {a.hex(): h.hex() for a, h in sorted(mc.prog_codes.items())},
            "prog_states": {a.hex(): h.hex() for a, h in sorted(mc.prog_states.items())},
            "pcs": {
                a.hex(): {"requests": len(pc.requests), "results": len(pc.results)}
                for a, pc in sorted(self.pcs.items())
            },
        }
