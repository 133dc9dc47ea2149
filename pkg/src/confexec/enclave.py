"""The trusted enclave program.

An :class:`Enclave` talks to its (untrusted) host only through byte
messages handled by :meth:`Enclave.handle`, plus one synchronous ``fetch``
ocall into the blob store. Everything it knows about the world comes from
blocks it verified itself: it replays the on-chain contracts over those
blocks to obtain the registry, the checkpoint (LEB), the integrity hashes and
the key schedule.

Only the node identity survives a restart (standing in for hardware sealing);
every other piece of state is rebuilt from the chain and the blob store.

Message schema (codec-encoded dicts, ``"v": 1``):

inbound
    ``block``          block bytes, ``process`` flag (run a round if selected)
    ``confirmations``  ``round`` id, list of receipt objects or None
    ``sign_ack``       blob ciphertext to acknowledge
    ``attest``         public key of a joining node
    ``bootstrap``      genesis only: create the initial management keys
    ``register_tx``    fields of a registration, returns a signed tx
    ``withdraw_tx``    returns a signed withdrawal tx
outbound
    ``disseminate``    ``round`` id, blobs as [kind, ciphertext, subnet]
    ``publish``        ``round`` id, signed Publish transaction bytes
    ``round_skipped``  ``round`` id, reason
    ``ack``            digest, address, signature
    ``attestation``    public, signature, envelope bundle
    ``genesis``        key announcement object, envelope bundle, attestation
    ``tx``             signed transaction bytes
    ``rejected_block`` number, reason
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from . import codec
from .chain import Block, SignedTransaction, TxKind
from .crypto import (
    IntegrityError,
    address_of,
    KeyRole,
    NodeKeyPair,
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
    pk_ciphertext_epoch,
    pk_decrypt,
    prf,
    request_keypair_from_seed,
    seal_to_node,
    sign,
)
from .onchain import (
    ContractOutput,
    KeyAnnouncement,
    OnchainParams,
    OnchainState,
    PublishPayload,
    ResultRecord,
    attestation_message,
)
from .selection import round_seed, select_committee
from .storage import BlobKind, RSTSReceipt, effective_threshold, make_ack, subnet_addresses, verify_receipt
from .vm import (
    DEFAULT_MAX_DEPTH,
    DEFAULT_STEP_LIMIT,
    ContractHandle,
    InvocationError,
    Machine,
    load_program,
)

MESSAGE_VERSION = 1
PAD_BUCKET = 64


class MessageError(ValueError):
    pass


def message(kind: str, **fields) -> bytes:
    return codec.encode({"v": MESSAGE_VERSION, "type": kind, **fields})


def parse_message(data: bytes) -> dict:
    try:
        msg = codec.decode(data)
    except ValueError as exc:
        raise MessageError(str(exc)) from exc
    if not isinstance(msg, dict) or msg.get("v") != MESSAGE_VERSION or "type" not in msg:
        raise MessageError("not a version-1 enclave message")
    return msg


def pad(data: bytes, bucket: int = PAD_BUCKET) -> bytes:
    """Length-prefix and zero-fill to a multiple of ``bucket`` so ciphertext
    sizes do not reveal small differences in plaintext length."""
    body = len(data).to_bytes(4, "big") + data
    return body + b"\x00" * (-len(body) % bucket)


def unpad(data: bytes) -> bytes:
    n = int.from_bytes(data[:4], "big")
    if n > len(data) - 4:
        raise IntegrityError("bad padding")
    return data[4 : 4 + n]


def verify_block(block: Block, expected_parent: bytes) -> Optional[str]:
    """None when the block is internally consistent and chains from
    ``expected_parent``, else the failure."""
    if block.parent_hash != expected_parent:
        return "chain mismatch"
    if block.recomputed_root() != block.merkle_root:
        return "merkle mismatch"
    for tx in block.transactions:
        if not tx.verify_signature():
            return "bad transaction signature"
    return None


def am_i_selected(my_index: int, block_hash: bytes, n: int, c: int) -> bool:
    if n == 0:
        return False
    return my_index in select_committee(round_seed(block_hash), n, min(c, n))


# --------------------------------------------------------------------------
# request encoding shared by clients and the enclave


def encode_request(function: str, args) -> bytes:
    return pad(codec.encode([function, list(args)]))


def encode_deploy(code_id: str, init_params: dict) -> bytes:
    return pad(codec.encode([code_id, init_params]))


def encode_config(acl, ckrp: int, kres: bytes) -> bytes:
    return pad(codec.encode({"acl": [bytes(a) for a in acl], "ckrp": int(ckrp), "kres": bytes(kres)}))


def decode_result(kres: bytes, target: bytes, ciphertext: bytes) -> dict:
    key = SymmetricKey(kres, KeyRole.RESULT, 0)
    return codec.decode(unpad(aead_decrypt(key, ciphertext, context_ad(target, 0, KeyRole.RESULT))))


# --------------------------------------------------------------------------
# internal records


@dataclass
class ManagementKeys:
    epoch: int
    k_inf: SymmetricKey
    tx: RequestKeyPair

    def to_obj(self):
        return [self.k_inf.material, self.tx.private]

    @classmethod
    def from_obj(cls, epoch: int, obj) -> "ManagementKeys":
        k_inf, tx_private = obj
        return cls(epoch, SymmetricKey(k_inf, KeyRole.INFO, epoch), request_keypair_from_seed(tx_private, epoch))


@dataclass
class ContractRecord:
    address: bytes
    info: dict  # acl, ckrp, exec_counter, k_code, k_st, st_epoch, owner
    code: list  # [code_id, init_params]
    state: dict
    blobs: dict[str, bytes] = field(default_factory=dict)
    dirty: set = field(default_factory=set)

    def handle(self) -> ContractHandle:
        return ContractHandle(self.address, load_program(self.code[0]), frozenset(self.info["acl"]), self.info["owner"])


@dataclass
class EnclaveConfig:
    genesis_hash: bytes
    params: OnchainParams
    accounts: dict[bytes, int]
    committee: int
    step_limit: int = DEFAULT_STEP_LIMIT
    max_depth: int = DEFAULT_MAX_DEPTH
    default_ckrp: int = 10
    publish_empty: bool = True


@dataclass
class PendingRound:
    round_id: int
    start: tuple
    end: tuple
    outputs: tuple
    rotation: Optional[KeyAnnouncement]
    rotation_keys: Optional[ManagementKeys]
    digests: tuple


class Enclave:
    def __init__(
        self,
        identity_seed: bytes,
        config: EnclaveConfig,
        fetch: Callable[[bytes], Optional[bytes]],
        taint=None,
        audit: Callable[[str, Any], None] | None = None,
    ):
        self.identity: NodeKeyPair = node_keypair_from_seed(identity_seed)
        self.config = config
        self._fetch = fetch
        self.taint = taint
        self.audit = audit or (lambda kind, data: None)
        self.mirror = OnchainState(config.params, config.genesis_hash, config.accounts)
        self.keys: dict[int, ManagementKeys] = {}
        self._bootstrap_keys: Optional[ManagementKeys] = None
        self._blob_cache: dict[bytes, Any] = {}
        self._future: dict[int, tuple[Block, bool]] = {}
        self.round: Optional[PendingRound] = None
        self.rejected_blocks: list[tuple[int, str]] = []
        self.fetch_failures = 0
        self._secret("node private key", self.identity.private)

    # ------------------------------------------------------------ plumbing

    @property
    def address(self) -> bytes:
        return self.identity.address

    def _secret(self, label: str, data) -> None:
        if self.taint is not None:
            self.taint.register_value(label, data)

    def _rng_private(self, *labels) -> Rng:
        return Rng(prf(self.identity.private, b"node-rng")).child(*labels)

    def handle(self, data: bytes) -> list[bytes]:
        msg = parse_message(data)
        kind = msg["type"]
        fn = getattr(self, "_on_" + kind, None)
        if fn is None:
            raise MessageError(f"unknown message type {kind!r}")
        return fn(msg)

    def _sign_tx(self, kind: TxKind, payload: bytes, nonce: int) -> bytes:
        return SignedTransaction.create(self.identity.private, self.identity.public, kind, payload, nonce).encode()

    def _fetch_blob(self, digest: bytes) -> Optional[bytes]:
        data = self._fetch(digest)
        if data is None or hash_bytes(data) != digest:
            self.fetch_failures += 1
            return None
        return data

    # ---------------------------------------------------- node lifecycle

    def _on_bootstrap(self, msg) -> list[bytes]:
        keys = self._new_management_keys(0, self._rng_private(b"genesis"))
        self._bootstrap_keys = keys
        bundle = self._key_bundle([(self.address, self.identity.public)], [keys], self._rng_private(b"genesis-envelope"))
        ann = KeyAnnouncement(0, keys.tx.public, hash_bytes(bundle))
        sig = sign(self.identity.private, attestation_message(self.identity.public))
        return [message("genesis", announcement=ann.to_obj(), envelope=bundle, attestation=sig)]

    def _on_attest(self, msg) -> list[bytes]:
        public = bytes(msg["public"])
        held = list(self.keys.values()) or ([self._bootstrap_keys] if self._bootstrap_keys else [])
        peer = (address_of(public), public)
        bundle = self._key_bundle([peer], held, self._rng_private(b"attest", public))
        sig = sign(self.identity.private, attestation_message(public))
        return [message("attestation", public=public, signature=sig, envelope=bundle)]

    def _on_register_tx(self, msg) -> list[bytes]:
        body = {
            "public": self.identity.public,
            "attester": msg["attester"],
            "attestation": msg["attestation"],
            "deposit": msg["deposit"],
            "genesis_key": msg.get("genesis_key"),
            "envelope_digest": msg.get("envelope_digest"),
        }
        return [message("tx", tx=self._sign_tx(TxKind.REGISTER, codec.encode(body), msg.get("nonce", 0)))]

    def _on_withdraw_tx(self, msg) -> list[bytes]:
        return [message("tx", tx=self._sign_tx(TxKind.WITHDRAW, codec.encode({}), msg["nonce"]))]

    def _on_sign_ack(self, msg) -> list[bytes]:
        digest = hash_bytes(bytes(msg["blob"]))
        ack = make_ack(self.identity.private, self.address, digest)
        return [message("ack", digest=digest, address=ack.address, signature=ack.signature)]

    # ------------------------------------------------------------ keys

    def _new_management_keys(self, epoch: int, rng: Rng) -> ManagementKeys:
        k_inf = derive_fresh_key(KeyRole.INFO, epoch, rng)
        tx = derive_fresh_key(KeyRole.TX, epoch, rng)
        keys = ManagementKeys(epoch, k_inf, tx)
        self._secret("K_inf", k_inf.material)
        self._secret("PriK_tx", tx.private)
        self.audit("key", ("info", None, epoch, k_inf.material))
        return keys

    def _key_bundle(self, peers, keys: list[ManagementKeys], rng: Rng) -> bytes:
        plain = codec.encode({k.epoch: k.to_obj() for k in keys})
        return codec.encode({addr: seal_to_node(pub, plain, rng) for addr, pub in peers})

    def _open_bundle(self, digest: Optional[bytes]) -> bool:
        if digest is None:
            return False
        data = self._fetch_blob(digest)
        if data is None:
            return False
        try:
            bundle = codec.decode(data)
            sealed = bundle.get(self.address)
            if sealed is None:
                return False
            keys = codec.decode(open_as_node(self.identity, sealed))
        except (ValueError, IntegrityError, AttributeError):
            return False
        for epoch, obj in keys.items():
            if epoch not in self.keys:
                self.keys[epoch] = ManagementKeys.from_obj(epoch, obj)
        return True

    def _sync_keys(self, number: int) -> None:
        rec = self.mirror.mc.node_list.get(self.address)
        if rec is not None and rec.registered_at == number:
            self._open_bundle(rec.envelope_digest)
        ks = self.mirror.mc.keys
        if ks is not None and ks.installed_at == number and ks.current.epoch not in self.keys:
            self._open_bundle(ks.current.envelope_digest)
        self._expire_keys()

    def _expire_keys(self) -> None:
        """Keep the current epoch and the retiring one until every request that
        could still use it lies behind the checkpoint."""
        ks = self.mirror.mc.keys
        if ks is None:
            return
        keep = {ks.current.epoch}
        if ks.previous is not None and self.mirror.mc.leb[0] <= ks.previous_expiry:
            keep.add(ks.previous.epoch)
        for epoch in [e for e in self.keys if e not in keep]:
            del self.keys[epoch]

    # ------------------------------------------------------------ blocks

    def _on_block(self, msg) -> list[bytes]:
        block = Block.decode(msg["block"])
        self._future[block.number] = (block, bool(msg.get("process", False)))
        out: list[bytes] = []
        while True:
            nxt = len(self.mirror.block_hashes)
            if nxt not in self._future:
                break
            block, process = self._future.pop(nxt)
            reason = verify_block(block, self.mirror.block_hashes[-1])
            if reason is not None:
                self.rejected_blocks.append((block.number, reason))
                out.append(message("rejected_block", number=block.number, reason=reason))
                continue
            self.mirror.apply_block(block)
            self._sync_keys(block.number)
            if process:
                out.extend(self._maybe_run_round(block))
        for n in [n for n in self._future if n < len(self.mirror.block_hashes)]:
            del self._future[n]
        return out

    def selected(self, block: Block) -> bool:
        registry = self.mirror.registry()
        addrs = [a for a, _ in registry]
        if self.address not in addrs:
            return False
        return am_i_selected(addrs.index(self.address), block.block_hash, len(addrs), self.config.committee)

    def _maybe_run_round(self, block: Block) -> list[bytes]:
        if not self.selected(block):
            return []
        start, end = tuple(self.mirror.mc.leb), block.ref
        if end[0] <= start[0]:
            return []
        ks = self.mirror.mc.keys
        if ks is None or ks.current.epoch not in self.keys:
            return [message("round_skipped", round=end[0], reason="management keys unavailable")]
        try:
            return self._run_round(start, end)
        except _RoundAbort as exc:
            self.round = None
            return [message("round_skipped", round=end[0], reason=str(exc))]

    # ------------------------------------------------------------ rounds

    def _run_round(self, start, end) -> list[bytes]:
        mirror = self.mirror
        ks = mirror.mc.keys
        cur = self.keys[ks.current.epoch]
        rng = Rng(prf(cur.k_inf.material, b"round", start[1], end[1]))
        work = _RoundWork(self, rng)

        events = []
        for pc in mirror.pcs.values():
            if start[0] < pc.deploy_id[0] <= end[0]:
                events.append((pc.deploy_id, "deploy", pc))
            for req in pc.requests:
                if start[0] < req.request_id[0] <= end[0]:
                    events.append((req.request_id, "invoke", (pc, req)))
        events.sort(key=lambda e: e[0])
        for rid, kind, obj in events:
            if kind == "deploy":
                work.deploy(obj)
            else:
                work.invoke(*obj)

        rotation = rotation_keys = None
        if end[0] - ks.generated_round >= mirror.params.mkrp:
            new_epoch = ks.current.epoch + 1
            prng = self._rng_private(b"rotation", end[0])
            rotation_keys = self._new_management_keys(new_epoch, prng)
            registry = mirror.registry_at(end[0])
            held = [rotation_keys]
            bundle = self._key_bundle(registry, held, prng.child(b"envelopes"))
            work.add_blob(BlobKind.CHECKPOINT, bundle)
            rotation = KeyAnnouncement(new_epoch, rotation_keys.tx.public, hash_bytes(bundle))
            for address in sorted(mirror.mc.prog_list):
                work.load(address).dirty.add("info")
        info_key = rotation_keys.k_inf if rotation_keys else cur.k_inf

        outputs = work.finish(info_key)
        if not outputs and rotation is None and not self.config.publish_empty:
            return [message("round_skipped", round=end[0], reason="empty range")]

        registry = mirror.registry_at(end[0])
        s, _ = effective_threshold(len(registry), mirror.params.rsts_s, mirror.params.rsts_t)
        blobs = []
        for kind, ct in work.blobs:
            subnet = subnet_addresses(registry, end[1], hash_bytes(ct), s)
            blobs.append([kind.value, ct, list(subnet)])
        self.round = PendingRound(
            end[0], start, end, tuple(outputs), rotation, rotation_keys, tuple(hash_bytes(ct) for _, ct in work.blobs)
        )
        return [message("disseminate", round=end[0], blobs=blobs)]

    def _on_confirmations(self, msg) -> list[bytes]:
        rnd = self.round
        if rnd is None or msg["round"] != rnd.round_id:
            return []
        self.round = None
        if msg.get("receipts") is None:
            return [message("round_skipped", round=rnd.round_id, reason="insufficient confirmations")]
        receipts = {}
        registry = self.mirror.registry_at(rnd.end[0])
        s, t = effective_threshold(len(registry), self.mirror.params.rsts_s, self.mirror.params.rsts_t)
        for obj in msg["receipts"]:
            r = RSTSReceipt.from_obj(obj)
            if r.digest in rnd.digests and verify_receipt(r, registry, rnd.end[1], s, t) is None:
                receipts[r.digest] = r
        if set(receipts) != set(rnd.digests):
            return [message("round_skipped", round=rnd.round_id, reason="invalid confirmations")]
        payload = PublishPayload(
            tuple(rnd.start), tuple(rnd.end), rnd.outputs, rnd.rotation,
            tuple(receipts[d] for d in sorted(receipts)),
        )
        signed = PublishPayload(
            payload.start, payload.end, payload.outputs, payload.rotation, payload.receipts,
            sign(self.identity.private, payload.body_bytes()),
        )
        # the rotation keys only become usable once the chain accepts them via
        # the envelope bundle; until then they are dropped with the round
        tx = self._sign_tx(TxKind.PUBLISH, signed.encode(), 2 * rnd.end[0])
        return [message("publish", round=rnd.round_id, tx=tx)]

    # ------------------------------------------------------------ audit

    def plaintext_states(self) -> dict[bytes, dict]:
        """Decrypted state of every contract at the checkpoint (test oracle)."""
        work = _RoundWork(self, Rng(b"audit"))
        out = {}
        for address in sorted(self.mirror.mc.prog_list):
            rec = work.load(address)
            if rec is not None:
                out[address] = {"state": rec.state, "exec_counter": rec.info["exec_counter"]}
        return out

    def contract_record(self, address: bytes) -> Optional[ContractRecord]:
        return _RoundWork(self, Rng(b"audit")).load(address)


class _RoundAbort(Exception):
    pass


class _RoundWork:
    """Working set for one round: contract records loaded from storage,
    executed in global order, re-encrypted at the end."""

    def __init__(self, enclave: Enclave, rng: Rng):
        self.e = enclave
        self.rng = rng
        self.contracts: dict[bytes, Optional[ContractRecord]] = {}
        self.results: dict[bytes, list[ResultRecord]] = {}
        self.logs: dict[bytes, list[bytes]] = {}
        self.blobs: list[tuple[BlobKind, bytes]] = []
        self._touched: set[bytes] = set()

    # ---------------------------------------------------------- loading

    def _blob(self, digest: bytes):
        cache = self.e._blob_cache
        if digest not in cache:
            data = self.e._fetch_blob(digest)
            if data is None:
                raise _RoundAbort(f"blob {digest.hex()[:12]} unavailable")
            cache[digest] = data
        return cache[digest]

    def load(self, address: bytes) -> Optional[ContractRecord]:
        if address in self.contracts:
            return self.contracts[address]
        mc = self.e.mirror.mc
        h_inf = mc.prog_list.get(address)
        if h_inf is None:
            self.contracts[address] = None
            return None
        epoch, ct = codec.decode(self._blob(h_inf))
        keys = self.e.keys.get(epoch)
        if keys is None:
            raise _RoundAbort(f"no K_inf for epoch {epoch}")
        info = codec.decode(aead_decrypt(keys.k_inf, ct, context_ad(address, epoch, KeyRole.INFO), KeyRole.INFO))
        k_code = SymmetricKey(info["k_code"], KeyRole.CODE, 0)
        _, cct = codec.decode(self._blob(mc.prog_codes[address]))
        code = codec.decode(aead_decrypt(k_code, cct, context_ad(address, 0, KeyRole.CODE), KeyRole.CODE))
        st_epoch, sct = codec.decode(self._blob(mc.prog_states[address]))
        k_st = SymmetricKey(info["k_st"], KeyRole.STATE, info["st_epoch"])
        state = codec.decode(aead_decrypt(k_st, sct, context_ad(address, st_epoch, KeyRole.STATE), KeyRole.STATE))
        rec = ContractRecord(address, info, code, state)
        self.contracts[address] = rec
        return rec

    # -------------------------------------------------------- execution

    def _open_request(self, enc: bytes, block: int):
        """Decrypt a PubK_tx ciphertext, or explain why not."""
        try:
            epoch = pk_ciphertext_epoch(enc)
        except IntegrityError:
            return None, "malformed"
        keys = self.e.keys.get(epoch)
        if keys is None:
            return None, "stale_key"
        try:
            plain = pk_decrypt(keys.tx.private, enc, epoch)
        except IntegrityError:
            return None, "malformed"
        ks = self.e.mirror.key_schedule_at(block)
        if ks is None or not ks.accepts(epoch, block):
            return plain, "stale_key"
        return plain, None

    def _result(self, target: bytes, rid, kres: Optional[bytes], body: dict) -> None:
        if kres is None or len(kres) != 32:
            rec = ResultRecord(tuple(rid), body.get("error") or "failed", None)
        else:
            plain = pad(codec.encode(body))
            self.e._secret("result plaintext", plain)
            key = SymmetricKey(kres, KeyRole.RESULT, 0)
            ct = aead_encrypt(key, plain, context_ad(target, 0, KeyRole.RESULT), self.rng, KeyRole.RESULT)
            rec = ResultRecord(tuple(rid), None, ct)
        self.results.setdefault(target, []).append(rec)
        self._touched.add(target)
        self.e.audit("result", (target, tuple(rid), body))

    def deploy(self, pc) -> None:
        rid = pc.deploy_id
        config_plain, err = self._open_request(pc.enc_config, rid[0])
        kres = None
        config = None
        if config_plain is not None:
            try:
                config = codec.decode(unpad(config_plain))
                kres = config.get("kres")
            except (ValueError, IntegrityError, AttributeError):
                err = err or "malformed"
        self.e._secret("K_res", kres)
        if err:
            self._result(pc.address, rid, kres, {"ok": False, "value": None, "error": err, "steps": 0})
            return
        code_plain, err = self._open_request(pc.enc_code, rid[0])
        code = None
        if err is None:
            try:
                code = codec.decode(unpad(code_plain))
                load_program(code[0])
            except (ValueError, IntegrityError, InvocationError, TypeError, IndexError):
                err = "malformed"
        if err:
            self._result(pc.address, rid, kres, {"ok": False, "value": None, "error": err, "steps": 0})
            return
        self.e._secret("code plaintext", code_plain)
        acl = [bytes(a) for a in config.get("acl", [])]
        ckrp = int(config.get("ckrp") or self.e.config.default_ckrp)
        k_code = derive_fresh_key(KeyRole.CODE, 0, self.rng)
        k_st = derive_fresh_key(KeyRole.STATE, 0, self.rng)
        self.e._secret("K_code", k_code.material)
        self.e._secret("K_st", k_st.material)
        self.e.audit("key", ("state", pc.address, 0, k_st.material))
        info = {
            "acl": sorted(acl), "ckrp": max(1, ckrp), "exec_counter": 0,
            "k_code": k_code.material, "k_st": k_st.material, "st_epoch": 0, "owner": pc.owner,
        }
        rec = ContractRecord(pc.address, info, [code[0], code[1]], {})
        machine = Machine(self._resolve, self._state, self.e.config.step_limit, self.e.config.max_depth, rid)
        outcome = machine.construct(rec.handle(), dict(code[1] or {}))
        self.e.audit("steps", (tuple(rid), outcome.steps))
        if not outcome.ok:
            self._result(pc.address, rid, kres, {"ok": False, "value": None, "error": outcome.error, "steps": outcome.steps})
            return
        rec.state = outcome.deltas[pc.address]
        rec.dirty |= {"info", "code", "state"}
        self.contracts[pc.address] = rec
        self._result(pc.address, rid, kres, {"ok": True, "value": pc.address, "error": None, "steps": outcome.steps})

    def _resolve(self, address: bytes) -> Optional[ContractHandle]:
        rec = self.load(address)
        if rec is None:
            return None
        try:
            return rec.handle()
        except InvocationError:
            return None

    def _state(self, address: bytes) -> dict:
        return self.load(address).state

    def invoke(self, pc, req) -> None:
        rid = req.request_id
        kres_plain, err = self._open_request(req.enc_kres, rid[0])
        kres = kres_plain if kres_plain is not None and len(kres_plain) == 32 else None
        self.e._secret("K_res", kres)
        if err:
            self._result(pc.address, rid, kres, {"ok": False, "value": None, "error": err, "steps": 0})
            return
        plain, err = self._open_request(req.enc_input, rid[0])
        call = None
        if err is None:
            try:
                call = codec.decode(unpad(plain))
                function, args = str(call[0]), list(call[1])
            except (ValueError, IntegrityError, TypeError, IndexError):
                err = "malformed"
        if err:
            self._result(pc.address, rid, kres, {"ok": False, "value": None, "error": err, "steps": 0})
            return
        self.e._secret("request input", plain)
        self.e._secret("request args", args)
        machine = Machine(self._resolve, self._state, self.e.config.step_limit, self.e.config.max_depth, rid)
        outcome = machine.execute(req.sender, pc.address, function, args)
        self.e.audit("steps", (tuple(rid), outcome.steps))
        if not outcome.ok:
            self._result(pc.address, rid, kres, {"ok": False, "value": None, "error": outcome.error, "steps": outcome.steps})
            return
        # commit: state deltas, then execution counters and K_st rotation
        for address, state in outcome.deltas.items():
            rec = self.load(address)
            rec.state = state
            rec.dirty.add("state")
        for address, count in sorted(outcome.invocations.items()):
            rec = self.load(address)
            info = rec.info
            info["exec_counter"] += count
            rec.dirty.add("info")
            epoch = info["exec_counter"] // info["ckrp"]
            if epoch != info["st_epoch"]:
                k_st = derive_fresh_key(KeyRole.STATE, epoch, self.rng)
                self.e._secret("K_st", k_st.material)
                self.e.audit("key", ("state", address, epoch, k_st.material))
                info["k_st"], info["st_epoch"] = k_st.material, epoch
                rec.dirty.add("state")
        for address, data in outcome.logs:
            self.logs.setdefault(address, []).append(data)
            self._touched.add(address)
        self._result(pc.address, rid, kres, {"ok": True, "value": outcome.value, "error": None, "steps": outcome.steps})

    # -------------------------------------------------------- finishing

    def add_blob(self, kind: BlobKind, ciphertext: bytes) -> bytes:
        self.blobs.append((kind, ciphertext))
        return hash_bytes(ciphertext)

    def finish(self, info_key: SymmetricKey) -> list[ContractOutput]:
        mc = self.e.mirror.mc
        outputs = []
        addresses = set(self._touched) | {a for a, r in self.contracts.items() if r is not None and r.dirty}
        for address in sorted(addresses):
            rec = self.contracts.get(address)
            h_inf = mc.prog_list.get(address)
            h_code = mc.prog_codes.get(address)
            h_st = mc.prog_states.get(address)
            if rec is not None and rec.dirty:
                info = rec.info
                if "code" in rec.dirty:
                    plain = codec.encode(rec.code)
                    k_code = SymmetricKey(info["k_code"], KeyRole.CODE, 0)
                    ct = aead_encrypt(k_code, plain, context_ad(address, 0, KeyRole.CODE), self.rng, KeyRole.CODE)
                    h_code = self.add_blob(BlobKind.CODE, codec.encode([0, ct]))
                if "state" in rec.dirty:
                    plain = codec.encode(rec.state)
                    self.e._secret("state plaintext", plain)
                    self.e._secret("state values", rec.state)
                    ep = info["st_epoch"]
                    k_st = SymmetricKey(info["k_st"], KeyRole.STATE, ep)
                    ct = aead_encrypt(k_st, plain, context_ad(address, ep, KeyRole.STATE), self.rng, KeyRole.STATE)
                    h_st = self.add_blob(BlobKind.STATE, codec.encode([ep, ct]))
                plain = codec.encode(info)
                self.e._secret("InfoP plaintext", plain)
                ep = info_key.epoch
                ct = aead_encrypt(info_key, plain, context_ad(address, ep, KeyRole.INFO), self.rng, KeyRole.INFO)
                h_inf = self.add_blob(BlobKind.INFO, codec.encode([ep, ct]))
            outputs.append(
                ContractOutput(
                    address, h_inf, h_code, h_st,
                    tuple(self.results.get(address, ())), tuple(self.logs.get(address, ())),
                )
            )
        return outputs
