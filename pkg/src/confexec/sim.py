"""Discrete-event simulation of a deployment: ledger, network, hosts wrapping
enclaves, users and adversaries. :func:`run` turns a scenario and a seed into
a RunReport."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Any, Optional

from . import codec
from .chain import Block, SignedTransaction, TxKind
from .crypto import (
    NodeKeyPair,
    Rng,
    hash_bytes,
    hash_concat,
    node_keypair_from_seed,
    pk_encrypt,
)
from .enclave import (
    Enclave,
    EnclaveConfig,
    decode_result,
    encode_config,
    encode_deploy,
    encode_request,
    message,
    parse_message,
)
from .ledger import Ledger
from .onchain import OnchainParams, PublishPayload, pc_address
from .scenario import Action, HostBehavior, Scenario
from .scheduler import Scheduler
from .selection import round_seed, select_committee
from .storage import Ack, BlobKind, Disseminator, StorageBlob, StorageNode, dump_store, effective_threshold
from .taint import TaintLedger
from .vm import PUBLIC_ACL

REPORT_SCHEMA = "confexec.runreport/1"
NODE_FUNDS = 10**6
USER_FUNDS = 10**9


def _hex(obj):
    """JSON-friendly copy with bytes rendered as hex."""
    if isinstance(obj, (bytes, bytearray)):
        return bytes(obj).hex()
    if isinstance(obj, dict):
        return {str(_hex(k)): _hex(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_hex(v) for v in obj]
    return obj


def user_keys(name: str) -> NodeKeyPair:
    # user identities do not depend on the run seed, so contract addresses and
    # balances keyed by address are comparable across seeds
    return node_keypair_from_seed(Rng(b"user").child(name).bytes(32))


# --------------------------------------------------------------------------
# network


class Network:
    def __init__(self, scheduler: Scheduler, rng: Rng, min_delay: int, max_delay: int, taint: TaintLedger):
        self.scheduler = scheduler
        self.rng = rng
        self.min_delay = min_delay
        self.max_delay = max_delay
        self.taint = taint
        self.max_honest_delay = 0
        self.sent = 0

    def send(self, kind: str, data: bytes, handler, *, honest: bool = True, delay: int | None = None) -> None:
        if delay is None:
            delay = self.rng.randint(self.min_delay, self.max_delay)
        self.taint.observe("net:" + kind, data)
        if honest:
            self.max_honest_delay = max(self.max_honest_delay, delay)
        self.sent += 1
        self.scheduler.schedule(delay, handler, data)


# --------------------------------------------------------------------------
# hosts


class Host:
    """Untrusted node operator wrapping one enclave. Adversarial behaviours
    act only on the messages crossing the enclave boundary."""

    def __init__(self, sim: "Simulation", index: int, identity_seed: bytes, behavior: HostBehavior):
        self.sim = sim
        self.index = index
        self.identity_seed = identity_seed
        self.behavior = behavior
        self.enclave: Optional[Enclave] = self._spawn()
        self.address = self.enclave.address
        self.public = self.enclave.identity.public
        self.storage = StorageNode(self.address, withhold=behavior.withhold_storage)
        self.online = True
        self.dissem: Optional[Disseminator] = None
        self.dissem_round: Optional[int] = None
        self._held: Optional[Block] = None
        self.log: list[dict] = []

    @property
    def adversarial(self) -> bool:
        b = self.behavior
        return bool(b.drop_output or b.delay or b.reorder or b.stale_block or b.withhold_storage
                    or b.crash_at is not None)

    def _spawn(self) -> Enclave:
        return Enclave(self.identity_seed, self.sim.enclave_config, self.fetch, self.sim.taint, self.sim.on_audit)

    # --------------------------------------------------------- enclave I/O

    def call(self, msg: bytes) -> list[dict]:
        if self.enclave is None:
            return []
        outs = []
        for raw in self.enclave.handle(msg):
            self.sim.taint.observe("enclave->host", raw)
            outs.append(parse_message(raw))
        return outs

    def fetch(self, digest: bytes) -> Optional[bytes]:
        for h in [self] + [x for x in self.sim.hosts if x is not self]:
            data = h.storage.serve(digest)
            if data is not None:
                return data
        return None

    def dispatch(self, outs: list[dict]) -> None:
        for out in outs:
            kind = out["type"]
            if kind == "disseminate":
                self._disseminate(out)
            elif kind == "publish":
                self._publish(out)
            elif kind == "round_skipped":
                self.sim.events.append({"tick": self.sim.scheduler.now, "node": self.index, "event": "round_skipped",
                                        "round": out["round"], "reason": out["reason"]})
            elif kind == "rejected_block":
                self.sim.events.append({"tick": self.sim.scheduler.now, "node": self.index, "event": "rejected_block",
                                        "number": out["number"], "reason": out["reason"]})

    # -------------------------------------------------------------- blocks

    def receive_block(self, data: bytes) -> None:
        if not self.online:
            return
        block = Block.decode(data)
        b = self.behavior
        process = True
        if self.sim.dropout_rng is not None and self.sim.dropout_rng.random() < self.sim.scenario.dropout:
            process = False
        if b.stale_block:
            number = block.number - b.stale_block
            if number < 1:
                return
            # feed the enclave a view that lags the canonical head
            for k in range(len(self.enclave.mirror.block_hashes), number + 1):
                blk = self.sim.ledger.get_block(k)
                self.dispatch(self.call(message("block", block=blk.encode(), process=process and k == number)))
            return
        if b.reorder:
            if self._held is None:
                self._held = block
                return
            held, self._held = self._held, None
            self.dispatch(self.call(message("block", block=block.encode(), process=process)))
            self.dispatch(self.call(message("block", block=held.encode(), process=False)))
            return
        self.dispatch(self.call(message("block", block=data, process=process)))

    def crash(self) -> None:
        self.online = False
        self.storage.online = False
        self.enclave = None
        self.dissem = None
        self._held = None
        self.sim.events.append({"tick": self.sim.scheduler.now, "node": self.index, "event": "crash"})

    def recover(self) -> None:
        """Restart with a fresh enclave that rebuilds from chain and storage."""
        self.enclave = self._spawn()
        self.online = True
        self.storage.online = True
        head, _ = self.sim.ledger.chain_head()
        for k in range(1, head + 1):
            self.call(message("block", block=self.sim.ledger.get_block(k).encode(), process=False))
        self.sim.events.append({"tick": self.sim.scheduler.now, "node": self.index, "event": "recover"})

    # ------------------------------------------------------- dissemination

    def _disseminate(self, out: dict) -> None:
        sim = self.sim
        blobs = [(StorageBlob(BlobKind(kind), bytes(ct)), tuple(subnet)) for kind, ct, subnet in out["blobs"]]
        rnd = out["round"]
        if not blobs:
            self.dispatch(self.call(message("confirmations", round=rnd, receipts=[])))
            return
        end = rnd
        registry = sim.ledger.state.registry_at(end)
        _, t = effective_threshold(len(registry), sim.scenario.rsts_s, sim.scenario.rsts_t)
        self.dissem_round = rnd
        box: list[Disseminator] = []
        dissem = Disseminator(sim.scheduler, blobs, registry, t, sim.scenario.rsts_timeout,
                              lambda receipts: self._confirmed(rnd, box[0], receipts))
        box.append(dissem)
        self.dissem = dissem
        colluding = sim.scenario.slow_honest_acks
        for blob, subnet in blobs:
            for peer in sim.hosts:
                want_ack = peer.address in subnet
                data = codec.encode([blob.kind.value, blob.ciphertext, want_ack, self.index])
                # the network adversary fast-tracks traffic to its own hosts
                delay = sim.network.min_delay if colluding and peer.adversarial else None
                sim.network.send("blob", data, peer.on_blob, honest=not (self.adversarial or peer.adversarial),
                                 delay=delay)

    def _confirmed(self, rnd: int, dissem: Disseminator, receipts) -> None:
        self.sim.record_dissemination(self, rnd, dissem)
        if self.dissem is not dissem:
            return
        self.dissem = None
        if not self.online or self.enclave is None:
            return
        objs = None if receipts is None else [r.to_obj() for _, r in sorted(receipts.items())]
        self.dispatch(self.call(message("confirmations", round=rnd, receipts=objs)))

    def on_blob(self, data: bytes) -> None:
        if not self.online:
            return
        kind, ct, want_ack, src = codec.decode(data)
        self.storage.store(ct)
        if not want_ack or self.enclave is None:
            return
        for out in self.call(message("sign_ack", blob=ct)):
            if out["type"] != "ack":
                continue
            origin = self.sim.hosts[src]
            payload = codec.encode([out["digest"], out["address"], out["signature"]])
            honest = not (self.adversarial or origin.adversarial)
            delay = None
            if self.sim.scenario.slow_honest_acks:
                # honest acks are held back as long as the delivery bound
                # allows; coalition acks go through at once
                delay = self.sim.network.min_delay if self.adversarial else self.sim.scenario.max_delay
            self.sim.network.send("ack", payload, origin.on_ack, honest=honest, delay=delay)

    def on_ack(self, data: bytes) -> None:
        if not self.online or self.dissem is None:
            return
        digest, address, signature = codec.decode(data)
        # a late ack for an earlier batch is ignored by digest
        self.dissem.on_ack(digest, Ack(address, signature))

    # ------------------------------------------------------------ publish

    def _publish(self, out: dict) -> None:
        b = self.behavior
        tx = bytes(out["tx"])
        self.sim.events.append({"tick": self.sim.scheduler.now, "node": self.index, "event": "publish_ready",
                                "round": out["round"], "dropped": b.drop_output})
        if b.drop_output:
            return
        delay = self.sim.network.rng.randint(self.sim.network.min_delay, self.sim.network.max_delay) + b.delay
        self.sim.network.send("publish", tx, self.sim.submit_tx, honest=not self.adversarial, delay=delay)


# --------------------------------------------------------------------------
# users


@dataclass
class RequestTrack:
    action: Action
    user: str
    target: bytes
    kres: bytes
    tx_digest: bytes
    kind: str
    function: Optional[str]
    request_id: Optional[tuple] = None
    submitted_block: int = 0
    accepted: Optional[bool] = None
    reject_reason: Optional[str] = None
    result_block: Optional[int] = None
    result: Optional[dict] = None
    tx_cost: int = 0


class Client:
    def __init__(self, name: str, rng: Rng):
        self.name = name
        self.keys = user_keys(name)
        self.address = self.keys.address
        self.rng = rng
        self.nonce = 0

    def next_nonce(self) -> int:
        n = self.nonce
        self.nonce += 1
        return n

    def sign(self, kind: TxKind, payload: bytes, nonce: int) -> SignedTransaction:
        return SignedTransaction.create(self.keys.private, self.keys.public, kind, payload, nonce)


# --------------------------------------------------------------------------
# simulation


class Simulation:
    def __init__(self, scenario: Scenario, seed: int | None = None):
        self.scenario = sc = scenario
        self.seed = sc.seed if seed is None else int(seed)
        root = Rng(hash_concat(b"confexec-run", sc.name.encode(), self.seed.to_bytes(8, "big")))
        self.scheduler = Scheduler()
        self.taint = TaintLedger()
        self.network = Network(self.scheduler, root.child(b"network"), sc.min_delay, sc.max_delay, self.taint)
        self.dropout_rng = root.child(b"dropout") if sc.dropout > 0 else None
        self.events: list[dict] = []
        self.steps: dict[tuple, int] = {}
        self.key_log: list[tuple] = []
        self.dissemination: dict[tuple, dict] = {}

        self.params = OnchainParams(
            mkrp=sc.mkrp, transition_window=sc.transition_window, min_deposit=sc.min_deposit,
            request_fee=sc.request_fee, base_fee=sc.base_fee, rsts_s=sc.rsts_s, rsts_t=sc.rsts_t,
        )
        seeds = [root.child(b"node", i).bytes(32) for i in range(sc.nodes)]
        self.clients = {name: Client(name, root.child(b"client", name)) for name in sc.users}
        accounts = {node_keypair_from_seed(s).address: NODE_FUNDS for s in seeds}
        accounts.update({c.address: USER_FUNDS for c in self.clients.values()})
        self.ledger = Ledger(self.params, accounts, sc.block_interval)
        self.enclave_config = EnclaveConfig(
            genesis_hash=self.ledger.blocks[0].block_hash, params=self.params, accounts=dict(accounts),
            committee=sc.committee, step_limit=sc.step_limit, max_depth=sc.max_depth,
            default_ckrp=sc.ckrp, publish_empty=sc.publish_empty,
        )
        self.hosts = [Host(self, i, seeds[i], sc.hosts.get(i, HostBehavior(i))) for i in range(sc.nodes)]

        self.aliases: dict[str, bytes] = {name: c.address for name, c in self.clients.items()}
        self._plan_addresses()
        for addr in list(self.aliases.values()) + [h.address for h in self.hosts]:
            self.taint.mark_public(addr)
        for h in self.hosts:
            self.taint.mark_public(h.public)
        self.taint.mark_public(PUBLIC_ACL)
        self.requests: list[RequestTrack] = []
        self._by_digest: dict[bytes, RequestTrack] = {}
        self.submit_log: list[dict] = []
        self.expect_failures: list[str] = []

    # ------------------------------------------------------------ helpers

    def _plan_addresses(self) -> None:
        nonces = {name: 0 for name in self.clients}
        for a in self.scenario.script:
            if a.user is None:
                continue
            if a.kind == "deploy":
                self.aliases[a.name] = pc_address(self.clients[a.user].address, nonces[a.user])
            nonces[a.user] += 1

    def resolve(self, value):
        if isinstance(value, str) and value.startswith("@"):
            name = value[1:]
            if name not in self.aliases:
                raise KeyError(f"unknown alias {value!r}")
            return self.aliases[name]
        if isinstance(value, list):
            return [self.resolve(v) for v in value]
        if isinstance(value, dict):
            return {k: self.resolve(v) for k, v in value.items()}
        return value

    def on_audit(self, kind: str, data) -> None:
        if kind == "steps":
            rid, steps = data
            self.steps[tuple(rid)] = steps
        elif kind == "key":
            if data not in self.key_log:
                self.key_log.append(data)

    def record_dissemination(self, host: Host, rnd: int, dissem: Disseminator) -> None:
        adversarial = {h.address for h in self.hosts if h.adversarial}
        for digest, acks in dissem.acks.items():
            key = (rnd, digest)
            honest = sum(1 for a in acks if a not in adversarial)
            entry = self.dissemination.setdefault(key, {"granted": False, "honest_confirmers": 0})
            if len(acks) >= dissem.t:
                entry["granted"] = True
                entry["honest_confirmers"] = max(entry["honest_confirmers"], honest)

    def submit_tx(self, data: bytes) -> None:
        tx = SignedTransaction.decode(data)
        res = self.ledger.submit(tx)
        if not res.accepted:
            self.submit_log.append({"tick": self.scheduler.now, "sender": tx.sender.hex(), "reason": res.reason})

    # -------------------------------------------------------------- setup

    def _setup(self) -> None:
        genesis = self.hosts[0]
        gen = genesis.call(message("bootstrap"))[0]
        bundle = bytes(gen["envelope"])
        for h in self.hosts:
            h.storage.store(bundle)
        self.taint.observe("setup", bundle)
        deposit = self.params.min_deposit
        tx = genesis.call(message(
            "register_tx", attester=genesis.address, attestation=gen["attestation"], deposit=deposit,
            genesis_key=gen["announcement"], envelope_digest=hash_bytes(bundle),
        ))[0]["tx"]
        self.network.send("register", tx, self.submit_tx, delay=0)
        for h in self.hosts[1:]:
            att = genesis.call(message("attest", public=h.public))[0]
            env = bytes(att["envelope"])
            for peer in self.hosts:
                peer.storage.store(env)
            self.taint.observe("setup", env)
            tx = h.call(message(
                "register_tx", attester=genesis.address, attestation=att["signature"], deposit=deposit,
                envelope_digest=hash_bytes(env),
            ))[0]["tx"]
            self.network.send("register", tx, self.submit_tx, delay=0)

    def _user_tx(self, a: Action) -> None:
        state = self.ledger.state
        if a.kind == "withdraw":
            host = self.hosts[a.node]
            outs = host.call(message("withdraw_tx", nonce=2 * a.block + 1))
            for out in outs:
                self.network.send("withdraw", bytes(out["tx"]), self.submit_tx, delay=0)
            return
        client = self.clients[a.user]
        ks = state.mc.keys
        ann = ks.current
        if a.key_epoch == "previous" and ks.previous is not None:
            ann = ks.previous
        elif isinstance(a.key_epoch, int):
            ann = next((k.current for k in state.key_history if k.current.epoch == a.key_epoch), ann)
        rng = client.rng.child(b"request", len(self.requests))
        kres = rng.bytes(32)
        self.taint.register("K_res", kres)
        nonce = client.next_nonce()
        if a.kind == "deploy":
            target = self.aliases[a.name]
            params = self.resolve(a.params)
            acl = [PUBLIC_ACL if x == "*" else self.resolve(x) for x in a.acl]
            code = encode_deploy(a.deploy, params)
            config = encode_config(acl, a.ckrp or self.scenario.ckrp, kres)
            self.taint.register("code plaintext", code)
            self.taint.register_value("deploy params", params)
            payload = codec.encode({
                "code": pk_encrypt(ann.public, code, rng, ann.epoch),
                "config": pk_encrypt(ann.public, config, rng, ann.epoch),
            })
            kind, function = TxKind.DEPLOY_PC, None
        else:
            target = self.aliases[a.invoke]
            args = self.resolve(a.args)
            plain = encode_request(a.function, args)
            self.taint.register("request input", plain)
            self.taint.register_value("request args", args)
            payload = codec.encode({
                "target": target,
                "input": pk_encrypt(ann.public, plain, rng, ann.epoch),
                "kres": pk_encrypt(ann.public, kres, rng, ann.epoch),
            })
            kind, function = TxKind.INVOKE_PC, a.function
        tx = client.sign(kind, payload, nonce)
        track = RequestTrack(a, a.user, target, kres, tx.digest, a.kind, function, submitted_block=a.block)
        self.requests.append(track)
        self._by_digest[tx.digest] = track
        self.submit_tx(tx.encode())

    # ------------------------------------------------------------ blocks

    def _produce(self, number: int) -> None:
        sc = self.scenario
        block = self.ledger.produce_block(self.scheduler.now)
        for tx in block.transactions:
            self.taint.observe("chain", tx.encode())
        for i, tx in enumerate(block.transactions):
            track = self._by_digest.get(tx.digest)
            if track is not None:
                rc = self.ledger.receipt(number, i)
                track.accepted = rc.ok
                track.reject_reason = rc.reason.value if rc.reason else None
                track.request_id = (number, i)
                track.tx_cost = self.ledger.costs[number][i]
        self._collect_results(number)

        if number in sc.crash_committee:
            state = self.ledger.state
            reg = state.registry()
            if reg:
                idx = select_committee(round_seed(block.block_hash), len(reg), min(sc.committee, len(reg)))
                addrs = {reg[i][0] for i in idx}
                for h in self.hosts:
                    if h.address in addrs and h.online:
                        h.crash()
                        self.scheduler.at(self.scheduler.now + sc.block_interval - 1, h.recover)

        data = block.encode()
        for h in self.hosts:
            self.network.send("block", data, h.receive_block)

        for a in sc.script:
            if a.block == number + 1:
                self._user_tx(a)

    def _collect_results(self, number: int) -> None:
        state = self.ledger.state
        for t in self.requests:
            if t.result_block is not None or not t.accepted or t.request_id is None:
                continue
            rec = state.pc_read_result(t.target, t.request_id)
            if rec is None:
                continue
            t.result_block = number
            if rec.ciphertext is None:
                t.result = {"ok": False, "value": None, "error": rec.marker, "steps": 0}
            else:
                t.result = decode_result(t.kres, t.target, rec.ciphertext)
            a = t.action
            if a.has_expect:
                want = self.resolve(a.expect)
                got = t.result.get("value") if t.result.get("ok") else {"error": t.result.get("error")}
                if _normalise(got) != _normalise(want):
                    self.expect_failures.append(
                        f"request {list(t.request_id)} ({t.kind} {t.function or a.deploy}): expected {_hex(want)!r}, got {_hex(got)!r}"
                    )

    # --------------------------------------------------------------- run

    def run(self) -> dict:
        sc = self.scenario
        self._setup()
        for b in range(1, sc.blocks + 1):
            self.scheduler.at(b * sc.block_interval, self._produce, b)
        for h in self.hosts:
            if h.behavior.crash_at is not None:
                self.scheduler.at(h.behavior.crash_at, h.crash)
                if h.behavior.recover_at is not None:
                    self.scheduler.at(h.behavior.recover_at, h.recover)
        if sc.restart_all_after is not None:
            tick = (sc.restart_all_after + 1) * sc.block_interval - 1
            self.scheduler.at(tick, self._restart_all)
        self.scheduler.run(until=sc.blocks * sc.block_interval + sc.block_interval - 1)
        return self.report()

    def _restart_all(self) -> None:
        for h in self.hosts:
            if h.online:
                h.crash()
        for h in self.hosts:
            h.recover()

    # ------------------------------------------------------------ report

    def publishes(self) -> list[dict]:
        out = []
        index = {h.address: h.index for h in self.hosts}
        for number, block in enumerate(self.ledger.blocks):
            for i, tx in enumerate(block.transactions):
                if tx.kind is not TxKind.PUBLISH:
                    continue
                rc = self.ledger.receipt(number, i)
                try:
                    p = PublishPayload.decode(tx.payload)
                    start, end = p.start[0], p.end[0]
                    rotation = p.rotation.epoch if p.rotation else None
                    outputs = [[o.address.hex()] + [h.hex() if h else None for h in (o.h_inf, o.h_code, o.h_st)]
                               for o in p.outputs]
                except (ValueError, TypeError):
                    start = end = rotation = outputs = None
                out.append({
                    "block": number, "index": i, "node": index.get(tx.sender), "start": start, "end": end,
                    "accepted": rc.ok, "reason": rc.reason.value if rc.reason else None,
                    "remuneration": rc.info.get("remuneration", 0), "rotation_epoch": rotation,
                    "cost": self.ledger.costs[number][i], "outputs": outputs,
                })
        return out

    def availability_gaps(self, publishes: list[dict]) -> list[int]:
        head = len(self.ledger.blocks) - 1
        covered = {p["end"] for p in publishes if p["accepted"]}
        # the last block's round lands after the run ends
        return [b for b in range(1, head) if b not in covered]

    def audit_enclave(self) -> Optional[Enclave]:
        head = len(self.ledger.blocks)
        for h in self.hosts:
            if h.enclave is not None and not h.adversarial and len(h.enclave.mirror.block_hashes) == head:
                return h.enclave
        return None

    def invariants(self, publishes: list[dict], violations) -> list[str]:
        bad = []
        accepted = [p for p in publishes if p["accepted"]]
        prev = 0
        for p in accepted:
            if p["start"] != prev:
                bad.append(f"LEB tiling broken at block {p['block']}: start {p['start']} != previous end {prev}")
            prev = p["end"]
        for rng_, count in self.ledger.state.remuneration_paid.items():
            if count != 1:
                bad.append(f"range {rng_} remunerated {count} times")
        for number, block in enumerate(self.ledger.blocks):
            for i, tx in enumerate(block.transactions):
                if tx.kind is TxKind.PUBLISH and self.ledger.receipt(number, i).ok:
                    p = PublishPayload.decode(tx.payload)
                    if self.ledger.blocks[p.end[0]].block_hash != p.end[1]:
                        bad.append(f"accepted publish in block {number} references a non-canonical end")
        epochs = [ks.current.epoch for ks in self.ledger.state.key_history]
        if any(b <= a for a, b in zip(epochs, epochs[1:])):
            bad.append(f"key epochs not strictly increasing: {epochs}")
        if self.network.max_honest_delay > self.scenario.max_delay:
            bad.append(f"honest message delayed {self.network.max_honest_delay} > {self.scenario.max_delay}")
        for v in violations:
            bad.append(f"privacy: {v.label} visible on {v.channel}")
        bad.extend(f"expectation: {m}" for m in self.expect_failures)
        return bad

    def report(self) -> dict:
        sc = self.scenario
        publishes = self.publishes()
        violations = self.taint.check()
        pub_cost = {}
        for p in publishes:
            if p["accepted"]:
                for b in range(p["start"] + 1, p["end"] + 1):
                    pub_cost[b] = p["cost"]
        requests = []
        for t in self.requests:
            rid = list(t.request_id) if t.request_id else None
            latency = t.result_block - t.request_id[0] if t.result_block is not None and t.request_id else None
            res = t.result or {}
            requests.append({
                "id": rid, "user": t.user, "kind": t.kind, "target": t.target.hex(),
                "function": t.function, "contract": t.action.deploy or t.action.invoke,
                "accepted": t.accepted, "reject_reason": t.reject_reason,
                "result_block": t.result_block, "latency": latency,
                "ok": res.get("ok"), "error": res.get("error"), "value": _hex(res.get("value")),
                "steps": self.steps.get(tuple(rid)) if rid else None,
                "tx_cost": t.tx_cost, "publish_cost": pub_cost.get(rid[0]) if rid else None,
            })
        enclave = self.audit_enclave()
        states = enclave.plaintext_states() if enclave else {}
        digest = hash_bytes(codec.encode({a: [s["state"], s["exec_counter"]] for a, s in states.items()})).hex()
        mc = self.ledger.state.mc
        dis = list(self.dissemination.values())
        report = {
            "schema": REPORT_SCHEMA,
            "scenario": sc.name,
            "seed": self.seed,
            "params": {
                "nodes": sc.nodes, "committee": sc.committee, "blocks": sc.blocks, "mkrp": sc.mkrp,
                "transition_window": sc.transition_window, "ckrp": sc.ckrp, "rsts_s": sc.rsts_s,
                "rsts_t": sc.rsts_t, "block_interval": sc.block_interval, "step_limit": sc.step_limit,
            },
            "nodes": [{"index": h.index, "address": h.address.hex(), "adversarial": h.adversarial} for h in self.hosts],
            "requests": requests,
            "publishes": publishes,
            "availability_gaps": self.availability_gaps(publishes),
            "leb": [mc.leb[0], mc.leb[1].hex()],
            "key_epochs": [[ks.installed_at, ks.current.epoch] for ks in self.ledger.state.key_history],
            "remuneration": {f"{a}-{b}": n for (a, b), n in sorted(self.ledger.state.remuneration_paid.items())},
            "costs": {
                "total": sum(sum(c) for c in self.ledger.costs),
                "requests": sum(t.tx_cost for t in self.requests),
                "publishes": sum(p["cost"] for p in publishes),
            },
            "dissemination": {
                "blobs": len(dis),
                "granted": sum(1 for d in dis if d["granted"]),
                "granted_without_honest": sum(1 for d in dis if d["granted"] and d["honest_confirmers"] == 0),
            },
            "events": self.events,
            "submit_rejections": self.submit_log,
            "taint": [v.to_json() for v in violations],
            "audit": {
                "final_state_digest": digest,
                "states": {a.hex(): _hex(s) for a, s in states.items()},
                "hashes": {
                    a.hex(): [mc.prog_list[a].hex(), mc.prog_codes[a].hex(), mc.prog_states[a].hex()]
                    for a in sorted(mc.prog_list)
                },
                "messages": self.network.sent,
                "max_honest_delay": self.network.max_honest_delay,
            },
        }
        report["invariant_violations"] = self.invariants(publishes, violations)
        return report

    # ------------------------------------------------------------ output

    def write_outputs(self, report: dict, out_dir, fmt: str = "json") -> None:
        from pathlib import Path

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(report_json(report))
        self.ledger.dump_jsonl(out / "chain.jsonl")
        dump_store([h.storage for h in self.hosts], out / "store")
        with open(out / "audit.jsonl", "w") as fh:
            fh.write(json.dumps(self.ledger.state.snapshot(), sort_keys=True) + "\n")
        (out / "requests.csv").write_text(requests_csv(report))


def _normalise(v):
    if isinstance(v, tuple):
        return [_normalise(x) for x in v]
    if isinstance(v, list):
        return [_normalise(x) for x in v]
    if isinstance(v, dict):
        return {str(_normalise(k)) if isinstance(k, bytes) else k: _normalise(x) for k, x in v.items()}
    if isinstance(v, bytes):
        return v.hex()
    return v


def report_json(report: dict) -> str:
    return json.dumps(report, indent=1, sort_keys=True)


REQUEST_COLUMNS = ("id", "user", "kind", "contract", "function", "accepted", "ok", "error",
                   "latency", "steps", "tx_cost", "publish_cost")


def requests_csv(report: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REQUEST_COLUMNS)
    for r in report["requests"]:
        row = dict(r)
        row["id"] = "-".join(map(str, r["id"])) if r["id"] else ""
        w.writerow([row.get(c) for c in REQUEST_COLUMNS])
    return buf.getvalue()


def run(scenario: Scenario, seed: int | None = None) -> dict:
    return Simulation(scenario, seed).run()
