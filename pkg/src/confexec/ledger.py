"""Simulated append-only chain: pending pool, block production, Merkle
inclusion proofs and execution of the on-chain contracts."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Optional

from .chain import GENESIS_PARENT, Block, MerkleProof, SignedTransaction, fold_proof, merkle_proof
from .onchain import OnchainParams, OnchainState, Receipt


@dataclass(frozen=True)
class SubmitResult:
    accepted: bool
    reason: Optional[str] = None


class LedgerError(LookupError):
    pass


class Ledger:
    def __init__(
        self,
        params: OnchainParams | None = None,
        accounts: dict[bytes, int] | None = None,
        block_interval: int = 12,
        reorg_capable: bool = False,
    ):
        self.params = params or OnchainParams()
        self.block_interval = block_interval
        genesis = Block.build(0, GENESIS_PARENT, (), 0)
        self.blocks: list[Block] = [genesis]
        self.receipts: list[list[Receipt]] = [[]]
        self.costs: list[list[int]] = [[]]
        self.state = OnchainState(self.params, genesis.block_hash, accounts)
        # pre-block state copies, only kept when reorgs are simulated
        self.reorg_capable = reorg_capable
        self._snapshots: list[OnchainState] = []
        self.pending: list[SignedTransaction] = []
        self._nonces: dict[bytes, int] = {}
        self.subscribers: list[Callable[[Block], None]] = []
        self.dropped: list[Block] = []

    # -------------------------------------------------------------- submit

    def submit(self, tx: SignedTransaction) -> SubmitResult:
        if not tx.verify_signature():
            return SubmitResult(False, "bad signature")
        last = self._nonces.get(tx.sender, -1)
        if tx.nonce <= last:
            return SubmitResult(False, "stale nonce")
        self._nonces[tx.sender] = tx.nonce
        self.pending.append(tx)
        return SubmitResult(True)

    # ------------------------------------------------------------ produce

    def produce_block(self, tick: int | None = None) -> Block:
        number = len(self.blocks)
        if tick is None:
            tick = number * self.block_interval
        txs, self.pending = self.pending, []
        block = Block.build(number, self.blocks[-1].block_hash, txs, tick)
        if self.reorg_capable:
            self._snapshots = self._snapshots[-3:] + [self.state.clone()]
        receipts = self.state.apply_block(block)
        self.blocks.append(block)
        self.receipts.append(receipts)
        self.costs.append([self.state.tx_cost(tx) for tx in txs])
        for fn in self.subscribers:
            fn(block)
        return block

    def reorg(self) -> Block:
        """Drop the head block and re-queue its transactions ahead of the pool."""
        if len(self.blocks) <= 1:
            raise LedgerError("cannot drop genesis")
        if not self._snapshots:
            raise LedgerError("reorg requires reorg_capable=True")
        block = self.blocks.pop()
        self.receipts.pop()
        self.costs.pop()
        self.state = self._snapshots.pop()
        self.pending = list(block.transactions) + self.pending
        self.dropped.append(block)
        return block

    # --------------------------------------------------------------- views

    def chain_head(self) -> tuple[int, bytes]:
        head = self.blocks[-1]
        return head.number, head.block_hash

    def get_block(self, number: int) -> Block:
        if not 0 <= number < len(self.blocks):
            raise LedgerError(f"unknown block {number}")
        return self.blocks[number]

    def receipt(self, number: int, index: int) -> Receipt:
        return self.receipts[number][index]

    def prove_inclusion(self, block_number: int, tx_index: int) -> MerkleProof:
        block = self.get_block(block_number)
        return merkle_proof([t.digest for t in block.transactions], tx_index)

    @staticmethod
    def verify_inclusion(header, tx: SignedTransaction, proof: MerkleProof) -> bool:
        return fold_proof(tx.digest, proof) == header.merkle_root

    # ---------------------------------------------------------------- dump

    def dump_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for block, receipts, costs in zip(self.blocks, self.receipts, self.costs):
                fh.write(json.dumps(block_summary(block, receipts, costs), sort_keys=True) + "\n")


def block_summary(block: Block, receipts: list[Receipt], costs: list[int]) -> dict:
    txs = []
    for tx, rc, cost in zip(block.transactions, receipts, costs):
        txs.append(
            {
                "sender": tx.sender.hex(),
                "kind": tx.kind.value,
                "nonce": tx.nonce,
                "digest": tx.digest.hex(),
                "bytes": len(tx.payload),
                "ok": rc.ok,
                "reason": rc.reason.value if rc.reason else None,
                "cost": cost,
            }
        )
    return {
        "number": block.number,
        "hash": block.block_hash.hex(),
        "parent": block.parent_hash.hex(),
        "merkle_root": block.merkle_root.hex(),
        "tick": block.header.tick,
        "txs": txs,
        "cost_total": sum(costs),
    }
