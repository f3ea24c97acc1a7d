"""Per-node protocol behavior: contention, leader election, transaction collection and blocks.

All functions mutate the NodeState they are given and never touch another
node's state; the engine owns the slot loop and the channel.
"""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Mapping, Optional

from ..core.errors import ContractViolation
from ..models.crypto import Role, SortitionOutcome
from ..models.protocol import (
    LISTEN, Action, Chain, MessageB, MessageM, MessageT, NodeState, P1Outcome, Slot2Decision,
    SortEvidence, Transaction, transmit, with_signature,
)
from ..models.radio import BUSY, ChannelObservation
from . import ledger_service
from .codec_service import signing_bytes, tx_signing_bytes
from .crypto_service import CryptoBackend
from .sortition_service import verify_sortition

logger = logging.getLogger(__name__)

# keeps p strictly positive under long idle-free stretches
P_FLOOR = 1e-12


@dataclass(frozen=True)
class ProtocolParams:
    """Public protocol constants shared by every node in one epoch"""
    p_hat: float
    gamma: float
    c: int
    tau: float
    W: int
    theta: float
    seed: bytes
    epoch: int
    backend: CryptoBackend
    public_keys: Mapping[int, bytes] = field(default_factory=dict)
    stakes: Mapping[int, int] = field(default_factory=dict)

    @property
    def growth(self) -> float:
        return 1.0 + self.gamma


@dataclass(frozen=True, slots=True)
class AcceptResult:
    accepted: bool
    synced: bool = False
    reason: str = ""


def begin_epoch(state: NodeState, outcome: SortitionOutcome, p_hat: float) -> NodeState:
    state.role = outcome.role
    state.h = outcome.h
    state.pi = outcome.pi
    state.l0 = outcome.l0
    state.l = outcome.l0
    state.p = p_hat
    state.c = 0
    state.T_est = 1
    state.rounds_since_idle = 0
    state.i = 1
    state.j = 0
    state.i_k = None
    state.leader_id = None
    state.txp = []
    state.txp_ids = set()
    state.pending_tx = None
    return state


def make_follower(state: NodeState) -> NodeState:
    """Artificial follower assignment when sortition leaves no follower"""
    state.role = Role.FOLLOWER
    state.l0 = 0
    state.l = 0
    return state


# Authentication -------------------------------------------------------------------

@lru_cache(maxsize=1 << 15)
def message_is_authentic(msg, pk: bytes, backend: CryptoBackend) -> bool:
    if not backend.verify(pk, signing_bytes(msg), msg.signature):
        return False
    if isinstance(msg, MessageT):
        return tx_is_authentic(msg.tx, pk, backend)
    return True


def tx_is_authentic(tx: Transaction, pk: Optional[bytes], backend: CryptoBackend) -> bool:
    if pk is None or not tx.signature:
        return False
    return backend.verify(pk, tx_signing_bytes(tx), tx.signature)


def verified(obs: ChannelObservation, params: ProtocolParams) -> ChannelObservation:
    """Received messages that fail verification count as a busy channel"""
    if not obs.is_received:
        return obs
    msg = obs.payload
    if getattr(msg, "sender", None) != obs.sender or msg.epoch != params.epoch:
        return obs.downgraded()
    pk = params.public_keys.get(obs.sender)
    if pk is None or not message_is_authentic(msg, pk, params.backend):
        return obs.downgraded()
    return obs


def seal(msg, sk: bytes, backend: CryptoBackend):
    """Sign a message (and the transaction it carries)"""
    if msg.signature:
        return msg
    if isinstance(msg, MessageT) and not msg.tx.signature:
        tx = replace(msg.tx, signature=backend.sign(sk, tx_signing_bytes(msg.tx)))
        msg = replace(msg, tx=tx)
    return with_signature(msg, backend.sign(sk, signing_bytes(msg)))


# Shared backoff discipline ----------------------------------------------------------

def _advance_window(state: NodeState, idle: bool, params: ProtocolParams) -> None:
    state.rounds_since_idle = 0 if idle else state.rounds_since_idle + 1
    state.c += 1
    if state.c >= state.T_est:
        state.c = 1
        if state.rounds_since_idle >= state.T_est:
            state.p = max(state.p / params.growth, P_FLOOR)
            state.T_est += 2


def _adapt(state: NodeState, obs: ChannelObservation, did_transmit: bool,
           params: ProtocolParams) -> bool:
    """Multiplicative p update; returns whether the node heard a decodable message"""
    idle = not did_transmit and obs.is_idle
    heard = not did_transmit and obs.is_received
    if idle:
        state.p = min(state.p * params.growth, params.p_hat)
        state.T_est = max(1, state.T_est - 1)
    elif heard:
        state.p = max(state.p / params.growth, P_FLOOR)
    _advance_window(state, idle, params)
    return heard


# Phase one ----------------------------------------------------------------------

def poc_decide(state: NodeState, u: float, params: ProtocolParams) -> Action:
    """Slot-one contention: transmit MessageM with probability p"""
    if state.l <= 0:
        raise ContractViolation(f"Node {state.id} has l=0 and cannot contend")
    if u < state.p:
        return transmit(MessageM(epoch=params.epoch, i=state.i, l=state.l, sender=state.id))
    return LISTEN


def poc_update(state: NodeState, obs: ChannelObservation, did_transmit: bool,
               params: ProtocolParams) -> NodeState:
    if _adapt(state, obs, did_transmit, params):
        state.l = max(state.l - 1, 0)
    return state


def p1_slot2_action(state: NodeState, was_potential: bool, slot1_action: Action,
                    slot1_obs: Optional[ChannelObservation], params: ProtocolParams) -> Action:
    """Listen in slot two only to confirm an election; everyone else broadcasts"""
    if was_potential:
        if slot1_action.transmits:
            return LISTEN
    elif slot1_obs is not None and slot1_obs.is_received and slot1_obs.residual < params.theta:
        return LISTEN
    return transmit(MessageM(epoch=params.epoch, i=state.i, l=state.l, sender=state.id))


def p1_slot2_transition(state: NodeState, was_potential: bool, slot1_action: Action,
                        slot1_obs: Optional[ChannelObservation],
                        slot2_obs: Optional[ChannelObservation],
                        params: ProtocolParams) -> Slot2Decision:
    action = p1_slot2_action(state, was_potential, slot1_action, slot1_obs, params)
    if action.transmits:
        return Slot2Decision(P1Outcome.BROADCAST, message=action.message)
    if slot2_obs is None or not slot2_obs.is_idle:
        return Slot2Decision(P1Outcome.CONTINUE)
    if was_potential:
        state.i_k = state.i
        state.leader_id = state.id
        return Slot2Decision(P1Outcome.ELECTED, leader=state.id, i_k=state.i)
    state.i_k = state.i
    state.leader_id = slot1_obs.sender
    return Slot2Decision(P1Outcome.RECOGNIZED_LEADER, leader=slot1_obs.sender, i_k=state.i)


# Phase two ----------------------------------------------------------------------

def next_transaction(state: NodeState) -> Transaction:
    """Fresh synthetic transaction; the id is unique network-wide"""
    state.tx_seq += 1
    tx_id = state.id.to_bytes(4, "big") + state.tx_seq.to_bytes(8, "big")
    payload = hashlib.sha256(b"transfer" + tx_id).digest()[:16]
    return Transaction(id=tx_id, payload=payload, originator=state.id)


def send_transaction_decide(state: NodeState, u: float, params: ProtocolParams) -> Action:
    if u < state.p:
        tx = next_transaction(state)
        state.pending_tx = tx
        return transmit(MessageT(tx=tx, epoch=params.epoch, j=state.j, l=state.l, sender=state.id))
    return LISTEN


def send_transaction_update(state: NodeState, obs: ChannelObservation, did_transmit: bool,
                            params: ProtocolParams) -> NodeState:
    """Same p and window discipline as contention; the leader counter is untouched"""
    _adapt(state, obs, did_transmit, params)
    return state


def p2_leader_collect(state: NodeState, obs: ChannelObservation, params: ProtocolParams) -> bool:
    obs = verified(obs, params)
    if not obs.is_received or not isinstance(obs.payload, MessageT):
        return False
    tx = obs.payload.tx
    if tx.id in state.txp_ids or tx.id in state.committed_tx_ids:
        return False
    state.txp.append(tx)
    state.txp_ids.add(tx.id)
    return True


def sort_evidence(state: NodeState) -> SortEvidence:
    return SortEvidence(role=state.role, w=state.w, h=state.h, pi=state.pi, l0=state.l0)


def build_block_message(state: NodeState, params: ProtocolParams,
                        evidence: Optional[SortEvidence] = None) -> MessageB:
    evidence = evidence or sort_evidence(state)
    chain = state.chain
    block = ledger_service.pack(params.epoch, chain.tip.hash, state.id, state.txp, evidence)
    msg = MessageB(
        headers=tuple(chain.headers), block=block, epoch=params.epoch, j=state.j,
        l=state.l, sort_evidence=evidence, sender=state.id,
    )
    return seal(msg, state.keys.sk, params.backend)


def finalize_block(state: NodeState, params: ProtocolParams) -> MessageB:
    """Pack txp into a block, append it locally and return the signed MessageB"""
    if state.leader_id != state.id:
        raise ContractViolation(f"Node {state.id} is not the elected leader")
    msg = build_block_message(state, params)
    state.chain = ledger_service.append(state.chain.copy(), msg.block)
    for tx in msg.block.txs:
        state.committed_tx_ids.setdefault(tx.id, params.epoch)
    logger.debug(f"Leader {state.id} finalized epoch {params.epoch} with {len(state.txp)} txs")
    return msg


def _evidence_ok(msg: MessageB, pk: bytes, params: ProtocolParams) -> bool:
    ev = msg.sort_evidence
    if msg.block.sort_evidence != ev or ev.role is not Role.LEADER or ev.l0 < 1:
        return False
    if params.stakes and params.stakes.get(msg.sender) != ev.w:
        return False
    return verify_sortition(pk, ev.h, ev.pi, params.seed, ev.role, params.tau,
                            ev.w, params.W, ev.l0, backend=params.backend)


def _txs_ok(committed: Mapping[bytes, int], msg: MessageB, params: ProtocolParams) -> bool:
    seen = set()
    for tx in msg.block.txs:
        if tx.id in seen or tx.id in committed:
            return False
        seen.add(tx.id)
        if not tx_is_authentic(tx, params.public_keys.get(tx.originator), params.backend):
            return False
    return True


def accept_block(state: NodeState, obs: ChannelObservation, params: ProtocolParams,
                 store: Optional[ledger_service.BlockStore] = None,
                 allow_sync: bool = True) -> AcceptResult:
    """Verify a received MessageB and extend or replace the local chain"""
    if not obs.is_received or not isinstance(obs.payload, MessageB):
        return AcceptResult(False, reason="no block")
    msg: MessageB = obs.payload
    if msg.sender != obs.sender or msg.epoch != params.epoch:
        return AcceptResult(False, reason="round mismatch")
    block = msg.block
    if block.epoch != params.epoch or block.leader != msg.sender:
        return AcceptResult(False, reason="block header mismatch")
    if state.leader_id is not None and state.leader_id != msg.sender:
        return AcceptResult(False, reason="unrecognized leader")
    pk = params.public_keys.get(msg.sender)
    if pk is None or not message_is_authentic(msg, pk, params.backend):
        return AcceptResult(False, reason="bad signature")
    if not _evidence_ok(msg, pk, params):
        return AcceptResult(False, reason="sortition evidence rejected")
    if not ledger_service.block_is_consistent(block):
        return AcceptResult(False, reason="inconsistent block")

    chain, synced = ledger_service.extend_or_adopt(state.chain, msg.headers, block, store, allow_sync)
    if chain is None:
        return AcceptResult(False, reason="does not extend chain")
    committed = (ledger_service.committed_tx_ids(Chain(chain.blocks[:-1])) if synced
                 else state.committed_tx_ids)
    if not _txs_ok(committed, msg, params):
        return AcceptResult(False, reason="invalid transaction")
    state.chain = chain
    state.committed_tx_ids = dict(committed) if synced else committed
    for tx in block.txs:
        state.committed_tx_ids.setdefault(tx.id, block.epoch)
    if synced:
        logger.warning(f"Node {state.id} synced missing headers at epoch {params.epoch}")
    return AcceptResult(True, synced=synced)
