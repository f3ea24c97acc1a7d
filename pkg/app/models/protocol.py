from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Set, Tuple

from .crypto import KeyPair, Role

GENESIS_LEADER = -1
ZERO_HASH = bytes(32)


@dataclass(frozen=True, slots=True)
class Transaction:
    id: bytes
    payload: bytes
    originator: int
    signature: bytes = b""


@dataclass(frozen=True, slots=True)
class SortEvidence:
    """What a leader ships with its block so followers can re-run VerifySortition"""
    role: Role
    w: int
    h: bytes
    pi: bytes
    l0: int


@dataclass(frozen=True, slots=True)
class BlockHeader:
    epoch: int
    prev_hash: bytes
    leader: int
    tx_root: bytes
    evidence_digest: bytes
    hash: bytes = ZERO_HASH


@dataclass(frozen=True, slots=True)
class Block:
    header: BlockHeader
    txs: Tuple[Transaction, ...] = ()
    sort_evidence: Optional[SortEvidence] = None

    @property
    def hash(self) -> bytes:
        return self.header.hash

    @property
    def epoch(self) -> int:
        return self.header.epoch

    @property
    def prev_hash(self) -> bytes:
        return self.header.prev_hash

    @property
    def leader(self) -> int:
        return self.header.leader


@dataclass(slots=True)
class Chain:
    blocks: List[Block] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.blocks)

    @property
    def tip(self) -> Block:
        return self.blocks[-1]

    @property
    def hashes(self) -> List[bytes]:
        return [b.hash for b in self.blocks]

    @property
    def headers(self) -> List[BlockHeader]:
        return [b.header for b in self.blocks]

    def copy(self) -> "Chain":
        return Chain(list(self.blocks))


@dataclass(frozen=True, slots=True)
class MessageM:
    """Phase-one contention message"""
    epoch: int
    i: int
    l: int
    sender: int
    signature: bytes = b""


@dataclass(frozen=True, slots=True)
class MessageT:
    """Phase-two transaction message"""
    tx: Transaction
    epoch: int
    j: int
    l: int
    sender: int
    signature: bytes = b""


@dataclass(frozen=True, slots=True)
class MessageB:
    """Block finalization message"""
    headers: Tuple[BlockHeader, ...]
    block: Block
    epoch: int
    j: int
    l: int
    sort_evidence: SortEvidence
    sender: int
    signature: bytes = b""


def with_signature(message, signature: bytes):
    return replace(message, signature=signature)


class ActionKind(str, Enum):
    TRANSMIT = "transmit"
    LISTEN = "listen"


@dataclass(frozen=True, slots=True)
class Action:
    kind: ActionKind
    message: object = None

    @property
    def transmits(self) -> bool:
        return self.kind is ActionKind.TRANSMIT


LISTEN = Action(ActionKind.LISTEN)


def transmit(message) -> Action:
    return Action(ActionKind.TRANSMIT, message)


class P1Outcome(str, Enum):
    ELECTED = "elected"
    RECOGNIZED_LEADER = "recognized_leader"
    BROADCAST = "broadcast"
    CONTINUE = "continue"


@dataclass(frozen=True, slots=True)
class Slot2Decision:
    outcome: P1Outcome
    leader: Optional[int] = None
    i_k: Optional[int] = None
    message: Optional[MessageM] = None


@dataclass(slots=True)
class NodeState:
    """Protocol variables of one node for the current epoch"""
    id: int
    keys: KeyPair
    w: int
    chain: Chain
    sybil: bool = False
    role: Role = Role.LEADER
    h: bytes = b""
    pi: bytes = b""
    l0: int = 0
    l: int = 0
    p: float = 0.1
    c: int = 0
    T_est: int = 1
    rounds_since_idle: int = 0
    i: int = 1
    j: int = 0
    i_k: Optional[int] = None
    leader_id: Optional[int] = None
    txp: List[Transaction] = field(default_factory=list)
    txp_ids: Set[bytes] = field(default_factory=set)
    tx_seq: int = 0
    pending_tx: Optional[Transaction] = None
    committed_tx_ids: Dict[bytes, int] = field(default_factory=dict)

    @property
    def is_potential_leader(self) -> bool:
        return self.l > 0
