"""Hash-linked epoch blocks, fork choice and ledger property checks."""
from __future__ import annotations

import logging
from functools import lru_cache
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from ..models.protocol import (
    GENESIS_LEADER, ZERO_HASH, Block, BlockHeader, Chain, SortEvidence, Transaction,
)
from .codec_service import evidence_digest, header_hash, seal_header, tx_root

logger = logging.getLogger(__name__)


@lru_cache(maxsize=1)
def genesis_block() -> Block:
    header = seal_header(BlockHeader(
        epoch=0, prev_hash=ZERO_HASH, leader=GENESIS_LEADER,
        tx_root=tx_root(()), evidence_digest=ZERO_HASH,
    ))
    return Block(header=header)


def new_chain() -> Chain:
    return Chain([genesis_block()])


def pack(epoch: int, prev_hash: bytes, leader: int, txs: Sequence[Transaction],
         evidence: Optional[SortEvidence]) -> Block:
    """Serialize the collected transactions, in arrival order, into a sealed block"""
    txs = tuple(txs)
    header = seal_header(BlockHeader(
        epoch=epoch, prev_hash=prev_hash, leader=leader,
        tx_root=tx_root(txs), evidence_digest=evidence_digest(evidence),
    ))
    return Block(header=header, txs=txs, sort_evidence=evidence)


def block_is_consistent(block: Block) -> bool:
    """Header hash, transaction root and evidence digest all match the body"""
    header = block.header
    return (
        header.hash == header_hash(header)
        and header.tx_root == tx_root(block.txs)
        and header.evidence_digest == evidence_digest(block.sort_evidence)
    )


def append(chain: Chain, block: Block) -> Chain:
    if block.prev_hash != chain.tip.hash:
        raise ValueError("Block does not extend the chain tip")
    if block.epoch <= chain.tip.epoch:
        raise ValueError(f"Block epoch {block.epoch} not after tip epoch {chain.tip.epoch}")
    chain.blocks.append(block)
    return chain


def headers_are_linked(headers: Sequence[BlockHeader]) -> bool:
    """Internal consistency of a header list that starts at genesis"""
    if not headers or headers[0] != genesis_block().header:
        return False
    for prev, cur in zip(headers, headers[1:]):
        if cur.prev_hash != prev.hash or cur.epoch <= prev.epoch:
            return False
        if cur.hash != header_hash(cur):
            return False
    return True


class BlockStore:
    """Every block body broadcast during a run, for simulator-level header sync"""

    def __init__(self):
        self._blocks: Dict[bytes, Block] = {}
        self.put(genesis_block())

    def put(self, block: Block) -> None:
        self._blocks[block.hash] = block

    def get(self, block_hash: bytes) -> Optional[Block]:
        return self._blocks.get(block_hash)

    def __contains__(self, block_hash: bytes) -> bool:
        return block_hash in self._blocks


def extend_or_adopt(chain: Chain, headers: Sequence[BlockHeader], block: Block,
                    store: Optional[BlockStore], allow_sync: bool) -> Tuple[Optional[Chain], bool]:
    """Fork choice for a verified block message.

    Returns (new chain or None when rejected, whether a header sync was needed).
    The candidate is the sender's header list plus the new block; it replaces the
    local chain when it is at least as long (the freshly finalized branch wins ties).
    """
    if block.prev_hash == chain.tip.hash and block.epoch > chain.tip.epoch:
        return append(chain.copy(), block), False
    if not allow_sync or store is None:
        return None, False
    if not headers or headers[-1].hash != block.prev_hash or not headers_are_linked(headers):
        return None, False
    if len(headers) + 1 < len(chain):
        return None, False
    bodies: List[Block] = []
    for header in headers:
        body = store.get(header.hash)
        if body is None or body.header != header:
            return None, False
        bodies.append(body)
    return Chain(bodies + [block]), True


# Ledger properties -------------------------------------------------------------

def _hashes(path) -> List[bytes]:
    if isinstance(path, Chain):
        return path.hashes
    return [b.hash if isinstance(b, Block) else b for b in path]


def common_prefix_check(chain_a, chain_b, k: int) -> bool:
    """chain_a with its last k blocks removed is a prefix of chain_b"""
    if k < 0:
        raise ValueError("k must be >= 0")
    a, b = _hashes(chain_a), _hashes(chain_b)
    trimmed = a[:max(len(a) - k, 0)]
    return len(trimmed) <= len(b) and b[:len(trimmed)] == trimmed


def common_path_length(path_a, path_b) -> int:
    a, b = _hashes(path_a), _hashes(path_b)
    n = 0
    for x, y in zip(a, b):
        if x != y:
            break
        n += 1
    return n


def divergence(path_a, path_b) -> int:
    """max(l(p1), l(p2)) − l(p1 ∩ p2), lengths counted in hops from genesis"""
    a, b = _hashes(path_a), _hashes(path_b)
    if not a or not b or a[0] != b[0]:
        raise ValueError("Paths must share the genesis block")
    shared = common_path_length(a, b)
    return max(len(a), len(b)) - shared


def chain_quality(chain, window_len: int, adversary_ids: Iterable[int]) -> float:
    """Maximum share of adversary-led blocks over every window of window_len blocks"""
    blocks = chain.blocks if isinstance(chain, Chain) else list(chain)
    body = [b for b in blocks if b.leader != GENESIS_LEADER]
    if window_len < 1 or window_len > len(body):
        raise ValueError(f"window_len={window_len} outside [1, {len(body)}]")
    adversary = set(adversary_ids)
    flags = [1 if b.leader in adversary else 0 for b in body]
    running = sum(flags[:window_len])
    worst = running
    for k in range(window_len, len(flags)):
        running += flags[k] - flags[k - window_len]
        worst = max(worst, running)
    return worst / window_len


def adversarial_ratio(chain, adversary_ids: Iterable[int]) -> float:
    blocks = chain.blocks if isinstance(chain, Chain) else list(chain)
    body = [b for b in blocks if b.leader != GENESIS_LEADER]
    if not body:
        return 0.0
    adversary = set(adversary_ids)
    return sum(1 for b in body if b.leader in adversary) / len(body)


def chain_growth(length_history: Sequence[Mapping[int, int]], k: int) -> float:
    """Speed coefficient: min over honest node pairs of (len at e+k − len at e) / k.

    length_history[e] maps each honest node to its chain length at the onset of epoch e.
    """
    if k < 1:
        raise ValueError("epoch span k must be >= 1")
    if len(length_history) <= k:
        raise ValueError(f"Need more than {k} epoch snapshots, got {len(length_history)}")
    worst: Optional[float] = None
    for e1 in range(len(length_history) - k):
        before, after = length_history[e1], length_history[e1 + k]
        if not before or not after:
            continue
        rate = (min(after.values()) - max(before.values())) / k
        worst = rate if worst is None else min(worst, rate)
    if worst is None:
        raise ValueError("No honest chains recorded")
    return worst


def common_prefix_depth(chains: Sequence) -> int:
    """Smallest k for which every ordered pair of chains passes the check"""
    paths = [_hashes(c) for c in chains]
    depth = 0
    for a in paths:
        for b in paths:
            if a is b:
                continue
            depth = max(depth, len(a) - common_path_length(a, b))
    return depth


def persistence_check(chains: Sequence[Chain], t: int) -> bool:
    """t-stable transactions are reported identically by every chain that holds that index"""
    reports: Dict[Tuple[int, int], bytes] = {}
    for chain in chains:
        stable_upto = len(chain) - 1 - t
        for i, block in enumerate(chain.blocks[:max(stable_upto, 0)]):
            for j, tx in enumerate(block.txs):
                seen = reports.setdefault((i, j), tx.id)
                if seen != tx.id:
                    return False
    return True


def committed_tx_ids(chain: Chain) -> Dict[bytes, int]:
    """Transaction id -> epoch of the block that committed it"""
    out: Dict[bytes, int] = {}
    for block in chain.blocks:
        for tx in block.txs:
            out.setdefault(tx.id, block.epoch)
    return out


def epoch_string(symbols: Iterable[str]) -> str:
    return "".join(symbols)


def canonical_chain(chains: Mapping[int, Chain], honest: Set[int]) -> Chain:
    """Longest honest chain; ties go to the chain held by most honest nodes"""
    counts: Dict[bytes, Tuple[int, int, Chain]] = {}
    for node, chain in chains.items():
        if node not in honest:
            continue
        key = chain.tip.hash
        n, _, _ = counts.get(key, (0, 0, chain))
        counts[key] = (n + 1, len(chain), chain)
    if not counts:
        return new_chain()
    _, _, best = max(counts.values(), key=lambda item: (item[1], item[0], item[2].tip.hash))
    return best
