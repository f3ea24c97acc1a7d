"""Crypto micro-benchmark for the operations a node performs per message.

Timings are hardware dependent and informational only.
"""
import logging
import time
from dataclasses import replace
from typing import Callable, Dict, List, Optional

import pandas as pd

from ..core.config import get_settings
from ..core.errors import ConfigError
from ..models.crypto import Role
from ..models.protocol import MessageB, SortEvidence, Transaction
from . import ledger_service
from .codec_service import signing_bytes, tx_signing_bytes
from .crypto_service import CryptoBackend, derive_keypair, get_backend
from .sortition_service import sortition, verify_sortition

logger = logging.getLogger(__name__)

BENCH_BLOCK_TXS = 100
BENCH_SEED = b"blown-bench-seed"
BENCH_COLUMNS = ["operation", "backend", "repeats", "mean_ms", "total_ms"]


def _time(fn: Callable[[], object], repeats: int) -> float:
    start = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - start) * 1000.0


def bench_crypto(repeats: Optional[int] = None,
                 backend: Optional[CryptoBackend] = None,
                 block_txs: int = BENCH_BLOCK_TXS) -> pd.DataFrame:
    """Average time of sign tx, verify tx, sign block, confirm block, Sortition and VerifySortition"""
    if repeats is None:
        repeats = get_settings().bench_repeats
    if repeats < 1:
        raise ConfigError(f"repeats must be >= 1, got {repeats}")
    backend = backend or get_backend()
    keys = derive_keypair(0, 0, backend)
    w, W, tau = 20, 2000, 1000.0

    tx = Transaction(id=bytes(12), payload=bytes(16), originator=0)
    tx_bytes = tx_signing_bytes(tx)
    tx_sig = backend.sign(keys.sk, tx_bytes)

    txs = [
        replace(t, signature=backend.sign(keys.sk, tx_signing_bytes(t)))
        for t in (Transaction(id=k.to_bytes(12, "big"), payload=bytes(16), originator=0)
                  for k in range(block_txs))
    ]
    outcome = sortition(keys.sk, BENCH_SEED, Role.LEADER, tau, w, W, backend)
    evidence = SortEvidence(role=outcome.role, w=w, h=outcome.h, pi=outcome.pi, l0=outcome.l0)
    chain = ledger_service.new_chain()
    block = ledger_service.pack(1, chain.tip.hash, 0, txs, evidence)
    msg = MessageB(headers=tuple(chain.headers), block=block, epoch=1, j=1, l=outcome.l0,
                   sort_evidence=evidence, sender=0)
    block_bytes = signing_bytes(msg)
    block_sig = backend.sign(keys.sk, block_bytes)

    def confirm_block() -> bool:
        return (
            backend.verify(keys.pk, block_bytes, block_sig)
            and ledger_service.block_is_consistent(block)
            and all(backend.verify(keys.pk, tx_signing_bytes(t), t.signature) for t in block.txs)
            and verify_sortition(keys.pk, evidence.h, evidence.pi, BENCH_SEED, evidence.role,
                                 tau, w, W, evidence.l0, backend)
        )

    operations: Dict[str, Callable[[], object]] = {
        "sign_tx": lambda: backend.sign(keys.sk, tx_bytes),
        "verify_tx": lambda: backend.verify(keys.pk, tx_bytes, tx_sig),
        "sign_block": lambda: backend.sign(keys.sk, signing_bytes(msg)),
        "confirm_block": confirm_block,
        "sortition": lambda: sortition(keys.sk, BENCH_SEED, Role.LEADER, tau, w, W, backend),
        "verify_sortition": lambda: verify_sortition(
            keys.pk, outcome.h, outcome.pi, BENCH_SEED, Role.LEADER, tau, w, W, outcome.l0, backend,
        ),
    }

    logger.info(f"🧪 Crypto benchmark: backend={backend.name} repeats={repeats} block_txs={block_txs}")
    rows: List[dict] = []
    for name, fn in operations.items():
        total = _time(fn, repeats)
        rows.append({
            "operation": name,
            "backend": backend.name,
            "repeats": repeats,
            "mean_ms": total / repeats,
            "total_ms": total,
        })
        logger.debug(f"{name}: {total / repeats:.4f} ms")
    return pd.DataFrame(rows, columns=BENCH_COLUMNS)
