"""Throughput, aggregated probability and ledger measurements of a finished run."""
from __future__ import annotations

import logging
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np
import pandas as pd

from ..models.metrics import LedgerReport, MetricsRow
from ..models.protocol import Chain, NodeState
from ..models.simulation import EpochTrace, Phase
from . import ledger_service

logger = logging.getLogger(__name__)

US = 1e-6
METRICS_COLUMNS = ["trial", "epoch", "round", "p_V", "phase", "jammed", "cumulative_tx", "throughput_tps"]


def throughput(tx_count: int, i: int, j: int, slot_us: float = 50.0) -> float:
    """Transactions per second over i two-slot rounds and j one-slot rounds"""
    if i < 0 or j < 0:
        raise ValueError(f"Round counts must be >= 0, got i={i}, j={j}")
    if i == 0 and j == 0:
        raise ValueError("Throughput over zero rounds is undefined")
    seconds = (i * 2 * slot_us + j * slot_us) * US
    return tx_count / seconds


def aggregated_probability(states: Iterable[NodeState]) -> float:
    return float(sum(s.p for s in states))


def epoch_frame(trace: EpochTrace, trial: int = 0, slot_us: float = 50.0) -> pd.DataFrame:
    """Per-round p_V and running throughput of the leader's collected transactions"""
    if not trace.rounds:
        return pd.DataFrame(columns=METRICS_COLUMNS)
    phases = np.array([r.phase.value for r in trace.rounds])
    durations = np.where(phases == Phase.P1.value, 2 * slot_us, slot_us)
    elapsed = np.cumsum(durations) * US
    txp = np.array([r.txp_size for r in trace.rounds], dtype=float)
    return pd.DataFrame({
        "trial": trial,
        "epoch": trace.epoch,
        "round": [r.epoch_round for r in trace.rounds],
        "p_V": [r.p_V for r in trace.rounds],
        "phase": phases,
        "jammed": [r.jammed for r in trace.rounds],
        "cumulative_tx": txp.astype(int),
        "throughput_tps": txp / elapsed,
    })


def metrics_rows(trace: EpochTrace, trial: int = 0, slot_us: float = 50.0) -> List[MetricsRow]:
    return [MetricsRow(**row) for row in epoch_frame(trace, trial, slot_us).to_dict("records")]


def converged(trace: EpochTrace, window: int, slot_us: float = 50.0) -> Tuple[float, float]:
    """Mean p_V and mean running throughput over the last `window` rounds"""
    df = epoch_frame(trace, slot_us=slot_us)
    if df.empty:
        return 0.0, 0.0
    tail = df.tail(window)
    return float(tail["p_V"].mean()), float(tail["throughput_tps"].mean())


def epoch_throughput(trace: EpochTrace, slot_us: float = 50.0) -> float:
    """Committed transactions over the epoch's duration; no block counts as zero"""
    if trace.i == 0 and trace.j == 0:
        return 0.0
    committed = trace.block_tx_count if trace.symbol != "⊥" else 0
    return throughput(committed, trace.i, trace.j, slot_us)


def ledger_report(chains: Mapping[int, Chain], honest: Set[int], adversary: Set[int],
                  length_history: Sequence[Mapping[int, int]], traces: Sequence[EpochTrace],
                  generated: Mapping[bytes, int], quality_window: int = 10) -> LedgerReport:
    honest_chains = {v: c for v, c in chains.items() if v in honest}
    canonical = ledger_service.canonical_chain(chains, honest)
    body = len(canonical) - 1

    tips: Dict[bytes, Chain] = {}
    for chain in honest_chains.values():
        tips.setdefault(chain.tip.hash, chain)
    divergences = sorted(ledger_service.divergence(canonical, c) for c in tips.values())

    growth: Optional[float] = None
    if len(length_history) > 1:
        growth = ledger_service.chain_growth(length_history, len(length_history) - 1)

    committed = ledger_service.committed_tx_ids(canonical)
    latencies = [committed[tx] - epoch for tx, epoch in generated.items() if tx in committed]

    return LedgerReport(
        chain_lengths={v: len(c) for v, c in sorted(honest_chains.items())},
        common_prefix_depth=ledger_service.common_prefix_depth(list(honest_chains.values())),
        adversarial_block_ratio=ledger_service.adversarial_ratio(canonical, adversary),
        max_window_adversarial_ratio=(
            ledger_service.chain_quality(canonical, min(quality_window, body), adversary)
            if body > 0 else 0.0
        ),
        divergences=divergences,
        max_divergence=max(divergences, default=0),
        growth_coefficient=growth,
        epoch_string=ledger_service.epoch_string(t.symbol for t in traces),
        persistence_ok=ledger_service.persistence_check(list(honest_chains.values()), t=1),
        committed_tx=len(committed),
        generated_tx=len(generated),
        liveness_ratio=len(latencies) / len(generated) if generated else 0.0,
        mean_commit_latency=float(np.mean(latencies)) if latencies else None,
    )
