"""Budget-bounded jamming and Sybil node behavior."""
from __future__ import annotations

import logging
from dataclasses import replace
from pathlib import Path
from typing import List, Sequence, Set

import numpy as np
import pandas as pd

from ..models.adversary import (
    JammerConfig, JammerStrategy, JamSchedule, SybilBehavior, SybilConfig, SybilPolicy,
)
from ..models.protocol import MessageB, NodeState
from ..models.simulation import Phase
from .export_service import save_csv
from .node_service import ProtocolParams, build_block_message, sort_evidence

logger = logging.getLogger(__name__)


def plan_window(config: JammerConfig, rng: np.random.Generator) -> JamSchedule:
    """One aligned window of T rounds holding exactly the jamming budget"""
    T, budget = config.T, config.budget
    jammed = np.zeros(T, dtype=bool)
    if config.strategy is JammerStrategy.RANDOM and budget > 0:
        jammed[rng.choice(T, size=budget, replace=False)] = True
    elif config.strategy is JammerStrategy.BURSTY and budget > 0:
        offset = int(rng.integers(0, T - budget + 1))
        jammed[offset:offset + budget] = True
    return JamSchedule(T=T, budget=budget, jammed=jammed.tolist())


class JamPlanner:
    """Run-long jam schedule, extended window by window as rounds are reached"""

    def __init__(self, config: JammerConfig, rng: np.random.Generator):
        self.config = config
        self.rng = rng
        self.schedule = JamSchedule(T=config.T, budget=config.budget)

    @property
    def active(self) -> bool:
        return self.config.strategy is not JammerStrategy.NONE and self.config.budget > 0

    def is_jammed(self, round_index: int) -> bool:
        if not self.active:
            return False
        while round_index > len(self.schedule.jammed):
            self.schedule.jammed.extend(plan_window(self.config, self.rng).jammed)
        return self.schedule.is_jammed(round_index)

    def noise(self, round_index: int) -> float:
        self.is_jammed(round_index)
        return jam_noise(self.schedule, round_index, self.config.jam_power)


def jam_noise(schedule: JamSchedule, round_index: int, jam_power: float) -> float:
    return jam_power if schedule.is_jammed(round_index) else 0.0


def aligned_window_counts(jammed: Sequence[bool], T: int) -> np.ndarray:
    flags = np.asarray(jammed, dtype=int)
    if flags.size == 0:
        return np.zeros(0, dtype=int)
    pad = (-flags.size) % T
    return np.concatenate([flags, np.zeros(pad, dtype=int)]).reshape(-1, T).sum(axis=1)


def respects_budget(schedule: JamSchedule) -> bool:
    return bool(np.all(aligned_window_counts(schedule.jammed, schedule.T) <= schedule.budget))


def sliding_window_violations(jammed: Sequence[bool], T: int, epsilon: float) -> int:
    """Number of length-T windows, at any offset, jammed more than (1-ε)T times"""
    flags = np.asarray(jammed, dtype=int)
    if flags.size < T:
        return 0
    budget = int(round((1.0 - epsilon) * T, 9))
    sums = np.convolve(flags, np.ones(T, dtype=int), mode="valid")
    return int(np.count_nonzero(sums > budget))


def runs_per_window(schedule: JamSchedule) -> List[int]:
    """Maximal jammed runs inside each aligned window"""
    out = []
    flags = schedule.jammed
    for start in range(0, len(flags), schedule.T):
        window = flags[start:start + schedule.T]
        out.append(sum(1 for k, f in enumerate(window) if f and (k == 0 or not window[k - 1])))
    return out


def dump_schedule_csv(schedule: JamSchedule, path: str | Path) -> Path:
    df = pd.DataFrame({
        "round": np.arange(1, len(schedule.jammed) + 1),
        "jammed": np.asarray(schedule.jammed, dtype=int),
    })
    return save_csv(df, path, schema="jam_schedule")


# Sybil nodes ------------------------------------------------------------------

def select_sybils(n_nodes: int, config: SybilConfig, rng: np.random.Generator) -> Set[int]:
    count = int(round(config.fraction * n_nodes))
    if count == 0:
        return set()
    if config.fraction >= 0.5:
        logger.warning(f"Sybil fraction {config.fraction} breaks the honest-majority assumption")
    return {int(v) for v in rng.choice(n_nodes, size=count, replace=False)}


def sybil_policy(node: NodeState, phase: Phase, policy: SybilPolicy) -> SybilBehavior:
    """Sybil nodes contend and relay like honest ones; they only deviate when finalizing"""
    if not node.sybil or phase is not Phase.FINAL or policy is SybilPolicy.PUBLISH:
        return SybilBehavior.HONEST
    if policy is SybilPolicy.INVALID:
        return SybilBehavior.INVALID_BLOCK
    return SybilBehavior.SILENT


def forge_block_message(node: NodeState, params: ProtocolParams) -> MessageB:
    """Correctly signed block whose sortition evidence claims a wrong counter"""
    evidence = sort_evidence(node)
    forged = replace(evidence, l0=evidence.l0 + 1)
    return build_block_message(node, params, evidence=forged)
