"""SINR physical layer of the single-hop region.

A listener senses an idle channel when its total received power is below the
sensing threshold θ, decodes transmitter u when S_u ≥ β·(RSS − S_u), and
senses a busy channel otherwise.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, Sequence

import numpy as np

from ..core.errors import ContractViolation
from ..models.radio import (
    BUSY, IDLE, ChannelObservation, Position, RadioParams, SlotAir, received,
)

logger = logging.getLogger(__name__)


def distance(a: Position, b: Position) -> float:
    return math.hypot(a.x - b.x, a.y - b.y)


def received_power(power: float, d: float, alpha: float) -> float:
    if d <= 0:
        raise ContractViolation(f"received_power needs d > 0, got {d}")
    return power * d ** (-alpha)


def r0_bound(power: float, beta: float, theta: float, alpha: float) -> float:
    return (power / (beta * theta)) ** (1.0 / alpha)


class SinrMedium:
    """Positions plus radio parameters, with the pairwise received-power matrix cached"""

    def __init__(self, positions: Sequence[Position], radio: RadioParams):
        self.positions = list(positions)
        self.radio = radio
        self.n = len(self.positions)

        xy = np.array([[p.x, p.y] for p in self.positions], dtype=float).reshape(self.n, 2)
        diff = xy[:, None, :] - xy[None, :, :]
        dist = np.sqrt((diff ** 2).sum(axis=-1))
        off_diag = ~np.eye(self.n, dtype=bool)
        if self.n and np.any(dist[off_diag] <= 0):
            raise ContractViolation("Two nodes share a position")
        with np.errstate(divide="ignore"):
            gain = np.where(off_diag, radio.power * np.power(dist, -radio.alpha), 0.0)
        # gain[u, v]: power of u's signal at v
        self.gain = gain
        self.max_distance = float(dist.max()) if self.n > 1 else 0.0
        if self.max_distance > self.r0 * (1.0 + 1e-9):
            logger.warning(
                f"Nodes up to {self.max_distance:.3f} apart exceed the single-hop range "
                f"R0={self.r0:.3f}; some pairs cannot hear each other"
            )

    @property
    def r0(self) -> float:
        return r0_bound(self.radio.power, self.radio.beta, self.radio.theta, self.radio.alpha)

    def signal(self, sender: int, listener: int) -> float:
        return float(self.gain[sender, listener])

    def noise(self, air: SlotAir) -> float:
        return self.radio.env_noise + air.adv_noise

    # Scalar operations ------------------------------------------------------

    def rss(self, listener: int, air: SlotAir) -> float:
        if listener in air.transmitters:
            raise ContractViolation(f"Node {listener} cannot listen while transmitting")
        total = 0.0
        for sender in air.transmitters:
            total += self.gain[sender, listener]
        return float(total) + self.noise(air)

    def observe(self, listener: int, air: SlotAir) -> ChannelObservation:
        rss = self.rss(listener, air)
        if rss < self.radio.theta:
            return IDLE
        beta = self.radio.beta
        for sender, payload in air.transmitters.items():
            s = float(self.gain[sender, listener])
            if s >= beta * (rss - s):
                return received(payload, sender, rss - s)
        return BUSY

    def residual_interference(self, listener: int, sender: int, air: SlotAir) -> float:
        if sender not in air.transmitters:
            raise ContractViolation(f"Node {sender} did not transmit in this slot")
        return self.rss(listener, air) - float(self.gain[sender, listener])

    # Vectorized slot resolution ----------------------------------------------

    def resolve(self, air: SlotAir) -> Dict[int, ChannelObservation]:
        """Observation of every non-transmitting node for one slot"""
        senders = np.fromiter(air.transmitters.keys(), dtype=int, count=len(air.transmitters))
        listening = np.ones(self.n, dtype=bool)
        listening[senders] = False
        listeners = np.flatnonzero(listening)
        noise = self.noise(air)

        if senders.size == 0:
            obs = IDLE if noise < self.radio.theta else BUSY
            return {int(v): obs for v in listeners}

        signals = self.gain[np.ix_(senders, listeners)]
        rss = signals.sum(axis=0) + noise
        best_row = signals.argmax(axis=0)
        best = signals[best_row, np.arange(listeners.size)]
        residual = rss - best
        decoded = (rss >= self.radio.theta) & (best >= self.radio.beta * residual)
        idle = rss < self.radio.theta

        payloads = air.transmitters
        out: Dict[int, ChannelObservation] = {}
        for k, v in enumerate(listeners.tolist()):
            if idle[k]:
                out[v] = IDLE
            elif decoded[k]:
                sender = int(senders[best_row[k]])
                out[v] = received(payloads[sender], sender, float(residual[k]))
            else:
                out[v] = BUSY
        return out


def rss(listener: int, air: SlotAir, world: SinrMedium) -> float:
    return world.rss(listener, air)


def observe(listener: int, air: SlotAir, world: SinrMedium) -> ChannelObservation:
    return world.observe(listener, air)


def residual_interference(listener: int, sender: int, air: SlotAir, world: SinrMedium) -> float:
    return world.residual_interference(listener, sender, air)
