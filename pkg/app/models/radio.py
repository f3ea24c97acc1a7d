from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional

from pydantic import BaseModel, Field, model_validator


@dataclass(frozen=True, slots=True)
class Position:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"Non-finite coordinates: ({self.x}, {self.y})")


class RadioParams(BaseModel):
    """Uniform transmit power and SINR thresholds of the single-hop region"""
    power: float = Field(gt=0.0)
    alpha: float = 4.0
    beta: float = 2.0
    theta: float = 2.0
    env_noise: float = Field(default=0.0, ge=0.0)  # environmental part of the composite noise

    @model_validator(mode="after")
    def _check_ranges(self):
        if not (2.0 < self.alpha <= 6.0):
            raise ValueError(f"alpha must be in (2, 6], got {self.alpha}")
        if self.beta <= 1.0:
            raise ValueError(f"beta must be > 1, got {self.beta}")
        if self.theta <= 0.0:
            raise ValueError(f"theta must be > 0, got {self.theta}")
        return self

    @classmethod
    def for_square(cls, d: float, alpha: float = 4.0, beta: float = 2.0,
                   theta: float = 2.0, env_noise: float = 0.0) -> "RadioParams":
        """P = βθ(√2·d)^α so that the square diagonal equals R₀"""
        return cls(
            power=beta * theta * (math.sqrt(2.0) * d) ** alpha,
            alpha=alpha,
            beta=beta,
            theta=theta,
            env_noise=env_noise,
        )

    class Config:
        frozen = True


@dataclass(slots=True)
class SlotAir:
    """Everything on the air during one slot"""
    transmitters: Dict[int, Any] = field(default_factory=dict)  # node id -> payload
    adv_noise: float = 0.0

    def __post_init__(self):
        if self.adv_noise < 0:
            raise ValueError(f"adv_noise must be >= 0, got {self.adv_noise}")


class ObservationKind(str, Enum):
    IDLE = "idle"
    BUSY = "busy"
    RECEIVED = "received"


@dataclass(frozen=True, slots=True)
class ChannelObservation:
    kind: ObservationKind
    payload: Any = None
    sender: Optional[int] = None
    residual: float = 0.0  # I+N seen by the listener for the decoded sender

    @property
    def is_idle(self) -> bool:
        return self.kind is ObservationKind.IDLE

    @property
    def is_busy(self) -> bool:
        return self.kind is ObservationKind.BUSY

    @property
    def is_received(self) -> bool:
        return self.kind is ObservationKind.RECEIVED

    def downgraded(self) -> "ChannelObservation":
        """A reception that failed verification counts as a busy channel"""
        return BUSY


IDLE = ChannelObservation(ObservationKind.IDLE)
BUSY = ChannelObservation(ObservationKind.BUSY)


def received(payload: Any, sender: int, residual: float = 0.0) -> ChannelObservation:
    return ChannelObservation(ObservationKind.RECEIVED, payload, sender, residual)
