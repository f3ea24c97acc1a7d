from __future__ import annotations

from enum import Enum
from typing import List

from pydantic import BaseModel, Field, model_validator


class JammerStrategy(str, Enum):
    NONE = "none"
    RANDOM = "random"
    BURSTY = "bursty"


class SybilPolicy(str, Enum):
    WITHHOLD = "withhold"  # elected Sybil emits no block
    INVALID = "invalid"    # elected Sybil broadcasts a block with forged evidence
    PUBLISH = "publish"    # adversarial leader publishes a valid block


class SybilBehavior(str, Enum):
    HONEST = "honest"
    SILENT = "silent"
    INVALID_BLOCK = "invalid_block"


class JammerConfig(BaseModel):
    strategy: JammerStrategy = JammerStrategy.NONE
    epsilon: float = 0.3
    T: int = Field(default=60, ge=1)
    jam_power: float = Field(default=200.0, ge=0.0)

    @model_validator(mode="after")
    def _check_epsilon(self):
        if not (0.0 < self.epsilon <= 1.0):
            raise ValueError(f"epsilon must be in (0, 1], got {self.epsilon}")
        return self

    @property
    def budget(self) -> int:
        """Jammed rounds allowed per aligned window of T rounds"""
        # round() absorbs float noise such as (1 - 0.3) * 60 = 41.99999...
        return int(round((1.0 - self.epsilon) * self.T, 9))


class JamSchedule(BaseModel):
    T: int
    budget: int
    jammed: List[bool] = Field(default_factory=list)

    def __len__(self) -> int:
        return len(self.jammed)

    def is_jammed(self, round_index: int) -> bool:
        """Round indices are 1-based; rounds beyond the plan are clean"""
        if 1 <= round_index <= len(self.jammed):
            return self.jammed[round_index - 1]
        return False


class SybilConfig(BaseModel):
    fraction: float = Field(default=0.0, ge=0.0, le=1.0)
    policy: SybilPolicy = SybilPolicy.WITHHOLD
