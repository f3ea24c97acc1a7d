from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class Role(str, Enum):
    LEADER = "LEADER"
    FOLLOWER = "FOLLOWER"

    def to_bytes(self) -> bytes:
        return self.value.encode()


@dataclass(frozen=True, slots=True)
class KeyPair:
    sk: bytes
    pk: bytes

    def __repr__(self) -> str:
        return f"KeyPair(pk={self.pk.hex()[:16]}...)"


@dataclass(frozen=True, slots=True)
class VrfOutput:
    h: bytes
    pi: bytes


@dataclass(frozen=True, slots=True)
class Stake:
    w: int
    W: int
    tau: float

    def __post_init__(self):
        if not (0 <= self.w <= self.W):
            raise ValueError(f"Stake w={self.w} outside [0, W={self.W}]")
        if not (0 < self.tau <= self.W):
            raise ValueError(f"tau={self.tau} outside (0, W={self.W}]")

    @property
    def p(self) -> float:
        return self.tau / self.W


@dataclass(frozen=True, slots=True)
class SortitionOutcome:
    h: bytes
    pi: bytes
    l0: int
    role: Role = Role.LEADER
