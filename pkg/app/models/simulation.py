from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, List, Literal, Optional

from pydantic import BaseModel, Field, ValidationError, model_validator

from ..core.errors import ConfigError
from .adversary import JammerConfig, JammerStrategy, SybilConfig, SybilPolicy
from .radio import RadioParams


class Placement(str, Enum):
    UNIFORM = "uniform"
    GAUSS = "gauss"


class Phase(str, Enum):
    P1 = "P1"
    P2 = "P2"
    FINAL = "FINAL"


class SystemState(str, Enum):
    START = "START"
    LEADER = "LEADER"
    COMMIT = "COMMIT"
    FINAL = "FINAL"


class SimConfig(BaseModel):
    """Full parameterization of one experiment; defaults reproduce the reference setting"""
    N: int = Field(default=100, ge=2)
    d: Optional[float] = Field(default=None, gt=0.0)
    density: Optional[float] = Field(default=None, gt=0.0)
    placement: Placement = Placement.UNIFORM
    replace_each_epoch: bool = False

    # radio
    alpha: float = 4.0
    beta: float = 2.0
    theta: float = 2.0
    power: Optional[float] = Field(default=None, gt=0.0)
    env_noise: float = Field(default=0.0, ge=0.0)

    # contention
    p_hat: float = Field(default=0.1, gt=0.0, le=1.0)
    gamma: float = Field(default=0.1, gt=0.0)

    # stake and sortition
    w: int = Field(default=20, ge=1)
    tau: Optional[float] = Field(default=None, gt=0.0)
    c: int = Field(default=10, ge=1)

    # adversary
    jammer: JammerStrategy = JammerStrategy.NONE
    epsilon: float = 0.3
    T: int = Field(default=60, ge=1)
    jam_power: Optional[float] = Field(default=None, ge=0.0)
    sybil_fraction: float = Field(default=0.0, ge=0.0, le=1.0)
    sybil_policy: SybilPolicy = SybilPolicy.WITHHOLD

    # run control
    epochs: int = Field(default=1, ge=0)
    rng_seed: int = Field(default=0, ge=0, lt=2 ** 64)
    round_cap: int = Field(default=1_000_000, ge=1)
    recovery: bool = True
    crypto_backend: Literal["ed25519", "hmac"] = "ed25519"
    slot_us: float = Field(default=50.0, gt=0.0)

    @model_validator(mode="after")
    def _derive(self):
        # derived values bypass fields_set so with_overrides() re-derives them
        def derive(name, value):
            object.__setattr__(self, name, value)

        if self.d is None:
            density = self.density if self.density is not None else 1.0
            derive("d", math.sqrt(self.N / density))
            derive("density", density)
        elif self.density is None:
            derive("density", self.N / self.d ** 2)
        elif not math.isclose(self.density, self.N / self.d ** 2, rel_tol=1e-9):
            raise ValueError(
                f"density={self.density} inconsistent with N={self.N}, d={self.d}"
            )
        if self.power is None:
            derive("power", self.beta * self.theta * (math.sqrt(2.0) * self.d) ** self.alpha)
        if self.tau is None:
            derive("tau", self.W / 2)
        if not (0 < self.tau <= self.W):
            raise ValueError(f"tau={self.tau} outside (0, W={self.W}]")
        if self.jam_power is None:
            derive("jam_power", 100.0 * self.theta)
        try:
            self.radio
            self.jammer_config
        except ValidationError as e:
            raise ValueError(str(e)) from None
        return self

    @property
    def W(self) -> int:
        return self.N * self.w

    @property
    def radio(self) -> RadioParams:
        return RadioParams(
            power=self.power, alpha=self.alpha, beta=self.beta,
            theta=self.theta, env_noise=self.env_noise,
        )

    @property
    def jammer_config(self) -> JammerConfig:
        return JammerConfig(
            strategy=self.jammer, epsilon=self.epsilon, T=self.T, jam_power=self.jam_power,
        )

    @property
    def sybil(self) -> SybilConfig:
        return SybilConfig(fraction=self.sybil_fraction, policy=self.sybil_policy)

    @property
    def p1_round_us(self) -> float:
        return 2 * self.slot_us

    # Factories -------------------------------------------------------------

    @classmethod
    def build(cls, **values: Any) -> "SimConfig":
        try:
            return cls(**values)
        except ValidationError as e:
            raise ConfigError(str(e)) from e

    @classmethod
    def from_file(cls, path: str | Path, overrides: Iterable[str] = ()) -> "SimConfig":
        """Parse a flat key=value file; keys are the SimConfig field names"""
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"Cannot read config file {path}: {e}") from e
        values = parse_key_values(text.splitlines(), source=str(path))
        values.update(parse_key_values(overrides, source="--set"))
        return cls.build(**values)

    def with_overrides(self, overrides: Iterable[str]) -> "SimConfig":
        values = self.model_dump(exclude_unset=True)
        values.update(parse_key_values(overrides, source="--set"))
        return type(self).build(**values)

    def to_key_values(self) -> str:
        lines = []
        for key, value in self.model_dump(mode="json").items():
            lines.append(f"{key}={value}")
        return "\n".join(lines) + "\n"


def parse_key_values(lines: Iterable[str], source: str = "config") -> Dict[str, str]:
    values: Dict[str, str] = {}
    known = set(SimConfig.model_fields)
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got '{raw.strip()}'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"{source}:{lineno}: unknown key '{key}'")
        values[key] = value
    return values


@dataclass(slots=True)
class RoundRecord:
    round: int           # global round index across the run
    epoch_round: int     # 1-based index within the epoch
    phase: Phase
    p_V: float
    jammed: bool
    slot1: str           # idle | success | collision (P1) or channel result (P2)
    txp_size: int
    potential_leaders: int
    state: SystemState


@dataclass(frozen=True, slots=True)
class StateSnapshot:
    """What the system-state classifier looks at after an initialization or a round"""
    phase: Phase
    potential_leaders: int
    j: int = 0
    p2_rounds: int = 0       # c·i_k once a leader is elected
    txp_size: int = 0
    accepted_by: int = 0
    honest_followers: int = 0
    jammed: bool = False     # adversarial noise on the air during this round


@dataclass(slots=True)
class TraceEvent:
    kind: str
    round: int
    node: Optional[int] = None
    detail: str = ""


@dataclass(slots=True)
class EpochTrace:
    epoch: int
    seed: bytes
    rounds: List[RoundRecord] = field(default_factory=list)
    events: List[TraceEvent] = field(default_factory=list)
    i_k: Optional[int] = None
    leader: Optional[int] = None
    leader_is_sybil: bool = False
    block_hash: Optional[bytes] = None
    block_tx_count: int = 0
    leader_txp_size: int = 0
    i: int = 0
    j: int = 0
    p1_successes: int = 0
    jammed_rounds: int = 0
    symbol: str = "⊥"  # "0" honest block, "1" adversarial block, "⊥" no block
    accepted_by: int = 0
    honest_nodes: int = 0

    @property
    def length(self) -> int:
        """Epoch length in rounds; P2 ends with its finalization round j = c·i_k"""
        return self.i + self.j


class EpochSummary(BaseModel):
    epoch: int
    seed: str
    i_k: Optional[int]
    leader: Optional[int]
    leader_is_sybil: bool
    block_hash: Optional[str]
    block_tx_count: int
    leader_txp_size: int
    p1_rounds: int
    p2_rounds: int
    epoch_length: int
    p1_successes: int
    p1_success_fraction: float
    jammed_rounds: int
    throughput_tps: float
    symbol: str
    accepted_by: int
    honest_nodes: int
    sync_events: int


class SimulationReport(BaseModel):
    config: Dict[str, Any]
    epochs: List[EpochSummary] = Field(default_factory=list)
    chains: Dict[int, List[str]] = Field(default_factory=dict)  # node id -> block hashes
    sybil_nodes: List[int] = Field(default_factory=list)
    ledger: Optional[Dict[str, Any]] = None
    sliding_window_violations: int = 0

    def to_json(self) -> str:
        return self.model_dump_json(indent=2)
