from typing import Dict, List, Optional
from pydantic import BaseModel, Field


class MetricsRow(BaseModel):
    trial: int
    epoch: int
    round: int
    p_V: float = Field(ge=0.0)
    phase: str
    jammed: bool
    cumulative_tx: int = Field(ge=0)
    throughput_tps: float = Field(ge=0.0)


class LedgerReport(BaseModel):
    chain_lengths: Dict[int, int]
    common_prefix_depth: int = Field(ge=0)  # smallest k passing the check for every honest pair
    adversarial_block_ratio: float = Field(ge=0.0, le=1.0)
    max_window_adversarial_ratio: float = Field(ge=0.0, le=1.0)
    divergences: List[int] = []
    max_divergence: int = Field(default=0, ge=0)
    growth_coefficient: Optional[float] = None
    epoch_string: str = ""
    persistence_ok: bool = True
    committed_tx: int = 0
    generated_tx: int = 0
    liveness_ratio: float = Field(default=0.0, ge=0.0, le=1.0)
    mean_commit_latency: Optional[float] = None


class PresetInfo(BaseModel):
    name: str
    description: str
    csv_files: List[str]


class PresetRunRequest(BaseModel):
    trials: Optional[int] = Field(default=None, ge=1, le=10_000)
    seed: int = Field(default=0, ge=0)
    overrides: List[str] = []


class PresetRunResponse(BaseModel):
    preset: str
    trials: int
    seed: int
    files: Dict[str, str]  # series name -> CSV path
    rows: Dict[str, List[Dict]]  # series name -> aggregated rows
