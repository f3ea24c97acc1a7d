"""Experiment presets: seeded trial fan-out, aggregation and CSV emission."""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..core.config import get_settings
from ..core.errors import UnknownPresetError
from ..models.metrics import PresetInfo
from ..models.simulation import SimConfig, parse_key_values
from .export_service import output_dir, save_csv
from .metrics_service import converged, epoch_frame
from .simulation_service import SimulationEngine

logger = logging.getLogger(__name__)

SIZES = (100, 200, 400, 800)
DENSITIES = tuple(round(0.2 + 0.1 * k, 1) for k in range(19))        # 0.2 .. 2.0
EPSILONS = tuple(round(0.1 + 0.05 * k, 2) for k in range(9))         # 0.1 .. 0.5
SYBIL_FRACTIONS = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)
SYBIL_EPOCHS = 5
CHAIN_QUALITY_STAKE = 0.3
CHAIN_QUALITY_DELTA = 0.2
CHAIN_QUALITY_EPOCHS = 200
CHAIN_QUALITY_TRIALS = 20
# the figure presets run under the full reference parameter list, which includes
# a random jammer with epsilon=0.3 and T=60; pass jammer=none for a clean channel
REFERENCE_JAMMER = {"jammer": "random", "epsilon": 0.3, "T": 60}


@dataclass(frozen=True)
class TrialTask:
    """One seeded run; everything in it is picklable for worker processes"""
    config: Dict[str, Any]
    trial: int
    group: Dict[str, Any] = field(default_factory=dict)
    rounds: bool = False
    window: int = 500


@dataclass
class TrialResult:
    trial: int
    group: Dict[str, Any]
    epochs: List[Dict[str, Any]]
    ledger: Dict[str, Any]
    rounds: Optional[pd.DataFrame] = None
    converged_p_V: Optional[float] = None
    converged_throughput: Optional[float] = None


def run_trial(task: TrialTask) -> TrialResult:
    config = SimConfig.build(**task.config)
    engine = SimulationEngine(config, record_rounds=task.rounds)
    report = engine.run()
    result = TrialResult(
        trial=task.trial,
        group=task.group,
        epochs=[e.model_dump() for e in report.epochs],
        ledger=report.ledger or {},
    )
    if task.rounds and engine.traces:
        trace = engine.traces[-1]
        result.rounds = epoch_frame(trace, trial=task.trial, slot_us=config.slot_us)
        result.converged_p_V, result.converged_throughput = converged(trace, task.window, config.slot_us)
    return result


def aggregate(df: pd.DataFrame, by: Sequence[str], metrics: Sequence[str]) -> pd.DataFrame:
    """mean and standard error of each metric per group, plus the trial count"""
    grouped = df.groupby(list(by), sort=True)[list(metrics)]
    stats = grouped.agg(["mean", "sem"])
    stats.columns = [f"{m}_{'stderr' if s == 'sem' else s}" for m, s in stats.columns]
    stats = stats.fillna(0.0)
    stats["n"] = grouped.size()
    return stats.reset_index()


def _epoch_table(results: Iterable[TrialResult]) -> pd.DataFrame:
    rows = []
    for r in results:
        for e in r.epochs:
            rows.append({**r.group, "trial": r.trial, **e})
    return pd.DataFrame(rows)


@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    series: Tuple[str, ...]
    build: Callable[["PresetService", Dict[str, Any], int, int], List[TrialTask]]
    collect: Callable[["PresetService", List[TrialResult]], Dict[str, pd.DataFrame]]


class PresetService:
    """Runs the preset experiments and writes one CSV per series"""

    def __init__(self, workers: Optional[int] = None):
        settings = get_settings()
        self.workers = workers if workers is not None else settings.workers
        self.window = settings.convergence_window

    # Task builders ---------------------------------------------------------

    def _tasks(self, base: Dict[str, Any], grid: Sequence[Dict[str, Any]], trials: int,
               seed: int, rounds: bool = False) -> List[TrialTask]:
        tasks = []
        for group in grid:
            for trial in range(trials):
                config = {**base, **group, "rng_seed": seed + trial}
                tasks.append(TrialTask(config=config, trial=trial, group=dict(group),
                                       rounds=rounds, window=self.window))
        return tasks

    def _one_epoch_tasks(self, base, trials, seed):
        return self._tasks({**REFERENCE_JAMMER, **base, "epochs": 1}, [{}], trials, seed, rounds=True)

    def _size_tasks(self, base, trials, seed):
        grid = [{"N": n, "density": 1.0, "placement": placement}
                for placement in ("uniform", "gauss") for n in SIZES]
        return self._tasks({**REFERENCE_JAMMER, **base, "epochs": 1}, grid, trials, seed)

    def _density_tasks(self, base, trials, seed):
        grid = [{"density": density, "d": 10.0, "N": int(round(density * 100))}
                for density in DENSITIES]
        return self._tasks({**REFERENCE_JAMMER, **base, "epochs": 1}, grid, trials, seed)

    def _jammer_tasks(self, base, trials, seed):
        grid = [{"jammer": strategy, "epsilon": eps}
                for strategy in ("random", "bursty") for eps in EPSILONS]
        return self._tasks({"T": REFERENCE_JAMMER["T"], **base, "epochs": 1}, grid, trials, seed)

    def _sybil_tasks(self, base, trials, seed):
        grid = [{"sybil_fraction": s} for s in SYBIL_FRACTIONS]
        return self._tasks({"epochs": SYBIL_EPOCHS, **REFERENCE_JAMMER, **base}, grid, trials, seed)

    def _chain_quality_tasks(self, base, trials, seed):
        defaults = {"epochs": CHAIN_QUALITY_EPOCHS, "sybil_fraction": CHAIN_QUALITY_STAKE,
                    "sybil_policy": "publish"}
        return self._tasks({**defaults, **base}, [{}], trials, seed)

    # Collectors ------------------------------------------------------------

    def _one_epoch_series(self, results):
        rounds = pd.concat([r.rounds for r in results if r.rounds is not None], ignore_index=True)
        per_round = aggregate(rounds, ["round"], ["p_V", "cumulative_tx", "throughput_tps"])
        epochs = _epoch_table(results)
        epochs["converged_p_V"] = [r.converged_p_V for r in results]
        epochs["converged_throughput"] = [r.converged_throughput for r in results]
        epochs["scope"] = "all"
        summary = aggregate(epochs, ["scope"], [
            "p1_rounds", "p2_rounds", "epoch_length", "block_tx_count", "throughput_tps",
            "converged_p_V", "converged_throughput", "p1_success_fraction",
        ])
        return {"one_epoch_rounds": per_round, "one_epoch_summary": summary.drop(columns="scope")}

    def _sweep(self, results, by, name):
        table = _epoch_table(results)
        return {name: aggregate(table, by, ["epoch_length", "p1_rounds", "throughput_tps",
                                            "p1_success_fraction"])}

    def _size_series(self, results):
        return self._sweep(results, ["placement", "N"], "size_sweep")

    def _density_series(self, results):
        return self._sweep(results, ["density", "N"], "density_sweep")

    def _jammer_series(self, results):
        return self._sweep(results, ["jammer", "epsilon"], "jammer_sweep")

    def _sybil_series(self, results):
        table = _epoch_table(results)
        out = aggregate(table, ["sybil_fraction"], ["epoch_length", "throughput_tps"])
        baseline = out.loc[out["sybil_fraction"] == 0.0, "throughput_tps_mean"]
        out["throughput_ratio"] = (
            out["throughput_tps_mean"] / float(baseline.iloc[0])
            if not baseline.empty and float(baseline.iloc[0]) > 0 else np.nan
        )
        return {"sybil_sweep": out}

    def _chain_quality_series(self, results):
        bound = (1.0 + CHAIN_QUALITY_DELTA) * CHAIN_QUALITY_STAKE
        trials = pd.DataFrame([{
            "trial": r.trial,
            "adversarial_block_ratio": r.ledger.get("adversarial_block_ratio", 0.0),
            "max_window_adversarial_ratio": r.ledger.get("max_window_adversarial_ratio", 0.0),
            "growth_coefficient": r.ledger.get("growth_coefficient") or 0.0,
            "common_prefix_depth": r.ledger.get("common_prefix_depth", 0),
            "within_bound": int(r.ledger.get("adversarial_block_ratio", 0.0) <= bound),
        } for r in results])
        trials["scope"] = "all"
        summary = aggregate(trials, ["scope"], [
            "adversarial_block_ratio", "max_window_adversarial_ratio", "growth_coefficient",
            "within_bound",
        ]).drop(columns="scope")
        summary["bound"] = bound
        return {"chain_quality_trials": trials.drop(columns="scope"), "chain_quality": summary}

    # Registry --------------------------------------------------------------

    PRESETS: Dict[str, Preset] = {}

    @classmethod
    def register(cls, preset: Preset) -> None:
        cls.PRESETS[preset.name] = preset

    @classmethod
    def list_presets(cls) -> List[PresetInfo]:
        return [PresetInfo(name=p.name, description=p.description,
                           csv_files=[f"{s}.csv" for s in p.series])
                for p in cls.PRESETS.values()]

    @classmethod
    def get(cls, name: str) -> Preset:
        try:
            return cls.PRESETS[name]
        except KeyError:
            known = ", ".join(sorted(cls.PRESETS))
            raise UnknownPresetError(f"Unknown preset '{name}' (known: {known})") from None

    # Execution -------------------------------------------------------------

    def execute(self, tasks: List[TrialTask]) -> List[TrialResult]:
        if self.workers <= 1 or len(tasks) <= 1:
            return [run_trial(t) for t in tasks]
        with ProcessPoolExecutor(max_workers=self.workers) as pool:
            return list(pool.map(run_trial, tasks))

    def run(self, name: str, trials: Optional[int] = None, seed: int = 0,
            overrides: Iterable[str] = (), out_dir: Optional[str | Path] = None,
            write: bool = True) -> "PresetRun":
        preset = self.get(name)
        overrides = list(overrides)
        base = parse_key_values(overrides, source="--set")
        # fail fast on bad overrides before any worker starts
        SimConfig.build(**base)
        if trials is None:
            trials = CHAIN_QUALITY_TRIALS if name == "chain-quality" else get_settings().default_trials

        tasks = preset.build(self, base, trials, seed)
        logger.info(f"🧪 Preset {name}: {len(tasks)} runs ({trials} trials per point, "
                    f"{self.workers} workers)")
        results = self.execute(tasks)
        frames = preset.collect(self, results)

        files: Dict[str, Path] = {}
        if write:
            out = output_dir(out_dir)
            for series, df in frames.items():
                files[series] = save_csv(df, out / f"{series}.csv", schema=series)
        logger.info(f"✅ Preset {name} finished")
        return PresetRun(name=name, trials=trials, seed=seed, frames=frames, files=files)


@dataclass
class PresetRun:
    name: str
    trials: int
    seed: int
    frames: Dict[str, pd.DataFrame]
    files: Dict[str, Path]


for _preset in (
    Preset("one-epoch", "Aggregated probability and throughput vs. round in one epoch",
           ("one_epoch_rounds", "one_epoch_summary"),
           PresetService._one_epoch_tasks, PresetService._one_epoch_series),
    Preset("size-sweep", "Epoch length and throughput vs. network size, uniform and Gauss placement",
           ("size_sweep",), PresetService._size_tasks, PresetService._size_series),
    Preset("density-sweep", "Epoch length and throughput vs. density on a 10 x 10 plane",
           ("density_sweep",), PresetService._density_tasks, PresetService._density_series),
    Preset("jammer-sweep", "Epoch length and throughput vs. epsilon for random and bursty jammers",
           ("jammer_sweep",), PresetService._jammer_tasks, PresetService._jammer_series),
    Preset("sybil-sweep", "Epoch length and throughput vs. share of Sybil nodes",
           ("sybil_sweep",), PresetService._sybil_tasks, PresetService._sybil_series),
    Preset("chain-quality", "Adversarial block ratio with 30% adversarial stake publishing blocks",
           ("chain_quality_trials", "chain_quality"),
           PresetService._chain_quality_tasks, PresetService._chain_quality_series),
):
    PresetService.register(_preset)


def run_preset(name: str, overrides: Iterable[str] = (), trials: Optional[int] = None,
               seed: int = 0, out_dir: Optional[str | Path] = None,
               workers: Optional[int] = None) -> PresetRun:
    return PresetService(workers=workers).run(name, trials=trials, seed=seed,
                                              overrides=overrides, out_dir=out_dir)
