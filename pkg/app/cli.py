"""Command-line entry point: single runs, experiment presets and the crypto benchmark.

    python -m app.cli run --config configs/default.conf --set epochs=5
    python -m app.cli preset size-sweep --trials 20 --out results/
    python -m app.cli bench-crypto --repeats 1000
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import pandas as pd
from dotenv import load_dotenv

from .core.config import get_settings
from .core.errors import (
    EXIT_CONFIG_ERROR, EXIT_INVARIANT_VIOLATION, EXIT_OK, ConfigError, InvariantViolation,
)
from .core.logging_setup import setup_logging
from .models.adversary import JammerStrategy
from .models.simulation import SimConfig
from .services import metrics_service
from .services.adversary_service import dump_schedule_csv
from .services.bench_service import bench_crypto
from .services.crypto_service import get_backend
from .services.export_service import output_dir, save_csv, save_report
from .services.preset_service import PresetService, run_preset
from .services.simulation_service import SimulationEngine

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blown", description="Round-level simulator of the BLOWN wireless blockchain protocol",
    )
    parser.add_argument("--log-level", default=None, help="Overrides LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run one simulation from a key=value config file")
    run.add_argument("--config", type=Path, default=None, help="Flat key=value SimConfig file")
    run.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                     help="Override one config key (repeatable)")
    run.add_argument("--out", type=Path, default=None, help="Output directory (default OUTPUT_DIR)")

    preset = sub.add_parser("preset", help="Run an experiment preset and write its CSV series")
    preset.add_argument("name", help=", ".join(p.name for p in PresetService.list_presets()))
    preset.add_argument("--trials", type=int, default=None)
    preset.add_argument("--out", type=Path, default=None)
    preset.add_argument("--seed", type=int, default=0)
    preset.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    preset.add_argument("--workers", type=int, default=None, help="Parallel trial processes")

    bench = sub.add_parser("bench-crypto", help="Time signing, verification and sortition")
    bench.add_argument("--repeats", type=int, default=None)
    bench.add_argument("--backend", choices=["ed25519", "hmac"], default=None)
    bench.add_argument("--out", type=Path, default=None)
    return parser


def cmd_run(args: argparse.Namespace) -> int:
    if args.config is not None:
        config = SimConfig.from_file(args.config, args.overrides)
    else:
        config = SimConfig.build().with_overrides(args.overrides)

    engine = SimulationEngine(config)
    report = engine.run(on_epoch=lambda s: logger.info(
        f"Epoch {s.epoch}: leader={s.leader} length={s.epoch_length} "
        f"txs={s.block_tx_count} tps={s.throughput_tps:.1f} symbol={s.symbol}"
    ))

    out = output_dir(args.out)
    save_report(report, out / "report.json")
    if engine.traces:
        save_csv(pd.DataFrame([s.model_dump() for s in report.epochs]), out / "epochs.csv",
                 schema="epochs")
        frames = [metrics_service.epoch_frame(t, slot_us=config.slot_us) for t in engine.traces]
        save_csv(pd.concat(frames, ignore_index=True), out / "rounds.csv", schema="rounds")
    if config.jammer != JammerStrategy.NONE:
        dump_schedule_csv(engine.jammer.schedule, out / "jam_schedule.csv")

    ledger = report.ledger or {}
    print(f"✅ {len(report.epochs)} epochs, {engine.round} rounds")
    print(f"   epoch string:       {ledger.get('epoch_string', '')}")
    print(f"   max divergence:     {ledger.get('max_divergence', 0)}")
    print(f"   adversarial ratio:  {ledger.get('adversarial_block_ratio', 0.0):.3f}")
    print(f"📁 Results in {out}")
    return EXIT_OK


def cmd_preset(args: argparse.Namespace) -> int:
    result = run_preset(args.name, overrides=args.overrides, trials=args.trials, seed=args.seed,
                        out_dir=args.out, workers=args.workers)
    for series, path in result.files.items():
        print(f"📄 {series}: {path}")
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    backend = get_backend(args.backend) if args.backend else None
    table = bench_crypto(repeats=args.repeats, backend=backend)
    print(table.to_string(index=False, float_format=lambda v: f"{v:.4f}"))
    if args.out is not None:
        save_csv(table, output_dir(args.out) / "bench_crypto.csv", schema="bench_crypto")
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "preset": cmd_preset,
    "bench-crypto": cmd_bench,
}


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level or get_settings().log_level)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except InvariantViolation as e:
        logger.error(f"Invariant violation: {e}", exc_info=True)
        print(f"❌ Invariant violation: {e}", file=sys.stderr)
        return EXIT_INVARIANT_VIOLATION


if __name__ == "__main__":
    sys.exit(main())
