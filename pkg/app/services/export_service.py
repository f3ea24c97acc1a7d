"""CSV and JSON output of experiment results."""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional

import pandas as pd

from ..core.config import get_settings
from ..models.simulation import SimulationReport

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


def output_dir(path: Optional[str | Path] = None) -> Path:
    out = Path(path or get_settings().output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def save_csv(df: pd.DataFrame, path: str | Path, schema: str) -> Path:
    """UTF-8 CSV preceded by a `# schema=<name> version=N` line"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(f"# schema={schema} version={SCHEMA_VERSION}\n")
        df.to_csv(fh, index=False, float_format="%.6f")
    logger.info(f"📄 Wrote {len(df)} rows to {path}")
    return path


def read_csv(path: str | Path) -> pd.DataFrame:
    return pd.read_csv(path, skiprows=1)


def save_report(report: SimulationReport, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.to_json(), encoding="utf-8")
    logger.info(f"📄 Wrote simulation report to {path}")
    return path
