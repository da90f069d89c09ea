"""CSV and JSON writers and the run manifest.

Floats are written with ``repr`` (shortest round-trip form), so identical runs
produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
import subprocess
from pathlib import Path

import numpy as np

from . import __version__
from .sde import LEDGER_COLUMNS, EnergyLedger

CSV_SCHEMA_VERSION = 1


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return v


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def write_ledger(path, ledger: EnergyLedger) -> Path:
    return write_csv(path, LEDGER_COLUMNS, ledger.rows())


def write_snapshots(path, snapshots: dict, modes) -> Path:
    header = ["t"] + [f"c_{m.k}_{m.l}" for m in modes]
    rows = ([t] + [float(v) for v in c] for t, c in sorted(snapshots.items()))
    return write_csv(path, header, rows)


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def write_json(path, data) -> Path:
    path = Path(path)
    path.write_text(json.dumps(data, indent=2, default=_default, allow_nan=True) + "\n", encoding="utf-8")
    return path


def build_tag() -> str:
    """``v<version>`` plus ``git describe`` of the source tree when available."""
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        desc = out.stdout.strip() if out.returncode == 0 else ""
    except (OSError, subprocess.SubprocessError):
        desc = ""
    return f"v{__version__}" + (f"-{desc}" if desc else "")


def manifest(command: str, config_echo: dict | None, seed: int | None, outputs, wall_time: float, extra=None) -> dict:
    return {
        "tool": "thirdgrade",
        "version": __version__,
        "build": build_tag(),
        "command": command,
        "csv_schema_version": CSV_SCHEMA_VERSION,
        "master_seed": seed,
        "config": config_echo,
        "outputs": [str(p) for p in outputs],
        "wall_time_s": wall_time,
        **(extra or {}),
    }
