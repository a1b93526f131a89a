"""Binary frame store plus JSON normalization statistics.

``frames.bin`` layout (little-endian)::

    8 bytes  magic b"CGHIFRMS"
    uint32   version (1)
    uint32   record count
    records: uint16 run-id length, UTF-8 run id, uint8 condition, uint8 split
             (0 train, 1 test), f64 timestamp, 256 f64 values (128 bands x 2 axes,
             band-major), f64 normalized energy, f64 life fraction

``norm_stats.json`` holds the per-band statistics fitted on the training runs.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Sequence

import numpy as np

from .dsp import N_MELS, NormStats, RunSeries
from .errors import DataError

MAGIC = b"CGHIFRMS"
VERSION = 1
FRAMES_FILE = "frames.bin"
STATS_FILE = "norm_stats.json"
TRAIN, TEST = 0, 1
_N_VALUES = N_MELS * 2


def save_store(directory: str | Path, runs: Sequence[RunSeries], splits: Sequence[int],
               stats: NormStats) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if len(runs) != len(splits):
        raise DataError("one split flag per run is required")
    n = sum(len(r) for r in runs)
    parts = [MAGIC, struct.pack("<II", VERSION, n)]
    for run, split in zip(runs, splits):
        rid = run.run_id.encode("utf-8")
        head = struct.pack("<H", len(rid)) + rid + struct.pack("<BB", run.condition_id, split)
        for i in range(len(run)):
            if run.values[i].size != _N_VALUES:
                raise DataError(f"run {run.run_id}: frame {i} has {run.values[i].size} values")
            parts.append(head)
            parts.append(struct.pack("<d", float(run.timestamps[i])))
            parts.append(np.ascontiguousarray(run.values[i], dtype="<f8").tobytes())
            parts.append(struct.pack("<dd", float(run.energy_norm[i]), float(run.life_fraction[i])))
    (directory / FRAMES_FILE).write_bytes(b"".join(parts))
    (directory / STATS_FILE).write_text(json.dumps(stats.to_dict(), sort_keys=True) + "\n", encoding="utf-8")


def load_store(directory: str | Path) -> tuple[list[RunSeries], list[int], NormStats]:
    """Runs in stored order, their split flags, and the normalization statistics."""
    directory = Path(directory)
    path = directory / FRAMES_FILE
    if not path.exists():
        raise DataError(f"frame store not found: {path}")
    buf = path.read_bytes()
    if buf[:8] != MAGIC:
        raise DataError(f"{path}: bad magic bytes")
    version, n = struct.unpack_from("<II", buf, 8)
    if version != VERSION:
        raise DataError(f"{path}: unsupported store version {version}")
    off = 16
    groups: dict[str, dict] = {}
    try:
        for _ in range(n):
            (ln,) = struct.unpack_from("<H", buf, off)
            off += 2
            rid = buf[off:off + ln].decode("utf-8")
            off += ln
            cond, split, ts = struct.unpack_from("<BBd", buf, off)
            off += 10
            vals = np.frombuffer(buf, dtype="<f8", count=_N_VALUES, offset=off).reshape(N_MELS, 2)
            off += 8 * _N_VALUES
            e, life = struct.unpack_from("<dd", buf, off)
            off += 16
            g = groups.setdefault(rid, {"cond": cond, "split": split, "t": [], "v": [], "e": [], "l": []})
            g["t"].append(ts)
            g["v"].append(vals)
            g["e"].append(e)
            g["l"].append(life)
    except struct.error as exc:
        raise DataError(f"{path}: truncated store") from exc
    if off != len(buf):
        raise DataError(f"{path}: {len(buf) - off} trailing bytes")
    runs, splits = [], []
    for rid, g in groups.items():
        runs.append(RunSeries(rid, g["cond"], np.stack(g["v"]).astype(np.float64), np.array(g["t"]),
                              np.array(g["e"]), np.array(g["l"]), normalized=True))
        splits.append(g["split"])
    stats_path = directory / STATS_FILE
    if not stats_path.exists():
        raise DataError(f"normalization statistics not found: {stats_path}")
    stats = NormStats.from_dict(json.loads(stats_path.read_text(encoding="utf-8")))
    return runs, splits, stats
