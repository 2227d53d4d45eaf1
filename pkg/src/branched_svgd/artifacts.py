"""On-disk run artifacts: trace index, snapshot CSVs, metrics table, run.json.

Floats are written with ``repr`` (shortest round-trip form) so that two
identical runs produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .core import ParticleCloud, TraceEntry, read_snapshot, write_snapshot
from .metrics import DistanceTrajectory, TrajectoryPoint

TRACE_COLUMNS = ["phase_index", "level", "phase", "wall_time_s", "sample_size", "snapshot_file"]
METRICS_PREFIX = ["phase_index", "wall_time_s", "sample_size", "w_mean"]


def _num(value) -> str:
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def entry_time(entry: TraceEntry, clock: str):
    return entry.work if clock == "work" else entry.wall_time


def write_trace(out_dir: str | Path, entries: Sequence[TraceEntry], clock: str = "wall") -> Path:
    out_dir = Path(out_dir)
    snap_dir = out_dir / "snapshots"
    snap_dir.mkdir(parents=True, exist_ok=True)
    index = out_dir / "trace.csv"
    with open(index, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for e in entries:
            name = f"snapshots/snap_{e.phase_index:05d}.csv"
            write_snapshot(out_dir / name, e.cloud)
            writer.writerow([e.phase_index, e.level, e.phase, _num(entry_time(e, clock)),
                             e.sample_size, name])
    return index


@dataclass(frozen=True)
class TraceRow:
    phase_index: int
    level: int
    phase: str
    wall_time_s: float
    sample_size: int
    snapshot_file: str


def read_trace(run_dir: str | Path) -> list[TraceRow]:
    run_dir = Path(run_dir)
    with open(run_dir / "trace.csv", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != TRACE_COLUMNS:
            raise ValueError(f"{run_dir / 'trace.csv'}: unexpected columns {reader.fieldnames}")
        return [
            TraceRow(int(r["phase_index"]), int(r["level"]), r["phase"], float(r["wall_time_s"]),
                     int(r["sample_size"]), r["snapshot_file"])
            for r in reader
        ]


def read_trace_entries(run_dir: str | Path) -> list[TraceEntry]:
    """Trace rows joined with their snapshot clouds (``work`` is not stored; set to 0)."""
    run_dir = Path(run_dir)
    out = []
    for row in read_trace(run_dir):
        cloud: ParticleCloud = read_snapshot(run_dir / row.snapshot_file)
        out.append(TraceEntry(row.phase_index, row.level, row.phase, row.wall_time_s, 0, cloud))
    return out


def metrics_columns(replicates: int) -> list[str]:
    return METRICS_PREFIX + [f"w_rep_{a + 1}" for a in range(replicates)]


def write_metrics(path: str | Path, trajectory: DistanceTrajectory) -> None:
    replicates = len(trajectory[0].replicates) if len(trajectory) else 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(metrics_columns(replicates))
        for p in trajectory:
            writer.writerow([p.phase_index, _num(p.wall_time), p.sample_size, _num(p.w_mean)]
                            + [_num(w) for w in p.replicates])


def read_metrics(path: str | Path) -> DistanceTrajectory:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:4] != METRICS_PREFIX:
            raise ValueError(f"{path}: unexpected metrics header {header}")
        points = []
        for row in reader:
            if not row:
                continue
            points.append(TrajectoryPoint(int(row[0]), float(row[1]), int(row[2]), float(row[3]),
                                          tuple(float(v) for v in row[4:])))
    return DistanceTrajectory(points)


def write_json(path: str | Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path: str | Path) -> dict:
    with open(path) as fh:
        return json.load(fh)
