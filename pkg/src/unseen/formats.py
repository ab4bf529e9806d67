"""Plain-text and JSON formats for paths, records, samples and reports.

Text files may start with ``#`` comment lines (the metadata header); data
lines are whitespace separated.

* path: ``time state`` per line, the first line at time 0 giving the start;
* negative-jump record: ``time magnitude [post_state]`` per line;
* magnitudes: one integer per line, or a record file (second column used).
"""
from __future__ import annotations

import csv
import io
import json
import math
from datetime import datetime, timezone
from typing import Iterable, TextIO

import numpy as np

from .sim import NegJumpRecord, SamplePath

__all__ = [
    "metadata_header",
    "write_path",
    "read_path",
    "write_record",
    "read_record",
    "read_magnitudes",
    "write_magnitudes",
    "write_csv",
    "dumps_json",
]


def metadata_header(meta: dict, timestamp: bool = True) -> list[str]:
    """Comment lines ``# key: value``; the timestamp comes last so it can be dropped."""
    lines = [f"# {k}: {json.dumps(v) if not isinstance(v, str) else v}" for k, v in meta.items()]
    if timestamp:
        lines.append(f"# created: {datetime.now(timezone.utc).isoformat(timespec='seconds')}")
    return lines


def _data_lines(fh: TextIO) -> Iterable[list[str]]:
    for raw in fh:
        line = raw.strip()
        if line and not line.startswith("#"):
            yield line.split(",") if "," in line else line.split()


def write_path(path: SamplePath, fh: TextIO) -> None:
    fh.write(f"{0.0!r} {int(path.states[0])}\n")
    for t, y in zip(path.jump_times, path.states[1:]):
        fh.write(f"{float(t)!r} {int(y)}\n")


def read_path(fh: TextIO, horizon: float | None = None) -> SamplePath:
    rows = list(_data_lines(fh))
    if not rows:
        raise ValueError("empty path file")
    times = np.array([float(r[0]) for r in rows[1:]])
    states = np.array([int(r[1]) for r in rows], dtype=np.int64)
    if horizon is None:
        horizon = float(times[-1]) if times.size else 1.0
    return SamplePath(times, states, horizon)


def write_record(record: NegJumpRecord, fh: TextIO, hidden: bool = False) -> None:
    with_states = record.post_states is not None and not hidden
    for k in range(len(record)):
        line = f"{float(record.times[k])!r} {int(record.magnitudes[k])}"
        if with_states:
            line += f" {int(record.post_states[k])}"
        fh.write(line + "\n")


def read_record(fh: TextIO) -> NegJumpRecord:
    rows = list(_data_lines(fh))
    times = [float(r[0]) for r in rows]
    mags = [int(r[1]) for r in rows]
    if rows and all(len(r) >= 3 for r in rows):
        return NegJumpRecord(times, mags, [int(r[2]) for r in rows])
    return NegJumpRecord(times, mags)


def read_magnitudes(fh: TextIO) -> np.ndarray:
    """Integers one per line; for record files the magnitude column is used."""
    out = []
    for r in _data_lines(fh):
        field = r[0] if len(r) == 1 else r[1]
        value = float(field)
        if value != math.floor(value):
            raise ValueError(f"magnitude {field!r} is not an integer")
        out.append(int(value))
    return np.asarray(out, dtype=np.int64)


def write_magnitudes(values, fh: TextIO) -> None:
    for v in np.asarray(values, dtype=np.int64):
        fh.write(f"{int(v)}\n")


def write_csv(fh: TextIO, columns: list[str], rows: Iterable) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=2, default=_default)


def to_text(writer, *args, **kwargs) -> str:
    buf = io.StringIO()
    writer(*args, buf, **kwargs)
    return buf.getvalue()
