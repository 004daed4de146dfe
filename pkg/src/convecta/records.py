"""Run manifests and the frozen CSV layouts.

CSV columns (in this order):

* samples: ``replicate, point_index, t, x1, x2, value``
* structure tables: ``h, s2, se, n``
* snapshots: ``x1, x2, value, valid``

Floats are written with ``repr`` (shortest round-trip form), so equal arrays
give byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import time
from dataclasses import dataclass, field

from . import __version__

__all__ = [
    "SAMPLE_COLUMNS",
    "STRUCTURE_COLUMNS",
    "SNAPSHOT_COLUMNS",
    "RunManifest",
    "config_hash",
    "samples_csv",
    "structure_csv",
    "snapshot_csv",
    "read_samples_csv",
    "load_config",
]

SAMPLE_COLUMNS = ("replicate", "point_index", "t", "x1", "x2", "value")
STRUCTURE_COLUMNS = ("h", "s2", "se", "n")
SNAPSHOT_COLUMNS = ("x1", "x2", "value", "valid")


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class RunManifest:
    command: str
    config: dict
    master_seed: int | None = None
    version: str = __version__
    wall_time: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def config_hash(self) -> str:
        return config_hash({"command": self.command, **self.config})

    def to_json(self) -> dict:
        return {
            "version": self.version,
            "command": self.command,
            "config": self.config,
            "master_seed": self.master_seed,
            "config_hash": self.config_hash,
            "wall_time": self.wall_time,
            **({"extra": self.extra} if self.extra else {}),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RunManifest":
        return cls(obj["command"], dict(obj["config"]), obj.get("master_seed"),
                   obj.get("version", __version__), float(obj.get("wall_time", 0.0)), obj.get("extra", {}))


class Stopwatch:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def samples_csv(ens) -> str:
    return _csv(SAMPLE_COLUMNS, ens.rows())


def structure_csv(tab) -> str:
    return _csv(STRUCTURE_COLUMNS, tab.rows())


def snapshot_csv(snap) -> str:
    c = [float(v) for v in snap.centers]
    rows = ((c[i], c[j], float(snap.values[i, j]), int(bool(snap.valid[i, j])))
            for i in range(len(c)) for j in range(len(c)))
    return _csv(SNAPSHOT_COLUMNS, rows)


def read_samples_csv(text: str):
    """Parse a samples CSV back into ``(points, samples)``."""
    import numpy as np

    rows = list(csv.reader(io.StringIO(text)))
    if tuple(rows[0]) != SAMPLE_COLUMNS:
        raise ValueError(f"unexpected header {rows[0]}")
    body = [(int(r[0]), int(r[1]), float(r[2]), float(r[3]), float(r[4]), float(r[5])) for r in rows[1:]]
    R = max(r[0] for r in body) + 1
    P = max(r[1] for r in body) + 1
    points = [None] * P
    samples = np.empty((R, P))
    for rep, i, t, x1, x2, v in body:
        points[i] = (t, x1, x2)
        samples[rep, i] = v
    return points, samples


def load_config(path: str) -> tuple[str | None, dict]:
    """Read a config file; a manifest contributes its command and config echo."""
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    if not isinstance(obj, dict):
        raise ValueError("config file must hold a JSON object")
    if "config" in obj and "command" in obj:
        return obj["command"], dict(obj["config"])
    return None, obj
