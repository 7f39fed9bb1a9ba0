"""Result containers and CSV/JSON emission."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field, asdict, is_dataclass

import numpy as np


@dataclass
class EstimatorResult:
    """A Monte Carlo estimate (scalar, vector, or matrix) with errors and
    autocorrelation diagnostics."""

    name: str
    value: object
    stderr: object
    n_samples: int
    tau: float = float("nan")      # integrated autocorrelation time
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def rows(self) -> list:
        """Flatten to CSV rows: one row per scalar component."""
        v = np.atleast_1d(np.asarray(self.value, dtype=float))
        e = np.broadcast_to(np.asarray(self.stderr, dtype=float), v.shape)
        out = []
        for idx in np.ndindex(v.shape):
            comp = "" if v.size == 1 else ",".join(map(str, idx))
            out.append({"name": self.name, "component": comp,
                        "value": v[idx], "stderr": e[idx],
                        "n_samples": self.n_samples, "tau": self.tau,
                        "seed": "" if self.seed is None else self.seed})
        return out


CSV_FIELDS = ["name", "component", "value", "stderr", "n_samples", "tau",
              "seed"]


def write_csv(path, results) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        w.writeheader()
        for r in results:
            for row in r.rows():
                w.writerow(row)


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if is_dataclass(obj) and not isinstance(obj, type):
        return {k: _jsonable(v) for k, v in asdict(obj).items()}
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def config_hash(cfg: dict) -> str:
    """Stable hash of a flat configuration mapping."""
    blob = json.dumps(_jsonable(cfg), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]
