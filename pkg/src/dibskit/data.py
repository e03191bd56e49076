"""Observation containers and their CSV / JSON serialization."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._validation import check_data, check_targets


@dataclass
class Dataset:
    """``(N, d)`` observations, optionally collected under an intervention.

    ``targets`` are the clamped node indices; ``value`` is the clamp value.
    """

    x: np.ndarray
    targets: tuple[int, ...] = ()
    value: float = 0.0
    names: list[str] | None = field(default=None, repr=False)

    def __post_init__(self):
        self.x = check_data(self.x)
        self.targets = check_targets(self.targets, self.x.shape[1])
        if self.names is None:
            self.names = [f"x{i}" for i in range(self.x.shape[1])]
        elif len(self.names) != self.x.shape[1]:
            raise ValueError("number of column names does not match data")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]


def write_csv(path, x: np.ndarray, names=None) -> None:
    x = np.asarray(x)
    names = names or [f"x{i}" for i in range(x.shape[1])]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in x:
            w.writerow([repr(float(v)) for v in row])


def read_csv(path, *, standardize: bool = False) -> Dataset:
    """Load a CSV with a header row of node names."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"data file not found: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path} is empty")
    names, body = rows[0], rows[1:]
    x = np.array([[float(v) for v in r] for r in body], dtype=np.float64).reshape(len(body), len(names))
    if standardize:
        sd = x.std(axis=0)
        x = (x - x.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
    return Dataset(x, names=names)


def write_interventions_meta(path, datasets: list[Dataset]) -> None:
    meta = [{"file": f"interv_{i}.csv", "targets": list(ds.targets), "value": ds.value}
            for i, ds in enumerate(datasets)]
    Path(path).write_text(json.dumps(meta, indent=2) + "\n")


def read_interventions(directory) -> list[Dataset]:
    directory = Path(directory)
    meta = json.loads((directory / "interv_meta.json").read_text())
    out = []
    for m in meta:
        ds = read_csv(directory / m["file"])
        out.append(Dataset(ds.x, targets=tuple(m["targets"]), value=float(m.get("value", 0.0)),
                           names=ds.names))
    return out
