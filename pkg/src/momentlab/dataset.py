"""Finite-support datasets: sampling, CSV round-trip, empirical laws."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptyDataset, LabelMismatch
from .law import Axis, JointLaw, empirical_law


@dataclass(frozen=True)
class Dataset:
    """Records over a fixed set of axes, stored as label-index codes."""

    axes: tuple
    codes: np.ndarray  # (n, n_axes) integer label indices

    def __post_init__(self):
        codes = np.asarray(self.codes, dtype=int)
        if codes.ndim != 2 or codes.shape[1] != len(self.axes):
            raise LabelMismatch("codes shape does not match axes")
        if codes.shape[0] == 0:
            raise EmptyDataset("dataset has no records")
        for j, a in enumerate(self.axes):
            if codes[:, j].min() < 0 or codes[:, j].max() >= len(a):
                raise LabelMismatch(f"code out of range on axis {a.name!r}")
        codes = codes.copy()
        codes.flags.writeable = False
        object.__setattr__(self, "axes", tuple(self.axes))
        object.__setattr__(self, "codes", codes)

    def __len__(self):
        return int(self.codes.shape[0])

    @property
    def axis_names(self):
        return tuple(a.name for a in self.axes)

    def axis_pos(self, name: str) -> int:
        return self.axis_names.index(name)

    def column(self, name: str) -> np.ndarray:
        """Label values for one axis (floats for numeric axes, objects else)."""
        a = self.axes[self.axis_pos(name)]
        labels = np.asarray(a.labels, dtype=object)
        try:
            labels = np.asarray(a.labels, dtype=float)
        except (TypeError, ValueError):
            pass
        return labels[self.codes[:, self.axis_pos(name)]]

    def records(self):
        for row in self.codes:
            yield tuple(a.labels[i] for a, i in zip(self.axes, row))

    def to_law(self) -> JointLaw:
        counts = np.zeros(tuple(len(a) for a in self.axes))
        np.add.at(counts, tuple(self.codes[:, j] for j in range(len(self.axes))), 1.0)
        return JointLaw(self.axes, counts / len(self))

    def to_csv(self) -> str:
        lines = [",".join(self.axis_names)]
        for rec in self.records():
            lines.append(",".join(str(v) for v in rec))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str, axes: Sequence[Axis]) -> "Dataset":
        axes = tuple(axes)
        lines = [ln for ln in text.strip().splitlines() if ln.strip()]
        if not lines:
            raise EmptyDataset("empty CSV")
        header = lines[0].split(",")
        if header != [a.name for a in axes]:
            raise LabelMismatch(f"CSV header {header} does not match axes")
        lookup = [{str(l): i for i, l in enumerate(a.labels)} for a in axes]
        codes = np.empty((len(lines) - 1, len(axes)), dtype=int)
        for r, ln in enumerate(lines[1:]):
            parts = ln.split(",")
            if len(parts) != len(axes):
                raise LabelMismatch(f"row {r + 1} has {len(parts)} fields")
            for j, part in enumerate(parts):
                if part not in lookup[j]:
                    raise LabelMismatch(f"unknown label {part!r} on axis {axes[j].name!r}")
                codes[r, j] = lookup[j][part]
        return cls(axes, codes)


def sample(law: JointLaw, n: int, seed) -> Dataset:
    """n iid draws from the law; deterministic given the seed."""
    if n < 1:
        raise EmptyDataset("need n >= 1")
    rng = np.random.default_rng(seed)
    flat = law.mass.ravel()
    draws = rng.choice(flat.size, size=n, p=flat)
    codes = np.column_stack(np.unravel_index(draws, law.mass.shape))
    return Dataset(law.axes, codes)


__all__ = ["Dataset", "sample", "empirical_law"]
