"""Exact probability laws on finite product spaces.

A :class:`JointLaw` stores one nonnegative mass per cell of a named product
space and is the common currency for every exact computation in the package:
conditional expectations, score perturbations, pushforwards, and the
influence-function algebra all reduce to arithmetic on these tables.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    LabelMismatch,
    PathLeavesSimplex,
    UnknownAxis,
    ZeroMassEvent,
)

MASS_TOL = 1e-12


@dataclass(frozen=True)
class Axis:
    """A named finite axis with ordered category labels."""

    name: str
    labels: tuple

    def __post_init__(self):
        if not self.name:
            raise ValueError("axis name must be nonempty")
        labels = tuple(self.labels)
        if len(labels) == 0:
            raise ValueError(f"axis {self.name!r} needs at least one label")
        if len(set(labels)) != len(labels):
            raise ValueError(f"axis {self.name!r} has duplicate labels")
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return len(self.labels)

    def index(self, label) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise LabelMismatch(f"label {label!r} not on axis {self.name!r}")

    @property
    def values(self) -> np.ndarray:
        """Labels as a float array; only meaningful for numeric axes."""
        return np.asarray(self.labels, dtype=float)

    @staticmethod
    def grid(name: str, points: Sequence[float]) -> "Axis":
        return Axis(name, tuple(float(p) for p in points))


def _as_readonly(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=float)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class JointLaw:
    """A probability mass table over a product of named axes."""

    axes: tuple
    mass: np.ndarray

    def __post_init__(self):
        axes = tuple(self.axes)
        names = [a.name for a in axes]
        if len(set(names)) != len(names):
            raise ValueError("axis names must be unique")
        mass = np.asarray(self.mass, dtype=float)
        shape = tuple(len(a) for a in axes)
        if mass.shape != shape:
            raise ValueError(f"mass shape {mass.shape} != axes shape {shape}")
        if np.any(mass < -MASS_TOL):
            raise ValueError("negative mass")
        total = mass.sum()
        if abs(total - 1.0) > MASS_TOL:
            raise ValueError(f"masses sum to {total}, not 1")
        mass = np.clip(mass, 0.0, None)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "mass", _as_readonly(mass))

    # -- axis bookkeeping -------------------------------------------------

    @property
    def axis_names(self) -> tuple:
        return tuple(a.name for a in self.axes)

    def axis(self, name: str) -> Axis:
        for a in self.axes:
            if a.name == name:
                return a
        raise UnknownAxis(f"no axis named {name!r}")

    def axis_pos(self, name: str) -> int:
        for i, a in enumerate(self.axes):
            if a.name == name:
                return i
        raise UnknownAxis(f"no axis named {name!r}")

    @property
    def n_cells(self) -> int:
        return int(self.mass.size)

    def cells(self) -> Iterable[tuple]:
        """Iterate over label tuples in C order."""
        import itertools

        return itertools.product(*(a.labels for a in self.axes))

    # -- serialization ----------------------------------------------------

    def to_table(self) -> str:
        """Delimited text table: header of axis names, one row per cell.

        Mass values are written with ``repr`` so the decimal strings
        round-trip bit-exactly through :meth:`from_table`.
        """
        lines = [",".join(self.axis_names)]
        flat = self.mass.ravel()
        for cell, m in zip(self.cells(), flat):
            lines.append(",".join([str(c) for c in cell] + [repr(float(m))]))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_table(cls, text: str, axes: Sequence[Axis]) -> "JointLaw":
        axes = tuple(axes)
        lines = [ln for ln in text.strip().splitlines() if ln.strip()]
        header = lines[0].split(",")
        if header != [a.name for a in axes]:
            raise LabelMismatch(f"header {header} does not match axes")
        mass = np.zeros(tuple(len(a) for a in axes))
        str_index = [{str(l): i for i, l in enumerate(a.labels)} for a in axes]
        for ln in lines[1:]:
            parts = ln.split(",")
            idx = tuple(str_index[k][parts[k]] for k in range(len(axes)))
            mass[idx] = float(parts[-1])
        return cls(axes, mass)


@dataclass(frozen=True)
class CellFunction:
    """A real-valued table over a subset of axes.

    ``zero_mass`` flags cells whose marginal mass vanished in whatever
    conditional computation produced the table; such cells carry value 0 and
    are excluded from inner products downstream.
    """

    axes: tuple
    values: np.ndarray
    zero_mass: np.ndarray = None

    def __post_init__(self):
        axes = tuple(self.axes)
        values = np.asarray(self.values, dtype=float)
        shape = tuple(len(a) for a in axes)
        if values.shape != shape:
            raise ValueError(f"values shape {values.shape} != axes shape {shape}")
        zm = self.zero_mass
        if zm is None:
            zm = np.zeros(shape, dtype=bool)
        else:
            zm = np.asarray(zm, dtype=bool)
            if zm.shape != shape:
                raise ValueError("zero_mass shape mismatch")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "values", _as_readonly(values))
        zm = zm.copy()
        zm.flags.writeable = False
        object.__setattr__(self, "zero_mass", zm)

    @property
    def axis_names(self) -> tuple:
        return tuple(a.name for a in self.axes)

    @classmethod
    def from_callable(cls, axes: Sequence[Axis], fn: Callable) -> "CellFunction":
        import itertools

        axes = tuple(axes)
        shape = tuple(len(a) for a in axes)
        values = np.empty(shape)
        for idx in itertools.product(*(range(n) for n in shape)):
            values[idx] = fn(*(a.labels[i] for a, i in zip(axes, idx)))
        return cls(axes, values)


@dataclass(frozen=True)
class ScoreFunction:
    """A mean-zero direction in L2 of a given law."""

    law: JointLaw
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.law.mass.shape:
            raise ValueError("score shape must match law shape")
        mean = float((values * self.law.mass).sum())
        if abs(mean) > MASS_TOL:
            raise ValueError(f"score has mean {mean}, not 0")
        object.__setattr__(self, "values", _as_readonly(values))


# -- broadcasting helpers ------------------------------------------------


def broadcast_to_law(f: CellFunction, law: JointLaw) -> np.ndarray:
    """Expand a CellFunction's table to the law's full shape."""
    positions = [law.axis_pos(name) for name in f.axis_names]
    for name, pos in zip(f.axis_names, positions):
        if law.axes[pos].labels != f.axes[f.axis_names.index(name)].labels:
            raise LabelMismatch(f"axis {name!r} labels differ between function and law")
    shape = [1] * len(law.axes)
    for name, pos in zip(f.axis_names, positions):
        shape[pos] = len(law.axes[pos])
    # Move the function's axes into the law's axis order before reshaping.
    order = np.argsort(positions)
    arr = np.transpose(f.values, order)
    return arr.reshape(shape)


# -- core operations -----------------------------------------------------


def marginal(law: JointLaw, keep: Iterable[str]) -> JointLaw:
    """Marginal law on the named axes, in the law's axis order."""
    keep = set(keep)
    for name in keep:
        law.axis(name)  # raises UnknownAxis
    kept = [i for i, a in enumerate(law.axes) if a.name in keep]
    drop = tuple(i for i, a in enumerate(law.axes) if a.name not in keep)
    mass = law.mass.sum(axis=drop) if drop else law.mass
    return JointLaw(tuple(law.axes[i] for i in kept), mass)


def condition(law: JointLaw, given: Mapping[str, object]) -> JointLaw:
    """Condition on a partial cell assignment; returns a law on the rest."""
    index = [slice(None)] * len(law.axes)
    drop = []
    for name, label in given.items():
        pos = law.axis_pos(name)
        index[pos] = law.axes[pos].index(label)
        drop.append(pos)
    sub = law.mass[tuple(index)]
    total = sub.sum()
    if total <= 0.0:
        raise ZeroMassEvent(f"event {dict(given)} has zero mass")
    kept_axes = tuple(a for i, a in enumerate(law.axes) if i not in drop)
    return JointLaw(kept_axes, sub / total)


def expectation(law: JointLaw, f: CellFunction) -> float:
    """Exact expectation of a cell function under the law."""
    return float((broadcast_to_law(f, law) * law.mass).sum())


def cond_expectation(law: JointLaw, f: CellFunction, given: Iterable[str]) -> CellFunction:
    """E[f | given-axes] as a table over the conditioning cells.

    Zero-mass conditioning cells are flagged and their value set to 0.
    """
    given = list(given)
    given_axes = tuple(law.axes[law.axis_pos(name)] for name in given)
    drop = tuple(i for i, a in enumerate(law.axes) if a.name not in given)
    keep = [i for i, a in enumerate(law.axes) if a.name in given]
    num = (broadcast_to_law(f, law) * law.mass).sum(axis=drop) if drop else broadcast_to_law(f, law) * law.mass
    den = law.mass.sum(axis=drop) if drop else law.mass
    # num/den currently indexed by kept axes in law order; given_axes follows
    # the caller's order, so permute.
    law_order_names = [law.axes[i].name for i in keep]
    perm = [law_order_names.index(name) for name in given]
    num = np.transpose(num, perm)
    den = np.transpose(den, perm)
    zero = den <= 0.0
    values = np.where(zero, 0.0, num / np.where(zero, 1.0, den))
    return CellFunction(given_axes, values, zero_mass=zero)


def perturb(law: JointLaw, g: ScoreFunction, theta: float) -> JointLaw:
    """Linear score path: mass'(w) = p(w) * (1 + theta * g(w))."""
    if g.law is not law and g.values.shape != law.mass.shape:
        raise ValueError("score defined on a different law shape")
    new_mass = law.mass * (1.0 + theta * g.values)
    if np.any(new_mass < -MASS_TOL):
        raise PathLeavesSimplex(
            f"theta={theta} pushes {int((new_mass < -MASS_TOL).sum())} cells negative"
        )
    return JointLaw(law.axes, np.clip(new_mass, 0.0, None))


def pushforward(law: JointLaw, mapping: Callable, target_axes: Sequence[Axis]) -> JointLaw:
    """Image law under a total cell mapping into a target product space."""
    target_axes = tuple(target_axes)
    shape = tuple(len(a) for a in target_axes)
    out = np.zeros(shape)
    flat = law.mass.ravel()
    for cell, m in zip(law.cells(), flat):
        if m == 0.0:
            continue
        image = mapping(*cell)
        idx = tuple(a.index(label) for a, label in zip(target_axes, image))
        out[idx] += m
    return JointLaw(target_axes, out)


def empirical_law(records: Sequence[Sequence], axes: Sequence[Axis]) -> JointLaw:
    """Relative-frequency law from a list of label tuples."""
    axes = tuple(axes)
    if len(records) == 0:
        from .errors import EmptyDataset

        raise EmptyDataset("no records")
    counts = np.zeros(tuple(len(a) for a in axes))
    for rec in records:
        if len(rec) != len(axes):
            raise LabelMismatch(f"record {rec!r} does not match {len(axes)} axes")
        idx = tuple(a.index(label) for a, label in zip(axes, rec))
        counts[idx] += 1.0
    return JointLaw(axes, counts / counts.sum())


def total_variation(p: JointLaw, q: JointLaw) -> float:
    if p.axis_names != q.axis_names:
        raise UnknownAxis("laws live on different axes")
    return 0.5 * float(np.abs(p.mass - q.mass).sum())


def score_from_centered(law: JointLaw, raw: np.ndarray) -> ScoreFunction:
    """Center an arbitrary table into a valid score under the law."""
    raw = np.asarray(raw, dtype=float)
    mean = float((raw * law.mass).sum())
    return ScoreFunction(law, raw - mean)
