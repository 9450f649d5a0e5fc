"""Conditional-expectation operators between weighted score spaces.

An operator maps tables over the source axes to tables over the target axes
via E[indicator * h(source) | target cell]. All inner products use the
observable marginal laws as weights, so adjoints, Gram operators, and rank
diagnostics are plain matrix algebra in whitened coordinates.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import (
    DegenerateWeight,
    EmptyTarget,
    InfeasiblePoint,
    NegativeEigenvalue,
    NotSymmetric,
)
from .law import Axis, CellFunction, JointLaw, marginal

DEFAULT_RANK_TOL = 1e-10


def _cell_list(axes: Sequence[Axis]):
    return list(itertools.product(*(a.labels for a in axes)))


@dataclass(frozen=True)
class CondExpOperator:
    """Matrix form of h |-> E[indicator * h(source) | target]."""

    law: JointLaw
    source_axes: tuple
    target_axes: tuple
    indicator: Optional[dict]
    matrix: np.ndarray          # (n_target, n_source)
    source_cells: tuple         # label tuples, positive source-marginal mass
    target_cells: tuple         # label tuples, positive target-marginal mass
    source_weights: np.ndarray  # source marginal masses on source_cells
    target_weights: np.ndarray  # target marginal masses on target_cells

    @property
    def source_names(self):
        return tuple(a.name for a in self.source_axes)

    @property
    def target_names(self):
        return tuple(a.name for a in self.target_axes)

    def source_vector(self, f: CellFunction) -> np.ndarray:
        """Flatten a CellFunction on the source axes to the operator's columns."""
        return _vector_on_cells(f, self.source_axes, self.source_cells)

    def target_vector(self, f: CellFunction) -> np.ndarray:
        return _vector_on_cells(f, self.target_axes, self.target_cells)

    def source_function(self, vec: np.ndarray) -> CellFunction:
        return _function_from_cells(vec, self.source_axes, self.source_cells)

    def target_function(self, vec: np.ndarray) -> CellFunction:
        return _function_from_cells(vec, self.target_axes, self.target_cells)

    def apply(self, h) -> CellFunction:
        """Apply the operator to a CellFunction (or flat vector) on the source."""
        vec = h if isinstance(h, np.ndarray) else self.source_vector(h)
        return self.target_function(self.matrix @ vec)

    def whitened_matrix(self) -> np.ndarray:
        """W_t^{1/2} A W_s^{-1/2}: the operator between whitened coordinates."""
        return (
            np.sqrt(self.target_weights)[:, None]
            * self.matrix
            / np.sqrt(self.source_weights)[None, :]
        )


def _vector_on_cells(f: CellFunction, axes, cells) -> np.ndarray:
    if tuple(a.name for a in f.axes) != tuple(a.name for a in axes):
        # Allow permuted axis order.
        perm = [f.axis_names.index(a.name) for a in axes]
        values = np.transpose(f.values, perm)
        axes_f = tuple(f.axes[i] for i in perm)
    else:
        values = f.values
        axes_f = f.axes
    out = np.empty(len(cells))
    for k, cell in enumerate(cells):
        idx = tuple(a.index(label) for a, label in zip(axes_f, cell))
        out[k] = values[idx]
    return out


def _function_from_cells(vec: np.ndarray, axes, cells) -> CellFunction:
    shape = tuple(len(a) for a in axes)
    values = np.zeros(shape)
    flagged = np.ones(shape, dtype=bool)
    for k, cell in enumerate(cells):
        idx = tuple(a.index(label) for a, label in zip(axes, cell))
        values[idx] = vec[k]
        flagged[idx] = False
    return CellFunction(tuple(axes), values, zero_mass=flagged)


def _indicator_array(law: JointLaw, indicator: Optional[Mapping]) -> np.ndarray:
    if not indicator:
        return np.ones_like(law.mass)
    ind = np.ones_like(law.mass)
    for name, label in indicator.items():
        pos = law.axis_pos(name)
        axis = law.axes[pos]
        sel = np.zeros(len(axis))
        sel[axis.index(label)] = 1.0
        shape = [1] * law.mass.ndim
        shape[pos] = len(axis)
        ind = ind * sel.reshape(shape)
    return ind


def build_operator(
    law: JointLaw,
    source: Sequence[str],
    target: Sequence[str],
    indicator: Optional[Mapping] = None,
) -> CondExpOperator:
    """Assemble the conditional-expectation matrix on positive-mass cells."""
    source = list(source)
    target = list(target)
    source_axes = tuple(law.axes[law.axis_pos(n)] for n in source)
    target_axes = tuple(law.axes[law.axis_pos(n)] for n in target)

    src_marg = marginal(law, source)
    tgt_marg = marginal(law, target)
    # marginal() keeps law order; realign to the requested order
    src_perm = [src_marg.axis_names.index(n) for n in source]
    tgt_perm = [tgt_marg.axis_names.index(n) for n in target]
    src_mass = np.transpose(src_marg.mass, src_perm)
    tgt_mass = np.transpose(tgt_marg.mass, tgt_perm)

    all_src = _cell_list(source_axes)
    all_tgt = _cell_list(target_axes)
    source_cells = [c for c in all_src if src_mass[tuple(a.index(l) for a, l in zip(source_axes, c))] > 0]
    target_cells = [c for c in all_tgt if tgt_mass[tuple(a.index(l) for a, l in zip(target_axes, c))] > 0]
    if not target_cells:
        raise EmptyTarget("no target cell has positive mass")

    ind = _indicator_array(law, indicator)
    weighted = law.mass * ind

    # joint mass of (source cell, target cell) with the indicator folded in
    n_s, n_t = len(source_cells), len(target_cells)
    matrix = np.zeros((n_t, n_s))
    source_weights = np.array(
        [src_mass[tuple(a.index(l) for a, l in zip(source_axes, c))] for c in source_cells]
    )
    target_weights = np.array(
        [tgt_mass[tuple(a.index(l) for a, l in zip(target_axes, c))] for c in target_cells]
    )

    tgt_index = {c: k for k, c in enumerate(target_cells)}
    src_index = {c: k for k, c in enumerate(source_cells)}
    flat = weighted.ravel()
    for cell, m in zip(law.cells(), flat):
        if m == 0.0:
            continue
        s_cell = tuple(cell[law.axis_pos(n)] for n in source)
        t_cell = tuple(cell[law.axis_pos(n)] for n in target)
        si = src_index.get(s_cell)
        ti = tgt_index.get(t_cell)
        if si is None or ti is None:
            continue
        matrix[ti, si] += m
    matrix /= target_weights[:, None]

    return CondExpOperator(
        law=law,
        source_axes=source_axes,
        target_axes=target_axes,
        indicator=dict(indicator) if indicator else None,
        matrix=matrix,
        source_cells=tuple(source_cells),
        target_cells=tuple(target_cells),
        source_weights=source_weights,
        target_weights=target_weights,
    )


def adjoint(op: CondExpOperator) -> CondExpOperator:
    """Adjoint operator w.r.t. the marginal-weighted inner products."""
    if np.any(op.source_weights <= 0.0):
        raise DegenerateWeight("source cell with zero marginal weight")
    return build_operator(
        op.law,
        source=list(op.target_names),
        target=list(op.source_names),
        indicator=op.indicator,
    )


@dataclass(frozen=True)
class GramOperator:
    """Symmetric PSD operator on the source space, stored in whitened coords.

    ``matrix`` is W_s^{-1/2} A' U A W_s^{-1/2} for some target weighting U;
    quadratic forms and generalized inverses act through the whitening.
    """

    matrix: np.ndarray
    source_weights: np.ndarray
    weight_description: str

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape[0] != m.shape[1]:
            raise NotSymmetric("gram matrix must be square")
        if not np.allclose(m, m.T, atol=1e-12):
            raise NotSymmetric("gram matrix is not symmetric")
        eigmin = float(np.linalg.eigvalsh(m).min()) if m.size else 0.0
        if eigmin < -1e-10:
            raise NegativeEigenvalue(f"min eigenvalue {eigmin}")

    def pinv_apply(self, func_values: np.ndarray, rel_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
        """Generalized inverse applied to a function vector on the source cells."""
        ws = np.sqrt(self.source_weights)
        tilde = ws * func_values
        out = _psd_pinv(self.matrix, rel_tol) @ tilde
        return out / ws

    def pinv_quadform(self, func_values: np.ndarray, rel_tol: float = DEFAULT_RANK_TOL) -> float:
        """<f, G^+ f> in the weighted geometry, i.e. ||G^{-1/2} f||^2."""
        ws = np.sqrt(self.source_weights)
        tilde = ws * func_values
        return float(tilde @ (_psd_pinv(self.matrix, rel_tol) @ tilde))


def _psd_pinv(m: np.ndarray, rel_tol: float) -> np.ndarray:
    vals, vecs = np.linalg.eigh(m)
    cutoff = rel_tol * max(vals.max(initial=0.0), 0.0)
    inv = np.where(vals > cutoff, 1.0 / np.where(vals > cutoff, vals, 1.0), 0.0)
    return (vecs * inv) @ vecs.T


def gram_operator(
    op: CondExpOperator,
    target_weight: Optional[np.ndarray] = None,
    description: str = "identity",
) -> GramOperator:
    """Build A* U A on the source space; U defaults to the target marginal."""
    u = op.target_weights.copy()
    if target_weight is not None:
        u = u * np.asarray(target_weight, dtype=float)
    ws = np.sqrt(op.source_weights)
    core = (op.matrix * u[:, None]).T @ op.matrix
    tilde = core / ws[:, None] / ws[None, :]
    tilde = 0.5 * (tilde + tilde.T)
    return GramOperator(tilde, op.source_weights, description)


def pseudoinverse(gram: GramOperator, rel_tol: float = DEFAULT_RANK_TOL) -> GramOperator:
    """Moore-Penrose inverse in whitened coordinates, spectrally truncated."""
    return GramOperator(
        _psd_pinv(gram.matrix, rel_tol),
        gram.source_weights,
        f"pinv({gram.weight_description}, rel_tol={rel_tol})",
    )


@dataclass(frozen=True)
class OperatorDiagnostics:
    rank: int
    singular_values: tuple
    adjoint_kernel_dim: int
    verdict: str                 # "JustIdentified" | "OverIdentified"
    kernel_basis: tuple          # adjoint-kernel vectors over target cells
    target_cells: tuple

    def to_json(self) -> str:
        return json.dumps(
            {
                "rank": self.rank,
                "singular_values": list(self.singular_values),
                "adjoint_kernel_dim": self.adjoint_kernel_dim,
                "verdict": self.verdict,
                "kernel_basis": [list(v) for v in self.kernel_basis],
                "target_cells": [list(map(str, c)) for c in self.target_cells],
            },
            indent=2,
        )


def diagnose_identification(op: CondExpOperator, rel_tol: float = DEFAULT_RANK_TOL) -> OperatorDiagnostics:
    """Rank/kernel diagnostics of the whitened operator matrix.

    The verdict is JustIdentified iff the adjoint has trivial kernel, i.e.
    the operator's range fills the whole (positive-mass) target space.
    """
    tilde = op.whitened_matrix()
    u, s, _ = np.linalg.svd(tilde)
    cutoff = rel_tol * (s[0] if s.size else 0.0)
    rank = int((s > cutoff).sum())
    kernel_dim = len(op.target_cells) - rank
    basis = []
    for j in range(rank, len(op.target_cells)):
        vec = u[:, j] / np.sqrt(op.target_weights)
        norm = np.sqrt(float(vec @ (op.target_weights * vec)))
        basis.append(tuple(vec / norm))
    verdict = "JustIdentified" if kernel_dim == 0 else "OverIdentified"
    return OperatorDiagnostics(
        rank=rank,
        singular_values=tuple(float(x) for x in s),
        adjoint_kernel_dim=kernel_dim,
        verdict=verdict,
        kernel_basis=tuple(basis),
        target_cells=op.target_cells,
    )


# -- tangent-space demo on explicit mass constraints ----------------------


@dataclass(frozen=True)
class MassConstraint:
    """Linear constraint coeffs . mass (==|>=) rhs on a law's cell masses."""

    coeffs: np.ndarray
    rhs: float
    kind: str  # "eq" | "ge"

    def violation(self, law: JointLaw) -> float:
        val = float((np.asarray(self.coeffs) * law.mass).sum())
        if self.kind == "eq":
            return abs(val - self.rhs)
        return max(0.0, self.rhs - val)

    def active(self, law: JointLaw, tol: float = 1e-9) -> bool:
        val = float((np.asarray(self.coeffs) * law.mass).sum())
        return self.kind == "eq" or abs(val - self.rhs) <= tol


def tangent_dim_demo(constraints: Sequence[MassConstraint], law: JointLaw, tol: float = 1e-9):
    """(tangent dim, full dim, verdict) for a constrained simplex model.

    Only equality constraints cut the tangent space: the linear span of the
    feasible directions at an active inequality is still the full hyperplane.
    """
    for c in constraints:
        if c.violation(law) > tol:
            raise InfeasiblePoint(f"law violates constraint {c.kind} rhs={c.rhs}")
    n = law.n_cells
    rows = [np.ones(n)]
    for c in constraints:
        if c.kind == "eq":
            rows.append(np.asarray(c.coeffs, dtype=float).ravel())
    mat = np.vstack(rows)
    rank = np.linalg.matrix_rank(mat, tol=1e-12)
    tangent_dim = n - rank
    full_dim = n - 1
    verdict = "JustIdentified" if tangent_dim == full_dim else "OverIdentified"
    return tangent_dim, full_dim, verdict
