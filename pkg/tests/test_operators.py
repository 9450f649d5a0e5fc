import numpy as np
import pytest

from momentlab.law import Axis, JointLaw
from momentlab.operators import (
    GramOperator,
    MassConstraint,
    adjoint,
    build_operator,
    diagnose_identification,
    gram_operator,
    tangent_dim_demo,
)
from momentlab.errors import InfeasiblePoint, NotSymmetric


def random_law(rng, shape=(3, 3, 2)):
    axes = tuple(Axis(f"a{i}", tuple(range(k))) for i, k in enumerate(shape))
    mass = rng.dirichlet(np.ones(int(np.prod(shape)))).reshape(shape)
    return JointLaw(axes, mass)


def test_matrix_matches_enumerated_conditional_expectations():
    rng = np.random.default_rng(0)
    law = random_law(rng)
    op = build_operator(law, source=("a0",), target=("a1", "a2"))
    h = rng.normal(size=3)
    for j in range(3):
        for k in range(2):
            w = law.mass[:, j, k]
            if w.sum() > 0:
                want = float((w * h).sum() / w.sum())
                pos = op.target_cells.index((j, k))
                assert abs(op.matrix[pos] @ h - want) < 1e-12


def test_indicator_restricts_numerator_only():
    rng = np.random.default_rng(1)
    law = random_law(rng, shape=(2, 3, 2))
    op = build_operator(law, source=("a0",), target=("a1",), indicator={"a2": 1})
    h = rng.normal(size=2)
    for j in range(3):
        w_all = law.mass[:, j, :].sum(axis=1)
        w_ind = law.mass[:, j, 1]
        if w_all.sum() > 0:
            want = float((w_ind * h).sum() / w_all.sum())
            pos = op.target_cells.index((j,))
            assert abs(op.matrix[pos] @ h - want) < 1e-12


def test_adjoint_identity():
    # <K f, g>_target = <f, K* g>_source for the plain conditional expectation
    rng = np.random.default_rng(2)
    law = random_law(rng)
    op = build_operator(law, source=("a0",), target=("a1", "a2"))
    adj = adjoint(op)
    f = rng.normal(size=len(op.source_cells))
    g = rng.normal(size=len(op.target_cells))
    lhs = float((op.target_weights * (op.matrix @ f) * g).sum())
    # align adjoint output with the source ordering of op
    kg = adj.matrix @ g
    rhs = float((op.source_weights * f * kg).sum())
    assert abs(lhs - rhs) < 1e-12


def test_gram_pinv_penrose():
    rng = np.random.default_rng(3)
    law = random_law(rng)
    op = build_operator(law, source=("a0",), target=("a1", "a2"))
    gram = gram_operator(op)
    m = gram.matrix
    from momentlab.operators import _psd_pinv

    p = _psd_pinv(m, 1e-12)
    assert np.allclose(m @ p @ m, m, atol=1e-10)
    assert np.allclose(p @ m @ p, p, atol=1e-10)
    assert np.allclose((m @ p).T, m @ p, atol=1e-10)
    assert np.allclose((p @ m).T, p @ m, atol=1e-10)


def test_gram_quadform_matches_dense_solve():
    rng = np.random.default_rng(4)
    law = random_law(rng)
    op = build_operator(law, source=("a0",), target=("a1", "a2"))
    gram = gram_operator(op)
    f = rng.normal(size=len(op.source_cells))
    ws = np.sqrt(op.source_weights)
    dense = np.linalg.pinv(gram.matrix)
    want = float((ws * f) @ dense @ (ws * f))
    assert abs(gram.pinv_quadform(f) - want) < 1e-10
    got = gram.pinv_apply(f)
    assert np.allclose(ws * got, dense @ (ws * f), atol=1e-10)


def test_gram_rejects_asymmetric():
    with pytest.raises(NotSymmetric):
        GramOperator(np.array([[1.0, 0.5], [0.0, 1.0]]), np.ones(2), "bad")


def test_diagnose_square_invertible_is_just_identified():
    rng = np.random.default_rng(5)
    # a0 and a1 strongly dependent, same cardinality
    ax0, ax1 = Axis("a0", (0, 1, 2)), Axis("a1", (0, 1, 2))
    mass = 0.8 * np.eye(3) / 3 + 0.2 * rng.dirichlet(np.ones(9)).reshape(3, 3)
    mass /= mass.sum()
    law = JointLaw((ax0, ax1), mass)
    op = build_operator(law, source=("a0",), target=("a1",))
    diag = diagnose_identification(op)
    assert diag.verdict == "JustIdentified"
    assert diag.adjoint_kernel_dim == 0


def test_diagnose_overidentified_kernel_dim_matches_brute_force():
    rng = np.random.default_rng(6)
    ax0, ax1 = Axis("a0", (0, 1)), Axis("a1", (0, 1, 2, 3))
    mass = rng.dirichlet(np.ones(8)).reshape(2, 4)
    law = JointLaw((ax0, ax1), mass)
    op = build_operator(law, source=("a0",), target=("a1",))
    diag = diagnose_identification(op)
    assert diag.verdict == "OverIdentified"
    brute_rank = np.linalg.matrix_rank(op.whitened_matrix(), tol=1e-10)
    assert diag.rank == brute_rank
    assert diag.adjoint_kernel_dim == len(op.target_cells) - brute_rank
    # kernel basis vectors really kill the adjoint
    for v in diag.kernel_basis:
        resid = op.matrix.T @ (op.target_weights * np.asarray(v))
        assert np.abs(resid).max() < 1e-10


def test_kernel_basis_normalized_in_target_geometry():
    rng = np.random.default_rng(7)
    ax0, ax1 = Axis("a0", (0, 1)), Axis("a1", (0, 1, 2))
    mass = rng.dirichlet(np.ones(6)).reshape(2, 3)
    law = JointLaw((ax0, ax1), mass)
    op = build_operator(law, source=("a0",), target=("a1",))
    diag = diagnose_identification(op)
    for v in diag.kernel_basis:
        v = np.asarray(v)
        assert abs(float(v @ (op.target_weights * v)) - 1.0) < 1e-10


def test_zero_mass_cells_dropped():
    ax0, ax1 = Axis("a0", (0, 1, 2)), Axis("a1", (0, 1))
    mass = np.array([[0.5, 0.2], [0.0, 0.0], [0.2, 0.1]])
    law = JointLaw((ax0, ax1), mass)
    op = build_operator(law, source=("a0",), target=("a1",))
    assert (1,) not in op.source_cells
    assert len(op.source_cells) == 2


def test_triangle_demo_tangent_dims():
    axis = Axis("outcome", ("a", "b", "c"))
    law = JointLaw((axis,), np.array([0.4, 0.4, 0.2]))
    eq = MassConstraint(np.array([1.0, -1.0, 0.0]), 0.0, "eq")
    ge = MassConstraint(np.array([-0.5, 1.0, 0.0]), 0.0, "ge")
    assert tangent_dim_demo([], law) == (2, 2, "JustIdentified")
    assert tangent_dim_demo([ge], law) == (2, 2, "JustIdentified")
    assert tangent_dim_demo([eq], law) == (1, 2, "OverIdentified")


def test_tangent_demo_infeasible_point():
    axis = Axis("outcome", ("a", "b", "c"))
    law = JointLaw((axis,), np.array([0.5, 0.3, 0.2]))
    eq = MassConstraint(np.array([1.0, -1.0, 0.0]), 0.0, "eq")
    with pytest.raises(InfeasiblePoint):
        tangent_dim_demo([eq], law)
