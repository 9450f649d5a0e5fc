import numpy as np
import pytest

from momentlab.causal import (
    gen_long_term,
    gen_long_term_heteroskedastic,
    gen_negative_control,
    random_unconfounded_spec,
    uc_observable_law,
)
from momentlab.efficiency import (
    eif_pairing,
    fd_derivative,
    kernel_violation_scores,
    lt_bound_decomposition,
    lt_eif,
    lt_mu_functional,
    lt_reduction_check,
    lt_riesz_vstar,
    nc_eif,
    nc_mu_functional,
    random_score,
    sigma2_vector,
    tangent_score,
    uc_ate_eif,
    uc_mu_functional,
    weighted_beta,
)
from momentlab.errors import BridgeUnsolvable, DegenerateVariance
from momentlab.law import Axis, CellFunction, JointLaw, broadcast_to_law, perturb


def test_nc_eif_mean_zero():
    for seed in (0, 1, 2):
        spec = gen_negative_control(n_v=2, n_z=3, n_x=1, n_y=4, seed=seed)
        eif = nc_eif(spec.law)
        for tag in ("mu1", "mu0", "mu"):
            comp = eif.component(tag)
            assert abs(float((comp.values * spec.law.mass).sum())) < 1e-12


def test_lt_eif_mean_zero_and_estimand():
    spec = gen_long_term(n_s1=3, n_s2=1, n_s3=2, n_y=4, seed=1, min_relevance=0.2)
    eif = lt_eif(spec.law)
    assert abs(eif.mu.estimand - spec.mu) < 1e-10
    for tag in ("mu1", "mu0", "mu"):
        comp = eif.component(tag)
        assert abs(float((comp.values * spec.law.mass).sum())) < 1e-12


def test_uc_eif_mean_zero_and_aipw_form():
    rng = np.random.default_rng(2)
    spec = random_unconfounded_spec(rng, n_y=4, n_x=2)
    law = uc_observable_law(spec)
    eif = uc_ate_eif(law)
    for tag in ("mu1", "mu0", "mu"):
        comp = eif.component(tag)
        assert abs(float((comp.values * law.mass).sum())) < 1e-12
    # the bound for the contrast is the variance of the contrast EIF
    assert abs(eif.mu.bound - float((eif.mu.values**2 * law.mass).sum())) < 1e-14


def test_lt_pathwise_derivative_matches_pairing():
    spec = gen_long_term(n_s1=3, n_s2=1, n_s3=2, n_y=4, seed=3, min_relevance=0.2)
    eif = lt_eif(spec.law)
    rng = np.random.default_rng(0)
    for _ in range(5):
        g = tangent_score(spec.law, eif.op, eif.rho, eif.sigma2, rng)
        fd = fd_derivative(lambda l: lt_mu_functional(l)[2], spec.law, g)
        pair = eif_pairing(spec.law, eif.mu.values, g)
        assert abs(fd - pair) < 1e-6


def test_nc_pathwise_derivative_matches_pairing():
    spec = gen_negative_control(n_v=2, n_z=3, n_x=1, n_y=4, seed=4)
    eif = nc_eif(spec.law)
    rng = np.random.default_rng(1)
    for _ in range(5):
        g = tangent_score(spec.law, eif.op, eif.rho, eif.sigma2, rng)
        fd = fd_derivative(lambda l: nc_mu_functional(l)[2], spec.law, g)
        pair = eif_pairing(spec.law, eif.mu.values, g)
        assert abs(fd - pair) < 1e-6


def test_uc_pathwise_derivative_all_scores():
    # nonparametric model: every centered direction is tangent
    rng = np.random.default_rng(3)
    spec = random_unconfounded_spec(rng, n_y=3, n_x=2)
    law = uc_observable_law(spec)
    eif = uc_ate_eif(law)
    for _ in range(5):
        g = random_score(law, rng)
        fd = fd_derivative(lambda l: uc_mu_functional(l)[2], law, g)
        pair = eif_pairing(law, eif.mu.values, g)
        assert abs(fd - pair) < 1e-6


def test_tangent_score_stays_in_range():
    spec = gen_long_term(n_s1=3, n_s2=1, n_s3=2, n_y=4, seed=5, min_relevance=0.2)
    eif = lt_eif(spec.law)
    op = eif.op
    rng = np.random.default_rng(4)
    g = tangent_score(spec.law, op, eif.rho, eif.sigma2, rng)
    from momentlab.law import cond_expectation

    ce = cond_expectation(
        spec.law, CellFunction(spec.law.axes, eif.rho * g.values), list(op.target_names)
    )
    r = op.target_vector(ce)
    # component of E[rho g | t] orthogonal to Ran(K) vanishes
    tilde = op.whitened_matrix()
    u, s, _ = np.linalg.svd(tilde)
    rank = int((s > 1e-10 * s[0]).sum())
    r_t = np.sqrt(op.target_weights) * r
    perp = r_t - u[:, :rank] @ (u[:, :rank].T @ r_t)
    assert np.abs(perp).max() < 1e-10


def test_lt_bound_decomposition_identity():
    for seed in (0, 1, 2):
        spec = gen_long_term(n_s1=3, n_s2=2, n_s3=2, n_y=4, seed=seed)
        dec = lt_bound_decomposition(spec.law)
        assert dec["gap"] < 1e-12
        assert abs(dec["term1"] + dec["term2"] - dec["bound"]) < 1e-12


def test_lt_reduction_bijective_case():
    spec = gen_long_term(n_s1=2, n_s2=2, n_s3=2, n_y=4, seed=6, deterministic_link=True)
    red = lt_reduction_check(spec.law)
    assert red["q_residual"] < 1e-12
    assert red["discrepancy"] < 1e-12


def test_lt_riesz_representer_consistent():
    spec = gen_long_term(n_s1=3, n_s2=1, n_s3=2, n_y=4, seed=7, min_relevance=0.2)
    for which in ("mu1", "mu0"):
        out = lt_riesz_vstar(spec.law, which=which)
        assert out["max_gap"] < 1e-10


def test_efficiency_gap_under_heteroskedasticity():
    spec = gen_long_term_heteroskedastic()
    eif = lt_eif(spec.law)
    op = eif.op
    from momentlab.efficiency import lt_parts

    _, direct, delta = lt_parts(spec.law, eif.h, op)["mu"]
    beta_id = weighted_beta(op, delta, np.ones_like(eif.sigma2))
    psi_id = direct + broadcast_to_law(op.target_function(beta_id), spec.law) * eif.rho
    v_id = float((psi_id**2 * spec.law.mass).sum())
    assert v_id > 1.3 * eif.mu.bound
    # identity-weighted influence is still a valid gradient
    rng = np.random.default_rng(5)
    g = tangent_score(spec.law, op, eif.rho, eif.sigma2, rng)
    fd = fd_derivative(lambda l: lt_mu_functional(l)[2], spec.law, g)
    assert abs(eif_pairing(spec.law, psi_id, g) - fd) < 1e-6


def test_bound_minimal_among_weightings():
    spec = gen_long_term_heteroskedastic()
    eif = lt_eif(spec.law)
    op = eif.op
    from momentlab.efficiency import lt_parts

    _, direct, delta = lt_parts(spec.law, eif.h, op)["mu"]
    rng = np.random.default_rng(6)
    for _ in range(5):
        u = rng.uniform(0.2, 5.0, size=len(eif.sigma2))
        beta = weighted_beta(op, delta, u)
        psi = direct + broadcast_to_law(op.target_function(beta), spec.law) * eif.rho
        v = float((psi**2 * spec.law.mass).sum())
        assert v >= eif.mu.bound - 1e-12


def test_violation_scores_break_solvability():
    spec = gen_long_term(n_s1=3, n_s2=1, n_s3=2, n_y=4, seed=8, min_relevance=0.2)
    eif = lt_eif(spec.law)
    scores = kernel_violation_scores(spec.law, eif.op, eif.rho)
    assert len(scores) == 2
    g = scores[0]
    theta = 0.5 / np.abs(g.values).max()
    off = perturb(spec.law, g, theta)
    with pytest.raises(BridgeUnsolvable):
        lt_eif(off)


def test_sigma2_degenerate_variance():
    # outcome deterministic given the conditioning cell
    axes = (Axis("y", (0.0, 1.0)), Axis("a", (0, 1)))
    mass = np.array([[0.5, 0.0], [0.0, 0.5]])
    law = JointLaw(axes, mass)
    from momentlab.operators import build_operator

    op = build_operator(law, source=("a",), target=("a",))
    rho = np.zeros_like(law.mass)
    with pytest.raises(DegenerateVariance):
        sigma2_vector(law, op, rho)
