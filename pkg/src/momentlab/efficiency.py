"""Efficient influence functions and efficiency bounds, computed exactly.

Both bridge-function models share one geometry. Write K for the
conditional-expectation operator of the moment restriction, rho for the
per-observation residual with E[rho | target cell] = 0, and sigma2(t) =
E[rho^2 | t]. A target functional mu with pathwise derivative

    dmu = E[(direct part) g] + <delta, dh>_{source}

has efficient influence function

    eif(w) = direct(w) + beta(t(w)) rho(w),
    beta = K Q^+ delta / sigma2,      Q = K* Sigma^{-1} K,

and efficiency bound E[direct^2] + <delta, Q^+ delta> whenever the direct
part and the correction are uncorrelated (true in both models here, where
the direct part lives on cells with rho = 0 mean given the target cell, or
on the experimental sample only).

Everything is plain matrix algebra on positive-mass cells; no sampling.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import (
    BridgeUnsolvable,
    DegenerateVariance,
    EmptyArm,
)
from .causal import (
    GROUP_EXP,
    GROUP_OBS,
    solve_bridge_lt,
    solve_bridge_nc,
)
from .law import (
    CellFunction,
    JointLaw,
    ScoreFunction,
    broadcast_to_law,
    cond_expectation,
    marginal,
    perturb,
)
from .operators import (
    DEFAULT_RANK_TOL,
    CondExpOperator,
    diagnose_identification,
    gram_operator,
)


def _marg_mass(law: JointLaw, names) -> np.ndarray:
    """Marginal mass array indexed in the requested axis order."""
    sub = marginal(law, names)
    perm = [sub.axis_names.index(n) for n in names]
    return np.transpose(sub.mass, perm)


def _h_arm(h: CellFunction, d, d_name="d") -> CellFunction:
    pos = h.axis_names.index(d_name)
    idx = h.axes[pos].index(d)
    values = np.take(h.values, idx, axis=pos)
    axes = tuple(a for i, a in enumerate(h.axes) if i != pos)
    return CellFunction(axes, values)


def _indicator(law: JointLaw, name, label) -> np.ndarray:
    pos = law.axis_pos(name)
    axis = law.axes[pos]
    sel = np.zeros(len(axis))
    sel[axis.index(label)] = 1.0
    shape = [1] * law.mass.ndim
    shape[pos] = len(axis)
    return sel.reshape(shape)


# ---------------------------------------------------------------------------
# representer machinery
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Representer:
    """Solution of Q r = delta with Q = K* Sigma^{-1} K on the source space."""

    r: np.ndarray               # Q^+ delta, source-cell function values
    beta: np.ndarray            # (K r) / sigma2, target-cell multiplier on rho
    quad: float                 # <delta, Q^+ delta>, the correction's variance
    residual: float             # ||Q r - delta|| / ||delta||, 0 iff delta in Ran Q


def sigma2_vector(
    law: JointLaw, op: CondExpOperator, rho: np.ndarray, min_sigma2: float = 0.0
) -> np.ndarray:
    f = CellFunction(law.axes, rho * rho)
    ce = cond_expectation(law, f, list(op.target_names))
    vec = op.target_vector(ce)
    if min_sigma2 > 0.0:
        vec = np.maximum(vec, min_sigma2)
    if np.any(vec <= 0.0):
        k = int(np.argmin(vec))
        raise DegenerateVariance(
            f"residual variance vanishes at target cell {op.target_cells[k]}"
        )
    return vec


def weighted_beta(
    op: CondExpOperator,
    delta: np.ndarray,
    u: np.ndarray,
    rel_tol: float = DEFAULT_RANK_TOL,
) -> np.ndarray:
    """Multiplier on rho for the u-weighted least-squares bridge solve.

    The estimator minimizing the u-weighted residual has influence
    direct + beta(t) rho with beta = u * K (K* U K)^+ delta; u = 1/sigma2
    recovers the efficient multiplier.
    """
    gram = gram_operator(op, target_weight=u, description="custom")
    r = gram.pinv_apply(delta, rel_tol)
    return u * (op.matrix @ r)


def representer(
    op: CondExpOperator,
    sigma2: np.ndarray,
    delta: np.ndarray,
    rel_tol: float = DEFAULT_RANK_TOL,
) -> Representer:
    gram = gram_operator(op, target_weight=1.0 / sigma2, description="sigma^-1")
    r = gram.pinv_apply(delta, rel_tol)
    beta = (op.matrix @ r) / sigma2
    quad = float((op.source_weights * delta) @ r)
    # residual of the normal equations, in the source inner product
    ws = np.sqrt(op.source_weights)
    qr = (gram.matrix @ (ws * r)) / ws
    num = float(np.sqrt((op.source_weights * (qr - delta) ** 2).sum()))
    den = float(np.sqrt((op.source_weights * delta**2).sum()))
    return Representer(r=r, beta=beta, quad=quad, residual=num / max(den, 1e-300))


# ---------------------------------------------------------------------------
# result containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EifComponent:
    """One estimand's influence function, split into its two pieces."""

    estimand: float
    values: np.ndarray          # per law cell
    direct: np.ndarray
    correction: np.ndarray
    bound: float                # E[values^2]
    beta: Optional[np.ndarray]
    quad: float                 # <delta, Q^+ delta>


@dataclass(frozen=True)
class ModelEif:
    law: JointLaw
    h: Optional[CellFunction]
    op: Optional[CondExpOperator]
    rho: Optional[np.ndarray]
    sigma2: Optional[np.ndarray]
    mu1: EifComponent
    mu0: EifComponent
    mu: EifComponent

    def component(self, which: str) -> EifComponent:
        return {"mu1": self.mu1, "mu0": self.mu0, "mu": self.mu}[which]


def _assemble(law, op, rho, sigma2, h, parts) -> ModelEif:
    comps = {}
    for name, (est, direct, delta) in parts.items():
        rep = representer(op, sigma2, delta)
        corr = broadcast_to_law(op.target_function(rep.beta), law) * rho
        values = direct + corr
        bound = float((values * values * law.mass).sum())
        comps[name] = EifComponent(
            estimand=est,
            values=values,
            direct=direct,
            correction=corr,
            bound=bound,
            beta=rep.beta,
            quad=rep.quad,
        )
    return ModelEif(law=law, h=h, op=op, rho=rho, sigma2=sigma2, **comps)


# ---------------------------------------------------------------------------
# negative control
# ---------------------------------------------------------------------------


def nc_rho(law: JointLaw, h: CellFunction) -> np.ndarray:
    y_vals = law.axis("y").values
    shape = [1] * law.mass.ndim
    shape[law.axis_pos("y")] = len(y_vals)
    rho = y_vals.reshape(shape) - broadcast_to_law(h, law)
    return rho * np.ones_like(law.mass)


def nc_parts(law: JointLaw, h: CellFunction, op: CondExpOperator) -> dict:
    """(estimand, direct part, source representer delta) per estimand tag."""
    m_vx = _marg_mass(law, ["v", "x"])
    m_vdx = _marg_mass(law, ["v", "d", "x"])
    d_axis = law.axis("d")
    parts = {}
    deltas = {}
    for d in (1, 0):
        h_d = _h_arm(h, d)
        mu_d = float((m_vx * h_d.values).sum())
        direct = (broadcast_to_law(h_d, law) - mu_d) * np.ones_like(law.mass)
        delta = np.zeros(len(op.source_cells))
        for k, (v_lab, d_lab, x_lab) in enumerate(op.source_cells):
            if d_lab != d:
                continue
            vi = law.axis("v").index(v_lab)
            xi = law.axis("x").index(x_lab)
            di = d_axis.index(d_lab)
            if m_vdx[vi, di, xi] <= 0:
                raise EmptyArm(f"no mass at (v={v_lab}, d={d_lab}, x={x_lab})")
            delta[k] = m_vx[vi, xi] / m_vdx[vi, di, xi]
        deltas[d] = delta
        parts[f"mu{d}"] = (mu_d, direct, delta)
    mu1, mu0 = parts["mu1"][0], parts["mu0"][0]
    parts["mu"] = (
        mu1 - mu0,
        parts["mu1"][1] - parts["mu0"][1],
        deltas[1] - deltas[0],
    )
    return parts


def nc_eif(
    law: JointLaw,
    h: Optional[CellFunction] = None,
    rel_tol: float = DEFAULT_RANK_TOL,
    min_sigma2: float = 0.0,
    require_solvable: bool = True,
) -> ModelEif:
    """Influence functions for E[Y(1)], E[Y(0)], and their contrast.

    The estimands are mu_d = E[h(V, d, X)] with h the outcome bridge. The
    correction multiplies the bridge residual Y - h(V, D, X) by a function
    of (Z, D, X) built from the variance-weighted representer.
    """
    op, sol = solve_bridge_nc(law)
    if h is None:
        if require_solvable and not sol.solvable:
            raise BridgeUnsolvable(
                f"no bridge at this law (residual {sol.residual_norm:.3e})"
            )
        h = sol.h
    rho = nc_rho(law, h)
    sigma2 = sigma2_vector(law, op, rho, min_sigma2)
    parts = nc_parts(law, h, op)
    return _assemble(law, op, rho, sigma2, h, parts)


def nc_mu_functional(law: JointLaw, weight=None) -> tuple:
    """(mu1, mu0, mu) from the minimum-norm bridge solve at the law."""
    op, sol = solve_bridge_nc(law, weight=weight)
    m_vx = _marg_mass(law, ["v", "x"])
    mu1 = float((m_vx * _h_arm(sol.h, 1).values).sum())
    mu0 = float((m_vx * _h_arm(sol.h, 0).values).sum())
    return mu1, mu0, mu1 - mu0


# ---------------------------------------------------------------------------
# long-term two-sample model
# ---------------------------------------------------------------------------


def lt_rho(law: JointLaw, h: CellFunction) -> np.ndarray:
    y_vals = law.axis("y").values
    shape = [1] * law.mass.ndim
    shape[law.axis_pos("y")] = len(y_vals)
    ind_o = _indicator(law, "g", GROUP_OBS)
    rho = (y_vals.reshape(shape) - broadcast_to_law(h, law)) * ind_o
    return rho * np.ones_like(law.mass)


def lt_parts(law: JointLaw, h: CellFunction, op: CondExpOperator) -> dict:
    """(estimand, direct part, source representer delta) per estimand tag."""
    m_s = _marg_mass(law, ["s3", "s2", "d"])          # source marginal, all groups
    m_egd = _marg_mass(law, ["g", "d", "s3", "s2"])
    g_idx = law.axis("g").index(GROUP_EXP)
    d_axis = law.axis("d")
    h_arr = broadcast_to_law(h, law)
    parts = {}
    deltas = {}
    for d in (1, 0):
        di = d_axis.index(d)
        w = m_egd[g_idx, di]                          # P(s3, s2, G=E, D=d)
        p_ed = float(w.sum())
        if p_ed <= 0:
            raise EmptyArm(f"no experimental mass with d={d}")
        hd = _h_arm(h, d)
        mu_d = float((w * hd.values).sum()) / p_ed
        ind = _indicator(law, "g", GROUP_EXP) * _indicator(law, "d", d)
        direct = ind * (h_arr - mu_d) / p_ed * np.ones_like(law.mass)
        delta = np.zeros(len(op.source_cells))
        for k, (s3_lab, s2_lab, d_lab) in enumerate(op.source_cells):
            if d_lab != d:
                continue
            i3 = law.axis("s3").index(s3_lab)
            i2 = law.axis("s2").index(s2_lab)
            delta[k] = w[i3, i2] / (p_ed * m_s[i3, i2, di])
        deltas[d] = delta
        parts[f"mu{d}"] = (mu_d, direct, delta)
    mu1, mu0 = parts["mu1"][0], parts["mu0"][0]
    parts["mu"] = (
        mu1 - mu0,
        parts["mu1"][1] - parts["mu0"][1],
        deltas[1] - deltas[0],
    )
    return parts


def lt_eif(
    law: JointLaw,
    h: Optional[CellFunction] = None,
    rel_tol: float = DEFAULT_RANK_TOL,
    min_sigma2: float = 0.0,
    require_solvable: bool = True,
) -> ModelEif:
    """Influence functions for the experimental-population long-term means.

    mu_d = E[h(S3, S2, d) | G=E, D=d]. The direct part reweights the
    experimental arm; the correction multiplies the observational residual
    1{G=O}(Y - h) by a function of (S2, S1, D).
    """
    op, sol = solve_bridge_lt(law)
    if h is None:
        if require_solvable and not sol.solvable:
            raise BridgeUnsolvable(
                f"no bridge at this law (residual {sol.residual_norm:.3e})"
            )
        h = sol.h
    rho = lt_rho(law, h)
    sigma2 = sigma2_vector(law, op, rho, min_sigma2)
    parts = lt_parts(law, h, op)
    return _assemble(law, op, rho, sigma2, h, parts)


def lt_mu_functional(law: JointLaw, weight=None) -> tuple:
    """(mu1, mu0, mu) from the minimum-norm bridge solve at the law."""
    _, sol = solve_bridge_lt(law, weight=weight)
    m_egd = _marg_mass(law, ["g", "d", "s3", "s2"])
    g_idx = law.axis("g").index(GROUP_EXP)
    out = {}
    for d in (1, 0):
        di = law.axis("d").index(d)
        w = m_egd[g_idx, di]
        out[d] = float((w * _h_arm(sol.h, d).values).sum() / w.sum())
    return out[1], out[0], out[1] - out[0]


def lt_bound_decomposition(law: JointLaw, h: Optional[CellFunction] = None) -> dict:
    """Two-term split of the long-term contrast bound.

    term1 is the experimental-arm variance written with the centered
    treatment indicator; term2 is the representer quadratic form of the
    observational correction. Their sum equals E[eif^2] exactly because the
    two pieces live on disjoint groups.
    """
    eif = lt_eif(law, h=h)
    mu1, mu0 = eif.mu1.estimand, eif.mu0.estimand
    ind_e = _indicator(law, "g", GROUP_EXP) * np.ones_like(law.mass)
    p_e = float((ind_e * law.mass).sum())
    d_vals = law.axis("d").values
    shape = [1] * law.mass.ndim
    shape[law.axis_pos("d")] = len(d_vals)
    d_arr = d_vals.reshape(shape) * np.ones_like(law.mass)
    p1_e = float((ind_e * d_arr * law.mass).sum()) / p_e
    h_arr = broadcast_to_law(eif.h, law)
    mu_of_d = np.where(d_arr == 1.0, mu1, mu0)
    core = (d_arr - p1_e) / (p1_e * (1.0 - p1_e)) * (h_arr - mu_of_d)
    term1 = float((ind_e * core**2 * law.mass).sum()) / p_e**2
    term2 = eif.mu.quad
    return {
        "term1": term1,
        "term2": term2,
        "bound": eif.mu.bound,
        "gap": eif.mu.bound - term1 - term2,
    }


def lt_reduction_check(law: JointLaw, h: Optional[CellFunction] = None) -> dict:
    """Closed-form check of term2 when the bridge operator is a bijection.

    With a cell bijection between (s3, s2, d) and (s2, s1, d), term2 equals
    an expression free of the operator: the observational residual weighted
    by the centered treatment indicator and the sampling odds ratio
    q(s2, s1, d) = [P(O|D)/P(E|D)] [P(E|s2,s1,d)/P(O|s2,s1,d)], where q is
    pinned down by E[1{O}((P(E|D)/P(O|D)) q + 1) | s2, s1, d] = 1.
    """
    eif = lt_eif(law, h=h)
    ind_o = _indicator(law, "g", GROUP_OBS) * np.ones_like(law.mass)
    p_o = float((ind_o * law.mass).sum())
    d_vals = law.axis("d").values
    shape = [1] * law.mass.ndim
    shape[law.axis_pos("d")] = len(d_vals)
    d_arr = d_vals.reshape(shape) * np.ones_like(law.mass)
    p1_o = float((ind_o * d_arr * law.mass).sum()) / p_o

    # sampling odds pieces
    m_gd = _marg_mass(law, ["g", "d"])
    g_e = law.axis("g").index(GROUP_EXP)
    g_o = law.axis("g").index(GROUP_OBS)
    odds_d = m_gd[g_o] / m_gd[g_e]                    # P(O|D=d)/P(E|D=d), (n_d,)
    m_gt = _marg_mass(law, ["g", "s2", "s1", "d"])
    with np.errstate(divide="ignore", invalid="ignore"):
        odds_t = np.where(m_gt[g_o] > 0, m_gt[g_e] / np.where(m_gt[g_o] > 0, m_gt[g_o], 1.0), 0.0)

    d_axis = law.axis("d")
    q_vals = np.empty_like(odds_t)
    for di in range(len(d_axis)):
        q_vals[..., di] = odds_d[di] * odds_t[..., di]
    q = CellFunction(
        (law.axis("s2"), law.axis("s1"), law.axis("d")), q_vals
    )
    # defining-equation residual, per positive-mass target cell
    p_o_t = np.where(m_gt[g_o] + m_gt[g_e] > 0, m_gt[g_o] / np.where(m_gt[g_o] + m_gt[g_e] > 0, m_gt[g_o] + m_gt[g_e], 1.0), 0.0)
    resid = np.abs(p_o_t * (q_vals / odds_d[None, None, :] + 1.0) - 1.0)
    mask = (m_gt[g_o] + m_gt[g_e]) > 0
    q_residual = float(resid[mask].max()) if mask.any() else 0.0

    q_arr = broadcast_to_law(q, law)
    core = (d_arr - p1_o) / (p1_o * (1.0 - p1_o)) * q_arr * eif.rho
    lambda_q_term2 = float((core**2 * law.mass).sum()) / p_o**2
    return {
        "term2": eif.mu.quad,
        "lambda_q_term2": lambda_q_term2,
        "q_residual": q_residual,
        "q": q,
        "discrepancy": abs(eif.mu.quad - lambda_q_term2),
    }


def lt_riesz_vstar(law: JointLaw, h: Optional[CellFunction] = None, which: str = "mu1") -> dict:
    """Source-space representer v* behind the observational correction.

    v* = -P(G=E, D=1) Q^+ delta (for mu1); the correction multiplier is
    then -(K v*) / (P(G=E, D=1) sigma2), matching the main formula.
    """
    eif = lt_eif(law, h=h)
    op, sigma2 = eif.op, eif.sigma2
    comp = eif.component(which)
    d = {"mu1": 1, "mu0": 0}.get(which)
    if d is None:
        raise ValueError("v* defined per arm: which in {'mu1', 'mu0'}")
    m_egd = _marg_mass(law, ["g", "d", "s3", "s2"])
    p_ed = float(m_egd[law.axis("g").index(GROUP_EXP), law.axis("d").index(d)].sum())
    gram = gram_operator(op, target_weight=1.0 / sigma2, description="sigma^-1")
    # recover delta from beta: beta = K Q^+ delta / sigma2
    # instead rebuild Q^+ delta directly from the stored quadratic pieces
    delta = _lt_delta(law, op, d)
    r = gram.pinv_apply(delta)
    vstar = -p_ed * r
    beta_from_vstar = -(op.matrix @ vstar) / (p_ed * sigma2)
    return {
        "vstar": op.source_function(vstar),
        "beta": comp.beta,
        "beta_from_vstar": beta_from_vstar,
        "max_gap": float(np.abs(beta_from_vstar - comp.beta).max()),
    }


def _lt_delta(law: JointLaw, op: CondExpOperator, d) -> np.ndarray:
    m_s = _marg_mass(law, ["s3", "s2", "d"])
    m_egd = _marg_mass(law, ["g", "d", "s3", "s2"])
    g_idx = law.axis("g").index(GROUP_EXP)
    di = law.axis("d").index(d)
    w = m_egd[g_idx, di]
    p_ed = float(w.sum())
    delta = np.zeros(len(op.source_cells))
    for k, (s3_lab, s2_lab, d_lab) in enumerate(op.source_cells):
        if d_lab != d:
            continue
        i3 = law.axis("s3").index(s3_lab)
        i2 = law.axis("s2").index(s2_lab)
        delta[k] = w[i3, i2] / (p_ed * m_s[i3, i2, di])
    return delta


# ---------------------------------------------------------------------------
# unconfounded treatment (closed form, no bridge)
# ---------------------------------------------------------------------------


def uc_ate_eif(law: JointLaw) -> ModelEif:
    """Augmented inverse-propensity influence functions for E[Y(t)] and the ATE."""
    y_vals = law.axis("y").values
    t_axis = law.axis("t")
    m_x = _marg_mass(law, ["x"])
    e_x = cond_expectation(
        law,
        CellFunction((t_axis,), np.asarray(t_axis.labels, dtype=float)),
        ["x"],
    )
    y_full = y_vals.reshape(
        [len(y_vals) if i == law.axis_pos("y") else 1 for i in range(law.mass.ndim)]
    ) * np.ones_like(law.mass)
    reg = {}
    for t in (1, 0):
        sub = cond_expectation(
            law,
            CellFunction(law.axes, y_full * _indicator(law, "t", t)),
            ["x"],
        )
        prop = cond_expectation(
            law,
            CellFunction(law.axes, np.ones_like(law.mass) * _indicator(law, "t", t)),
            ["x"],
        )
        vals = np.where(prop.values > 0, sub.values / np.where(prop.values > 0, prop.values, 1.0), 0.0)
        reg[t] = CellFunction((law.axis("x"),), vals)
    e1 = cond_expectation(
        law, CellFunction(law.axes, np.ones_like(law.mass) * _indicator(law, "t", 1)), ["x"]
    ).values
    comps = {}
    for t in (1, 0):
        m_t_arr = broadcast_to_law(reg[t], law)
        mu_t = float((m_x * reg[t].values).sum())
        prop_arr = broadcast_to_law(CellFunction((law.axis("x"),), e1 if t == 1 else 1 - e1), law)
        ind = _indicator(law, "t", t) * np.ones_like(law.mass)
        direct = m_t_arr - mu_t
        with np.errstate(divide="ignore", invalid="ignore"):
            corr = np.where(prop_arr > 0, ind * (y_full - m_t_arr) / np.where(prop_arr > 0, prop_arr, 1.0), 0.0)
        values = direct + corr
        comps[f"mu{t}"] = EifComponent(
            estimand=mu_t,
            values=values,
            direct=direct,
            correction=corr,
            bound=float((values**2 * law.mass).sum()),
            beta=None,
            quad=float((corr**2 * law.mass).sum()),
        )
    values = comps["mu1"].values - comps["mu0"].values
    comps["mu"] = EifComponent(
        estimand=comps["mu1"].estimand - comps["mu0"].estimand,
        values=values,
        direct=comps["mu1"].direct - comps["mu0"].direct,
        correction=comps["mu1"].correction - comps["mu0"].correction,
        bound=float((values**2 * law.mass).sum()),
        beta=None,
        quad=float(((comps["mu1"].correction - comps["mu0"].correction) ** 2 * law.mass).sum()),
    )
    return ModelEif(law=law, h=None, op=None, rho=None, sigma2=None, **comps)


def uc_mu_functional(law: JointLaw) -> tuple:
    eif = uc_ate_eif(law)
    return eif.mu1.estimand, eif.mu0.estimand, eif.mu.estimand


# ---------------------------------------------------------------------------
# pathwise-derivative tooling
# ---------------------------------------------------------------------------


def random_score(law: JointLaw, rng, scale: float = 1.0) -> ScoreFunction:
    raw = rng.uniform(-scale, scale, size=law.mass.shape)
    mean = float((raw * law.mass).sum())
    return ScoreFunction(law, raw - mean)


def tangent_score(
    law: JointLaw,
    op: CondExpOperator,
    rho: np.ndarray,
    sigma2: np.ndarray,
    rng,
    scale: float = 1.0,
    rel_tol: float = DEFAULT_RANK_TOL,
) -> ScoreFunction:
    """Random score lying in the model's tangent space at the law.

    Start from an arbitrary centered direction and cancel the component of
    E[rho g | target] orthogonal to the operator's range, using the
    residual itself as the correcting score.
    """
    g0 = random_score(law, rng, scale).values
    ce = cond_expectation(law, CellFunction(law.axes, rho * g0), list(op.target_names))
    r = op.target_vector(ce)
    tilde = op.whitened_matrix()
    u, s, _ = np.linalg.svd(tilde)
    cutoff = rel_tol * (s[0] if s.size else 0.0)
    rank = int((s > cutoff).sum())
    wt = np.sqrt(op.target_weights)
    r_t = wt * r
    coef = u[:, :rank].T @ r_t
    r_perp = (r_t - u[:, :rank] @ coef) / wt
    corr_fun = op.target_function(r_perp / sigma2)
    g = g0 - broadcast_to_law(corr_fun, law) * rho
    mean = float((g * law.mass).sum())
    return ScoreFunction(law, g - mean)


def kernel_violation_scores(
    law: JointLaw, op: CondExpOperator, rho: np.ndarray, rel_tol: float = DEFAULT_RANK_TOL
):
    """Scores proportional to rho along adjoint-kernel directions.

    Perturbing the law along any of them leaves every marginal the operator
    conditions on intact but breaks the bridge moment: the directions that
    power the specification test.
    """
    diag = diagnose_identification(op, rel_tol)
    out = []
    for vec in diag.kernel_basis:
        fun = op.target_function(np.asarray(vec))
        g = broadcast_to_law(fun, law) * rho
        mean = float((g * law.mass).sum())
        out.append(ScoreFunction(law, g - mean))
    return out


def fd_derivative(
    functional: Callable[[JointLaw], float],
    law: JointLaw,
    g: ScoreFunction,
    theta: float = 1e-4,
) -> float:
    """Central finite difference of the functional along the score path."""
    up = functional(perturb(law, g, theta))
    down = functional(perturb(law, g, -theta))
    return (up - down) / (2.0 * theta)


def eif_pairing(law: JointLaw, eif_values: np.ndarray, g: ScoreFunction) -> float:
    return float((eif_values * g.values * law.mass).sum())
