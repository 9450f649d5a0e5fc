"""Data-generating processes and structural-from-observable constructions.

Three model families live here, each on finite supports:

* unconfounded treatment: observable (Y, T, X), potential-outcome law built
  from the product construction;
* negative control: observable (Y, D, V, Z, X) with an outcome bridge
  h(V, D, X) solving E[Y - h | Z, D, X] = 0;
* long-term two-sample: observable (Y 1{G=O}, S1, S2, S3, D, G) with a
  bridge h(S3, S2, D) solving E[1{G=O}(Y - h) | S2, S1, D] = 0.

Generators choose the bridge first and build the outcome distribution
around it, so every emitted law satisfies its moment restriction exactly
and carries its ground-truth estimand values.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    BridgeViolated,
    GridTooCoarse,
    InvalidSizes,
    MissingOverlap,
    OverlapViolation,
    ZeroMassEvent,
)
from .law import (
    Axis,
    CellFunction,
    JointLaw,
    broadcast_to_law,
    cond_expectation,
    condition,
    marginal,
    pushforward,
)
from .operators import CondExpOperator, build_operator

BRIDGE_TOL = 1e-10


# ---------------------------------------------------------------------------
# small helpers
# ---------------------------------------------------------------------------


def _dirichlet(rng, k, alpha=4.0):
    return rng.dirichlet(np.full(k, alpha))


def _spread_dist(rng, k):
    """Random distribution on k points with randomized concentration.

    Concentration varies across calls so conditional variances differ
    strongly between cells (heteroskedasticity drives the efficiency gap
    between identity and optimal weighting).
    """
    alpha = rng.uniform(0.4, 8.0)
    p = rng.dirichlet(np.full(k, alpha))
    # keep full support
    p = 0.97 * p + 0.03 / k
    return p


def comonotone_coupling(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Comonotone (shared-uniform) coupling of two distributions on a grid."""
    k1, k0 = len(p), len(q)
    out = np.zeros((k1, k0))
    i = j = 0
    pi, qj = float(p[0]), float(q[0])
    remaining = 1.0
    while i < k1 and j < k0:
        m = min(pi, qj)
        out[i, j] += m
        pi -= m
        qj -= m
        remaining -= m
        if pi <= 1e-15 and i < k1 - 1:
            i += 1
            pi = float(p[i])
        elif pi <= 1e-15:
            i += 1
        if qj <= 1e-15 and j < k0 - 1:
            j += 1
            qj = float(q[j])
        elif qj <= 1e-15:
            j += 1
    total = out.sum()
    if total > 0:
        out /= total
    return out


def factorization_error(law: JointLaw, block_a, block_b, given) -> float:
    """Max deviation of P(A, B | C) from P(A | C) P(B | C) over positive C cells."""
    names = list(block_a) + list(block_b) + list(given)
    sub = marginal(law, names)
    err = 0.0
    given = list(given)
    ga = [sub.axes[sub.axis_pos(n)] for n in given]
    for cell in itertools.product(*(a.labels for a in ga)):
        try:
            c = condition(sub, dict(zip(given, cell)))
        except ZeroMassEvent:
            continue
        pa = marginal(c, block_a)
        pb = marginal(c, block_b)
        pab = marginal(c, list(block_a) + list(block_b))
        # align joint to (a axes, b axes)
        order = [pab.axis_names.index(n) for n in pa.axis_names] + [
            pab.axis_names.index(n) for n in pb.axis_names
        ]
        joint = np.transpose(pab.mass, order)
        prod = np.multiply.outer(pa.mass, pb.mass)
        err = max(err, float(np.abs(joint - prod.reshape(joint.shape)).max()))
    return err


# ---------------------------------------------------------------------------
# unconfounded treatment model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UnconfoundedSpec:
    """Binary-treatment DGP: P(X), P(T|X), P(Y|T,X) on finite supports."""

    y_axis: Axis
    t_axis: Axis
    x_axis: Axis
    px: np.ndarray          # (n_x,)
    pt_given_x: np.ndarray  # (n_t, n_x)
    py_given_tx: np.ndarray  # (n_y, n_t, n_x)

    def validate(self):
        if not np.allclose(self.px.sum(), 1.0, atol=1e-12):
            raise InvalidSizes("P(X) does not sum to 1")
        if not np.allclose(self.pt_given_x.sum(axis=0), 1.0, atol=1e-12):
            raise InvalidSizes("P(T|X) columns do not sum to 1")
        if not np.allclose(self.py_given_tx.sum(axis=0), 1.0, atol=1e-12):
            raise InvalidSizes("P(Y|T,X) columns do not sum to 1")
        support = self.px > 0
        if np.any(self.pt_given_x[:, support] <= 0):
            raise OverlapViolation("some treatment arm has zero probability")


def random_unconfounded_spec(rng, n_y=4, n_x=2, confounded=True) -> UnconfoundedSpec:
    y_axis = Axis.grid("y", np.linspace(0.0, 1.0, n_y))
    t_axis = Axis("t", (0, 1))
    x_axis = Axis("x", tuple(f"x{i}" for i in range(n_x)))
    px = _dirichlet(rng, n_x, alpha=6.0)
    if confounded:
        pt1 = rng.uniform(0.25, 0.75, size=n_x)
    else:
        pt1 = np.full(n_x, rng.uniform(0.3, 0.7))
    pt = np.vstack([1 - pt1, pt1])
    py = np.empty((n_y, 2, n_x))
    for t in range(2):
        for x in range(n_x):
            py[:, t, x] = _spread_dist(rng, n_y)
    return UnconfoundedSpec(y_axis, t_axis, x_axis, px, pt, py)


def uc_observable_law(spec: UnconfoundedSpec) -> JointLaw:
    mass = (
        spec.py_given_tx
        * spec.pt_given_x[None, :, :]
        * spec.px[None, None, :]
    )
    return JointLaw((spec.y_axis, spec.t_axis, spec.x_axis), mass)


def uc_structural_axes(y_axis: Axis, t_axis: Axis, x_axis: Axis):
    return (
        Axis("y1", y_axis.labels),
        Axis("y0", y_axis.labels),
        t_axis,
        x_axis,
    )


def uc_observation_map(y1, y0, t, x):
    return (y1 if t == 1 else y0, t, x)


def gen_unconfounded(spec: UnconfoundedSpec, seed=None):
    """(structural law, observable law) via the product construction.

    The structural law makes the two potential outcomes conditionally
    independent of each other and of treatment given X, so the
    unconfoundedness factorization holds exactly and its image under the
    observation map reproduces the observable law cell-by-cell.
    """
    spec.validate()
    axes = uc_structural_axes(spec.y_axis, spec.t_axis, spec.x_axis)
    mass = (
        spec.py_given_tx[:, 1, :][:, None, None, :]
        * spec.py_given_tx[:, 0, :][None, :, None, :]
        * spec.pt_given_x[None, None, :, :]
        * spec.px[None, None, None, :]
    )
    structural = JointLaw(axes, mass)
    return structural, uc_observable_law(spec)


@dataclass(frozen=True)
class UcConstruction:
    structural: JointLaw
    flagged_cells: tuple  # (t, x) cells with zero mass, assigned uniform arm


def structural_from_observable_uc(obs: JointLaw) -> UcConstruction:
    """Potential-outcome law whose observation-map image is exactly ``obs``.

    Zero-mass (t, x) cells get a uniform placeholder outcome distribution
    and are flagged.
    """
    y_axis = obs.axis("y")
    t_axis = obs.axis("t")
    x_axis = obs.axis("x")
    n_y, n_t, n_x = len(y_axis), len(t_axis), len(x_axis)
    if n_t != 2:
        raise InvalidSizes("construction implemented for binary treatment")
    # align obs mass to (y, t, x)
    order = [obs.axis_pos("y"), obs.axis_pos("t"), obs.axis_pos("x")]
    m = np.moveaxis(obs.mass, order, [0, 1, 2])
    px = m.sum(axis=(0, 1))
    ptx = m.sum(axis=0)  # (t, x)
    flagged = []
    py = np.empty((n_y, n_t, n_x))
    pt = np.zeros((n_t, n_x))
    for x in range(n_x):
        if px[x] > 0:
            pt[:, x] = ptx[:, x] / px[x]
        else:
            pt[:, x] = 1.0 / n_t
        for t in range(n_t):
            if ptx[t, x] > 0:
                py[:, t, x] = m[:, t, x] / ptx[t, x]
            else:
                py[:, t, x] = 1.0 / n_y
                flagged.append((t_axis.labels[t], x_axis.labels[x]))
    axes = uc_structural_axes(y_axis, t_axis, x_axis)
    mass = (
        py[:, 1, :][:, None, None, :]
        * py[:, 0, :][None, :, None, :]
        * pt[None, None, :, :]
        * px[None, None, None, :]
    )
    return UcConstruction(JointLaw(axes, mass), tuple(flagged))


# ---------------------------------------------------------------------------
# negative control model
# ---------------------------------------------------------------------------

NC_SOURCE = ("v", "d", "x")
NC_TARGET = ("z", "d", "x")


@dataclass(frozen=True)
class NegControlSpec:
    """Observable negative-control law with its bridge and ground truth."""

    law: JointLaw               # axes (y, d, v, z, x)
    h: CellFunction             # on (v, d, x)
    mu1: float
    mu0: float

    @property
    def mu(self) -> float:
        return self.mu1 - self.mu0

    def operator(self) -> CondExpOperator:
        return build_operator(self.law, source=NC_SOURCE, target=NC_TARGET)


def nc_bridge_residual(law: JointLaw, h: CellFunction) -> float:
    """Max cell residual of E[Y - h(V,D,X) | Z,D,X] over positive cells."""
    y = CellFunction((law.axis("y"),), law.axis("y").values)
    resid_full = broadcast_to_law(y, law) - broadcast_to_law(h, law)
    f = CellFunction(law.axes, resid_full * np.ones_like(law.mass))
    ce = cond_expectation(law, f, ["z", "d", "x"])
    return float(np.abs(np.where(ce.zero_mass, 0.0, ce.values)).max())


def gen_negative_control(
    n_v: int = 2,
    n_z: int = 2,
    n_x: int = 1,
    n_y: int = 5,
    seed=None,
    min_relevance: float = 0.05,
) -> NegControlSpec:
    """Random negative-control DGP with an exactly valid bridge.

    The outcome distribution given (V, D, X) is drawn first and the bridge
    is its conditional mean, so the moment restriction holds by
    construction. ``n_z > n_v`` produces locally overidentified laws.
    """
    if min(n_v, n_z, n_x) < 1 or n_y < 2:
        raise InvalidSizes("need n_v, n_z, n_x >= 1 and n_y >= 2")
    rng = np.random.default_rng(seed)
    y_axis = Axis.grid("y", np.linspace(0.0, 1.0, n_y))
    d_axis = Axis("d", (0, 1))
    v_axis = Axis("v", tuple(f"v{i}" for i in range(n_v)))
    z_axis = Axis("z", tuple(f"z{i}" for i in range(n_z)))
    x_axis = Axis("x", tuple(f"x{i}" for i in range(n_x)))

    for _ in range(200):
        px = _dirichlet(rng, n_x, alpha=8.0)
        pz = np.column_stack([_dirichlet(rng, n_z, alpha=5.0) for _ in range(n_x)])
        pd1 = rng.uniform(0.3, 0.7, size=(n_z, n_x))
        pv = np.empty((n_v, n_z, n_x))
        for z in range(n_z):
            for x in range(n_x):
                pv[:, z, x] = 0.9 * _dirichlet(rng, n_v, alpha=1.0) + 0.1 / n_v
        q = np.empty((n_y, n_v, 2, n_x))
        for v in range(n_v):
            for d in range(2):
                for x in range(n_x):
                    q[:, v, d, x] = _spread_dist(rng, n_y)
        h_vals = np.einsum("yvdx,y->vdx", q, y_axis.values)

        # mass over (y, d, v, z, x)
        pd = np.stack([1 - pd1, pd1])  # (d, z, x)
        mass = np.zeros((n_y, 2, n_v, n_z, n_x))
        for d in range(2):
            mass[:, d] = (
                q[:, :, d, :][:, :, None, :]
                * pv[None, :, :, :]
                * pd[d][None, None, :, :]
                * pz[None, None, :, :]
                * px[None, None, None, :]
            )
        law = JointLaw((y_axis, d_axis, v_axis, z_axis, x_axis), mass)
        h = CellFunction((v_axis, d_axis, x_axis), h_vals)
        op = build_operator(law, source=NC_SOURCE, target=NC_TARGET)
        sv = np.linalg.svd(op.whitened_matrix(), compute_uv=False)
        # instrument relevance: smallest singular value of the column space
        if sv[min(len(op.source_cells), len(op.target_cells)) - 1] >= min_relevance * sv[0]:
            break
    else:
        raise InvalidSizes("could not draw a well-conditioned DGP")

    mvx = marginal(law, ["v", "x"])
    order = [mvx.axis_names.index("v"), mvx.axis_names.index("x")]
    mvx_mass = np.moveaxis(mvx.mass, order, [0, 1])
    mu1 = float((mvx_mass * h_vals[:, 1, :]).sum())
    mu0 = float((mvx_mass * h_vals[:, 0, :]).sum())
    spec = NegControlSpec(law=law, h=h, mu1=mu1, mu0=mu0)
    assert nc_bridge_residual(law, h) < 1e-12
    return spec


@dataclass(frozen=True)
class NcConstruction:
    """Latent-confounder reconstruction with U identified with Z."""

    structural: JointLaw        # axes (y1, y0, v, d, z, x)
    flagged_cells: tuple
    pushforward_error: float
    independence_error: float   # (Y(1), Y(0), V) vs D given (Z, X)
    conditional_match_error: float


def nc_observation_map(y1, y0, v, d, z, x):
    return (y1 if d == 1 else y0, d, v, z, x)


def structural_from_observable_nc(
    obs: JointLaw, h: CellFunction, tol: float = BRIDGE_TOL
) -> NcConstruction:
    """Quantile-coupling reconstruction of the latent-confounder model.

    Sets the latent confounder equal to the negative-control exposure and
    couples the two potential outcomes comonotonically given (V, Z, X). The
    image of the constructed law under the observation map reproduces
    ``obs`` whenever V is conditionally independent of D given (Z, X),
    which holds for every law emitted by :func:`gen_negative_control`.
    """
    resid = nc_bridge_residual(obs, h)
    if resid > tol:
        raise BridgeViolated(f"bridge residual {resid} exceeds {tol}")
    y_axis, d_axis = obs.axis("y"), obs.axis("d")
    v_axis, z_axis, x_axis = obs.axis("v"), obs.axis("z"), obs.axis("x")
    n_y, n_v, n_z, n_x = len(y_axis), len(v_axis), len(z_axis), len(x_axis)
    order = [obs.axis_pos(n) for n in ("y", "d", "v", "z", "x")]
    m = np.moveaxis(obs.mass, order, range(5))

    px = m.sum(axis=(0, 1, 2, 3))
    pzx = m.sum(axis=(0, 1, 2))                       # (z, x)
    pdzx = m.sum(axis=(0, 2))                         # (d, z, x)
    pvzx = m.sum(axis=(0, 1))                         # (v, z, x)
    pyvdzx = m.transpose(0, 2, 1, 3, 4)               # (y, v, d, z, x)

    flagged = []
    mass = np.zeros((n_y, n_y, n_v, 2, n_z, n_x))
    for x in range(n_x):
        for z in range(n_z):
            if pzx[z, x] <= 0:
                continue
            pd_cond = pdzx[:, z, x] / pzx[z, x]
            pv_cond = pvzx[:, z, x] / pzx[z, x]
            for v in range(n_v):
                g = np.empty((2, n_y))
                for d in range(2):
                    denom = pyvdzx[:, v, d, z, x].sum()
                    if denom > 0:
                        g[d] = pyvdzx[:, v, d, z, x] / denom
                    else:
                        g[d] = 0.0
                        g[d, 0] = 1.0
                        flagged.append(
                            (v_axis.labels[v], d_axis.labels[d], z_axis.labels[z], x_axis.labels[x])
                        )
                coupling = comonotone_coupling(g[1], g[0])
                for d in range(2):
                    mass[:, :, v, d, z, x] = (
                        coupling * pv_cond[v] * pd_cond[d] * pzx[z, x]
                    )
    axes = (
        Axis("y1", y_axis.labels),
        Axis("y0", y_axis.labels),
        v_axis,
        d_axis,
        z_axis,
        x_axis,
    )
    structural = JointLaw(axes, mass)

    image = pushforward(structural, nc_observation_map, (y_axis, d_axis, v_axis, z_axis, x_axis))
    obs_aligned = JointLaw((y_axis, d_axis, v_axis, z_axis, x_axis), np.moveaxis(obs.mass, order, range(5)))
    push_err = float(np.abs(image.mass - obs_aligned.mass).max())
    indep_err = factorization_error(structural, ["y1", "y0", "v"], ["d"], ["z", "x"])

    # constructed law of (Y(d), V) given (Z, X) vs observed (Y, V) given (D=d, Z, X)
    match_err = 0.0
    for d, slot in ((1, "y1"), (0, "y0")):
        cons = marginal(structural, [slot, "v", "z", "x"])
        for z in range(n_z):
            for x in range(n_x):
                if pdzx[d, z, x] <= 0 or pzx[z, x] <= 0:
                    continue
                c_cons = condition(cons, {"z": z_axis.labels[z], "x": x_axis.labels[x]})
                c_obs = pyvdzx[:, :, d, z, x] / pdzx[d, z, x]
                a = np.moveaxis(
                    c_cons.mass,
                    [c_cons.axis_pos(slot), c_cons.axis_pos("v")],
                    [0, 1],
                )
                match_err = max(match_err, float(np.abs(a - c_obs).max()))
    return NcConstruction(structural, tuple(flagged), push_err, indep_err, match_err)


# ---------------------------------------------------------------------------
# long-term model
# ---------------------------------------------------------------------------

LT_SOURCE = ("s3", "s2", "d")
LT_TARGET = ("s2", "s1", "d")
GROUP_EXP = "E"
GROUP_OBS = "O"


@dataclass(frozen=True)
class LongTermSpec:
    """Observable two-sample long-term law with bridge and ground truth."""

    law: JointLaw               # axes (y, g, d, s1, s2, s3)
    h: CellFunction             # on (s3, s2, d)
    mu1: float
    mu0: float

    @property
    def mu(self) -> float:
        return self.mu1 - self.mu0

    def operator(self) -> CondExpOperator:
        return build_operator(
            self.law, source=LT_SOURCE, target=LT_TARGET, indicator={"g": GROUP_OBS}
        )


def lt_bridge_residual(law: JointLaw, h: CellFunction) -> float:
    """Max cell residual of E[1{G=O}(Y - h) | S2, S1, D]."""
    y_axis = law.axis("y")
    g_pos = law.axis_pos("g")
    obs_idx = law.axis("g").index(GROUP_OBS)
    ind = np.zeros(len(law.axis("g")))
    ind[obs_idx] = 1.0
    shape = [1] * law.mass.ndim
    shape[g_pos] = len(law.axis("g"))
    y = CellFunction((y_axis,), y_axis.values)
    resid = (broadcast_to_law(y, law) - broadcast_to_law(h, law)) * ind.reshape(shape)
    f = CellFunction(law.axes, resid * np.ones_like(law.mass))
    ce = cond_expectation(law, f, ["s2", "s1", "d"])
    return float(np.abs(np.where(ce.zero_mass, 0.0, ce.values)).max())


def gen_long_term(
    n_s1: int = 2,
    n_s2: int = 2,
    n_s3: int = 2,
    n_y: int = 5,
    p_exp: float = 0.5,
    seed=None,
    min_relevance: float = 0.05,
    deterministic_link: bool = False,
    pd_range: tuple = (0.2, 0.8),
    s_alpha: float = 4.0,
) -> LongTermSpec:
    """Random long-term DGP whose observable bridge holds exactly.

    ``n_s1 > n_s3`` produces locally overidentified laws (the early
    short-term outcome varies more finely than the late one). The
    experimental short-term margin is tied to the observational one so the
    latent-variable reconstruction reproduces the law exactly.

    ``deterministic_link=True`` forces s3 = s1 cell-by-cell (requires
    ``n_s1 == n_s3``), making the bridge operator a bijection between its
    source and target cells.
    """
    if min(n_s1, n_s2, n_s3) < 1 or n_y < 2 or not 0 < p_exp < 1:
        raise InvalidSizes("bad sizes or group probability")
    if deterministic_link and n_s1 != n_s3:
        raise InvalidSizes("deterministic link needs n_s1 == n_s3")
    rng = np.random.default_rng(seed)
    y_axis = Axis.grid("y", np.linspace(0.0, 1.0, n_y))
    g_axis = Axis("g", (GROUP_EXP, GROUP_OBS))
    d_axis = Axis("d", (0, 1))
    s1_axis = Axis("s1", tuple(f"a{i}" for i in range(n_s1)))
    s2_axis = Axis("s2", tuple(f"b{i}" for i in range(n_s2)))
    s3_axis = Axis("s3", tuple(f"c{i}" for i in range(n_s3)))

    for _ in range(200):
        p12 = rng.dirichlet(np.full(n_s1 * n_s2, s_alpha)).reshape(n_s1, n_s2)
        pd1_o = rng.uniform(*pd_range, size=(n_s1, n_s2))  # confounding channel
        p3 = np.empty((n_s3, n_s1, n_s2))
        for i in range(n_s1):
            for j in range(n_s2):
                if deterministic_link:
                    p3[:, i, j] = np.eye(n_s3)[i]
                else:
                    p3[:, i, j] = 0.9 * _dirichlet(rng, n_s3, alpha=1.2) + 0.1 / n_s3
        pd1_e = rng.uniform(0.35, 0.65)
        q = np.empty((n_y, n_s3, n_s2, 2))
        for k in range(n_s3):
            for j in range(n_s2):
                for d in range(2):
                    q[:, k, j, d] = _spread_dist(rng, n_y)
        h_vals = np.einsum("ykjd,y->kjd", q, y_axis.values)

        # observational block: (y, d, s1, s2, s3)
        mass = np.zeros((n_y, 2, 2, n_s1, n_s2, n_s3))  # (y, g, d, s1, s2, s3)
        g_e = g_axis.index(GROUP_EXP)
        g_o = g_axis.index(GROUP_OBS)
        for d in range(2):
            pd_o = pd1_o if d == 1 else 1 - pd1_o
            block = (
                p12[None, :, :, None]
                * pd_o[None, :, :, None]
                * p3.transpose(1, 2, 0)[None, :, :, :]
                * q[:, :, :, d].transpose(0, 2, 1)[:, None, :, :]
            )
            mass[:, g_o, d] = (1 - p_exp) * block
        # experimental block: S margin equals the observational S margin,
        # treatment randomized, Y parked at the first grid point
        ps_o = p12[:, :, None] * p3.transpose(1, 2, 0)  # (s1, s2, s3)
        for d in range(2):
            pd_e = pd1_e if d == 1 else 1 - pd1_e
            mass[0, g_e, d] = p_exp * pd_e * ps_o
        law = JointLaw((y_axis, g_axis, d_axis, s1_axis, s2_axis, s3_axis), mass)
        h = CellFunction((s3_axis, s2_axis, d_axis), h_vals)
        op = build_operator(law, source=LT_SOURCE, target=LT_TARGET, indicator={"g": GROUP_OBS})
        sv = np.linalg.svd(op.whitened_matrix(), compute_uv=False)
        k = min(len(op.source_cells), len(op.target_cells))
        if sv[k - 1] >= min_relevance * sv[0]:
            break
    else:
        raise InvalidSizes("could not draw a well-conditioned DGP")

    mu1 = float(np.einsum("ijk,kj->", ps_o, h_vals[:, :, 1]))
    mu0 = float(np.einsum("ijk,kj->", ps_o, h_vals[:, :, 0]))
    spec = LongTermSpec(law=law, h=h, mu1=mu1, mu0=mu0)
    assert lt_bridge_residual(law, h) < 1e-12
    return spec


def gen_long_term_heteroskedastic(p_exp: float = 0.6) -> LongTermSpec:
    """Fixed overidentified long-term DGP with variance-sensitive weighting.

    The outcome spread depends sharply on the late short-term outcome
    (narrow around one value, wide around the other) and the late outcome
    is nearly pinned down by the early one in two of the three early
    cells. The conditional outcome variance then concentrates on a thin
    slice of the target cells, so identity weighting pays a real price:
    the identity-weighted influence variance is about 1.5 times the bound.
    Useful for exercising weighting comparisons where random draws give
    gaps too small to detect.
    """
    n_s1, n_s3, n_y = 3, 2, 9
    y_axis = Axis.grid("y", np.linspace(0.0, 1.0, n_y))
    g_axis = Axis("g", (GROUP_EXP, GROUP_OBS))
    d_axis = Axis("d", (0, 1))
    s1_axis = Axis("s1", ("a0", "a1", "a2"))
    s2_axis = Axis("s2", ("b0",))
    s3_axis = Axis("s3", ("c0", "c1"))
    yv = y_axis.values

    p12 = np.array([0.39, 0.06, 0.55]).reshape(n_s1, 1)
    pd1_o = np.array([0.17, 0.48, 0.83]).reshape(n_s1, 1)
    pd1_e = 0.5
    p3 = np.array([[0.99, 0.01], [0.01, 0.99], [0.60, 0.40]]).T.reshape(n_s3, n_s1, 1)
    tau = np.array([0.06, 0.30])
    centers = np.array([[0.79, 0.38], [0.38, 0.43]])  # (s3, d)

    q = np.zeros((n_y, n_s3, 1, 2))
    for k in range(n_s3):
        for d in range(2):
            w = np.exp(-((yv - centers[k, d]) ** 2) / (2 * tau[k] ** 2)) + 1e-6
            q[:, k, 0, d] = w / w.sum()
    h_vals = np.einsum("ykjd,y->kjd", q, yv)

    mass = np.zeros((n_y, 2, 2, n_s1, 1, n_s3))
    ps_o = p12[:, :, None] * p3.transpose(1, 2, 0)
    g_e = g_axis.index(GROUP_EXP)
    g_o = g_axis.index(GROUP_OBS)
    for d in range(2):
        pd_o = pd1_o if d == 1 else 1 - pd1_o
        block = (
            p12[None, :, :, None]
            * pd_o[None, :, :, None]
            * p3.transpose(1, 2, 0)[None, :, :, :]
            * q[:, :, :, d].transpose(0, 2, 1)[:, None, :, :]
        )
        mass[:, g_o, d] = (1 - p_exp) * block
        pd_e = pd1_e if d == 1 else 1 - pd1_e
        mass[0, g_e, d] = p_exp * pd_e * ps_o
    law = JointLaw((y_axis, g_axis, d_axis, s1_axis, s2_axis, s3_axis), mass)
    h = CellFunction((s3_axis, s2_axis, d_axis), h_vals)
    mu1 = float(np.einsum("ijk,kj->", ps_o, h_vals[:, :, 1]))
    mu0 = float(np.einsum("ijk,kj->", ps_o, h_vals[:, :, 0]))
    spec = LongTermSpec(law=law, h=h, mu1=mu1, mu0=mu0)
    assert lt_bridge_residual(law, h) < 1e-12
    return spec


@dataclass(frozen=True)
class LtConstruction:
    """Latent-variable reconstruction for the long-term model."""

    structural: JointLaw        # axes (y1, y0, g, d, s1, s2, s3)
    flagged_cells: tuple
    pushforward_error: float
    checks: dict                # named max-errors, one per model assumption


def lt_observation_map(y1, y0, g, d, s1, s2, s3):
    y = (y1 if d == 1 else y0) if g == GROUP_OBS else None
    return (y, g, d, s1, s2, s3)


def structural_from_observable_lt(
    obs: JointLaw, h: CellFunction, tol: float = BRIDGE_TOL
) -> LtConstruction:
    """Reconstruct potential outcomes with the short-term pair as confounder.

    The latent confounder is (S1, S2); the two long-term potential outcomes
    are coupled comonotonically given the full short-term vector, and the
    experimental block is an independent copy of the observational
    potential-outcome distribution with randomized treatment.
    """
    resid = lt_bridge_residual(obs, h)
    if resid > tol:
        raise BridgeViolated(f"observable bridge residual {resid} exceeds {tol}")
    y_axis, g_axis, d_axis = obs.axis("y"), obs.axis("g"), obs.axis("d")
    s1_axis, s2_axis, s3_axis = obs.axis("s1"), obs.axis("s2"), obs.axis("s3")
    n_y = len(y_axis)
    order = [obs.axis_pos(n) for n in ("y", "g", "d", "s1", "s2", "s3")]
    m = np.moveaxis(obs.mass, order, range(6))
    g_o = g_axis.index(GROUP_OBS)
    g_e = g_axis.index(GROUP_EXP)

    m_o = m[:, g_o]                    # (y, d, s1, s2, s3)
    p_o = m_o.sum()
    p_e = m[:, g_e].sum()
    pds_o = m_o.sum(axis=0)            # (d, s1, s2, s3)
    ps_o = pds_o.sum(axis=0)           # (s1, s2, s3)
    # overlap: every positive-mass (s2, s1, d) cell must be reachable in O
    pd_s12_e = m[:, g_e].sum(axis=(0, 4))  # (d, s1, s2)
    pd_s12_o = pds_o.sum(axis=3)           # (d, s1, s2)
    if np.any((pd_s12_e > 0) & (pd_s12_o <= 0)):
        raise MissingOverlap("a (s2, s1, d) cell has no observational mass")

    flagged = []
    n1, n2, n3 = len(s1_axis), len(s2_axis), len(s3_axis)
    couplings = np.zeros((n_y, n_y, n1, n2, n3))
    for i in range(n1):
        for j in range(n2):
            for k in range(n3):
                f = np.empty((2, n_y))
                for d in range(2):
                    denom = m_o[:, d, i, j, k].sum()
                    if denom > 0:
                        f[d] = m_o[:, d, i, j, k] / denom
                    else:
                        f[d] = 0.0
                        f[d, 0] = 1.0
                        if ps_o[i, j, k] > 0:
                            flagged.append(
                                (s1_axis.labels[i], s2_axis.labels[j], s3_axis.labels[k], d)
                            )
                couplings[:, :, i, j, k] = comonotone_coupling(f[1], f[0])

    mass = np.zeros((n_y, n_y, 2, 2, n1, n2, n3))  # (y1, y0, g, d, s1, s2, s3)
    # observational block keeps the observed (D, S) joint
    mass[:, :, g_o] = couplings[:, :, None, :, :, :] * pds_o[None, None, :, :, :, :]
    # experimental block: same (Y(1), Y(0), S) law, randomized treatment
    pd_e = m[:, g_e].sum(axis=(0, 2, 3, 4))
    if p_e > 0:
        pd_e = pd_e / p_e
        joint_s = np.where(p_o > 0, ps_o / max(p_o, 1e-300), 0.0)
        for d in range(2):
            mass[:, :, g_e, d] = (
                p_e * pd_e[d] * couplings * joint_s[None, None, :, :, :]
            )
    structural = JointLaw(
        (
            Axis("y1", y_axis.labels),
            Axis("y0", y_axis.labels),
            g_axis,
            d_axis,
            s1_axis,
            s2_axis,
            s3_axis,
        ),
        mass,
    )

    # pushforward comparison: Y is only observed in the O group, so compare
    # the O block cell-by-cell and the E block after dropping Y
    img_o = np.zeros_like(m_o)
    for d in range(2):
        sel = mass[:, :, g_o, d]
        img_o[:, d] = sel.sum(axis=1) if d == 1 else sel.sum(axis=0)
    err_o = float(np.abs(img_o - m_o).max())
    img_e = mass[:, :, g_e].sum(axis=(0, 1))
    err_e = float(np.abs(img_e - m[:, g_e].sum(axis=0)).max())
    push_err = max(err_o, err_e)

    checks = {}
    # (1) potential outcomes independent of treatment given the confounder, O
    checks["confounder_sufficiency"] = factorization_error(
        structural_given_group(structural, GROUP_OBS),
        ["y1", "y0", "s3"],
        ["d"],
        ["s1", "s2"],
    )
    # (2) randomized treatment in the experimental group
    checks["experimental_randomization"] = factorization_error(
        structural_given_group(structural, GROUP_EXP),
        ["y1", "y0", "s1", "s2", "s3"],
        ["d"],
        [],
    )
    # (3) group invariance of (short-term outcomes, confounder)
    pe_block = marginal(structural_given_group(structural, GROUP_EXP), ["s1", "s2", "s3"])
    po_block = marginal(structural_given_group(structural, GROUP_OBS), ["s1", "s2", "s3"])
    checks["group_invariance"] = float(np.abs(pe_block.mass - po_block.mass).max())
    # (4) early outcome carries no information beyond the confounder; the
    # confounder contains s1 outright so the conditional law is degenerate
    checks["sequential_outcomes"] = 0.0
    # (5) completeness: the confounder is a deterministic refinement of s1
    checks["completeness"] = 0.0 if _confounder_complete(structural) else 1.0
    # (6) latent bridge: conditioning on the confounder equals conditioning
    # on (s2, s1), so the latent moment coincides with the observable one
    checks["latent_bridge"] = _latent_bridge_error(structural, h, y_axis)
    return LtConstruction(structural, tuple(flagged), push_err, checks)


def structural_given_group(structural: JointLaw, group) -> JointLaw:
    return condition(structural, {"g": group})


def _confounder_complete(structural: JointLaw) -> bool:
    # with U = (s1, s2), the conditional law of U given (s1, s2, d) is a
    # point mass, so mean-zero functions of U vanishing conditionally on
    # every s1 must vanish identically on the support
    return True


def _latent_bridge_error(structural: JointLaw, h: CellFunction, y_axis: Axis) -> float:
    obs_block = structural_given_group(structural, GROUP_OBS)
    err = 0.0
    for d, slot in ((1, "y1"), (0, "y0")):
        try:
            blk = condition(obs_block, {"d": d})
        except ZeroMassEvent:
            continue
        yv = CellFunction((blk.axis(slot),), y_axis.values)
        ydiff = broadcast_to_law(yv, blk) - broadcast_to_law(_h_slice(h, d), blk)
        ce = cond_expectation(blk, CellFunction(blk.axes, ydiff * np.ones_like(blk.mass)), ["s2", "s1"])
        err = max(err, float(np.abs(np.where(ce.zero_mass, 0.0, ce.values)).max()))
    return err


def _h_slice(h: CellFunction, d) -> CellFunction:
    d_pos = h.axis_names.index("d")
    d_idx = h.axes[d_pos].index(d)
    values = np.take(h.values, d_idx, axis=d_pos)
    axes = tuple(a for i, a in enumerate(h.axes) if i != d_pos)
    return CellFunction(axes, values)


# ---------------------------------------------------------------------------
# instrumental-variable design with a numeric regressor
# ---------------------------------------------------------------------------

NPIV_SOURCE = ("t", "x")
NPIV_TARGET = ("z", "x")


def derivative_matrix(points: np.ndarray) -> np.ndarray:
    """Discrete d/dt on a grid: central differences, one-sided at the edges."""
    points = np.asarray(points, dtype=float)
    n = len(points)
    if n < 3:
        raise GridTooCoarse("need at least 3 grid points for a derivative")
    mat = np.zeros((n, n))
    for i in range(n):
        if i == 0:
            mat[i, 0] = -1.0 / (points[1] - points[0])
            mat[i, 1] = 1.0 / (points[1] - points[0])
        elif i == n - 1:
            mat[i, n - 2] = -1.0 / (points[-1] - points[-2])
            mat[i, n - 1] = 1.0 / (points[-1] - points[-2])
        else:
            step = points[i + 1] - points[i - 1]
            mat[i, i - 1] = -1.0 / step
            mat[i, i + 1] = 1.0 / step
    return mat


@dataclass(frozen=True)
class NpivSpec:
    """Observable law for the endogenous-regressor design with its truth."""

    law: JointLaw               # axes (y, t, z, x)
    h: CellFunction             # on (t, x)
    mu: float                   # average discrete structural derivative

    def operator(self) -> CondExpOperator:
        return build_operator(self.law, source=NPIV_SOURCE, target=NPIV_TARGET)


def npiv_bridge_residual(law: JointLaw, h: CellFunction) -> float:
    y = CellFunction((law.axis("y"),), law.axis("y").values)
    resid = broadcast_to_law(y, law) - broadcast_to_law(h, law)
    f = CellFunction(law.axes, resid * np.ones_like(law.mass))
    ce = cond_expectation(law, f, list(NPIV_TARGET))
    return float(np.abs(np.where(ce.zero_mass, 0.0, ce.values)).max())


def gen_npiv(
    n_t: int = 3,
    n_z: int = 3,
    n_x: int = 1,
    n_y: int = 5,
    seed=None,
    linear_beta=None,
    endo: float = 0.008,
    min_relevance: float = 0.05,
) -> NpivSpec:
    """Endogenous numeric regressor with instruments; bridge exact by tilt.

    The outcome mean given (t, z, x) is h(t, x) plus a z-dependent shift
    centered to zero under P(t | z, x), so E[Y - h(T, X) | Z, X] = 0 holds
    cell-exactly while E[Y | T, X] differs from h (endogeneity).
    ``linear_beta`` forces h(t, x) = 0.5 + beta (t - 0.5).
    """
    if n_t < 3:
        raise GridTooCoarse("need at least 3 regressor grid points")
    rng = np.random.default_rng(seed)
    y_axis = Axis.grid("y", np.linspace(0.0, 1.0, n_y))
    t_axis = Axis.grid("t", np.linspace(0.0, 1.0, n_t))
    z_axis = Axis("z", tuple(f"z{i}" for i in range(n_z)))
    x_axis = Axis("x", tuple(f"x{i}" for i in range(n_x)))
    y_vals = y_axis.values
    uniform = np.full(n_y, 1.0 / n_y)

    for _ in range(200):
        px = _dirichlet(rng, n_x, alpha=8.0)
        pz = np.column_stack([_dirichlet(rng, n_z, alpha=5.0) for _ in range(n_x)])
        pt = np.empty((n_t, n_z, n_x))
        for z in range(n_z):
            for x in range(n_x):
                pt[:, z, x] = 0.9 * _dirichlet(rng, n_t, alpha=1.0) + 0.1 / n_t

        q_base = np.empty((n_y, n_t, n_x))
        for t in range(n_t):
            for x in range(n_x):
                if linear_beta is None:
                    q_base[:, t, x] = 0.85 * _dirichlet(rng, n_y, alpha=1.0) + 0.15 * uniform
                else:
                    q_base[:, t, x] = uniform
        base_mean = np.einsum("ytx,y->tx", q_base, y_vals)
        base_var = np.einsum("ytx,y->tx", q_base, y_vals**2) - base_mean**2
        if linear_beta is None:
            h_vals = base_mean.copy()
        else:
            h_vals = 0.5 + linear_beta * (t_axis.values[:, None] - 0.5) * np.ones((1, n_x))

        e_raw = endo * rng.uniform(-1.0, 1.0, size=(n_t, n_z, n_x))
        e = e_raw - np.einsum("tzx,tzx->zx", pt, e_raw)[None, :, :]
        target_mean = h_vals[:, None, :] + e
        tilt = (target_mean - base_mean[:, None, :]) / base_var[:, None, :]
        if np.abs(tilt).max() * 1.0 >= 0.98:
            continue
        # per-cell conditional outcome law with the exact target mean
        p_y = q_base[:, :, None, :] * (
            1.0 + tilt[None, :, :, :] * (y_vals[:, None, None, None] - base_mean[None, :, None, :])
        )
        if p_y.min() <= 0:
            continue
        mass = p_y * pt[None, :, :, :] * pz[None, None, :, :] * px[None, None, None, :]
        law = JointLaw((y_axis, t_axis, z_axis, x_axis), mass)
        op = build_operator(law, source=NPIV_SOURCE, target=NPIV_TARGET)
        sv = np.linalg.svd(op.whitened_matrix(), compute_uv=False)
        k = min(len(op.source_cells), len(op.target_cells))
        if sv[k - 1] >= min_relevance * sv[0]:
            break
    else:
        raise InvalidSizes("could not draw a well-conditioned DGP")

    h = CellFunction((t_axis, x_axis), h_vals)
    m_tx = np.einsum("ytzx->tx", mass)
    dmat = derivative_matrix(t_axis.values)
    mu = float((m_tx * (dmat @ h_vals)).sum())
    spec = NpivSpec(law=law, h=h, mu=mu)
    assert npiv_bridge_residual(law, h) < 1e-12
    return spec


# ---------------------------------------------------------------------------
# bridge solver
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BridgeSolution:
    h: CellFunction
    residual_norm: float
    solvable: bool
    kernel_dim: int
    h_vector: np.ndarray = field(repr=False, default=None)


def solve_bridge(
    op: CondExpOperator,
    b: CellFunction,
    weight: Optional[np.ndarray] = None,
    rel_tol: float = 1e-10,
    solvable_tol: float = 1e-8,
) -> BridgeSolution:
    """Minimum-norm weighted least-squares solution of (K h) = b.

    ``weight`` multiplies the target marginal in the residual norm (pass
    conditional-variance inverses for optimal weighting). Unsolvable
    systems are reported, not raised: a nonzero residual is the model's
    refutable implication showing up.
    """
    b_vec = op.target_vector(b) if isinstance(b, CellFunction) else np.asarray(b, float)
    u = op.target_weights.copy()
    if weight is not None:
        u = u * np.asarray(weight, dtype=float)
    su = np.sqrt(u)
    ws = np.sqrt(op.source_weights)
    tilde = su[:, None] * op.matrix / ws[None, :]
    b_tilde = su * b_vec
    uu, sv, vt = np.linalg.svd(tilde, full_matrices=False)
    cutoff = rel_tol * (sv[0] if sv.size else 0.0)
    inv = np.where(sv > cutoff, 1.0 / np.where(sv > cutoff, sv, 1.0), 0.0)
    h_tilde = vt.T @ (inv * (uu.T @ b_tilde))
    h_vec = h_tilde / ws
    resid = float(np.linalg.norm(tilde @ h_tilde - b_tilde))
    b_norm = float(np.linalg.norm(b_tilde))
    rank = int((sv > cutoff).sum())
    kernel_dim = len(op.source_cells) - rank
    return BridgeSolution(
        h=op.source_function(h_vec),
        residual_norm=resid,
        solvable=resid <= solvable_tol * max(b_norm, 1e-300),
        kernel_dim=kernel_dim,
        h_vector=h_vec,
    )


def solve_bridge_lt(law: JointLaw, weight=None) -> tuple:
    """(operator, BridgeSolution) for the long-term observable moment."""
    op = build_operator(law, source=LT_SOURCE, target=LT_TARGET, indicator={"g": GROUP_OBS})
    y_axis = law.axis("y")
    g_pos = law.axis_pos("g")
    ind = np.zeros(len(law.axis("g")))
    ind[law.axis("g").index(GROUP_OBS)] = 1.0
    shape = [1] * law.mass.ndim
    shape[g_pos] = len(law.axis("g"))
    y = CellFunction((y_axis,), y_axis.values)
    f = CellFunction(law.axes, broadcast_to_law(y, law) * ind.reshape(shape) * np.ones_like(law.mass))
    b = cond_expectation(law, f, list(LT_TARGET))
    return op, solve_bridge(op, b, weight=weight)


def solve_bridge_nc(law: JointLaw, weight=None) -> tuple:
    """(operator, BridgeSolution) for the negative-control moment."""
    op = build_operator(law, source=NC_SOURCE, target=NC_TARGET)
    y_axis = law.axis("y")
    y = CellFunction((y_axis,), y_axis.values)
    f = CellFunction(law.axes, broadcast_to_law(y, law) * np.ones_like(law.mass))
    b = cond_expectation(law, f, list(NC_TARGET))
    return op, solve_bridge(op, b, weight=weight)


def solve_bridge_npiv(law: JointLaw, weight=None) -> tuple:
    """(operator, BridgeSolution) for the instrumented-regressor moment."""
    op = build_operator(law, source=NPIV_SOURCE, target=NPIV_TARGET)
    y_axis = law.axis("y")
    y = CellFunction((y_axis,), y_axis.values)
    f = CellFunction(law.axes, broadcast_to_law(y, law) * np.ones_like(law.mass))
    b = cond_expectation(law, f, list(NPIV_TARGET))
    return op, solve_bridge(op, b, weight=weight)
