"""Specification testing and the Monte Carlo harness.

The Hausman statistic contrasts an identity-weighted estimator with the
variance-weighted one; under correct specification and overidentification
the two converge to the same limit and the statistic is chi-square with
one degree of freedom. The Monte Carlo engine replays the estimators over
seeded samples and reduces per-replication records into bias, variance,
bound-ratio, coverage, and rejection summaries.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np
from scipy import stats

from .causal import solve_bridge_npiv
from .dataset import sample
from .efficiency import (
    kernel_violation_scores,
    lt_eif,
    nc_eif,
    nc_rho,
    sigma2_vector,
    uc_ate_eif,
    weighted_beta,
)
from .errors import ConfigInvalid, EstimandMismatch
from .estimators import (
    EstimateResult,
    ate_uc_outcome_vs_weighting,
    lt_estimators,
    nc_estimators,
    npiv_asd,
    npiv_parts,
)
from .law import JointLaw, ScoreFunction, broadcast_to_law, perturb

GAP_REL_TOL = 1e-12
Z_95 = float(stats.norm.ppf(0.975))


@dataclass(frozen=True)
class HausmanResult:
    """Contrast of an inefficient and an efficient estimate of one target."""

    statistic: float
    dof: int
    p_value: float
    variance_gap: float         # asymptotic variance difference, inefficient minus efficient
    degenerate: bool

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "dof": self.dof,
            "p_value": self.p_value,
            "variance_gap": self.variance_gap,
            "degenerate": self.degenerate,
        }


def hausman(ineff: EstimateResult, eff: EstimateResult) -> HausmanResult:
    """Variance-gap specification test between two estimates.

    The gap of asymptotic variances estimates the variance of the contrast
    itself. A gap at or below the relative tolerance (including negative
    gaps from sampling noise) marks the degenerate regime where the model
    imposes no testable restriction; the statistic is then reported as 0
    with p-value 1.
    """
    if ineff.estimand != eff.estimand:
        raise EstimandMismatch(
            f"estimands differ: {ineff.estimand} vs {eff.estimand}"
        )
    if ineff.n != eff.n:
        raise EstimandMismatch("estimates come from samples of different sizes")
    gap = ineff.variance - eff.variance
    if gap <= GAP_REL_TOL * ineff.variance:
        return HausmanResult(
            statistic=0.0, dof=1, p_value=1.0, variance_gap=float(gap), degenerate=True
        )
    stat = ineff.n * (ineff.estimate - eff.estimate) ** 2 / gap
    p = float(stats.chi2.sf(stat, df=1))
    return HausmanResult(
        statistic=float(stat), dof=1, p_value=p, variance_gap=float(gap), degenerate=False
    )


# ---------------------------------------------------------------------------
# per-model runners
# ---------------------------------------------------------------------------


def _run_lt(data) -> Dict[str, EstimateResult]:
    res = lt_estimators(data)
    return {name: res[name]["mu"] for name in res}


def _run_nc(data) -> Dict[str, EstimateResult]:
    res = nc_estimators(data)
    return {name: res[name]["mu"] for name in res}


def _run_uc(data) -> Dict[str, EstimateResult]:
    res = ate_uc_outcome_vs_weighting(data)
    return {"PlugIn": res["mu"], "IPW": res["mu_ipw"]}


def _run_npiv(data) -> Dict[str, EstimateResult]:
    return {"IS": npiv_asd(data, "IS"), "ES": npiv_asd(data, "ES")}


_RUNNERS = {"lt": _run_lt, "nc": _run_nc, "uc": _run_uc, "npiv": _run_npiv}

# inefficient-vs-efficient pair used for the specification test
_HAUSMAN_PAIR = {
    "lt": ("PlugIn", "MinDist"),
    "nc": ("PlugIn", "OneStep"),
    "npiv": ("IS", "ES"),
    "uc": None,
}


def _npiv_bound(spec) -> float:
    law = spec.law
    op, _ = solve_bridge_npiv(law)
    rho = nc_rho(law, spec.h)
    s2 = sigma2_vector(law, op, rho)
    _, direct, delta = npiv_parts(law, spec.h, op)["mu"]
    beta = weighted_beta(op, delta, 1.0 / s2)
    psi = direct + broadcast_to_law(op.target_function(beta), law) * rho
    return float((psi * psi * law.mass).sum())


def analytic_truth(spec, model: str) -> tuple:
    """True estimand value and efficiency bound for the contrast.

    For the unconfounded benchmark ``spec`` may be the observable law
    itself; the other models carry their law and bridge in a spec object.
    """
    if model == "uc" and isinstance(spec, JointLaw):
        comp = uc_ate_eif(spec).component("mu")
        return comp.estimand, comp.bound
    if model == "lt":
        return spec.mu, lt_eif(spec.law).mu.bound
    if model == "nc":
        return spec.mu, nc_eif(spec.law).mu.bound
    if model == "uc":
        comp = uc_ate_eif(spec.law).component("mu")
        return comp.estimand, comp.bound
    if model == "npiv":
        return spec.mu, _npiv_bound(spec)
    raise ConfigInvalid(f"unknown model '{model}'")


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MethodSummary:
    bias: float
    variance: float             # variance of the estimates across replications
    n_variance: float
    bound_ratio: float
    coverage: float
    mean_se: float

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("bias", "variance", "n_variance", "bound_ratio", "coverage", "mean_se")}


@dataclass(frozen=True)
class MonteCarloSummary:
    model: str
    n: int
    replications: int
    master_seed: int
    true_value: float
    bound: float
    methods: Dict[str, MethodSummary]
    hausman_rejection_rate: Optional[float]
    hausman_degenerate_rate: Optional[float]
    level: float
    records: list = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "n": self.n,
            "replications": self.replications,
            "master_seed": self.master_seed,
            "true_value": self.true_value,
            "bound": self.bound,
            "methods": {k: v.to_dict() for k, v in self.methods.items()},
            "hausman_rejection_rate": self.hausman_rejection_rate,
            "hausman_degenerate_rate": self.hausman_degenerate_rate,
            "level": self.level,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def records_to_csv(self, path) -> None:
        names = sorted(self.methods)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            header = ["replication", "seed"]
            for m in names:
                header += [f"{m}_estimate", f"{m}_se"]
            w.writerow(header)
            for rec in self.records:
                row = [rec["replication"], rec["seed"]]
                for m in names:
                    row += [repr(rec[m][0]), repr(rec[m][1])]
                w.writerow(row)


def monte_carlo(
    spec,
    model: str,
    n: int,
    replications: int,
    master_seed: int = 0,
    level: float = 0.05,
    law: Optional[JointLaw] = None,
    true_value: Optional[float] = None,
    bound: Optional[float] = None,
) -> MonteCarloSummary:
    """Replay the model's estimators over seeded samples from the law.

    Replication r draws its sample with SeedSequence([master_seed, r]), so
    summaries are bit-identical across runs and independent replications
    can be recomputed in isolation. ``law`` overrides the sampling law
    (used by the power curve to sample off the model while keeping the
    spec's estimator wiring).
    """
    if model not in _RUNNERS:
        raise ConfigInvalid(f"unknown model '{model}'")
    if replications < 1:
        raise ConfigInvalid("need at least one replication")
    if n < 2:
        raise ConfigInvalid("need at least two observations")
    runner = _RUNNERS[model]
    if law is not None:
        sampling_law = law
    elif isinstance(spec, JointLaw):
        sampling_law = spec
    else:
        sampling_law = spec.law
    if true_value is None or bound is None:
        tv, bd = analytic_truth(spec, model)
        true_value = tv if true_value is None else true_value
        bound = bd if bound is None else bound

    pair = _HAUSMAN_PAIR[model]
    records = []
    per_method: Dict[str, list] = {}
    rejections = []
    degenerates = []
    for rep in range(replications):
        ss = np.random.SeedSequence([master_seed, rep])
        data = sample(sampling_law, n, ss)
        res = runner(data)
        rec = {"replication": rep, "seed": f"{master_seed}/{rep}"}
        for name, r in res.items():
            per_method.setdefault(name, []).append(r)
            rec[name] = (r.estimate, r.se)
        if pair is not None:
            hz = hausman(res[pair[0]], res[pair[1]])
            rejections.append(hz.p_value < level)
            degenerates.append(hz.degenerate)
        records.append(rec)

    methods = {}
    for name, results in per_method.items():
        ests = np.array([r.estimate for r in results])
        ses = np.array([r.se for r in results])
        var = float(ests.var(ddof=1)) if replications > 1 else 0.0
        cover = float(np.mean(np.abs(ests - true_value) <= Z_95 * ses))
        methods[name] = MethodSummary(
            bias=float(ests.mean() - true_value),
            variance=var,
            n_variance=n * var,
            bound_ratio=n * var / bound if bound > 0 else float("nan"),
            coverage=cover,
            mean_se=float(ses.mean()),
        )
    return MonteCarloSummary(
        model=model,
        n=n,
        replications=replications,
        master_seed=master_seed,
        true_value=float(true_value),
        bound=float(bound),
        methods=methods,
        hausman_rejection_rate=float(np.mean(rejections)) if pair else None,
        hausman_degenerate_rate=float(np.mean(degenerates)) if pair else None,
        level=level,
        records=records,
    )


# ---------------------------------------------------------------------------
# power curve
# ---------------------------------------------------------------------------


def violation_direction(spec, model: str):
    """Score moving the law off the bridge restriction, if any exists.

    The direction multiplies the bridge residual by an adjoint-kernel
    function of the conditioning cells, so every marginal the operator
    conditions on is preserved while the conditional moment acquires a
    component outside the operator's range. Just-identified models have no
    such direction and None is returned.
    """
    if model == "lt":
        e = lt_eif(spec.law, h=spec.h)
        op, rho = e.op, e.rho
    elif model == "nc":
        e = nc_eif(spec.law, h=spec.h)
        op, rho = e.op, e.rho
    elif model == "npiv":
        op, _ = solve_bridge_npiv(spec.law)
        rho = nc_rho(spec.law, spec.h)
    else:
        raise ConfigInvalid(f"no bridge restriction to violate in model '{model}'")
    scores = kernel_violation_scores(spec.law, op, rho)
    if not scores:
        return None
    # combine so that power does not hinge on one arbitrary basis vector;
    # sup-norm scaling keeps every path with |scale| < 1 inside the simplex
    g = sum(s.values for s in scores)
    norm = float(np.abs(np.where(spec.law.mass > 0, g, 0.0)).max())
    if norm == 0.0:
        return None
    g = np.where(spec.law.mass > 0, g, 0.0) / norm
    return ScoreFunction(spec.law, g - float((g * spec.law.mass).sum()))


@dataclass(frozen=True)
class PowerCurve:
    model: str
    n: int
    replications: int
    master_seed: int
    scales: tuple
    rejection: tuple
    degenerate: tuple
    level: float

    def to_dict(self) -> dict:
        return {k: getattr(self, k) if not isinstance(getattr(self, k), tuple)
                else list(getattr(self, k))
                for k in ("model", "n", "replications", "master_seed",
                          "scales", "rejection", "degenerate", "level")}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def power_curve(
    spec,
    model: str,
    scales: Sequence[float],
    n: int,
    replications: int,
    master_seed: int = 0,
    level: float = 0.05,
) -> PowerCurve:
    """Hausman rejection rate along a path leaving the model.

    Scale 0 reproduces the size of the test. On just-identified designs
    the violation direction is empty and every scale samples the original
    law, so the curve stays flat at the degenerate level.
    """
    g = violation_direction(spec, model)
    true_value, bound = analytic_truth(spec, model)
    rates = []
    degs = []
    for i, s in enumerate(scales):
        if g is None or s == 0.0:
            law_s = spec.law
        else:
            law_s = perturb(spec.law, g, float(s))
        mc = monte_carlo(
            spec, model, n, replications,
            master_seed=master_seed + 7919 * i, level=level,
            law=law_s, true_value=true_value, bound=bound,
        )
        rates.append(mc.hausman_rejection_rate)
        degs.append(mc.hausman_degenerate_rate)
    return PowerCurve(
        model=model, n=n, replications=replications, master_seed=master_seed,
        scales=tuple(float(s) for s in scales), rejection=tuple(rates),
        degenerate=tuple(degs), level=level,
    )
