"""Command-line entry point.

Subcommands: simulate, diagnose, estimate, mc. Every report embeds the
resolved config and seed. Exit codes: 0 success, 2 config error, 3
degenerate model (empty or rank-deficient support where an operator is
required), 4 data error (malformed or mismatched dataset files).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import causal, inference, operators, report
from .dataset import Dataset, sample
from .errors import (
    ConfigInvalid,
    EmptyDataset,
    EmptyTarget,
    InvalidSizes,
    LabelMismatch,
    MomentLabError,
    UnknownAxis,
    ZeroMassEvent,
)
from .law import Axis, JointLaw

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DEGENERATE = 3
EXIT_DATA = 4

_DATA_ERRORS = (LabelMismatch, UnknownAxis, EmptyDataset)
_DEGENERATE_ERRORS = (EmptyTarget, ZeroMassEvent)


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as e:
        raise ConfigInvalid(f"cannot read config: {e}")
    except json.JSONDecodeError as e:
        raise ConfigInvalid(f"config is not valid JSON: {e}")
    if not isinstance(cfg, dict):
        raise ConfigInvalid("config must be a JSON object")
    if cfg.get("schema_version") != SCHEMA_VERSION:
        raise ConfigInvalid(
            f"config schema_version must be {SCHEMA_VERSION}, got {cfg.get('schema_version')!r}"
        )
    return cfg


def resolve_config(args) -> dict:
    cfg = load_config(args.config) if args.config else {"schema_version": SCHEMA_VERSION}
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if getattr(args, "replications", None) is not None:
        cfg["replications"] = args.replications
    if getattr(args, "rank_tol", None) is not None:
        cfg["rank_tol"] = args.rank_tol
    cfg.setdefault("seed", 0)
    cfg.setdefault("rank_tol", operators.DEFAULT_RANK_TOL)
    return cfg


def build_spec(cfg: dict):
    """(spec, model) from a config: model name plus generator kwargs."""
    model = cfg.get("model")
    gen = dict(cfg.get("gen", {}))
    seed = gen.pop("seed", cfg.get("seed", 0))
    try:
        if model == "lt":
            if gen.pop("preset", None) == "heteroskedastic":
                return causal.gen_long_term_heteroskedastic(**gen), model
            return causal.gen_long_term(seed=seed, **gen), model
        if model == "nc":
            return causal.gen_negative_control(seed=seed, **gen), model
        if model == "npiv":
            return causal.gen_npiv(seed=seed, **gen), model
        if model == "uc":
            rng = np.random.default_rng(seed)
            spec = causal.random_unconfounded_spec(rng, **gen)
            return causal.uc_observable_law(spec), model
    except (TypeError, InvalidSizes) as e:
        raise ConfigInvalid(f"bad generator parameters for model '{model}': {e}")
    raise ConfigInvalid(f"unknown model {model!r} (expected uc, nc, lt, or npiv)")


def _spec_law(spec) -> JointLaw:
    return spec if isinstance(spec, JointLaw) else spec.law


def _operator_for(spec, model):
    if model == "lt":
        op, _ = causal.solve_bridge_lt(_spec_law(spec))
    elif model == "nc":
        op, _ = causal.solve_bridge_nc(_spec_law(spec))
    elif model == "npiv":
        op, _ = causal.solve_bridge_npiv(_spec_law(spec))
    else:
        return None
    return op


def _out_path(args, name) -> str:
    out = getattr(args, "out", None) or "."
    os.makedirs(out, exist_ok=True)
    return os.path.join(out, name)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = resolve_config(args)
    spec, model = build_spec(cfg)
    law = _spec_law(spec)
    n = int(cfg.get("n", 1000))
    if n < 1:
        raise ConfigInvalid("n must be positive")
    data = sample(law, n, np.random.SeedSequence([int(cfg["seed"]), 0]))
    report.write_text(_out_path(args, "dataset.csv"), data.to_csv())

    true_value, bound = inference.analytic_truth(spec, model)
    sidecar = {
        "config": cfg,
        "model": model,
        "n": n,
        "true_value": true_value,
        "bound": bound,
        "law_table": law.to_table(),
    }
    if not isinstance(spec, JointLaw):
        sidecar["h"] = {
            "axes": [a.name for a in spec.h.axes],
            "values": spec.h.values.tolist(),
        }
        for name in ("mu1", "mu0"):
            if hasattr(spec, name):
                sidecar[name] = float(getattr(spec, name))
    op = _operator_for(spec, model)
    if op is not None:
        diag = operators.diagnose_identification(op, rel_tol=cfg["rank_tol"])
        sidecar["identification"] = json.loads(diag.to_json())
    report.write_text(_out_path(args, "truth.json"), json.dumps(sidecar, indent=2))
    print(f"wrote dataset.csv ({n} rows) and truth.json for model {model}")
    return EXIT_OK


def _triangle_demo() -> dict:
    """Tangent dimension of three models over a three-outcome simplex.

    At P = (0.4, 0.4, 0.2): the unconstrained simplex and a simplex with
    one inactive inequality are saturated (no testable restriction); one
    equality constraint drops the tangent dimension below full.
    """
    axis = Axis("outcome", ("a", "b", "c"))
    law = JointLaw((axis,), np.array([0.4, 0.4, 0.2]))
    eq = operators.MassConstraint(np.array([1.0, -1.0, 0.0]), 0.0, "eq")
    ge = operators.MassConstraint(np.array([-0.5, 1.0, 0.0]), 0.0, "ge")
    out = {}
    for name, cons in (("P1", []), ("P2", [ge]), ("P3", [eq])):
        t_dim, full, verdict = operators.tangent_dim_demo(cons, law)
        out[name] = {"tangent_dim": int(t_dim), "full_dim": int(full), "verdict": verdict}
    return out


def cmd_diagnose(args) -> int:
    cfg = resolve_config(args)
    doc = {"config": cfg}
    if args.demo_triangle:
        doc["triangle"] = _triangle_demo()
        for name, rec in doc["triangle"].items():
            print(f"{name}: tangent {rec['tangent_dim']}/{rec['full_dim']}  {rec['verdict']}")
    else:
        spec, model = build_spec(cfg)
        op = _operator_for(spec, model)
        if op is None:
            raise ConfigInvalid(f"model '{model}' has no bridge operator to diagnose")
        diag = operators.diagnose_identification(op, rel_tol=cfg["rank_tol"])
        doc["model"] = model
        doc["identification"] = json.loads(diag.to_json())
        print(f"{model}: rank {diag.rank}, adjoint kernel {diag.adjoint_kernel_dim}, {diag.verdict}")
    report.write_text(_out_path(args, "diagnose.json"), json.dumps(doc, indent=2))
    return EXIT_OK


def _load_dataset(path, law: JointLaw) -> Dataset:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigInvalid(f"cannot read dataset: {e}")
    try:
        return Dataset.from_csv(text, law.axes)
    except (*_DATA_ERRORS, ValueError, KeyError, IndexError) as e:
        raise LabelMismatch(f"dataset does not match model axes: {e}")


def cmd_estimate(args) -> int:
    cfg = resolve_config(args)
    spec, model = build_spec(cfg)
    data = _load_dataset(args.data, _spec_law(spec))
    runner = inference._RUNNERS[model]
    results = runner(data)
    pair = inference._HAUSMAN_PAIR[model]
    hz = inference.hausman(results[pair[0]], results[pair[1]]) if pair else None
    table = report.format_estimate_table(results, hz, title=f"Model {model}: estimates")
    report.write_text(_out_path(args, "estimate.txt"), table)
    report.write_text(
        _out_path(args, "estimate.json"),
        report.estimate_report_json(results, hz, cfg),
    )
    report.fig_estimates(results, _out_path(args, "estimate.png"))
    print(table, end="")
    return EXIT_OK


def cmd_mc(args) -> int:
    cfg = resolve_config(args)
    spec, model = build_spec(cfg)
    n = int(cfg.get("n", 1000))
    reps = int(cfg.get("replications", 100))
    summary = inference.monte_carlo(
        spec, model, n=n, replications=reps, master_seed=int(cfg["seed"])
    )
    report.write_text(_out_path(args, "mc_summary.json"), report.mc_report_json(summary, cfg))
    summary.records_to_csv(_out_path(args, "mc_records.csv"))
    report.fig_mc(summary, _out_path(args, "mc_estimates.png"))
    for name in sorted(summary.methods):
        m = summary.methods[name]
        print(f"{name}: bias {m.bias:+.4f}  n*var {m.n_variance:.4f}  "
              f"bound ratio {m.bound_ratio:.3f}  coverage {m.coverage:.3f}")
    if summary.hausman_rejection_rate is not None:
        print(f"Hausman rejection at {summary.level:.0%}: {summary.hausman_rejection_rate:.3f} "
              f"(degenerate rate {summary.hausman_degenerate_rate:.3f})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing and dispatch
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="momentlab",
        description="Finite-support efficiency toolkit: simulate, diagnose, estimate, mc.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--seed", type=int, help="override config seed")
        sp.add_argument("--out", help="output directory (default: current)")
        sp.add_argument("--rank-tol", type=float, dest="rank_tol",
                        help="relative rank tolerance for identification diagnostics")

    sp = sub.add_parser("simulate", help="draw a dataset and write its ground truth sidecar")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("diagnose", help="identification report for a model config")
    common(sp)
    sp.add_argument("--demo-triangle", action="store_true", dest="demo_triangle",
                    help="run the three-outcome simplex tangent-space demo")
    sp.set_defaults(func=cmd_diagnose)

    sp = sub.add_parser("estimate", help="estimate from a dataset and render the report table")
    common(sp)
    sp.add_argument("--data", required=True, help="dataset CSV produced by simulate")
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("mc", help="Monte Carlo summary for a model config")
    common(sp)
    sp.add_argument("--replications", type=int, help="override config replications")
    sp.set_defaults(func=cmd_mc)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigInvalid as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except _DEGENERATE_ERRORS as e:
        print(f"degenerate model: {e}", file=sys.stderr)
        return EXIT_DEGENERATE
    except _DATA_ERRORS as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except MomentLabError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DEGENERATE


if __name__ == "__main__":
    sys.exit(main())
