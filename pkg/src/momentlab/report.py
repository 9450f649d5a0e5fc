"""Report rendering: estimate tables, figures, and atomic file output.

Tables follow the journal convention of standard errors in parentheses
under the estimate and test p-values in square brackets under the
statistic. Figures are rendered headlessly and written next to the
delimited output so a run leaves a self-contained directory.
"""

from __future__ import annotations

import json
import os
import tempfile
from typing import Dict, Optional

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .estimators import EstimateResult  # noqa: E402
from .inference import HausmanResult, MonteCarloSummary  # noqa: E402


def write_text(path, text: str) -> None:
    """Write atomically: temp file in the same directory, then rename."""
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_estimate_table(
    results: Dict[str, EstimateResult],
    hz: Optional[HausmanResult] = None,
    title: str = "Estimates",
) -> str:
    """Fixed-width table: estimate over (SE), then the test block.

    One column per method. The specification-test statistic spans the
    table with its p-value in square brackets beneath it.
    """
    names = list(results)
    width = max(12, max(len(n) for n in names) + 2)
    label_w = 14
    lines = [title, ""]
    lines.append(" " * label_w + "".join(f"{n:>{width}}" for n in names))
    est_row = f"{'estimate':<{label_w}}"
    se_row = " " * label_w
    for n in names:
        est_row += f"{results[n].estimate:>{width}.4f}"
        se_row += f"{'(%.4f)' % results[n].se:>{width}}"
    lines += [est_row, se_row]
    if hz is not None:
        lines.append("")
        lines.append(f"{'Hausman':<{label_w}}{hz.statistic:>{width}.4f}")
        lines.append(" " * label_w + f"{'[%.4f]' % hz.p_value:>{width}}")
        if hz.degenerate:
            lines.append(" " * label_w + f"{'(degenerate)':>{width}}")
    lines.append("")
    lines.append(f"n = {next(iter(results.values())).n}; standard errors in parentheses;")
    lines.append("p-values in square brackets.")
    return "\n".join(lines) + "\n"


def estimate_report_json(
    results: Dict[str, EstimateResult],
    hz: Optional[HausmanResult],
    config: dict,
) -> str:
    doc = {
        "config": config,
        "methods": {n: r.to_dict() for n, r in results.items()},
        "hausman": hz.to_dict() if hz is not None else None,
    }
    return json.dumps(doc, indent=2)


def fig_estimates(results: Dict[str, EstimateResult], path) -> None:
    """Point estimates with 95% bars, one marker per method."""
    names = list(results)
    xs = np.arange(len(names))
    est = np.array([results[n].estimate for n in names])
    half = 1.96 * np.array([results[n].se for n in names])
    fig, ax = plt.subplots(figsize=(1.6 + 1.2 * len(names), 3.2))
    ax.errorbar(xs, est, yerr=half, fmt="o", capsize=4)
    ax.set_xticks(xs)
    ax.set_xticklabels(names)
    ax.set_ylabel("estimate")
    ax.margins(x=0.25)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def fig_mc(summary: MonteCarloSummary, path) -> None:
    """Overlaid estimate histograms per method with the true value marked."""
    names = sorted(summary.methods)
    fig, ax = plt.subplots(figsize=(5.2, 3.4))
    for n in names:
        ests = [rec[n][0] for rec in summary.records]
        ax.hist(ests, bins=30, histtype="step", label=n)
    ax.axvline(summary.true_value, color="k", lw=0.8, ls="--")
    ax.set_xlabel("estimate")
    ax.set_ylabel("count")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def mc_report_json(summary: MonteCarloSummary, config: dict) -> str:
    doc = {"config": config}
    doc.update(summary.to_dict())
    return json.dumps(doc, indent=2)
