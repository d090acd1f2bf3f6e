"""Evaluation report rendering: text summary and DET curve figure.

The figure backend is forced to Agg so report generation works headless;
matplotlib is only imported when a figure is actually rendered.
"""

from pathlib import Path

import numpy as np
from scipy.stats import norm

from .metrics import CostParams, DetCurve, actual_dcf, c_primary, eer, min_dcf
from .scores import ScoreSet

# probit-scale tick marks conventional for DET curves
_DET_TICKS = [0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.4]


def evaluation_report(scores: ScoreSet, params: CostParams) -> str:
    """Multi-line text report: counts, EER, per-prior and averaged costs."""
    labels = scores.require_labels()
    n_tar = int(labels.sum())
    n_non = int((~labels).sum())
    lines = [
        f"trials\t{len(scores)}\ttargets\t{n_tar}\tnontargets\t{n_non}",
        f"eer_pct\t{100.0 * eer(scores):.4f}",
    ]
    for p in params.effective_priors:
        lines.append(
            f"prior\t{p:g}\tmin_dcf\t{min_dcf(scores, p):.6f}\tact_dcf\t{actual_dcf(scores, p):.6f}"
        )
    lines.append(f"c_primary_min\t{c_primary(scores, params, 'min'):.6f}")
    lines.append(f"c_primary_act\t{c_primary(scores, params, 'actual'):.6f}")
    return "\n".join(lines) + "\n"


def write_det_points(curve: DetCurve, path) -> None:
    """Delimited DET operating points: threshold<TAB>pmiss<TAB>pfa."""
    with open(path, "w") as f:
        for threshold, p_miss, p_fa in curve:
            f.write(f"{threshold:.6f}\t{p_miss:.6f}\t{p_fa:.6f}\n")


def render_det_figure(curve: DetCurve, path, title: str = "") -> None:
    """Render the DET curve on probit-warped axes to an image file."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    # probit scale is undefined at exactly 0 and 1; clamp to the
    # resolution of the curve for display purposes only
    floor = 0.5 / max(len(curve), 2)
    p_miss = np.clip(curve.p_miss, floor, 1.0 - floor)
    p_fa = np.clip(curve.p_fa, floor, 1.0 - floor)

    fig, ax = plt.subplots(figsize=(5.0, 5.0))
    ax.plot(norm.ppf(p_fa), norm.ppf(p_miss), lw=1.5)
    lo, hi = norm.ppf(min(floor, _DET_TICKS[0])), norm.ppf(max(1.0 - floor, _DET_TICKS[-1]))
    ax.plot([lo, hi], [lo, hi], ls=":", color="gray", lw=0.8)
    ticks = [t for t in _DET_TICKS if floor <= t <= 1.0 - floor]
    if ticks:
        ax.set_xticks(norm.ppf(ticks))
        ax.set_xticklabels([f"{100 * t:g}" for t in ticks])
        ax.set_yticks(norm.ppf(ticks))
        ax.set_yticklabels([f"{100 * t:g}" for t in ticks])
    ax.set_xlabel("false alarm probability (%)")
    ax.set_ylabel("miss probability (%)")
    if title:
        ax.set_title(title)
    ax.grid(True, lw=0.3, alpha=0.6)
    fig.tight_layout()
    fig.savefig(Path(path), dpi=150)
    plt.close(fig)
