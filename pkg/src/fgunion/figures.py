"""Figure rendering for the evaluation report path."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence


def render_eval_figures(out_dir: str | Path, metric: str, thresholds: Sequence[float],
                        rates: Sequence[float], per_image: Sequence[float]) -> list[Path]:
    """Render the success-rate curve and the per-image metric histogram.

    Returns the written file paths. matplotlib is imported here, with the Agg
    backend, so non-reporting commands never pay for it.
    """
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    fig, ax = plt.subplots(figsize=(5.0, 3.5))
    ax.plot(list(thresholds), list(rates), marker="o")
    ax.set_xlabel(f"{metric} threshold")
    ax.set_ylabel("success rate")
    ax.set_ylim(-0.02, 1.02)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    curve_path = out_dir / "corunion_curve.png"
    fig.savefig(curve_path, dpi=150)
    plt.close(fig)
    written.append(curve_path)

    fig, ax = plt.subplots(figsize=(5.0, 3.5))
    ax.hist(list(per_image), bins=20, range=(0.0, 1.0), edgecolor="black", alpha=0.8)
    ax.set_xlabel(f"per-image {metric}")
    ax.set_ylabel("images")
    fig.tight_layout()
    hist_path = out_dir / f"{metric}_histogram.png"
    fig.savefig(hist_path, dpi=150)
    plt.close(fig)
    written.append(hist_path)
    return written
