"""SVG line charts for the diagnostics and per-year reports (presentation only)."""
from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

plt.rcParams["svg.hashsalt"] = "ssta-forecast"


def _svg(fig) -> str:
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue()


def diagnostics_svg(years, annual_mean, horizon_curve) -> str:
    """Annual global mean (left) and persistence RMSE vs months back (right)."""
    fig, (left, right) = plt.subplots(1, 2, figsize=(10, 4))
    left.plot(years, annual_mean, marker=".")
    left.set_xlabel("year")
    left.set_ylabel("global mean temperature")
    left.set_title("Global average per year")
    n = range(1, len(horizon_curve) + 1)
    right.plot(list(n), horizon_curve, marker=".")
    right.set_xlabel("N (months back)")
    right.set_ylabel("RMSE")
    right.set_title("Persistence RMSE using N months back")
    fig.tight_layout()
    return _svg(fig)


def yearly_svg(table) -> str:
    """Per-year RMSE, one line per model variant."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for name, values in table.rmse.items():
        ax.plot(table.years, values, marker="o", label=name)
    ax.set_xlabel("year")
    ax.set_ylabel("RMSE")
    ax.legend()
    fig.tight_layout()
    return _svg(fig)
