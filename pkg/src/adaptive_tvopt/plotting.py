"""Static figures from trace tables."""

from __future__ import annotations

import re
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams.update(
    {
        "font.size": 9,
        "axes.grid": True,
        "grid.alpha": 0.3,
        "lines.linewidth": 1.1,
        "svg.hashsalt": "adaptive-tvopt",
        "legend.frameon": False,
    }
)


def _indexed(table, prefix):
    """{(agent, coord): column} for names like x_3_2."""
    pat = re.compile(rf"^{prefix}_(\d+)_(\d+)$")
    out = {}
    for name in table:
        mt = pat.match(name)
        if mt:
            out[(int(mt.group(1)), int(mt.group(2)))] = table[name]
    return out


def plot_trace(table: dict, out, title: str | None = None) -> Path:
    """Positions with the optimum overlaid, velocities, and error curves.

    ``table`` maps column names to arrays (see :mod:`trace_io`). The output
    format follows the file suffix; use .svg or .pdf for vector output.
    """
    t = table["t"]
    xs = _indexed(table, "x")
    vs = _indexed(table, "v")
    coords = sorted({k for _, k in xs})
    agents = sorted({i for i, _ in xs})
    n_rows = len(coords) + (len(coords) if vs else 0) + 1
    fig, axes = plt.subplots(n_rows, 1, figsize=(6.4, 1.9 * n_rows), sharex=True)
    axes = np.atleast_1d(axes)
    colors = plt.cm.viridis(np.linspace(0.0, 0.9, max(len(agents), 1)))

    row = 0
    for k in coords:
        ax = axes[row]
        for i, col in zip(agents, colors):
            ax.plot(t, xs[(i, k)], color=col, label=f"agent {i}")
        if f"xstar_{k}" in table:
            ax.plot(t, table[f"xstar_{k}"], "k--", lw=0.9, label="optimum")
        ax.set_ylabel(f"position {k}")
        row += 1
    axes[0].legend(loc="upper right", fontsize=7, ncol=min(len(agents) + 1, 6))
    if vs:
        for k in coords:
            ax = axes[row]
            for i, col in zip(agents, colors):
                ax.plot(t, vs[(i, k)], color=col)
            ax.set_ylabel(f"velocity {k}")
            row += 1

    ax = axes[row]
    for name, style in (("tracking_error", "-"), ("consensus_error", "--"), ("estimator_error", ":")):
        vals = table.get(name)
        if vals is None or not np.any(np.isfinite(vals)):
            continue
        ax.semilogy(t, np.maximum(vals, 1e-16), style, label=name.replace("_", " "))
    ax.set_ylabel("error")
    ax.legend(loc="upper right", fontsize=7)
    axes[-1].set_xlabel("t [s]")
    if title:
        fig.suptitle(title)
    fig.tight_layout()

    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, metadata={"Date": None} if out.suffix.lower() == ".svg" else None)
    plt.close(fig)
    return out
