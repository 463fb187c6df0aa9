"""Render experiment result tables as figures next to the CSV output."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .harness import ResultTable

__all__ = ["render_table"]

_SCHEME_STYLE = {
    "bcd": ("optimized", "C0", "-"),
    "random_phase": ("random phase", "C1", "--"),
    "no_ris": ("no RIS", "C2", ":"),
}

_AXES = {
    "gain_vs_time": ("time slot", "channel gain [dB]", False),
    "rate_vs_elements": ("RIS elements", "achievable rate [bits/s/Hz]", False),
    "capacity_vs_time": ("time slot", "capacity [bits/s]", False),
    "ber_vs_position": ("AP y position [m]", "bit error rate", True),
    "outage_vs_time": ("time slot", "outage probability", True),
}


def _series(table: ResultTable, scheme: str):
    xs, ys, errs = [], [], []
    for row in table.rows:
        if row[1] != scheme:
            continue
        xs.append(row[0])
        ys.append(row[2])
        errs.append(row[3] if len(row) > 4 and isinstance(row[3], float) else 0.0)
    return np.asarray(xs, dtype=float), np.asarray(ys, dtype=float), np.asarray(errs)


def render_table(table: ResultTable, path: str) -> None:
    """Save a per-scheme comparison figure for one result table."""
    xlabel, ylabel, log_y = _AXES[table.experiment]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    schemes = []
    for row in table.rows:
        if row[1] not in schemes:
            schemes.append(row[1])
    floor = None
    for scheme in schemes:
        label, color, style = _SCHEME_STYLE.get(scheme, (scheme, "C3", "-"))
        x, y, err = _series(table, scheme)
        if log_y:
            # zero-probability estimates cannot sit on a log axis
            positive = y[y > 0]
            floor = min(positive.min(), floor or 1.0) if positive.size else (floor or 1e-12)
            y = np.where(y > 0, y, np.nan)
            ax.semilogy(x, y, style, color=color, label=label, linewidth=1.4)
        else:
            ax.plot(x, y, style, color=color, label=label, linewidth=1.4)
            if np.any(err > 0):
                ax.fill_between(x, y - 2 * err, y + 2 * err, color=color, alpha=0.2, linewidth=0)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, which="both", linestyle=":", linewidth=0.7)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
