"""SVG figure emission for the experiment commands.

Figures are additive: every quantity they show is also in the CSVs, which
are the machine-readable record.  The SVG hash salt and metadata date are
pinned so repeated runs emit identical files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "blind-lmmse"

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

_SAVE_KWARGS = {"format": "svg", "metadata": {"Date": None}}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)
    return path


def plot_demo(path, x_true, x_mean, y, x_hat) -> Path:
    fig, ax = plt.subplots(figsize=(7, 4))
    idx = range(len(x_true))
    ax.plot(idx, x_true, color="tab:blue", label="ground truth")
    ax.plot(idx, x_mean, color="tab:red", ls=":", label="prior mean")
    ax.plot(idx, y, color="tab:green", ls=":", alpha=0.7, label="observation")
    ax.plot(idx, x_hat, color="tab:orange", ls="--", label="reconstruction")
    ax.set_xlabel("sample index")
    ax.set_ylabel("value")
    ax.legend(loc="best", fontsize=8)
    ax.set_title("Blind LMMSE reconstruction of a held-out signal")
    fig.tight_layout()
    return _save(fig, path)


def plot_sweep_alpha(path, rows) -> Path:
    alphas = [r[0] for r in rows]
    lhs = [r[1] for r in rows]
    lhs_std = [r[2] for r in rows]
    rhs = [r[3] for r in rows]
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.errorbar(alphas, lhs, yerr=lhs_std, marker="o", color="tab:blue",
                capsize=3, label="measured error")
    ax.plot(alphas, rhs, marker="s", color="tab:orange", label="bound")
    ax.set_yscale("log")
    ax.set_xlabel("source-condition exponent")
    ax.set_ylabel("mean squared error")
    ax.legend(loc="best", fontsize=8)
    ax.set_title("Approximation bound across prior smoothness")
    fig.tight_layout()
    return _save(fig, path)


def plot_sweep_cv(path, rows) -> Path:
    sig = [r[0] for r in rows]
    lhs = [r[2] for r in rows]
    lhs_std = [r[3] for r in rows]
    rhs = [r[4] for r in rows]
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.errorbar(sig, lhs, yerr=lhs_std, marker="o", color="tab:blue",
                capsize=3, label="measured error")
    ax.plot(sig, rhs, marker="s", color="tab:orange", label="bound")
    ax.set_yscale("log")
    ax.set_xlabel("kernel width standard deviation")
    ax.set_ylabel("mean squared error")
    ax.legend(loc="best", fontsize=8)
    ax.set_title("Bound growth with operator variability")
    fig.tight_layout()
    return _save(fig, path)


def plot_sweep_n(path, summary_rows) -> Path:
    fig, ax = plt.subplots(figsize=(5.5, 4))
    colors = {"R1": "tab:blue", "R2": "tab:orange", "R3": "tab:green"}
    regimes = sorted({r[0] for r in summary_rows})
    for regime in regimes:
        rows = [r for r in summary_rows if r[0] == regime]
        ns = np.array([r[1] for r in rows], dtype=float)
        means = np.array([r[2] for r in rows])
        stds = np.array([r[3] for r in rows])
        slope = rows[0][5]
        color = colors.get(regime, None)
        ax.plot(ns, means, marker="o", color=color,
                label=f"{regime} (slope {slope:.2f})")
        ax.fill_between(ns, np.maximum(means - stds, 1e-300), means + stds,
                        color=color, alpha=0.2)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("training samples")
    ax.set_ylabel("distance to exact estimator")
    ax.legend(loc="best", fontsize=8)
    ax.set_title("Empirical estimator convergence")
    fig.tight_layout()
    return _save(fig, path)
