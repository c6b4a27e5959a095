"""Figure rendering for campaign and calibration outputs.

Figures are written straight to files (SVG by default) next to the CSV
output; nothing is shown interactively.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def render_campaign_figure(records, path, title: str | None = None) -> Path:
    """Estimates vs reference with error bars, plus the sensitivity panel."""
    path = Path(path)
    d_ref = np.array([r.d_ref_um for r in records])
    d_ref_err = np.array([r.d_ref_err_um for r in records])
    d_hat = np.array([r.d_hat_um for r in records])
    d_sens = np.array([r.d_sens_um for r in records])
    d_set = np.array([r.d_set_um for r in records])
    qcrb = np.array([r.qcrb_um for r in records])
    di = np.array([r.di_crb_um for r in records])
    spade = np.array([r.spade_model_um for r in records])

    fig, (ax_est, ax_sens) = plt.subplots(1, 2, figsize=(11, 4.5))

    ax_est.errorbar(
        d_ref, d_hat, xerr=d_ref_err, yerr=d_sens,
        fmt="o", ms=4, color="tab:blue", ecolor="tab:blue", capsize=2,
        label="estimated",
    )
    if d_ref.size:
        line = np.linspace(min(d_ref.min(), 0), d_ref.max() * 1.05, 2)
        ax_est.plot(line, line, "k-", lw=1, label="unbiased")
        ax_est.fill_between(line, line - qcrb.mean(), line + qcrb.mean(),
                            color="tab:cyan", alpha=0.25, label="QCRB band")
    ax_est.set_xlabel("reference separation (um)")
    ax_est.set_ylabel("estimated separation (um)")
    ax_est.legend(fontsize=8)

    ax_sens.plot(d_set, d_sens, "o", ms=4, color="tab:blue", label="measured")
    ax_sens.plot(d_set, qcrb, "--", color="tab:cyan", label="QCRB")
    finite_di = np.isfinite(di)
    if finite_di.any():
        ax_sens.plot(d_set[finite_di], di[finite_di], "-", color="tab:red", label="ideal DI CRB")
    finite_sp = np.isfinite(spade)
    if finite_sp.any():
        ax_sens.plot(d_set[finite_sp], spade[finite_sp], "-", color="black",
                     label="noise model")
    ax_sens.set_xlabel("separation (um)")
    ax_sens.set_ylabel("sensitivity (um)")
    ax_sens.set_yscale("log")
    ax_sens.legend(fontsize=8)

    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def render_calibration_figure(scan, curve, path, title: str | None = None) -> Path:
    """Scan points with the fitted calibration polynomial overlaid."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(scan.positions, scan.normalized_powers, "o", ms=3, label="scan")
    dense = np.linspace(scan.positions[0], scan.positions[-1], 400)
    ax.plot(dense, curve(dense), "-", color="tab:cyan",
            label=f"degree-{curve.degree} fit")
    ax.set_xlabel("beam position (um)")
    ax.set_ylabel("normalized signal power")
    ax.legend(fontsize=8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def render_differential_figure(diff, path, title: str | None = None) -> Path:
    """Differential sweep: estimates vs reference with the fitted line."""
    path = Path(path)
    x = np.array([r.d_ref for r in diff.results])
    y = np.array([r.d_hat for r in diff.results])
    yerr = np.array([r.d_sensitivity for r in diff.results])
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(x, y, yerr=yerr, fmt="o", ms=4, capsize=2, label="estimated")
    dense = np.linspace(x.min(), x.max(), 2)
    ax.plot(dense, diff.slope * dense + diff.intercept, "-", color="tab:green",
            label=f"fit: slope {diff.slope:.4f}, R^2 {diff.r_squared:.4f}")
    ax.set_xlabel("reference separation (um)")
    ax.set_ylabel("estimated separation (um)")
    ax.legend(fontsize=8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path
