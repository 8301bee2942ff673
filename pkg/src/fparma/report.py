"""Figure rendering for the command line report paths.

Every experiment command writes its delimited output first and then, via
these helpers, a matching figure next to it. All rendering uses the Agg
backend so the package works headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "save_path_figure",
    "save_covariance_figure",
    "save_rates_figure",
    "save_decay_figure",
    "save_spectra_figure",
    "save_structure_figure",
]

_RC = {
    "figure.dpi": 120,
    "savefig.dpi": 150,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
}


def _save(fig, out_path):
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)


def save_path_figure(values, P, out_path, max_components=3):
    """Trajectory of the first few coefficients; seasons shaded."""
    values = np.asarray(values)
    n, d = values.shape
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(8, 3.2))
        ks = np.arange(1, n + 1)
        for i in range(min(d, max_components)):
            ax.plot(ks, values[:, i], lw=0.8, label=f"c_{i + 1}")
        for start in range(0, n, 2 * P):
            ax.axvspan(start + 0.5, min(start + P, n) + 0.5, color="0.85", alpha=0.4, lw=0)
        ax.set_xlabel("k")
        ax.set_ylabel("coefficient")
        ax.legend(loc="upper right", ncol=3)
        ax.set_title(f"simulated path (period {P}, first {min(d, max_components)} coefficients)")
        _save(fig, out_path)


def save_covariance_figure(flat_cov, P, d, out_path):
    """Heatmap of the stacked cycle covariance with block separators."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.6, 4.0))
        im = ax.imshow(flat_cov, cmap="RdBu_r", vmin=-np.abs(flat_cov).max(),
                       vmax=np.abs(flat_cov).max())
        for b in range(1, P):
            ax.axhline(b * d - 0.5, color="k", lw=0.5)
            ax.axvline(b * d - 0.5, color="k", lw=0.5)
        fig.colorbar(im, ax=ax, shrink=0.85)
        ax.set_title("stacked cycle covariance")
        ax.grid(False)
        _save(fig, out_path)


def save_rates_figure(rows, medians, out_path):
    """Per-seed errors (scatter) and medians (lines) on log-log axes.

    ``rows`` are (n, seed, err1, err2, err3) tuples; ``medians`` maps n
    to the three metric medians.
    """
    labels = ["max season-1 error", "max later-season error", "cycle operator error"]
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6.4, 4.2))
        ns = sorted(medians)
        for idx, (label, color) in enumerate(zip(labels, ["C0", "C1", "C2"])):
            pts_n = [r[0] for r in rows]
            pts_e = [r[2 + idx] for r in rows]
            ax.loglog(pts_n, pts_e, ".", color=color, alpha=0.18, markersize=3)
            med = [medians[n][idx] for n in ns]
            slope = np.polyfit(np.log(ns), np.log(med), 1)[0]
            ax.loglog(ns, med, "o-", color=color, label=f"{label} (slope {slope:.2f})")
        ax.set_xlabel("cycles n")
        ax.set_ylabel("HS error")
        ax.legend()
        ax.set_title("estimation error vs sample size")
        _save(fig, out_path)


def save_decay_figure(decay, out_path):
    """Moment distance against coupling depth with the fitted line."""
    m = np.array(decay.m_values, dtype=float)
    nu = np.array(decay.nu_hat)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5.6, 3.8))
        ax.semilogy(m, nu, "o", label=f"measured (tau={decay.tau})")
        fit = np.exp(decay.intercept + decay.slope * m)
        ax.semilogy(m, fit, "-",
                    label=f"fit slope {decay.slope:.3f}, R^2 {decay.r_squared:.3f}")
        ax.set_xlabel("coupling depth m (cycles)")
        ax.set_ylabel("nu(m)")
        ax.legend()
        ax.set_title("dependence decay")
        _save(fig, out_path)


def save_spectra_figure(gram_eigenvalues, out_path, marks=None):
    """Gram spectra per block size, with the damping level marked."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5.6, 3.8))
        for m, eigs in sorted(gram_eigenvalues.items()):
            idx = np.arange(1, len(eigs) + 1)
            ax.semilogy(idx, np.maximum(eigs, 1e-300), "o-", label=f"block size {m}")
            if marks and m in marks:
                ax.axhline(marks[m], color="0.4", lw=0.6, ls="--")
        ax.set_xlabel("eigenvalue index")
        ax.set_ylabel("Gram eigenvalue")
        ax.legend()
        ax.set_title("corner sub-block Gram spectra")
        _save(fig, out_path)


def save_structure_figure(built_flat, closed_flat, P, d, out_path):
    """Built and closed-form cycle operators side by side with their gap."""
    gap = built_flat - closed_flat
    vmax = max(np.abs(built_flat).max(), 1e-300)
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(1, 3, figsize=(10.5, 3.4))
        for ax, mat, title, v in (
            (axes[0], built_flat, "companion product", vmax),
            (axes[1], closed_flat, "closed form", vmax),
            (axes[2], gap, "difference", max(np.abs(gap).max(), 1e-300)),
        ):
            im = ax.imshow(mat, cmap="RdBu_r", vmin=-v, vmax=v)
            for b in range(1, P):
                ax.axhline(b * d - 0.5, color="k", lw=0.5)
                ax.axvline(b * d - 0.5, color="k", lw=0.5)
            ax.set_title(title)
            ax.grid(False)
            fig.colorbar(im, ax=ax, shrink=0.8)
        _save(fig, out_path)
