"""Figure builders: wall-units velocity profile and energy spectrum."""

from __future__ import annotations

import warnings

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

KAPPA = 0.41
LOG_LAW_B = 5.0
LOG_LAYER = (30.0, 300.0)


def log_law(y_plus: np.ndarray) -> np.ndarray:
    return np.log(y_plus) / KAPPA + LOG_LAW_B


def max_log_law_deviation(y_plus, u_plus, window=LOG_LAYER) -> float:
    """Largest |u+ - log law| over the log-layer window (NaN if no samples)."""
    y_plus = np.asarray(y_plus, float)
    u_plus = np.asarray(u_plus, float)
    mask = (y_plus >= window[0]) & (y_plus <= window[1])
    if not np.any(mask):
        return float("nan")
    return float(np.max(np.abs(u_plus[mask] - log_law(y_plus[mask]))))


def plot_profile(profile, out_path, ref=None) -> float:
    """Semilog-x u+(y+) with the sublayer and log-law overlays.

    Returns the max deviation from the log law over the log layer."""
    yp = profile["y_plus"]
    up = profile["u_plus"]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.semilogx(yp, up, "-o", ms=3, label="computed")
    grid = np.geomspace(max(yp.min(), 0.1), max(yp.max(), 1.0), 200)
    ax.semilogx(grid, grid, "--", color="gray", label=r"$u^+=y^+$")
    log_grid = grid[grid >= 5.0]
    ax.semilogx(
        log_grid,
        log_law(log_grid),
        ":",
        color="black",
        label=rf"$({1 / KAPPA:.2f})\,\ln y^+ + {LOG_LAW_B:g}$",
    )
    if ref is not None:
        ax.semilogx(ref["y_plus"], ref["u_plus"], "s", ms=3, mfc="none", label="reference")
    ax.set_xlabel(r"$y^+$")
    ax.set_ylabel(r"$u^+$")
    ax.set_ylim(bottom=0.0)
    ax.legend(loc="upper left", fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return max_log_law_deviation(yp, up)


def fit_slope(k, E, k_range=None) -> float:
    """Least-squares slope of log E vs log k over the declared k-range."""
    k = np.asarray(k, float)
    E = np.asarray(E, float)
    mask = E > 0.0
    if k_range is not None:
        mask &= (k >= k_range[0]) & (k <= k_range[1])
    if np.count_nonzero(mask) < 2:
        return float("nan")
    slope, _ = np.polyfit(np.log(k[mask]), np.log(E[mask]), 1)
    return float(slope)


def plot_spectrum(spectrum, out_path, k_range=None) -> float:
    """Log-log E(k) with k^-5/3 and k^-1 reference slopes anchored at the
    low-k end.  Returns the fitted slope (NaN for an all-zero spectrum)."""
    k = spectrum["k"]
    E = spectrum["E_hat"]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    pos = E > 0.0
    if not np.any(pos):
        warnings.warn("spectrum is identically zero; emitting an empty plot")
        slope = float("nan")
    else:
        ax.loglog(k[pos], E[pos], "-o", ms=3, label="computed")
        k0, E0 = k[pos][0], E[pos][0]
        ax.loglog(k, E0 * (k / k0) ** (-5.0 / 3.0), ":", color="black", label=r"$k^{-5/3}$")
        ax.loglog(k, E0 * (k / k0) ** (-1.0), ":", color="gray", label=r"$k^{-1}$")
        ax.legend(loc="lower left", fontsize=8)
        slope = fit_slope(k, E, k_range)
    ax.set_xlabel(r"$k$")
    ax.set_ylabel(r"$\hat{E}(k)$")
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return slope
