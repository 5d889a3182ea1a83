"""Reynolds averaging, wall scaling, and 1D energy spectra.

Velocity statistics are gathered on a fixed probe grid (wall-normal
stations x homogeneous-direction samples).  Time averaging over the
window is followed by averaging along the homogeneous direction, so the
ensemble at each wall-normal station is (n_samples x n_x) values.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

KAPPA = 0.41
C_LOG = 5.0
VISCOUS_SUBLAYER_YPLUS = 5.0
LOG_LAYER_YPLUS = 30.0


class StatsError(ValueError):
    pass


# ---------------------------------------------------------------------------
# profiles and running statistics


@dataclass
class Profile:
    """Wall-normal profile of one quantity."""

    y: np.ndarray
    y_plus: np.ndarray
    values: np.ndarray
    name: str = ""
    units: str = ""

    def __post_init__(self):
        self.y = np.asarray(self.y, float)
        self.y_plus = np.asarray(self.y_plus, float)
        self.values = np.asarray(self.values, float)
        if self.y.ndim != 1 or np.any(np.diff(self.y) <= 0.0):
            raise StatsError("profile stations must be strictly increasing")
        if len(self.y_plus) != len(self.y) or self.values.shape[0] != len(self.y):
            raise StatsError("profile arrays must share the station count")


@dataclass
class Spectrum:
    """1D energy spectrum at a wall-normal station."""

    k: np.ndarray
    E_hat: np.ndarray
    direction: str = "x"
    y_plus: float = 0.0


@dataclass
class RunningStats:
    """First/second velocity moments on a probe grid.

    `y` are the wall-normal stations, `x` the homogeneous-direction
    sample coordinates.  `add` accepts one velocity snapshot of shape
    (ny, nx, 2).
    """

    y: np.ndarray
    x: np.ndarray
    count: int = 0
    t_start: float = np.nan
    t_end: float = np.nan
    sum_u: np.ndarray = field(init=False)
    sum_uu: np.ndarray = field(init=False)

    def __post_init__(self):
        self.y = np.asarray(self.y, float)
        self.x = np.asarray(self.x, float)
        if np.any(np.diff(self.y) <= 0.0):
            raise StatsError("probe stations must be strictly increasing")
        ny, nx = len(self.y), len(self.x)
        self.sum_u = np.zeros((ny, nx, 2))
        self.sum_uu = np.zeros((ny, nx, 2, 2))

    @property
    def points(self) -> np.ndarray:
        """Probe coordinates, shape (ny*nx, 2), x fastest."""
        X, Y = np.meshgrid(self.x, self.y)
        return np.column_stack([X.ravel(), Y.ravel()])

    def add(self, u: np.ndarray, t: float = np.nan) -> None:
        u = np.asarray(u, float)
        expect = (len(self.y), len(self.x), 2)
        if u.shape != expect:
            raise StatsError(f"snapshot shape {u.shape}, expected {expect}")
        self.sum_u += u
        self.sum_uu += np.einsum("yxa,yxb->yxab", u, u)
        if self.count == 0:
            self.t_start = t
        self.t_end = t
        self.count += 1


def accumulate(stats: RunningStats, sampler, t: float = np.nan) -> None:
    """Evaluate `sampler(points) -> (n, 2)` on the probe grid and add."""
    vals = np.asarray(sampler(stats.points), float)
    stats.add(vals.reshape(len(stats.y), len(stats.x), 2), t)


@dataclass
class FlowStatistics:
    """Finalized moments: station-wise mean, Reynolds stresses, TKE."""

    y: np.ndarray
    mean: np.ndarray  # (ny, 2)
    rst: np.ndarray  # (ny, 2, 2)
    tke: np.ndarray  # (ny,)
    mean_grid: np.ndarray  # (ny, nx, 2) time-mean before x-averaging


def finalize(stats: RunningStats) -> FlowStatistics:
    """Collapse time and homogeneous direction into station statistics."""
    if stats.count < 2:
        raise StatsError("need at least 2 samples to finalize statistics")
    n = stats.count * len(stats.x)
    mean = stats.sum_u.sum(axis=1) / n  # (ny, 2)
    second = stats.sum_uu.sum(axis=1) / n  # (ny, 2, 2)
    rst = second - np.einsum("ya,yb->yab", mean, mean)
    tke = 0.5 * np.einsum("yaa->y", rst)
    mean_grid = stats.sum_u / stats.count
    return FlowStatistics(stats.y.copy(), mean, rst, tke, mean_grid)


# ---------------------------------------------------------------------------
# wall scaling


def wall_units(tau_w: float, rho: float, nu: float, delta: float):
    """(u_tau, l_plus, Re_tau) from the wall shear stress."""
    if tau_w < 0.0:
        raise StatsError(f"wall shear stress must be nonnegative, got {tau_w}")
    if rho <= 0.0 or nu <= 0.0 or delta <= 0.0:
        raise StatsError("rho, nu, delta must be positive")
    u_tau = np.sqrt(tau_w / rho)
    if u_tau == 0.0:
        return 0.0, np.inf, 0.0
    l_plus = nu / u_tau
    re_tau = u_tau * delta / nu
    return u_tau, l_plus, re_tau


def _wall_derivative(dy0, u0, dy1, u1):
    """One-sided derivative from a quadratic through the wall (no-slip)
    and the first two stations; exact for parabolic profiles."""
    # u(d) = a d + b d^2 with u(0) = 0  =>  a = du/dy at the wall
    den = dy0 * dy1 * (dy1 - dy0)
    return (u0 * dy1**2 - u1 * dy0**2) / den


def wall_shear(
    y: np.ndarray,
    u: np.ndarray,
    mu: float,
    height: float,
    nu: float | None = None,
    rho: float = 1.0,
) -> float:
    """Mean streamwise wall shear, both walls averaged.

    `y`/`u` are interior stations (walls at y=0 and y=height carry the
    no-slip value 0 and are not included).  Warns when the first station
    is too coarse to resolve the viscous sublayer.
    """
    y = np.asarray(y, float)
    u = np.asarray(u, float)
    if len(y) < 2:
        raise StatsError("need at least two stations for the wall derivative")
    if y[0] <= 0.0 or y[-1] >= height:
        raise StatsError("stations must lie strictly inside (0, height)")
    g_bot = _wall_derivative(y[0], u[0], y[1], u[1])
    g_top = _wall_derivative(height - y[-1], u[-1], height - y[-2], u[-2])
    tau = 0.5 * mu * (g_bot + g_top)
    tau = max(tau, 0.0)
    if nu is not None and tau > 0.0:
        u_tau = np.sqrt(tau / rho)
        dy_plus = min(y[0], height - y[-1]) * u_tau / nu
        if dy_plus > VISCOUS_SUBLAYER_YPLUS:
            warnings.warn(
                f"first station at Delta y+ = {dy_plus:.2f} is outside the "
                "viscous sublayer; wall shear may be inaccurate",
                stacklevel=2,
            )
    return tau


def law_of_wall(y_plus: np.ndarray) -> dict:
    """Reference u+ curves: viscous branch (y+ < 5, reported through the
    buffer region) and log branch (y+ > 30, reported down into the
    buffer region); NaN outside each branch's reporting range."""
    y_plus = np.asarray(y_plus, float)
    if np.any(y_plus <= 0.0):
        raise StatsError("y+ must be positive")
    viscous = np.where(y_plus <= LOG_LAYER_YPLUS, y_plus, np.nan)
    log = np.where(
        y_plus >= VISCOUS_SUBLAYER_YPLUS,
        np.log(y_plus) / KAPPA + C_LOG,
        np.nan,
    )
    return {"viscous": viscous, "log": log}


# ---------------------------------------------------------------------------
# spectra


def energy_spectrum_1d(
    samples: np.ndarray,
    L: float,
    direction: str = "x",
    y_plus: float = 0.0,
    x: np.ndarray | None = None,
) -> Spectrum:
    """Energy spectrum of fluctuation samples on a uniform periodic line.

    `samples` has shape (n,) or (n, ncomp); the mean of each component is
    removed.  The returned density satisfies
    sum(E_hat) * dk = (1/L) int 0.5 |u'|^2 dx  (trapezoid == exact for
    the periodic uniform grid), with dk = 2*pi/L.
    """
    samples = np.asarray(samples, float)
    if samples.ndim == 1:
        samples = samples[:, None]
    n = samples.shape[0]
    if n < 2:
        raise StatsError("need at least two samples for a spectrum")
    if x is not None:
        x = np.asarray(x, float)
        dx = np.diff(x)
        if len(x) != n or not np.allclose(dx, dx[0], rtol=1e-10, atol=1e-14):
            raise StatsError("spectrum sampling must be uniform")
    dk = 2.0 * np.pi / L
    nk = n // 2 + 1
    k = dk * np.arange(nk)
    E = np.zeros(nk)
    for comp in range(samples.shape[1]):
        f = samples[:, comp] - samples[:, comp].mean()
        fh = np.fft.rfft(f)
        mult = np.full(nk, 2.0)
        mult[0] = 1.0
        if n % 2 == 0:
            mult[-1] = 1.0
        E += 0.5 * mult * np.abs(fh) ** 2 / (n**2 * dk)
    return Spectrum(k=k, E_hat=E, direction=direction, y_plus=y_plus)


def spectrum_parseval_gap(spec: Spectrum, samples: np.ndarray) -> float:
    """Relative gap between the integrated spectrum and the line-averaged
    fluctuation kinetic energy of the samples."""
    samples = np.asarray(samples, float)
    if samples.ndim == 1:
        samples = samples[:, None]
    fluct = samples - samples.mean(axis=0, keepdims=True)
    ke = 0.5 * np.mean(np.sum(fluct**2, axis=1))
    dk = spec.k[1] - spec.k[0]
    total = np.sum(spec.E_hat) * dk
    return abs(total - ke) / max(ke, 1e-300)


def reference_curves(k: np.ndarray, eps: float, nu: float, C_K: float = 1.5):
    """Inertial-range overlays and the dissipative length scale."""
    if eps <= 0.0 or nu <= 0.0:
        raise StatsError("eps and nu must be positive")
    k = np.asarray(k, float)
    return {
        "kolmogorov": C_K * eps ** (2.0 / 3.0) * k ** (-5.0 / 3.0),
        "inverse": 1.0 / k,
        "eta": (nu**3 / eps) ** 0.25,
    }


def dns_cost(Re_b: float):
    """(points per direction, time steps, total cost) scaling estimates."""
    if Re_b <= 0.0:
        raise StatsError("Re_b must be positive")
    return Re_b**0.75, Re_b**0.5, Re_b**2.75


# ---------------------------------------------------------------------------
# CSV emission

PROFILE_COLUMNS = ("y", "y_plus", "u_plus", "uu", "vv", "uv", "k", "nut_ratio")
SPECTRUM_COLUMNS = ("k", "E_hat")


def write_profile_csv(path, columns: dict) -> None:
    """Write profile.csv with the fixed column schema ('.' decimal,
    comma separator, header row)."""
    missing = [c for c in PROFILE_COLUMNS if c not in columns]
    if missing:
        raise StatsError(f"profile columns missing: {missing}")
    arrays = [np.asarray(columns[c], float) for c in PROFILE_COLUMNS]
    n = len(arrays[0])
    if any(len(a) != n for a in arrays):
        raise StatsError("profile columns must have equal length")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PROFILE_COLUMNS)
        for i in range(n):
            w.writerow([repr(float(a[i])) for a in arrays])


def write_spectrum_csv(path, spec: Spectrum) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SPECTRUM_COLUMNS)
        for ki, ei in zip(spec.k, spec.E_hat):
            w.writerow([repr(float(ki)), repr(float(ei))])


def spectrum_filename(direction: str, y_plus: float) -> str:
    return f"spectrum_{direction}_yplus{int(round(y_plus))}.csv"
