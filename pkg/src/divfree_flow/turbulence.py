"""Eddy-viscosity closures and scale-separation machinery.

Contains:
    MODEL_TABLES         -- canonical constant/coefficient tables (strings)
    TurbModelParams      -- compiled per-model parameter access
    nut_kepsilon / nut_komega / nut_sst / sst_aux / sst_constants
    turb_sources         -- pointwise explicit source/sink evaluation
    production           -- Pi = 2 nu_T S:S from a velocity gradient
    smagorinsky_nut      -- Smagorinsky with Van Driest damping
    filter_transfer      -- 1D filter kernel transfer functions
    VmsProjector         -- L2 projection of S(u) onto a tensor space
    clip_floor           -- positivity floors for K and omega

All coefficient formulas are stored once in MODEL_TABLES as expression
strings in the variable `Re` (the turbulent Reynolds number K/(nu*w))
or as chi(a, b) blending pairs; the model functions compile and
evaluate those same strings, so tests can audit table-to-value without
retyping any formula.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from .fe_spaces import DGSymTensorSpace
from .quadrature import physical_cell_rule

K_FLOOR = 1e-10
OMEGA_FLOOR = 1e-8
EPS_FLOOR = 1e-10
CD_FLOOR = 1e-20
C_S_DEFAULT = 0.05
VAN_DRIEST_A = 30.0


class TurbulenceError(ValueError):
    """Raised for invalid turbulence-model requests."""


# canonical coefficient tables; `Re` is the turbulent Reynolds number,
# chi(a, b) marks an (F1-blended) constant pair chi = F1*a + (1-F1)*b
MODEL_TABLES = {
    "komega_1998": {
        "C_mu": "(0.024 + Re/6) / (1 + Re/6)",
        "beta_star": "0.09 * ((4/15 + (Re/8)**4) / (1 + (Re/8)**4))",
        "C_omega1": "0.52 * ((1/9 + Re/2.95) / (1 + Re/2.95))",
        "C_omega2": "0.072",
        "sigma_K": "2",
        "sigma_omega": "2",
    },
    "komega_peng": {
        "C_mu": "0.025 + (1 - exp(-(Re/10)**0.75))"
        " * (0.975 + 0.001 * exp(-(Re/200)**2)) / Re",
        "beta_star": "0.09 * (1 - 0.722 * exp(-(Re/10)**4))",
        "C_omega1": "0.42 * (1 + 4.3 * exp(-(Re/1.5)**0.5))",
        "C_omega2": "0.075",
        "sigma_K": "0.8",
        "sigma_omega": "1.35",
    },
    "komega_sst": {
        "a_1": "0.31",
        "beta_star": "0.09",
        "C_omega1": "chi(5/9, 0.44)",
        "C_omega2": "chi(0.075, 0.0828)",
        "C_omega3": "0.856",
        "sigma_K": "chi(0.85, 1)",
        "sigma_omega": "chi(0.5, 0.856)",
    },
    # standard published set; the source tables cover only the K-omega
    # family, so these are the conventional Launder-Spalding values
    "kepsilon": {
        "C_mu": "0.09",
        "C_eps1": "1.44",
        "C_eps2": "1.92",
        "sigma_K": "1",
        "sigma_eps": "1.3",
    },
}

RANS_MODELS = ("kepsilon", "komega_1998", "komega_peng", "komega_sst")

_EVAL_NS = {"exp": np.exp, "tanh": np.tanh, "sqrt": np.sqrt, "min": np.minimum, "max": np.maximum}


@functools.lru_cache(maxsize=None)
def _compiled(expr: str):
    return compile(expr, "<coefficient-table>", "eval")


def eval_table_entry(expr: str, Re=None, F1=None):
    """Evaluate a MODEL_TABLES expression string.

    `Re` (scalar or array) feeds Re*-dependent coefficients; `F1` feeds
    chi(a, b) = F1*a + (1-F1)*b blends.  chi entries with F1=None return
    the (a, b) pair.
    """
    ns = dict(_EVAL_NS)
    if Re is not None:
        ns["Re"] = Re
    if F1 is None:
        ns["chi"] = lambda a, b: (a, b)
    else:
        ns["chi"] = lambda a, b: F1 * a + (1.0 - F1) * b
    return eval(_compiled(expr), {"__builtins__": {}}, ns)  # noqa: S307 - trusted table


@dataclass
class TurbModelParams:
    """Access to one model's constants; Re*-dependent entries need Re."""

    model: str
    C_S: float = C_S_DEFAULT
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.model not in MODEL_TABLES:
            raise TurbulenceError(f"unknown turbulence model {self.model!r}")
        self.table = dict(MODEL_TABLES[self.model])
        self.table.update(self.overrides)

    def coeff(self, name: str, Re=None, F1=None):
        if name not in self.table:
            raise TurbulenceError(f"{self.model} has no coefficient {name!r}")
        return eval_table_entry(self.table[name], Re=Re, F1=F1)


# ---------------------------------------------------------------------------
# eddy viscosities


def nut_kepsilon(K, eps, params: TurbModelParams | None = None):
    """nu_T = C_mu K^2 / eps, eps floored, result clipped nonnegative."""
    p = params or TurbModelParams("kepsilon")
    K = np.maximum(np.asarray(K, float), 0.0)
    eps = np.maximum(np.asarray(eps, float), EPS_FLOOR)
    return np.maximum(p.coeff("C_mu") * K**2 / eps, 0.0)


def komega_coeffs(K, omega, nu, variant: str):
    """Re* = K/(nu omega) and the damped coefficient set of a variant."""
    if variant not in ("komega_1998", "komega_peng"):
        raise TurbulenceError(f"unknown K-omega variant {variant!r}")
    K = np.maximum(np.asarray(K, float), 0.0)
    omega = np.maximum(np.asarray(omega, float), OMEGA_FLOOR)
    # guard Re=0 for the Peng 1/Re expression (limit of the bracket is 0)
    Re = np.maximum(K / (nu * omega), 1e-30)
    p = TurbModelParams(variant)
    out = {
        name: np.broadcast_to(
            np.asarray(p.coeff(name, Re=Re), float), np.shape(Re)
        ).copy()
        for name in ("C_mu", "beta_star", "C_omega1", "C_omega2", "sigma_K", "sigma_omega")
    }
    out["Re_star"] = Re
    return out


def nut_komega(K, omega, nu, variant: str):
    """(nu_T, coeffs): damped nu_T = C_mu(Re*) K / omega."""
    coeffs = komega_coeffs(K, omega, nu, variant)
    K = np.maximum(np.asarray(K, float), 0.0)
    omega = np.maximum(np.asarray(omega, float), OMEGA_FLOOR)
    nut = np.maximum(coeffs["C_mu"] * K / omega, 0.0)
    return nut, coeffs


def sst_aux(K, omega, nu, d, gradK_dot_gradw, params: TurbModelParams | None = None):
    """(F1, F2, CD) blending quantities at wall distance d > 0."""
    p = params or TurbModelParams("komega_sst")
    K = np.maximum(np.asarray(K, float), 0.0)
    omega = np.maximum(np.asarray(omega, float), OMEGA_FLOOR)
    d = np.asarray(d, float)
    if np.any(d <= 0.0):
        raise TurbulenceError("wall distance must be positive")
    beta_star = p.coeff("beta_star")
    C_w3 = p.coeff("C_omega3")
    # C_omega2 is blended; the zeta_1 bound uses the K-omega branch value
    C_w2_1, _ = p.coeff("C_omega2")
    CD = np.maximum(2.0 * C_w3 / omega * np.asarray(gradK_dot_gradw, float), CD_FLOOR)
    arg1 = np.maximum(np.sqrt(K) / (beta_star * omega * d), 500.0 * nu / (omega * d**2))
    zeta1 = np.minimum(arg1, 4.0 * C_w2_1 * K / (CD * d**2)) ** 4
    zeta2 = np.maximum(2.0 * np.sqrt(K) / (beta_star * omega * d), 500.0 * nu / (omega * d**2)) ** 2
    return np.tanh(zeta1), np.tanh(zeta2), CD


def sst_constants(F1, params: TurbModelParams | None = None):
    """Blended SST constant set chi = F1 chi_1 + (1-F1) chi_2."""
    p = params or TurbModelParams("komega_sst")
    return {
        "a_1": p.coeff("a_1"),
        "beta_star": p.coeff("beta_star"),
        "C_omega1": p.coeff("C_omega1", F1=F1),
        "C_omega2": p.coeff("C_omega2", F1=F1),
        "C_omega3": p.coeff("C_omega3"),
        "sigma_K": p.coeff("sigma_K", F1=F1),
        "sigma_omega": p.coeff("sigma_omega", F1=F1),
    }


def nut_sst(K, omega, S, F2, params: TurbModelParams | None = None):
    """nu_T = a_1 K / max(a_1 omega, S F2) with S = sqrt(2 S:S)."""
    p = params or TurbModelParams("komega_sst")
    a1 = p.coeff("a_1")
    K = np.maximum(np.asarray(K, float), 0.0)
    omega = np.maximum(np.asarray(omega, float), OMEGA_FLOOR)
    denom = np.maximum(a1 * omega, np.asarray(S, float) * np.asarray(F2, float))
    return np.maximum(a1 * K / denom, 0.0)


# ---------------------------------------------------------------------------
# sources


def strain(grad_u):
    """Symmetric gradient from grad_u[..., i, j] = du_i/dx_j."""
    g = np.asarray(grad_u, float)
    return 0.5 * (g + np.swapaxes(g, -1, -2))


def strain_magnitude(grad_u):
    """S = sqrt(2 S:S)."""
    S = strain(grad_u)
    return np.sqrt(2.0 * np.einsum("...ij,...ij->...", S, S))


def production(nut, grad_u):
    """Pi = (nu_T/2)(grad u + grad u^T):(grad u + grad u^T) = 2 nu_T S:S."""
    S = strain(grad_u)
    return 2.0 * np.asarray(nut, float) * np.einsum("...ij,...ij->...", S, S)


def turb_sources(model, K, w2, nut, grad_u, nu, gradK=None, gradw=None, F1=None):
    """Pointwise explicit right-hand sides of the two scalar equations.

    `w2` is the second scalar (omega, or epsilon for kepsilon).  Returns
    a dict with keys 'K' and 'w2' (full signed RHS), plus 'Pi' and the
    diffusivities 'nu_eff_K', 'nu_eff_w2' for the implicit terms.
    """
    K = np.maximum(np.asarray(K, float), K_FLOOR)
    Pi = production(nut, grad_u)
    if model == "kepsilon":
        p = TurbModelParams(model)
        eps = np.maximum(np.asarray(w2, float), EPS_FLOOR)
        rhs_K = Pi - eps
        rhs_e = p.coeff("C_eps1") * Pi * eps / K - p.coeff("C_eps2") * eps**2 / K
        sig_K, sig_w = p.coeff("sigma_K"), p.coeff("sigma_eps")
    elif model in ("komega_1998", "komega_peng"):
        co = komega_coeffs(K, w2, nu, model)
        w = np.maximum(np.asarray(w2, float), OMEGA_FLOOR)
        rhs_K = Pi - co["beta_star"] * K * w
        rhs_e = co["C_omega1"] * (w / K) * Pi - co["C_omega2"] * w**2
        if model == "komega_peng":
            if gradK is None or gradw is None:
                raise TurbulenceError("Peng variant needs gradK and gradw")
            dot = np.einsum("...d,...d->...", np.asarray(gradK), np.asarray(gradw))
            rhs_e = rhs_e + 3.0 * nut / (4.0 * K) * dot
        sig_K, sig_w = co["sigma_K"], co["sigma_omega"]
    elif model == "komega_sst":
        if F1 is None:
            raise TurbulenceError("SST sources need F1")
        c = sst_constants(F1)
        w = np.maximum(np.asarray(w2, float), OMEGA_FLOOR)
        Pi = np.minimum(Pi, 0.9 * K * w)  # SST production limiter
        rhs_K = Pi - c["beta_star"] * K * w
        nut_s = np.maximum(np.asarray(nut, float), 1e-12)
        rhs_e = c["C_omega1"] / nut_s * Pi - c["C_omega2"] * w**2
        if gradK is not None and gradw is not None:
            dot = np.einsum("...d,...d->...", np.asarray(gradK), np.asarray(gradw))
            rhs_e = rhs_e + 2.0 * (1.0 - np.asarray(F1)) * c["C_omega3"] / w * dot
        sig_K, sig_w = c["sigma_K"], c["sigma_omega"]
    else:
        raise TurbulenceError(f"unknown turbulence model {model!r}")
    return {
        "K": rhs_K,
        "w2": rhs_e,
        "Pi": Pi,
        "nu_eff_K": nu + nut / sig_K,
        "nu_eff_w2": nu + nut / sig_w,
    }


# ---------------------------------------------------------------------------
# LES


def smagorinsky_nut(S_mag, delta, C_S=C_S_DEFAULT, y_plus=np.inf):
    """nu_SGS = (C_S(y+) Delta)^2 |S|, C_S(y+) = C_S (1 - e^{-y+/30})."""
    if np.any(np.asarray(delta) <= 0.0):
        raise TurbulenceError("filter width must be positive")
    damp = 1.0 - np.exp(-np.asarray(y_plus, float) / VAN_DRIEST_A)
    return (C_S * damp * np.asarray(delta, float)) ** 2 * np.asarray(S_mag, float)


def filter_width(mesh, c: int) -> float:
    """2D geometric-mean filter width sqrt(dx1 dx2) from the cell's
    bounding extents."""
    v = mesh.vertices[mesh.cells[c]]
    dx = v[:, 0].max() - v[:, 0].min()
    dy = v[:, 1].max() - v[:, 1].min()
    return math.sqrt(dx * dy)


def filter_transfer(kernel: str, k, delta):
    """1D transfer functions: gaussian e^{-k^2 D^2/24}, sharp spectral
    indicator(|k| <= pi/D), top-hat sin(kD/2)/(kD/2)."""
    if delta <= 0.0:
        raise TurbulenceError("filter width must be positive")
    k = np.asarray(k, float)
    if kernel == "gaussian":
        return np.exp(-(k**2) * delta**2 / 24.0)
    if kernel == "spectral":
        return (np.abs(k) <= np.pi / delta).astype(float)
    if kernel == "tophat":
        x = k * delta / 2.0
        return np.where(x == 0.0, 1.0, np.sin(np.where(x == 0.0, 1.0, x)) / np.where(x == 0.0, 1.0, x))
    raise TurbulenceError(f"unknown filter kernel {kernel!r}")


# ---------------------------------------------------------------------------
# VMS


class VmsProjector:
    """L2 projection of S(u_h) onto a discontinuous symmetric tensor
    space with an orthonormal (identity-mass) basis."""

    def __init__(self, vel_space, tensor_space: DGSymTensorSpace):
        if tensor_space.order >= vel_space.order:
            raise TurbulenceError(
                "projection space order must be below the velocity order"
            )
        self.vel = vel_space
        self.L = tensor_space
        self.mesh = vel_space.mesh
        deg = 2 * max(vel_space.order, tensor_space.order + 1)
        self._quad = [
            physical_cell_rule(self.mesh.vertices[self.mesh.cells[c]], deg)
            for c in range(self.mesh.n_cells)
        ]

    def strain_at(self, u_coef, c, pts):
        g = np.einsum(
            "qiab,i->qab", self.vel.tabulate_grad(c, pts), u_coef[self.vel.cell_dofs(c)]
        )
        return 0.5 * (g + np.swapaxes(g, 1, 2))

    def project(self, u_coef) -> np.ndarray:
        """g^h coefficients of Pi_L S(u_h)."""
        g = np.zeros(self.L.ndof)
        for c in range(self.mesh.n_cells):
            pts, w = self._quad[c]
            S = self.strain_at(u_coef, c, pts)
            phi = self.L.tabulate(c, pts)
            g[self.L.cell_dofs(c)] = np.einsum("qij,qlij,q->l", S, phi, w)
        return g

    def project_tensor(self, src: DGSymTensorSpace, coef) -> np.ndarray:
        """Pi_L applied to a tensor field given in another DG space."""
        g = np.zeros(self.L.ndof)
        for c in range(self.mesh.n_cells):
            pts, w = self._quad[c]
            vals = np.einsum("qlij,l->qij", src.tabulate(c, pts), coef[src.cell_dofs(c)])
            phi = self.L.tabulate(c, pts)
            g[self.L.cell_dofs(c)] = np.einsum("qij,qlij,q->l", vals, phi, w)
        return g

    def orthogonality_residual(self, u_coef, g_coef) -> float:
        """max_l |(g - S(u), phi_l)| over all basis tensors."""
        worst = 0.0
        for c in range(self.mesh.n_cells):
            pts, w = self._quad[c]
            S = self.strain_at(u_coef, c, pts)
            phi = self.L.tabulate(c, pts)
            gv = np.einsum("qlij,l->qij", phi, g_coef[self.L.cell_dofs(c)])
            r = np.einsum("qij,qlij,q->l", gv - S, phi, w)
            worst = max(worst, float(np.abs(r).max()))
        return worst

    def eta_T(self, u_coef, g_coef) -> np.ndarray:
        """Per-cell small-scale size ||g^h - S(u_h)||_{L2(T)}."""
        out = np.zeros(self.mesh.n_cells)
        for c in range(self.mesh.n_cells):
            pts, w = self._quad[c]
            S = self.strain_at(u_coef, c, pts)
            gv = np.einsum(
                "qlij,l->qij", self.L.tabulate(c, pts), g_coef[self.L.cell_dofs(c)]
            )
            d = gv - S
            out[c] = math.sqrt(float(np.einsum("qij,qij,q->", d, d, w)))
        return out


# ---------------------------------------------------------------------------
# floors


def clip_floor(K, w2, K_floor=K_FLOOR, w2_floor=OMEGA_FLOOR):
    """Componentwise positivity floors; idempotent."""
    return (
        np.maximum(np.asarray(K, float), K_floor),
        np.maximum(np.asarray(w2, float), w2_floor),
    )
