"""End-to-end acceptance suite.

Each numbered test class drives the public entry points (`build_config`
+ `run_case` and the emitted CSV/JSON artifacts) exactly as a user
would, and checks the headline physics targets: the divergence-free
contrast between the two discretizations, convergence rates, analytic
channel solutions, discrete energy decay, the wall-resolved RANS
channel at Re_tau = 395 for both discretizations, the turbulence-model
constant tables, LES/VMS structural properties, and the statistics
pipeline.  The plotting companion package is exercised last and is
optional: those tests skip when it is not installed, and nothing here
imports it at module scope.
"""

import csv
import pathlib

import numpy as np
import pytest

from divfree_flow.channel_app import (
    L_T_FACTOR,
    T_INT,
    WALL_OMEGA,
    rans_initial_scalars,
    run_case,
)
from divfree_flow.config import build_config
from divfree_flow.fe_spaces import BDMSpace, DGSymTensorSpace, interpolate
from divfree_flow.mesh import GradingSpec, build_channel_mesh
from divfree_flow.stats import (
    KAPPA,
    RunningStats,
    energy_spectrum_1d,
    finalize,
    law_of_wall,
    spectrum_parseval_gap,
)
from divfree_flow.turbulence import (
    C_S_DEFAULT,
    MODEL_TABLES,
    VmsProjector,
    eval_table_entry,
    filter_transfer,
    smagorinsky_nut,
    sst_constants,
)

U_TAU_TARGET = 0.05925


def _run(tmp_path_factory, case, **overrides):
    out = tmp_path_factory.mktemp(f"acc_{case}_{overrides.get('disc', 'hdg')}")
    cfg = build_config({"case": case, "out": str(out), **overrides})
    return run_case(cfg), out


def _read_profile(outdir):
    with open(outdir / "profile.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {k: np.array([float(r[k]) for r in rows]) for k in rows[0]}


@pytest.fixture(scope="session")
def stokes_th(tmp_path_factory):
    return _run(tmp_path_factory, "stokes_mms", disc="taylor_hood")


@pytest.fixture(scope="session")
def stokes_hdg(tmp_path_factory):
    return _run(tmp_path_factory, "stokes_mms", disc="hdiv_hdg")


@pytest.fixture(scope="session")
def poiseuille(tmp_path_factory):
    return _run(tmp_path_factory, "poiseuille")


@pytest.fixture(scope="session")
def taylor_green(tmp_path_factory):
    return _run(tmp_path_factory, "taylor_green")


@pytest.fixture(scope="session")
def rans_hdg(tmp_path_factory):
    return _run(tmp_path_factory, "rans_channel", disc="hdiv_hdg")


@pytest.fixture(scope="session")
def rans_th(tmp_path_factory):
    return _run(tmp_path_factory, "rans_channel", disc="taylor_hood")


@pytest.fixture(scope="session")
def mini_les(tmp_path_factory):
    return _run(tmp_path_factory, "mini_les")


@pytest.fixture(scope="session")
def mini_vms(tmp_path_factory):
    return _run(tmp_path_factory, "mini_vms")


# ---------------------------------------------------------------------------
# 1. exact divergence-free contrast


class TestDivergenceContrast:
    def test_hdg_divergence_free_all_cases(
        self, stokes_hdg, poiseuille, taylor_green, rans_hdg, mini_les, mini_vms
    ):
        for row in stokes_hdg[0]["refinements"]:
            assert row["div_rel"] <= 1e-10
        for report, _ in (poiseuille, taylor_green, rans_hdg, mini_les, mini_vms):
            assert report["div_rel"] <= 1e-10

    def test_taylor_hood_not_divergence_free(self, stokes_th):
        # identical coarse Stokes problem: discretely divergence-free only
        assert stokes_th[0]["refinements"][0]["div_rel"] >= 1e-4


# ---------------------------------------------------------------------------
# 2. Stokes convergence rates


class TestStokesConvergence:
    def test_taylor_hood_combined_rate(self, stokes_th):
        rates = [
            r["rate_combined"]
            for r in stokes_th[0]["refinements"]
            if r["rate_combined"] is not None
        ]
        assert rates, "need at least two refinements"
        assert rates[-1] == pytest.approx(2.0, abs=0.2)

    def test_hdg_velocity_l2_rate(self, stokes_hdg):
        report, _ = stokes_hdg
        k = report["order"]
        rates = [
            r["rate_u_L2"]
            for r in report["refinements"]
            if r["rate_u_L2"] is not None
        ]
        assert rates[-1] >= k


# ---------------------------------------------------------------------------
# 3. Poiseuille exactness


class TestPoiseuille:
    def test_profile_matches_parabola(self, poiseuille):
        assert poiseuille[0]["max_profile_error"] <= 1e-8

    def test_converged_force_identity(self, poiseuille):
        # G = 3 nu U_b / delta^2 for plane Poiseuille flow
        assert poiseuille[0]["force_rel_gap"] <= 1e-6


# ---------------------------------------------------------------------------
# 4. unforced Taylor-Green energy decay


class TestTaylorGreen:
    def test_energy_monotone_every_step(self, taylor_green):
        report, _ = taylor_green
        assert report["energy_monotone"]
        assert report["max_energy_increase"] <= 1e-12

    def test_energy_tracks_viscous_decay(self, taylor_green):
        # E(t) = E(0) exp(-4 nu t) for the analytic vortex
        assert taylor_green[0]["energy_rel_gap"] <= 0.01


# ---------------------------------------------------------------------------
# 5. RANS channel at Re_tau = 395 (both discretizations)


def _check_rans(report, outdir):
    assert report["measured_ub"] == pytest.approx(1.0, rel=0.02)
    assert report["u_tau"] == pytest.approx(U_TAU_TARGET, rel=0.05)
    prof = _read_profile(outdir)
    yp, up = prof["y_plus"], prof["u_plus"]
    visc = (yp >= 1.0) & (yp <= 5.0)
    assert np.any(visc)
    assert np.all(np.abs(up[visc] - yp[visc]) <= 0.05 * yp[visc])
    log = (yp >= 30.0) & (yp <= 300.0)
    assert np.any(log)
    ref = np.log(yp[log]) / KAPPA + 5.0
    assert np.all(np.abs(up[log] - ref) <= 0.10 * ref)


class TestRansChannel:
    def test_hdg(self, rans_hdg):
        _check_rans(*rans_hdg)

    def test_taylor_hood(self, rans_th):
        _check_rans(*rans_th)

    def test_discretizations_agree(self, rans_hdg, rans_th):
        assert rans_hdg[0]["u_tau"] == pytest.approx(rans_th[0]["u_tau"], rel=0.05)


# ---------------------------------------------------------------------------
# 6. model-constant audit (tables + initial/boundary data)


class TestModelConstants:
    def test_initial_and_boundary_data(self):
        K0, w0 = rans_initial_scalars(0.5)
        assert K0 == 1.5 * T_INT**2
        assert w0 == pytest.approx(np.sqrt(K0) / (L_T_FACTOR * 0.5), rel=1e-14)
        assert T_INT == 0.05
        assert WALL_OMEGA == 1.0e5
        assert C_S_DEFAULT == 0.05

    def test_sst_table(self):
        t = MODEL_TABLES["komega_sst"]
        assert eval_table_entry(t["a_1"]) == 0.31
        assert eval_table_entry(t["beta_star"]) == 0.09
        assert eval_table_entry(t["C_omega3"]) == 0.856
        near, far = sst_constants(1.0), sst_constants(0.0)
        assert near["C_omega1"] == pytest.approx(5.0 / 9.0)
        assert far["C_omega1"] == pytest.approx(0.44)
        assert near["C_omega2"] == pytest.approx(0.075)
        assert far["C_omega2"] == pytest.approx(0.0828)
        assert near["sigma_K"] == pytest.approx(0.85)
        assert far["sigma_K"] == pytest.approx(1.0)
        assert near["sigma_omega"] == pytest.approx(0.5)
        assert far["sigma_omega"] == pytest.approx(0.856)

    def test_komega_1998_table(self):
        t = MODEL_TABLES["komega_1998"]
        # high-Re limits and fixed entries
        assert eval_table_entry(t["C_mu"], Re=1e12) == pytest.approx(1.0)
        assert eval_table_entry(t["beta_star"], Re=1e12) == pytest.approx(0.09)
        assert eval_table_entry(t["C_omega1"], Re=1e12) == pytest.approx(0.52)
        assert eval_table_entry(t["C_omega2"]) == 0.072
        assert eval_table_entry(t["sigma_K"]) == 2.0
        assert eval_table_entry(t["sigma_omega"]) == 2.0

    def test_komega_peng_table(self):
        t = MODEL_TABLES["komega_peng"]
        assert eval_table_entry(t["C_omega2"]) == 0.075
        assert eval_table_entry(t["sigma_K"]) == 0.8
        assert eval_table_entry(t["sigma_omega"]) == 1.35
        assert eval_table_entry(t["beta_star"], Re=1e9) == pytest.approx(0.09)


# ---------------------------------------------------------------------------
# 7. VMS / LES structural properties + mini runs


class TestVmsLes:
    def test_projection_orthogonality(self):
        m = build_channel_mesh(1.0, 1.0, nx=2, grading=GradingSpec(2))
        vel = BDMSpace(m, 2)
        proj = VmsProjector(vel, DGSymTensorSpace(m, 1))
        u = interpolate(
            vel, lambda p: np.column_stack([np.sin(p[:, 1]), np.zeros(len(p))])
        )
        g = proj.project(u)
        assert proj.orthogonality_residual(u, g) <= 1e-12

    def test_model_term_vanishes_on_resolved_strain(self):
        # projection space covering the full strain image: eta_T == 0
        m = build_channel_mesh(1.0, 1.0, nx=1, grading=GradingSpec(1))
        vel = BDMSpace(m, 2)
        proj = VmsProjector(vel, DGSymTensorSpace(m, 1))
        rng = np.random.default_rng(3)
        u = rng.standard_normal(vel.ndof)
        assert np.max(proj.eta_T(u, proj.project(u))) <= 1e-11

    def test_smagorinsky_limits_and_monotonicity(self):
        assert smagorinsky_nut(1.0, 0.1, y_plus=0.0) == 0.0
        assert smagorinsky_nut(2.0, 0.1, C_S=0.05, y_plus=np.inf) == pytest.approx(
            (0.05 * 0.1) ** 2 * 2.0, rel=1e-14
        )
        s = [smagorinsky_nut(x, 0.1) for x in (1.0, 2.0, 4.0)]
        assert s[0] < s[1] < s[2]
        d = [smagorinsky_nut(1.0, w) for w in (0.1, 0.2, 0.4)]
        assert d[0] < d[1] < d[2]

    @pytest.mark.parametrize("which", ["mini_les", "mini_vms"])
    def test_mini_runs_bounded(self, which, mini_les, mini_vms):
        report, _ = mini_les if which == "mini_les" else mini_vms
        assert report["steps"] == 500
        assert np.isfinite(report["energy_final"])
        assert report["energy_max"] <= 5.0 * report["energy_initial"]


# ---------------------------------------------------------------------------
# 8. statistics pipeline


class TestStatistics:
    def test_reynolds_operator_finite_sample(self):
        st = RunningStats(y=np.linspace(0.1, 0.9, 4), x=np.linspace(0.0, 1.0, 3))
        snap = np.ones((4, 3, 2))
        for t in range(4):
            st.add(snap, float(t))
        out = finalize(st)
        assert np.max(np.abs(out.mean - 1.0)) <= 1e-12
        assert np.max(np.abs(out.rst)) <= 1e-12

    def test_parseval_every_emitted_spectrum(
        self, taylor_green, rans_hdg, rans_th, mini_les, mini_vms
    ):
        for report, _ in (taylor_green, rans_hdg, rans_th, mini_les, mini_vms):
            for entry in report["spectra"]:
                assert entry["parseval_gap"] <= 1e-10

    def test_sine_energy_concentration(self):
        n, L, m = 128, 2.0 * np.pi, 5
        x = np.linspace(0.0, L, n, endpoint=False)
        spec = energy_spectrum_1d(np.sin(m * x), L)
        assert spec.E_hat[m] >= 0.999 * np.sum(spec.E_hat)
        assert spectrum_parseval_gap(spec, np.sin(m * x)) <= 1e-10

    @pytest.mark.parametrize("kernel", ["gaussian", "spectral", "tophat"])
    def test_filtered_spectrum_transfer(self, kernel):
        n, L, delta = 256, 2.0 * np.pi, 0.5
        rng = np.random.default_rng(8)
        u = rng.standard_normal(n)
        k_full = np.fft.rfftfreq(n, d=L / n) * 2.0 * np.pi
        G = filter_transfer(kernel, k_full, delta)
        u_f = np.fft.irfft(G * np.fft.rfft(u), n)
        E = energy_spectrum_1d(u, L).E_hat
        E_f = energy_spectrum_1d(u_f, L).E_hat
        assert np.max(np.abs(E_f - G**2 * E)) <= 1e-10 * max(np.max(E), 1.0)

    def test_law_of_wall_reference(self):
        out = law_of_wall(np.array([3.0, 100.0]))
        assert out["viscous"][0] == pytest.approx(3.0)
        assert out["log"][1] == pytest.approx(np.log(100.0) / KAPPA + 5.0)


# ---------------------------------------------------------------------------
# 9. plotting companion (optional install; skipped when absent)


class TestPlottingCompanion:
    def test_primary_package_never_imports_plotkit(self):
        src = pathlib.Path(__file__).resolve().parents[1] / "src" / "divfree_flow"
        for path in src.rglob("*.py"):
            assert "plotkit" not in path.read_text()

    def test_profile_figure_and_deviation(self, rans_hdg, tmp_path, capsys):
        pytest.importorskip("plotkit")
        from plotkit.cli import main as plot_main

        _, outdir = rans_hdg
        fig = tmp_path / "uplus.png"
        rc = plot_main(
            ["profile", "--in", str(outdir / "profile.csv"), "--out", str(fig)]
        )
        assert rc == 0
        assert fig.exists() and fig.stat().st_size > 0
        printed = capsys.readouterr().out
        assert "max log-law deviation" in printed
        assert float(printed.split(":")[1]) <= 0.10 * (np.log(300.0) / KAPPA + 5.0)

    def test_synthetic_spectrum_slope(self, tmp_path, capsys):
        pytest.importorskip("plotkit")
        from plotkit.cli import main as plot_main

        src = tmp_path / "spectrum.csv"
        k = np.geomspace(1.0, 64.0, 40)
        with open(src, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "E_hat"])
            w.writerows(zip(k, 1.6 * k ** (-5.0 / 3.0)))
        rc = plot_main(["spectrum", "--in", str(src), "--out", str(tmp_path / "s.png")])
        assert rc == 0
        slope = float(capsys.readouterr().out.split(":")[1])
        assert slope == pytest.approx(-1.667, abs=0.01)
