import numpy as np
import pytest

from divfree_flow.stats import (
    Profile,
    RunningStats,
    Spectrum,
    StatsError,
    accumulate,
    dns_cost,
    energy_spectrum_1d,
    finalize,
    law_of_wall,
    reference_curves,
    spectrum_filename,
    spectrum_parseval_gap,
    wall_shear,
    wall_units,
    write_profile_csv,
    write_spectrum_csv,
    PROFILE_COLUMNS,
)
from divfree_flow.turbulence import filter_transfer


def grid_stats(ny=4, nx=3, Ly=1.0, Lx=2.0):
    y = np.linspace(0.1, Ly - 0.1, ny)
    x = np.linspace(0.0, Lx, nx, endpoint=False)
    return RunningStats(y=y, x=x)


class TestRunningStats:
    def test_constant_signal_zero_fluctuations(self):
        st = grid_stats()
        snap = np.ones((4, 3, 2))
        snap[..., 1] = -2.0
        for t in range(5):
            st.add(snap, float(t))
        out = finalize(st)
        assert np.allclose(out.mean[:, 0], 1.0)
        assert np.allclose(out.mean[:, 1], -2.0)
        assert np.max(np.abs(out.rst)) <= 1e-12
        assert np.max(np.abs(out.tke)) <= 1e-12

    def test_alternating_two_point_variance(self):
        st = grid_stats()
        a = np.zeros((4, 3, 2))
        b = np.zeros((4, 3, 2))
        b[..., 0] = 2.0
        st.add(a)
        st.add(b)
        out = finalize(st)
        assert np.allclose(out.mean[:, 0], 1.0)
        assert np.allclose(out.rst[:, 0, 0], 1.0)
        assert np.allclose(out.tke, 0.5)

    def test_sinusoid_variance_closed_form(self):
        # u1(t) = A sin(2 pi t / T) sampled over full periods: var = A^2/2
        A, n = 1.7, 64
        st = grid_stats()
        for i in range(n):
            snap = np.zeros((4, 3, 2))
            snap[..., 0] = A * np.sin(2.0 * np.pi * i / n)
            st.add(snap)
        out = finalize(st)
        assert np.allclose(out.rst[:, 0, 0], A**2 / 2.0, rtol=1e-12)

    def test_mean_of_fluctuations_vanishes(self):
        rng = np.random.default_rng(3)
        st = grid_stats()
        snaps = rng.standard_normal((20, 4, 3, 2))
        for s in snaps:
            st.add(s)
        out = finalize(st)
        fluct = snaps.mean(axis=2) - out.mean[None, :, :]  # x-avg then center
        assert np.max(np.abs(fluct.mean(axis=0))) <= 1e-12

    def test_mean_is_linear(self):
        rng = np.random.default_rng(4)
        snaps_a = rng.standard_normal((6, 4, 3, 2))
        snaps_b = rng.standard_normal((6, 4, 3, 2))
        sa, sb, sc = grid_stats(), grid_stats(), grid_stats()
        for a, b in zip(snaps_a, snaps_b):
            sa.add(a)
            sb.add(b)
            sc.add(2.0 * a + 3.0 * b)
        ma, mb, mc = finalize(sa).mean, finalize(sb).mean, finalize(sc).mean
        assert np.allclose(mc, 2.0 * ma + 3.0 * mb, atol=1e-12)

    def test_rst_symmetric_positive_semidefinite(self):
        rng = np.random.default_rng(5)
        st = grid_stats()
        for _ in range(30):
            st.add(rng.standard_normal((4, 3, 2)))
        out = finalize(st)
        for yy in range(4):
            R = out.rst[yy]
            assert np.allclose(R, R.T)
            assert np.min(np.linalg.eigvalsh(R)) >= -1e-12

    def test_spatial_averaging_counts_x_variation(self):
        # snapshot constant in time but varying along x: fluctuation energy
        # comes from the homogeneous-direction ensemble
        st = grid_stats(nx=2)
        snap = np.zeros((4, 2, 2))
        snap[:, 0, 0] = 0.0
        snap[:, 1, 0] = 2.0
        st.add(snap)
        st.add(snap)
        out = finalize(st)
        assert np.allclose(out.mean[:, 0], 1.0)
        assert np.allclose(out.rst[:, 0, 0], 1.0)

    def test_accumulate_uses_probe_points(self):
        st = grid_stats()
        accumulate(st, lambda p: np.column_stack([p[:, 1], p[:, 0]]), 0.0)
        accumulate(st, lambda p: np.column_stack([p[:, 1], p[:, 0]]), 1.0)
        out = finalize(st)
        assert np.allclose(out.mean[:, 0], st.y)
        assert st.t_start == 0.0 and st.t_end == 1.0

    def test_finalize_needs_two_samples(self):
        st = grid_stats()
        st.add(np.zeros((4, 3, 2)))
        with pytest.raises(StatsError, match="2 samples"):
            finalize(st)

    def test_bad_snapshot_shape_rejected(self):
        st = grid_stats()
        with pytest.raises(StatsError, match="shape"):
            st.add(np.zeros((4, 3, 3)))

    def test_profile_requires_increasing_stations(self):
        with pytest.raises(StatsError, match="increasing"):
            Profile(y=[0.2, 0.1], y_plus=[1.0, 2.0], values=[0.0, 0.0])


class TestWallUnits:
    def test_channel_reference_values(self):
        nu, u_tau, delta = 7.5e-5, 0.05925, 0.5
        ut, lp, ret = wall_units(u_tau**2, 1.0, nu, delta)
        assert ut == pytest.approx(u_tau, rel=1e-12)
        assert lp == pytest.approx(1.2658e-3, rel=1e-4)
        assert ret == pytest.approx(395.0, rel=1e-12)

    def test_zero_stress(self):
        ut, lp, ret = wall_units(0.0, 1.0, 1e-3, 0.5)
        assert ut == 0.0 and ret == 0.0

    def test_density_scaling(self):
        ut, _, _ = wall_units(1.0, 4.0, 1e-3, 0.5)
        assert ut == pytest.approx(0.5)

    def test_negative_stress_rejected(self):
        with pytest.raises(StatsError, match="nonnegative"):
            wall_units(-1.0, 1.0, 1e-3, 0.5)


class TestWallShear:
    def test_linear_profile(self):
        gamma, mu = 3.0, 0.2
        y = np.array([0.1, 0.2, 0.3, 0.7, 0.8, 0.9])
        # antisymmetric shear about the centerline: u = gamma * dist-to-wall
        u = gamma * np.minimum(y, 1.0 - y)
        assert wall_shear(y, u, mu, 1.0) == pytest.approx(mu * gamma, rel=1e-12)

    def test_poiseuille_exact(self):
        G, nu, delta = 1.3, 0.05, 0.5
        y = np.linspace(0.05, 0.95, 19)
        u = G / (2.0 * nu) * y * (2.0 * delta - y)
        tau = wall_shear(y, u, nu, 2.0 * delta)  # mu = rho * nu, rho = 1
        assert tau == pytest.approx(G * delta, rel=1e-12)

    def test_zero_profile(self):
        y = np.linspace(0.1, 0.9, 9)
        assert wall_shear(y, np.zeros_like(y), 0.1, 1.0) == 0.0

    def test_coarse_first_station_warns(self):
        # first station far outside the viscous sublayer
        y = np.array([0.2, 0.4, 0.6, 0.8])
        u = np.minimum(y, 1.0 - y) * 10.0
        with pytest.warns(UserWarning, match="viscous sublayer"):
            wall_shear(y, u, 1e-4, 1.0, nu=1e-4)

    def test_stations_must_be_interior(self):
        with pytest.raises(StatsError, match="inside"):
            wall_shear(np.array([0.0, 0.5]), np.zeros(2), 0.1, 1.0)


class TestLawOfWall:
    def test_viscous_branch(self):
        out = law_of_wall(np.array([1.0, 5.0]))
        assert np.allclose(out["viscous"], [1.0, 5.0])

    def test_log_branch_value(self):
        out = law_of_wall(np.array([100.0]))
        assert out["log"][0] == pytest.approx(np.log(100.0) / 0.41 + 5.0)
        assert out["log"][0] == pytest.approx(16.232, abs=5e-3)

    def test_buffer_region_reports_both(self):
        out = law_of_wall(np.array([10.0]))
        assert np.isfinite(out["viscous"][0]) and np.isfinite(out["log"][0])

    def test_masking_outside_branches(self):
        out = law_of_wall(np.array([1.0, 100.0]))
        assert np.isnan(out["log"][0])
        assert np.isnan(out["viscous"][1])

    def test_positive_only(self):
        with pytest.raises(StatsError):
            law_of_wall(np.array([0.0]))


class TestSpectrum:
    def test_sine_concentration_and_total(self):
        A, L, n = 2.0, 3.0, 128
        x = np.linspace(0.0, L, n, endpoint=False)
        u = A * np.sin(2.0 * np.pi * x / L)
        spec = energy_spectrum_1d(u, L, x=x)
        dk = spec.k[1] - spec.k[0]
        k1 = np.argmin(np.abs(spec.k - 2.0 * np.pi / L))
        total = np.sum(spec.E_hat) * dk
        # line-averaged fluctuation kinetic energy of A*sin is A^2/4
        assert total == pytest.approx(A**2 / 4.0, rel=1e-12)
        assert spec.E_hat[k1] * dk / total >= 0.999
        assert spec.k[k1] == pytest.approx(2.0 * np.pi / L, rel=1e-12)

    def test_parseval_random_signal(self):
        rng = np.random.default_rng(7)
        u = rng.standard_normal((200, 2))
        spec = energy_spectrum_1d(u, 5.0)
        assert spectrum_parseval_gap(spec, u) <= 1e-10

    def test_parseval_odd_sample_count(self):
        rng = np.random.default_rng(8)
        u = rng.standard_normal(201)
        spec = energy_spectrum_1d(u, 1.0)
        assert spectrum_parseval_gap(spec, u) <= 1e-10

    def test_zero_signal(self):
        spec = energy_spectrum_1d(np.zeros(64), 1.0)
        assert np.max(np.abs(spec.E_hat)) == 0.0

    def test_mean_removed(self):
        spec = energy_spectrum_1d(7.0 * np.ones(64), 1.0)
        assert np.max(np.abs(spec.E_hat)) == 0.0

    @pytest.mark.parametrize("kernel", ["gaussian", "spectral", "tophat"])
    def test_filtered_spectrum_composition(self, kernel):
        # filtering in Fourier space multiplies the spectrum by |G(k)|^2
        rng = np.random.default_rng(11)
        n, L, delta = 256, 2.0 * np.pi, 0.5
        u = rng.standard_normal(n)
        u -= u.mean()
        base = energy_spectrum_1d(u, L)
        G = filter_transfer(kernel, base.k, delta)
        uh = np.fft.rfft(u)
        filt = np.fft.irfft(uh * G, n=n)
        spec = energy_spectrum_1d(filt, L)
        assert np.allclose(spec.E_hat, np.abs(G) ** 2 * base.E_hat, atol=1e-12)

    def test_nonuniform_sampling_rejected(self):
        x = np.array([0.0, 0.1, 0.3, 0.6])
        with pytest.raises(StatsError, match="uniform"):
            energy_spectrum_1d(np.zeros(4), 1.0, x=x)


class TestReferenceCurves:
    def test_eta_unit(self):
        assert reference_curves(np.array([1.0]), 1.0, 1.0)["eta"] == 1.0

    def test_kolmogorov_slope(self):
        k = np.array([1.0, 2.0, 4.0, 8.0])
        E = reference_curves(k, 2.0, 1e-3)["kolmogorov"]
        slopes = np.diff(np.log(E)) / np.diff(np.log(k))
        assert np.allclose(slopes, -5.0 / 3.0, atol=1e-12)

    def test_dissipation_scaling(self):
        k = np.array([3.0])
        e1 = reference_curves(k, 1.0, 1e-3)["kolmogorov"]
        e2 = reference_curves(k, 2.0, 1e-3)["kolmogorov"]
        assert e2[0] / e1[0] == pytest.approx(2.0 ** (2.0 / 3.0))

    def test_inverse_curve(self):
        k = np.array([2.0, 4.0])
        inv = reference_curves(k, 1.0, 1.0)["inverse"]
        assert np.allclose(inv, [0.5, 0.25])


class TestDnsCost:
    def test_unit(self):
        assert dns_cost(1.0) == (1.0, 1.0, 1.0)

    def test_powers_of_two(self):
        n1, nt, tot = dns_cost(16.0)
        assert (n1, nt, tot) == (8.0, 4.0, 2048.0)

    def test_channel_bulk(self):
        n1, _, _ = dns_cost(13350.0)
        assert n1 == pytest.approx(13350.0**0.75, rel=1e-12)
        assert n1 == pytest.approx(1.24e3, rel=1e-2)

    def test_positive_only(self):
        with pytest.raises(StatsError):
            dns_cost(0.0)


class TestCsvOutput:
    def test_profile_schema_and_roundtrip(self, tmp_path):
        n = 5
        cols = {c: np.linspace(0.1, 1.0, n) * (i + 1) for i, c in enumerate(PROFILE_COLUMNS)}
        path = tmp_path / "profile.csv"
        write_profile_csv(path, cols)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == ",".join(PROFILE_COLUMNS)
        data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
        for i, c in enumerate(PROFILE_COLUMNS):
            assert np.allclose(data[:, i], cols[c], rtol=0, atol=0)

    def test_profile_missing_column_rejected(self, tmp_path):
        with pytest.raises(StatsError, match="missing"):
            write_profile_csv(tmp_path / "p.csv", {"y": [1.0]})

    def test_spectrum_roundtrip(self, tmp_path):
        spec = Spectrum(k=np.array([0.0, 1.0]), E_hat=np.array([0.0, 0.25]))
        path = tmp_path / spectrum_filename("x", 5.2)
        write_spectrum_csv(path, spec)
        assert path.name == "spectrum_x_yplus5.csv"
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "k,E_hat"
        assert [float(v) for v in lines[2].split(",")] == [1.0, 0.25]

    def test_deterministic_bytes(self, tmp_path):
        cols = {c: np.linspace(0.0, 1.0, 4) for c in PROFILE_COLUMNS}
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_profile_csv(p1, cols)
        write_profile_csv(p2, cols)
        assert p1.read_bytes() == p2.read_bytes()
