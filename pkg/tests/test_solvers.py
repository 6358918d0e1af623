"""Reference solvers: analytic decay/dispersion oracles, conservation
bookkeeping, convergence order, and dataset determinism."""

import hashlib

import numpy as np
import pytest

from specproj.errors import ContractError, NumericsError
from specproj.grids import RealField, grid_2d
from specproj.metrics import divergence_loss
from specproj.rng import substream
from specproj.solvers import (
    KolmogorovConfig,
    KseConfig,
    KseIntegrator,
    SweConfig,
    gaussian_random_vorticity,
    generate_dataset,
    load_dataset,
    read_manifest,
    solve_kolmogorov,
    solve_kse,
    solve_swe_flood,
    tilted_dem,
    vorticity_to_velocity,
)
from specproj.solvers.kse import sample_config


class TestKse:
    def test_strong_dissipation_decays_monotonically(self):
        cfg = KseConfig(n=64, length=32.0, dt=0.2, nu=100.0, warmup=0, steps=40,
                        substeps=4, seed=1)
        traj = solve_kse(cfg)
        u = traj.data[0]
        means = u.mean(axis=1)
        energy = ((u - means[:, None]) ** 2).sum(axis=1)
        assert np.all(np.diff(energy) < 0)

    def test_spatial_mean_conserved(self):
        cfg = KseConfig(steps=400, warmup=10, seed=2)
        traj = solve_kse(cfg)
        means = traj.data[0].mean(axis=1)
        assert np.max(np.abs(means - means[0])) < 1e-8

    def test_linear_dispersion_relation(self):
        cfg = KseConfig(n=64, length=32.0, dt=0.2, nu=1.0, warmup=0, steps=6,
                        substeps=4, seed=0)
        x = np.arange(cfg.n) * (cfg.length / cfg.n)
        u0 = 1e-3 * np.sin(2 * np.pi * x / cfg.length)
        traj = solve_kse(cfg, u0=u0, nonlinear=False)
        k1 = 2 * np.pi / cfg.length
        growth = np.exp((k1**2 - cfg.nu * k1**4) * cfg.dt)
        amps = np.max(np.abs(traj.data[0]), axis=1)
        for i in range(len(amps) - 1):
            assert amps[i + 1] / amps[i] == pytest.approx(growth, rel=1e-6)

    def test_dealiasing_zeroes_top_third(self):
        cfg = KseConfig(n=48, warmup=0, steps=1, seed=3)
        stepper = KseIntegrator(cfg)
        rng = np.random.default_rng(0)
        uhat = np.fft.rfft(rng.standard_normal(cfg.n))
        nl = stepper.nonlinear_term(uhat)
        assert np.all(nl[cfg.n // 3 + 1 :] == 0.0)

    def test_blowup_detected(self):
        cfg = KseConfig(n=32, length=64.0, dt=5.0, nu=1e-6, warmup=0, steps=50,
                        substeps=1, seed=4)
        x = np.arange(cfg.n) * (cfg.length / cfg.n)
        with pytest.raises(NumericsError):
            solve_kse(cfg, u0=10.0 * np.sin(2 * np.pi * x / cfg.length))

    def test_second_order_in_time(self):
        # error against a quarter-dt reference shrinks ~4x when dt halves
        base = dict(n=64, length=32.0, dt=0.4, nu=1.0, warmup=0, steps=5, seed=5)
        rng = substream(5, "kse/init")
        from specproj.solvers import initial_condition

        u0 = initial_condition(KseConfig(substeps=1, **base), rng)
        coarse = solve_kse(KseConfig(substeps=1, **base), u0=u0).data[0, -1]
        medium = solve_kse(KseConfig(substeps=2, **base), u0=u0).data[0, -1]
        ref = solve_kse(KseConfig(substeps=8, **base), u0=u0).data[0, -1]
        e_coarse = np.max(np.abs(coarse - ref))
        e_medium = np.max(np.abs(medium - ref))
        assert e_coarse / e_medium > 3.0

    def test_sampled_config_ranges(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            cfg = sample_config(rng, vary_nu=True)
            assert 0.9 * 64 <= cfg.length <= 1.1 * 64
            assert 0.18 <= cfg.dt <= 0.22
            assert 0.5 <= cfg.nu <= 1.5


class TestKolmogorov:
    def test_single_mode_analytic_decay(self):
        cfg = KolmogorovConfig(n=64, nu=1e-3, dt=1e-4, frame_interval=1)
        x = np.arange(64) / 64
        xx, yy = np.meshgrid(x, x, indexing="ij")
        w0 = np.sin(2 * np.pi * (xx + yy))
        w_traj, u_traj = solve_kolmogorov(cfg, w0=w0, forcing=False, frames=101)
        lam = 8 * np.pi**2 * cfg.nu
        for i in range(101):
            expect = w0 * np.exp(-lam * i * cfg.dt)
            err = np.max(np.abs(w_traj.data[0, i] - expect)) / np.max(np.abs(expect))
            assert err < 1e-6

    def test_recovered_velocity_divergence_every_frame(self):
        cfg = KolmogorovConfig(n=32, dt=1e-3, frame_interval=10)
        w_traj, u_traj = solve_kolmogorov(cfg, frames=12)
        g = grid_2d(32, 32)
        for i in range(12):
            assert divergence_loss(RealField(g, u_traj.data[:, i])) < 1e-10

    def test_forcing_keeps_single_mode_family(self):
        cfg = KolmogorovConfig(n=32, dt=1e-3, frame_interval=10)
        w_traj, _ = solve_kolmogorov(cfg, w0=np.zeros((32, 32)), forcing=True, frames=6)
        wh = np.fft.fft2(w_traj.data[0, -1])
        mask = np.zeros((32, 32), bool)
        mask[1, 1] = mask[-1, -1] = True
        assert np.max(np.abs(wh[~mask])) < 1e-10 * np.max(np.abs(wh[mask]))

    def test_energy_decays_without_forcing(self):
        cfg = KolmogorovConfig(n=32, dt=1e-3, frame_interval=20)
        w0 = gaussian_random_vorticity(cfg, substream(3, "t"))
        _, u_traj = solve_kolmogorov(cfg, w0=w0, forcing=False, frames=10)
        ke = (u_traj.data**2).sum(axis=(0, 2, 3))
        assert np.all(np.diff(ke) <= 0)

    def test_cfl_violation_aborts(self):
        cfg = KolmogorovConfig(n=32, dt=0.5, frame_interval=1, init_scale=50.0)
        w0 = gaussian_random_vorticity(cfg, substream(4, "t"))
        with pytest.raises(NumericsError):
            solve_kolmogorov(cfg, w0=w0, frames=3)

    def test_diffusion_second_order(self):
        # nonlinear single-vortex problem integrated at dt, dt/2 vs dt/4 ref
        n = 32
        x = np.arange(n) / n
        xx, yy = np.meshgrid(x, x, indexing="ij")
        w0 = np.sin(2 * np.pi * xx) * np.cos(2 * np.pi * yy) + 0.3 * np.sin(2 * np.pi * yy)
        frames = 3

        def run(dt, interval):
            cfg = KolmogorovConfig(n=n, nu=1e-2, dt=dt, frame_interval=interval)
            w, _ = solve_kolmogorov(cfg, w0=w0, forcing=True, frames=frames)
            return w.data[0, -1]

        coarse = run(4e-3, 25)
        medium = run(2e-3, 50)
        ref = run(5e-4, 200)
        e1 = np.max(np.abs(coarse - ref))
        e2 = np.max(np.abs(medium - ref))
        assert e1 / e2 > 3.0


class TestVorticityToVelocity:
    def test_analytic_streamfunction(self):
        g = grid_2d(32, 32)
        x = np.arange(32) / 32
        w = RealField(g, np.broadcast_to(np.sin(2 * np.pi * x)[:, None], (32, 32))[None])
        u = vorticity_to_velocity(w)
        expect_uy = -np.cos(2 * np.pi * x) / (2 * np.pi)
        assert np.max(np.abs(u.data[0])) < 1e-12
        assert np.max(np.abs(u.data[1] - expect_uy[:, None])) < 1e-12

    def test_zero_vorticity(self):
        g = grid_2d(16, 16)
        u = vorticity_to_velocity(RealField(g, np.zeros((1, 16, 16))))
        assert np.max(np.abs(u.data)) == 0.0

    def test_curl_recovers_vorticity(self):
        g = grid_2d(32, 32)
        rng = np.random.default_rng(7)
        w = rng.standard_normal((32, 32))
        # strip the band the real-preserving derivative cannot represent
        wh = np.fft.fft2(w)
        wh[16, :] = 0.0
        wh[:, 16] = 0.0
        w = np.real(np.fft.ifft2(wh))
        u = vorticity_to_velocity(RealField(g, w[None]))
        k = 2 * np.pi * np.fft.fftfreq(32, d=1.0 / 32)
        k[16] = 0.0
        curl = np.real(
            np.fft.ifft2(
                1j * k[:, None] * np.fft.fft2(u.data[1])
                - 1j * k[None, :] * np.fft.fft2(u.data[0])
            )
        )
        assert np.max(np.abs(curl - (w - w.mean()))) < 1e-10
        assert divergence_loss(u) < 1e-12


class TestSwe:
    def test_exact_water_balance_with_rain(self):
        cfg = SweConfig(dem=np.zeros((16, 16)), rainfall=2e-5, duration=900.0,
                        record_interval=300.0, cell_size=10.0)
        traj = solve_swe_flood(cfg)
        vols = traj.data[0].sum(axis=(1, 2)) * cfg.cell_size**2
        area = 16 * 16 * cfg.cell_size**2
        for frame, t in enumerate((0.0, 300.0, 600.0, 900.0)):
            expect = 2e-5 * t * area
            assert vols[frame] == pytest.approx(expect, rel=1e-10, abs=1e-12)

    def test_still_water_is_stationary(self):
        cfg = SweConfig(dem=np.zeros((12, 12)), duration=600.0, record_interval=200.0)
        traj = solve_swe_flood(cfg, h0=0.37 * np.ones((12, 12)))
        assert np.max(np.abs(traj.data - 0.37)) == 0.0

    def test_pulse_moves_downslope(self):
        dem = tilted_dem(8, 32, slope=0.02)
        h0 = np.zeros((8, 32))
        h0[:, 4:8] = 0.5
        cfg = SweConfig(dem=dem, duration=80.0, record_interval=10.0)
        traj = solve_swe_flood(cfg, h0=h0)
        xcoord = np.arange(32)[None, :]
        centers = [
            float((traj.data[0, i] * xcoord).sum() / traj.data[0, i].sum())
            for i in range(traj.grid.shape[0])
        ]
        assert all(b > a for a, b in zip(centers, centers[1:]))

    def test_depth_never_negative(self):
        rng = np.random.default_rng(5)
        dem = tilted_dem(12, 12, slope=0.05) + 0.2 * rng.standard_normal((12, 12))
        h0 = np.where(rng.uniform(size=(12, 12)) > 0.7, 0.3, 0.0)
        cfg = SweConfig(dem=dem, duration=400.0, record_interval=50.0)
        traj = solve_swe_flood(cfg, h0=h0)
        assert np.all(traj.data >= 0.0)

    def test_first_order_in_time(self):
        dem = tilted_dem(6, 24, slope=0.01)
        h0 = np.zeros((6, 24))
        h0[:, 3:6] = 0.4

        def run(dt):
            cfg = SweConfig(dem=dem, duration=40.0, record_interval=40.0, fixed_dt=dt)
            return solve_swe_flood(cfg, h0=h0).data[0, -1]

        e1 = np.max(np.abs(run(0.8) - run(0.1)))
        e2 = np.max(np.abs(run(0.4) - run(0.1)))
        assert e1 / e2 > 1.5

    def test_dt_underflow_aborts(self):
        cfg = SweConfig(dem=np.zeros((8, 8)), duration=10.0, fixed_dt=1e-8)
        with pytest.raises(NumericsError):
            solve_swe_flood(cfg, h0=np.ones((8, 8)))


class TestDatasets:
    def _sha_all(self, d):
        return {
            f.name: hashlib.sha256(f.read_bytes()).hexdigest()
            for f in sorted(d.glob("*.fld"))
        }

    def test_seed_determinism(self, tmp_path):
        over = {"n": 64, "steps": 6, "warmup": 2, "substeps": 2}
        a = generate_dataset("kse", tmp_path / "a", 3, seed=7, overrides=over)
        b = generate_dataset("kse", tmp_path / "b", 3, seed=7, overrides=over)
        assert self._sha_all(a) == self._sha_all(b)
        c = generate_dataset("kse", tmp_path / "c", 3, seed=8, overrides=over)
        assert self._sha_all(a) != self._sha_all(c)

    def test_threaded_generation_identical(self, tmp_path):
        over = {"n": 32, "dt": 1e-3, "frame_interval": 5, "t_in": 1, "t_out": 3}
        a = generate_dataset("kolmogorov", tmp_path / "a", 4, seed=1, overrides=over)
        b = generate_dataset("kolmogorov", tmp_path / "b", 4, seed=1,
                             overrides=over, threads=3)
        assert self._sha_all(a) == self._sha_all(b)

    def test_kse_parameters_sampled_in_ranges_and_distinct(self, tmp_path):
        over = {"n": 32, "steps": 3, "warmup": 0, "substeps": 2}
        out = generate_dataset("kse", tmp_path / "d", 3, seed=9, overrides=over)
        _, stanzas = read_manifest(out / "manifest")
        ls = [float(s["L"]) for s in stanzas]
        dts = [float(s["dt"]) for s in stanzas]
        assert len(set(ls)) == 3 and len(set(dts)) == 3
        assert all(0.9 * 64 <= l <= 1.1 * 64 for l in ls)
        assert all(0.18 <= dt <= 0.22 for dt in dts)

    def test_manifest_round_trip(self, tmp_path):
        over = {"n": 32, "steps": 3, "warmup": 0, "substeps": 2}
        out = generate_dataset("kse", tmp_path / "m", 2, seed=3, overrides=over)
        header, stanzas, trajs = load_dataset(out)
        assert header["kind"] == "kse"
        assert int(header["count"]) == 2
        assert len(stanzas) == 2 and len(trajs) == 2
        assert trajs[0].shape == (3, 1, 32)

    def test_unknown_kind_rejected(self, tmp_path):
        with pytest.raises(ContractError):
            generate_dataset("weather", tmp_path / "x", 1, seed=0)

    def test_swe_dataset(self, tmp_path):
        over = {"ny": 10, "nx": 10, "duration": 100.0, "record_interval": 50.0}
        out = generate_dataset("swe", tmp_path / "s", 2, seed=4, overrides=over)
        header, stanzas, trajs = load_dataset(out)
        assert trajs[0].shape[1:] == (1, 10, 10)
        assert np.all(trajs[0] >= 0.0)
