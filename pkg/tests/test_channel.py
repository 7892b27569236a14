import math

import numpy as np
import pytest
from scipy import stats

from discodet import channel
from discodet.channel import (DrisProfile, Geometry, LinkFading,
                              cascaded_mc, dbm_to_watts, gen_bob_signals,
                              gen_willie_statistics, los_steering,
                              path_loss_linear, sample_bob_position,
                              sample_dris_coeffs, sample_rician_g)
from discodet.config import DEFAULT_CONFIG
from discodet.statkit import SeedStream
from discodet.theory import alpha_bar, prop_variance


def small_geometry(grid_h=16, grid_v=16):
    return Geometry(alice=(0.0, 0.0, 5.0), willie=(0.0, 100.0, 0.0),
                    dris_center=(-1.5, 0.0, 5.0), bob_center=(0.0, 140.0, 0.0),
                    bob_inner=10.0, bob_outer=20.0, grid_h=grid_h, grid_v=grid_v)


class TestUnits:
    def test_dbm_to_watts(self):
        assert dbm_to_watts(0.0) == pytest.approx(1e-3)
        assert dbm_to_watts(30.0) == pytest.approx(1.0)
        assert dbm_to_watts(5.0) == pytest.approx(10 ** (-2.5))

    def test_path_loss_linear(self):
        assert path_loss_linear(channel.LOS_3GPP, 100.0) == pytest.approx(10 ** 7.96)
        assert path_loss_linear(channel.NLOS_3GPP, 100.0) == pytest.approx(10 ** 10.6)
        with pytest.raises(ValueError):
            path_loss_linear(channel.LOS_3GPP, 0.0)


class TestGeometry:
    def test_element_grid(self):
        geo = small_geometry()
        pos = geo.element_positions()
        assert pos.shape == (256, 3)
        np.testing.assert_allclose(pos.mean(axis=0), geo.dris_center, atol=1e-12)
        assert np.all(pos[:, 0] == geo.dris_center[0])   # planar panel
        # nearest-neighbor spacing equals the configured element spacing
        gaps = np.diff(np.unique(np.round(pos[:, 1], 9)))
        np.testing.assert_allclose(gaps, geo.element_spacing, atol=1e-9)

    def test_distance(self):
        geo = small_geometry()
        assert geo.distance(geo.alice, geo.dris_center) == pytest.approx(1.5)
        assert geo.distance(geo.dris_center, geo.willie) == pytest.approx(
            math.sqrt(1.5**2 + 100.0**2 + 5.0**2))

    def test_bad_annulus(self):
        with pytest.raises(ValueError):
            Geometry((0, 0, 0), (0, 1, 0), (0, 0, 1), (0, 2, 0),
                     bob_inner=5.0, bob_outer=4.0)


class TestDrisProfile:
    def test_validation(self):
        with pytest.raises(ValueError):
            DrisProfile((0.0, 1.0, 2.0), (1, 1, 1), (1 / 3, 1 / 3, 1 / 3))  # not 2^b
        with pytest.raises(ValueError):
            DrisProfile((0.0, 1.0), (1.0, 1.1), (0.5, 0.5))
        with pytest.raises(ValueError):
            DrisProfile((0.0, 1.0), (1.0, 1.0), (0.6, 0.6))

    def test_bits_and_table(self):
        prof = DrisProfile((0.0, math.pi), (0.5, 1.0), (0.25, 0.75))
        assert prof.bits == 1
        table = prof.coeff_table()
        np.testing.assert_allclose(np.abs(table), [0.5, 1.0])


class TestSampling:
    def test_bob_annulus(self):
        geo = small_geometry()
        gen = SeedStream(3).child("bob")
        pos = sample_bob_position(gen, geo, size=50_000)
        r = np.linalg.norm(pos[:, :2] - np.asarray(geo.bob_center[:2]), axis=1)
        assert np.all((r >= geo.bob_inner) & (r <= geo.bob_outer))
        # area-uniform: E[r^2] = (r1^2 + r2^2)/2
        assert np.mean(r**2) == pytest.approx((100 + 400) / 2, rel=0.01)
        assert np.all(pos[:, 2] == geo.bob_center[2])

    def test_los_steering_unit_modulus(self):
        vec = los_steering(small_geometry())
        np.testing.assert_allclose(np.abs(vec), 1.0, atol=1e-12)

    def test_rician_moments(self):
        geo = small_geometry(4, 4)
        gen = SeedStream(3).child("ric")
        g = sample_rician_g(gen, geo, kappa=4.0, size=40_000)
        # per-entry unit second moment; mean is the scaled steering vector
        np.testing.assert_allclose(np.mean(np.abs(g) ** 2, axis=0), 1.0, atol=0.02)
        expected_mean = math.sqrt(4 / 5) * los_steering(geo)
        np.testing.assert_allclose(g.mean(axis=0), expected_mean, atol=0.02)

    def test_rician_zero_kappa_is_rayleigh(self):
        geo = small_geometry(4, 4)
        g = sample_rician_g(SeedStream(3).child("ray"), geo, kappa=0.0, size=40_000)
        assert abs(g.mean()) < 0.02

    def test_dris_coeff_frequencies(self):
        prof = DrisProfile((0.1, 2.0), (0.8, 1.0), (0.3, 0.7))
        gen = SeedStream(3).child("coef")
        c = sample_dris_coeffs(gen, prof, 64, size=1000)
        assert c.shape == (1000, 64)
        table = prof.coeff_table()
        frac0 = np.mean(np.isclose(c, table[0]))
        assert np.all(np.isclose(c[:, :, None], table[None, None, :]).any(axis=2))
        assert frac0 == pytest.approx(0.3, abs=0.01)


class TestCascadedChannel:
    def test_gaussian_limit_variance(self):
        geo = small_geometry()           # 256 elements
        fad = LinkFading()
        prof = DEFAULT_CONFIG.profile()
        draws = cascaded_mc(SeedStream(4).child("mc"), geo, fad, prof, "willie", 40_000)
        loss_g = path_loss_linear(fad.alice_dris, geo.distance(geo.alice, geo.dris_center))
        loss_i = path_loss_linear(fad.dris_willie,
                                  geo.distance(geo.dris_center, geo.willie))
        var_th = prop_variance(256, alpha_bar(prof), loss_g, loss_i)
        var_mc = np.mean(np.abs(draws) ** 2)
        assert var_mc == pytest.approx(var_th, rel=0.05)
        # circular complex Gaussian: E|h|^4 / (E|h|^2)^2 = 2
        assert np.mean(np.abs(draws) ** 4) / var_mc**2 == pytest.approx(2.0, abs=0.15)
        assert abs(draws.mean()) < 6 * math.sqrt(var_th / draws.size)

    def test_zero_elements(self):
        geo = small_geometry(0, 0)
        draws = cascaded_mc(SeedStream(4).child("mc0"), geo, LinkFading(),
                            DEFAULT_CONFIG.profile(), "willie", 100)
        assert np.all(draws == 0)


class TestWillieStatistics:
    def test_h0_is_exact_gamma(self):
        scen = DEFAULT_CONFIG.scenario(5.0)
        batch = gen_willie_statistics(SeedStream(5).child("h0"), scen, "H0", 50_000, 5)
        assert np.all(batch.hidden_labels == 0)
        stat, p = stats.kstest(batch.statistics,
                               stats.gamma(a=5, scale=scen.fading.noise_w).cdf)
        assert p > 0.01

    def test_h1_no_surface_mean(self):
        scen = DEFAULT_CONFIG.scenario(5.0, n_elements=0)
        batch = gen_willie_statistics(SeedStream(5).child("h1z"), scen, "H1", 40_000, 5)
        assert np.all(batch.hidden_labels == 1)
        geo, fad = scen.geometry, scen.fading
        loss_d = path_loss_linear(fad.alice_willie, geo.distance(geo.alice, geo.willie))
        expected = 5 * (fad.noise_w + scen.p0_watts / loss_d)
        assert batch.statistics.mean() == pytest.approx(expected, rel=0.05)

    def test_h1_with_surface_mean(self):
        scen = DEFAULT_CONFIG.scenario(5.0, n_elements=256)
        batch = gen_willie_statistics(SeedStream(5).child("h1s"), scen, "H1", 20_000, 5)
        geo, fad = scen.geometry, scen.fading
        loss_d = path_loss_linear(fad.alice_willie, geo.distance(geo.alice, geo.willie))
        loss_g = path_loss_linear(fad.alice_dris, geo.distance(geo.alice, geo.dris_center))
        loss_i = path_loss_linear(fad.dris_willie,
                                  geo.distance(geo.dris_center, geo.willie))
        var_c = prop_variance(256, alpha_bar(scen.profile), loss_g, loss_i)
        expected = 5 * (fad.noise_w + scen.p0_watts * (1 / loss_d + var_c))
        assert batch.statistics.mean() == pytest.approx(expected, rel=0.1)

    def test_determinism(self):
        scen = DEFAULT_CONFIG.scenario(-7.0, n_elements=64)
        a = gen_willie_statistics(SeedStream(6).child("d"), scen, "H1", 500, 5)
        b = gen_willie_statistics(SeedStream(6).child("d"), scen, "H1", 500, 5)
        np.testing.assert_array_equal(a.statistics, b.statistics)

    def test_errors(self):
        scen = DEFAULT_CONFIG.scenario(5.0)
        gen = SeedStream(5).child("e")
        with pytest.raises(ValueError):
            gen_willie_statistics(gen, scen, "H2", 10, 5)
        with pytest.raises(ValueError):
            gen_willie_statistics(gen, scen, "H1", 10, 21)   # N > M
        with pytest.raises(ValueError):
            gen_willie_statistics(gen, scen, "H1", 10, 0)


class TestBobSignals:
    def test_fixed_position_means(self):
        cfg = DEFAULT_CONFIG
        scen = cfg.scenario(5.0, n_elements=256,
                            bob_position=tuple(cfg["geometry.bob_center"]))
        sig, jam, noise = gen_bob_signals(SeedStream(7).child("bob"), scen, 100_000)
        assert sig.size == jam.size == 100_000
        geo, fad = scen.geometry, scen.fading
        loss_d = path_loss_linear(fad.alice_bob, geo.distance(geo.alice, geo.bob_center))
        loss_g = path_loss_linear(fad.alice_dris, geo.distance(geo.alice, geo.dris_center))
        loss_i = path_loss_linear(fad.dris_bob, geo.distance(geo.dris_center, geo.bob_center))
        assert sig.mean() == pytest.approx(scen.p0_watts / loss_d, rel=0.1)
        var_c = prop_variance(256, alpha_bar(scen.profile), loss_g, loss_i)
        assert jam.mean() == pytest.approx(scen.p0_watts * var_c, rel=0.1)
        assert noise == fad.noise_b

    def test_no_surface_no_jamming(self):
        scen = DEFAULT_CONFIG.scenario(5.0, n_elements=0)
        sig, jam, _ = gen_bob_signals(SeedStream(7).child("bob0"), scen, 1000)
        assert np.all(jam == 0)
        assert np.all(sig > 0)
