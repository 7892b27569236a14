import math

import numpy as np
import pytest

from discodet import flow
from discodet.flow import (FlowModel, TrainConfig, build_flow, grad_nll,
                           load_flow, nll, save_flow, standardizer_fit, train)
from discodet.statkit import SeedStream, sample_gamma
from discodet.sweeps import autoregressive_check


def perturbed_model(dim, seed=11, scale=0.1, **kwargs):
    cfg = TrainConfig(seed=seed, n_blocks=kwargs.pop("n_blocks", 3),
                      hidden=kwargs.pop("hidden", (8,)), **kwargs)
    model = build_flow(dim, cfg)
    gen = np.random.default_rng(seed)
    for p in model.parameters():
        p += scale * gen.standard_normal(p.shape)
    return model


def finite_diff_check(model, batch, step=1e-5, rel_tol=1e-4, abs_tol=1e-7):
    _, grads = grad_nll(model, batch)
    for p, g in zip(model.parameters(), grads):
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = nll(model, batch)
            flat[i] = orig - step
            down = nll(model, batch)
            flat[i] = orig
            fd = (up - down) / (2 * step)
            err = abs(fd - gflat[i])
            assert err <= abs_tol or err / max(abs(fd), abs(gflat[i])) <= rel_tol, (
                f"gradient mismatch: analytic {gflat[i]:.3e}, numeric {fd:.3e}")


class TestStandardizer:
    def test_fit(self):
        data = np.array([[1.0, 10.0], [3.0, 14.0]])
        mu, sigma = standardizer_fit(data)
        np.testing.assert_allclose(mu, [2.0, 12.0])
        np.testing.assert_allclose(sigma, [1.0, 2.0])

    def test_degenerate(self):
        with pytest.raises(ValueError):
            standardizer_fit(np.ones((10, 2)))
        with pytest.raises(ValueError):
            standardizer_fit(np.ones((1, 2)))


class TestIdentityInit:
    def test_log_prob_is_standard_normal_at_init(self):
        model = build_flow(3, TrainConfig(seed=0, n_blocks=4))
        x = np.random.default_rng(0).standard_normal((32, 3))
        expected = -0.5 * (x**2).sum(axis=1) - 1.5 * math.log(2 * math.pi)
        np.testing.assert_allclose(model.log_prob(x), expected, atol=1e-12)

    def test_forward_is_identity_at_init(self):
        model = build_flow(2, TrainConfig(seed=0))
        x = np.random.default_rng(1).standard_normal((16, 2))
        z, _ = model.forward(x)
        np.testing.assert_allclose(z, x, atol=1e-12)


class TestAutoregressive:
    @pytest.mark.parametrize("dim", [4, 6])
    def test_masked_conditioner(self, dim):
        model = perturbed_model(dim)
        assert autoregressive_check(model, np.random.default_rng(2))

    def test_corrupted_mask_fails_check(self):
        # negative control: removing the strict-inequality output mask must
        # be caught by the probe
        model = perturbed_model(4)
        model.blocks[1].made.out_mask[:] = 1.0
        assert not autoregressive_check(model, np.random.default_rng(2))

    def test_dim1_conditioner_is_constant(self):
        model = perturbed_model(1, enrichment=True)
        made = model.blocks[0].made
        mu_a, s_a = made.forward(np.array([[0.3]]))
        mu_b, s_b = made.forward(np.array([[-5.0]]))
        assert mu_a == mu_b and s_a == s_b


class TestGradients:
    def test_multidim_no_enrichment(self):
        model = perturbed_model(3, enrichment=False)
        batch = np.random.default_rng(3).standard_normal((6, 3))
        finite_diff_check(model, batch)

    def test_dim1_with_enrichment(self):
        model = perturbed_model(1, enrichment=True, scale=0.3)
        batch = np.random.default_rng(4).standard_normal((8, 1))
        finite_diff_check(model, batch)

    def test_multidim_with_enrichment(self):
        model = perturbed_model(2, enrichment=True, n_blocks=2)
        batch = np.random.default_rng(5).standard_normal((5, 2))
        finite_diff_check(model, batch)


class TestInversion:
    @pytest.mark.parametrize("dim,enrich", [(1, True), (1, False), (4, False), (3, True)])
    def test_roundtrip(self, dim, enrich):
        model = perturbed_model(dim, enrichment=enrich, scale=0.3)
        model.mu_std[:] = 1.5
        model.sigma_std[:] = 2.0
        y = np.random.default_rng(6).standard_normal((64, dim)) * 2 + 1
        z, _ = model.forward(y)
        np.testing.assert_allclose(model.inverse(z), y, atol=1e-9)

    def test_logdet_consistency(self):
        # numerical Jacobian of the 1-D transform must match the reported logdet
        model = perturbed_model(1, enrichment=True, scale=0.3)
        y = np.array([[0.7]])
        _, logdet = model.forward(y)
        h = 1e-6
        z_up, _ = model.forward(y + h)
        z_dn, _ = model.forward(y - h)
        deriv = (z_up[0, 0] - z_dn[0, 0]) / (2 * h)
        assert math.log(abs(deriv)) == pytest.approx(float(logdet[0]), abs=1e-6)


class TestTraining:
    def test_gaussian_nll_reaches_entropy(self):
        gen = SeedStream(8).child("gauss")
        data = 3.0 + 2.0 * gen.standard_normal(20_000)
        model = train(data, TrainConfig(seed=13, epochs=20))
        entropy = 0.5 * math.log(2 * math.pi * math.e * 4.0)
        eval_data = 3.0 + 2.0 * gen.standard_normal(20_000)
        assert nll(model, eval_data) == pytest.approx(entropy, abs=0.05)

    def test_gamma_fit_improves_over_gaussian(self):
        gen = SeedStream(8).child("gamma")
        data = sample_gamma(gen, 5, 1.0, size=8000)
        model = train(data, TrainConfig(seed=13, epochs=40))
        fitted = nll(model, data)
        mu, sigma = standardizer_fit(data)
        gauss_nll = 0.5 * math.log(2 * math.pi * float(sigma[0]) ** 2) + 0.5
        assert fitted < gauss_nll - 0.005

    def test_determinism(self):
        data = SeedStream(8).child("det").standard_normal(2000)
        m1 = train(data, TrainConfig(seed=21, epochs=3))
        m2 = train(data, TrainConfig(seed=21, epochs=3))
        for a, b in zip(m1.parameters(), m2.parameters()):
            np.testing.assert_array_equal(a, b)

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            train(np.array([1.0, 2.0]), TrainConfig(epochs=1, batch_size=256))


class TestSerialization:
    def test_bit_identical_roundtrip(self, tmp_path):
        model = perturbed_model(1, enrichment=True)
        model.mu_std[:] = 4.2
        model.sigma_std[:] = 0.7
        path = tmp_path / "model.flow"
        save_flow(model, path)
        loaded = load_flow(path)
        y = np.random.default_rng(9).standard_normal((100, 1))
        np.testing.assert_array_equal(loaded.log_prob(y), model.log_prob(y))

    def test_multidim_roundtrip(self, tmp_path):
        model = perturbed_model(4, hidden=(8, 6), enrichment=False)
        path = tmp_path / "model.flow"
        save_flow(model, path)
        loaded = load_flow(path)
        y = np.random.default_rng(9).standard_normal((10, 4))
        np.testing.assert_array_equal(loaded.log_prob(y), model.log_prob(y))

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk"
        path.write_bytes(b"NOTAFLOW" + b"\0" * 40)
        with pytest.raises(ValueError):
            load_flow(path)

    def test_truncated(self, tmp_path):
        model = perturbed_model(2)
        path = tmp_path / "model.flow"
        save_flow(model, path)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(ValueError):
            load_flow(path)


class TestNumerics:
    def test_log_scale_clamp_keeps_finite(self):
        model = perturbed_model(1, enrichment=True)
        model.blocks[0].made.b_s[:] = 50.0     # would overflow without clamping
        out = model.log_prob(np.array([[1e3], [-1e3], [0.0]]))
        assert np.all(np.isfinite(out))

    def test_nll_empty_batch(self):
        model = build_flow(1, TrainConfig(seed=0))
        with pytest.raises(ValueError):
            nll(model, np.empty((0, 1)))
