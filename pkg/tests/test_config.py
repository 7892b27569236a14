import math

import pytest

from discodet.config import (DEFAULT_CONFIG, ConfigError, dump_config,
                             grid_for_elements, parse_config, parse_config_text)


class TestDefaults:
    def test_empty_text_gives_reference_defaults(self):
        cfg = parse_config_text("")
        assert cfg["dris.elements_h"] * cfg["dris.elements_v"] == 2048
        assert cfg["detector.n_samples"] == 5
        assert cfg["detector.alpha"] == 0.05
        assert cfg["flow.epochs"] == 200
        assert cfg["flow.learning_rate"] == 2e-4
        assert cfg["flow.layers"] == 5
        assert cfg["fading.rician_g"] == 4.0
        assert tuple(cfg["dris.amplitudes"]) == (0.8, 1.0)

    def test_noise_power(self):
        assert DEFAULT_CONFIG.noise_power() == pytest.approx(1.8e-15, rel=1e-10)

    def test_default_profile_alpha_bar(self):
        from discodet.theory import alpha_bar
        assert abs(alpha_bar(DEFAULT_CONFIG.profile()) - 0.82) < 1e-12


class TestParsing:
    def test_override_and_comment(self):
        cfg = parse_config_text("# comment\nflow.epochs = 17  # trailing\n")
        assert cfg["flow.epochs"] == 17

    def test_unknown_key_names_line(self):
        with pytest.raises(ConfigError, match="2.*unknown key"):
            parse_config_text("\nnope.key = 1\n")

    def test_duplicate_key(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config_text("flow.epochs = 1\nflow.epochs = 2\n")

    def test_bad_value_type(self):
        with pytest.raises(ConfigError, match="bad value"):
            parse_config_text("flow.epochs = many")

    def test_missing_equals(self):
        with pytest.raises(ConfigError, match="expected"):
            parse_config_text("flow.epochs 5")

    def test_zero_elements_is_constraint_error(self):
        with pytest.raises(ConfigError):
            parse_config_text("dris.elements_h = 0")

    def test_samples_beyond_interval_rejected(self):
        with pytest.raises(ConfigError):
            parse_config_text("detector.n_samples = 21")

    def test_bad_choice(self):
        with pytest.raises(ConfigError):
            parse_config_text("sjnr.bob_mode = somewhere")

    def test_file_roundtrip(self, tmp_path):
        p = tmp_path / "exp.cfg"
        p.write_text("flow.layers = 5\nsweep.fixed_p0_dbm = -7\n")
        cfg = parse_config(p)
        assert cfg["flow.layers"] == 5
        assert cfg["sweep.fixed_p0_dbm"] == -7.0


class TestDump:
    def test_roundtrip_identical(self):
        cfg = parse_config_text("flow.layers = 5\ndetector.rho = 0.35\n")
        text = dump_config(cfg)
        again = parse_config_text(text)
        assert again.values == cfg.values
        assert dump_config(again) == text

    def test_every_key_echoed(self):
        text = dump_config(DEFAULT_CONFIG)
        for key in ("detector.rho", "detector.mixture_h1", "seeds.root",
                    "fading.rician_g", "sweep.powers_dbm"):
            assert key + " = " in text


class TestGridForElements:
    @pytest.mark.parametrize("n,expected", [
        (0, (0, 0)), (1, (1, 1)), (256, (16, 16)), (512, (32, 16)),
        (1024, (32, 32)), (2048, (64, 32)),
    ])
    def test_known_grids(self, n, expected):
        assert grid_for_elements(n) == expected

    def test_product_invariant(self):
        for n in (2, 6, 12, 100, 300, 4096):
            h, v = grid_for_elements(n)
            assert h * v == n

    def test_negative(self):
        with pytest.raises(ConfigError):
            grid_for_elements(-1)


class TestBuilders:
    def test_scenario_power_conversion(self):
        scen = DEFAULT_CONFIG.scenario(5.0)
        assert scen.p0_watts == pytest.approx(10 ** (-2.5))
        assert scen.geometry.n_elements == 2048

    def test_scenario_element_override(self):
        scen = DEFAULT_CONFIG.scenario(5.0, n_elements=256)
        assert scen.geometry.n_elements == 256
        assert DEFAULT_CONFIG.scenario(5.0, n_elements=0).geometry.n_elements == 0

    def test_with_overrides(self):
        cfg = DEFAULT_CONFIG.with_overrides(detector__alpha=0.01)
        assert cfg["detector.alpha"] == 0.01
        with pytest.raises(ConfigError):
            DEFAULT_CONFIG.with_overrides(not__a__key=1)
        with pytest.raises(ConfigError):
            DEFAULT_CONFIG.with_overrides(detector__alpha=1.5)

    def test_train_config_enrichment_modes(self):
        assert DEFAULT_CONFIG.train_config(seed=1).enrichment is None
        cfg = parse_config_text("flow.enrichment = off")
        assert cfg.train_config(seed=1).enrichment is False
