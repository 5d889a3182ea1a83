"""Config parsing, merging, and validation."""

import pytest

from divfree_flow.config import (
    CASES,
    CaseConfig,
    ConfigError,
    build_config,
    load_config,
    parse_config_text,
)


class TestParseConfigText:
    def test_basic_pairs(self):
        text = "case = poiseuille\nnu = 0.1\nnx = 8\n"
        out = parse_config_text(text)
        assert out == {"case": "poiseuille", "nu": 0.1, "nx": 8}

    def test_comments_and_blank_lines(self):
        text = "# full-line comment\n\ncase = taylor_green  # trailing\n"
        assert parse_config_text(text) == {"case": "taylor_green"}

    def test_types_are_coerced(self):
        out = parse_config_text("dt = 1e-3\nsteps = 250\nout = results\n")
        assert out["dt"] == pytest.approx(1e-3)
        assert isinstance(out["steps"], int) and out["steps"] == 250
        assert out["out"] == "results"

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            parse_config_text("reynolds = 395\n")

    def test_missing_equals_rejected(self):
        with pytest.raises(ConfigError, match="expected 'key = value'"):
            parse_config_text("just words\n")

    def test_bad_number_rejected(self):
        with pytest.raises(ConfigError, match="cannot parse"):
            parse_config_text("nu = sticky\n")


class TestBuildConfig:
    def test_case_defaults_applied(self):
        cfg = build_config({"case": "rans_channel"})
        assert cfg.model == "komega_sst"
        assert cfg.disc == "hdiv_hdg"
        assert cfg.nu == pytest.approx(7.5e-5)
        assert cfg.ny == 32

    def test_file_values_override_defaults(self):
        cfg = build_config({"case": "rans_channel", "model": "komega_peng", "ny": 12})
        assert cfg.model == "komega_peng"
        assert cfg.ny == 12

    def test_cli_overrides_beat_file_values(self):
        cfg = build_config(
            {"case": "poiseuille", "order": 2}, {"order": "3", "seed": "7"}
        )
        assert cfg.order == 3
        assert cfg.seed == 7

    def test_none_overrides_ignored(self):
        cfg = build_config({"case": "poiseuille"}, {"order": None})
        assert cfg.order == 2

    def test_unknown_case(self):
        with pytest.raises(ConfigError, match="unknown case"):
            build_config({"case": "cavity"})

    def test_every_known_case_has_valid_defaults(self):
        for case in CASES:
            cfg = build_config({"case": case})
            assert cfg.case == case

    def test_n_steps_from_t_end(self):
        cfg = CaseConfig(dt=0.25, t_end=1.0, steps=0)
        assert cfg.n_steps() == 4
        cfg = CaseConfig(dt=0.25, t_end=1.0, steps=17)
        assert cfg.n_steps() == 17


class TestValidate:
    @pytest.mark.parametrize(
        "bad",
        [
            {"disc": "mini_element"},
            {"model": "rng"},
            {"domain": "quarter"},
            {"order": 1},
            {"nu": -1.0},
            {"dt": 0.0},
            {"nx": 0},
            {"ratio": 0.9},
            {"perturbation": -0.1},
            {"perturbation": 0.9, "target_ub": 1.0},
        ],
    )
    def test_invalid_values_rejected(self, bad):
        with pytest.raises(ConfigError):
            build_config({"case": "poiseuille", **bad})

    def test_rans_channel_requires_rans_model(self):
        with pytest.raises(ConfigError, match="RANS"):
            build_config({"case": "rans_channel", "model": "none"})

    def test_les_case_model_pairing(self):
        with pytest.raises(ConfigError):
            build_config({"case": "mini_les", "model": "vms"})
        with pytest.raises(ConfigError):
            build_config({"case": "mini_vms", "model": "smagorinsky"})

    def test_taylor_hood_les_flagged_not_rejected(self):
        cfg = build_config({"case": "mini_les", "disc": "taylor_hood"})
        assert "taylor_hood_les_unstable_combination" in cfg.flags


class TestLoadConfig:
    def test_round_trip(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("case = taylor_green\nnx = 8\nny = 4\ndt = 0.05\n")
        cfg = load_config(str(p), {"seed": "3"})
        assert cfg.case == "taylor_green"
        assert cfg.nx == 8
        assert cfg.seed == 3

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read config file"):
            load_config(str(tmp_path / "nope.cfg"))
