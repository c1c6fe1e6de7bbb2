import pytest

from planeflow.config import (RunConfig, apply_overrides, build_config,
                              manifest_text, parse_config_file)
from planeflow.multiscale import level_config


class TestConfigFile:
    def test_parse_and_types(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("""
# comment line
epsilon = 0.08
levels = 1          # trailing comment
hsv_equalize = true
level_epsilon = 2:0.02
""")
        values = parse_config_file(p)
        assert values == {"epsilon": 0.08, "levels": 1, "hsv_equalize": True,
                          "level_epsilon": "2:0.02"}

    def test_unknown_key_rejected(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("nonsense = 1\n")
        with pytest.raises(ValueError, match="nonsense"):
            parse_config_file(p)

    def test_overrides_win(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("epsilon = 0.08\n")
        cfg = build_config(p, ["epsilon=0.02"])
        assert cfg.epsilon == 0.02

    def test_bad_override_format(self):
        with pytest.raises(ValueError):
            apply_overrides(RunConfig(), ["epsilon"])


class TestManifest:
    def test_every_field_echoed(self):
        cfg = RunConfig()
        text = manifest_text(cfg)
        from dataclasses import fields

        for f in fields(RunConfig):
            assert f"{f.name} = " in text

    def test_round_trips_through_parser(self, tmp_path):
        cfg = RunConfig(epsilon=0.07, levels=3, dw=10, hsv_equalize=True,
                        level_eta="2:0.4")
        p = tmp_path / "manifest.txt"
        p.write_text(manifest_text(cfg))
        back = build_config(p)
        assert back == cfg


class TestPerLevelOverrides:
    def test_level_values_reach_level_config(self):
        cfg = RunConfig(levels=2, epsilon=0.04, eta=0.5,
                        level_epsilon="2:0.02", level_eta="2:0.3")
        pyramid = cfg.pyramid_config()
        l1 = level_config(pyramid, 1)
        l2 = level_config(pyramid, 2)
        assert l1.epsilon == 0.04 and l1.eta == 0.5
        assert l2.epsilon == 0.02 and l2.eta == 0.3

    def test_degeneracy_area_threaded(self):
        cfg = RunConfig(ransac_degeneracy_area=1e-4)
        assert cfg.ransac_config().degeneracy_rel_area == 1e-4
