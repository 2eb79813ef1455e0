import pytest

from loopgap.config import (
    EXPERIMENTS,
    default_config,
    load_config,
    validate_config,
)
from loopgap.paths import ValidationError


def write(tmp_path, text):
    p = tmp_path / "cfg.toml"
    p.write_text(text)
    return p


class TestDefaults:
    @pytest.mark.parametrize("name", EXPERIMENTS)
    def test_shipped_defaults_are_clean(self, name):
        assert validate_config(default_config(name)) == []

    def test_unknown_experiment(self):
        with pytest.raises(ValidationError):
            default_config("nope")


class TestLoadConfig:
    def test_minimal(self, tmp_path):
        cfg, diags = load_config(write(tmp_path, 'experiment = "uniformity"\n'))
        assert diags == []
        assert cfg.experiment == "uniformity"
        assert cfg.mc.n_paths == 10_000

    def test_overrides(self, tmp_path):
        cfg, diags = load_config(write(tmp_path, """
experiment = "tsirelson-gap"
[grid]
levels = 12
substeps = 2
[mc]
n_paths = 500
master_seed = 99
[relaxation]
epsilon = 0.002
[output]
dir = "elsewhere"
"""))
        assert diags == []
        assert cfg.grid.levels == 12
        assert cfg.mc.master_seed == 99
        assert cfg.relaxation.epsilon == 0.002
        assert cfg.out_dir == "elsewhere"

    def test_k1_diagnostic_names_constraint(self, tmp_path):
        _, diags = load_config(write(tmp_path, """
experiment = "tsirelson-gap"
[grid]
levels = 1
"""))
        assert any("levels" in d and "2" in d for d in diags)

    def test_epsilon_zero_diagnostic(self, tmp_path):
        _, diags = load_config(write(tmp_path, """
experiment = "tsirelson-gap"
[relaxation]
epsilon = 0.0
"""))
        assert any("degenerate" in d for d in diags)

    def test_unknown_key_diagnostic(self, tmp_path):
        _, diags = load_config(write(tmp_path, """
experiment = "uniformity"
[mc]
n_path = 100
"""))
        assert any("unknown key" in d for d in diags)

    def test_parse_error_carries_location(self, tmp_path):
        p = write(tmp_path, "experiment = \n")
        with pytest.raises(ValidationError, match="line"):
            load_config(p)

    def test_cfl_precheck_for_hjb(self, tmp_path):
        _, diags = load_config(write(tmp_path, """
experiment = "hjb-benchmark"
[hjb]
n_t = 5
"""))
        assert any("CFL" in d and "n_t >=" in d for d in diags)

    def test_uniformity_levels_validated(self, tmp_path):
        _, diags = load_config(write(tmp_path, """
experiment = "uniformity"
[grid]
levels = 4
[uniformity]
levels = [-1, -10]
"""))
        assert any("k=-10" in d for d in diags)
