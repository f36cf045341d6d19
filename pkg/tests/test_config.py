"""运行配置：预设、合并优先级与校验"""

import json

import numpy as np
import pytest

from confcurve.core.config import ConfigManager, GridSpec, RunConfig
from confcurve.core.error_handler import ConfigError


@pytest.fixture
def manager():
    return ConfigManager()


class TestGridSpec:

    def test_implicit_grid(self):
        assert GridSpec().build() is None

    def test_log_grid(self):
        grid = GridSpec(0.1, 10.0, 3, 'log').build()
        np.testing.assert_allclose(grid, [0.1, 1.0, 10.0])

    def test_linear_grid(self):
        assert GridSpec(0.0, 1.0, 11).build()[3] == pytest.approx(0.3)


class TestBuildConfig:

    def test_preset_applies(self, manager):
        config = manager.build_config('robust-cc')
        assert config.fixture == 'animals'
        assert config.log_log is True
        assert config.grid.points == 240

    def test_precedence(self, manager):
        config = manager.build_config('wilks-cc', {'focus': 'sigma', 'seed': 4}, {'seed': 9})
        assert config.focus == 'sigma'
        assert config.seed == 9
        assert config.model == 'normal'

    def test_none_flags_are_ignored(self, manager):
        config = manager.build_config('pivot-cd', {}, {'model': None, 'levels': None})
        assert config.model == 'normal'
        assert config.levels == [0.90, 0.95]

    def test_partial_grid_override_keeps_preset_bounds(self, manager):
        config = manager.build_config('optimal-cd', {}, {'grid': {'points': 21, 'lower': None}})
        assert config.grid.points == 21
        assert config.grid.lower == 0.2
        assert config.grid.spacing == 'log'

    def test_dashed_keys(self, manager):
        config = manager.build_config('optimal-cd', {'mc-samples': 5000})
        assert config.mc_samples == 5000

    def test_unknown_key(self, manager):
        with pytest.raises(ConfigError):
            manager.build_config('pivot-cd', {'alpha': 0.05})

    def test_reproduce_output_directory(self, manager):
        config = manager.build_config('reproduce', {}, {'bundle': 'fig2'})
        assert config.output == 'reproduce-out'
        assert manager.validate_config(config).valid

    def test_to_dict_is_serializable(self, manager):
        json.dumps(manager.build_config('fuse').to_dict())


class TestLoadJson:

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            ConfigManager.load_json(tmp_path / 'absent.json')

    def test_invalid_json(self, tmp_path):
        path = tmp_path / 'bad.json'
        path.write_text('{"seed": ', encoding='utf-8')
        with pytest.raises(ConfigError):
            ConfigManager.load_json(path)

    def test_not_an_object(self, tmp_path):
        path = tmp_path / 'list.json'
        path.write_text('[1, 2]', encoding='utf-8')
        with pytest.raises(ConfigError):
            ConfigManager.load_json(path)


class TestValidation:

    def test_presets_are_valid(self, manager):
        for command in ConfigManager.COMMANDS:
            assert manager.validate_config(manager.build_config(command)).valid, command

    @pytest.mark.parametrize('overrides', [
        {'seed': -1},
        {'seed': 2 ** 64},
        {'threads': 0},
        {'levels': [0.9, 1.0]},
        {'quantile_levels': [0.0]},
        {'method': 'bootstrap'},
        {'mc_samples': 0},
        {'integral_mode': 'monte-carlo'},
        {'tuning': -0.1},
        {'downweight': 1.0},
        {'grid': {'lower': 1.0, 'upper': 0.5}},
        {'grid': {'lower': 0.0, 'upper': 1.0, 'spacing': 'log'}},
        {'grid': {'points': 1}},
    ])
    def test_invalid(self, manager, overrides):
        config = manager.build_config('pivot-cd', {}, overrides)
        assert not manager.validate_config(config).valid

    def test_missing_input_file(self, manager, tmp_path):
        config = manager.build_config('quantile-cc', {}, {'input': str(tmp_path / 'absent.csv')})
        result = manager.validate_config(config)
        assert any('not found' in e for e in result.errors)

    def test_unknown_command(self, manager):
        assert not manager.validate_config(RunConfig(command='bootstrap-cd')).valid

    def test_unknown_bundle(self, manager):
        config = manager.build_config('reproduce', {}, {'bundle': 'fig9'})
        assert not manager.validate_config(config).valid

    def test_both_tuning_and_downweight_warn(self, manager):
        config = manager.build_config('robust-cc', {}, {'tuning': 0.2})
        result = manager.validate_config(config)
        assert result.valid and result.warnings

    def test_few_mc_samples_warn(self, manager):
        config = manager.build_config('optimal-cd', {}, {'mc_samples': 500})
        assert manager.validate_config(config).warnings

    def test_one_sided_grid_warns(self, manager):
        config = manager.build_config('wilks-cc', {}, {'grid': {'lower': 0.0}})
        result = manager.validate_config(config)
        assert result.valid and result.warnings
