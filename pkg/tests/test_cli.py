"""命令行入口：退出码、CSV 与旁车文件"""

import json

import numpy as np
import pandas as pd
import pytest

from confcurve import __version__
from confcurve.cli import build_parser, main


@pytest.fixture
def sample_csv(tmp_path):
    path = tmp_path / 'sample.csv'
    pd.DataFrame({'y': [4.1, 5.3, 6.0, 4.8, 5.5, 7.2, 3.9, 5.1]}).to_csv(path, index=False)
    return path


@pytest.fixture
def no_fixture_env(monkeypatch):
    monkeypatch.delenv('CONFCURVE_FIXTURE_DIR', raising=False)


def read_sidecar(csv_path):
    return json.loads(csv_path.with_suffix('.json').read_text(encoding='utf-8'))


class TestSuccessfulRuns:

    def test_pivot_cd(self, tmp_path, sample_csv):
        out = tmp_path / 'pivot.csv'
        assert main(['pivot-cd', '--input', str(sample_csv), '--output', str(out),
                     '--seed', '7']) == 0
        frame = pd.read_csv(out)
        assert list(frame.columns) == ['focus', 'cd', 'cc']
        assert frame['cd'].is_monotonic_increasing
        sidecar = read_sidecar(out)
        assert sidecar['command'] == 'pivot-cd'
        assert sidecar['seed'] == 7
        assert sidecar['point_estimate'] == pytest.approx(np.mean(pd.read_csv(sample_csv)['y']),
                                                          abs=0.05)
        assert sidecar['output'] == str(out)

    def test_global_options_after_command(self, tmp_path, sample_csv):
        out = tmp_path / 'wilks.csv'
        assert main(['wilks-cc', '--input', str(sample_csv), '--grid-lower', '3',
                     '--grid-upper', '7', '--grid-points', '41', '--output', str(out),
                     '--log-level', 'WARNING']) == 0
        assert pd.read_csv(out)['focus'].iloc[0] == 3.0

    def test_monte_carlo_is_reproducible(self, tmp_path):
        first, second = tmp_path / 'a.csv', tmp_path / 'b.csv'
        args = ['optimal-cd', '--mc-samples', '1000', '--grid-points', '11', '--seed', '3']
        assert main(args + ['--output', str(first)]) == 0
        assert main(args + ['--output', str(second)]) == 0
        assert first.read_bytes() == second.read_bytes()

    def test_config_file(self, tmp_path, sample_csv):
        config = tmp_path / 'run.json'
        config.write_text(json.dumps({'command': 'ignored', 'input': str(sample_csv),
                                      'quantile-levels': [0.5]}), encoding='utf-8')
        out = tmp_path / 'quantiles.csv'
        assert main(['quantile-cc', '--config', str(config), '--output', str(out)]) == 0
        assert set(pd.read_csv(out)['p']) == {0.5}

    def test_version(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(['--version'])
        assert info.value.code == 0
        assert __version__ in capsys.readouterr().out


class TestConfigErrors:

    @pytest.mark.parametrize('extra', [
        ['--levels', '0.9,1.5'],
        ['--method', 'bootstrap'],
        ['--grid-lower', '2', '--grid-upper', '1'],
    ])
    def test_invalid_flags(self, tmp_path, sample_csv, extra):
        out = tmp_path / 'out.csv'
        assert main(['pivot-cd', '--input', str(sample_csv), '--output', str(out)] + extra) == 2
        assert not out.exists()

    def test_missing_input(self, tmp_path):
        assert main(['quantile-cc', '--input', str(tmp_path / 'absent.csv'),
                     '--output', str(tmp_path / 'out.csv')]) == 2

    def test_unknown_config_key(self, tmp_path):
        config = tmp_path / 'run.json'
        config.write_text('{"alpha": 0.05}', encoding='utf-8')
        assert main(['pivot-cd', '--config', str(config)]) == 2

    def test_argparse_rejects_unknown_command(self):
        with pytest.raises(SystemExit) as info:
            build_parser().parse_args(['bootstrap-cd'])
        assert info.value.code == 2


class TestDataAndNumericalErrors:

    def test_missing_demography(self, tmp_path, no_fixture_env):
        assert main(['tau-cd', '--fixture', 'demography', '--fixture-dir', str(tmp_path),
                     '--output', str(tmp_path / 'tau.csv')]) == 4

    def test_reproduce_without_demography(self, tmp_path, no_fixture_env):
        assert main(['reproduce', 'fig3', '--fixture-dir', str(tmp_path),
                     '--output', str(tmp_path / 'bundle')]) == 4

    def test_unsupported_pivot(self, tmp_path):
        data = tmp_path / 'counts.csv'
        pd.DataFrame({'y': [3, 5, 2, 4]}).to_csv(data, index=False)
        assert main(['pivot-cd', '--input', str(data), '--model', 'poisson-rate',
                     '--focus', 'rate', '--output', str(tmp_path / 'out.csv')]) == 2

    def test_floating_point_failure(self, tmp_path, sample_csv, monkeypatch):
        def explode(self, config, context):
            raise FloatingPointError('overflow in exp')

        monkeypatch.setattr('confcurve.strategies.likelihood_strategies.PivotCDStrategy.execute',
                            explode)
        assert main(['pivot-cd', '--input', str(sample_csv),
                     '--output', str(tmp_path / 'out.csv')]) == 3


class TestReproduce:

    def test_study_table(self, tmp_path):
        bundle = tmp_path / 'table1'
        assert main(['reproduce', 'table1-study-cds', '--output', str(bundle),
                     '--grid-points', '101']) == 0
        checks = json.loads((bundle / 'checks.json').read_text(encoding='utf-8'))
        assert checks['bundle'] == 'table1-study-cds'
        assert len(checks['files']) == 6
        assert checks['failed'] == 0
        for name in checks['files']:
            frame = pd.read_csv(bundle / name)
            assert list(frame.columns) == ['focus', 'cd', 'cc']
