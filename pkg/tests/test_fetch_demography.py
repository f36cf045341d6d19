"""人口学快照：WDI 响应解析、写入夹具目录与已有快照的读取"""

import pandas as pd
import pytest
import requests

from confcurve.core.error_handler import DataValidationError, FixtureMissingError
from confcurve.core.path_manager import PathManager
from confcurve.fetch_demography import (
    COUNTRIES, INDICATORS, YEARS, fetch_demography, main, parse_indicator, write_demography
)
from confcurve.inference.meta_random_effects import demography_effects, load_demography


def wdi_payload(sex, drop=()):
    """按 WDI v2 JSON 结构构造的响应，数值只用于测试"""
    base = 70.0 if sex == 'male' else 74.0
    records = []
    for k, (code, name) in enumerate(COUNTRIES.items()):
        for year in range(YEARS[0], YEARS[-1] + 1):
            if (name, year) in drop:
                continue
            records.append({'countryiso3code': code, 'country': {'value': name},
                            'date': str(year), 'value': base + k + 0.15 * (year - 1960)})
    records.append({'countryiso3code': 'FIN', 'date': '2000', 'value': 77.0})
    records.append({'countryiso3code': 'NOR', 'date': '1959', 'value': None})
    return [{'page': 1, 'pages': 1, 'total': len(records)}, records]


class FakeResponse:

    def __init__(self, payload, status=200):
        self.payload = payload
        self.status = status

    def raise_for_status(self):
        if self.status >= 400:
            raise requests.HTTPError(f"{self.status} error")

    def json(self):
        return self.payload


class FakeSession:

    def __init__(self, status=200, drop=()):
        self.status = status
        self.drop = drop
        self.calls = []

    def get(self, url, params=None, timeout=None):
        self.calls.append((url, params))
        sex = next(s for s, indicator in INDICATORS.items() if indicator in url)
        return FakeResponse(wdi_payload(sex, self.drop), self.status)


class TestParse:

    def test_keeps_requested_countries_and_years(self):
        rows = parse_indicator(wdi_payload('female'), 'female')
        assert len(rows) == len(COUNTRIES) * len(YEARS)
        assert {row['country'] for row in rows} == set(COUNTRIES.values())
        assert {row['year'] for row in rows} == set(YEARS)

    def test_error_payload(self):
        with pytest.raises(DataValidationError):
            parse_indicator([{'message': [{'key': 'Invalid value'}]}], 'male')


class TestFetch:

    def test_full_snapshot(self):
        session = FakeSession()
        frame = fetch_demography(session)
        assert list(frame.columns) == ['country', 'sex', 'year', 'life_expectancy']
        assert len(frame) == 42
        assert len(session.calls) == 2
        assert all('NOR;SWE;DNK' in url for url, _ in session.calls)

    def test_incomplete_snapshot(self):
        with pytest.raises(DataValidationError) as info:
            fetch_demography(FakeSession(drop={('Sweden', 1980)}))
        assert 'Sweden' in str(info.value)

    def test_http_failure(self):
        with pytest.raises(FixtureMissingError) as info:
            fetch_demography(FakeSession(status=503))
        assert 'country,sex,year,life_expectancy' in info.value.instructions

    def test_written_where_fixtures_are_read(self, tmp_path):
        paths = PathManager(tmp_path, tmp_path / 'fixtures')
        path = write_demography(paths, FakeSession())
        assert path == paths.fixture_path('demography')
        effects = demography_effects(load_demography(path), 'female')
        assert effects.estimates.size == 3
        assert effects.estimates == pytest.approx([0.15, 0.15, 0.15], abs=1e-9)

    def test_network_failure_exit_code(self, tmp_path, monkeypatch):
        def refuse(self, url, **kwargs):
            raise requests.ConnectionError('offline')

        monkeypatch.setattr(requests.Session, 'get', refuse)
        assert main(['--fixture-dir', str(tmp_path)]) == 4
        assert not (tmp_path / 'demography.csv').exists()


class TestShippedSnapshot:

    @pytest.fixture
    def snapshot(self, monkeypatch):
        monkeypatch.delenv('CONFCURVE_FIXTURE_DIR', raising=False)
        path = PathManager().fixture_dir / 'demography.csv'
        if not path.exists():
            pytest.skip('demography.csv not present; run confcurve-fetch-demography')
        return load_demography(path)

    def test_covers_three_countries(self, snapshot):
        assert set(snapshot['country']) == set(COUNTRIES.values())
        assert set(snapshot['year']) >= set(YEARS)

    def test_slopes_are_positive(self, snapshot):
        for sex in ('female', 'male'):
            effects = demography_effects(snapshot, sex)
            assert effects.estimates.size == 3
            assert (effects.estimates > 0).all()
