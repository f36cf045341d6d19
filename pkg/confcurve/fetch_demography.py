"""
人口学快照获取

    confcurve-fetch-demography [--fixture-dir DIR]

从世界银行 WDI 接口下载挪威、瑞典、丹麦 1960–2015 年按性别的出生时预期寿命，
写成夹具目录下的 demography.csv（country,sex,year,life_expectancy）。
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd
import requests

from .core.error_handler import (
    ConfCurveError, ConfigError, DataValidationError, FixtureMissingError, handle_exception,
    log_info, setup_global_error_handler
)
from .core.path_manager import DEMOGRAPHY_FETCH_INSTRUCTIONS, FIXTURE_FILES, PathManager
from .core.runner import EXIT_OK
from .inference.meta_random_effects import DEMOGRAPHY_COLUMNS, load_demography


WDI_URL = 'https://api.worldbank.org/v2/country/{countries}/indicator/{indicator}'
INDICATORS = {
    'female': 'SP.DYN.LE00.FE.IN',
    'male': 'SP.DYN.LE00.MA.IN',
}
COUNTRIES = {'NOR': 'Norway', 'SWE': 'Sweden', 'DNK': 'Denmark'}
YEARS = (1960, 1970, 1980, 1990, 2000, 2010, 2015)
TIMEOUT = 30


def parse_indicator(payload: Any, sex: str) -> List[Dict[str, Any]]:
    """
    解析一页 WDI JSON 响应

    响应为 [分页信息, 记录列表]；只保留 COUNTRIES 与 YEARS 内、值非空的记录。

    Raises:
        DataValidationError: 响应不是预期的两段结构
    """
    if not isinstance(payload, list) or len(payload) != 2 or not isinstance(payload[1], list):
        # 出错时接口返回 [{"message": [...]}]
        raise DataValidationError(f"unexpected WDI response for {sex}: {payload!r:.200}")
    rows = []
    for record in payload[1]:
        code = record.get('countryiso3code')
        value = record.get('value')
        if code not in COUNTRIES or value is None:
            continue
        year = int(record['date'])
        if year in YEARS:
            rows.append({'country': COUNTRIES[code], 'sex': sex, 'year': year,
                         'life_expectancy': float(value)})
    return rows


def fetch_demography(session: Optional[requests.Session] = None) -> pd.DataFrame:
    """
    下载完整快照：3 国 × 2 性别 × 7 个年份

    Raises:
        FixtureMissingError: 网络请求失败
        DataValidationError: 响应缺少某些国家/年份
    """
    session = session or requests.Session()
    rows = []
    for sex, indicator in INDICATORS.items():
        url = WDI_URL.format(countries=';'.join(COUNTRIES), indicator=indicator)
        params = {'format': 'json', 'date': f'{YEARS[0]}:{YEARS[-1]}', 'per_page': 1000}
        try:
            response = session.get(url, params=params, timeout=TIMEOUT)
            response.raise_for_status()
            payload = response.json()
        except (requests.RequestException, ValueError) as e:
            raise FixtureMissingError(f"cannot download {indicator}: {e}",
                                      DEMOGRAPHY_FETCH_INSTRUCTIONS) from e
        rows.extend(parse_indicator(payload, sex))

    frame = pd.DataFrame(rows, columns=list(DEMOGRAPHY_COLUMNS))
    expected = len(COUNTRIES) * len(INDICATORS) * len(YEARS)
    if len(frame) != expected:
        found = set(zip(frame['country'], frame['sex'], frame['year']))
        missing = [(c, s, y) for c in COUNTRIES.values() for s in INDICATORS for y in YEARS
                   if (c, s, y) not in found]
        raise DataValidationError(f"demography download incomplete, missing {missing[:6]}")
    return frame.sort_values(['country', 'sex', 'year']).reset_index(drop=True)


def write_demography(paths: PathManager, session: Optional[requests.Session] = None) -> Path:
    """下载并写入夹具目录，读回校验一次"""
    frame = fetch_demography(session)
    path = paths.fixture_dir / FIXTURE_FILES['demography']
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False)
    except OSError as e:
        raise ConfigError(f"cannot write {path}: {e}") from e
    load_demography(path)
    log_info(f"wrote {len(frame)} demography rows to {path}")
    return path


def main(argv: Optional[List[str]] = None) -> int:
    """命令行入口；返回退出码"""
    parser = argparse.ArgumentParser(prog='confcurve-fetch-demography',
                                     description='下载 tau-cd 与 reproduce fig3 所需的人口学快照')
    parser.add_argument('--fixture-dir', help='写入目录，默认同 confcurve 的夹具目录解析规则')
    parser.add_argument('--log-level', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'],
                        default='INFO')
    args = parser.parse_args(argv)
    setup_global_error_handler(getattr(logging, args.log_level))

    try:
        write_demography(PathManager(fixture_dir=args.fixture_dir))
    except ConfCurveError as e:
        return handle_exception(e, 'demography download')
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
