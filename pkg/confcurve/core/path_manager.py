"""
路径管理模块

负责输出路径的创建，以及数据夹具目录的解析（可由环境变量覆盖）。
"""

import os
from pathlib import Path
from typing import Optional, Union

from .error_handler import FixtureMissingError, ConfigError, log_debug


FIXTURE_ENV_VAR = 'CONFCURVE_FIXTURE_DIR'

# 仓库内置夹具目录
BUILTIN_FIXTURE_DIR = Path(__file__).resolve().parent.parent / 'fixtures'

# 夹具名称 -> 文件名
FIXTURE_FILES = {
    'lidocaine': 'lidocaine.csv',
    'animals': 'animals.csv',
    'lidocaine-studies': 'lidocaine-studies.json',
    'demography': 'demography.csv',
}

DEMOGRAPHY_FETCH_INSTRUCTIONS = """\
The demography snapshot is not shipped with confcurve.
Run `confcurve-fetch-demography` to download it into the fixture directory
(World Bank WDI indicators SP.DYN.LE00.FE.IN and SP.DYN.LE00.MA.IN), or create
demography.csv with header `country,sex,year,life_expectancy`
(countries Norway, Sweden, Denmark; sex female/male; years 1960, 1970, 1980,
1990, 2000, 2010, 2015) from worldlifeexpectancy.com/history-of-life-expectancy
and place it in the fixture directory, or point CONFCURVE_FIXTURE_DIR
(or --fixture-dir) at the directory holding it."""


class PathManager:
    """路径管理器"""

    def __init__(self, base_output_dir: Union[str, Path] = '.',
                 fixture_dir: Optional[Union[str, Path]] = None):
        self.base_output_dir = Path(base_output_dir).resolve()
        self.fixture_dir = self._resolve_fixture_dir(fixture_dir)

    @staticmethod
    def _resolve_fixture_dir(fixture_dir: Optional[Union[str, Path]]) -> Path:
        """解析夹具目录：参数 > 环境变量 > 内置目录"""
        if fixture_dir:
            return Path(fixture_dir).resolve()
        env_dir = os.environ.get(FIXTURE_ENV_VAR)
        if env_dir:
            return Path(env_dir).resolve()
        return BUILTIN_FIXTURE_DIR

    def fixture_path(self, name: str) -> Path:
        """
        获取夹具文件路径

        覆盖目录中找不到时回退到内置目录。

        Raises:
            ConfigError: 未知夹具名
            FixtureMissingError: 文件不存在
        """
        if name not in FIXTURE_FILES:
            raise ConfigError(f"unknown fixture '{name}' (known: {', '.join(sorted(FIXTURE_FILES))})")

        filename = FIXTURE_FILES[name]
        for directory in (self.fixture_dir, BUILTIN_FIXTURE_DIR):
            candidate = directory / filename
            if candidate.is_file():
                log_debug(f"fixture {name}: {candidate}")
                return candidate

        instructions = DEMOGRAPHY_FETCH_INSTRUCTIONS if name == 'demography' else ""
        raise FixtureMissingError(f"fixture '{name}' not found in {self.fixture_dir}", instructions)

    def create_output_path(self, output: Union[str, Path]) -> Path:
        """
        创建输出文件的父目录并返回绝对路径

        Args:
            output: 输出文件路径（相对路径基于 base_output_dir）
        """
        path = Path(output)
        if not path.is_absolute():
            path = self.base_output_dir / path
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise ConfigError(f"cannot create output directory {path.parent}: {e}") from e
        return path

    def create_output_dir(self, directory: Union[str, Path]) -> Path:
        """创建输出目录（复现结果包）"""
        path = Path(directory)
        if not path.is_absolute():
            path = self.base_output_dir / path
        try:
            path.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise ConfigError(f"cannot create output directory {path}: {e}") from e
        return path

    @staticmethod
    def sidecar_path(csv_path: Union[str, Path]) -> Path:
        """CSV 对应的 JSON 旁车文件路径"""
        return Path(csv_path).with_suffix('.json')
