"""
配置管理模块

提供统一的运行配置、验证和按命令的预设模板功能。
"""

import json
from dataclasses import dataclass, field, fields, asdict
from pathlib import Path
from typing import List, Dict, Any, Optional, Union

import numpy as np

from .error_handler import ConfigError


@dataclass
class ValidationResult:
    """配置验证结果"""
    valid: bool
    errors: List[str] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)

    def add_error(self, message: str):
        """添加错误信息"""
        self.errors.append(message)
        self.valid = False

    def add_warning(self, message: str):
        """添加警告信息"""
        self.warnings.append(message)


@dataclass
class GridSpec:
    """焦点参数网格；未给出上下界时由命令选择默认网格"""
    lower: Optional[float] = None
    upper: Optional[float] = None
    points: int = 201
    spacing: str = "linear"

    @property
    def is_explicit(self) -> bool:
        return self.lower is not None and self.upper is not None

    def build(self) -> Optional[np.ndarray]:
        """生成网格数组；上下界不全时返回 None"""
        if not self.is_explicit:
            return None
        if self.spacing == "log":
            return np.geomspace(self.lower, self.upper, self.points)
        return np.linspace(self.lower, self.upper, self.points)


@dataclass
class RunConfig:
    """单次命令运行的配置数据类"""
    command: str = ""
    input: Optional[str] = None
    fixture: Optional[str] = None
    manifest: Optional[str] = None
    output: str = "confcurve-out.csv"
    seed: int = 1
    threads: Optional[int] = None
    grid: GridSpec = field(default_factory=GridSpec)
    model: str = ""
    focus: str = ""
    method: str = ""
    levels: List[float] = field(default_factory=lambda: [0.90, 0.95])
    mc_samples: int = 100000
    mc_tolerance: float = 0.005
    bootstrap_samples: int = 2000
    reps: int = 1000
    sample_size: int = 10
    true_params: Dict[str, float] = field(default_factory=dict)
    tuning: Optional[float] = None
    downweight: Optional[float] = None
    log_log: bool = False
    exact: bool = False
    quantile_levels: List[float] = field(default_factory=lambda: [0.1, 0.3, 0.5, 0.7, 0.9])
    integral_mode: str = "closed-form"
    multistart: int = 5
    subset: Optional[str] = None
    bundle: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        """转换为可 JSON 序列化的字典（写入旁车文件）"""
        return asdict(self)


class ConfigManager:
    """配置管理器"""

    COMMANDS = [
        'pivot-cd', 'wilks-cc', 'bartlett-cc', 'optimal-cd', 'fuse',
        'tau-cd', 'quantile-cc', 'robust-cc', 'coverage-sim',
    ]

    # 复现结果包（reproduce 命令；output 为结果包目录）
    BUNDLES = ['fig2', 'fig3', 'fig4', 'table1-study-cds']

    # 各命令可选的方法
    SUPPORTED_METHODS = {
        'pivot-cd': ['pivot', 'normal-approx'],
        'fuse': ['iiccff', 'normal-combine'],
        'tau-cd': ['pivot', 'wilks'],
        'coverage-sim': ['normal-approx', 'wilks', 'wilks-bartlett', 'pivot'],
    }

    INTEGRAL_MODES = ['closed-form', 'quadrature']

    # 预设模板（按命令）
    PRESETS = {
        "pivot-cd": {
            "model": "normal",
            "focus": "mu",
            "method": "pivot",
            "description": "枢轴量 CD：正态均值的 t 枢轴量"
        },
        "wilks-cc": {
            "model": "normal",
            "focus": "mu",
            "description": "剖面偏差 + Wilks χ²₁ 映射"
        },
        "bartlett-cc": {
            "model": "exponential",
            "focus": "rate",
            "bootstrap_samples": 2000,
            "description": "Bartlett 修正：参数自助法估计偏差均值"
        },
        "optimal-cd": {
            "fixture": "lidocaine",
            "grid": {"lower": 0.2, "upper": 8.0, "points": 201, "spacing": "log"},
            "mc_samples": 100000,
            "description": "条件最优 CD：lidocaine 配对泊松，γ ∈ [0.2, 8] 对数网格"
        },
        "fuse": {
            "fixture": "lidocaine-studies",
            "grid": {"lower": 0.2, "upper": 8.0, "points": 201, "spacing": "log"},
            "description": "II-CC-FF 融合（或加权正态合并）"
        },
        "tau-cd": {
            "description": "随机效应离散度 τ 的枢轴量 CD（τ = 0 处有点质量）"
        },
        "quantile-cc": {
            "quantile_levels": [0.1, 0.3, 0.5, 0.7, 0.9],
            "description": "顺序统计量分位数置信曲线（精确、无分布假设）"
        },
        "robust-cc": {
            "fixture": "animals",
            "model": "binormal",
            "focus": "rho",
            "log_log": True,
            "downweight": 0.10,
            "grid": {"lower": -0.2, "upper": 0.995, "points": 240, "spacing": "linear"},
            "description": "BHHJ 稳健置信曲线：动物数据对数-对数相关系数"
        },
        "coverage-sim": {
            "model": "normal",
            "focus": "mu",
            "method": "wilks",
            "reps": 1000,
            "sample_size": 10,
            "true_params": {"mu": 0.0, "sigma": 1.0},
            "description": "覆盖率校准模拟：cc(ψ₀) 的均匀性与各水平覆盖率"
        },
        "reproduce": {
            "output": "reproduce-out",
            "description": "复现结果包：每条曲线一个 CSV，外加 checks.json"
        },
    }

    # 帮助文本
    HELP_TEXT = {
        "grid": """
网格说明：
• lower / upper: 焦点参数范围（缺省时按试验正态近似的 0.0001/0.9999 范围）
• points: 网格点数，默认 201
• spacing: linear 或 log（log 要求 lower > 0）
        """.strip(),

        "seed": "64 位非负整数主种子；所有 Monte Carlo 子流由它按任务索引派生",
        "levels": "旁车文件中报告的置信水平，默认 0.90, 0.95",
        "mc_samples": "每个网格点的条件 Monte Carlo 样本数 B_mc，默认 10⁵",
        "bootstrap_samples": "Bartlett 因子的参数自助法样本数 B，默认 2000",
        "tuning": "BHHJ 调节参数 a > 0；与 downweight 二选一",
        "downweight": "允许的离群点降权比例 f ∈ (0, 1)，换算为 a = −2 ln(1 − f)/dim",
        "integral_mode": "∫f^{1+a} 的计算方式：closed-form（正态族）或 quadrature",
        "subset": "tau-cd 读取人口学快照时选择的性别（female 或 male），默认 female",
    }

    @classmethod
    def get_preset(cls, preset_name: str) -> Optional[Dict[str, Any]]:
        """获取预设配置"""
        return cls.PRESETS.get(preset_name)

    @classmethod
    def list_presets(cls) -> Dict[str, str]:
        """列出所有预设及其描述"""
        return {name: preset["description"] for name, preset in cls.PRESETS.items()}

    @classmethod
    def get_help(cls, field_name: str) -> str:
        """获取字段帮助信息"""
        return cls.HELP_TEXT.get(field_name, "暂无帮助信息")

    @staticmethod
    def load_json(path: Union[str, Path]) -> Dict[str, Any]:
        """读取 JSON 配置文件"""
        path = Path(path)
        try:
            with open(path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except FileNotFoundError as e:
            raise ConfigError(f"config file not found: {path}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path} is not valid JSON: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        return data

    @staticmethod
    def merge(config: RunConfig, overrides: Dict[str, Any]) -> RunConfig:
        """
        将覆盖项合并到配置中（None 值忽略）

        Raises:
            ConfigError: 未知字段
        """
        known = {f.name for f in fields(RunConfig)}
        for key, value in overrides.items():
            if value is None or key == 'description':
                continue
            key = key.replace('-', '_')
            if key not in known:
                raise ConfigError(f"unknown config key '{key}'")
            if key == 'grid':
                grid = value if isinstance(value, GridSpec) else GridSpec(**{
                    **asdict(config.grid), **{k: v for k, v in value.items() if v is not None}})
                config.grid = grid
            else:
                setattr(config, key, value)
        return config

    def build_config(self, command: str, file_values: Optional[Dict[str, Any]] = None,
                     flag_values: Optional[Dict[str, Any]] = None) -> RunConfig:
        """预设 < 配置文件 < 命令行参数"""
        config = RunConfig(command=command)
        self.merge(config, dict(self.PRESETS.get(command, {})))
        self.merge(config, file_values or {})
        self.merge(config, flag_values or {})
        return config

    def validate_config(self, config: RunConfig) -> ValidationResult:
        """验证配置有效性"""
        result = ValidationResult(valid=True)

        if config.command == 'reproduce':
            if config.bundle not in self.BUNDLES:
                result.add_error(f"unknown bundle {config.bundle!r} (choose from {', '.join(self.BUNDLES)})")
        elif config.command not in self.COMMANDS:
            result.add_error(f"unknown command: {config.command!r}")

        # 种子
        if not isinstance(config.seed, int) or not 0 <= config.seed < 2 ** 64:
            result.add_error("seed must be an integer in [0, 2^64)")

        if config.threads is not None and config.threads < 1:
            result.add_error("threads must be >= 1")

        for level in list(config.levels) + list(config.quantile_levels):
            if not 0.0 < float(level) < 1.0:
                result.add_error(f"levels must lie in (0, 1), got {level}")

        self._validate_grid(config.grid, result)

        methods = self.SUPPORTED_METHODS.get(config.command)
        if methods and config.method and config.method not in methods:
            result.add_error(f"{config.command}: unsupported method {config.method!r} "
                             f"(choose from {', '.join(methods)})")

        for name in ('input', 'manifest'):
            value = getattr(config, name)
            if value and not Path(value).is_file():
                result.add_error(f"{name} file not found: {value}")

        for name in ('mc_samples', 'bootstrap_samples', 'reps', 'sample_size', 'multistart'):
            if getattr(config, name) < 1:
                result.add_error(f"{name} must be >= 1")

        if config.integral_mode not in self.INTEGRAL_MODES:
            result.add_error(f"integral_mode must be one of {', '.join(self.INTEGRAL_MODES)}")

        if config.tuning is not None and config.tuning <= 0:
            result.add_error("tuning parameter a must be > 0")
        if config.downweight is not None and not 0.0 < config.downweight < 1.0:
            result.add_error("downweight fraction must lie in (0, 1)")
        if config.command == 'robust-cc' and config.tuning is not None \
                and config.downweight is not None:
            result.add_warning("both tuning and downweight given; tuning takes precedence")

        if config.mc_samples < 1000 and config.command == 'optimal-cd' and not config.exact:
            result.add_warning("fewer than 1000 Monte Carlo samples per grid point")

        return result

    def _validate_grid(self, grid: GridSpec, result: ValidationResult):
        """验证网格设置"""
        if grid.points < 2:
            result.add_error("grid needs at least 2 points")
        if grid.spacing not in ('linear', 'log'):
            result.add_error(f"grid spacing must be 'linear' or 'log', got {grid.spacing!r}")
        if (grid.lower is None) != (grid.upper is None):
            result.add_warning("only one grid bound given; the default grid is used")
        if grid.is_explicit:
            if not grid.lower < grid.upper:
                result.add_error("grid lower bound must be below the upper bound")
            if grid.spacing == 'log' and grid.lower <= 0:
                result.add_error("log-spaced grid requires a positive lower bound")
