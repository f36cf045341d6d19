"""测试公共夹具"""

import numpy as np
import pandas as pd
import pytest

from confcurve.core.error_handler import setup_global_error_handler
from confcurve.core.path_manager import BUILTIN_FIXTURE_DIR, PathManager
from confcurve.core.performance_optimizer import BatchProcessor


@pytest.fixture(autouse=True)
def fresh_error_handler():
    """每个测试使用新的日志计数"""
    return setup_global_error_handler()


@pytest.fixture
def paths(tmp_path):
    return PathManager(tmp_path, BUILTIN_FIXTURE_DIR)


@pytest.fixture
def serial():
    return BatchProcessor(max_workers=1)


@pytest.fixture
def lidocaine_frame():
    return pd.read_csv(BUILTIN_FIXTURE_DIR / 'lidocaine.csv')


@pytest.fixture
def animals_loglog():
    frame = pd.read_csv(BUILTIN_FIXTURE_DIR / 'animals.csv')
    return np.log(frame[['x', 'y']].to_numpy(dtype=float))
