"""
confcurve - 推断模块

置信分布与置信曲线的构造：枢轴量、剖面似然与 Bartlett 修正、
指数族条件最优 CD、CD 融合、随机效应离散度、次序统计量分位数、
稳健幂散度。
"""

from .cd_core import (
    CDGrid, ConfidenceCurve, ConfidenceRegion, cc_from_cd, cd_from_cc,
    equi_tailed_interval, level_set_region, cd_from_pivot, student_pivot_cd,
    normal_approx_cd, read_cd_csv, write_curve_csv
)
from .likelihood_engine import (
    FocusMap, ParametricModel, DevianceCurve, CoverageReport, maximize_likelihood,
    profile_loglik, deviance_curve, wilks_cc, bartlett_factor, coverage_simulate
)
from .models import build_model, list_models, model_with_theta
from .expofam_conditional import (
    PairedCountStudy, ConditionalCDSpec, study_optimal_cd, conditional_cd_generic,
    combined_optimal_cd, combined_optimal_cd_exact
)
from .fusion import StudySummary, ConfidenceLogLik, normal_combine, confidence_loglik, iiccff_fuse
from .meta_random_effects import EffectEstimates, tau_cd, regression_slopes
from .nonparam_quantile import OrderedSample, interval_coverage, quantile_cc, quantile_region
from .robust_divergence import (
    DivergenceConfig, bhhj_criterion, bhhj_estimate, robust_profile_deviance, k_factor,
    robust_cc, tuning_from_downweight
)

__all__ = [
    'CDGrid', 'ConfidenceCurve', 'ConfidenceRegion', 'cc_from_cd', 'cd_from_cc',
    'equi_tailed_interval', 'level_set_region', 'cd_from_pivot', 'student_pivot_cd',
    'normal_approx_cd', 'read_cd_csv', 'write_curve_csv',
    'FocusMap', 'ParametricModel', 'DevianceCurve', 'CoverageReport', 'maximize_likelihood',
    'profile_loglik', 'deviance_curve', 'wilks_cc', 'bartlett_factor', 'coverage_simulate',
    'build_model', 'list_models', 'model_with_theta',
    'PairedCountStudy', 'ConditionalCDSpec', 'study_optimal_cd', 'conditional_cd_generic',
    'combined_optimal_cd', 'combined_optimal_cd_exact',
    'StudySummary', 'ConfidenceLogLik', 'normal_combine', 'confidence_loglik', 'iiccff_fuse',
    'EffectEstimates', 'tau_cd', 'regression_slopes',
    'OrderedSample', 'interval_coverage', 'quantile_cc', 'quantile_region',
    'DivergenceConfig', 'bhhj_criterion', 'bhhj_estimate', 'robust_profile_deviance',
    'k_factor', 'robust_cc', 'tuning_from_downweight',
]
