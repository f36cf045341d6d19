"""
confcurve - 置信分布与置信曲线

把置信分布 C(ψ) 与置信曲线 cc(ψ) 作为推断的输出：精确枢轴量、
剖面偏差与 Wilks/Bartlett 映射、指数族条件最优 CD、多来源融合、
随机效应离散度、无分布假设的分位数曲线和稳健幂散度曲线。
结果以可直接作图的 CSV 加 JSON 旁车文件输出。
"""

__version__ = "0.1.1"

__all__ = ['__version__']
