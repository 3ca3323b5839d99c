"""U-statistics of high-frequency observations of continuous Ito semimartingales.

Modules
-------
sim      path simulation, CSV ingestion, named volatility models
kernel   symmetric kernels and their variance symmetrizations
ustat    the U-statistic engine and empirical distribution functions
limit    Gaussian functionals and limit / variance oracles
varest   conditional variance estimation and standardization
apps     Gini mean difference, L^p homoscedasticity test, Wilcoxon change point
mc       Monte Carlo harness
cli      command-line front end
"""
from .apps import TestReport, gini, lp_test, wilcoxon
from .errors import ConfigError, FlooredVariance, HfuError
from .kernel import Kernel, Smoothness, builtin, make_g1, make_g2
from .limit import VolatilityPath, analytic_variance, limit_cdf, limit_u, rho, wilcoxon_limit
from .sim import IncrementSeries, ProcessSpec, SamplePath, increments, ingest_path, \
    make_model, simulate_path
from .ustat import EvaluationWindow, u_statistic, u_statistic_path
from .varest import estimate_variance, standardized_statistic

__version__ = "0.1.0"

__all__ = [
    "TestReport", "gini", "lp_test", "wilcoxon",
    "ConfigError", "FlooredVariance", "HfuError",
    "Kernel", "Smoothness", "builtin", "make_g1", "make_g2",
    "VolatilityPath", "analytic_variance", "limit_cdf", "limit_u", "rho", "wilcoxon_limit",
    "IncrementSeries", "ProcessSpec", "SamplePath", "increments", "ingest_path",
    "make_model", "simulate_path",
    "EvaluationWindow", "u_statistic", "u_statistic_path",
    "estimate_variance", "standardized_statistic",
]
