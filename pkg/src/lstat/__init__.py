"""High-dimensional one-sample location tests built on L-statistics."""

__version__ = "0.1.0"

from .adaptive import TestReport, adaptive_l_test, cauchy_combine
from .battery import Battery, run_tests
from .bootstrap import BootstrapDistribution, wild_bootstrap
from .core import KGrid, SampleMatrix, TStatPanel, default_k_grid, l_statistic, t_statistics
from .numstat import RngStream

__all__ = [
    "Battery",
    "BootstrapDistribution",
    "KGrid",
    "RngStream",
    "SampleMatrix",
    "TStatPanel",
    "TestReport",
    "adaptive_l_test",
    "cauchy_combine",
    "default_k_grid",
    "l_statistic",
    "run_tests",
    "t_statistics",
    "wild_bootstrap",
]
