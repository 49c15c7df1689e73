"""Lambda Value at Risk: forecasts and backtests."""

from .backtests import (HitSequence, TestReport, hit_sequence, kupiec_lambda, kupiec_pof,
                        test1_coverage, test2_asymptotic, test3_simulation)
from .distributions import (EmpiricalDistribution, GarchTDistribution, GaussianDistribution,
                            ReturnSeries, fit_empirical, fit_garch_t, fit_gaussian)
from .errors import DataError, FitError, LambdaVarError
from .lambda_calibration import (BenchmarkPanel, LambdaConfig, LambdaFunction, calibrate_lambda,
                                 eval_lambda)
from .poisson_binomial import PoissonBinomial, pb_build, pb_cdf, pb_quantile
from .risk_measures import RiskForecast, lambda_var, solve_crossing, var

__version__ = "0.1.0"

__all__ = [
    "BenchmarkPanel", "DataError", "EmpiricalDistribution", "FitError", "GarchTDistribution",
    "GaussianDistribution", "HitSequence", "LambdaConfig", "LambdaFunction", "LambdaVarError",
    "PoissonBinomial", "ReturnSeries", "RiskForecast", "TestReport", "calibrate_lambda",
    "eval_lambda", "fit_empirical", "fit_garch_t", "fit_gaussian", "hit_sequence",
    "kupiec_lambda", "kupiec_pof", "lambda_var", "pb_build", "pb_cdf", "pb_quantile",
    "solve_crossing", "test1_coverage", "test2_asymptotic", "test3_simulation", "var",
]
