"""Predictive return distributions: historical, Gaussian and GARCH(1,1)-t.

Every model exposes the same small surface (``cdf``, ``cdf_left``,
``quantile``, ``sample``) so that risk measures and the simulation test can
treat them uniformly.  Returns are simple returns on the signed axis, losses
negative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import date
from typing import Any, ClassVar, Protocol, Sequence, Union

import numba
import numpy as np
from scipy import special
from scipy.optimize import minimize

from .errors import DataError, FitError

ArrayLike = Union[float, np.ndarray, Sequence[float]]

NU_MIN = 2.5
NU_MAX = 100.0


# --------------------------------------------------------------------------
# Special functions
# --------------------------------------------------------------------------

def std_normal_cdf(z):
    return special.ndtr(z)


def std_normal_quantile(u):
    u_arr = np.asarray(u, dtype=float)
    if np.any((u_arr <= 0.0) | (u_arr >= 1.0)) or np.any(np.isnan(u_arr)):
        raise ValueError("normal quantile requires u in (0, 1)")
    return special.ndtri(u)


def student_t_cdf(z, nu: float):
    """CDF of the (non-standardized) Student-t with ``nu`` degrees of freedom."""
    if not nu > 2.0:
        raise ValueError(f"degrees of freedom must exceed 2, got {nu}")
    return special.stdtr(nu, z)


def student_t_quantile(u, nu: float):
    if not nu > 2.0:
        raise ValueError(f"degrees of freedom must exceed 2, got {nu}")
    u_arr = np.asarray(u, dtype=float)
    if np.any((u_arr <= 0.0) | (u_arr >= 1.0)):
        raise ValueError("t quantile requires u in (0, 1)")
    return special.stdtrit(nu, u)


# --------------------------------------------------------------------------
# Return series
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ReturnSeries:
    """Daily simple returns with their (strictly increasing) dates."""

    dates: tuple[date, ...]
    values: np.ndarray
    name: str = ""

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "dates", tuple(self.dates))
        if values.ndim != 1:
            raise DataError("returns must be one-dimensional")
        if len(self.dates) != values.size:
            raise DataError(
                f"{len(self.dates)} dates for {values.size} returns in {self.name!r}")
        if not np.all(np.isfinite(values)):
            raise DataError(f"non-finite return in {self.name!r}")
        if np.any(values <= -1.0):
            raise DataError(f"return <= -100% in {self.name!r}")
        for a, b in zip(self.dates, self.dates[1:]):
            if not a < b:
                raise DataError(f"dates not strictly increasing at {b} in {self.name!r}")

    def __len__(self) -> int:
        return self.values.size

    def slice(self, start: int, stop: int) -> "ReturnSeries":
        return ReturnSeries(self.dates[start:stop], self.values[start:stop], self.name)


# --------------------------------------------------------------------------
# Distributions
# --------------------------------------------------------------------------

class PredictiveDistribution(Protocol):
    kind: ClassVar[str]
    continuous: ClassVar[bool]

    def cdf(self, x): ...

    def cdf_left(self, x): ...

    def quantile(self, u: float) -> float: ...

    def sample(self, rng: np.random.Generator, size=None): ...

    def params(self) -> dict[str, Any]: ...


def _check_level(u: float) -> None:
    if not 0.0 < u < 1.0:
        raise ValueError(f"probability level must lie in (0, 1), got {u}")


@dataclass(frozen=True, eq=False)
class EmpiricalDistribution:
    """Step-function CDF of a historical window (no interpolation)."""

    sorted_window: np.ndarray

    kind: ClassVar[str] = "historical"
    continuous: ClassVar[bool] = False

    def __post_init__(self):
        w = np.sort(np.asarray(self.sorted_window, dtype=float))
        w.setflags(write=False)
        object.__setattr__(self, "sorted_window", w)

    @property
    def size(self) -> int:
        return self.sorted_window.size

    def cdf(self, x):
        return np.searchsorted(self.sorted_window, x, side="right") / self.size

    def cdf_left(self, x):
        return np.searchsorted(self.sorted_window, x, side="left") / self.size

    def quantile(self, u: float) -> float:
        _check_level(u)
        n = self.size
        # smallest k with k / n >= u, robust to rounding in u * n
        k = max(1, math.ceil(u * n))
        while k > 1 and (k - 1) / n >= u:
            k -= 1
        while k / n < u:
            k += 1
        return float(self.sorted_window[k - 1])

    def upper_quantile(self, u: float) -> float:
        """inf{x : cdf(x) > u}, the order statistic used by strict-inequality VaR."""
        _check_level(u)
        n = self.size
        k = math.floor(u * n) + 1
        while k > 1 and (k - 1) / n > u:
            k -= 1
        while k / n <= u:
            k += 1
        return float(self.sorted_window[k - 1])

    def sample(self, rng: np.random.Generator, size=None):
        return self.sorted_window[rng.integers(0, self.size, size=size)]

    def params(self) -> dict[str, Any]:
        return {"sorted_window": self.sorted_window.tolist()}


@dataclass(frozen=True)
class GaussianDistribution:
    mu: float
    sigma: float

    kind: ClassVar[str] = "gaussian"
    continuous: ClassVar[bool] = True

    def __post_init__(self):
        if not (np.isfinite(self.mu) and self.sigma > 0 and np.isfinite(self.sigma)):
            raise DataError(f"invalid Gaussian parameters mu={self.mu}, sigma={self.sigma}")

    def cdf(self, x):
        return special.ndtr((np.asarray(x, dtype=float) - self.mu) / self.sigma)

    cdf_left = cdf

    def quantile(self, u: float) -> float:
        _check_level(u)
        return float(self.mu + self.sigma * special.ndtri(u))

    def sample(self, rng: np.random.Generator, size=None):
        return self.mu + self.sigma * rng.standard_normal(size)

    def params(self) -> dict[str, Any]:
        return {"mu": self.mu, "sigma": self.sigma}


@dataclass(frozen=True)
class GarchTDistribution:
    """One-step-ahead zero-mean GARCH(1,1) forecast with unit-variance t shocks."""

    omega: float
    alpha: float
    beta: float
    nu: float
    sigma2_next: float
    loglik: float = field(default=float("nan"), compare=False)

    kind: ClassVar[str] = "garch_t"
    continuous: ClassVar[bool] = True

    def __post_init__(self):
        ok = (self.omega > 0 and self.alpha >= 0 and self.beta >= 0
              and self.alpha + self.beta < 1 and self.nu > 2 and self.sigma2_next > 0
              and np.isfinite(self.sigma2_next))
        if not ok:
            raise FitError(
                "GARCH parameters violate constraints: "
                f"omega={self.omega}, alpha={self.alpha}, beta={self.beta}, "
                f"nu={self.nu}, sigma2_next={self.sigma2_next}")

    @property
    def scale(self) -> float:
        # t with nu dof has variance nu / (nu - 2)
        return math.sqrt(self.sigma2_next * (self.nu - 2.0) / self.nu)

    def cdf(self, x):
        return special.stdtr(self.nu, np.asarray(x, dtype=float) / self.scale)

    cdf_left = cdf

    def quantile(self, u: float) -> float:
        _check_level(u)
        return float(self.scale * special.stdtrit(self.nu, u))

    def sample(self, rng: np.random.Generator, size=None):
        return self.scale * rng.standard_t(self.nu, size)

    def params(self) -> dict[str, Any]:
        return {"omega": self.omega, "alpha": self.alpha, "beta": self.beta,
                "nu": self.nu, "sigma2_next": self.sigma2_next}

    @property
    def unconditional_variance(self) -> float:
        return self.omega / (1.0 - self.alpha - self.beta)


_KINDS = {cls.kind: cls for cls in (EmpiricalDistribution, GaussianDistribution, GarchTDistribution)}
MODEL_IDS = tuple(_KINDS)


def distribution_from_params(kind: str, params: dict[str, Any]) -> PredictiveDistribution:
    """Rebuild a distribution from ``(dist.kind, dist.params())``."""
    try:
        cls = _KINDS[kind]
    except KeyError:
        raise DataError(f"unknown model kind {kind!r}") from None
    if cls is EmpiricalDistribution:
        return EmpiricalDistribution(np.asarray(params["sorted_window"], dtype=float))
    return cls(**params)


# --------------------------------------------------------------------------
# Fitting
# --------------------------------------------------------------------------

def _as_window(window, min_len: int) -> np.ndarray:
    values = window.values if isinstance(window, ReturnSeries) else window
    r = np.asarray(values, dtype=float)
    if r.ndim != 1 or r.size < min_len:
        raise DataError(f"estimation window needs at least {min_len} returns, got {r.size}")
    if not np.all(np.isfinite(r)):
        raise DataError("estimation window contains non-finite values")
    return r


def fit_empirical(window) -> EmpiricalDistribution:
    return EmpiricalDistribution(_as_window(window, 2))


def fit_gaussian(window) -> GaussianDistribution:
    r = _as_window(window, 2)
    sigma = float(np.std(r, ddof=1))
    # np.std of a constant array can be a rounding residue rather than 0
    if np.ptp(r) == 0 or not sigma > 0:
        raise DataError("zero-variance estimation window")
    return GaussianDistribution(float(np.mean(r)), sigma)


@numba.njit(cache=True)
def _unpack(theta):
    # keep strictly inside the constraints after floating-point rounding
    omega = max(math.exp(min(theta[0], 0.0)), 1e-300)
    persistence = min(1.0 / (1.0 + math.exp(-theta[1])), 1.0 - 1e-9)
    alpha = persistence / (1.0 + math.exp(-theta[2]))
    beta = persistence - alpha
    nu = 2.5 + 97.5 / (1.0 + math.exp(-theta[3]))
    return omega, alpha, beta, nu


@numba.njit(cache=True)
def _garch_nll(theta, r, sigma2_0):
    omega, alpha, beta, nu = _unpack(theta)
    const = (math.lgamma(0.5 * (nu + 1.0)) - math.lgamma(0.5 * nu)
             - 0.5 * math.log(math.pi * (nu - 2.0)))
    s2 = sigma2_0
    ll = 0.0
    for t in range(r.size):
        if t > 0:
            s2 = omega + alpha * r[t - 1] * r[t - 1] + beta * s2
        ll += const - 0.5 * math.log(s2) - 0.5 * (nu + 1.0) * math.log1p(r[t] * r[t] / (s2 * (nu - 2.0)))
    if not math.isfinite(ll):
        return 1e300
    return -ll


@numba.njit(cache=True)
def garch_variance_path(r, omega, alpha, beta, sigma2_0):
    """Conditional variances sigma2[0..n], the last entry being the forecast."""
    out = np.empty(r.size + 1)
    out[0] = sigma2_0
    for t in range(r.size):
        out[t + 1] = omega + alpha * r[t] * r[t] + beta * out[t]
    return out


def _pack(omega, alpha, beta, nu):
    persistence = min(max(alpha + beta, 1e-6), 1 - 1e-6)
    share = min(max(alpha / persistence, 1e-6), 1 - 1e-6)
    nu_frac = min(max((nu - NU_MIN) / (NU_MAX - NU_MIN), 1e-6), 1 - 1e-6)
    logit = lambda p: math.log(p / (1.0 - p))  # noqa: E731
    return np.array([math.log(omega), logit(persistence), logit(share), logit(nu_frac)])


_DEFAULT_STARTS = ((0.05, 0.90, 8.0), (0.10, 0.50, 8.0), (0.02, 0.05, 20.0))


def fit_garch_t(window, warm_start: GarchTDistribution | None = None,
                maxiter: int = 2000, tol: float = 1e-8) -> GarchTDistribution:
    """Maximum-likelihood GARCH(1,1) with standardized Student-t innovations.

    The variance recursion starts from the sample variance of the window.
    Without ``warm_start`` three fixed starting points are tried and the best
    optimum is kept; with it, a single Nelder-Mead run starts from the given
    parameters (the rolling engine passes the previous day's fit).
    """
    r = _as_window(window, 100)
    var0 = float(np.var(r, ddof=1))
    if np.ptp(r) == 0 or not var0 > 0:
        raise DataError("zero-variance estimation window")

    best = None
    if warm_start is not None:
        x0 = _pack(warm_start.omega, warm_start.alpha, warm_start.beta, warm_start.nu)
        best = _minimize_nll(x0, r, var0, maxiter, tol)
    if best is None:
        for a, b, nu in _DEFAULT_STARTS:
            res = _minimize_nll(_pack(var0 * (1 - a - b), a, b, nu), r, var0, maxiter, tol)
            if res is not None and (best is None or res.fun < best.fun):
                best = res
    if best is None:
        raise FitError("GARCH likelihood maximization did not converge")

    omega, alpha, beta, nu = _unpack(best.x)
    sigma2 = garch_variance_path(r, omega, alpha, beta, var0)
    return GarchTDistribution(omega, alpha, beta, nu, float(sigma2[-1]), loglik=-float(best.fun))


def _minimize_nll(x0, r, var0, maxiter, tol):
    # only the log-likelihood tolerance decides convergence; flat directions
    # (alpha near 0, nu near its cap) would otherwise never meet an x tolerance
    res = minimize(_garch_nll, x0, args=(r, var0), method="Nelder-Mead",
                   options={"fatol": tol, "xatol": np.inf, "maxiter": maxiter,
                            "maxfev": 4 * maxiter})
    if not res.success or not np.isfinite(res.fun) or res.fun >= 1e299:
        return None
    return res


def simulate_garch_t(omega: float, alpha: float, beta: float, nu: float, n: int,
                     rng: np.random.Generator, burn: int = 500) -> np.ndarray:
    """Zero-mean GARCH(1,1) path with unit-variance t innovations."""
    if not (omega > 0 and alpha >= 0 and beta >= 0 and alpha + beta < 1 and nu > 2):
        raise DataError("invalid GARCH generator parameters")
    z = rng.standard_t(nu, n + burn) * math.sqrt((nu - 2.0) / nu)
    return _garch_simulate(z, omega, alpha, beta)[burn:]


@numba.njit(cache=True)
def _garch_simulate(z, omega, alpha, beta):
    out = np.empty(z.size)
    s2 = omega / (1.0 - alpha - beta)
    for t in range(z.size):
        out[t] = math.sqrt(s2) * z[t]
        s2 = omega + alpha * out[t] * out[t] + beta * s2
    return out


FITTERS = {
    "historical": fit_empirical,
    "gaussian": fit_gaussian,
    "garch_t": fit_garch_t,
}
