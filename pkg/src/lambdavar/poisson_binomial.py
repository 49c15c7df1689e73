"""Exact distribution of a sum of independent, non-identical Bernoulli variables."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class PoissonBinomial:
    probs: np.ndarray
    pmf: np.ndarray

    @property
    def n(self) -> int:
        return self.probs.size

    def mean(self) -> float:
        return float(np.dot(np.arange(self.pmf.size), self.pmf))

    def var(self) -> float:
        k = np.arange(self.pmf.size)
        return float(np.dot(k * k, self.pmf) - self.mean() ** 2)

    def cdf(self, k: int) -> float:
        return pb_cdf(self, k)

    def sf(self, k: int) -> float:
        """P(Z >= k), summed from the upper tail to keep small values accurate."""
        if k <= 0:
            return 1.0
        if k > self.n:
            return 0.0
        return float(min(1.0, self.pmf[k:].sum()))

    def quantile(self, u: float) -> int:
        return pb_quantile(self, u)


def pb_build(probs) -> PoissonBinomial:
    """Fold each probability into the pmf: pmf'[k] = pmf[k](1-p) + pmf[k-1]p."""
    p = np.asarray(probs, dtype=float).ravel()
    if p.size < 1:
        raise ValueError("need at least one probability")
    if np.any(~np.isfinite(p)) or np.any((p < 0) | (p > 1)):
        raise ValueError("probabilities must lie in [0, 1]")
    pmf = np.zeros(p.size + 1)
    pmf[0] = 1.0
    for i, pi in enumerate(p):
        # update in place from the top so pmf[k-1] is still the old value
        pmf[1:i + 2] = pmf[1:i + 2] * (1.0 - pi) + pmf[:i + 1] * pi
        pmf[0] *= 1.0 - pi
    p.setflags(write=False)
    pmf.setflags(write=False)
    return PoissonBinomial(p, pmf)


def pb_cdf(d: PoissonBinomial, k: int) -> float:
    if k < 0:
        return 0.0
    if k >= d.n:
        return 1.0
    return float(min(1.0, d.pmf[:k + 1].sum()))


def pb_quantile(d: PoissonBinomial, u: float) -> int:
    """min{k : cdf(k) >= u}."""
    if not 0.0 < u < 1.0:
        raise ValueError(f"quantile level must lie in (0, 1), got {u}")
    cum = np.cumsum(d.pmf)
    return int(min(np.searchsorted(cum, u, side="left"), d.n))
