"""Pearson and Spearman correlation with two-sided p-values.

p-values come from the exact t-distribution with n-2 degrees of freedom
(t = r*sqrt((n-2)/(1-r^2))), evaluated through the regularized incomplete
beta function. Spearman additionally offers a permutation p-value for
cross-checking: exhaustive for n <= 10, seeded Monte Carlo (1e5 draws)
above that.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import SizeError, ValidationError


@dataclass
class CorrelationRecord:
    dataset: str
    delta: float
    frd_fsl: float
    frd_test: float

    def __post_init__(self):
        for name in ("delta", "frd_fsl", "frd_test"):
            if not np.isfinite(getattr(self, name)):
                raise ValidationError(f"{name} is not finite")


@dataclass
class CorrelationResult:
    r_pearson: float
    p_pearson: float
    r_spearman: float
    p_spearman: float
    n: int

    def to_json(self) -> dict:
        return {
            "r_pearson": self.r_pearson, "p_pearson": self.p_pearson,
            "r_spearman": self.r_spearman, "p_spearman": self.p_spearman,
            "n": self.n,
        }


def _t_sf(t: float, df: int) -> float:
    """P(T > t) for Student's t via the regularized incomplete beta."""
    x = df / (df + t * t)
    p = 0.5 * special.betainc(df / 2.0, 0.5, x)
    return p if t >= 0 else 1.0 - p


def t_pvalue(r: float, n: int) -> float:
    """Two-sided p-value of a correlation coefficient under the null."""
    if abs(r) >= 1.0:
        return 0.0
    t = abs(r) * np.sqrt((n - 2) / (1.0 - r * r))
    return float(min(1.0, 2.0 * _t_sf(t, n - 2)))


def pearson(x, y) -> tuple[float, float]:
    """Sample Pearson correlation and its two-sided t-test p-value."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError("x and y must be 1-D of equal length")
    n = x.size
    if n < 3:
        raise SizeError("need n >= 3")
    xc = x - x.mean()
    yc = y - y.mean()
    denom = np.sqrt((xc * xc).sum() * (yc * yc).sum())
    if denom == 0:
        raise ValidationError("constant input has no defined correlation")
    r = float(np.clip((xc * yc).sum() / denom, -1.0, 1.0))
    return r, t_pvalue(r, n)


def rank_average(x) -> np.ndarray:
    """Average ranks (1-based); ties get the mean of the occupied ranks."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.size, dtype=np.float64)
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(x, y) -> tuple[float, float]:
    """Rank correlation (average ranks) with the t-approximation p-value."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError("x and y must be 1-D of equal length")
    if x.size < 3:
        raise SizeError("need n >= 3")
    return pearson(rank_average(x), rank_average(y))


def spearman_perm_pvalue(x, y, n_mc: int = 100_000, seed: int = 0) -> float:
    """Two-sided permutation p-value for Spearman's rho.

    Exhaustive for n <= 10; Monte Carlo with n_mc seeded draws otherwise.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    rx = rank_average(x)
    ry = rank_average(y)
    rho_obs, _ = pearson(rx, ry)
    n = x.size

    def rho_of(perm) -> float:
        r, _ = pearson(rx, ry[np.asarray(perm)])
        return r

    if n <= 10:
        hits = total = 0
        for perm in itertools.permutations(range(n)):
            total += 1
            if abs(rho_of(perm)) >= abs(rho_obs) - 1e-12:
                hits += 1
        return hits / total
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(n_mc):
        if abs(rho_of(rng.permutation(n))) >= abs(rho_obs) - 1e-12:
            hits += 1
    return (hits + 1) / (n_mc + 1)


def correlate(records: list[CorrelationRecord], frd_field: str = "frd_fsl") -> CorrelationResult:
    """Both correlations of delta against the chosen FRD field."""
    if frd_field not in ("frd_fsl", "frd_test"):
        raise ValidationError(f"unknown FRD field {frd_field!r}")
    if len(records) < 3:
        raise SizeError("need at least 3 records")
    delta = np.array([r.delta for r in records])
    frd = np.array([getattr(r, frd_field) for r in records])
    rp, pp = pearson(delta, frd)
    rs, ps = spearman(delta, frd)
    return CorrelationResult(r_pearson=rp, p_pearson=pp, r_spearman=rs, p_spearman=ps,
                             n=len(records))


def scatter_rows(records: list[CorrelationRecord], frd_field: str) -> list[dict]:
    """Per-record rows backing the correlation scatter plot CSV."""
    return [
        {"dataset": r.dataset, "delta": r.delta, "frd": getattr(r, frd_field)}
        for r in records
    ]
