import math

import numpy as np
import pytest
from scipy import integrate

from mribench.errors import SizeError, ValidationError
from mribench.stats import (
    CorrelationRecord,
    correlate,
    pearson,
    rank_average,
    scatter_rows,
    spearman,
    spearman_perm_pvalue,
)


# ------------------------------------------------------------- oracles

def pearson_two_pass(x, y) -> float:
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    num = sum((xi - mx) * (yi - my) for xi, yi in zip(x, y))
    dx = math.sqrt(sum((xi - mx) ** 2 for xi in x))
    dy = math.sqrt(sum((yi - my) ** 2 for yi in y))
    return num / (dx * dy)


def t_density(x: float, df: int) -> float:
    c = math.exp(math.lgamma((df + 1) / 2) - math.lgamma(df / 2)) / math.sqrt(df * math.pi)
    return c * (1.0 + x * x / df) ** (-(df + 1) / 2)


def p_quadrature(r: float, n: int) -> float:
    t = abs(r) * math.sqrt((n - 2) / (1 - r * r))
    tail, _ = integrate.quad(t_density, t, np.inf, args=(n - 2,))
    return 2.0 * tail


def ranks_bruteforce(x) -> list[float]:
    out = []
    for xi in x:
        below = sum(1 for xj in x if xj < xi)
        equal = sum(1 for xj in x if xj == xi)
        out.append(below + (equal + 1) / 2.0)
    return out


# ------------------------------------------------------------- pearson

def test_pearson_perfect_line():
    x = np.arange(10.0)
    r, p = pearson(x, 2 * x + 1)
    assert r == pytest.approx(1.0)
    assert p <= 1e-6


def test_pearson_anticorrelated():
    x = np.arange(5.0)
    r, _ = pearson(x, -x)
    assert r == pytest.approx(-1.0)


def test_pearson_matches_two_pass_and_quadrature():
    rng = np.random.default_rng(0)
    x = rng.normal(size=20)
    y = 0.4 * x + rng.normal(size=20)
    r, p = pearson(x, y)
    assert r == pytest.approx(pearson_two_pass(list(x), list(y)), abs=1e-12)
    assert p == pytest.approx(p_quadrature(r, 20), abs=1e-6)


def test_pearson_sign_property():
    rng = np.random.default_rng(1)
    x = rng.normal(size=12)
    for a in (3.0, -0.5):
        r, _ = pearson(x, a * x + 2.0)
        assert r == pytest.approx(math.copysign(1.0, a))


def test_pearson_symmetry():
    rng = np.random.default_rng(2)
    x = rng.normal(size=15)
    y = rng.normal(size=15)
    assert pearson(x, y) == pearson(y, x)


def test_pearson_errors():
    with pytest.raises(SizeError):
        pearson([1.0, 2.0], [1.0, 2.0])
    with pytest.raises(ValidationError):
        pearson([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])


def test_pvalues_decrease_as_r_grows():
    from mribench.stats import t_pvalue

    ps = [t_pvalue(r, 10) for r in (0.1, 0.3, 0.5, 0.7, 0.9)]
    assert all(ps[i + 1] < ps[i] for i in range(len(ps) - 1))


# ------------------------------------------------------------ spearman

def test_spearman_monotone_invariance():
    x = np.array([0.5, 1.0, 2.0, 3.5, 7.0])
    rho, _ = spearman(x, x**3)
    assert rho == pytest.approx(1.0)


def test_rank_average_tie_rule():
    assert rank_average([1.0, 1.0, 2.0]).tolist() == [1.5, 1.5, 3.0]


def test_rank_average_matches_bruteforce_with_ties():
    rng = np.random.default_rng(3)
    x = rng.integers(0, 5, size=15).astype(float)
    assert rank_average(x).tolist() == ranks_bruteforce(list(x))


def test_spearman_matches_rank_oracle():
    rng = np.random.default_rng(4)
    x = rng.integers(0, 6, size=15).astype(float)
    y = rng.integers(0, 6, size=15).astype(float)
    rho, _ = spearman(x, y)
    oracle = pearson_two_pass(ranks_bruteforce(list(x)), ranks_bruteforce(list(y)))
    assert rho == pytest.approx(oracle, abs=1e-12)


def test_spearman_invariant_under_strictly_increasing_transform():
    rng = np.random.default_rng(5)
    x = rng.normal(size=12)
    y = rng.normal(size=12)
    rho1, _ = spearman(x, y)
    rho2, _ = spearman(np.exp(x), y)
    assert rho1 == pytest.approx(rho2, abs=1e-15)


def test_spearman_permutation_exact_small_n():
    x = np.arange(7.0)
    p = spearman_perm_pvalue(x, x)
    # only the identity and the full reversal reach |rho| = 1
    assert p == pytest.approx(2 / math.factorial(7))


def test_spearman_permutation_agrees_qualitatively():
    rng = np.random.default_rng(6)
    x = np.arange(8.0)
    y = x + rng.normal(scale=0.5, size=8)
    rho, p_t = spearman(x, y)
    p_perm = spearman_perm_pvalue(x, y)
    assert rho > 0.9
    assert p_perm < 0.05 and p_t < 0.05


# ----------------------------------------------------------- correlate

def records_from(deltas, frds):
    return [
        CorrelationRecord(dataset=f"d{i}", delta=float(d), frd_fsl=float(f),
                          frd_test=float(f) * 1.5 + 0.2)
        for i, (d, f) in enumerate(zip(deltas, frds))
    ]


def test_correlate_exact_negative():
    frds = np.linspace(1.0, 5.0, 6)
    recs = records_from(-frds, frds)
    res = correlate(recs, "frd_fsl")
    assert res.r_pearson == pytest.approx(-1.0)
    assert res.r_spearman == pytest.approx(-1.0)
    assert res.n == 6


def test_correlate_noisy_negative_trend():
    rng = np.random.default_rng(7)
    frds = np.linspace(1.0, 10.0, 10)
    deltas = -0.5 * frds + rng.normal(scale=0.3, size=10)
    res = correlate(records_from(deltas, frds), "frd_fsl")
    assert res.r_pearson < -0.9
    assert res.p_pearson < 0.01


def test_correlate_deterministic():
    recs = records_from([1.0, 0.5, -0.2, 0.9], [3.0, 4.0, 8.0, 2.0])
    assert correlate(recs, "frd_test") == correlate(recs, "frd_test")


def test_correlate_needs_three_records():
    with pytest.raises(SizeError):
        correlate(records_from([1.0, 2.0], [1.0, 2.0]), "frd_fsl")


def test_record_rejects_nonfinite():
    with pytest.raises(ValidationError):
        CorrelationRecord(dataset="x", delta=float("nan"), frd_fsl=1.0, frd_test=1.0)


def test_scatter_rows_shape():
    recs = records_from([1.0, 2.0, 3.0], [5.0, 4.0, 3.0])
    rows = scatter_rows(recs, "frd_fsl")
    assert rows[0] == {"dataset": "d0", "delta": 1.0, "frd": 5.0}
    assert len(rows) == 3
