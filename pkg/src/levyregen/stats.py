"""Hypothesis tests used by every verification flow.

Two-sample Kolmogorov-Smirnov with asymptotic p-values, Pearson chi-square
(goodness of fit, homogeneity, independence) with pooling of sparse cells,
Poisson dispersion, and Holm's step-down correction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import chdtrc

KS_MIN_SIZE = 50
CELL_FLOOR = 5.0
DISPERSION_MIN_SIZE = 100


class SampleSizeError(ValueError):
    """Too few observations for the requested test."""


def kolmogorov_sf(x: float) -> float:
    """``P(K > x)`` for the Kolmogorov distribution ``K = sup |B^br|``."""
    if x <= 0:
        return 1.0
    if x < 1.18:
        # Jacobi theta form converges fast for small x
        w = math.pi**2 / (8.0 * x * x)
        s = sum(math.exp(-((2 * k - 1) ** 2) * w) for k in range(1, 8))
        return min(1.0, max(0.0, 1.0 - math.sqrt(2.0 * math.pi) / x * s))
    s = 0.0
    for k in range(1, 101):
        term = math.exp(-2.0 * k * k * x * x)
        s += term if k % 2 else -term
        if term < 1e-300:
            break
    return min(1.0, max(0.0, 2.0 * s))


def ks_two_sample(a, b) -> tuple[float, float]:
    """Two-sample KS statistic ``D = sup |F_a - F_b|`` and asymptotic p-value.

    The p-value uses the Kolmogorov limit with effective size
    ``n_a n_b / (n_a + n_b)``.  ECDFs are right-continuous, so tied values are
    handled exactly.

    Raises
    ------
    SampleSizeError
        Either sample has fewer than 50 observations.
    """
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    na, nb = a.size, b.size
    if na < KS_MIN_SIZE or nb < KS_MIN_SIZE:
        raise SampleSizeError(f"KS needs >= {KS_MIN_SIZE} observations per sample, got {na} and {nb}")
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / na
    fb = np.searchsorted(b, grid, side="right") / nb
    d = float(np.max(np.abs(fa - fb)))
    ne = na * nb / (na + nb)
    return d, kolmogorov_sf(math.sqrt(ne) * d)


def ks_one_sample(sample, cdf) -> tuple[float, float]:
    """One-sample KS against a continuous CDF (vectorized callable)."""
    x = np.sort(np.asarray(sample, dtype=float).ravel())
    n = x.size
    if n < KS_MIN_SIZE:
        raise SampleSizeError(f"KS needs >= {KS_MIN_SIZE} observations, got {n}")
    f = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    d = float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))
    return d, kolmogorov_sf(math.sqrt(n) * d)


def _pool_cells(observed: np.ndarray, expected: np.ndarray, floor: float):
    """Merge consecutive cells left to right until each expectation reaches ``floor``."""
    obs_out, exp_out = [], []
    o_acc = e_acc = 0.0
    for o, e in zip(observed, expected):
        o_acc += o
        e_acc += e
        if e_acc >= floor:
            obs_out.append(o_acc)
            exp_out.append(e_acc)
            o_acc = e_acc = 0.0
    if e_acc > 0 or o_acc > 0:
        if exp_out:
            obs_out[-1] += o_acc
            exp_out[-1] += e_acc
        else:
            obs_out.append(o_acc)
            exp_out.append(e_acc)
    return np.array(obs_out), np.array(exp_out)


def chi_square_gof(observed, expected, floor: float = CELL_FLOOR) -> tuple[float, float]:
    """Pearson goodness of fit with ``cells - 1`` degrees of freedom.

    ``expected`` is rescaled to the observed total, and neighbouring cells are
    pooled (tails first, in cell order) until every expectation is at least
    ``floor``.  With a single cell left there is nothing to test and the
    result is ``(0.0, 1.0)``.
    """
    observed = np.asarray(observed, dtype=float).ravel()
    expected = np.asarray(expected, dtype=float).ravel()
    if observed.shape != expected.shape:
        raise ValueError("observed and expected must have the same length")
    if np.any(expected < 0) or np.any(observed < 0):
        raise ValueError("counts must be non-negative")
    if expected.sum() <= 0:
        raise ValueError("expected counts are all zero")
    total = observed.sum()
    if total > 0:
        expected = expected * (total / expected.sum())
    obs, exp = _pool_cells(observed, expected, floor)
    if obs.size < 2:
        return 0.0, 1.0
    stat = float(np.sum((obs - exp) ** 2 / exp))
    return stat, float(chdtrc(obs.size - 1, stat))


def chi_square_independence(table) -> tuple[float, float]:
    """Pearson test of independence for a contingency table (empty rows/columns dropped)."""
    t = np.asarray(table, dtype=float)
    if t.ndim != 2:
        raise ValueError("contingency table must be 2-D")
    t = t[t.sum(axis=1) > 0][:, t.sum(axis=0) > 0]
    r, c = t.shape
    if r < 2 or c < 2:
        return 0.0, 1.0
    expected = np.outer(t.sum(axis=1), t.sum(axis=0)) / t.sum()
    stat = float(np.sum((t - expected) ** 2 / expected))
    return stat, float(chdtrc((r - 1) * (c - 1), stat))


def chi_square_homogeneity(counts_a, counts_b, floor: float = CELL_FLOOR) -> tuple[float, float]:
    """Do two count vectors over the same categories come from one distribution?

    Categories are pooled in order until every cell of the 2 x k table has
    expectation at least ``floor``.
    """
    a = np.asarray(counts_a, dtype=float).ravel()
    b = np.asarray(counts_b, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError("count vectors must have the same length")
    na, nb = a.sum(), b.sum()
    if na <= 0 or nb <= 0:
        raise SampleSizeError("both samples must be non-empty")
    total = na + nb
    # column total needed so that min(row) * col / total >= floor
    need = floor * total / min(na, nb)
    cols_a, cols_b = [], []
    acc_a = acc_b = 0.0
    for x, y in zip(a, b):
        acc_a += x
        acc_b += y
        if acc_a + acc_b >= need:
            cols_a.append(acc_a)
            cols_b.append(acc_b)
            acc_a = acc_b = 0.0
    if acc_a + acc_b > 0:
        if cols_a:
            cols_a[-1] += acc_a
            cols_b[-1] += acc_b
        else:
            cols_a.append(acc_a)
            cols_b.append(acc_b)
    return chi_square_independence(np.array([cols_a, cols_b]))


def poisson_dispersion(counts) -> tuple[float, float]:
    """Sample mean and index of dispersion ``var / mean`` (``nan`` if the mean is 0)."""
    c = np.asarray(counts, dtype=float).ravel()
    if c.size < DISPERSION_MIN_SIZE:
        raise SampleSizeError(f"dispersion needs >= {DISPERSION_MIN_SIZE} counts, got {c.size}")
    mean = float(c.mean())
    if mean == 0:
        return 0.0, math.nan
    return mean, float(c.var(ddof=1) / mean)


def holm_adjust(p_values) -> np.ndarray:
    """Holm step-down adjusted p-values (monotone in sorted order, clipped at 1)."""
    p = np.asarray(p_values, dtype=float).ravel()
    if np.any(~np.isfinite(p)) or np.any((p < 0) | (p > 1)):
        raise ValueError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    scaled = (m - np.arange(m)) * p[order]
    adj_sorted = np.minimum(1.0, np.maximum.accumulate(scaled))
    out = np.empty(m)
    out[order] = adj_sorted
    return np.maximum(out, p)


@dataclass(frozen=True)
class TestEntry:
    __test__ = False

    label: str
    statistic: float
    p: float
    p_adj: float
    reject: bool

    def to_json(self) -> dict:
        return {"label": self.label, "stat": self.statistic, "p": self.p,
                "p_adj": self.p_adj, "reject": self.reject}


@dataclass(frozen=True)
class TestReport:
    """A Holm-corrected family of tests."""

    __test__ = False

    entries: tuple[TestEntry, ...]
    family_alpha: float = 0.01

    @classmethod
    def from_tests(cls, tests, family_alpha: float = 0.01) -> "TestReport":
        """Build from ``(label, statistic, p)`` triples."""
        tests = list(tests)
        adj = holm_adjust([p for _, _, p in tests]) if tests else []
        entries = tuple(
            TestEntry(label, float(stat), float(p), float(pa), bool(pa <= family_alpha))
            for (label, stat, p), pa in zip(tests, adj))
        return cls(entries, family_alpha)

    @property
    def overall_verdict(self) -> bool:
        """True iff no adjusted p-value falls at or below the family level."""
        return not any(e.reject for e in self.entries)

    @property
    def min_adjusted_p(self) -> float:
        return min((e.p_adj for e in self.entries), default=1.0)

    def to_json(self) -> dict:
        return {"entries": [e.to_json() for e in self.entries],
                "family_alpha": self.family_alpha, "verdict": self.overall_verdict}

    @classmethod
    def from_json(cls, data: dict) -> "TestReport":
        entries = tuple(TestEntry(e["label"], e["stat"], e["p"], e["p_adj"], e["reject"])
                        for e in data["entries"])
        return cls(entries, data["family_alpha"])

    def summary_lines(self) -> list[str]:
        return [f"{'REJECT' if e.reject else 'ok':6s} p={e.p:.3g} p_adj={e.p_adj:.3g}  {e.label}"
                for e in self.entries]


def marginal_tests(label: str, a: np.ndarray, b: np.ndarray) -> list[tuple[str, float, float]]:
    """Law-equality tests for two samples of ``R^d ∪ {∂}`` values.

    ``a`` and ``b`` are ``(n, d)`` arrays with NaN rows for the cemetery.  A
    survival chi-square is included when either sample has deaths; KS runs per
    coordinate on the survivors.
    """
    a = np.asarray(a, dtype=float).reshape(len(a), -1)
    b = np.asarray(b, dtype=float).reshape(len(b), -1)
    alive_a = ~np.isnan(a[:, 0])
    alive_b = ~np.isnan(b[:, 0])
    out = []
    if not (alive_a.all() and alive_b.all()):
        counts_a = [alive_a.sum(), (~alive_a).sum()]
        counts_b = [alive_b.sum(), (~alive_b).sum()]
        stat, p = chi_square_homogeneity(counts_a, counts_b)
        out.append((f"{label} survival", stat, p))
    for i in range(a.shape[1]):
        stat, p = ks_two_sample(a[alive_a, i], b[alive_b, i])
        suffix = f" coord {i + 1}" if a.shape[1] > 1 else ""
        out.append((f"{label} KS{suffix}", stat, p))
    return out
