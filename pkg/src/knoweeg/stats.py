"""Nonparametric tests and false-discovery-rate filtering.

Mann-Whitney U (binary targets) and Kruskal-Wallis (multiclass) p-values
per feature, adjusted by the Benjamini-Yekutieli step-up procedure,
which controls FDR under arbitrary dependence. The two-sample
Kolmogorov-Smirnov test supports the explainability reports.

Ties are handled with midranks throughout. Mann-Whitney is exact (full
enumeration of the U distribution) for pooled sizes <= 10 without ties,
otherwise a tie-corrected normal approximation with continuity
correction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import gammaincc, kolmogorov

from .errors import InputError, KeptNothingError
from .feature_matrix import MODE_PER_ELECTRODE, FeatureMatrix

EXACT_MWU_MAX_POOLED = 10

DROP_NONE = "none"
DROP_INSIGNIFICANT = "insignificant"
DROP_NAN = "nan_column"


def _midranks(pooled: np.ndarray) -> np.ndarray:
    order = np.argsort(pooled, kind="stable")
    ranks = np.empty(pooled.size, dtype=float)
    sorted_vals = pooled[order]
    i = 0
    while i < pooled.size:
        j = i
        while j + 1 < pooled.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _midranks_2d(X: np.ndarray) -> np.ndarray:
    """Column-wise midranks of an (n, m) matrix."""
    n, m = X.shape
    order = np.argsort(X, axis=0, kind="stable")
    sorted_vals = np.take_along_axis(X, order, axis=0)
    base = np.arange(1, n + 1, dtype=float)[:, None]
    ranks_sorted = base.repeat(m, axis=1)
    # average ranks over tie runs
    same = np.zeros((n, m), dtype=bool)
    same[1:] = sorted_vals[1:] == sorted_vals[:-1]
    # group id per run, then scatter group means
    group = np.cumsum(~same, axis=0) - 1
    for col in range(m):
        g = group[:, col]
        sums = np.bincount(g, weights=ranks_sorted[:, col])
        counts = np.bincount(g)
        ranks_sorted[:, col] = (sums / counts)[g]
    ranks = np.empty_like(ranks_sorted)
    np.put_along_axis(ranks, order, ranks_sorted, axis=0)
    return ranks


def _tie_term(pooled: np.ndarray) -> float:
    _, counts = np.unique(pooled, return_counts=True)
    return float(np.sum(counts.astype(float) ** 3 - counts))


def _normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def _exact_u_counts(n: int, m: int) -> np.ndarray:
    """Distribution of U over all C(n+m, n) tie-free arrangements.

    counts[u] = number of arrangements giving U statistic u.
    Recurrence: f(n, m, u) = f(n-1, m, u-m...) classic DP.
    """
    # dp[i][u]: number of ways choosing i of the x's among first slots...
    # Use the standard recurrence on (n, m): c(n, m, u) = c(n-1, m, u - m)
    # + c(n, m-1, u), with c(0, m, 0) = c(n, 0, 0) = 1.
    max_u = n * m
    table = [[np.zeros(max_u + 1, dtype=float) for _ in range(m + 1)] for _ in range(n + 1)]
    for j in range(m + 1):
        table[0][j][0] = 1.0
    for i in range(1, n + 1):
        table[i][0][0] = 1.0
        for j in range(1, m + 1):
            shifted = np.zeros(max_u + 1)
            shifted[j:] = table[i - 1][j][: max_u + 1 - j]
            table[i][j] = shifted + table[i][j - 1]
    return table[n][m]


def mann_whitney_u(x, y) -> tuple[float, float]:
    """Two-sided Mann-Whitney U test.

    U counts pairs with x > y, plus half the ties.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 1 or y.size < 1:
        raise InputError("both groups must be nonempty")
    n, m = x.size, y.size
    pooled = np.concatenate([x, y])
    ranks = _midranks(pooled)
    rank_sum_x = ranks[:n].sum()
    u = rank_sum_x - n * (n + 1) / 2.0

    has_ties = np.unique(pooled).size < pooled.size
    if n + m <= EXACT_MWU_MAX_POOLED and not has_ties:
        counts = _exact_u_counts(n, m)
        total = counts.sum()
        u_int = int(round(u))
        lo = min(u_int, n * m - u_int)
        p = 2.0 * counts[: lo + 1].sum() / total
        return float(u), min(1.0, float(p))

    mean = n * m / 2.0
    tie = _tie_term(pooled)
    nm = n + m
    var = n * m / 12.0 * ((nm + 1) - tie / (nm * (nm - 1)))
    if var <= 0:
        return float(u), 1.0
    diff = u - mean
    cc = 0.5 if diff != 0 else 0.0
    z = (abs(diff) - cc) / math.sqrt(var)
    return float(u), min(1.0, 2.0 * _normal_sf(z))


def kruskal_wallis(groups) -> tuple[float, float]:
    """Tie-corrected Kruskal-Wallis H with a chi-square p-value."""
    groups = [np.asarray(g, dtype=float) for g in groups]
    if len(groups) < 2:
        raise InputError("need at least 2 groups")
    if any(g.size == 0 for g in groups):
        raise InputError("every group must be nonempty")
    pooled = np.concatenate(groups)
    n_total = pooled.size
    if n_total < 3:
        raise InputError("need at least 3 observations in total")
    ranks = _midranks(pooled)
    h = 0.0
    start = 0
    for g in groups:
        r = ranks[start : start + g.size].sum()
        h += r * r / g.size
        start += g.size
    h = 12.0 / (n_total * (n_total + 1)) * h - 3 * (n_total + 1)
    tie = _tie_term(pooled)
    correction = 1.0 - tie / (n_total**3 - n_total)
    if correction <= 0:
        return 0.0, 1.0
    h /= correction
    h = max(h, 0.0)
    df = len(groups) - 1
    p = chi2_sf(h, df)
    return float(h), float(p)


def chi2_sf(x: float, df: int) -> float:
    """Chi-square survival function via the regularized incomplete gamma."""
    if x <= 0:
        return 1.0
    return float(gammaincc(df / 2.0, x / 2.0))


def benjamini_yekutieli(p_values, alpha: float = 0.05):
    """Step-up BY adjustment.

    adjusted p_(i) = min(1, min_{j>=i} m * c(m) * p_(j) / j) over ascending
    order statistics, with c(m) the harmonic sum. Returns (adjusted, kept)
    in the input order.
    """
    p = np.asarray(p_values, dtype=float)
    if p.size == 0:
        return np.array([]), np.array([], dtype=bool)
    if np.any((p < 0) | (p > 1)):
        raise InputError("p-values must lie in [0, 1]")
    m = p.size
    c_m = np.sum(1.0 / np.arange(1, m + 1))
    order = np.argsort(p, kind="stable")
    scaled = m * c_m * p[order] / np.arange(1, m + 1)
    adjusted_sorted = np.minimum(1.0, np.minimum.accumulate(scaled[::-1])[::-1])
    adjusted = np.empty(m)
    adjusted[order] = adjusted_sorted
    return adjusted, adjusted <= alpha


def _kolmogorov_sf(lam: float) -> float:
    """Q_KS(lambda) = 2 sum_{j>=1} (-1)^{j-1} exp(-2 j^2 lambda^2)."""
    if lam <= 0:
        return 1.0
    return float(min(1.0, max(0.0, kolmogorov(lam))))


def ks_two_sample(x, y) -> tuple[float, float]:
    """Two-sample KS: D = sup |ECDF_x - ECDF_y|, asymptotic p."""
    x = np.sort(np.asarray(x, dtype=float))
    y = np.sort(np.asarray(y, dtype=float))
    if x.size < 1 or y.size < 1:
        raise InputError("both samples must be nonempty")
    grid = np.concatenate([x, y])
    cdf_x = np.searchsorted(x, grid, side="right") / x.size
    cdf_y = np.searchsorted(y, grid, side="right") / y.size
    d = float(np.max(np.abs(cdf_x - cdf_y)))
    effective_n = x.size * y.size / (x.size + y.size)
    p = _kolmogorov_sf(math.sqrt(effective_n) * d)
    return d, p


TEST_MANN_WHITNEY = "mann_whitney"
TEST_KRUSKAL_WALLIS = "kruskal_wallis"


@dataclass(frozen=True)
class FilterReport:
    feature_names: tuple[str, ...]
    p_raw: np.ndarray
    p_adjusted: np.ndarray
    kept: np.ndarray
    drop_reason: tuple[str, ...]
    alpha: float
    test_used: str

    @property
    def n_kept(self) -> int:
        return int(self.kept.sum())

    def to_dict(self) -> dict:
        def _p(v):
            return None if np.isnan(v) else float(v)

        return {
            "alpha": self.alpha,
            "test_used": self.test_used,
            "n_features": len(self.feature_names),
            "n_kept": self.n_kept,
            "features": [
                {
                    "descriptor": name,
                    "p_raw": _p(self.p_raw[i]),
                    "p_adj": _p(self.p_adjusted[i]),
                    "kept": bool(self.kept[i]),
                    "drop_reason": self.drop_reason[i],
                }
                for i, name in enumerate(self.feature_names)
            ],
        }

    def save_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))


def _column_pvalues_mwu(values: np.ndarray, mask_a: np.ndarray) -> np.ndarray:
    """Vectorized normal-approximation MWU p per column (group A vs B)."""
    n, m_cols = values.shape
    na, nb = int(mask_a.sum()), int(n - mask_a.sum())
    ranks = _midranks_2d(values)
    u = ranks[mask_a].sum(axis=0) - na * (na + 1) / 2.0
    mean = na * nb / 2.0
    # per-column tie term
    tie = np.empty(m_cols)
    sorted_vals = np.sort(values, axis=0)
    same = np.zeros_like(sorted_vals, dtype=bool)
    same[1:] = sorted_vals[1:] == sorted_vals[:-1]
    for col in range(m_cols):
        group = np.cumsum(~same[:, col]) - 1
        counts = np.bincount(group).astype(float)
        tie[col] = np.sum(counts**3 - counts)
    var = na * nb / 12.0 * ((n + 1) - tie / (n * (n - 1)))
    diff = u - mean
    cc = np.where(diff != 0, 0.5, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(var > 0, (np.abs(diff) - cc) / np.sqrt(np.where(var > 0, var, 1.0)), 0.0)
    p = np.array([2.0 * _normal_sf(zi) for zi in z])
    p[var <= 0] = 1.0
    return np.minimum(p, 1.0)


def filter_features(
    features: FeatureMatrix, labels, alpha: float = 0.05
) -> tuple[FeatureMatrix, FilterReport]:
    """Keep features whose BY-adjusted p-value is at or below alpha.

    NaN-bearing columns are dropped up front (reason ``nan_column``) and
    excluded from testing; the test is Mann-Whitney for binary labels and
    Kruskal-Wallis otherwise. Raises :class:`KeptNothingError` (report
    attached) when nothing survives.
    """
    if features.mode_tag != MODE_PER_ELECTRODE:
        raise InputError("filtering applies to per-electrode features")
    labels = np.asarray(labels)
    if labels.shape[0] != features.n_samples:
        raise InputError("labels must align with feature rows")
    classes = np.unique(labels)
    if classes.size < 2:
        raise InputError("need at least two classes to filter")
    test_used = TEST_MANN_WHITNEY if classes.size == 2 else TEST_KRUSKAL_WALLIS

    n_features = features.n_features
    finite = np.isfinite(features.values).all(axis=0)
    p_raw = np.full(n_features, np.nan)
    testable = np.flatnonzero(finite)

    if testable.size:
        vals = features.values[:, testable]
        if test_used == TEST_MANN_WHITNEY:
            mask_a = labels == classes[0]
            if features.n_samples <= EXACT_MWU_MAX_POOLED:
                for j, col in enumerate(testable):
                    _, p = mann_whitney_u(vals[mask_a, j], vals[~mask_a, j])
                    p_raw[col] = p
            else:
                p_raw[testable] = _column_pvalues_mwu(vals, mask_a)
        else:
            groups_idx = [np.flatnonzero(labels == c) for c in classes]
            for j, col in enumerate(testable):
                _, p = kruskal_wallis([vals[idx, j] for idx in groups_idx])
                p_raw[col] = p

    p_adjusted = np.full(n_features, np.nan)
    kept = np.zeros(n_features, dtype=bool)
    if testable.size:
        adj, keep_mask = benjamini_yekutieli(p_raw[testable], alpha)
        p_adjusted[testable] = adj
        kept[testable] = keep_mask

    drop_reason = tuple(
        DROP_NONE if kept[i] else (DROP_NAN if not finite[i] else DROP_INSIGNIFICANT)
        for i in range(n_features)
    )
    report = FilterReport(
        feature_names=features.column_names,
        p_raw=p_raw,
        p_adjusted=p_adjusted,
        kept=kept,
        drop_reason=drop_reason,
        alpha=alpha,
        test_used=test_used,
    )
    if not kept.any():
        raise KeptNothingError(
            f"no features significant at alpha={alpha}", report=report
        )
    return features.select(kept), report
