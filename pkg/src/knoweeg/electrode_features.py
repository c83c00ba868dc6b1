"""Per-electrode time-series feature extraction.

A registry of named feature calculators is evaluated per channel and
concatenated channel-major into a :class:`~knoweeg.feature_matrix.FeatureMatrix`.
Calculators are written batch-first -- ``(n_series, n_timesteps) -> (n_series,)``
-- so extraction over a whole dataset is a single vectorized pass; the
public scalar operations wrap the batch forms.

Conventions for degenerate inputs: value degeneracies (constant series,
empty corridors) yield 0 by convention; length violations yield NaN and
are handled downstream by the NaN column policy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .bands import BAND_NAMES, CANONICAL_BANDS
from .dataset import EegDataset
from .errors import InputError, LengthError
from .feature_matrix import (
    MODE_PER_ELECTRODE,
    FeatureDescriptor,
    FeatureMatrix,
    ParamValue,
)
from .spectral import welch_psd

BatchFn = Callable[[np.ndarray, float, dict], np.ndarray]

_PE_CHUNK = 512


@dataclass(frozen=True)
class FeatureDef:
    feature_id: str
    params: tuple[tuple[str, ParamValue], ...]
    fn: BatchFn
    min_length: int = 2

    @property
    def key(self) -> str:
        parts = [self.feature_id]
        parts.extend(f"{k}_{v}" for k, v in self.params)
        return "__".join(parts)


# ---------------------------------------------------------------------------
# distributional


def _moments(X: np.ndarray):
    mu = X.mean(axis=1, keepdims=True)
    d = X - mu
    m2 = (d**2).mean(axis=1)
    return mu[:, 0], d, m2


def _skewness(X, fs, cache):
    _, d, m2 = _moments(X)
    m3 = (d**3).mean(axis=1)
    out = np.zeros(X.shape[0])
    ok = m2 > 0
    out[ok] = m3[ok] / m2[ok] ** 1.5
    return out


def _kurtosis(X, fs, cache):
    _, d, m2 = _moments(X)
    m4 = (d**4).mean(axis=1)
    out = np.zeros(X.shape[0])
    ok = m2 > 0
    out[ok] = m4[ok] / m2[ok] ** 2 - 3.0
    return out


def _quantile(q):
    def fn(X, fs, cache):
        return np.quantile(X, q, axis=1)

    return fn


# ---------------------------------------------------------------------------
# temporal


def _autocorrelation(lag):
    def fn(X, fs, cache):
        n, t = X.shape
        if lag >= t:
            return np.full(n, np.nan)
        mu = X.mean(axis=1, keepdims=True)
        d = X - mu
        var = (d**2).mean(axis=1)
        num = (d[:, : t - lag] * d[:, lag:]).mean(axis=1)
        out = np.zeros(n)
        ok = var > 0
        out[ok] = num[ok] / var[ok]
        return out

    return fn


def _pacf_batch(X: np.ndarray, lag: int) -> np.ndarray:
    """Partial autocorrelation via Durbin-Levinson on biased autocovariances."""
    n, t = X.shape
    if lag == 0:
        return np.ones(n)
    if lag >= t:
        return np.full(n, np.nan)
    d = X - X.mean(axis=1, keepdims=True)
    acov = np.empty((n, lag + 1))
    for k in range(lag + 1):
        acov[:, k] = (d[:, : t - k] * d[:, k:]).sum(axis=1) / t
    out = np.zeros(n)
    ok = acov[:, 0] > 0
    if not ok.any():
        return out
    r = acov[ok] / acov[ok, :1]
    m = r.shape[0]
    phi = np.zeros((m, lag + 1))
    phi[:, 1] = r[:, 1]
    v = 1.0 - r[:, 1] ** 2
    for k in range(2, lag + 1):
        num = r[:, k] - np.sum(phi[:, 1:k] * r[:, k - 1 : 0 : -1], axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            phi_kk = np.where(v > 0, num / np.where(v > 0, v, 1.0), 0.0)
        prev = phi[:, 1:k].copy()
        phi[:, 1:k] = prev - phi_kk[:, None] * prev[:, ::-1]
        phi[:, k] = phi_kk
        v = v * (1.0 - phi_kk**2)
    out[ok] = phi[:, lag]
    return out


def _partial_autocorrelation(lag):
    def fn(X, fs, cache):
        return _pacf_batch(X, lag)

    return fn


def _mean_abs_change(X, fs, cache):
    return np.abs(np.diff(X, axis=1)).mean(axis=1)


def _mean_change(X, fs, cache):
    return (X[:, -1] - X[:, 0]) / (X.shape[1] - 1)


def _mean_second_derivative_central(X, fs, cache):
    n, t = X.shape
    if t < 3:
        return np.full(n, np.nan)
    return ((X[:, 2:] - 2 * X[:, 1:-1] + X[:, :-2]) / 2.0).mean(axis=1)


def _change_quantiles(lower_q, upper_q, aggregate):
    def fn(X, fs, cache):
        lo = np.quantile(X, lower_q, axis=1, keepdims=True)
        hi = np.quantile(X, upper_q, axis=1, keepdims=True)
        inside = (X >= lo) & (X <= hi)
        both = inside[:, 1:] & inside[:, :-1]
        d = np.abs(np.diff(X, axis=1))
        cnt = both.sum(axis=1)
        safe = np.maximum(cnt, 1)
        mean = (d * both).sum(axis=1) / safe
        if aggregate == "mean":
            out = mean
        else:
            m2 = (d**2 * both).sum(axis=1) / safe
            out = np.sqrt(np.maximum(m2 - mean**2, 0.0))
        return np.where(cnt > 0, out, 0.0)

    return fn


def _number_peaks_batch(X: np.ndarray, support: int) -> np.ndarray:
    """Count strict local maxima against up to ``support`` neighbours a side.

    Neighbourhoods are clipped at the array bounds; an index qualifies
    only when at least one neighbour exists on each side.
    """
    n, t = X.shape
    if t < 3:
        return np.zeros(n)
    left = np.full((n, t), -np.inf)
    right = np.full((n, t), -np.inf)
    for k in range(1, support + 1):
        if k < t:
            left[:, k:] = np.maximum(left[:, k:], X[:, :-k])
            right[:, :-k] = np.maximum(right[:, :-k], X[:, k:])
    interior = np.zeros(t, dtype=bool)
    interior[1 : t - 1] = True
    peaks = (X > left) & (X > right) & interior
    return peaks.sum(axis=1).astype(float)


def _number_peaks(support):
    def fn(X, fs, cache):
        return _number_peaks_batch(X, support)

    return fn


def _count_above_mean(X, fs, cache):
    return (X > X.mean(axis=1, keepdims=True)).sum(axis=1).astype(float)


def _count_below_mean(X, fs, cache):
    return (X < X.mean(axis=1, keepdims=True)).sum(axis=1).astype(float)


def _longest_strike(above):
    def fn(X, fs, cache):
        mu = X.mean(axis=1, keepdims=True)
        b = X > mu if above else X < mu
        run = np.zeros(X.shape[0])
        best = np.zeros(X.shape[0])
        for j in range(X.shape[1]):
            run = (run + 1) * b[:, j]
            best = np.maximum(best, run)
        return best

    return fn


def _first_location(of_max):
    def fn(X, fs, cache):
        idx = np.argmax(X, axis=1) if of_max else np.argmin(X, axis=1)
        return idx / X.shape[1]

    return fn


def _number_crossings_mean(X, fs, cache):
    b = X > X.mean(axis=1, keepdims=True)
    return (b[:, 1:] != b[:, :-1]).sum(axis=1).astype(float)


def _time_reversal_asymmetry(lag):
    def fn(X, fs, cache):
        n, t = X.shape
        if t <= 2 * lag:
            return np.full(n, np.nan)
        a, b, c = X[:, 2 * lag :], X[:, lag : -lag], X[:, : -2 * lag]
        return (a**2 * b - b * c**2).mean(axis=1)

    return fn


def _c3(lag):
    def fn(X, fs, cache):
        n, t = X.shape
        if t <= 2 * lag:
            return np.full(n, np.nan)
        return (X[:, 2 * lag :] * X[:, lag : -lag] * X[:, : -2 * lag]).mean(axis=1)

    return fn


def _cid_ce(normalize):
    def fn(X, fs, cache):
        if normalize:
            mu = X.mean(axis=1, keepdims=True)
            sd = X.std(axis=1, keepdims=True)
            X = np.where(sd > 0, (X - mu) / np.where(sd > 0, sd, 1.0), 0.0)
        return np.sqrt((np.diff(X, axis=1) ** 2).sum(axis=1))

    return fn


# ---------------------------------------------------------------------------
# complexity


def _ordinal_pattern_ids(W: np.ndarray, m: int) -> np.ndarray:
    """Encode stable-tie ordinal patterns of windows (n, w, m) as integers.

    Equal values are ordered by position (earlier index ranks lower).
    """
    less = W[:, :, None, :] < W[:, :, :, None]  # [.., k, l] = W[l] < W[k]
    eq = W[:, :, None, :] == W[:, :, :, None]
    before = np.tril(np.ones((m, m), dtype=bool), k=-1)  # l < k
    ranks = less.sum(axis=-1) + (eq & before).sum(axis=-1)
    weights = m ** np.arange(m)
    return ranks @ weights


def _entropy_from_counts(counts: np.ndarray) -> float:
    counts = np.sort(np.asarray(counts, dtype=float))
    p = counts / counts.sum()
    return float(-np.sum(p * np.log(p)))


def _permutation_entropy_batch(X: np.ndarray, m: int, tau: int) -> np.ndarray:
    n, t = X.shape
    n_windows = t - (m - 1) * tau
    if n_windows < 1:
        return np.full(n, np.nan)
    idx = np.arange(n_windows)[:, None] + tau * np.arange(m)[None, :]
    out = np.empty(n)
    for start in range(0, n, _PE_CHUNK):
        chunk = X[start : start + _PE_CHUNK]
        ids = _ordinal_pattern_ids(chunk[:, idx], m)
        for i, row in enumerate(ids):
            _, counts = np.unique(row, return_counts=True)
            out[start + i] = _entropy_from_counts(counts)
    return out


def _permutation_entropy(dimension, tau):
    def fn(X, fs, cache):
        return _permutation_entropy_batch(X, dimension, tau)

    return fn


def _binned_entropy(max_bins):
    def fn(X, fs, cache):
        n, t = X.shape
        lo = X.min(axis=1, keepdims=True)
        hi = X.max(axis=1, keepdims=True)
        span = hi - lo
        safe = np.where(span > 0, span, 1.0)
        bins = np.minimum(((X - lo) / safe * max_bins).astype(int), max_bins - 1)
        flat = bins + np.arange(n)[:, None] * max_bins
        counts = np.bincount(flat.ravel(), minlength=n * max_bins).reshape(n, max_bins)
        p = counts / t
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(p > 0, p * np.log(p), 0.0)
        return -terms.sum(axis=1)

    return fn


def _lempel_ziv_row(seq: np.ndarray) -> float:
    n = len(seq)
    substrings = set()
    ind, inc = 0, 1
    while ind + inc <= n:
        sub = tuple(seq[ind : ind + inc])
        if sub in substrings:
            inc += 1
        else:
            substrings.add(sub)
            ind += inc
            inc = 1
    return len(substrings) / n


def _lempel_ziv(bins):
    def fn(X, fs, cache):
        lo = X.min(axis=1, keepdims=True)
        hi = X.max(axis=1, keepdims=True)
        edges_scale = np.where(hi > lo, hi - lo, 1.0)
        levels = np.minimum(((X - lo) / edges_scale * bins).astype(int), bins - 1)
        return np.array([_lempel_ziv_row(row) for row in levels])

    return fn


# ---------------------------------------------------------------------------
# spectral


def _cached_psd(X, fs, cache):
    if "psd" not in cache:
        cache["psd"] = welch_psd(X, fs)
    return cache["psd"]


def _band_fractions(X, fs, cache):
    if "band_fractions" not in cache:
        psd = _cached_psd(X, fs, cache)
        sums = []
        for band in CANONICAL_BANDS:
            mask = (psd.freqs >= band.lo_hz) & (psd.freqs < band.hi_hz)
            sums.append(psd.power[:, mask].sum(axis=1))
        sums = np.stack(sums, axis=1)
        total_mask = (psd.freqs >= CANONICAL_BANDS[0].lo_hz) & (
            psd.freqs < CANONICAL_BANDS[-1].hi_hz
        )
        total = psd.power[:, total_mask].sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            frac = np.where(total[:, None] > 0, sums / total[:, None], np.nan)
        cache["band_fractions"] = frac
    return cache["band_fractions"]


def _relative_band_power(band_index):
    def fn(X, fs, cache):
        return _band_fractions(X, fs, cache)[:, band_index]

    return fn


def _psd_weights(X, fs, cache):
    psd = _cached_psd(X, fs, cache)
    total = psd.power.sum(axis=1)
    return psd.freqs, psd.power, total


def _spectral_centroid(X, fs, cache):
    freqs, power, total = _psd_weights(X, fs, cache)
    safe = np.where(total > 0, total, 1.0)
    return np.where(total > 0, (power * freqs).sum(axis=1) / safe, 0.0)


def _spectral_moment(order):
    def fn(X, fs, cache):
        freqs, power, total = _psd_weights(X, fs, cache)
        safe = np.where(total > 0, total, 1.0)
        centroid = (power * freqs).sum(axis=1) / safe
        var = (power * (freqs - centroid[:, None]) ** 2).sum(axis=1) / safe
        if order == 2:
            out = var
        else:
            sd = np.sqrt(np.where(var > 0, var, 1.0))
            m = (power * (freqs - centroid[:, None]) ** order).sum(axis=1) / safe
            out = np.where(var > 0, m / sd**order, 0.0)
            if order == 4:
                out = np.where(var > 0, out - 3.0, 0.0)
        return np.where(total > 0, out, 0.0)

    return fn


def _median_frequency(X, fs, cache):
    psd = _cached_psd(X, fs, cache)
    total = psd.power.sum(axis=1)
    csum = np.cumsum(psd.power, axis=1)
    idx = np.argmax(csum >= total[:, None] / 2.0, axis=1)
    return np.where(total > 0, psd.freqs[idx], 0.0)


def _peak_frequency(X, fs, cache):
    psd = _cached_psd(X, fs, cache)
    return psd.freqs[np.argmax(psd.power, axis=1)]


def _spectral_entropy(X, fs, cache):
    psd = _cached_psd(X, fs, cache)
    total = psd.power.sum(axis=1)
    safe = np.where(total > 0, total, 1.0)
    p = psd.power / safe[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(p), 0.0)
    return np.where(total > 0, -terms.sum(axis=1), 0.0)


# ---------------------------------------------------------------------------
# registry


def _simple(fid: str, fn, min_length: int = 2, **params) -> FeatureDef:
    return FeatureDef(
        feature_id=fid, params=tuple(sorted(params.items())), fn=fn, min_length=min_length
    )


def default_registry() -> tuple[FeatureDef, ...]:
    defs: list[FeatureDef] = [
        _simple("mean", lambda X, fs, c: X.mean(axis=1)),
        _simple("median", lambda X, fs, c: np.median(X, axis=1)),
        _simple("variance", lambda X, fs, c: X.var(axis=1)),
        _simple("standard_deviation", lambda X, fs, c: X.std(axis=1)),
        _simple("skewness", _skewness),
        _simple("kurtosis", _kurtosis),
        _simple("minimum", lambda X, fs, c: X.min(axis=1)),
        _simple("maximum", lambda X, fs, c: X.max(axis=1)),
        _simple("abs_energy", lambda X, fs, c: (X**2).sum(axis=1)),
        _simple("root_mean_square", lambda X, fs, c: np.sqrt((X**2).mean(axis=1))),
        _simple(
            "mean_abs_deviation",
            lambda X, fs, c: np.abs(X - X.mean(axis=1, keepdims=True)).mean(axis=1),
        ),
    ]
    for q in (0.1, 0.25, 0.75, 0.9):
        defs.append(_simple("quantile", _quantile(q), q=q))
    for lag in range(1, 10):
        defs.append(_simple("autocorrelation", _autocorrelation(lag), lag=lag))
    for lag in range(1, 6):
        defs.append(
            _simple("partial_autocorrelation", _partial_autocorrelation(lag), lag=lag)
        )
    defs += [
        _simple("mean_abs_change", _mean_abs_change),
        _simple("mean_change", _mean_change),
        _simple("mean_second_derivative_central", _mean_second_derivative_central, 3),
    ]
    for lo, hi in ((0.0, 0.8), (0.2, 1.0), (0.25, 0.75)):
        defs.append(
            _simple(
                "change_quantiles_mean",
                _change_quantiles(lo, hi, "mean"),
                lower=lo,
                upper=hi,
            )
        )
        defs.append(
            _simple(
                "change_quantiles_std",
                _change_quantiles(lo, hi, "std"),
                lower=lo,
                upper=hi,
            )
        )
    for support in (1, 3, 5):
        defs.append(_simple("number_peaks", _number_peaks(support), 3, support=support))
    defs += [
        _simple("count_above_mean", _count_above_mean),
        _simple("count_below_mean", _count_below_mean),
        _simple("longest_strike_above_mean", _longest_strike(True)),
        _simple("longest_strike_below_mean", _longest_strike(False)),
        _simple("first_location_of_maximum", _first_location(True)),
        _simple("first_location_of_minimum", _first_location(False)),
        _simple("number_crossings_mean", _number_crossings_mean),
        _simple("time_reversal_asymmetry", _time_reversal_asymmetry(1), 3, lag=1),
        _simple("c3", _c3(1), 3, lag=1),
        _simple("cid_ce", _cid_ce(False), 2, normalize=0),
        _simple("cid_ce", _cid_ce(True), 2, normalize=1),
    ]
    for dim in range(3, 8):
        defs.append(
            _simple(
                "permutation_entropy",
                _permutation_entropy(dim, 1),
                (dim - 1) + 1,
                dimension=dim,
                tau=1,
            )
        )
    defs += [
        _simple("binned_entropy", _binned_entropy(10), 2, max_bins=10),
        _simple("lempel_ziv_complexity", _lempel_ziv(2), 2, bins=2),
    ]
    for i, name in enumerate(BAND_NAMES):
        defs.append(
            _simple("relative_band_power", _relative_band_power(i), 8, band=name)
        )
    defs += [
        _simple("spectral_centroid", _spectral_centroid, 8),
        _simple("spectral_variance", _spectral_moment(2), 8),
        _simple("spectral_skewness", _spectral_moment(3), 8),
        _simple("spectral_kurtosis", _spectral_moment(4), 8),
        _simple("median_frequency", _median_frequency, 8),
        _simple("peak_frequency", _peak_frequency, 8),
        _simple("spectral_entropy", _spectral_entropy, 8),
    ]
    return tuple(defs)


_MINIMAL_KEYS = {
    "mean",
    "standard_deviation",
    "skewness",
    "kurtosis",
    "mean_abs_change",
    "autocorrelation__lag_1",
    "partial_autocorrelation__lag_2",
    "number_peaks__support_1",
    "change_quantiles_mean__lower_0.0__upper_0.8",
    "permutation_entropy__dimension_3__tau_1",
    "relative_band_power__band_delta",
    "relative_band_power__band_theta",
    "relative_band_power__band_alpha",
    "relative_band_power__band_sigma",
    "relative_band_power__band_beta",
    "relative_band_power__band_gamma",
    "spectral_centroid",
}


def get_registry(selection: str | list[str] = "default") -> tuple[FeatureDef, ...]:
    """Resolve a registry selection: "default", "minimal", or explicit keys."""
    full = default_registry()
    if selection == "default":
        return full
    if selection == "minimal":
        keys = _MINIMAL_KEYS
    else:
        keys = set(selection)
    chosen = tuple(fd for fd in full if fd.key in keys or fd.feature_id in keys)
    if not chosen:
        raise InputError(f"registry selection {selection!r} matches no features")
    return chosen


def extract_features(
    dataset: EegDataset, registry: tuple[FeatureDef, ...] | None = None
) -> FeatureMatrix:
    """Evaluate the registry per channel; columns channel-major."""
    registry = registry if registry is not None else default_registry()
    if not registry:
        raise InputError("empty feature registry")
    n_s, n_ch, t = dataset.samples.shape
    if n_s == 0:
        raise InputError("empty dataset")
    X = dataset.samples.reshape(n_s * n_ch, t).astype(float)
    cache: dict = {}
    per_feature = np.empty((len(registry), n_s, n_ch))
    for k, fd in enumerate(registry):
        if t < fd.min_length:
            vals = np.full(n_s * n_ch, np.nan)
        else:
            vals = np.asarray(fd.fn(X, dataset.sample_rate, cache), dtype=float)
        per_feature[k] = vals.reshape(n_s, n_ch)
    values = per_feature.transpose(1, 2, 0).reshape(n_s, n_ch * len(registry))
    descriptors = tuple(
        FeatureDescriptor(feature_id=fd.feature_id, channel=ch, params=fd.params)
        for ch in dataset.montage.channel_names
        for fd in registry
    )
    return FeatureMatrix(values=values, descriptors=descriptors, mode_tag=MODE_PER_ELECTRODE)


# ---------------------------------------------------------------------------
# scalar forms of the headline features


def permutation_entropy(x: np.ndarray, dimension: int, tau: int = 1) -> float:
    """Shannon entropy (natural log) of the ordinal-pattern distribution.

    Ties are broken by position, so constant input has a single pattern.
    Bounded by ln(dimension!).
    """
    x = np.asarray(x, dtype=float)
    if not 2 <= dimension <= 7:
        raise InputError(f"dimension must be in [2, 7], got {dimension}")
    if tau < 1:
        raise InputError(f"tau must be >= 1, got {tau}")
    if x.size < (dimension - 1) * tau + 1:
        raise LengthError(
            f"need at least {(dimension - 1) * tau + 1} points for "
            f"dimension {dimension}, tau {tau}; got {x.size}"
        )
    return float(_permutation_entropy_batch(x[None, :], dimension, tau)[0])


def number_peaks(x: np.ndarray, support: int) -> int:
    if support < 1:
        raise InputError(f"support must be >= 1, got {support}")
    x = np.asarray(x, dtype=float)
    if x.size < 3:
        return 0
    return int(_number_peaks_batch(x[None, :], support)[0])


def mean_abs_change(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        raise LengthError("need at least 2 points")
    return float(np.abs(np.diff(x)).mean())


def partial_autocorrelation(x: np.ndarray, lag: int) -> float:
    """Durbin-Levinson PACF; lag 0 is 1 by definition, lag >= len(x) is NaN."""
    x = np.asarray(x, dtype=float)
    if lag < 0:
        raise InputError(f"lag must be >= 0, got {lag}")
    return float(_pacf_batch(x[None, :], lag)[0])


def change_quantiles_mean(x: np.ndarray, lower_q: float, upper_q: float) -> float:
    """Mean |consecutive difference| over pairs inside the quantile corridor."""
    if not 0 <= lower_q < upper_q <= 1:
        raise InputError(f"need 0 <= lower < upper <= 1, got {lower_q}, {upper_q}")
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        raise LengthError("need at least 2 points")
    return float(_change_quantiles(lower_q, upper_q, "mean")(x[None, :], 0.0, {})[0])


MAX_PERMUTATION_ENTROPY = {m: math.log(math.factorial(m)) for m in range(2, 8)}
