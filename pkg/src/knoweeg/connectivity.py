"""Between-electrode connectivity features, one FeatureMatrix per metric.

Nine candidate metrics: time-domain Pearson+Spearman correlation on the
full signal, band-power connectivity (per-electrode relative band powers
plus pairwise log-ratios), and seven segment-averaged spectral metrics
(Coh, ImCoh, PPC, PLV, PLI, DPLI, WPLI) built on the Hann-FFT band
cross-spectra from :mod:`knoweeg.spectral`.

Pairs are stored in i<j channel order. DPLI is the only directional
metric; the reverse direction follows from dpli(j,i) = 1 - dpli(i,j).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bands import CANONICAL_BANDS, BandDefinition
from .dataset import EegDataset
from .errors import (
    DegenerateSpectrumError,
    InputError,
    KnowEegError,
    SegmentationError,
)
from .feature_matrix import MODE_CONNECTIVITY, FeatureDescriptor, FeatureMatrix
from .spectral import (
    SegmentationPlan,
    bandlimited_cross_spectra,
    default_segmentation,
    epoch_segments,
    welch_psd,
)

METRIC_ORDER = ("correlation", "fpc", "coh", "imcoh", "ppc", "plv", "pli", "dpli", "wpli")
SPECTRAL_METRICS = ("coh", "imcoh", "ppc", "plv", "pli", "dpli", "wpli")

_POWER_FLOOR = 1e-12
_SAMPLE_CHUNK = 256


@dataclass(frozen=True)
class ConnectivitySet:
    metric: str
    matrix: FeatureMatrix
    band_resolution_flags: dict[str, bool]
    notes: tuple[str, ...] = ()

    @property
    def n_features(self) -> int:
        return self.matrix.n_features


def _check_dataset(dataset: EegDataset) -> None:
    if dataset.n_samples == 0:
        raise InputError("empty dataset")
    if dataset.n_channels < 2:
        raise InputError("connectivity needs at least 2 channels")
    if not np.all(np.isfinite(dataset.samples)):
        raise InputError("dataset contains non-finite values")


def _pair_indices(n_ch: int) -> tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(n_ch, k=1)


def _pair_descriptors(
    metric: str, band: str, channels: tuple[str, ...]
) -> list[FeatureDescriptor]:
    ii, jj = _pair_indices(len(channels))
    return [
        FeatureDescriptor(
            feature_id=metric, band=band, pair=(channels[i], channels[j])
        )
        for i, j in zip(ii, jj)
    ]


def _rank_rows(X: np.ndarray) -> np.ndarray:
    """Midranks along the last axis of (n_rows, n_t)."""
    order = np.argsort(X, axis=1, kind="stable")
    n_rows, t = X.shape
    sorted_vals = np.take_along_axis(X, order, axis=1)
    ranks_sorted = np.tile(np.arange(1, t + 1, dtype=float), (n_rows, 1))
    same = np.zeros_like(sorted_vals, dtype=bool)
    same[:, 1:] = sorted_vals[:, 1:] == sorted_vals[:, :-1]
    if same.any():
        group = np.cumsum(~same, axis=1) - 1
        for row in range(n_rows):
            g = group[row]
            sums = np.bincount(g, weights=ranks_sorted[row])
            counts = np.bincount(g)
            ranks_sorted[row] = (sums / counts)[g]
    ranks = np.empty_like(ranks_sorted)
    np.put_along_axis(ranks, order, ranks_sorted, axis=1)
    return ranks


def _correlation_matrices(samples: np.ndarray) -> np.ndarray:
    """Per-sample correlation matrices; constant channels correlate as 0."""
    d = samples - samples.mean(axis=2, keepdims=True)
    cov = np.einsum("sit,sjt->sij", d, d)
    norm = np.sqrt(np.einsum("sii->si", cov))
    denom = norm[:, :, None] * norm[:, None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        corr = np.where(denom > 0, cov / np.where(denom > 0, denom, 1.0), 0.0)
    return np.clip(corr, -1.0, 1.0)


def correlation_features(dataset: EegDataset) -> ConnectivitySet:
    """Pearson and Spearman correlation per pair on the unsegmented signal."""
    _check_dataset(dataset)
    samples = dataset.samples.astype(float)
    n_s, n_ch, t = samples.shape
    ii, jj = _pair_indices(n_ch)

    pearson = _correlation_matrices(samples)[:, ii, jj]
    ranks = _rank_rows(samples.reshape(n_s * n_ch, t)).reshape(n_s, n_ch, t)
    spearman = _correlation_matrices(ranks)[:, ii, jj]

    notes = []
    if np.any(samples.std(axis=2) == 0):
        notes.append("constant channel(s): correlation defined as 0")
    channels = dataset.montage.channel_names
    descriptors = _pair_descriptors("pearson", "full", channels) + _pair_descriptors(
        "spearman", "full", channels
    )
    matrix = FeatureMatrix(
        values=np.concatenate([pearson, spearman], axis=1),
        descriptors=tuple(descriptors),
        mode_tag=MODE_CONNECTIVITY,
    )
    return ConnectivitySet(
        metric="correlation",
        matrix=matrix,
        band_resolution_flags={},
        notes=tuple(notes),
    )


def _band_power_fractions(
    dataset: EegDataset, bands: tuple[BandDefinition, ...]
) -> np.ndarray:
    """(n_samples, n_ch, n_bands) relative band powers from Welch PSDs."""
    n_s, n_ch, t = dataset.samples.shape
    psd = welch_psd(dataset.samples.reshape(n_s * n_ch, t), dataset.sample_rate)
    sums = []
    for band in bands:
        mask = (psd.freqs >= band.lo_hz) & (psd.freqs < band.hi_hz)
        sums.append(psd.power[:, mask].sum(axis=1))
    sums = np.stack(sums, axis=1)  # (n_s * n_ch, n_bands)
    total_mask = (psd.freqs >= bands[0].lo_hz) & (psd.freqs < bands[-1].hi_hz)
    total = psd.power[:, total_mask].sum(axis=1)
    if np.any(total <= 0):
        raise DegenerateSpectrumError("zero total in-band power in some channel")
    frac = sums / total[:, None]
    return frac.reshape(n_s, n_ch, len(bands))


def fpc_features(
    dataset: EegDataset, bands: tuple[BandDefinition, ...] = CANONICAL_BANDS
) -> ConnectivitySet:
    """Relative band powers per electrode plus pairwise log-ratios."""
    _check_dataset(dataset)
    frac = _band_power_fractions(dataset, bands)
    floored = frac < _POWER_FLOOR
    log_p = np.log(np.maximum(frac, _POWER_FLOOR))  # (n_s, n_ch, n_bands)
    ii, jj = _pair_indices(dataset.n_channels)
    channels = dataset.montage.channel_names

    blocks, descriptors = [], []
    for b, band in enumerate(bands):
        blocks.append(frac[:, :, b])
        descriptors.extend(
            FeatureDescriptor(feature_id="pow", channel=ch, band=band.name)
            for ch in channels
        )
    for b, band in enumerate(bands):
        blocks.append(log_p[:, ii, b] - log_p[:, jj, b])
        descriptors.extend(_pair_descriptors("fpc", band.name, channels))

    notes = ()
    if floored.any():
        notes = (f"{int(floored.sum())} band power value(s) floored at {_POWER_FLOOR}",)
    matrix = FeatureMatrix(
        values=np.concatenate(blocks, axis=1),
        descriptors=tuple(descriptors),
        mode_tag=MODE_CONNECTIVITY,
    )
    return ConnectivitySet(
        metric="fpc", matrix=matrix, band_resolution_flags={}, notes=notes
    )


def _metric_from_cross(metric: str, S: np.ndarray) -> np.ndarray:
    """Reduce per-segment cross-spectra (n_s, n_seg, n_b, n_ch, n_ch) to
    per-pair values (n_s, n_b, n_pairs)."""
    n_seg = S.shape[1]
    ii, jj = _pair_indices(S.shape[-1])
    Sp = S[:, :, :, ii, jj]  # (n_s, n_seg, n_b, n_pairs)
    if metric in ("coh", "imcoh"):
        mean_xy = Sp.mean(axis=1)
        sxx = np.real(S[:, :, :, np.arange(S.shape[-1]), np.arange(S.shape[-1])]).mean(axis=1)
        denom = np.sqrt(sxx[:, :, ii] * sxx[:, :, jj])
        with np.errstate(divide="ignore", invalid="ignore"):
            num = np.abs(mean_xy) if metric == "coh" else np.imag(mean_xy)
            out = np.where(denom > 0, num / np.where(denom > 0, denom, 1.0), 0.0)
        return np.clip(out, 0.0, 1.0) if metric == "coh" else np.clip(out, -1.0, 1.0)
    if metric in ("plv", "ppc"):
        mag = np.abs(Sp)
        unit = np.where(mag > 0, Sp / np.where(mag > 0, mag, 1.0), 1.0 + 0.0j)
        total = unit.sum(axis=1)
        if metric == "plv":
            return np.clip(np.abs(total) / n_seg, 0.0, 1.0)
        ppc = (np.abs(total) ** 2 - n_seg) / (n_seg * (n_seg - 1))
        return np.clip(ppc, 0.0, 1.0)
    imag = np.imag(Sp)
    if metric == "pli":
        return np.clip(np.abs(np.sign(imag).mean(axis=1)), 0.0, 1.0)
    if metric == "dpli":
        heaviside = np.where(imag > 0, 1.0, np.where(imag < 0, 0.0, 0.5))
        return heaviside.mean(axis=1)
    if metric == "wpli":
        num = np.abs(imag.mean(axis=1))
        denom = np.abs(imag).mean(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(denom > 0, num / np.where(denom > 0, denom, 1.0), 0.0)
        return np.clip(out, 0.0, 1.0)
    raise InputError(f"unknown spectral metric {metric!r}")


def _cross_spectra_chunks(
    dataset: EegDataset,
    plan: SegmentationPlan,
    bands: tuple[BandDefinition, ...],
):
    """Yield (chunk_slice, cross, band_info) over sample chunks."""
    n_s = dataset.n_samples
    for start in range(0, n_s, _SAMPLE_CHUNK):
        stop = min(start + _SAMPLE_CHUNK, n_s)
        chunk = dataset.samples[start:stop].astype(float)
        stacked = np.stack(
            [epoch_segments(sample, plan) for sample in chunk]
        )  # (n, n_seg, n_ch, L)
        n, n_seg, n_ch, seg_len = stacked.shape
        cs = bandlimited_cross_spectra(
            stacked.reshape(n * n_seg, n_ch, seg_len), dataset.sample_rate, bands
        )
        values = cs.values.reshape(n, n_seg, len(bands), n_ch, n_ch)
        yield slice(start, stop), values, cs.band_info


def spectral_metric(
    dataset: EegDataset,
    metric: str,
    plan: SegmentationPlan | None = None,
    bands: tuple[BandDefinition, ...] = CANONICAL_BANDS,
) -> ConnectivitySet:
    """One segment-averaged spectral connectivity metric per band and pair."""
    sets = spectral_metrics(dataset, (metric,), plan, bands)
    return sets[0]


def spectral_metrics(
    dataset: EegDataset,
    metrics: tuple[str, ...] = SPECTRAL_METRICS,
    plan: SegmentationPlan | None = None,
    bands: tuple[BandDefinition, ...] = CANONICAL_BANDS,
) -> list[ConnectivitySet]:
    """Compute several spectral metrics from one pass of cross-spectra."""
    _check_dataset(dataset)
    for metric in metrics:
        if metric not in SPECTRAL_METRICS:
            raise InputError(f"unknown spectral metric {metric!r}")
    plan = plan or default_segmentation(dataset.duration_s, dataset.sample_rate)
    if plan.n_segments < 2:
        raise SegmentationError("spectral metrics need at least 2 segments")

    n_pairs = dataset.n_channels * (dataset.n_channels - 1) // 2
    outputs = {
        m: np.empty((dataset.n_samples, len(bands), n_pairs)) for m in metrics
    }
    band_info = None
    for rows, cross, info in _cross_spectra_chunks(dataset, plan, bands):
        band_info = info
        for m in metrics:
            outputs[m][rows] = _metric_from_cross(m, cross)

    flags = {bi.band: bi.low_resolution for bi in band_info}
    channels = dataset.montage.channel_names
    sets = []
    for m in metrics:
        descriptors = []
        for band in bands:
            descriptors.extend(_pair_descriptors(m, band.name, channels))
        values = outputs[m].reshape(dataset.n_samples, len(bands) * n_pairs)
        matrix = FeatureMatrix(
            values=values, descriptors=tuple(descriptors), mode_tag=MODE_CONNECTIVITY
        )
        sets.append(
            ConnectivitySet(metric=m, matrix=matrix, band_resolution_flags=flags)
        )
    return sets


def compute_all_candidates(
    dataset: EegDataset,
    plan: SegmentationPlan | None = None,
    bands: tuple[BandDefinition, ...] = CANONICAL_BANDS,
    metrics: tuple[str, ...] = METRIC_ORDER,
) -> list[ConnectivitySet]:
    """All candidate metrics in canonical order."""
    _check_dataset(dataset)
    for metric in metrics:
        if metric not in METRIC_ORDER:
            raise InputError(f"unknown connectivity metric {metric!r}")
    wanted_spectral = tuple(
        m for m in METRIC_ORDER if m in metrics and m in SPECTRAL_METRICS
    )
    spectral_sets: dict[str, ConnectivitySet] = {}
    if wanted_spectral:
        try:
            for cset in spectral_metrics(dataset, wanted_spectral, plan, bands):
                spectral_sets[cset.metric] = cset
        except KnowEegError as exc:
            raise type(exc)(f"metrics {wanted_spectral}: {exc}") from exc

    results = []
    for metric in METRIC_ORDER:
        if metric not in metrics:
            continue
        if metric in spectral_sets:
            results.append(spectral_sets[metric])
            continue
        try:
            if metric == "correlation":
                results.append(correlation_features(dataset))
            else:
                results.append(fpc_features(dataset, bands))
        except KnowEegError as exc:
            raise type(exc)(f"metric {metric!r}: {exc}") from exc
    return results
