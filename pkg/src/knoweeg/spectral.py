"""Spectral estimation shared by feature extraction and connectivity.

PSD uses Welch's method (Hann window, 50% overlap, mean averaging) with a
default segment length of ``min(n_timesteps, 2 * sample_rate)`` samples.
Cross-spectra for connectivity use a single Hann-tapered FFT per epoch
segment with band values averaged over the FFT bins inside each band;
expectation over segments is taken inside each connectivity metric.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sp_signal

from .bands import CANONICAL_BANDS, BandDefinition
from .errors import (
    DegenerateSpectrumError,
    InputError,
    PlanError,
    SegmentationError,
)


@dataclass(frozen=True)
class WelchConfig:
    segment_len: int | None = None  # None: min(n_timesteps, 2 * sample_rate)
    overlap: float = 0.5

    def resolve_segment_len(self, n_timesteps: int, sample_rate: float) -> int:
        if self.segment_len is not None:
            return self.segment_len
        return int(min(n_timesteps, round(2 * sample_rate)))


@dataclass(frozen=True)
class PsdEstimate:
    freqs: np.ndarray  # Hz, strictly increasing from 0 to Nyquist
    power: np.ndarray  # (n_channels, n_freqs), density units

    @property
    def df(self) -> float:
        return float(self.freqs[1] - self.freqs[0])


@dataclass(frozen=True)
class RelativeBandPowers:
    values: np.ndarray  # (n_channels, n_bands), rows on the simplex
    band_names: tuple[str, ...]


@dataclass(frozen=True)
class SegmentationPlan:
    segment_duration: float  # seconds
    n_segments: int
    segment_len: int  # samples

    def __post_init__(self):
        if self.n_segments < 1 or self.segment_len < 2:
            raise PlanError(
                f"degenerate plan: {self.n_segments} segments of {self.segment_len}"
            )


# Default segment duration / count per signal duration; signals of other
# lengths fall back to eight equal segments.
_SEGMENTATION_DEFAULTS = {2.0: (0.25, 8), 5.0: (0.50, 10), 10.0: (0.625, 16)}


def default_segmentation(duration_s: float, sample_rate: float) -> SegmentationPlan:
    if duration_s in _SEGMENTATION_DEFAULTS:
        seg_duration, n_segments = _SEGMENTATION_DEFAULTS[duration_s]
    else:
        n_segments = 8
        seg_duration = duration_s / n_segments
    return SegmentationPlan(
        segment_duration=seg_duration,
        n_segments=n_segments,
        segment_len=int(round(seg_duration * sample_rate)),
    )


def welch_psd(
    signal: np.ndarray, sample_rate: float, cfg: WelchConfig | None = None
) -> PsdEstimate:
    """Welch PSD per channel; accepts (n_timesteps,) or (n_ch, n_timesteps)."""
    cfg = cfg or WelchConfig()
    x = np.asarray(signal, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise InputError(f"signal must be 1- or 2-axis, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InputError("signal contains non-finite values")
    nperseg = cfg.resolve_segment_len(x.shape[1], sample_rate)
    if nperseg < 8:
        raise InputError(f"segment length {nperseg} < 8")
    if x.shape[1] < nperseg:
        raise InputError(f"signal length {x.shape[1]} < segment length {nperseg}")
    freqs, power = sp_signal.welch(
        x,
        fs=sample_rate,
        window="hann",
        nperseg=nperseg,
        noverlap=int(nperseg * cfg.overlap),
        detrend="constant",
        scaling="density",
        average="mean",
        axis=-1,
    )
    return PsdEstimate(freqs=freqs, power=np.maximum(power, 0.0))


def relative_band_powers(
    psd: PsdEstimate, bands: tuple[BandDefinition, ...] = CANONICAL_BANDS
) -> RelativeBandPowers:
    """Per-channel band-power fractions over the full 0.5-40 Hz range.

    Bands are half-open [lo, hi); the top edge truncates the spectrum.
    """
    lo_all = min(b.lo_hz for b in bands)
    hi_all = max(b.hi_hz for b in bands)
    if psd.freqs[-1] < hi_all:
        raise InputError(
            f"PSD reaches {psd.freqs[-1]} Hz but bands need {hi_all} Hz"
        )
    band_sums = []
    for band in bands:
        mask = (psd.freqs >= band.lo_hz) & (psd.freqs < band.hi_hz)
        band_sums.append(psd.power[:, mask].sum(axis=1))
    band_sums = np.stack(band_sums, axis=1)
    total_mask = (psd.freqs >= lo_all) & (psd.freqs < hi_all)
    total = psd.power[:, total_mask].sum(axis=1)
    if np.any(total <= 0):
        raise DegenerateSpectrumError("zero total power in 0.5-40 Hz")
    return RelativeBandPowers(
        values=band_sums / total[:, None],
        band_names=tuple(b.name for b in bands),
    )


def epoch_segments(sample: np.ndarray, plan: SegmentationPlan) -> np.ndarray:
    """Split one (n_ch, n_timesteps) sample into contiguous segments.

    Returns (n_segments, n_ch, segment_len), in temporal order.
    """
    x = np.asarray(sample, dtype=float)
    if x.ndim != 2:
        raise InputError(f"sample must be 2-axis, got shape {x.shape}")
    needed = plan.n_segments * plan.segment_len
    if needed > x.shape[1]:
        raise PlanError(
            f"plan needs {needed} samples but signal has {x.shape[1]}"
        )
    segments = x[:, :needed].reshape(x.shape[0], plan.n_segments, plan.segment_len)
    return np.ascontiguousarray(segments.transpose(1, 0, 2))


@dataclass(frozen=True)
class BandBinInfo:
    band: str
    n_bins: int
    low_resolution: bool  # <= 1 usable FFT bin at this segment length
    fallback_bin_hz: float | None  # nearest bin used when the band is empty


@dataclass(frozen=True)
class CrossSpectra:
    """Per-segment band-aggregated cross-spectral matrices.

    ``values[s, b, i, j]`` is the mean over band ``b``'s FFT bins of
    ``F_i(f) * conj(F_j(f))`` for segment ``s``. The matrix is Hermitian
    in (i, j); the diagonal holds the (real) auto-spectra.
    """

    values: np.ndarray  # complex, (n_segments, n_bands, n_ch, n_ch)
    band_names: tuple[str, ...]
    band_info: tuple[BandBinInfo, ...]

    @property
    def n_segments(self) -> int:
        return self.values.shape[0]


def _band_bins(
    freqs: np.ndarray, bands: tuple[BandDefinition, ...]
) -> tuple[list[np.ndarray], list[BandBinInfo]]:
    masks, infos = [], []
    positive = np.flatnonzero(freqs > 0)
    for band in bands:
        idx = np.flatnonzero((freqs >= band.lo_hz) & (freqs < band.hi_hz))
        fallback = None
        if idx.size == 0:
            # Coarse segment resolution can leave a band with no bins;
            # fall back to the positive-frequency bin nearest the band
            # centre so the column contract and value ranges still hold.
            centre = (band.lo_hz + band.hi_hz) / 2.0
            nearest = positive[np.argmin(np.abs(freqs[positive] - centre))]
            idx = np.array([nearest])
            fallback = float(freqs[nearest])
        infos.append(
            BandBinInfo(
                band=band.name,
                n_bins=int(idx.size) if fallback is None else 0,
                low_resolution=(fallback is not None) or idx.size <= 1,
                fallback_bin_hz=fallback,
            )
        )
        masks.append(idx)
    return masks, infos


def bandlimited_cross_spectra(
    segments: np.ndarray,
    sample_rate: float,
    bands: tuple[BandDefinition, ...] = CANONICAL_BANDS,
) -> CrossSpectra:
    """Hann-tapered FFT cross-spectra per segment and band."""
    seg = np.asarray(segments, dtype=float)
    if seg.ndim != 3:
        raise InputError(f"segments must be (n_seg, n_ch, len), got {seg.shape}")
    if seg.shape[0] < 2:
        raise SegmentationError(f"need >= 2 segments, got {seg.shape[0]}")
    if not np.all(np.isfinite(seg)):
        raise InputError("segments contain non-finite values")

    n_seg, n_ch, seg_len = seg.shape
    window = np.hanning(seg_len)
    detrended = seg - seg.mean(axis=2, keepdims=True)
    spectra = np.fft.rfft(detrended * window, axis=2)  # (n_seg, n_ch, n_f)
    freqs = np.fft.rfftfreq(seg_len, d=1.0 / sample_rate)
    masks, infos = _band_bins(freqs, bands)

    values = np.empty((n_seg, len(bands), n_ch, n_ch), dtype=complex)
    for b, idx in enumerate(masks):
        fb = spectra[:, :, idx]  # (n_seg, n_ch, n_bins)
        values[:, b] = np.einsum("sif,sjf->sij", fb, np.conj(fb)) / idx.size
    # Mirror the lower triangle from the upper so Hermitian symmetry is
    # exact, not merely up to BLAS summation order.
    il = np.tril_indices(n_ch, k=-1)
    values[:, :, il[0], il[1]] = np.conj(values[:, :, il[1], il[0]])
    return CrossSpectra(
        values=values,
        band_names=tuple(b.name for b in bands),
        band_info=tuple(infos),
    )
