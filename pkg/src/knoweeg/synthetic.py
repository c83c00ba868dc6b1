"""Synthetic EEG generation for tests and benchmark runs.

Samples are pink-noise backgrounds with per-class sinusoidal band boosts
on named channels (or on every channel). Boost strength is expressed as
an amplitude SNR against the per-channel noise RMS, with mild lognormal
jitter per sample so classes are strongly but not degenerately separable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import EegDataset
from .errors import SpecError
from .montage import Montage

_AMPLITUDE_JITTER_SIGMA = 0.30


@dataclass(frozen=True)
class ClassBoost:
    """A sinusoid added on top of the noise background.

    ``channel=None`` boosts every channel. ``snr`` is the ratio of tone
    RMS to noise RMS (so tone power is snr^2 times noise power).
    """

    freq_hz: float
    snr: float
    channel: str | None = None


@dataclass(frozen=True)
class SyntheticSpec:
    montage: Montage
    n_samples: int
    sample_rate: float
    duration_s: float
    n_classes: int = 2
    boosts: dict[int, tuple[ClassBoost, ...]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "montage": self.montage.to_dict(),
            "n_samples": self.n_samples,
            "sample_rate": self.sample_rate,
            "duration_s": self.duration_s,
            "n_classes": self.n_classes,
            "boosts": {
                str(cls): [
                    {"freq_hz": b.freq_hz, "snr": b.snr, "channel": b.channel}
                    for b in boosts
                ]
                for cls, boosts in self.boosts.items()
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        from .montage import BUILTIN_MONTAGES

        montage_decl = d["montage"]
        if isinstance(montage_decl, str):
            montage = BUILTIN_MONTAGES[montage_decl]
        else:
            montage = Montage.from_dict(montage_decl)
        boosts = {
            int(cls): tuple(
                ClassBoost(
                    freq_hz=float(b["freq_hz"]),
                    snr=float(b["snr"]),
                    channel=b.get("channel"),
                )
                for b in items
            )
            for cls, items in d.get("boosts", {}).items()
        }
        return cls(
            montage=montage,
            n_samples=int(d["n_samples"]),
            sample_rate=float(d["sample_rate"]),
            duration_s=float(d["duration_s"]),
            n_classes=int(d.get("n_classes", 2)),
            boosts=boosts,
        )


def _pink_noise(rng: np.random.Generator, n_series: int, n_t: int) -> np.ndarray:
    """Unit-variance 1/f noise, one row per series."""
    freqs = np.fft.rfftfreq(n_t, d=1.0)
    shaping = np.zeros_like(freqs)
    shaping[1:] = freqs[1:] ** -0.5
    spectrum = (
        rng.standard_normal((n_series, freqs.size))
        + 1j * rng.standard_normal((n_series, freqs.size))
    ) * shaping
    noise = np.fft.irfft(spectrum, n=n_t, axis=1)
    noise -= noise.mean(axis=1, keepdims=True)
    rms = np.sqrt(np.mean(noise**2, axis=1, keepdims=True))
    rms[rms == 0] = 1.0
    return noise / rms


def generate_synthetic(spec: SyntheticSpec, seed: int) -> EegDataset:
    """Deterministic synthetic dataset with the class structure of ``spec``."""
    nyquist = spec.sample_rate / 2.0
    for boosts in spec.boosts.values():
        for boost in boosts:
            if boost.freq_hz >= nyquist:
                raise SpecError(
                    f"boost at {boost.freq_hz} Hz >= Nyquist {nyquist} Hz"
                )
            if boost.channel is not None:
                spec.montage.index_of(boost.channel)
    for cls in spec.boosts:
        if not 0 <= cls < spec.n_classes:
            raise SpecError(f"boost class {cls} outside [0, {spec.n_classes})")

    rng = np.random.default_rng(seed)
    n_ch = spec.montage.channel_count
    n_t = int(round(spec.duration_s * spec.sample_rate))
    labels = rng.permutation(np.arange(spec.n_samples) % spec.n_classes)

    noise = _pink_noise(rng, spec.n_samples * n_ch, n_t)
    samples = noise.reshape(spec.n_samples, n_ch, n_t)

    t = np.arange(n_t) / spec.sample_rate
    for cls in range(spec.n_classes):
        sample_idx = np.flatnonzero(labels == cls)
        for boost in spec.boosts.get(cls, ()):
            if boost.channel is None:
                ch_idx = np.arange(n_ch)
            else:
                ch_idx = np.array([spec.montage.index_of(boost.channel)])
            phases = rng.uniform(0, 2 * np.pi, size=(sample_idx.size, ch_idx.size))
            jitter = np.exp(
                rng.normal(0.0, _AMPLITUDE_JITTER_SIGMA, size=(sample_idx.size, ch_idx.size))
            )
            # noise rows are unit RMS, so tone amplitude snr*sqrt(2) gives
            # tone RMS = snr * noise RMS
            amp = boost.snr * np.sqrt(2.0) * jitter
            tone = amp[:, :, None] * np.sin(
                2 * np.pi * boost.freq_hz * t[None, None, :] + phases[:, :, None]
            )
            samples[np.ix_(sample_idx, ch_idx)] += tone

    return EegDataset(
        samples=samples.astype(np.float32),
        labels=labels,
        sample_rate=spec.sample_rate,
        montage=spec.montage,
        n_classes=spec.n_classes,
    )


def eyes_task_spec(
    montage: Montage,
    n_samples: int,
    sample_rate: float = 128.0,
    duration_s: float = 2.0,
    snr: float = 2.0,
) -> SyntheticSpec:
    """Two-class benchmark: alpha tone at O1/O2 vs a broad gamma tone."""
    return SyntheticSpec(
        montage=montage,
        n_samples=n_samples,
        sample_rate=sample_rate,
        duration_s=duration_s,
        n_classes=2,
        boosts={
            0: (
                ClassBoost(freq_hz=10.0, snr=snr, channel="O1"),
                ClassBoost(freq_hz=10.0, snr=snr, channel="O2"),
            ),
            1: (ClassBoost(freq_hz=35.0, snr=snr, channel=None),),
        },
    )
