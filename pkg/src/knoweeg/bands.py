"""Canonical EEG frequency bands.

Band intervals are half-open ``[lo, hi)`` so shared edges (4, 8, 12, 16,
30 Hz) are never counted twice.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class BandDefinition:
    name: str
    lo_hz: float
    hi_hz: float

    def __post_init__(self):
        if not 0 <= self.lo_hz < self.hi_hz:
            raise ValueError(f"invalid band bounds: {self.lo_hz}..{self.hi_hz}")


CANONICAL_BANDS: tuple[BandDefinition, ...] = (
    BandDefinition("delta", 0.5, 4.0),
    BandDefinition("theta", 4.0, 8.0),
    BandDefinition("alpha", 8.0, 12.0),
    BandDefinition("sigma", 12.0, 16.0),
    BandDefinition("beta", 16.0, 30.0),
    BandDefinition("gamma", 30.0, 40.0),
)

BAND_NAMES: tuple[str, ...] = tuple(b.name for b in CANONICAL_BANDS)


def band_by_name(name: str) -> BandDefinition:
    for b in CANONICAL_BANDS:
        if b.name == name:
            return b
    raise KeyError(f"unknown band: {name!r}")
