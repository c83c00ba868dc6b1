"""Electrode montages: channel names, scalp coordinates, brain regions.

Coordinates are 2-D projections onto the unit disc, x toward the right
ear and y toward the nose. Bipolar channels take the midpoint of their
two electrodes, which stays inside the disc by convexity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import MontageError

# Approximate 10-20 electrode positions on the unit disc (x right, y front).
ELECTRODE_POSITIONS_2D: dict[str, tuple[float, float]] = {
    "FP1": (-0.28, 0.86), "FP2": (0.28, 0.86),
    "AF3": (-0.30, 0.73), "AF4": (0.30, 0.73),
    "F7": (-0.73, 0.53), "F3": (-0.40, 0.48), "FZ": (0.0, 0.45),
    "F4": (0.40, 0.48), "F8": (0.73, 0.53),
    "FC5": (-0.62, 0.25), "FC6": (0.62, 0.25),
    "T7": (-0.90, 0.0), "C3": (-0.45, 0.0), "CZ": (0.0, 0.0),
    "C4": (0.45, 0.0), "T8": (0.90, 0.0),
    "P7": (-0.73, -0.53), "P3": (-0.40, -0.48), "PZ": (0.0, -0.45),
    "P4": (0.40, -0.48), "P8": (0.73, -0.53),
    "O1": (-0.28, -0.86), "O2": (0.28, -0.86),
}


@dataclass(frozen=True)
class Montage:
    """An ordered electrode set with positions and region labels."""

    name: str
    channel_names: tuple[str, ...]
    positions_2d: tuple[tuple[float, float], ...]
    regions: tuple[str, ...]

    def __post_init__(self):
        n = len(self.channel_names)
        if len(set(self.channel_names)) != n:
            raise MontageError(f"duplicate channel names in montage {self.name!r}")
        if len(self.positions_2d) != n or len(self.regions) != n:
            raise MontageError(
                f"montage {self.name!r}: positions/regions must match channel count"
            )
        for ch, (x, y) in zip(self.channel_names, self.positions_2d):
            if math.hypot(x, y) > 1.0 + 1e-9:
                raise MontageError(f"channel {ch} lies outside the unit disc")

    @property
    def channel_count(self) -> int:
        return len(self.channel_names)

    def index_of(self, channel: str) -> int:
        try:
            return self.channel_names.index(channel)
        except ValueError:
            raise MontageError(f"channel {channel!r} not in montage {self.name!r}") from None

    def region_of(self, channel: str) -> str:
        return self.regions[self.index_of(channel)]

    def positions_array(self) -> np.ndarray:
        return np.asarray(self.positions_2d, dtype=float)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "channel_names": list(self.channel_names),
            "positions_2d": [list(p) for p in self.positions_2d],
            "regions": list(self.regions),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Montage":
        return cls(
            name=d["name"],
            channel_names=tuple(d["channel_names"]),
            positions_2d=tuple((float(x), float(y)) for x, y in d["positions_2d"]),
            regions=tuple(d["regions"]),
        )


def _position(electrode: str) -> tuple[float, float]:
    return ELECTRODE_POSITIONS_2D[electrode.upper()]


def _bipolar_position(channel: str) -> tuple[float, float]:
    a, b = channel.split("-", 1)
    (xa, ya), (xb, yb) = _position(a), _position(b)
    return ((xa + xb) / 2.0, (ya + yb) / 2.0)


_EMOTIV14_CHANNELS = (
    "AF3", "F7", "F3", "FC5", "T7", "P7", "O1",
    "O2", "P8", "T8", "FC6", "F4", "F8", "AF4",
)

# FC5/FC6 carry the Central label (not Frontal) so region summaries name
# them Left/Right Central.
_EMOTIV14_REGIONS = {
    "O1": "Occipital", "O2": "Occipital",
    "P7": "Parietal", "P8": "Parietal",
    "T7": "Left Temporal", "T8": "Right Temporal",
    "FC5": "Left Central", "FC6": "Right Central",
    "F3": "Left Frontal", "F7": "Left Frontal", "AF3": "Left Frontal",
    "F4": "Right Frontal", "F8": "Right Frontal", "AF4": "Right Frontal",
}

_TUH16_CHANNELS = (
    "FP1-F7", "F7-T7", "T7-P7", "P7-O1",
    "FP2-F8", "F8-T8", "T8-P8", "P8-O2",
    "FP1-F3", "F3-C3", "C3-P3", "P3-O1",
    "FP2-F4", "F4-C4", "C4-P4", "P4-O2",
)

_TUH16_REGIONS = {
    "FP1-F7": "Left Frontal", "F7-T7": "Left Temporal",
    "T7-P7": "Left Temporal", "P7-O1": "Occipital",
    "FP2-F8": "Right Frontal", "F8-T8": "Right Temporal",
    "T8-P8": "Right Temporal", "P8-O2": "Occipital",
    "FP1-F3": "Left Frontal", "F3-C3": "Left Central",
    "C3-P3": "Left Parietal", "P3-O1": "Occipital",
    "FP2-F4": "Right Frontal", "F4-C4": "Right Central",
    "C4-P4": "Right Parietal", "P4-O2": "Occipital",
}

EMOTIV_14 = Montage(
    name="emotiv14",
    channel_names=_EMOTIV14_CHANNELS,
    positions_2d=tuple(_position(ch) for ch in _EMOTIV14_CHANNELS),
    regions=tuple(_EMOTIV14_REGIONS[ch] for ch in _EMOTIV14_CHANNELS),
)

TUH_16 = Montage(
    name="tuh16",
    channel_names=_TUH16_CHANNELS,
    positions_2d=tuple(_bipolar_position(ch) for ch in _TUH16_CHANNELS),
    regions=tuple(_TUH16_REGIONS[ch] for ch in _TUH16_CHANNELS),
)

BUILTIN_MONTAGES: dict[str, Montage] = {
    EMOTIV_14.name: EMOTIV_14,
    TUH_16.name: TUH_16,
}


def builtin_montage(name: str) -> Montage:
    try:
        return BUILTIN_MONTAGES[name]
    except KeyError:
        raise MontageError(
            f"unknown montage {name!r}; built-ins: {sorted(BUILTIN_MONTAGES)}"
        ) from None


def generic_montage(n_channels: int) -> Montage:
    """Placeholder montage (ring layout, single region) for unnamed setups."""
    names = tuple(f"CH{i + 1}" for i in range(n_channels))
    angles = [2 * math.pi * i / n_channels for i in range(n_channels)]
    positions = tuple((0.8 * math.sin(a), 0.8 * math.cos(a)) for a in angles)
    return Montage(
        name=f"generic{n_channels}",
        channel_names=names,
        positions_2d=positions,
        regions=tuple("Unknown" for _ in names),
    )
