"""Tabular feature currency: named columns over samples.

Column names come in three families:

* per-electrode: ``{channel}__{feature_id}__{param}_{value}...``
* connectivity pair: ``con__{metric}__{band}__{chA}-{chB}``
  (band ``full`` for time-domain correlation)
* per-electrode band power: ``pow__{band}__{channel}``

Parameter values never contain underscores, so each ``{param}_{value}``
token splits unambiguously at its last underscore.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError

MODE_PER_ELECTRODE = "per_electrode"
MODE_CONNECTIVITY = "connectivity"

_INT_RE = re.compile(r"^-?\d+$")
_FLOAT_RE = re.compile(r"^-?\d+\.\d+(e-?\d+)?$")

ParamValue = int | float | str


def _format_value(v: ParamValue) -> str:
    if isinstance(v, bool):
        raise InputError("bool feature params are not supported")
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_value(s: str) -> ParamValue:
    if _INT_RE.match(s):
        return int(s)
    if _FLOAT_RE.match(s):
        return float(s)
    return s


@dataclass(frozen=True)
class FeatureDescriptor:
    """Identity of one feature column."""

    feature_id: str
    channel: str | None = None
    pair: tuple[str, str] | None = None
    band: str | None = None
    params: tuple[tuple[str, ParamValue], ...] = ()

    @property
    def name(self) -> str:
        if self.feature_id == "pow":
            return f"pow__{self.band}__{self.channel}"
        if self.pair is not None:
            return f"con__{self.feature_id}__{self.band}__{self.pair[0]}-{self.pair[1]}"
        parts = [self.channel, self.feature_id]
        parts.extend(f"{k}_{_format_value(v)}" for k, v in self.params)
        return "__".join(parts)

    def __str__(self) -> str:
        return self.name

    @property
    def channels(self) -> tuple[str, ...]:
        """All channels this column involves (one, or two for pairs)."""
        if self.pair is not None:
            return self.pair
        return (self.channel,) if self.channel else ()

    def param(self, key: str, default=None) -> ParamValue:
        for k, v in self.params:
            if k == key:
                return v
        return default


def parse_descriptor(
    name: str, channel_names: tuple[str, ...] | None = None
) -> FeatureDescriptor:
    """Invert :attr:`FeatureDescriptor.name`.

    ``channel_names`` is needed to split pair tokens unambiguously when
    channel labels themselves contain hyphens (bipolar montages).
    """
    tokens = name.split("__")
    if tokens[0] == "pow":
        if len(tokens) != 3:
            raise InputError(f"malformed power descriptor {name!r}")
        return FeatureDescriptor(feature_id="pow", channel=tokens[2], band=tokens[1])
    if tokens[0] == "con":
        if len(tokens) != 4:
            raise InputError(f"malformed connectivity descriptor {name!r}")
        pair = _split_pair(tokens[3], channel_names)
        return FeatureDescriptor(feature_id=tokens[1], band=tokens[2], pair=pair)
    if len(tokens) < 2:
        raise InputError(f"malformed descriptor {name!r}")
    params = []
    for token in tokens[2:]:
        key, _, value = token.rpartition("_")
        if not key:
            raise InputError(f"malformed param token {token!r} in {name!r}")
        params.append((key, _parse_value(value)))
    return FeatureDescriptor(
        feature_id=tokens[1], channel=tokens[0], params=tuple(params)
    )


def _split_pair(
    token: str, channel_names: tuple[str, ...] | None
) -> tuple[str, str]:
    if channel_names:
        for i in range(1, len(token)):
            if token[i] != "-":
                continue
            a, b = token[:i], token[i + 1 :]
            if a in channel_names and b in channel_names:
                return (a, b)
    a, _, b = token.partition("-")
    if not a or not b:
        raise InputError(f"malformed channel pair {token!r}")
    return (a, b)


@dataclass
class FeatureMatrix:
    """(n_samples, n_features) values with per-column descriptors."""

    values: np.ndarray
    descriptors: tuple[FeatureDescriptor, ...]
    mode_tag: str = MODE_PER_ELECTRODE

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.descriptors = tuple(self.descriptors)
        if self.values.ndim != 2:
            raise InputError(f"values must be 2-axis, got shape {self.values.shape}")
        if self.values.shape[1] != len(self.descriptors):
            raise InputError(
                f"{self.values.shape[1]} columns but {len(self.descriptors)} descriptors"
            )
        names = self.column_names
        if len(set(names)) != len(names):
            raise InputError("duplicate feature descriptors")
        if self.mode_tag not in (MODE_PER_ELECTRODE, MODE_CONNECTIVITY):
            raise InputError(f"unknown mode_tag {self.mode_tag!r}")

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    @property
    def column_names(self) -> tuple[str, ...]:
        return tuple(d.name for d in self.descriptors)

    def select(self, indices) -> "FeatureMatrix":
        indices = np.asarray(indices)
        if indices.dtype == bool:
            indices = np.flatnonzero(indices)
        return FeatureMatrix(
            values=self.values[:, indices],
            descriptors=tuple(self.descriptors[i] for i in indices),
            mode_tag=self.mode_tag,
        )

    def rows(self, indices) -> "FeatureMatrix":
        return FeatureMatrix(
            values=self.values[np.asarray(indices)],
            descriptors=self.descriptors,
            mode_tag=self.mode_tag,
        )

    def to_csv(self, path: str | Path | io.TextIOBase) -> None:
        close = False
        if isinstance(path, (str, Path)):
            fh = open(path, "w", newline="")
            close = True
        else:
            fh = path
        try:
            writer = csv.writer(fh)
            writer.writerow(self.column_names)
            for row in self.values:
                writer.writerow([repr(float(v)) for v in row])
        finally:
            if close:
                fh.close()

    @classmethod
    def from_csv(
        cls,
        path: str | Path,
        mode_tag: str = MODE_PER_ELECTRODE,
        channel_names: tuple[str, ...] | None = None,
    ) -> "FeatureMatrix":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            values = np.asarray([[float(v) for v in row] for row in reader])
        if values.size == 0:
            values = values.reshape(0, len(header))
        descriptors = tuple(parse_descriptor(name, channel_names) for name in header)
        return cls(values=values, descriptors=descriptors, mode_tag=mode_tag)


def concat_rows(a: FeatureMatrix, b: FeatureMatrix) -> FeatureMatrix:
    if a.column_names != b.column_names:
        raise InputError("row concat requires identical columns")
    return FeatureMatrix(
        values=np.concatenate([a.values, b.values], axis=0),
        descriptors=a.descriptors,
        mode_tag=a.mode_tag,
    )
