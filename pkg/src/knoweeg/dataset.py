"""Labeled multichannel EEG datasets: data model, file formats, splits.

Two on-disk formats are supported:

* ``eegds-binary`` -- one fast canonical file. Little-endian header
  ``{magic b"EEGD", version u32, n_samples u32, n_channels u32,
  n_timesteps u32, sample_rate_milli_hz u32, n_classes u32}`` followed by
  the float32 sample block, the uint16 label block, and a length-prefixed
  JSON trailer carrying the montage (and split tag) so round trips are
  lossless.
* ``csv-manifest`` -- a human-editable JSON manifest listing per-sample
  CSV paths and labels, for interoperability.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import FormatError, LabelError, MontageError, StratifyError
from .montage import BUILTIN_MONTAGES, Montage

_MAGIC = b"EEGD"
_FORMAT_VERSION = 1
_HEADER = struct.Struct("<4s6I")

SPLIT_TAGS = ("train", "val", "test", "unsplit")


@dataclass(frozen=True)
class EegDataset:
    """Samples of shape (n_samples, n_channels, n_timesteps), microvolts.

    Values are stored as float32 (the on-disk precision) so save/load
    round trips are bit exact.
    """

    samples: np.ndarray
    labels: np.ndarray
    sample_rate: float
    montage: Montage
    n_classes: int
    split_tag: str = "unsplit"

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float32)
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "labels", labels)
        if samples.ndim != 3:
            raise FormatError(f"samples must be 3-axis, got shape {samples.shape}")
        if labels.shape != (samples.shape[0],):
            raise LabelError("one label per sample required")
        if self.n_classes < 2:
            raise LabelError(f"need at least 2 classes, got {self.n_classes}")
        if labels.size and (labels.min() < 0 or labels.max() >= self.n_classes):
            raise LabelError(
                f"labels must lie in [0, {self.n_classes}), got range "
                f"[{labels.min()}, {labels.max()}]"
            )
        if samples.shape[1] != self.montage.channel_count:
            raise MontageError(
                f"{samples.shape[1]} channels but montage "
                f"{self.montage.name!r} declares {self.montage.channel_count}"
            )
        if self.sample_rate <= 0:
            raise FormatError("sample_rate must be positive")
        if self.split_tag not in SPLIT_TAGS:
            raise FormatError(f"split_tag must be one of {SPLIT_TAGS}")

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def n_channels(self) -> int:
        return self.samples.shape[1]

    @property
    def n_timesteps(self) -> int:
        return self.samples.shape[2]

    @property
    def duration_s(self) -> float:
        return self.n_timesteps / self.sample_rate

    def subset(self, indices: np.ndarray, split_tag: str | None = None) -> "EegDataset":
        indices = np.asarray(indices, dtype=np.intp)
        return replace(
            self,
            samples=self.samples[indices],
            labels=self.labels[indices],
            split_tag=split_tag if split_tag is not None else self.split_tag,
        )


def concat_datasets(a: EegDataset, b: EegDataset, split_tag: str = "train") -> EegDataset:
    if a.montage.channel_names != b.montage.channel_names:
        raise MontageError("cannot concatenate datasets with different montages")
    if a.sample_rate != b.sample_rate or a.n_timesteps != b.n_timesteps:
        raise FormatError("cannot concatenate datasets with different sampling")
    return replace(
        a,
        samples=np.concatenate([a.samples, b.samples], axis=0),
        labels=np.concatenate([a.labels, b.labels]),
        n_classes=max(a.n_classes, b.n_classes),
        split_tag=split_tag,
    )


def save_dataset(dataset: EegDataset, path: str | Path) -> None:
    """Write the canonical eegds-binary file."""
    path = Path(path)
    rate_milli_hz = int(round(dataset.sample_rate * 1000))
    header = _HEADER.pack(
        _MAGIC,
        _FORMAT_VERSION,
        dataset.n_samples,
        dataset.n_channels,
        dataset.n_timesteps,
        rate_milli_hz,
        dataset.n_classes,
    )
    trailer = json.dumps(
        {"montage": dataset.montage.to_dict(), "split_tag": dataset.split_tag},
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(dataset.samples, dtype="<f4").tobytes())
        fh.write(dataset.labels.astype("<u2").tobytes())
        fh.write(struct.pack("<I", len(trailer)))
        fh.write(trailer)


def _load_binary(path: Path) -> EegDataset:
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: file shorter than header")
    magic, version, n_samples, n_channels, n_timesteps, rate_milli_hz, n_classes = (
        _HEADER.unpack_from(raw)
    )
    if magic != _MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != _FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {version}")
    n_values = n_samples * n_channels * n_timesteps
    offset = _HEADER.size
    expected = offset + 4 * n_values + 2 * n_samples + 4
    if len(raw) < expected:
        raise FormatError(f"{path}: truncated file ({len(raw)} < {expected} bytes)")
    samples = np.frombuffer(raw, dtype="<f4", count=n_values, offset=offset)
    samples = samples.reshape(n_samples, n_channels, n_timesteps).copy()
    offset += 4 * n_values
    labels = np.frombuffer(raw, dtype="<u2", count=n_samples, offset=offset).astype(np.int64)
    offset += 2 * n_samples
    (trailer_len,) = struct.unpack_from("<I", raw, offset)
    offset += 4
    try:
        trailer = json.loads(raw[offset : offset + trailer_len].decode("utf-8"))
        montage = Montage.from_dict(trailer["montage"])
        split_tag = trailer.get("split_tag", "unsplit")
    except (ValueError, KeyError) as exc:
        raise FormatError(f"{path}: corrupt metadata trailer: {exc}") from exc
    if montage.channel_count != n_channels:
        raise MontageError(
            f"{path}: {n_channels}-channel file with "
            f"{montage.channel_count}-channel montage declared"
        )
    if labels.size and labels.max() >= n_classes:
        raise LabelError(f"{path}: label {labels.max()} outside [0, {n_classes})")
    return EegDataset(
        samples=samples,
        labels=labels,
        sample_rate=rate_milli_hz / 1000.0,
        montage=montage,
        n_classes=n_classes,
        split_tag=split_tag,
    )


def _resolve_montage(decl, n_channels: int) -> Montage:
    if isinstance(decl, str):
        if decl not in BUILTIN_MONTAGES:
            raise MontageError(f"unknown montage name {decl!r}")
        return BUILTIN_MONTAGES[decl]
    if isinstance(decl, dict):
        return Montage.from_dict(decl)
    raise MontageError(f"montage must be a name or an inline object, got {type(decl)}")


def _load_manifest(path: Path) -> EegDataset:
    try:
        manifest = json.loads(path.read_text())
    except ValueError as exc:
        raise FormatError(f"{path}: not valid JSON: {exc}") from exc
    for key in ("sample_rate", "montage", "samples"):
        if key not in manifest:
            raise FormatError(f"{path}: manifest missing {key!r}")
    entries = manifest["samples"]
    if not entries:
        raise FormatError(f"{path}: manifest lists no samples")

    blocks, labels = [], []
    montage: Montage | None = None
    for entry in entries:
        csv_path = path.parent / entry["path"]
        with open(csv_path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise FormatError(f"{csv_path}: empty CSV")
        header, data_rows = rows[0], rows[1:]
        if montage is None:
            montage = _resolve_montage(manifest["montage"], len(header))
        if sorted(header) != sorted(montage.channel_names):
            raise MontageError(
                f"{csv_path}: CSV channels {header} do not match montage "
                f"{montage.name!r}"
            )
        order = [header.index(ch) for ch in montage.channel_names]
        try:
            values = np.asarray(data_rows, dtype=np.float32)
        except ValueError as exc:
            raise FormatError(f"{csv_path}: non-numeric sample values: {exc}") from exc
        blocks.append(values[:, order].T)
        labels.append(int(entry["label"]))

    lengths = {b.shape[1] for b in blocks}
    if len(lengths) != 1:
        raise FormatError(f"{path}: samples have differing lengths {sorted(lengths)}")
    labels_arr = np.asarray(labels, dtype=np.int64)
    if labels_arr.min() < 0:
        raise LabelError(f"{path}: negative label {labels_arr.min()}")
    n_classes = int(manifest.get("n_classes", labels_arr.max() + 1))
    if labels_arr.max() >= n_classes:
        raise LabelError(f"{path}: label {labels_arr.max()} outside [0, {n_classes})")
    return EegDataset(
        samples=np.stack(blocks),
        labels=labels_arr,
        sample_rate=float(manifest["sample_rate"]),
        montage=montage,
        n_classes=n_classes,
        split_tag=manifest.get("split_tag", "unsplit"),
    )


def load_dataset(path: str | Path, format: str | None = None) -> EegDataset:
    """Load a dataset; format inferred from the extension when not given."""
    path = Path(path)
    if not path.exists():
        raise FormatError(f"no such file: {path}")
    if format is None:
        format = "csv-manifest" if path.suffix.lower() == ".json" else "eegds-binary"
    if format == "eegds-binary":
        return _load_binary(path)
    if format == "csv-manifest":
        return _load_manifest(path)
    raise FormatError(f"unknown dataset format {format!r}")


def split_train_val(
    dataset: EegDataset, val_fraction: float, seed: int
) -> tuple[EegDataset, EegDataset]:
    """Stratified, deterministic train/validation split.

    Every class contributes round(n_class * val_fraction) samples to the
    validation side, clamped so both sides keep at least one sample of
    each class.
    """
    if not 0.0 < val_fraction < 1.0:
        raise ValueError(f"val_fraction must be in (0, 1), got {val_fraction}")
    rng = np.random.default_rng(seed)
    labels = dataset.labels
    train_idx, val_idx = [], []
    for cls in np.unique(labels):
        cls_idx = np.flatnonzero(labels == cls)
        if cls_idx.size < 2:
            raise StratifyError(f"class {cls} has {cls_idx.size} sample(s); need >= 2")
        cls_idx = rng.permutation(cls_idx)
        n_val = int(round(cls_idx.size * val_fraction))
        n_val = max(1, min(cls_idx.size - 1, n_val))
        val_idx.append(cls_idx[:n_val])
        train_idx.append(cls_idx[n_val:])
    train_idx = np.sort(np.concatenate(train_idx))
    val_idx = np.sort(np.concatenate(val_idx))
    return dataset.subset(train_idx, "train"), dataset.subset(val_idx, "val")
