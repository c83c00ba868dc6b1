"""Exception types shared across the pipeline."""


class KnowEegError(Exception):
    """Base class for all domain errors raised by this package."""


class FormatError(KnowEegError):
    """A dataset file is structurally malformed (bad magic, header, shapes)."""


class LabelError(KnowEegError):
    """A label is outside the declared class range."""


class MontageError(KnowEegError):
    """Channel count or channel names disagree with the declared montage."""


class StratifyError(KnowEegError):
    """A class has too few samples to stratify a split."""


class SpecError(KnowEegError):
    """A synthetic-data spec is infeasible (e.g. boost above Nyquist)."""


class InputError(KnowEegError):
    """Numeric input is unusable (NaN values, empty data, wrong shape)."""


class DegenerateSpectrumError(KnowEegError):
    """Total in-band power is zero; relative band powers are undefined."""


class PlanError(KnowEegError):
    """A segmentation plan does not fit the sample it is applied to."""


class SegmentationError(KnowEegError):
    """Too few segments for a segment-averaged connectivity estimate."""


class LengthError(KnowEegError):
    """Input series is too short for the requested feature."""


class KeptNothingError(KnowEegError):
    """Statistical filtering rejected every feature.

    The full :class:`~knoweeg.stats.FilterReport` is attached as ``report``
    so callers can decide on a fallback.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class DegenerateLabelsError(KnowEegError):
    """Training labels contain a single class."""


class ParamError(KnowEegError):
    """A hyperparameter is out of its valid range."""


class AlignmentError(KnowEegError):
    """Feature columns do not match the descriptors a model was trained on."""


class SelectionError(KnowEegError):
    """Every candidate connectivity metric failed to produce a score."""


class UndefinedMetricError(KnowEegError):
    """An evaluation metric is undefined for the given labels (e.g. AUROC
    with a single observed class)."""
