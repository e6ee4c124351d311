"""Core data model for RR-interval series and their segmentations.

An RR series is the sequence of durations (seconds) between successive
heartbeats. Changepoint indices follow one convention everywhere in this
package: index ``i`` means the segment boundary lies between beat ``i-1``
and beat ``i``, so valid changepoints live in ``[1, N-1]`` for a series of
``N`` intervals.
"""

from __future__ import annotations

from dataclasses import InitVar, dataclass
from functools import cached_property
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

if TYPE_CHECKING:
    from .detectors import DetectorConfig

__all__ = [
    "RRSeries",
    "ChangepointResult",
    "Segmentation",
    "normalize",
    "segments_from_changepoints",
    "changepoints_from_segments",
]


def _as_truth_tuple(truth: Iterable[int] | None, n: int) -> tuple[int, ...] | None:
    if truth is None:
        return None
    out = tuple(int(i) for i in truth)
    for prev, cur in zip(out, out[1:]):
        if cur <= prev:
            raise ValueError("truth indices must be strictly increasing")
    if out and (out[0] < 1 or out[-1] > n - 1):
        raise ValueError(f"truth indices must lie in [1, {n - 1}]")
    return out


@dataclass(frozen=True)
class RRSeries:
    """A sequence of inter-beat intervals with optional ground-truth changepoints.

    Parameters
    ----------
    intervals : array-like
        Inter-beat durations in seconds, all positive and finite.
    truth : iterable of int, optional
        Ground-truth changepoint indices (beat index, strictly increasing,
        each in ``[1, N-1]``).
    subject_id : str
        Opaque identifier, used for file naming and classification.
    label : str, optional
        Class tag (e.g. ``"RBD"`` or ``"control"``).
    """

    intervals: np.ndarray
    truth: tuple[int, ...] | None = None
    subject_id: str = ""
    label: str | None = None
    require_positive: InitVar[bool] = True

    def __post_init__(self, require_positive: bool) -> None:
        arr = np.asarray(self.intervals, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError("intervals must be one-dimensional")
        if arr.size:
            if not np.all(np.isfinite(arr)):
                raise ValueError("intervals must be finite")
            if require_positive and not np.all(arr > 0):
                raise ValueError("intervals must be positive")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "intervals", arr)
        object.__setattr__(self, "truth", _as_truth_tuple(self.truth, arr.size))

    @property
    def n(self) -> int:
        return int(self.intervals.size)

    def __len__(self) -> int:
        return self.n

    @cached_property
    def cum_time(self) -> np.ndarray:
        """Cumulative time axis (seconds): prefix sum of the intervals."""
        ct = np.cumsum(self.intervals)
        ct.setflags(write=False)
        return ct

    @property
    def duration_seconds(self) -> float:
        return float(self.intervals.sum())

    @property
    def duration_hours(self) -> float:
        return self.duration_seconds / 3600.0

    def replace(self, **kwargs) -> "RRSeries":
        """Copy with selected fields replaced (positivity not re-imposed)."""
        out = {
            "intervals": self.intervals,
            "truth": self.truth,
            "subject_id": self.subject_id,
            "label": self.label,
        }
        out.update(kwargs)
        return RRSeries(require_positive=False, **out)


@dataclass(frozen=True)
class ChangepointResult:
    """Estimated changepoints, with per-index scores where the algorithm has them.

    ``scores`` align one-to-one with ``indices``; their meaning depends on
    the detector (posterior probability, t-statistic, run-length evidence).
    """

    indices: tuple[int, ...]
    scores: tuple[float, ...] | None = None
    detector: "DetectorConfig | None" = None
    warning: str | None = None

    def __post_init__(self) -> None:
        idx = tuple(int(i) for i in self.indices)
        for prev, cur in zip(idx, idx[1:]):
            if cur <= prev:
                raise ValueError("changepoint indices must be strictly increasing")
        if idx and idx[0] < 1:
            raise ValueError("changepoint indices must be >= 1")
        object.__setattr__(self, "indices", idx)
        if self.scores is not None:
            sc = tuple(float(s) for s in self.scores)
            if len(sc) != len(idx):
                raise ValueError("scores must align one-to-one with indices")
            object.__setattr__(self, "scores", sc)

    @property
    def n_changepoints(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class Segmentation:
    """A partition of ``[0, N)`` into contiguous segments.

    ``boundaries`` is ``(0, c_1, ..., c_k, N)``; ``lengths_seconds[j]`` is the
    elapsed RR time inside segment ``j``.
    """

    boundaries: tuple[int, ...]
    lengths_seconds: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.boundaries) < 2:
            raise ValueError("a segmentation needs at least boundaries (0, N)")
        if len(self.lengths_seconds) != len(self.boundaries) - 1:
            raise ValueError("one length per segment required")

    @property
    def n_segments(self) -> int:
        return len(self.lengths_seconds)


def normalize(series: RRSeries) -> RRSeries:
    """Return a copy of the series z-scored to zero mean, unit variance.

    Uses the population (1/N) standard deviation. A constant series maps to
    all zeros. The original series is untouched.
    """
    if series.n == 0:
        raise ValueError("empty input")
    z = zscore(series.intervals)
    return series.replace(intervals=z)


def zscore(x: np.ndarray) -> np.ndarray:
    """z-score an array with the population std; constant input maps to zeros."""
    x = np.asarray(x, dtype=np.float64)
    mu = x.mean()
    sd = x.std()
    if sd == 0.0:
        return np.zeros_like(x)
    return (x - mu) / sd


def segments_from_changepoints(series: RRSeries, result: ChangepointResult | Sequence[int]) -> Segmentation:
    """Partition the series at the estimated changepoints.

    Segment lengths are measured in seconds of elapsed RR time (the sum of
    the member intervals), not in beat counts.
    """
    indices = result.indices if isinstance(result, ChangepointResult) else tuple(int(i) for i in result)
    n = series.n
    for i in indices:
        if not 1 <= i <= n - 1:
            raise ValueError(f"changepoint index {i} out of range [1, {n - 1}]")
    boundaries = (0, *indices, n)
    ext = np.concatenate([[0.0], series.cum_time])
    b = np.asarray(boundaries)
    lengths = ext[b[1:]] - ext[b[:-1]]
    return Segmentation(boundaries=boundaries, lengths_seconds=tuple(float(v) for v in lengths))


def changepoints_from_segments(segmentation: Segmentation) -> tuple[int, ...]:
    """Recover the changepoint indices from a segmentation (exact round-trip)."""
    return segmentation.boundaries[1:-1]
