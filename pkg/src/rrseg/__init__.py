"""rrseg: changepoint-detection benchmark suite for RR-interval time series.

Eight segmentation algorithms, a synthetic tachogram generator with known
changepoints, tolerance-based evaluation with grid-search tuning, and a
downstream Pareto/KNN classification pipeline.
"""

from .series import (
    ChangepointResult,
    RRSeries,
    Segmentation,
    changepoints_from_segments,
    normalize,
    segments_from_changepoints,
)

__version__ = "0.1.0"

__all__ = [
    "RRSeries",
    "ChangepointResult",
    "Segmentation",
    "normalize",
    "segments_from_changepoints",
    "changepoints_from_segments",
    "__version__",
]
