"""Subject classification from changepoint statistics.

The durations between detected changepoints are fitted to a two-parameter
Pareto distribution; the per-subject (scale, shape) pair feeds a K-nearest
neighbors classifier under leave-one-out or k-fold cross-validation, scoring
each subject by the fraction of positive-class neighbors.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .detectors import DetectorConfig, detect
from .series import RRSeries, segments_from_changepoints

logger = logging.getLogger(__name__)

__all__ = [
    "ParetoFeatures",
    "KnnConfig",
    "ClassifierReport",
    "fit_pareto",
    "make_folds",
    "knn_classify",
    "tune_knn",
    "end_to_end",
    "extract_features",
    "roc_auc",
    "pr_auc",
    "DEFAULT_METRICS",
    "DEFAULT_K_RANGE",
]

DEFAULT_METRICS = ("euclidean", "manhattan", "chebyshev")
DEFAULT_K_RANGE = tuple(range(1, 16))

POSITIVE_LABEL = "RBD"


@dataclass(frozen=True)
class ParetoFeatures:
    """Pareto fit of one subject's inter-changepoint durations."""

    scale: float
    shape: float
    subject_id: str = ""
    label: str | None = None


@dataclass(frozen=True)
class KnnConfig:
    """Neighbor count, distance metric, and feature standardization flag."""

    k: int = 3
    metric: str = "euclidean"
    p: float | None = None  # minkowski exponent
    standardize: bool = True

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.metric not in ("euclidean", "manhattan", "chebyshev", "minkowski"):
            raise ValueError(f"unknown metric {self.metric!r}")
        if self.metric == "minkowski" and (self.p is None or self.p < 1):
            raise ValueError("minkowski metric requires p >= 1")
        if self.metric != "minkowski" and self.p is not None:
            raise ValueError("p is only meaningful for the minkowski metric")


@dataclass(frozen=True)
class ClassifierReport:
    """Aggregate cross-validated metrics plus per-subject predictions."""

    acc: float
    auroc: float
    aucpr: float
    tpr: float
    ppv: float
    f1: float
    config: KnnConfig
    subject_ids: tuple[str, ...]
    labels: tuple[str, ...]
    folds: tuple[int, ...]
    scores: tuple[float, ...]
    predictions: tuple[str, ...]
    positive_label: str = POSITIVE_LABEL
    excluded: tuple[str, ...] = ()


def fit_pareto(
    lengths: Sequence[float], subject_id: str = "", label: str | None = None
) -> ParetoFeatures:
    """Classical Pareto maximum likelihood: scale = min(lengths),
    shape = n / sum(log(l / scale)).

    Raises on fewer than two lengths or an all-identical sample (the shape
    MLE diverges).
    """
    arr = np.asarray(lengths, dtype=np.float64)
    if arr.size < 2:
        raise ValueError("need at least 2 segment lengths")
    if np.any(arr <= 0):
        raise ValueError("lengths must be positive")
    xm = float(arr.min())
    logsum = float(np.log(arr / xm).sum())
    if logsum <= 0.0:
        raise ValueError("degenerate sample")
    return ParetoFeatures(scale=xm, shape=arr.size / logsum, subject_id=subject_id, label=label)


def make_folds(n: int, protocol: str = "loo", seed: int = 0, labels: Sequence[str] | None = None) -> np.ndarray:
    """Fold assignment per subject.

    ``"loo"`` gives each subject its own fold; ``"kfold:K"`` shuffles with
    the seed and deals subjects round-robin, stratified by label when labels
    are provided.
    """
    if protocol == "loo":
        return np.arange(n, dtype=np.int64)
    if protocol.startswith("kfold:"):
        k = int(protocol.split(":", 1)[1])
        if not 2 <= k <= n:
            raise ValueError(f"kfold needs 2 <= K <= {n}")
        rng = np.random.default_rng(seed)
        folds = np.empty(n, dtype=np.int64)
        if labels is None:
            order = rng.permutation(n)
            folds[order] = np.arange(n) % k
        else:
            labels_arr = np.asarray(labels)
            offset = 0
            for lab in sorted(set(labels)):
                idx = np.flatnonzero(labels_arr == lab)
                order = rng.permutation(idx)
                folds[order] = (np.arange(idx.size) + offset) % k
                offset += idx.size
        return folds
    raise ValueError(f"unknown protocol {protocol!r}; use 'loo' or 'kfold:K'")


def _distances(test: np.ndarray, train: np.ndarray, config: KnnConfig) -> np.ndarray:
    diff = np.abs(test[:, None, :] - train[None, :, :])
    if config.metric == "euclidean":
        return np.sqrt((diff**2).sum(axis=2))
    if config.metric == "manhattan":
        return diff.sum(axis=2)
    if config.metric == "chebyshev":
        return diff.max(axis=2)
    return (diff**config.p).sum(axis=2) ** (1.0 / config.p)


def _knn_scores(
    features: np.ndarray, positive: np.ndarray, folds: np.ndarray, config: KnnConfig
) -> np.ndarray:
    """Cross-validated positive-class neighbor fractions, one per subject."""
    n = features.shape[0]
    scores = np.empty(n)
    for fold in np.unique(folds):
        test_mask = folds == fold
        train_mask = ~test_mask
        if positive[train_mask].all() or not positive[train_mask].any():
            raise ValueError(f"fold {fold}: training set is single-class")
        k = config.k
        if k >= int(train_mask.sum()):
            raise ValueError(f"fold {fold}: k={k} must be smaller than the training set")
        tr = features[train_mask]
        te = features[test_mask]
        if config.standardize:
            mu = tr.mean(axis=0)
            sd = tr.std(axis=0)
            sd[sd == 0] = 1.0
            tr = (tr - mu) / sd
            te = (te - mu) / sd
        d = _distances(te, tr, config)
        # stable sort: equidistant neighbors resolve by training index
        nn = np.argsort(d, axis=1, kind="stable")[:, :k]
        scores[test_mask] = positive[train_mask][nn].mean(axis=1)
    return scores


def _threshold_groups(scores: np.ndarray, positive: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cumulative (tp, fp) after each distinct descending score threshold."""
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    pos = positive[order].astype(np.float64)
    boundaries = np.flatnonzero(np.diff(s) != 0)
    ends = np.concatenate([boundaries, [s.size - 1]])
    tp = np.cumsum(pos)[ends]
    fp = np.cumsum(1.0 - pos)[ends]
    return tp, fp


def roc_auc(scores: Sequence[float], positive: Sequence[bool]) -> float:
    """Area under the ROC curve by trapezoidal integration over distinct
    score thresholds (equivalent to averaging over tied orderings)."""
    scores = np.asarray(scores, dtype=np.float64)
    positive = np.asarray(positive, dtype=bool)
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("both classes required")
    tp, fp = _threshold_groups(scores, positive)
    tpr = np.concatenate([[0.0], tp / n_pos])
    fpr = np.concatenate([[0.0], fp / n_neg])
    return float(np.trapezoid(tpr, fpr))


def pr_auc(scores: Sequence[float], positive: Sequence[bool]) -> float:
    """Area under the precision-recall curve, trapezoid over distinct
    thresholds with the curve anchored at recall 0."""
    scores = np.asarray(scores, dtype=np.float64)
    positive = np.asarray(positive, dtype=bool)
    n_pos = int(positive.sum())
    if n_pos == 0 or n_pos == positive.size:
        raise ValueError("both classes required")
    tp, fp = _threshold_groups(scores, positive)
    recall = tp / n_pos
    precision = tp / np.maximum(tp + fp, 1e-300)
    recall = np.concatenate([[0.0], recall])
    precision = np.concatenate([[precision[0]], precision])
    return float(np.trapezoid(precision, recall))


def knn_classify(
    features: Sequence[ParetoFeatures],
    config: KnnConfig | None = None,
    folds: Sequence[int] | None = None,
    positive_label: str = POSITIVE_LABEL,
) -> ClassifierReport:
    """Cross-validated KNN over (scale, shape) features.

    Each test subject's score is the fraction of its k nearest training
    neighbors carrying the positive label; prediction is positive iff the
    score exceeds 0.5 (ties go negative). Metrics aggregate the pooled
    predictions across folds.
    """
    config = config or KnnConfig()
    feats = list(features)
    if any(f.label is None for f in feats):
        raise ValueError("every subject needs a label")
    labels = [f.label for f in feats]
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise ValueError("at least two classes required")
    if positive_label not in classes:
        raise ValueError(f"positive label {positive_label!r} absent from data")
    negative_label = next(c for c in classes if c != positive_label)
    X = np.array([[f.scale, f.shape] for f in feats], dtype=np.float64)
    positive = np.array([lab == positive_label for lab in labels], dtype=bool)
    fold_arr = np.asarray(folds, dtype=np.int64) if folds is not None else make_folds(len(feats))
    if fold_arr.size != len(feats):
        raise ValueError("folds must assign every subject")

    scores = _knn_scores(X, positive, fold_arr, config)
    predicted = scores > 0.5
    tp = int(np.sum(predicted & positive))
    fp = int(np.sum(predicted & ~positive))
    fn = int(np.sum(~predicted & positive))
    tn = int(np.sum(~predicted & ~positive))
    acc = (tp + tn) / len(feats)
    tpr = tp / (tp + fn) if (tp + fn) else 1.0
    ppv = tp / (tp + fp) if (tp + fp) else 1.0
    f1 = 2.0 * tp / (2.0 * tp + fp + fn) if (2 * tp + fp + fn) else 1.0
    return ClassifierReport(
        acc=acc,
        auroc=roc_auc(scores, positive),
        aucpr=pr_auc(scores, positive),
        tpr=tpr,
        ppv=ppv,
        f1=f1,
        config=config,
        subject_ids=tuple(f.subject_id for f in feats),
        labels=tuple(labels),
        folds=tuple(int(v) for v in fold_arr),
        scores=tuple(float(v) for v in scores),
        predictions=tuple(positive_label if p else negative_label for p in predicted),
        positive_label=positive_label,
    )


def tune_knn(
    features: Sequence[ParetoFeatures],
    folds: Sequence[int] | None = None,
    k_range: Sequence[int] = DEFAULT_K_RANGE,
    metrics: Sequence[str] = DEFAULT_METRICS,
    positive_label: str = POSITIVE_LABEL,
    standardize: bool = True,
) -> KnnConfig:
    """Exhaustive search over k and metric, maximizing cross-validated AUCPR.

    Ties break toward smaller k, then metric declaration order.
    """
    feats = list(features)
    n_train_min = _min_training_size(feats, folds)
    best: tuple[float, int, int] | None = None  # (-aucpr, k index, metric index)
    best_cfg: KnnConfig | None = None
    for ki, k in enumerate(k_range):
        if k >= n_train_min:
            continue
        for mi, metric in enumerate(metrics):
            cfg = KnnConfig(k=k, metric=metric, standardize=standardize)
            report = knn_classify(feats, cfg, folds, positive_label)
            key = (-report.aucpr, ki, mi)
            if best is None or key < best:
                best = key
                best_cfg = cfg
    if best_cfg is None:
        raise ValueError("no feasible KNN configuration for this fold layout")
    return best_cfg


def _min_training_size(feats, folds) -> int:
    n = len(feats)
    if folds is None:
        return n - 1
    fold_arr = np.asarray(folds)
    return int(min(n - np.sum(fold_arr == f) for f in np.unique(fold_arr)))


def extract_features(
    subjects: Sequence[RRSeries],
    detector: DetectorConfig,
    min_changepoints: int = 3,
    n_jobs: int = 1,
) -> tuple[list[ParetoFeatures], list[str]]:
    """Detect changepoints per subject and fit Pareto features to the
    inter-changepoint durations (in seconds).

    Subjects with fewer than ``min_changepoints`` detections or a degenerate
    Pareto sample are excluded with a logged warning; their ids are returned
    alongside the features.
    """
    from .evaluate import detect_corpus

    results = detect_corpus(detector, subjects, n_jobs=n_jobs)
    feats: list[ParetoFeatures] = []
    excluded: list[str] = []
    for series, result in zip(subjects, results):
        if len(result.indices) < min_changepoints:
            logger.warning(
                "excluding %s: %d changepoints < %d required",
                series.subject_id,
                len(result.indices),
                min_changepoints,
            )
            excluded.append(series.subject_id)
            continue
        seg = segments_from_changepoints(series, result)
        try:
            feats.append(fit_pareto(seg.lengths_seconds, series.subject_id, series.label))
        except ValueError as exc:
            logger.warning("excluding %s: %s", series.subject_id, exc)
            excluded.append(series.subject_id)
    return feats, excluded


def end_to_end(
    subjects: Sequence[RRSeries],
    detector: DetectorConfig,
    knn: KnnConfig | str = "auto",
    cv: str = "loo",
    seed: int = 0,
    positive_label: str = POSITIVE_LABEL,
    n_jobs: int = 1,
) -> ClassifierReport:
    """detect -> segment -> Pareto fit -> KNN pipeline for one detector.

    ``knn="auto"`` tunes (k, metric) by cross-validated AUCPR before the
    final scoring pass. The report records the excluded subjects and the
    chosen config.
    """
    feats, excluded = extract_features(subjects, detector, n_jobs=n_jobs)
    if len(feats) < 4:
        raise ValueError(f"too few usable subjects ({len(feats)}) after exclusions")
    labels = [f.label for f in feats]
    folds = make_folds(len(feats), cv, seed=seed, labels=labels)
    if isinstance(knn, str):
        if knn != "auto":
            raise ValueError("knn must be a KnnConfig or 'auto'")
        config = tune_knn(feats, folds, positive_label=positive_label)
    else:
        config = knn
    report = knn_classify(feats, config, folds, positive_label)
    import dataclasses

    return dataclasses.replace(report, excluded=tuple(excluded))
