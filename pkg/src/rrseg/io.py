"""File formats: RR series CSV, changepoint-result JSON, feature tables.

RR series CSV: header ``beat_index,rr_seconds[,truth]`` where ``truth`` is a
0/1 flag column marking ground-truth changepoint indices. UTF-8, LF line
endings. All JSON artifacts carry a ``schema_version`` field and are written
with sorted keys so identical inputs serialize byte-identically.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
from pathlib import Path
from typing import Any

from .series import ChangepointResult, RRSeries

SCHEMA_VERSION = 1

__all__ = [
    "SCHEMA_VERSION",
    "load_rr_csv",
    "save_rr_csv",
    "result_to_dict",
    "result_from_dict",
    "save_result_json",
    "load_result_json",
    "save_features_csv",
    "load_features_csv",
    "load_labels_csv",
    "atomic_write_text",
    "dump_json",
]


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write a file atomically (temp file in the same directory, then rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj: Any) -> str:
    """Deterministic JSON text (sorted keys, LF, trailing newline)."""
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def save_rr_csv(series: RRSeries, path: str | Path) -> None:
    lines = []
    if series.truth is not None:
        lines.append("beat_index,rr_seconds,truth")
        flags = set(series.truth)
        for i, rr in enumerate(series.intervals):
            lines.append(f"{i},{float(rr)!r},{1 if i in flags else 0}")
    else:
        lines.append("beat_index,rr_seconds")
        for i, rr in enumerate(series.intervals):
            lines.append(f"{i},{float(rr)!r}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_rr_csv(path: str | Path) -> RRSeries:
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2 or header[0] != "beat_index" or header[1] != "rr_seconds":
            raise ValueError(f"{path}: expected header 'beat_index,rr_seconds[,truth]'")
        has_truth = len(header) >= 3 and header[2] == "truth"
        intervals: list[float] = []
        truth: list[int] = []
        for row in reader:
            if not row:
                continue
            intervals.append(float(row[1]))
            if has_truth and int(row[2]):
                truth.append(int(row[0]))
    return RRSeries(
        intervals=intervals,
        truth=truth if has_truth else None,
        subject_id=path.stem,
    )


def result_to_dict(result: ChangepointResult) -> dict:
    from .detectors import config_to_dict

    return {
        "schema_version": SCHEMA_VERSION,
        "indices": list(result.indices),
        "scores": list(result.scores) if result.scores is not None else None,
        "detector": config_to_dict(result.detector) if result.detector is not None else None,
        "warning": result.warning,
    }


def result_from_dict(d: dict) -> ChangepointResult:
    from .detectors import config_from_dict

    return ChangepointResult(
        indices=tuple(d["indices"]),
        scores=tuple(d["scores"]) if d.get("scores") is not None else None,
        detector=config_from_dict(d["detector"]) if d.get("detector") else None,
        warning=d.get("warning"),
    )


def save_result_json(result: ChangepointResult, path: str | Path) -> None:
    atomic_write_text(path, dump_json(result_to_dict(result)))


def load_result_json(path: str | Path) -> ChangepointResult:
    with open(path, encoding="utf-8") as fh:
        return result_from_dict(json.load(fh))


def save_features_csv(rows: list[tuple[str, str, float, float]], path: str | Path) -> None:
    """Write per-subject Pareto features: ``subject_id,label,scale,shape``."""
    lines = ["subject_id,label,scale,shape"]
    for subject_id, label, scale, shape in rows:
        lines.append(f"{subject_id},{label},{float(scale)!r},{float(shape)!r}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_features_csv(path: str | Path) -> list[tuple[str, str, float, float]]:
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            out.append((row["subject_id"], row["label"], float(row["scale"]), float(row["shape"])))
    return out


def load_labels_csv(path: str | Path) -> dict[str, str]:
    """Load a ``subject_id,label`` table (sidecar file for subject directories)."""
    out: dict[str, str] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "subject_id" not in reader.fieldnames or "label" not in reader.fieldnames:
            raise ValueError(f"{path}: expected header 'subject_id,label'")
        for row in reader:
            out[row["subject_id"]] = row["label"]
    return out
