"""Command-line interface: reproducible batch runs with file-based I/O.

Subcommands: ``generate``, ``detect``, ``tune``, ``sweep``, ``classify``.
Every run writes a manifest JSON recording the command, config snapshot,
seeds, input/output hashes, and wall-clock duration. Exit codes: 0 success,
1 usage or configuration error, 2 partial data failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import time
from pathlib import Path

from . import io as rio
from .classify import KnnConfig, end_to_end, knn_classify
from .detectors import ALGORITHM_IDS, DetectorConfig, config_to_dict, default_config, detect, params_from_dict
from .evaluate import GridSpec, MatchConfig, grid_search, sweep
from .series import RRSeries
from .synth import SynthConfig, generate

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PARTIAL = 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's default 2
        raise _UsageError(message)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _jobs(args) -> int:
    env = os.environ.get("CPD_JOBS")
    if env:
        return max(1, int(env))
    return max(1, args.jobs)


class Manifest:
    """Collects everything needed to reproduce one command invocation."""

    def __init__(self, command: str, config: dict):
        self.t0 = time.time()
        self.data = {
            "schema_version": rio.SCHEMA_VERSION,
            "command": command,
            "config": config,
            "inputs": {},
            "outputs": {},
        }

    def add_input(self, path: str | Path) -> None:
        self.data["inputs"][str(path)] = _sha256(Path(path))

    def add_output(self, path: str | Path) -> None:
        self.data["outputs"][str(path)] = _sha256(Path(path))

    def write(self, path: str | Path) -> None:
        self.data["wall_clock_seconds"] = round(time.time() - self.t0, 3)
        rio.atomic_write_text(path, rio.dump_json(self.data))


def _load_series_args(paths: list[str]) -> list[Path]:
    out: list[Path] = []
    for p in paths:
        path = Path(p)
        if path.is_dir():
            out.extend(sorted(path.glob("*.csv")))
        else:
            out.append(path)
    return [p for p in out if p.name != "labels.csv"]


def _corpus_from_dir(corpus_dir: str) -> list[RRSeries]:
    files = sorted(Path(corpus_dir).glob("*.csv"))
    files = [f for f in files if f.name != "labels.csv"]
    if not files:
        raise _UsageError(f"no CSV series found in {corpus_dir}")
    return [rio.load_rr_csv(f) for f in files]


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------


def cmd_generate(args) -> int:
    if args.n <= 0:
        raise _UsageError("count must be positive")
    cfg_dict = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            cfg_dict = json.load(fh)
    if args.duration_hours is not None:
        cfg_dict["duration_hours"] = args.duration_hours
    if "state_means" in cfg_dict:
        cfg_dict["state_means"] = tuple(cfg_dict["state_means"])
    try:
        base = SynthConfig(**cfg_dict)
    except (TypeError, ValueError) as exc:
        raise _UsageError(f"bad generator config: {exc}") from exc

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(
        "generate",
        {
            "n": args.n,
            "seed": args.seed,
            "generator": dataclasses.asdict(base),
        },
    )
    if args.config:
        manifest.add_input(args.config)
    for k in range(args.n):
        series = generate(dataclasses.replace(base, seed=args.seed + k))
        path = out_dir / f"series_{args.seed + k:06d}.csv"
        rio.save_rr_csv(series, path)
        manifest.add_output(path)
    manifest.write(out_dir / "manifest.json")
    print(f"wrote {args.n} series to {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# detect
# ---------------------------------------------------------------------------


def _detector_from_args(algo: str, params_json: str | None) -> DetectorConfig:
    if algo not in ALGORITHM_IDS:
        raise _UsageError(f"unknown algorithm {algo!r}; choose from {', '.join(ALGORITHM_IDS)}")
    if not params_json:
        cfg = default_config(algo)
        print(f"{algo}: using benchmark defaults {config_to_dict(cfg)['params']}", file=sys.stderr)
        return cfg
    try:
        params = json.loads(params_json)
        return DetectorConfig(algo=algo, params=params_from_dict(algo, params))
    except (ValueError, TypeError) as exc:
        raise _UsageError(f"bad --params: {exc}") from exc


def _detect_file_safe(path: Path, cfg: DetectorConfig):
    try:
        return detect(rio.load_rr_csv(path), cfg)
    except Exception as exc:  # per-file failures must not kill the batch
        return exc


def cmd_detect(args) -> int:
    cfg = _detector_from_args(args.algo, args.params)
    inputs = _load_series_args(args.inputs)
    if not inputs:
        raise _UsageError("no input series")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = Manifest("detect", {"detector": config_to_dict(cfg)})
    failures: list[tuple[Path, str]] = []
    jobs = _jobs(args)

    if jobs == 1:
        results = [_detect_file_safe(p, cfg) for p in inputs]
    else:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=jobs)(delayed(_detect_file_safe)(p, cfg) for p in inputs)

    for path, result in zip(inputs, results):
        manifest.add_input(path)
        if isinstance(result, Exception):
            failures.append((path, str(result)))
            print(f"ERROR {path}: {result}", file=sys.stderr)
            continue
        out_path = out_dir / f"{path.stem}.{args.algo}.json"
        rio.save_result_json(result, out_path)
        manifest.add_output(out_path)
    manifest.write(out_dir / "manifest.json")
    if failures:
        print(f"{len(failures)}/{len(inputs)} inputs failed", file=sys.stderr)
        return EXIT_PARTIAL
    print(f"wrote {len(inputs)} results to {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# tune
# ---------------------------------------------------------------------------


def cmd_tune(args) -> int:
    corpus = _corpus_from_dir(args.corpus)
    if any(s.truth is None for s in corpus):
        raise _UsageError("tuning requires truth-annotated series (generate with the synth module)")
    if args.algo not in ALGORITHM_IDS:
        raise _UsageError(f"unknown algorithm {args.algo!r}")
    match = MatchConfig(tolerance=args.tolerance)
    manifest = Manifest("tune", {"algo": args.algo, "tolerance": args.tolerance})
    result = grid_search(args.algo, corpus, match, GridSpec(), n_jobs=_jobs(args))

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    best = {
        "schema_version": rio.SCHEMA_VERSION,
        "best": config_to_dict(result.best),
        "mean_f1": result.best_f1,
    }
    rio.atomic_write_text(out, rio.dump_json(best))
    manifest.add_output(out)

    table_path = out.with_suffix(".table.csv")
    lines = ["algo,params,f1_mean,f1_std"]
    for cfg, mean, std in result.table:
        params = json.dumps(config_to_dict(cfg)["params"], sort_keys=True).replace('"', "'")
        lines.append(f'{cfg.algo},"{params}",{mean!r},{std!r}')
    rio.atomic_write_text(table_path, "\n".join(lines) + "\n")
    manifest.add_output(table_path)

    if not args.no_figures:
        from .report import plot_grid_search

        fig_path = plot_grid_search(result, args.algo, out.with_suffix(".png"))
        manifest.add_output(fig_path)
    manifest.write(out.with_suffix(".manifest.json"))
    print(f"best {args.algo} config: {best['best']['params']} (mean F1 {result.best_f1:.4f})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


def cmd_sweep(args) -> int:
    algos = [a.strip() for a in args.algos.split(",") if a.strip()]
    for a in algos:
        if a not in ALGORITHM_IDS:
            raise _UsageError(f"unknown algorithm {a!r}")
    try:
        values = [float(v) for v in args.values.split(",")]
    except ValueError as exc:
        raise _UsageError(f"bad --values: {exc}") from exc
    if args.axis not in ("noise", "ectopy", "tolerance"):
        raise _UsageError("axis must be noise, ectopy, or tolerance")

    base = SynthConfig(duration_hours=args.duration_hours)
    corpus = [
        generate(dataclasses.replace(base, seed=args.corpus_seed + k)) for k in range(args.n)
    ]
    configs = [default_config(a) for a in algos]
    manifest = Manifest(
        "sweep",
        {
            "axis": args.axis,
            "values": values,
            "algos": algos,
            "corpus_seed": args.corpus_seed,
            "n": args.n,
            "duration_hours": args.duration_hours,
            "tolerance": args.tolerance,
        },
    )
    rows = sweep(configs, corpus, args.axis, values, MatchConfig(args.tolerance), n_jobs=_jobs(args))

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"sweep_{args.axis}.csv"
    lines = ["algo,axis_value,tpr_mean,tpr_std,ppv_mean,ppv_std,fp_per_hour_mean,fp_per_hour_std"]
    for r in rows:
        lines.append(
            f"{r.algo},{r.axis_value!r},{r.tpr_mean!r},{r.tpr_std!r},"
            f"{r.ppv_mean!r},{r.ppv_std!r},{r.fp_per_hour_mean!r},{r.fp_per_hour_std!r}"
        )
    rio.atomic_write_text(csv_path, "\n".join(lines) + "\n")
    manifest.add_output(csv_path)

    if not args.no_figures:
        from .report import plot_sweep

        fig_path = plot_sweep(rows, args.axis, out_dir / f"sweep_{args.axis}.png")
        manifest.add_output(fig_path)
    manifest.write(out_dir / f"sweep_{args.axis}.manifest.json")
    print(f"wrote {csv_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# classify
# ---------------------------------------------------------------------------


def _report_to_dict(report) -> dict:
    d = dataclasses.asdict(report)
    d["config"] = dataclasses.asdict(report.config)
    d["schema_version"] = rio.SCHEMA_VERSION
    return d


def cmd_classify(args) -> int:
    if bool(args.features) == bool(args.subjects):
        raise _UsageError("provide exactly one of --features or --subjects")
    knn: KnnConfig | str = "auto"
    if args.k is not None:
        knn = KnnConfig(k=args.k, metric=args.metric)
    manifest = Manifest(
        "classify",
        {"cv": args.cv, "algo": args.algo, "positive_label": args.positive_label, "seed": args.seed},
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)

    if args.features:
        from .classify import ParetoFeatures, make_folds, tune_knn

        manifest.add_input(args.features)
        rows = rio.load_features_csv(args.features)
        feats = [ParetoFeatures(scale=sc, shape=sh, subject_id=sid, label=lab) for sid, lab, sc, sh in rows]
        folds = make_folds(len(feats), args.cv, seed=args.seed, labels=[f.label for f in feats])
        config = tune_knn(feats, folds, positive_label=args.positive_label) if knn == "auto" else knn
        report = knn_classify(feats, config, folds, args.positive_label)
        rio.atomic_write_text(out, rio.dump_json(_report_to_dict(report)))
        manifest.add_output(out)
        manifest.write(out.with_suffix(".manifest.json"))
        print(f"ACC {report.acc:.3f}  AUROC {report.auroc:.3f}  AUCPR {report.aucpr:.3f}")
        return EXIT_OK

    # subjects directory: detect -> features -> knn, per algorithm
    subj_dir = Path(args.subjects)
    labels_path = subj_dir / "labels.csv"
    if not labels_path.exists():
        raise _UsageError(f"{labels_path} required (header: subject_id,label)")
    labels = rio.load_labels_csv(labels_path)
    manifest.add_input(labels_path)
    subjects = []
    for f in sorted(subj_dir.glob("*.csv")):
        if f.name == "labels.csv":
            continue
        s = rio.load_rr_csv(f)
        if s.subject_id not in labels:
            raise _UsageError(f"no label for subject {s.subject_id!r} in {labels_path}")
        subjects.append(s.replace(label=labels[s.subject_id]))
        manifest.add_input(f)
    algos = list(ALGORITHM_IDS) if args.algo == "all" else [args.algo]
    for a in algos:
        if a not in ALGORITHM_IDS:
            raise _UsageError(f"unknown algorithm {a!r}")

    reports = {}
    for a in algos:
        reports[a] = end_to_end(
            subjects,
            default_config(a),
            knn=knn,
            cv=args.cv,
            seed=args.seed,
            positive_label=args.positive_label,
            n_jobs=_jobs(args),
        )
    if len(algos) == 1:
        rio.atomic_write_text(out, rio.dump_json(_report_to_dict(reports[algos[0]])))
        manifest.add_output(out)
    else:
        payload = {a: _report_to_dict(r) for a, r in reports.items()}
        payload["schema_version"] = rio.SCHEMA_VERSION
        rio.atomic_write_text(out, rio.dump_json(payload))
        manifest.add_output(out)
        cmp_path = out.with_suffix(".comparison.csv")
        lines = ["algo,acc,auroc,aucpr,tpr,ppv,f1"]
        for a in algos:
            r = reports[a]
            lines.append(f"{a},{r.acc!r},{r.auroc!r},{r.aucpr!r},{r.tpr!r},{r.ppv!r},{r.f1!r}")
        rio.atomic_write_text(cmp_path, "\n".join(lines) + "\n")
        manifest.add_output(cmp_path)
    if not args.no_figures:
        from .report import plot_classifier_comparison

        fig_path = plot_classifier_comparison(reports, out.with_suffix(".png"))
        manifest.add_output(fig_path)
    manifest.write(out.with_suffix(".manifest.json"))
    for a in algos:
        r = reports[a]
        print(f"{a:8s} ACC {r.acc:.3f}  AUROC {r.auroc:.3f}  AUCPR {r.aucpr:.3f}  TPR {r.tpr:.3f}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rrseg", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="synthesize truth-annotated RR series")
    g.add_argument("--config", help="JSON file of generator parameters")
    g.add_argument("--n", type=int, default=400)
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--duration-hours", type=float, default=None)
    g.set_defaults(fn=cmd_generate)

    d = sub.add_parser("detect", help="run one detector over RR CSV files")
    d.add_argument("--algo", required=True)
    d.add_argument("--params", help="JSON object of algorithm parameters")
    d.add_argument("--in", dest="inputs", nargs="+", required=True, help="CSV files or directories")
    d.add_argument("--out", required=True)
    d.add_argument("--jobs", type=int, default=1)
    d.set_defaults(fn=cmd_detect)

    t = sub.add_parser("tune", help="grid-search detector parameters on a corpus")
    t.add_argument("--algo", required=True)
    t.add_argument("--corpus", required=True)
    t.add_argument("--tolerance", type=int, default=3)
    t.add_argument("--out", required=True)
    t.add_argument("--jobs", type=int, default=1)
    t.add_argument("--no-figures", action="store_true")
    t.set_defaults(fn=cmd_tune)

    s = sub.add_parser("sweep", help="evaluate detectors across noise/ectopy/tolerance")
    s.add_argument("--axis", required=True, choices=["noise", "ectopy", "tolerance"])
    s.add_argument("--values", required=True, help="comma-separated axis values")
    s.add_argument("--algos", required=True, help="comma-separated algorithm ids")
    s.add_argument("--corpus-seed", type=int, default=0)
    s.add_argument("--n", type=int, default=20)
    s.add_argument("--duration-hours", type=float, default=7.0)
    s.add_argument("--tolerance", type=int, default=3)
    s.add_argument("--out", required=True)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--no-figures", action="store_true")
    s.set_defaults(fn=cmd_sweep)

    c = sub.add_parser("classify", help="Pareto/KNN classification from features or subjects")
    c.add_argument("--features", help="subject_id,label,scale,shape CSV")
    c.add_argument("--subjects", help="directory of RR CSVs plus labels.csv")
    c.add_argument("--algo", default="rmdm", help="detector id or 'all'")
    c.add_argument("--cv", default="loo", help="'loo' or 'kfold:K'")
    c.add_argument("--k", type=int, default=None, help="fix k instead of tuning")
    c.add_argument("--metric", default="euclidean")
    c.add_argument("--positive-label", default="RBD")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", required=True)
    c.add_argument("--jobs", type=int, default=1)
    c.add_argument("--no-figures", action="store_true")
    c.set_defaults(fn=cmd_classify)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
