"""Command-line entry point.

    shadowrating synth    CONFIG [--seed N] [--out DIR]
    shadowrating evaluate CONFIG [--seed N] [--out DIR] [--jobs N]
    shadowrating train    CONFIG [--seed N] [--out DIR]
    shadowrating explain  CONFIG --artifacts DIR [--rows 0,5,9] [--seed N] [--out DIR] [--jobs N]

Every command reads one JSON config; flags override the file. Artifacts go
under ``--out`` together with a ``run.json`` manifest, which is the only
file carrying a timestamp. Exit codes: 0 ok, 2 config, 3 data, 4 numeric.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime as _dt
import hashlib
import itertools
import json
import logging
import os
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, plots, preprocess
from . import rng as rng_streams
from .crossval import MODEL_KINDS, EvalConfig, FittedModel, cross_validate, fit_model
from .domain import CLASS_NAMES, N_CLASSES
from .errors import ConfigError, DataError, ShadowRatingError
from .explain import (DEFAULT_BACKGROUND, DEFAULT_SAMPLES, MAX_EXACT_GROUPS, ShapExplanation, force_plot_data,
                      importance, select_background, shap_exact, shap_kernel, summary_csv, summary_plot_data)
from .ingest import Dataset, FeatureSchema, SynthSpec, generate_synthetic, load_csv, write_csv
from .preprocess import FittedPipeline
from .train import TrainConfig

log = logging.getLogger("shadowrating")

TOP_LEVEL_KEYS = {"seed", "out", "jobs", "data", "models", "model", "k", "train", "logistic_l2", "grid",
                  "rows", "background", "n_samples", "method", "artifacts", "info"}


# ---------------------------------------------------------------------- config


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def load_config(path) -> tuple[dict, Path]:
    p = Path(path)
    try:
        cfg = json.loads(p.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {p}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {p} is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(cfg) - TOP_LEVEL_KEYS
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    return cfg, p.resolve().parent


def _require(cfg: dict, key: str):
    if key not in cfg or cfg[key] is None:
        raise ConfigError(f"missing config field {key!r}")
    return cfg[key]


def _synth_spec(cfg: dict) -> SynthSpec:
    spec = dict(cfg["data"]["synthetic"])
    spec.setdefault("seed", int(_require(cfg, "seed")))
    return SynthSpec.from_dict(spec)


def load_data(cfg: dict, base: Path) -> Dataset:
    data = _require(cfg, "data")
    if not isinstance(data, dict) or len({"csv", "synthetic"} & set(data)) != 1:
        raise ConfigError("'data' must name exactly one source: 'csv' or 'synthetic'")
    if "synthetic" in data:
        return generate_synthetic(_synth_spec(cfg))
    if "schema" not in data:
        raise ConfigError("missing config field 'data.schema'")
    schema = FeatureSchema.from_dict(data["schema"])
    path = base / data["csv"]
    if not path.exists():
        raise DataError(f"data file not found: {path}")
    return load_csv(path, schema)


def eval_config(cfg: dict) -> EvalConfig:
    train = TrainConfig.from_dict({**cfg.get("train", {}), "seed": int(cfg["seed"])})
    return EvalConfig(k=int(cfg.get("k", 5)), seed=int(cfg["seed"]), train=train,
                      logistic_l2=float(cfg.get("logistic_l2", EvalConfig.logistic_l2)))


def _config_hash(cfg: dict) -> str:
    core = {k: v for k, v in cfg.items() if k not in ("out", "jobs")}
    return hashlib.sha256(json.dumps(core, sort_keys=True).encode()).hexdigest()


def _write_run_manifest(out: Path, command: str, cfg: dict) -> None:
    manifest = {
        "command": command,
        "config_hash": _config_hash(cfg),
        "seed": cfg["seed"],
        "versions": {"shadowrating": __version__, "numpy": np.__version__, "python": platform.python_version()},
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }
    (out / "run.json").write_text(_dump(manifest), encoding="utf-8")


# -------------------------------------------------------------------- commands


def cmd_synth(cfg: dict, base: Path, out: Path) -> None:
    if "synthetic" not in cfg.get("data", {}):
        raise ConfigError("synth needs a 'data.synthetic' block")
    spec = _synth_spec(cfg)
    ds = generate_synthetic(spec)
    write_csv(ds, out / "data.csv")
    manifest = {
        "seed": cfg["seed"],
        "data": {"synthetic": spec.to_dict()},
        "info": {"n_rows": ds.n_rows, "schema": ds.schema.to_dict(), "csv": "data.csv",
                 "sha256": ds.content_hash(), "version": __version__},
    }
    (out / "manifest.json").write_text(_dump(manifest), encoding="utf-8")


def _grid_points(grid: dict) -> list[dict]:
    if not grid:
        return [{}]
    if not isinstance(grid, dict):
        raise ConfigError("'grid' must map train fields to lists of values")
    keys = sorted(grid)
    return [dict(zip(keys, vals)) for vals in itertools.product(*(grid[k] for k in keys))]


def _point_label(kind: str, point: dict) -> str:
    if not point:
        return kind
    parts = [f"{k}={'-'.join(map(str, v)) if isinstance(v, list) else v}" for k, v in point.items()]
    return f"{kind}[{','.join(parts)}]"


def cmd_evaluate(cfg: dict, base: Path, out: Path, jobs: int) -> dict:
    kinds = cfg.get("models", list(MODEL_KINDS))
    bad = [k for k in kinds if k not in MODEL_KINDS]
    if bad or not kinds:
        raise ConfigError(f"'models' must be a non-empty subset of {list(MODEL_KINDS)}, got {kinds}")
    data = load_data(cfg, base)
    base_cfg = eval_config(cfg)
    report = {"data": {"n_rows": data.n_rows, "sha256": data.content_hash()},
              "config": base_cfg.to_dict(), "classes": list(CLASS_NAMES), "models": {}}
    for kind in kinds:
        for point in _grid_points(cfg.get("grid", {})):
            try:
                ecfg = dataclasses.replace(base_cfg, train=dataclasses.replace(base_cfg.train, **point))
            except TypeError as exc:
                raise ConfigError(f"bad grid field: {exc}") from None
            label = _point_label(kind, point)
            log.info("cross-validating %s", label)
            rep = cross_validate(data, kind, ecfg, jobs=jobs)
            entry = rep.to_dict()
            if point:
                entry["grid_point"] = point
            report["models"][label] = entry
            stem = label.replace("[", "_").replace("]", "").replace(",", "_").replace("=", "-")
            with open(out / f"confusion_{stem}.csv", "w", encoding="utf-8") as fh:
                fh.write("true\\pred," + ",".join(CLASS_NAMES) + "\n")
                for name, row in zip(CLASS_NAMES, rep.confusion):
                    fh.write(name + "," + ",".join(str(int(v)) for v in row) + "\n")
            (out / f"confusion_{stem}.svg").write_text(
                plots.confusion_svg(rep.confusion, CLASS_NAMES, f"{label}: QWK {rep.qwk_mean:.3f}"),
                encoding="utf-8")
    (out / "report.json").write_text(_dump(report), encoding="utf-8")
    return report


def _train_fingerprint(kind: str, cfg: EvalConfig, data: Dataset) -> str:
    blob = json.dumps({"kind": kind, "config": cfg.to_dict(), "data": data.content_hash()}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def cmd_train(cfg: dict, base: Path, out: Path) -> FittedModel:
    kind = cfg.get("model", "ann_emb")
    if kind not in MODEL_KINDS:
        raise ConfigError(f"'model' must be one of {list(MODEL_KINDS)}, got {kind!r}")
    data = load_data(cfg, base)
    ecfg = eval_config(cfg)
    model, _ = fit_model(kind, data, ecfg, ecfg.seed, fitted_on="full")
    fp = _train_fingerprint(kind, ecfg, data)
    (out / "pipeline.json").write_text(
        json.dumps({"fingerprint": fp, "pipeline": model.pipeline.to_dict()}, sort_keys=True), encoding="utf-8")
    (out / "model.json").write_text(json.dumps({
        "fingerprint": fp,
        "kind": kind,
        "model": model.model_dict(),
        "train_report": None if model.report is None else model.report.to_dict(),
    }, sort_keys=True), encoding="utf-8")
    fm = preprocess.transform(model.pipeline, data)
    scores, classes = model.predict_scores(fm), model.predict_classes(fm)
    with open(out / "predictions.csv", "w", encoding="utf-8") as fh:
        fh.write("row,score,class\n")
        for i, (s, c) in enumerate(zip(scores, classes)):
            fh.write(f"{i},{float(s)!r},{CLASS_NAMES[c]}\n")
    return model


def load_artifacts(directory) -> tuple[FittedModel, str]:
    d = Path(directory)
    try:
        m = json.loads((d / "model.json").read_text(encoding="utf-8"))
        p = json.loads((d / "pipeline.json").read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"missing artifact: {exc.filename}") from None
    if m.get("fingerprint") != p.get("fingerprint"):
        raise ConfigError("model and pipeline artifacts have different fingerprints; refusing to pair them")
    pipeline = FittedPipeline.from_dict(p["pipeline"])
    model = FittedModel(m["kind"], pipeline, FittedModel.model_from_dict(m["kind"], m["model"]))
    return model, m["fingerprint"]


def _row_values(model: FittedModel, data: Dataset, fm, i: int, groups) -> tuple[list, list[bool]]:
    """Feature values shown next to attributions: transformed numerics, raw labels otherwise."""
    values, imputed = [], []
    numeric = set(data.schema.numeric)
    for name, cols in groups:
        if name in numeric:
            values.append(float(fm.dense[i, cols[0]]))
            imputed.append(bool(fm.imputed[i, cols[0]]))
        else:
            values.append(str(data.columns[name][i]))
            imputed.append(False)
    return values, imputed


def _explain_one(args):
    f, x, bg, groups, method, n_samples, seed, values, imputed = args
    if method == "exact":
        return shap_exact(f, x, bg, groups, values, imputed)
    return shap_kernel(f, x, bg, groups, n_samples, seed, values, imputed)


def cmd_explain(cfg: dict, base: Path, out: Path, artifacts, rows=None, jobs: int = 1) -> list[ShapExplanation]:
    model, fingerprint = load_artifacts(artifacts)
    data = load_data(cfg, base)
    if data.schema != model.pipeline.schema:
        raise DataError("data schema differs from the schema of the trained pipeline")
    rows = rows if rows is not None else cfg.get("rows")
    if rows is None:
        raise ConfigError("missing config field 'rows'")
    rows = [int(r) for r in rows]
    bad = [r for r in rows if not 0 <= r < data.n_rows]
    if bad:
        raise ConfigError(f"row indices out of range 0..{data.n_rows - 1}: {bad}")
    seed = int(cfg["seed"])
    fm = preprocess.transform(model.pipeline, data)
    X = fm.combined()
    groups = fm.explain_groups()
    bg = X[select_background(X, data.targets, int(cfg.get("background", DEFAULT_BACKGROUND)), seed)]
    method = cfg.get("method", "auto")
    if method == "auto":
        method = "exact" if len(groups) <= MAX_EXACT_GROUPS else "kernel"
    if method not in ("exact", "kernel"):
        raise ConfigError("'method' must be 'auto', 'exact' or 'kernel'")
    n_samples = int(cfg.get("n_samples", DEFAULT_SAMPLES))
    f = model.combined_predictor(fm.dense.shape[1])

    tasks = []
    for r in rows:
        values, imputed = _row_values(model, data, fm, r, groups)
        tasks.append((f, X[r], bg, groups, method, n_samples, rng_streams.fold_seed(seed, r), values, imputed))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            explanations = list(ex.map(_explain_one, tasks))
    else:
        explanations = [_explain_one(t) for t in tasks]

    force_dir = out / "force"
    force_dir.mkdir(parents=True, exist_ok=True)
    for r, e in zip(rows, explanations):
        doc = {"row": r, "fingerprint": fingerprint, "explanation": e.to_dict(), "force_plot": force_plot_data(e),
               "additivity_error": e.additivity_error}
        (force_dir / f"row_{r:06d}.json").write_text(_dump(doc), encoding="utf-8")
    table = importance(explanations)
    (out / "importance.csv").write_text(table.to_csv(), encoding="utf-8")
    summary = summary_plot_data(explanations)
    (out / "summary.csv").write_text(summary_csv(summary), encoding="utf-8")
    (out / "importance.svg").write_text(plots.importance_svg(table.features, list(table.values)), encoding="utf-8")
    (out / "summary.svg").write_text(plots.beeswarm_svg(summary), encoding="utf-8")
    return explanations


# ------------------------------------------------------------------------ main


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="shadowrating", description="Shadow credit-rating models.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("synth", "evaluate", "train", "explain"):
        p = sub.add_parser(name)
        p.add_argument("config", help="JSON config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        if name in ("evaluate", "explain"):
            p.add_argument("--jobs", type=int)
        if name == "explain":
            p.add_argument("--artifacts", help="directory holding model.json and pipeline.json")
            p.add_argument("--rows", help="comma-separated row indices")
    return ap


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg, base = load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.out is not None:
            cfg["out"] = args.out
        _require(cfg, "seed")
        out = Path(_require(cfg, "out"))
        if not out.is_absolute() and args.out is None:
            out = base / out
        jobs = getattr(args, "jobs", None) or cfg.get("jobs") or os.cpu_count() or 1
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"cannot create output directory {out}: {exc}") from None
        if args.command == "synth":
            cmd_synth(cfg, base, out)
        elif args.command == "evaluate":
            cmd_evaluate(cfg, base, out, int(jobs))
        elif args.command == "train":
            cmd_train(cfg, base, out)
        else:
            if args.artifacts:
                artifacts = Path(args.artifacts)
            elif cfg.get("artifacts") is not None:
                artifacts = base / cfg["artifacts"]  # config paths are relative to the config file
            else:
                raise ConfigError("missing config field 'artifacts' (or --artifacts)")
            rows = [int(r) for r in args.rows.split(",")] if args.rows else None
            cmd_explain(cfg, base, out, Path(artifacts), rows, int(jobs))
        _write_run_manifest(out, args.command, cfg)
    except ShadowRatingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ConfigError.exit_code
    return 0


def main() -> None:
    sys.exit(run())
