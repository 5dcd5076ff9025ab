"""Command-line front end: one subcommand per pipeline stage.

Every stage reads the previous stage's outputs by path, writes its own
CSV/JSON outputs into ``--out`` and drops a ``manifest-<stage>.json`` next to
them with the resolved configuration, seeds, versions and input/output
hashes. Settings come from an optional YAML ``--config`` file; flags win.

Exit codes: 0 success, 2 bad or missing input, 3 invalid configuration,
4 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import platform
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import yaml

from . import __version__, kernels
from .catalog import Catalog, QueryConstraints
from .data import (
    FeatureMask,
    PreprocessConfig,
    balance_and_split,
    default_synth_spec,
    load_and_preprocess,
    load_bundle,
    save_bundle,
    synth_generate,
    synth_spec_from_dict,
)
from .exceptions import (
    AdaptError,
    ConfigurationError,
    DataIOError,
    RatioError,
    SelectionError,
    SpecError,
)
from .features import (
    VARIANTS,
    best_subset,
    feature_ranking,
    read_ranking_csv,
    recursive_elimination,
    subset_search,
    write_ranking_csv,
    write_subsets_csv,
    write_trace_csv,
)
from .finetune import (
    Algorithm,
    FineTuneSpec,
    StudentKind,
    fine_tune,
    scenario_sweep,
    write_leaderboard_csv,
)
from .finetune import TIMING_COLUMNS as LEADERBOARD_TIMING
from .mlp import Mlp, TrainConfig, accuracy, init_mlp, measure_inference, memory_estimate, train
from .pruning import TIMING_COLUMNS as PRUNE_TIMING
from .pruning import prune, prune_sweep, write_prune_csv

log = logging.getLogger("ids_adapt")

EXIT_OK, EXIT_INPUT, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3, 4
TIMING_COLUMNS = frozenset(PRUNE_TIMING) | frozenset(LEADERBOARD_TIMING)


class InputError(AdaptError):
    """A required input file is missing."""


def _grid(start: float, stop: float, step: float) -> list[float]:
    n = int(round((stop - start) / step))
    return [round(start + i * step, 10) for i in range(n + 1)]


@dataclass
class PipelineConfig:
    """Resolved settings for every stage. Documented in the README."""

    seed: int = 0
    hidden_layers: list[int] = field(default_factory=lambda: [64, 64, 64, 64])
    learning_rate: float = 0.001
    batch_size: int = 512
    max_epochs: int = 100
    patience: int = 25
    tolerance: float = 1e-4
    sources: list[str] = field(default_factory=list)
    label_column: str = "Label"
    category_column: str | None = None
    benign_values: list[str] = field(default_factory=lambda: ["BENIGN"])
    max_rows_per_file: int | None = None
    split_ratios: list[float] = field(default_factory=lambda: [0.65, 0.15, 0.20])
    synth_features: int = 10
    synth_per_category: int = 400
    synth_spec: dict[str, Any] | None = None
    feature_ratios: list[float] = field(default_factory=lambda: _grid(0.1, 0.9, 0.1))
    prune_ratios: list[float] = field(default_factory=lambda: _grid(0.05, 0.95, 0.05))
    subset_search_n: int = 1000
    local_categories: list[str] = field(default_factory=lambda: ["BENIGN", "DDoS"])
    finetune_prune_ratio: float = 0.15
    finetune_feature_ratios: list[float] = field(default_factory=lambda: [0.3, 0.5, 0.8])
    finetune_cases: list[int] = field(default_factory=lambda: [1, 2, 3, 4])
    finetune_algorithms: list[str] = field(default_factory=lambda: ["HT", "HD", "HI", "KD"])
    finetune_kinds: list[str] = field(default_factory=lambda: [k.value for k in StudentKind])
    latency_repetitions: int = 3
    latency_samples: int = 200

    def validate(self) -> "PipelineConfig":
        for name in ("feature_ratios", "prune_ratios", "finetune_feature_ratios"):
            vals = getattr(self, name)
            if not vals or any(not 0 < v < 1 for v in vals):
                raise ConfigurationError(f"{name} must be a non-empty list of values in (0, 1)")
        if not 0 < self.finetune_prune_ratio < 1:
            raise ConfigurationError("finetune_prune_ratio must be in (0, 1)")
        if self.subset_search_n < 1:
            raise ConfigurationError("subset_search_n must be >= 1")
        if any(h < 1 for h in self.hidden_layers) or not self.hidden_layers:
            raise ConfigurationError("hidden_layers must be a non-empty list of positive sizes")
        try:
            for a in self.finetune_algorithms:
                Algorithm(a)
            for k in self.finetune_kinds:
                StudentKind(k)
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from None
        self.train_config()
        return self

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.learning_rate, self.batch_size, self.max_epochs, self.patience, self.tolerance)

    def fingerprint(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def load_config(path: str | None, overrides: dict[str, Any]) -> PipelineConfig:
    doc: dict[str, Any] = {}
    if path:
        p = Path(path)
        if not p.is_file():
            raise InputError(f"config file not found: {p}")
        try:
            doc = yaml.safe_load(p.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"{p}: invalid YAML ({exc})") from exc
        if not isinstance(doc, dict):
            raise ConfigurationError(f"{p}: top level must be a mapping")
    known = {f.name for f in fields(PipelineConfig)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
    doc.update({k: v for k, v in overrides.items() if v is not None})
    try:
        cfg = PipelineConfig(**doc)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from exc
    return cfg.validate()


# manifest helpers


def _content_hash(path: Path) -> str:
    """SHA-256 of a file; CSV timing columns are dropped before hashing."""
    if path.suffix == ".csv":
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if rows:
            keep = [i for i, c in enumerate(rows[0]) if c not in TIMING_COLUMNS]
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            for r in rows:
                w.writerow([r[i] for i in keep if i < len(r)])
            return hashlib.sha256(buf.getvalue().encode()).hexdigest()
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, command: str, cfg: PipelineConfig, args: dict, inputs: Sequence, outputs: Sequence) -> Path:
    def rel(p):
        p = Path(p)
        try:
            return os.path.relpath(p, out)
        except ValueError:
            return str(p)

    doc = {
        "command": command,
        "arguments": {k: v for k, v in sorted(args.items()) if k not in ("func", "config", "out", "jobs", "catalog")},
        "config": asdict(cfg),
        "config_hash": cfg.fingerprint(),
        "seed": cfg.seed,
        "versions": {
            "ids_adapt": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
            "kernel_backend": kernels.BACKEND,
        },
        "inputs": {rel(p): _content_hash(Path(p)) for p in inputs if Path(p).is_file()},
        "outputs": {rel(p): _content_hash(Path(p)) for p in outputs},
    }
    path = out / f"manifest-{command}.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    return path


def _need(path, hint: str) -> Path:
    p = Path(path)
    if not p.exists() and not (p.with_suffix(".csv").exists() and p.with_suffix(".json").exists()):
        raise InputError(f"input not found: {p} ({hint})")
    return p


def _dataset(args):
    path = _need(args.data, "run `ids-adapt synth` or `ids-adapt preprocess` first")
    ds = load_bundle(path)
    if ds.split is None:
        raise InputError(f"{path}: dataset has no split assignment (re-run preprocess)")
    return ds, [Path(path).with_suffix(".csv"), Path(path).with_suffix(".json")]


def _model(path, hint="run `ids-adapt train-base` first") -> Mlp:
    return Mlp.load(_need(path, hint))


def _write_json(path: Path, doc) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _read_masks(path: Path, n_features: int) -> dict[float, FeatureMask]:
    doc = json.loads(_need(path, "run `ids-adapt subset-search` first").read_text(encoding="utf-8"))
    return {float(r): FeatureMask.from_indices(m["indices"], n_features) for r, m in doc["masks"].items()}


# stages


def cmd_synth(args, cfg: PipelineConfig):
    if cfg.synth_spec:
        spec = synth_spec_from_dict(cfg.synth_spec)
    else:
        spec = default_synth_spec(cfg.synth_features, cfg.synth_per_category, cfg.seed)
    ds = balance_and_split(synth_generate(spec), cfg.split_ratios, cfg.seed)
    return [], list(save_bundle(ds, args.out / "dataset"))


def cmd_preprocess(args, cfg: PipelineConfig):
    sources = args.input or cfg.sources
    if not sources:
        raise InputError("no input CSVs: pass --input FILE... or set `sources` in the config")
    pc = PreprocessConfig(
        benign_values=tuple(cfg.benign_values), max_rows_per_file=cfg.max_rows_per_file
    )
    ds = load_and_preprocess(sources, cfg.label_column, cfg.category_column, pc)
    ds = balance_and_split(ds, cfg.split_ratios, cfg.seed)
    return list(sources), list(save_bundle(ds, args.out / "dataset"))


def cmd_train_base(args, cfg: PipelineConfig):
    ds, inputs = _dataset(args)
    model = init_mlp([ds.n_features, *cfg.hidden_layers, 1], cfg.seed)
    Xtr, ytr = ds.view("train")
    Xva, yva = ds.view("val")
    rep = train(model, Xtr, ytr, Xva, yva, cfg.train_config())
    Xte, yte = ds.view("test")
    model.metadata.update({"kind": "BRM", "feature_names": list(ds.feature_names)})
    out_model = model.save(args.out / "brm.json")
    summary = {
        "epochs_run": rep.epochs_run,
        "best_epoch": rep.best_epoch,
        "best_val_loss": rep.best_val_loss,
        "test_accuracy": accuracy(model, Xte, yte),
        "val_accuracy": accuracy(model, Xva, yva),
        "n_params": model.n_params,
        "memory_bytes": memory_estimate(model),
    }
    log.info("BRM test accuracy %.4f after %d epochs", summary["test_accuracy"], rep.epochs_run)
    return inputs, [out_model, _write_json(args.out / "brm_train.json", summary)]


def cmd_rank(args, cfg: PipelineConfig):
    ds, inputs = _dataset(args)
    model = _model(args.model)
    X, y = ds.view("val")
    ranking = feature_ranking(model, FeatureMask.all_active(ds.n_features), X, y, ds.feature_names, args.jobs)
    return inputs + [Path(args.model)], [write_ranking_csv(ranking, args.out / "ranking.csv")]


def cmd_rfe(args, cfg: PipelineConfig):
    ds, inputs = _dataset(args)
    model = _model(args.model)
    X, y = ds.view("val")
    variants = VARIANTS if args.variant == "all" else [tuple(args.variant.split(":"))]
    traces = [recursive_elimination(model, X, y, v, ds.feature_names, args.jobs) for v in variants]
    return inputs + [Path(args.model)], [write_trace_csv(traces, args.out / "rfe.csv")]


def cmd_subset_search(args, cfg: PipelineConfig):
    ds, inputs = _dataset(args)
    model = _model(args.model)
    ranking_path = _need(args.ranking, "run `ids-adapt rank` first")
    ranking = read_ranking_csv(ranking_path, ds.feature_names)
    X, y = ds.view("val")
    results, masks = [], {}
    for i, ratio in enumerate(cfg.feature_ratios):
        found = subset_search(model, ranking, ratio, cfg.subset_search_n, X, y, cfg.seed + i, args.jobs)
        results.extend(found)
        best = best_subset(found) or best_subset(found, valid_only=False)
        masks[repr(ratio)] = {
            "subset_id": best.subset_id,
            "indices": [int(i) for i in best.mask.indices],
            "features": best.mask.names(ds.feature_names),
            "accuracy": float(best.accuracy),
            "valid": bool(best.valid),
        }
    out_csv = write_subsets_csv(results, ds.feature_names, args.out / "subsets.csv")
    out_masks = _write_json(args.out / "masks.json", {"masks": masks})
    return inputs + [Path(args.model), ranking_path], [out_csv, out_masks]


def cmd_prune(args, cfg: PipelineConfig):
    ds, inputs = _dataset(args)
    model = _model(args.model)
    X, y = ds.view("val")
    modes = ["neurons", "connections"] if args.mode == "both" else [args.mode]
    outputs = []
    for mode in modes:
        reps = prune_sweep(
            model, [0.0, *cfg.prune_ratios], mode, X, y, cfg.latency_repetitions, cfg.latency_samples, jobs=args.jobs
        )
        outputs.append(write_prune_csv(reps, args.out / f"prune_{mode}.csv"))
    if args.save_ratio:
        pruned, _ = prune(model, args.save_ratio, modes[0])
        pruned.metadata["kind"] = "P-BRM"
        outputs.append(pruned.save(args.out / "p_brm.json"))
    return inputs + [Path(args.model)], outputs


def cmd_finetune(args, cfg: PipelineConfig):
    ds, inputs = _dataset(args)
    teacher = _model(args.teacher)
    student = _model(args.student, "pass a student model (e.g. brm.json or p_brm.json)") if args.student else teacher.copy()
    mask = None
    if args.features:
        mask = FeatureMask.from_names(args.features.split(","), ds.feature_names)
    elif args.mask_ratio is not None:
        masks = _read_masks(Path(args.masks), ds.n_features)
        if args.mask_ratio not in masks:
            raise SelectionError(f"no mask for ratio {args.mask_ratio} in {args.masks}")
        mask = masks[args.mask_ratio]
    spec = FineTuneSpec(
        Algorithm(args.algorithm), args.alpha, args.case, mask, None, tuple(cfg.local_categories),
        cfg.train_config(), cfg.seed,
    )
    model, report = fine_tune(teacher, student, spec, ds)
    stem = f"finetuned_{args.algorithm}_case{args.case}"
    outputs = [model.save(args.out / f"{stem}.json"), _write_json(args.out / f"{stem}.eval.json", report.to_dict())]
    log.info("global accuracy %.4f, historical loss %.4f", report.global_accuracy, report.historical_loss)
    extra = [Path(args.teacher)] + ([Path(args.student)] if args.student else [])
    return inputs + extra, outputs


def cmd_sweep(args, cfg: PipelineConfig):
    ds, inputs = _dataset(args)
    teacher = _model(args.teacher)
    all_masks = _read_masks(Path(args.masks), ds.n_features)
    masks = {}
    for r in cfg.finetune_feature_ratios:
        if r not in all_masks:
            raise SelectionError(f"no mask for feature ratio {r} in {args.masks}; include it in feature_ratios")
        masks[r] = all_masks[r]
    rows = scenario_sweep(
        teacher, ds, masks, cfg.finetune_kinds, cfg.finetune_cases, cfg.finetune_algorithms,
        cfg.finetune_prune_ratio, cfg.train_config(), cfg.local_categories, cfg.seed, args.jobs,
    )
    return inputs + [Path(args.teacher), Path(args.masks)], [write_leaderboard_csv(rows, args.out / "leaderboard.csv")]


def _read_csv(path: Path) -> list[dict]:
    with path.open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def cmd_report(args, cfg: PipelineConfig):
    """Aggregate existing stage outputs; nothing is recomputed."""
    src = Path(args.source or args.out)
    inputs, lines, summary = [], ["# Pipeline summary", ""], {}
    train_json = src / "brm_train.json"
    if train_json.is_file():
        inputs.append(train_json)
        t = json.loads(train_json.read_text(encoding="utf-8"))
        summary["brm"] = t
        lines += ["## Base model", "", f"- test accuracy: {t['test_accuracy']:.4f}", f"- parameters: {t['n_params']}", ""]
    rfe = src / "rfe.csv"
    if rfe.is_file():
        inputs.append(rfe)
        rows = _read_csv(rfe)
        by_variant: dict[str, list] = {}
        for r in rows:
            by_variant.setdefault(r["variant"], []).append((int(r["active_count"]), float(r["accuracy"])))
        summary["rfe"] = by_variant
        lines += ["## Backward elimination (accuracy by active features)", ""]
        for v, pts in by_variant.items():
            lines.append(f"- {v}: " + ", ".join(f"{n}:{a:.3f}" for n, a in pts))
        lines.append("")
    subsets = src / "subsets.csv"
    if subsets.is_file():
        inputs.append(subsets)
        rows = _read_csv(subsets)
        per_ratio: dict[str, dict] = {}
        for r in rows:
            d = per_ratio.setdefault(r["ratio"], {"subsets": 0, "valid": 0, "best_valid_accuracy": None})
            d["subsets"] += 1
            if r["valid"] == "1":
                d["valid"] += 1
                acc = float(r["accuracy"])
                if d["best_valid_accuracy"] is None or acc > d["best_valid_accuracy"]:
                    d["best_valid_accuracy"] = acc
        summary["subset_search"] = per_ratio
        lines += ["## Subset search", "", "| ratio | distinct | valid | best valid accuracy |", "|---|---|---|---|"]
        for ratio, d in per_ratio.items():
            best = "" if d["best_valid_accuracy"] is None else f"{d['best_valid_accuracy']:.4f}"
            lines.append(f"| {ratio} | {d['subsets']} | {d['valid']} | {best} |")
        lines.append("")
    for mode in ("neurons", "connections"):
        p = src / f"prune_{mode}.csv"
        if p.is_file():
            inputs.append(p)
            rows = _read_csv(p)
            summary[f"prune_{mode}"] = [
                {k: r[k] for k in ("ratio", "params", "accuracy", "memory_bytes", "error")} for r in rows
            ]
            lines += [f"## Pruning ({mode})", "", "| ratio | params | accuracy | memory (B) |", "|---|---|---|---|"]
            for r in rows:
                acc = r["accuracy"] and f"{float(r['accuracy']):.4f}"
                lines.append(f"| {r['ratio']} | {r['params']} | {acc or r['error']} | {r['memory_bytes']} |")
            lines.append("")
    board = src / "leaderboard.csv"
    if board.is_file():
        inputs.append(board)
        rows = [r for r in _read_csv(board) if r["status"] == "ok"]
        by_alg: dict[str, list] = {}
        for r in rows:
            by_alg.setdefault(r["algorithm"], []).append((float(r["global_accuracy"]), float(r["historical_loss"])))
        summary["finetune"] = {
            a: {"cells": len(v), "mean_global_accuracy": float(np.mean([g for g, _ in v])),
                "mean_historical_loss": float(np.mean([h for _, h in v]))}
            for a, v in sorted(by_alg.items())
        }
        lines += ["## Fine-tuning", "", "| algorithm | cells | mean global accuracy | mean historical loss |", "|---|---|---|---|"]
        for a, d in summary["finetune"].items():
            lines.append(f"| {a} | {d['cells']} | {d['mean_global_accuracy']:.4f} | {d['mean_historical_loss']:.4f} |")
        lines.append("")
    if not inputs:
        raise InputError(f"no stage outputs found in {src}")
    out_md = args.out / "summary.md"
    out_md.write_text("\n".join(lines), encoding="utf-8")
    return inputs, [out_md, _write_json(args.out / "summary.json", summary)]


def _catalog(args) -> Catalog:
    return Catalog(args.catalog, lock_timeout=0 if args.fail_fast else None)


def cmd_catalog_put(args, cfg: PipelineConfig):
    cat = _catalog(args)
    model = _model(args.model, "pass an existing model file")
    metrics: dict[str, Any] = {}
    if args.eval:
        rep = json.loads(_need(args.eval, "pass an eval JSON from `finetune`").read_text(encoding="utf-8"))
        metrics.update({k: rep[k] for k in ("global_accuracy", "historical_loss") if k in rep})
    if args.data:
        ds, _ = _dataset(args)
        Xte, yte = ds.view("test")
        mask = FeatureMask.all_active(ds.n_features)
        if args.features:
            mask = FeatureMask.from_names(args.features.split(","), ds.feature_names)
        from .data import apply_mask

        metrics.setdefault("global_accuracy", accuracy(model, apply_mask(Xte, mask), yte))
        stats = measure_inference(model, Xte, cfg.latency_repetitions, cfg.latency_samples)
        metrics["mean_ns_per_sample"] = stats.mean_ns_per_sample
        active = mask.names(ds.feature_names)
        subset_id = mask.subset_id
    else:
        names = model.metadata.get("feature_names") or [f"f{i}" for i in range(model.n_inputs)]
        active = args.features.split(",") if args.features else list(names)
        subset_id = ""
    metrics["memory_bytes"] = memory_estimate(model)
    metrics["n_params"] = model.n_params
    if args.tag:
        tags = dict(t.split("=", 1) for t in args.tag)
    else:
        tags = {}
    model_id = cat.put(model, subset_id=subset_id, active_features=active, parent_id=args.parent, tags=tags, metrics=metrics)
    print(model_id)
    return [Path(args.model)], []


def cmd_catalog_get(args, cfg: PipelineConfig):
    model, entry = _catalog(args).get(args.id)
    out = model.save(args.out / f"{args.id[:16]}.json")
    print(json.dumps(asdict(entry), indent=2, sort_keys=True))
    return [], [out]


def cmd_catalog_query(args, cfg: PipelineConfig):
    features = args.available_features.split(",") if args.available_features else None
    cons = QueryConstraints(args.max_memory, args.max_latency, features, args.min_accuracy, args.max_historical_loss)
    entries = _catalog(args).query(cons)
    for e in entries:
        print(json.dumps({"model_id": e.model_id, "metrics": e.metrics, "tags": e.tags}, sort_keys=True))
    return [], []


def cmd_pipeline(args, cfg: PipelineConfig):
    """Run synth/preprocess through sweep, then register the results in the catalog."""
    out = args.out
    base = dict(vars(args))
    inputs: list = []
    outputs: list = []

    def stage(fn, **kw):
        ns = argparse.Namespace(**{**base, **kw})
        i, o = fn(ns, cfg)
        inputs.extend(p for p in i if p not in outputs)
        outputs.extend(o)
        return o

    if args.input or cfg.sources:
        stage(cmd_preprocess)
    else:
        stage(cmd_synth)
    data = out / "dataset"
    stage(cmd_train_base, data=data)
    stage(cmd_rank, data=data, model=out / "brm.json")
    stage(cmd_rfe, data=data, model=out / "brm.json", variant="all")
    ratios = sorted(set(cfg.feature_ratios) | set(cfg.finetune_feature_ratios))
    cfg.feature_ratios = ratios
    stage(cmd_subset_search, data=data, model=out / "brm.json", ranking=out / "ranking.csv")
    stage(cmd_prune, data=data, model=out / "brm.json", mode="both", save_ratio=cfg.finetune_prune_ratio)
    stage(cmd_sweep, data=data, teacher=out / "brm.json", masks=out / "masks.json")
    stage(cmd_report, source=None)
    if args.catalog or os.environ.get("IDS_ADAPT_CATALOG"):
        ds = load_bundle(data)
        cat = _catalog(args)
        brm = Mlp.load(out / "brm.json")
        Xte, yte = ds.view("test")
        root = cat.put(brm, subset_id=FeatureMask.all_active(ds.n_features).subset_id,
                       active_features=list(ds.feature_names), tags={"kind": "BRM"},
                       metrics={"global_accuracy": accuracy(brm, Xte, yte), "historical_loss": 0.0,
                                "memory_bytes": memory_estimate(brm), "n_params": brm.n_params})
        pbrm = Mlp.load(out / "p_brm.json")
        cat.put(pbrm, subset_id=FeatureMask.all_active(ds.n_features).subset_id,
                active_features=list(ds.feature_names), parent_id=root,
                tags={"kind": "P-BRM", "prune_ratio": cfg.finetune_prune_ratio},
                metrics={"global_accuracy": accuracy(pbrm, Xte, yte), "memory_bytes": memory_estimate(pbrm),
                         "n_params": pbrm.n_params})
    return inputs, outputs


COMMANDS = {
    "synth": cmd_synth,
    "preprocess": cmd_preprocess,
    "train-base": cmd_train_base,
    "rank": cmd_rank,
    "rfe": cmd_rfe,
    "subset-search": cmd_subset_search,
    "prune": cmd_prune,
    "finetune": cmd_finetune,
    "sweep": cmd_sweep,
    "report": cmd_report,
    "pipeline": cmd_pipeline,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML file with PipelineConfig keys")
    common.add_argument("--seed", type=int, help="base seed for every stochastic stage")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory (default: .)")
    common.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="worker threads for sweeps")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(
        prog="ids-adapt",
        description="Adapt a pre-trained MLP intrusion detector: rank/select features, prune, fine-tune, catalog.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, help_, **kw):
        p = sub.add_parser(name, help=help_, parents=[common], **kw)
        p.set_defaults(func=COMMANDS.get(name))
        return p

    p = add("synth", "generate the synthetic benign/attack dataset bundle")
    p.add_argument("--features", dest="synth_features", type=int, help="number of synthetic features (default 10)")
    p.add_argument("--per-category", dest="synth_per_category", type=int, help="samples per synthetic category")

    p = add("preprocess", "clean, balance, split and normalize flow CSVs")
    p.add_argument("--input", nargs="+", help="labeled flow CSV files")
    p.add_argument("--label-column", help="column holding the class label (default Label)")
    p.add_argument("--category-column", help="column holding the attack category (default: the label)")
    p.add_argument("--max-rows-per-file", type=int, help="read at most this many rows per CSV")

    p = add("train-base", "train the base reference model (stand-in for federated training)")
    p.add_argument("--data", required=True, help="dataset bundle path (without extension)")

    for name, help_ in (("rank", "zero-perturbation feature ranking"), ("rfe", "recursive backward elimination")):
        p = add(name, help_)
        p.add_argument("--data", required=True, help="dataset bundle path (without extension)")
        p.add_argument("--model", required=True, help="model JSON, usually brm.json")
        if name == "rfe":
            p.add_argument("--variant", default="all",
                           choices=["all"] + [f"{a}:{b}" for a, b in VARIANTS],
                           help="ranking:rule variant to run (default all four)")

    p = add("subset-search", "weighted stochastic feature-subset search")
    p.add_argument("--data", required=True, help="dataset bundle path (without extension)")
    p.add_argument("--model", required=True, help="model JSON, usually brm.json")
    p.add_argument("--ranking", required=True, help="ranking.csv from `rank`")
    p.add_argument("-n", dest="subset_search_n", type=int, help="draws per ratio (default 1000)")

    p = add("prune", "neuron / connection pruning sweep")
    p.add_argument("--data", required=True, help="dataset bundle path (without extension)")
    p.add_argument("--model", required=True, help="model JSON, usually brm.json")
    p.add_argument("--mode", choices=["neurons", "connections", "both"], default="both", help="what to prune (default both)")
    p.add_argument("--save-ratio", type=float, help="also write the model pruned at this ratio to p_brm.json")

    p = add("finetune", "fine-tune one student on local traffic")
    p.add_argument("--data", required=True, help="dataset bundle path (without extension)")
    p.add_argument("--teacher", required=True, help="frozen teacher model JSON")
    p.add_argument("--student", help="student model (default: copy of the teacher)")
    p.add_argument("--algorithm", choices=[a.value for a in Algorithm], required=True, help="target rule")
    p.add_argument("--alpha", type=float, help="mixing weight for HD (default 0.5)")
    p.add_argument("--case", type=int, choices=[1, 2, 3, 4], default=2, help="teacher/student input case (default 2)")
    p.add_argument("--masks", default="masks.json", help="masks.json from `subset-search`")
    p.add_argument("--mask-ratio", type=float, help="use the subset-search mask for this ratio")
    p.add_argument("--features", help="comma-separated active feature names")

    p = add("sweep", "full student x case x algorithm fine-tuning grid")
    p.add_argument("--data", required=True, help="dataset bundle path (without extension)")
    p.add_argument("--teacher", required=True, help="frozen teacher model JSON")
    p.add_argument("--masks", required=True, help="masks.json from `subset-search`")

    p = add("report", "summarize stage outputs without recomputation")
    p.add_argument("--source", help="directory with stage outputs (default: --out)")

    p = add("pipeline", "run every stage end to end")
    p.add_argument("--input", nargs="+", help="flow CSVs (default: synthetic data)")
    p.add_argument("--catalog", help="catalog root to register BRM/P-BRM (or $IDS_ADAPT_CATALOG)")
    p.add_argument("--fail-fast", action="store_true", help="error instead of waiting for the catalog lock")

    p = add("catalog", "model catalog operations")
    csub = p.add_subparsers(dest="catalog_command", required=True, metavar="ACTION")
    cat_common = argparse.ArgumentParser(add_help=False)
    cat_common.add_argument("--catalog", help="catalog root (default: $IDS_ADAPT_CATALOG)")
    cat_common.add_argument("--fail-fast", action="store_true", help="error instead of waiting for the writer lock")

    q = csub.add_parser("put", parents=[common, cat_common], help="store a model")
    q.add_argument("--model", required=True, help="model JSON to store")
    q.add_argument("--parent", help="model id of the parent entry")
    q.add_argument("--eval", help="eval JSON from `finetune` for accuracy/historical loss")
    q.add_argument("--data", help="dataset bundle for accuracy and latency measurement")
    q.add_argument("--features", help="comma-separated active feature names")
    q.add_argument("--tag", action="append", help="KEY=VALUE lineage tag (repeatable)")
    q.set_defaults(func=cmd_catalog_put)

    q = csub.add_parser("get", parents=[common, cat_common], help="fetch a model by id")
    q.add_argument("--id", required=True, help="model id (SHA-256 of the artifact)")
    q.set_defaults(func=cmd_catalog_get)

    q = csub.add_parser("query", parents=[common, cat_common], help="list models meeting constraints")
    q.add_argument("--max-memory", type=int, help="memory budget in bytes")
    q.add_argument("--max-latency", type=float, help="latency budget in ns per sample")
    q.add_argument("--available-features", help="comma-separated features the target can extract")
    q.add_argument("--min-accuracy", type=float, help="minimum global accuracy")
    q.add_argument("--max-historical-loss", type=float, help="maximum historical loss")
    q.set_defaults(func=cmd_catalog_query)
    return parser


_OVERRIDES = ("seed", "synth_features", "synth_per_category", "label_column", "category_column",
              "max_rows_per_file", "subset_search_n")


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, {k: getattr(args, k, None) for k in _OVERRIDES})
        args.out.mkdir(parents=True, exist_ok=True)
        command = args.command if args.command != "catalog" else f"catalog-{args.catalog_command}"
        inputs, outputs = args.func(args, cfg)
        if outputs:
            write_manifest(args.out, command, cfg, vars(args), inputs, outputs)
    except (InputError, DataIOError, SelectionError, FileNotFoundError) as exc:
        print(f"ids-adapt: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ConfigurationError, SpecError, RatioError) as exc:
        print(f"ids-adapt: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (AdaptError, ValueError) as exc:
        print(f"ids-adapt: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
