"""Dataset ingestion, balancing/splitting, feature masks and category views."""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
import pandas as pd

from .exceptions import (
    BalanceError,
    DataIOError,
    IngestionError,
    SelectionError,
    ShapeError,
    SpecError,
)

SPLITS = ("train", "val", "test")
BUNDLE_VERSION = 1

# CICIDS naming variants of the 5-tuple, flow id and timestamp columns.
DEFAULT_IDENTIFIER_COLUMNS = (
    "flow id",
    "source ip",
    "src ip",
    "destination ip",
    "dst ip",
    "source port",
    "src port",
    "destination port",
    "dst port",
    "protocol",
    "timestamp",
    "unnamed: 0",
)


def _norm_name(name: str) -> str:
    return re.sub(r"[\s_]+", " ", str(name).strip().lower())


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Normalized feature matrix with binary labels and traffic categories.

    ``split`` is ``None`` until :func:`balance_and_split` assigns every row
    to train/val/test. ``scaler`` holds the raw (min, max) of each feature
    so normalized values can be mapped back to the source units.
    """

    feature_names: tuple[str, ...]
    X: np.ndarray
    y: np.ndarray
    category: np.ndarray
    split: np.ndarray | None = None
    scaler: np.ndarray | None = None
    provenance: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        n, F = X.shape
        if len(self.feature_names) != F:
            raise ShapeError(f"{len(self.feature_names)} feature names for {F} columns")
        if len(self.y) != n or len(self.category) != n:
            raise ShapeError("X, y and category must have the same number of rows")
        if not np.isfinite(X).all():
            raise IngestionError("feature matrix contains non-finite values")
        if n and (X.min() < 0.0 or X.max() > 1.0):
            raise IngestionError("features must lie in [0, 1]")
        object.__setattr__(self, "feature_names", tuple(str(f) for f in self.feature_names))
        object.__setattr__(self, "X", _readonly(X))
        object.__setattr__(self, "y", _readonly(np.asarray(self.y, dtype=np.int8)))
        object.__setattr__(self, "category", _readonly(np.asarray(self.category, dtype=object)))
        if self.split is not None:
            split = np.asarray(self.split, dtype=object)
            if len(split) != n or not set(split.tolist()) <= set(SPLITS):
                raise ShapeError("split must tag every row with train/val/test")
            object.__setattr__(self, "split", _readonly(split))
        scaler = self.scaler
        if scaler is None:
            scaler = np.column_stack([np.zeros(F), np.ones(F)])
        object.__setattr__(self, "scaler", _readonly(np.asarray(scaler, dtype=np.float64)))
        labels: dict[str, int] = {}
        for cat, lab in zip(self.category.tolist(), self.y.tolist()):
            if labels.setdefault(cat, lab) != lab:
                raise IngestionError(f"category {cat!r} maps to both labels 0 and 1")

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return self.X.shape[0]

    def categories(self) -> list[str]:
        return sorted(set(self.category.tolist()))

    def rows(self, split: str | None = None) -> np.ndarray:
        if split is None:
            return np.arange(len(self))
        if self.split is None:
            raise SelectionError("dataset has no split assignment; run balance_and_split first")
        return np.flatnonzero(self.split == split)

    def view(self, split: str | None = None) -> tuple[np.ndarray, np.ndarray]:
        idx = self.rows(split)
        return self.X[idx], self.y[idx]

    def take(self, idx, **changes) -> "Dataset":
        idx = np.asarray(idx)
        kwargs = dict(
            feature_names=self.feature_names,
            X=self.X[idx],
            y=self.y[idx],
            category=self.category[idx],
            split=None if self.split is None else self.split[idx],
            scaler=self.scaler,
            provenance=dict(self.provenance),
        )
        kwargs.update(changes)
        return Dataset(**kwargs)


@dataclass(frozen=True, eq=False)
class FeatureMask:
    """Boolean selection of active feature columns.

    Masking zeroes the inactive columns; it never changes the input width.
    """

    active: np.ndarray

    def __post_init__(self):
        active = np.asarray(self.active, dtype=bool).reshape(-1)
        if active.size == 0 or not active.any():
            raise ShapeError("a feature mask needs at least one active feature")
        object.__setattr__(self, "active", _readonly(active))

    @classmethod
    def all_active(cls, n_features: int) -> "FeatureMask":
        return cls(np.ones(n_features, dtype=bool))

    @classmethod
    def from_indices(cls, indices: Iterable[int], n_features: int) -> "FeatureMask":
        active = np.zeros(n_features, dtype=bool)
        active[list(indices)] = True
        return cls(active)

    @classmethod
    def from_names(cls, names: Iterable[str], feature_names: Sequence[str]) -> "FeatureMask":
        pos = {n: i for i, n in enumerate(feature_names)}
        try:
            return cls.from_indices([pos[n] for n in names], len(feature_names))
        except KeyError as exc:
            raise ShapeError(f"unknown feature {exc}") from None

    def __len__(self) -> int:
        return self.active.size

    def __eq__(self, other) -> bool:
        return isinstance(other, FeatureMask) and np.array_equal(self.active, other.active)

    def __hash__(self) -> int:
        return hash(self.subset_id)

    @property
    def indices(self) -> list[int]:
        return np.flatnonzero(self.active).tolist()

    @property
    def n_active(self) -> int:
        return int(self.active.sum())

    @property
    def is_full(self) -> bool:
        return bool(self.active.all())

    @property
    def subset_id(self) -> str:
        key = f"{self.active.size}:" + ",".join(map(str, self.indices))
        return hashlib.sha256(key.encode()).hexdigest()[:16]

    def without(self, index: int) -> "FeatureMask":
        active = self.active.copy()
        active[index] = False
        return FeatureMask(active)

    def names(self, feature_names: Sequence[str]) -> list[str]:
        return [feature_names[i] for i in self.indices]


def apply_mask(X, mask: FeatureMask) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != len(mask):
        raise ShapeError(f"mask of length {len(mask)} does not match matrix shape {X.shape}")
    out = X.copy()
    out[:, ~mask.active] = 0.0
    return out


def category_view(
    ds: Dataset, categories: Iterable[str], split: str | None = None, exclude: bool = False
) -> tuple[np.ndarray, np.ndarray]:
    """Rows of ``split`` whose category is (or with ``exclude``, is not) in ``categories``."""
    cats = set(categories)
    if not cats:
        raise SelectionError("categories must be non-empty")
    idx = category_rows(ds, cats, split, exclude)
    return ds.X[idx], ds.y[idx]


def category_rows(ds: Dataset, categories: Iterable[str], split: str | None = None, exclude: bool = False) -> np.ndarray:
    cats = set(categories)
    idx = ds.rows(split)
    hit = np.isin(ds.category[idx].astype(str), sorted(cats))
    idx = idx[~hit if exclude else hit]
    if idx.size == 0:
        which = "outside" if exclude else "in"
        raise SelectionError(f"no rows {which} categories {sorted(cats)} for split {split!r}")
    return idx


# ingestion


@dataclass
class PreprocessConfig:
    benign_values: tuple[str, ...] = ("BENIGN",)
    identifier_columns: tuple[str, ...] = DEFAULT_IDENTIFIER_COLUMNS
    max_missing_fraction: float = 0.5
    max_rows_per_file: int | None = None


def _read_csv(path: Path, nrows: int | None) -> pd.DataFrame:
    try:
        df = pd.read_csv(path, nrows=nrows, low_memory=False, encoding="utf-8")
    except (OSError, UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataIOError(path, f"cannot read CSV ({exc})") from exc
    df.columns = [str(c).strip() for c in df.columns]
    return df


def _to_numeric(col: pd.Series) -> pd.Series:
    if pd.api.types.is_numeric_dtype(col):
        return col.astype(np.float64)
    as_str = col.astype("string").str.strip()
    conv = pd.to_numeric(as_str.replace({"Infinity": "inf", "-Infinity": "-inf"}), errors="coerce")
    if conv[col.notna()].notna().all():
        return conv.astype(np.float64)
    codes = {v: i for i, v in enumerate(sorted(as_str.dropna().unique()))}
    return as_str.map(codes).astype(np.float64)


def load_and_preprocess(
    csv_paths: Sequence, label_column: str, category_column: str | None = None, config: PreprocessConfig | None = None
) -> Dataset:
    """Read labeled flow CSVs and turn them into a normalized :class:`Dataset`.

    Steps, in order: keep only columns present in every file; drop identifier
    columns; encode non-numeric columns as integer codes; drop columns with a
    missing fraction above ``config.max_missing_fraction``; drop rows that
    still hold missing or infinite values; drop constant columns; min-max
    scale every remaining column to [0, 1].

    The label column holds category strings (``"BENIGN"``, ``"DDoS"`` ...);
    rows whose category is in ``config.benign_values`` get label 0, all
    others 1. ``category_column`` defaults to the label column.
    """
    config = config or PreprocessConfig()
    category_column = category_column or label_column
    paths = [Path(p) for p in csv_paths]
    if not paths:
        raise IngestionError("no input files given")
    frames = []
    for p in paths:
        if not p.is_file():
            raise DataIOError(p, "file not found")
        df = _read_csv(p, config.max_rows_per_file)
        for col in {label_column.strip(), category_column.strip()}:
            if col not in df.columns:
                raise IngestionError(f"{p}: column {col!r} not found")
        frames.append(df)

    common = set(frames[0].columns)
    for df in frames[1:]:
        common &= set(df.columns)
    ordered = [c for c in frames[0].columns if c in common]
    data = pd.concat([df[ordered] for df in frames], ignore_index=True)

    label_col, cat_col = label_column.strip(), category_column.strip()
    category = data[cat_col].astype(str).str.strip()
    benign = {b.strip() for b in config.benign_values}
    y = (~data[label_col].astype(str).str.strip().isin(benign)).astype(np.int8)

    ident = {_norm_name(c) for c in config.identifier_columns}
    feature_cols = [c for c in ordered if c not in (label_col, cat_col) and _norm_name(c) not in ident]
    feats = pd.DataFrame({c: _to_numeric(data[c]) for c in feature_cols})
    feats = feats.replace([np.inf, -np.inf], np.nan)

    missing = feats.isna().mean()
    feats = feats.loc[:, missing <= config.max_missing_fraction]
    keep = feats.notna().all(axis=1).to_numpy()
    feats, y, category = feats[keep], y[keep], category[keep]
    if len(feats) == 0 or feats.shape[1] == 0:
        raise IngestionError("no rows or columns left after filtering")
    constant = feats.nunique(dropna=False) <= 1
    feats = feats.loc[:, ~constant]
    if feats.shape[1] == 0:
        raise IngestionError("every feature column is constant")

    raw = feats.to_numpy(dtype=np.float64)
    lo, hi = raw.min(axis=0), raw.max(axis=0)
    X = (raw - lo) / (hi - lo)
    return Dataset(
        feature_names=tuple(feats.columns),
        X=np.clip(X, 0.0, 1.0),
        y=y.to_numpy(),
        category=category.to_numpy(dtype=object),
        scaler=np.column_stack([lo, hi]),
        provenance={"sources": [str(p) for p in paths], "label_column": label_col, "category_column": cat_col},
    )


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def balance_and_split(ds: Dataset, ratios: Sequence[float] = (0.65, 0.15, 0.20), seed: int = 0) -> Dataset:
    """Down-sample the majority class, then split stratified by label.

    Afterwards the scaler is re-fitted on the training rows alone: training
    columns span exactly [0, 1] and val/test rows are transformed with the
    training statistics and clipped.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or not math.isclose(sum(ratios), 1.0, abs_tol=1e-9):
        raise SpecError(f"split ratios must be three non-negative numbers summing to 1, got {ratios}")
    rng = np.random.default_rng(seed)
    by_class = [np.flatnonzero(ds.y == c) for c in (0, 1)]
    if any(len(ix) == 0 for ix in by_class):
        raise BalanceError("both classes must be present to balance")
    n_keep = min(len(ix) for ix in by_class)
    kept = [np.sort(rng.choice(ix, size=n_keep, replace=False)) if len(ix) > n_keep else ix for ix in by_class]

    # Interleave the shuffled classes by relative rank, then cut at the
    # cumulative ratio boundaries: global counts are exact up to rounding and
    # every class is spread proportionally over the three splits.
    keys, rows = [], []
    for cls_id, ix in enumerate(kept):
        perm = rng.permutation(ix)
        keys.append(np.column_stack([(np.arange(len(perm)) + 0.5) / len(perm), np.full(len(perm), cls_id)]))
        rows.append(perm)
    keys_all = np.vstack(keys)
    rows_all = np.concatenate(rows)
    order = np.lexsort((keys_all[:, 1], keys_all[:, 0]))
    rows_all = rows_all[order]
    n = len(rows_all)
    cut1 = _round_half_up(n * ratios[0])
    cut2 = _round_half_up(n * (ratios[0] + ratios[1]))
    split = np.empty(n, dtype=object)
    split[:cut1], split[cut1:cut2], split[cut2:] = "train", "val", "test"

    idx = np.sort(rows_all)
    split_by_row = dict(zip(rows_all.tolist(), split.tolist()))
    split = np.array([split_by_row[i] for i in idx.tolist()], dtype=object)

    X = ds.X[idx]
    train = split == "train"
    lo = X[train].min(axis=0) if train.any() else np.zeros(ds.n_features)
    hi = X[train].max(axis=0) if train.any() else np.ones(ds.n_features)
    span = np.where(hi > lo, hi - lo, 1.0)
    X = np.clip((X - lo) / span, 0.0, 1.0)
    raw_lo, raw_hi = ds.scaler[:, 0], ds.scaler[:, 1]
    raw_span = raw_hi - raw_lo
    scaler = np.column_stack([raw_lo + lo * raw_span, raw_lo + (lo + span) * raw_span])
    prov = dict(ds.provenance, split_seed=int(seed), split_ratios=list(ratios))
    return ds.take(idx, X=X, split=split, scaler=scaler, provenance=prov)


# synthetic data


@dataclass
class CategorySpec:
    name: str
    label: int
    mean: Sequence[float]
    cov: Any = 0.01
    n: int = 500


@dataclass
class SynthSpec:
    n_features: int
    categories: list[CategorySpec]
    seed: int = 0
    feature_prefix: str = "f"


def _covariance(cov, F: int, name: str) -> np.ndarray:
    c = np.asarray(cov, dtype=np.float64)
    if c.ndim == 0:
        c = np.eye(F) * float(c)
    elif c.ndim == 1:
        c = np.diag(c)
    if c.shape != (F, F):
        raise SpecError(f"category {name!r}: covariance must be scalar, length-{F} or {F}x{F}")
    if not np.isfinite(c).all() or not np.allclose(c, c.T):
        raise SpecError(f"category {name!r}: covariance must be finite and symmetric")
    if np.linalg.eigvalsh(c).min() < -1e-12:
        raise SpecError(f"category {name!r}: covariance is not positive semi-definite")
    return c


def synth_generate(spec: SynthSpec) -> Dataset:
    """Gaussian clusters per traffic category, clipped to [0, 1]."""
    F = int(spec.n_features)
    if F < 1 or not spec.categories:
        raise SpecError("need at least one feature and one category")
    rng = np.random.default_rng(spec.seed)
    Xs, ys, cats = [], [], []
    for cat in spec.categories:
        mean = np.asarray(cat.mean, dtype=np.float64)
        if mean.shape != (F,) or mean.min() < 0 or mean.max() > 1:
            raise SpecError(f"category {cat.name!r}: mean must be a length-{F} vector in [0,1]")
        if cat.label not in (0, 1) or cat.n < 0:
            raise SpecError(f"category {cat.name!r}: label must be 0/1 and n >= 0")
        cov = _covariance(cat.cov, F, cat.name)
        Xs.append(rng.multivariate_normal(mean, cov, size=cat.n, method="eigh"))
        ys.append(np.full(cat.n, cat.label, dtype=np.int8))
        cats.extend([cat.name] * cat.n)
    return Dataset(
        feature_names=tuple(f"{spec.feature_prefix}{i}" for i in range(F)),
        X=np.clip(np.vstack(Xs), 0.0, 1.0),
        y=np.concatenate(ys),
        category=np.array(cats, dtype=object),
        provenance={"synthetic": True, "seed": int(spec.seed)},
    )


def default_synth_spec(
    n_features: int = 10, n_per_category: int = 400, seed: int = 0, spread: float = 0.1
) -> SynthSpec:
    """Four-category benign/attack task used by the CLI and the test suite.

    BENIGN sits at 0.3 on every feature; each attack category raises a
    different block of features: DDoS the first block, PortScan the second,
    Bot the third. BENIGN carries as many rows as the three attacks together.
    """
    if n_features < 3:
        raise SpecError("default synthetic task needs at least 3 features")
    block = max(1, n_features // 4)
    base = np.full(n_features, 0.3)
    cats = [CategorySpec("BENIGN", 0, base, spread**2, 3 * n_per_category)]
    for k, name in enumerate(("DDoS", "PortScan", "Bot")):
        mean = base.copy()
        mean[k * block : (k + 1) * block] = 0.75
        cats.append(CategorySpec(name, 1, mean, spread**2, n_per_category))
    return SynthSpec(n_features, cats, seed)


def synth_spec_from_dict(doc: dict[str, Any]) -> SynthSpec:
    try:
        cats = [CategorySpec(**c) for c in doc["categories"]]
        return SynthSpec(int(doc["n_features"]), cats, int(doc.get("seed", 0)), doc.get("feature_prefix", "f"))
    except (KeyError, TypeError) as exc:
        raise SpecError(f"malformed synthetic spec: {exc}") from None


# bundle I/O


def save_bundle(ds: Dataset, path) -> tuple[Path, Path]:
    """Write ``<path>.csv`` (features, label, category, split) and ``<path>.json``."""
    base = Path(path)
    base.parent.mkdir(parents=True, exist_ok=True)
    csv_path, json_path = base.with_suffix(".csv"), base.with_suffix(".json")
    frame = pd.DataFrame(ds.X, columns=list(ds.feature_names))
    frame["label"] = ds.y
    frame["category"] = ds.category
    frame["split"] = ds.split if ds.split is not None else ""
    frame.to_csv(csv_path, index=False, float_format="%.17g")
    sidecar = {
        "format_version": BUNDLE_VERSION,
        "feature_names": list(ds.feature_names),
        "scaler": {"min": ds.scaler[:, 0].tolist(), "max": ds.scaler[:, 1].tolist()},
        "provenance": ds.provenance,
        "rows": len(ds),
    }
    json_path.write_text(json.dumps(sidecar, indent=2, sort_keys=True), encoding="utf-8")
    return csv_path, json_path


def load_bundle(path) -> Dataset:
    base = Path(path)
    if base.suffix in (".csv", ".json"):
        base = base.with_suffix("")
    csv_path, json_path = base.with_suffix(".csv"), base.with_suffix(".json")
    for p in (csv_path, json_path):
        if not p.is_file():
            raise DataIOError(p, "dataset bundle file not found")
    try:
        meta = json.loads(json_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataIOError(json_path, f"cannot read sidecar ({exc})") from exc
    names = meta["feature_names"]
    frame = pd.read_csv(
        csv_path, keep_default_na=False, dtype={"category": str, "split": str}, float_precision="round_trip"
    )
    split = frame["split"].to_numpy(dtype=object)
    return Dataset(
        feature_names=tuple(names),
        X=frame[names].to_numpy(dtype=np.float64),
        y=frame["label"].to_numpy(dtype=np.int8),
        category=frame["category"].to_numpy(dtype=object),
        split=None if (split == "").all() else split,
        scaler=np.column_stack([meta["scaler"]["min"], meta["scaler"]["max"]]),
        provenance=meta.get("provenance", {}),
    )
