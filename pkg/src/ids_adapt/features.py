"""Zero-perturbation feature ranking, backward elimination and subset search.

Removing a feature always means zeroing its column; the model input width
never changes. Ties between equally ranked features go to the lowest column
index throughout.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .data import FeatureMask, apply_mask
from .exceptions import EvaluationError, RatioError
from .mlp import Mlp, accuracy, predict

VARIANTS = (
    ("fixed", "zero-first"),
    ("fixed", "min-rank"),
    ("iterative", "zero-first"),
    ("iterative", "min-rank"),
)
DISTRIBUTION_EPS = 1e-6


@dataclass
class RankingScore:
    """Accuracy drop ``A(f) = baseline - accuracy with f zeroed`` per active feature."""

    feature_names: tuple[str, ...]
    scores: dict[str, float]
    baseline_accuracy: float

    def column(self, name: str) -> int:
        return self.feature_names.index(name)

    def ordered(self) -> list[tuple[str, float]]:
        """(name, score) in column order."""
        return [(n, self.scores[n]) for n in self.feature_names if n in self.scores]

    @property
    def least_important(self) -> str:
        # min() keeps the first minimum, i.e. the lowest column index
        return min(self.ordered(), key=lambda kv: kv[1])[0]

    @property
    def most_important(self) -> str:
        return max(self.ordered(), key=lambda kv: kv[1])[0]


def _names(feature_names, n: int) -> tuple[str, ...]:
    return tuple(feature_names) if feature_names is not None else tuple(f"f{i}" for i in range(n))


def _map(fn, items, jobs: int):
    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def feature_ranking(
    model: Mlp, mask: FeatureMask, X_val, y_val, feature_names: Sequence[str] | None = None, jobs: int = 1
) -> RankingScore:
    """Score every active feature by the accuracy lost when its column is zeroed."""
    if len(y_val) == 0:
        raise EvaluationError("feature ranking needs a non-empty validation set")
    names = _names(feature_names, len(mask))
    Xm = apply_mask(X_val, mask)
    baseline = accuracy(model, Xm, y_val)

    def perturbed(col: int) -> float:
        Xz = Xm.copy()
        Xz[:, col] = 0.0
        return accuracy(model, Xz, y_val)

    cols = mask.indices
    accs = _map(perturbed, cols, jobs)
    return RankingScore(names, {names[c]: baseline - a for c, a in zip(cols, accs)}, baseline)


@dataclass
class EliminationStep:
    active_count: int
    removed: str
    accuracy: float
    subset_id: str


@dataclass
class EliminationTrace:
    variant: tuple[str, str]
    baseline_accuracy: float
    n_features: int
    steps: list[EliminationStep] = field(default_factory=list)

    @property
    def name(self) -> str:
        return f"{self.variant[0]}-rank/{self.variant[1]}"

    def accuracy_at(self, active_count: int) -> float:
        for step in self.steps:
            if step.active_count == active_count:
                return step.accuracy
        raise KeyError(active_count)


def _pick(scores: list[tuple[int, float]], rule: str) -> int:
    """Column to remove from (column, score) pairs given in column order."""
    if rule == "zero-first":
        for col, s in scores:
            if s == 0.0:
                return col
    return min(scores, key=lambda cs: cs[1])[0]


def _fixed_order(scores: list[tuple[int, float]], rule: str) -> list[int]:
    by_score = sorted(scores, key=lambda cs: (cs[1], cs[0]))
    if rule == "zero-first":
        zeros = [c for c, s in scores if s == 0.0]
        skip = set(zeros)
        return zeros + [c for c, _ in by_score if c not in skip]
    return [c for c, _ in by_score]


def recursive_elimination(
    model: Mlp,
    X_val,
    y_val,
    variant: tuple[str, str] = ("iterative", "min-rank"),
    feature_names: Sequence[str] | None = None,
    jobs: int = 1,
) -> EliminationTrace:
    """Backward elimination from the full feature set down to one feature.

    ``variant`` is ``(ranking, rule)``. With ``"fixed"`` ranking the scores
    are computed once on the full set; ``"iterative"`` recomputes them after
    every removal. Rule ``"zero-first"`` removes a zero-scored feature
    whenever one exists and otherwise the minimum; ``"min-rank"`` always
    removes the minimum, which may be negative.
    """
    ranking, rule = variant
    if (ranking, rule) not in VARIANTS:
        raise ValueError(f"unknown elimination variant {variant!r}; expected one of {VARIANTS}")
    X_val = np.asarray(X_val, dtype=np.float64)
    F = X_val.shape[1]
    names = _names(feature_names, F)
    mask = FeatureMask.all_active(F)
    first = feature_ranking(model, mask, X_val, y_val, names, jobs)
    trace = EliminationTrace((ranking, rule), first.baseline_accuracy, F)
    fixed_order = _fixed_order([(first.column(n), s) for n, s in first.ordered()], rule)

    current = first
    for step in range(F - 1):
        if ranking == "fixed":
            col = fixed_order[step]
        else:
            col = _pick([(current.column(n), s) for n, s in current.ordered()], rule)
        mask = mask.without(col)
        if ranking == "iterative" and mask.n_active > 1:
            current = feature_ranking(model, mask, X_val, y_val, names, jobs)
            acc = current.baseline_accuracy
        else:
            acc = accuracy(model, apply_mask(X_val, mask), y_val)
        trace.steps.append(EliminationStep(mask.n_active, names[col], acc, mask.subset_id))
    return trace


def rank_to_distribution(scores: RankingScore | Sequence[float], eps: float = DISTRIBUTION_EPS) -> np.ndarray:
    """Shift scores so the minimum maps to ``eps`` and normalize to sum 1.

    ``p(f) = (A(f) - min A + eps) / sum_g (A(g) - min A + eps)``; order is
    preserved and every feature keeps a strictly positive probability.
    """
    if isinstance(scores, RankingScore):
        values = np.array([s for _, s in scores.ordered()], dtype=np.float64)
    else:
        values = np.asarray(scores, dtype=np.float64)
    if values.size == 0:
        raise ValueError("need at least one score")
    shifted = values - values.min() + eps
    return shifted / shifted.sum()


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def subset_size(n_features: int, ratio: float) -> int:
    return round_half_up(n_features * ratio)


def weighted_draw(probs, k: int, n_draws: int, seed: int) -> np.ndarray:
    """``n_draws`` rows of ``k`` distinct indices, weighted sampling without replacement."""
    probs = np.asarray(probs, dtype=np.float64)
    if not 1 <= k <= probs.size:
        raise RatioError(f"cannot draw {k} of {probs.size} items")
    uniforms = np.random.default_rng(seed).random((n_draws, k))
    return kernels.weighted_draws(probs, k, uniforms)


@dataclass
class SubsetResult:
    mask: FeatureMask
    ratio: float
    accuracy: float
    benign_accuracy: float
    attack_accuracy: float
    draw_index: int

    @property
    def valid(self) -> bool:
        """Both classes are detected better than chance."""
        return bool(self.benign_accuracy > 0.5 and self.attack_accuracy > 0.5)

    @property
    def subset_id(self) -> str:
        return self.mask.subset_id


def class_accuracies(model: Mlp, X, y) -> tuple[float, float]:
    y = np.asarray(y)
    pred = predict(model, X)
    out = []
    for cls in (0, 1):
        sel = y == cls
        out.append(np.count_nonzero(pred[sel] == cls) / sel.sum() if sel.any() else float("nan"))
    return out[0], out[1]


def subset_search(
    model: Mlp,
    scores: RankingScore,
    ratio: float,
    n: int,
    X_val,
    y_val,
    seed: int = 0,
    jobs: int = 1,
) -> list[SubsetResult]:
    """Evaluate up to ``n`` distinct score-weighted feature subsets.

    Each draw picks ``round(F * ratio)`` distinct features among those in
    ``scores``; a subset already seen is skipped. Results come back in draw
    order regardless of ``jobs``.
    """
    if not 0 < ratio < 1:
        raise RatioError(f"subset ratio must be in (0, 1), got {ratio}")
    if n < 1:
        raise RatioError("n must be >= 1")
    X_val = np.asarray(X_val, dtype=np.float64)
    F = X_val.shape[1]
    candidates = [scores.column(name) for name, _ in scores.ordered()]
    k = subset_size(len(candidates), ratio)
    if k < 1:
        raise RatioError(f"round({len(candidates)} x {ratio}) = {k} features; ratio too small")
    draws = weighted_draw(rank_to_distribution(scores), k, n, seed)

    seen: set[str] = set()
    todo: list[tuple[int, FeatureMask]] = []
    for i, row in enumerate(draws):
        mask = FeatureMask.from_indices([candidates[j] for j in row], F)
        if mask.subset_id in seen:
            continue
        seen.add(mask.subset_id)
        todo.append((i, mask))

    def evaluate(item: tuple[int, FeatureMask]) -> SubsetResult:
        i, mask = item
        Xm = apply_mask(X_val, mask)
        benign, attack = class_accuracies(model, Xm, y_val)
        return SubsetResult(mask, ratio, accuracy(model, Xm, y_val), benign, attack, i)

    return _map(evaluate, todo, jobs)


def best_subset(results: Sequence[SubsetResult], valid_only: bool = True) -> SubsetResult | None:
    pool = [r for r in results if r.valid] if valid_only else list(results)
    if not pool:
        return None
    return max(pool, key=lambda r: (r.accuracy, -r.draw_index))


# CSV export

TRACE_COLUMNS = ["variant", "step", "active_count", "removed", "accuracy", "subset_id"]
SUBSET_COLUMNS = [
    "subset_id",
    "ratio",
    "n_active",
    "active_features",
    "accuracy",
    "benign_accuracy",
    "attack_accuracy",
    "valid",
    "draw_index",
]


def write_trace_csv(traces: Sequence[EliminationTrace], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for tr in traces:
            w.writerow([tr.name, 0, tr.n_features, "", repr(tr.baseline_accuracy), ""])
            for i, st in enumerate(tr.steps, 1):
                w.writerow([tr.name, i, st.active_count, st.removed, repr(st.accuracy), st.subset_id])
    return path


def write_subsets_csv(results: Sequence[SubsetResult], feature_names: Sequence[str], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUBSET_COLUMNS)
        for r in results:
            w.writerow(
                [
                    r.subset_id,
                    repr(r.ratio),
                    r.mask.n_active,
                    ";".join(r.mask.names(feature_names)),
                    repr(r.accuracy),
                    repr(r.benign_accuracy),
                    repr(r.attack_accuracy),
                    int(r.valid),
                    r.draw_index,
                ]
            )
    return path


def write_ranking_csv(ranking: RankingScore, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "column", "score", "baseline_accuracy"])
        for name, s in ranking.ordered():
            w.writerow([name, ranking.column(name), repr(s), repr(ranking.baseline_accuracy)])
    return path


def read_ranking_csv(path, feature_names: Sequence[str]) -> RankingScore:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise EvaluationError(f"{path}: empty ranking")
    names = tuple(feature_names)
    for r in rows:
        col = int(r["column"])
        if col >= len(names) or names[col] != r["feature"]:
            raise EvaluationError(f"{path}: feature {r['feature']!r} does not match dataset column {col}")
    return RankingScore(names, {r["feature"]: float(r["score"]) for r in rows}, float(rows[0]["baseline_accuracy"]))
