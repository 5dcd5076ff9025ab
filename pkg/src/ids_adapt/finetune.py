"""Teacher/student fine-tuning on local traffic and forgetting measurement.

Four target rules turn true labels ``p`` and clamped teacher scores ``q``
into regression targets for the student:

==== ==================================  ===========
HT   ``p``                                alpha = 0
HD   ``alpha * q + (1 - alpha) * p``      alpha = 0.5
HI   ``1 if q >= 0.5 else 0``             no alpha
KD   ``q``                                alpha = 1
==== ==================================  ===========

Edge deployment cases decide what the teacher and the student see while
learning:

- case 1: teacher and student both see the student's masked features;
- case 2: teacher sees full features, student learns from masked input;
- case 3: both learn from full features (the student is still deployed masked);
- case 4: student learns from a 50/50 mix of masked and full copies.

Centralized students use case 2 with an all-active mask.
"""

from __future__ import annotations

import csv
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .data import Dataset, FeatureMask, apply_mask, category_rows
from .exceptions import AdaptError, EvaluationError, SpecError
from .mlp import Mlp, TrainConfig, forward, predict, train
from .pruning import prune_neurons

DEFAULT_LOCAL_CATEGORIES = ("BENIGN", "DDoS")
CASES = (1, 2, 3, 4)


class Algorithm(str, Enum):
    HT = "HT"
    HD = "HD"
    HI = "HI"
    KD = "KD"


DEFAULT_ALPHA = {Algorithm.HT: 0.0, Algorithm.HD: 0.5, Algorithm.HI: None, Algorithm.KD: 1.0}


class StudentKind(str, Enum):
    BRM = "BRM"
    P_BRM = "P-BRM"
    E_BRM = "E-BRM"
    EP_BRM = "EP-BRM"

    @property
    def pruned(self) -> bool:
        return self in (StudentKind.P_BRM, StudentKind.EP_BRM)

    @property
    def edge(self) -> bool:
        return self in (StudentKind.E_BRM, StudentKind.EP_BRM)


def build_targets(algorithm, y_true=None, teacher_scores=None, alpha: float | None = None) -> np.ndarray:
    algorithm = Algorithm(algorithm)
    if algorithm in (Algorithm.HT, Algorithm.HD) and y_true is None:
        raise SpecError(f"{algorithm.value} needs the true labels")
    if algorithm is not Algorithm.HT and teacher_scores is None:
        raise SpecError(f"{algorithm.value} needs teacher scores")
    p = None if y_true is None else np.asarray(y_true, dtype=np.float64)
    q = None if teacher_scores is None else np.clip(np.asarray(teacher_scores, dtype=np.float64), 0.0, 1.0)
    if algorithm is Algorithm.HT:
        return p.copy()
    if algorithm is Algorithm.HI:
        return (q >= 0.5).astype(np.float64)
    a = DEFAULT_ALPHA[algorithm] if alpha is None else float(alpha)
    if algorithm is Algorithm.KD:
        if a != 1.0:
            raise SpecError("KD uses alpha = 1")
        return q.copy()
    if not 0.0 <= a <= 1.0:
        raise SpecError(f"alpha must be in [0, 1], got {a}")
    if p.shape != q.shape:
        raise SpecError("labels and teacher scores differ in length")
    return a * q + (1.0 - a) * p


@dataclass
class LearningInput:
    X: np.ndarray          # what the student trains on
    teacher_X: np.ndarray  # what the teacher scores, row-aligned with X
    rows: np.ndarray       # index into the local rows, for labels


def teacher_mask_for(case: int, student_mask: FeatureMask) -> FeatureMask:
    if case == 1:
        return student_mask
    return FeatureMask.all_active(len(student_mask))


def build_learning_input(case: int, X_local, student_mask: FeatureMask, seed: int = 0) -> LearningInput:
    if case not in CASES:
        raise SpecError(f"case must be one of {CASES}, got {case}")
    X_local = np.asarray(X_local, dtype=np.float64)
    n = len(X_local)
    masked = apply_mask(X_local, student_mask)
    teacher_X = apply_mask(X_local, teacher_mask_for(case, student_mask))
    rows = np.arange(n)
    if case in (1, 2):
        return LearningInput(masked, teacher_X, rows)
    if case == 3:
        return LearningInput(X_local.copy(), teacher_X, rows)
    perm = np.random.default_rng(seed).permutation(2 * n)
    X = np.vstack([masked, X_local])[perm]
    return LearningInput(X, np.vstack([teacher_X, teacher_X])[perm], np.concatenate([rows, rows])[perm])


@dataclass
class FineTuneSpec:
    algorithm: Algorithm
    alpha: float | None = None
    case: int = 2
    student_mask: FeatureMask | None = None
    teacher_mask: FeatureMask | None = None
    local_categories: tuple[str, ...] = DEFAULT_LOCAL_CATEGORIES
    train_config: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0

    def __post_init__(self):
        self.algorithm = Algorithm(self.algorithm)
        if self.case not in CASES:
            raise SpecError(f"case must be one of {CASES}, got {self.case}")
        if self.algorithm is Algorithm.HI and self.alpha is not None:
            raise SpecError("HI takes no alpha")
        if self.alpha is not None and not 0.0 <= self.alpha <= 1.0:
            raise SpecError("alpha must be in [0, 1]")
        if self.algorithm in (Algorithm.HT, Algorithm.KD) and self.alpha not in (None, DEFAULT_ALPHA[self.algorithm]):
            raise SpecError(f"{self.algorithm.value} has fixed alpha {DEFAULT_ALPHA[self.algorithm]}")
        self.local_categories = tuple(self.local_categories)
        if not self.local_categories:
            raise SpecError("local_categories must be non-empty")

    def resolve_masks(self, n_features: int) -> tuple[FeatureMask, FeatureMask]:
        student = self.student_mask or FeatureMask.all_active(n_features)
        if len(student) != n_features:
            raise SpecError("student mask length does not match the dataset")
        expected = teacher_mask_for(self.case, student)
        if self.teacher_mask is not None and self.teacher_mask != expected:
            which = "equal the student mask" if self.case == 1 else "be all-active"
            raise SpecError(f"case {self.case}: teacher mask must {which}")
        return student, expected

    @property
    def effective_alpha(self) -> float | None:
        return DEFAULT_ALPHA[self.algorithm] if self.alpha is None else self.alpha


@dataclass
class EvalReport:
    global_accuracy: float
    per_category_accuracy: dict[str, float]
    per_category_count: dict[str, int]
    historical_accuracy: float
    historical_loss: float
    brm_historical_accuracy: float
    teacher_global_accuracy: float
    student_pre_global_accuracy: float
    student_pre_historical_loss: float
    local_categories: tuple[str, ...]
    epochs_run: int = 0

    def recompute_historical_loss(self) -> float:
        hist = [c for c in self.per_category_accuracy if c not in self.local_categories]
        n = sum(self.per_category_count[c] for c in hist)
        acc = sum(self.per_category_accuracy[c] * self.per_category_count[c] for c in hist) / n
        return max(0.0, self.brm_historical_accuracy - acc)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["local_categories"] = list(self.local_categories)
        return d


@dataclass
class _Scores:
    global_accuracy: float
    per_category_accuracy: dict[str, float]
    per_category_count: dict[str, int]
    historical_accuracy: float


def _score(model: Mlp, mask: FeatureMask, ds: Dataset, local: Sequence[str]) -> _Scores:
    test = ds.rows("test")
    if test.size == 0:
        raise EvaluationError("dataset has no test rows")
    X = apply_mask(ds.X[test], mask)
    y, cats = ds.y[test], ds.category[test].astype(str)
    correct = predict(model, X) == y
    per_acc, per_n = {}, {}
    for c in sorted(set(cats.tolist())):
        sel = cats == c
        per_n[c] = int(sel.sum())
        per_acc[c] = np.count_nonzero(correct[sel]) / per_n[c]
    hist = ~np.isin(cats, list(local))
    if not hist.any():
        raise EvaluationError(f"no historical test rows outside {sorted(local)}")
    return _Scores(
        np.count_nonzero(correct) / len(y), per_acc, per_n, np.count_nonzero(correct[hist]) / int(hist.sum())
    )


def fine_tune(
    teacher: Mlp, student: Mlp, spec: FineTuneSpec, dataset: Dataset, brm: Mlp | None = None
) -> tuple[Mlp, EvalReport]:
    """Fine-tune a copy of ``student`` on the local categories and evaluate it.

    The teacher stays frozen; its scores are computed once on the case's
    teacher input. Evaluation uses the whole test split with the student's
    deployment mask. Historical loss is measured against ``brm`` (default:
    the teacher) evaluated on full features, and clamped at zero.
    """
    F = dataset.n_features
    if student.n_inputs != F or teacher.n_inputs != F:
        raise SpecError(f"models must take all {F} dataset features (masking, not truncation)")
    student_mask, _ = spec.resolve_masks(F)
    local = spec.local_categories
    brm = brm or teacher
    full = FeatureMask.all_active(F)

    brm_scores = _score(brm, full, dataset, local)
    teacher_scores = _score(teacher, teacher_mask_for(spec.case, student_mask), dataset, local)
    pre = _score(student, student_mask, dataset, local)

    def loss(s: _Scores) -> float:
        return max(0.0, brm_scores.historical_accuracy - s.historical_accuracy)

    model = student.copy()
    parts = []
    for split in ("train", "val"):
        idx = category_rows(dataset, local, split)
        inp = build_learning_input(spec.case, dataset.X[idx], student_mask, spec.seed)
        q = forward(teacher, inp.teacher_X) if spec.algorithm is not Algorithm.HT else None
        targets = build_targets(spec.algorithm, dataset.y[idx][inp.rows], q, spec.effective_alpha)
        parts.append((inp.X, targets))
    (X_tr, t_tr), (X_va, t_va) = parts
    report = train(model, X_tr, t_tr, X_va, t_va, spec.train_config)

    post = _score(model, student_mask, dataset, local)
    model.metadata["fine_tune"] = {
        "algorithm": spec.algorithm.value,
        "alpha": spec.effective_alpha,
        "case": spec.case,
        "subset_id": student_mask.subset_id,
        "local_categories": list(local),
    }
    return model, EvalReport(
        global_accuracy=post.global_accuracy,
        per_category_accuracy=post.per_category_accuracy,
        per_category_count=post.per_category_count,
        historical_accuracy=post.historical_accuracy,
        historical_loss=loss(post),
        brm_historical_accuracy=brm_scores.historical_accuracy,
        teacher_global_accuracy=teacher_scores.global_accuracy,
        student_pre_global_accuracy=pre.global_accuracy,
        student_pre_historical_loss=loss(pre),
        local_categories=tuple(local),
        epochs_run=report.epochs_run,
    )


# scenario grid


def build_student(kind: StudentKind, teacher: Mlp, prune_ratio: float) -> Mlp:
    kind = StudentKind(kind)
    if kind.pruned:
        return prune_neurons(teacher, prune_ratio)[0]
    return teacher.copy()


@dataclass
class LeaderboardRow:
    model_kind: str
    case: int
    algorithm: str
    feature_ratio: float
    prune_ratio: float
    subset_id: str
    status: str
    reason: str = ""
    report: EvalReport | None = None
    wall_clock_s: float = 0.0


def scenario_sweep(
    teacher: Mlp,
    dataset: Dataset,
    masks: dict[float, FeatureMask],
    kinds: Iterable = tuple(StudentKind),
    cases: Iterable[int] = CASES,
    algorithms: Iterable = tuple(Algorithm),
    prune_ratio: float = 0.15,
    train_config: TrainConfig = TrainConfig(),
    local_categories: Sequence[str] = DEFAULT_LOCAL_CATEGORIES,
    seed: int = 0,
    jobs: int = 1,
) -> list[LeaderboardRow]:
    """Run every (student kind, case, algorithm, feature ratio) cell.

    ``masks`` maps each feature ratio to the edge deployment mask. Centralized
    students (BRM, P-BRM) only run case 2 with full features, once; their
    other cells are recorded as skipped. A failing cell is recorded and the
    sweep continues. Rows come back in grid order whatever ``jobs`` is.
    """
    kinds = [StudentKind(k) for k in kinds]
    cases = list(cases)
    algorithms = [Algorithm(a) for a in algorithms]
    ratios = sorted(masks)
    F = dataset.n_features
    students = {k: build_student(k, teacher, prune_ratio) for k in kinds}

    cells = []
    for kind in kinds:
        for ratio in ratios:
            for case in cases:
                for alg in algorithms:
                    mask = masks[ratio] if kind.edge else FeatureMask.all_active(F)
                    row = LeaderboardRow(
                        kind.value, case, alg.value, ratio if kind.edge else 1.0,
                        prune_ratio if kind.pruned else 0.0, mask.subset_id, "pending",
                    )
                    if not kind.edge and case != 2:
                        row.status, row.reason = "skipped", "centralized students use case 2 only"
                    elif not kind.edge and ratio != ratios[0]:
                        row.status, row.reason = "skipped", "centralized students ignore the feature ratio"
                    cells.append((row, kind, mask))

    def run(cell):
        row, kind, mask = cell
        if row.status == "skipped":
            return row
        spec = FineTuneSpec(Algorithm(row.algorithm), None, row.case, mask, None, tuple(local_categories), train_config, seed)
        t0 = time.perf_counter()
        try:
            _, row.report = fine_tune(teacher, students[kind], spec, dataset)
            row.status = "ok"
        except AdaptError as exc:
            row.status, row.reason = "failed", str(exc)
        row.wall_clock_s = time.perf_counter() - t0
        return row

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(run, cells))
    return [run(c) for c in cells]


LEADERBOARD_COLUMNS = [
    "model_kind",
    "case",
    "algorithm",
    "feature_ratio",
    "prune_ratio",
    "subset_id",
    "status",
    "reason",
    "global_accuracy",
    "historical_loss",
    "historical_accuracy",
    "teacher_global_accuracy",
    "brm_historical_accuracy",
    "student_pre_global_accuracy",
    "student_pre_historical_loss",
    "epochs_run",
    "wall_clock_s",
]
TIMING_COLUMNS = ("wall_clock_s",)


def write_leaderboard_csv(rows: Sequence[LeaderboardRow], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LEADERBOARD_COLUMNS)
        for r in rows:
            rep = r.report
            metrics = (
                [
                    repr(rep.global_accuracy),
                    repr(rep.historical_loss),
                    repr(rep.historical_accuracy),
                    repr(rep.teacher_global_accuracy),
                    repr(rep.brm_historical_accuracy),
                    repr(rep.student_pre_global_accuracy),
                    repr(rep.student_pre_historical_loss),
                    rep.epochs_run,
                ]
                if rep
                else [""] * 8
            )
            w.writerow(
                [r.model_kind, r.case, r.algorithm, repr(r.feature_ratio), repr(r.prune_ratio), r.subset_id,
                 r.status, r.reason, *metrics, f"{r.wall_clock_s:.3f}"]
            )
    return path
