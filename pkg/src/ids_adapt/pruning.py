"""Global L1-norm neuron pruning and magnitude-based connection pruning.

Only hidden neurons are prunable; the input and output layers keep their
width. Layers are numbered by their position in ``layer_sizes``, so hidden
layers are 1 .. len(layer_sizes) - 2 and neuron ``(L, j)`` owns column ``j``
of ``weights[L - 1]``, entry ``j`` of ``biases[L - 1]`` and row ``j`` of
``weights[L]``.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .exceptions import PruneError, RatioError
from .mlp import InferenceStats, Mlp, accuracy, measure_inference, memory_estimate

MODES = ("neurons", "connections")


@dataclass(frozen=True, order=True)
class NeuronNorm:
    norm: float
    layer: int
    index: int


@dataclass
class PruneReport:
    ratio: float
    mode: str
    removed: list[tuple[int, int]] | int
    parent_params: int
    pruned_params: int
    nonzero_params: int
    memory_bytes: int = 0
    accuracy: float | None = None
    inference: InferenceStats | None = None
    error: str | None = None
    layer_sizes: list[int] = field(default_factory=list)

    @property
    def n_removed(self) -> int:
        return self.removed if isinstance(self.removed, int) else len(self.removed)


def _check_ratio(ratio: float) -> None:
    if not 0 < ratio < 1:
        raise RatioError(f"pruning ratio must be in (0, 1), got {ratio}")


def removal_count(total: int, ratio: float) -> int:
    """``floor(total * ratio)``, tolerant of binary round-off such as 0.29 * 100."""
    return int(math.floor(total * ratio + 1e-9))


def neuron_l1_norms(model: Mlp, include_bias: bool = True) -> list[NeuronNorm]:
    """L1 norm of each hidden neuron's incoming weights (plus |bias|), ascending."""
    if len(model.layer_sizes) < 3:
        raise PruneError("model has no hidden layer")
    norms = []
    for h in range(len(model.layer_sizes) - 2):
        col = np.abs(model.weights[h]).sum(axis=0)
        if include_bias:
            col = col + np.abs(model.biases[h])
        norms.extend(NeuronNorm(float(v), h + 1, j) for j, v in enumerate(col))
    return sorted(norms)


def remove_neurons(model: Mlp, removed: Sequence[tuple[int, int]]) -> Mlp:
    """Physically delete the given hidden neurons and every incident weight.

    All deletions are applied in one pass from the removal set, so the order
    of ``removed`` does not matter. The parent is left untouched.
    """
    sizes = model.layer_sizes
    drop: dict[int, set[int]] = {}
    for layer, idx in removed:
        if not 1 <= layer <= len(sizes) - 2 or not 0 <= idx < sizes[layer]:
            raise PruneError(f"neuron ({layer}, {idx}) is not a hidden neuron")
        drop.setdefault(layer, set()).add(idx)
    keep = [np.arange(s) for s in sizes]
    for layer, idxs in drop.items():
        keep[layer] = np.array([j for j in range(sizes[layer]) if j not in idxs], dtype=np.intp)
        if keep[layer].size == 0:
            raise PruneError(f"pruning would remove every neuron of hidden layer {layer}")
    weights = [model.weights[i][np.ix_(keep[i], keep[i + 1])] for i in range(len(model.weights))]
    biases = [model.biases[i][keep[i + 1]] for i in range(len(model.biases))]
    return Mlp([k.size for k in keep], weights, biases, model.rng_seed, dict(model.metadata))


def prune_neurons(model: Mlp, ratio: float, include_bias: bool = True) -> tuple[Mlp, PruneReport]:
    """Remove the ``floor(N * ratio)`` hidden neurons with the smallest norms, globally."""
    _check_ratio(ratio)
    norms = neuron_l1_norms(model, include_bias)
    d = removal_count(len(norms), ratio)
    removed = [(n.layer, n.index) for n in norms[:d]]
    pruned = remove_neurons(model, removed)
    pruned.metadata["pruning"] = {"mode": "neurons", "ratio": ratio, "removed": d}
    report = PruneReport(
        ratio, "neurons", removed, model.n_params, pruned.n_params, pruned.n_nonzero_params(),
        memory_estimate(pruned), layer_sizes=list(pruned.layer_sizes),
    )
    return pruned, report


def prune_connections(model: Mlp, ratio: float) -> tuple[Mlp, PruneReport]:
    """Zero the ``floor(W * ratio)`` smallest-magnitude weights across all weight matrices.

    Biases are left alone and shapes do not change. Ties go to the earlier
    matrix, then the earlier row-major position.
    """
    _check_ratio(ratio)
    flat = np.concatenate([np.abs(w).ravel() for w in model.weights])
    d = removal_count(flat.size, ratio)
    order = np.argsort(flat, kind="stable")[:d]
    zeroed = np.zeros(flat.size, dtype=bool)
    zeroed[order] = True
    pruned = model.copy()
    start = 0
    for w in pruned.weights:
        part = zeroed[start : start + w.size].reshape(w.shape)
        w[part] = 0.0
        start += w.size
    pruned.metadata["pruning"] = {"mode": "connections", "ratio": ratio, "removed": d}
    report = PruneReport(
        ratio, "connections", d, model.n_params, pruned.n_params, pruned.n_nonzero_params(),
        memory_estimate(pruned), layer_sizes=list(pruned.layer_sizes),
    )
    return pruned, report


def prune(model: Mlp, ratio: float, mode: str = "neurons") -> tuple[Mlp, PruneReport]:
    if mode == "neurons":
        return prune_neurons(model, ratio)
    if mode == "connections":
        return prune_connections(model, ratio)
    raise ValueError(f"unknown pruning mode {mode!r}; expected one of {MODES}")


def default_ratios(step: float = 0.05, stop: float = 0.95) -> list[float]:
    n = int(round(stop / step))
    return [round(step * i, 10) for i in range(1, n + 1)]


def prune_sweep(
    model: Mlp,
    ratios: Sequence[float],
    mode: str,
    X_val,
    y_val,
    repetitions: int = 3,
    max_samples: int = 200,
    measure: bool = True,
    jobs: int = 1,
) -> list[PruneReport]:
    """Prune at every ratio, score accuracy and (serially) inference cost.

    Ratio 0 is accepted as a sentinel for the unpruned parent. A ratio whose
    pruning fails is reported with ``error`` set and the sweep continues.
    """
    if not ratios:
        raise RatioError("ratios must be non-empty")
    ratios = sorted(float(r) for r in ratios)

    def one(ratio: float) -> tuple[Mlp | None, PruneReport]:
        if ratio == 0.0:
            m = model.copy()
            rep = PruneReport(0.0, mode, [] if mode == "neurons" else 0, model.n_params, model.n_params,
                              model.n_nonzero_params(), memory_estimate(m), layer_sizes=list(m.layer_sizes))
        else:
            try:
                m, rep = prune(model, ratio, mode)
            except (PruneError, RatioError) as exc:
                return None, PruneReport(ratio, mode, 0, model.n_params, 0, 0, error=str(exc))
        rep.accuracy = accuracy(m, X_val, y_val)
        return m, rep

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, ratios))
    else:
        results = [one(r) for r in ratios]
    # timing runs one model at a time to avoid contention skew
    if measure:
        for m, rep in results:
            if m is not None:
                rep.inference = measure_inference(m, X_val, repetitions, max_samples)
    return [rep for _, rep in results]


PRUNE_COLUMNS = ["ratio", "mode", "params", "nonzero_params", "accuracy", "memory_bytes", "mean_ns_per_sample", "error"]
TIMING_COLUMNS = ("mean_ns_per_sample",)


def write_prune_csv(reports: Sequence[PruneReport], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PRUNE_COLUMNS)
        for r in reports:
            if r.error:
                w.writerow([repr(r.ratio), r.mode, "", "", "", "", "", r.error])
                continue
            ns = f"{r.inference.mean_ns_per_sample:.1f}" if r.inference else ""
            w.writerow([repr(r.ratio), r.mode, r.pruned_params, r.nonzero_params, repr(r.accuracy), r.memory_bytes, ns, ""])
    return path
