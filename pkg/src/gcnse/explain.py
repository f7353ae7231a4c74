"""Snapshot importance by masking, and temporal patterns in attention weights.

Importance of timestep k is the drop in accuracy of a model whose snapshot
weights are frozen to W when W_k is set to zero. Every mask is trained with
the same seed set as the unmasked reference, so differences are paired.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .graph import DynamicGraph
from .model import PreparedGraph, TrainConfig, WeightingScheme, evaluate_split, prepare, train
from .runner import derive_seeds, run_many

NOISE_TOLERANCE = 0.02


@dataclass(frozen=True)
class AttentionRuns:
    mean: np.ndarray
    runs: np.ndarray
    test_accuracy: np.ndarray
    seeds: tuple[int, ...]


def _attention_task(args):
    prepared, config, scheme, seed = args
    res = train(prepared, config, seed=seed, scheme=scheme)
    acc = evaluate_split(res.params, prepared, res.split.test).accuracy
    return res.attention, acc


def attention_runs(
    graph: DynamicGraph | PreparedGraph,
    config: TrainConfig = TrainConfig(),
    num_runs: int = 20,
    seed: int | None = 0,
    scheme: WeightingScheme = WeightingScheme("se"),
    workers: int | None = None,
) -> AttentionRuns:
    """Train ``num_runs`` models with derived seeds (fresh split per run) and collect attention."""
    if num_runs < 1:
        raise ValueError("num_runs must be >= 1")
    prepared = graph if isinstance(graph, PreparedGraph) else prepare(graph)
    seeds = derive_seeds(seed, num_runs)
    out = run_many(_attention_task, [(prepared, config, scheme, s) for s in seeds], workers)
    runs = np.array([a for a, _ in out])
    return AttentionRuns(
        mean=runs.mean(axis=0),
        runs=runs,
        test_accuracy=np.array([acc for _, acc in out]),
        seeds=tuple(seeds),
    )


def average_attention(graph, config: TrainConfig = TrainConfig(), num_runs: int = 20, seed=0, workers=None) -> np.ndarray:
    return attention_runs(graph, config, num_runs, seed, workers=workers).mean


@dataclass(frozen=True)
class MaskedWeights:
    base: np.ndarray
    index: int

    @property
    def vector(self) -> np.ndarray:
        w = np.array(self.base, dtype=float)
        w[self.index] = 0.0
        return w


@dataclass(frozen=True)
class ImportanceVector:
    importance: np.ndarray
    reference_accuracy: float
    masked_accuracy: np.ndarray
    weights: np.ndarray
    runs_per_mask: int
    reference_runs: np.ndarray = field(repr=False)
    masked_runs: np.ndarray = field(repr=False)

    def rows(self) -> list[dict]:
        return [
            {"timestep": t, "weight": float(w), "m_k": float(mk), "I_k": float(i)}
            for t, (w, mk, i) in enumerate(zip(self.weights, self.masked_accuracy, self.importance))
        ]


def _frozen_task(args):
    prepared, config, weights, seed, eval_on = args
    res = train(prepared, config, seed=seed, scheme=WeightingScheme.frozen(weights))
    nodes = res.split.test if eval_on == "test" else res.split.val
    return evaluate_split(res.params, prepared, nodes).accuracy


def importance(
    graph: DynamicGraph | PreparedGraph,
    frozen_weights,
    config: TrainConfig = TrainConfig(),
    runs_per_mask: int = 20,
    seed: int | None = 0,
    workers: int | None = None,
    eval_on: str = "test",
) -> ImportanceVector:
    """Accuracy drop caused by zeroing each snapshot weight of a frozen-weight model."""
    if runs_per_mask < 1:
        raise ValueError("runs_per_mask must be >= 1")
    if eval_on not in ("test", "val"):
        raise ValueError("eval_on must be 'test' or 'val'")
    w = np.asarray(frozen_weights, dtype=float)
    if np.any(w < 0):
        raise ValueError("frozen weights must be nonnegative")
    prepared = graph if isinstance(graph, PreparedGraph) else prepare(graph)
    if len(w) != prepared.num_timesteps:
        raise ValueError("one weight per timestep is required")
    seeds = derive_seeds(seed, runs_per_mask)
    variants = [w] + [MaskedWeights(w, k).vector for k in range(len(w))]
    tasks = [(prepared, config, v, s, eval_on) for v in variants for s in seeds]
    accs = np.array(run_many(_frozen_task, tasks, workers)).reshape(len(variants), runs_per_mask)
    m = float(accs[0].mean())
    m_k = accs[1:].mean(axis=1)
    return ImportanceVector(
        importance=m - m_k,
        reference_accuracy=m,
        masked_accuracy=m_k,
        weights=w,
        runs_per_mask=runs_per_mask,
        reference_runs=accs[0],
        masked_runs=accs[1:],
    )


def attention_importance_correlation(weights, imp: ImportanceVector | np.ndarray) -> float:
    """Pearson correlation between a weight vector and snapshot importance."""
    i = imp.importance if isinstance(imp, ImportanceVector) else np.asarray(imp, dtype=float)
    w = np.asarray(weights, dtype=float)
    if len(w) < 3:
        raise metrics.UndefinedMetricError("correlation needs at least 3 timesteps")
    return metrics.pearson(w, i)


# ---------------------------------------------------------------------------
# temporal patterns


def autocorrelation(w, lag: int) -> float:
    """Correlation of the series with itself shifted by ``lag``, centred on the global mean."""
    w = np.asarray(w, dtype=float)
    if not 1 <= lag < len(w):
        raise ValueError(f"lag must lie in [1, {len(w)})")
    d = w - w.mean()
    head, tail = d[:-lag], d[lag:]
    denom = np.sqrt((head @ head) * (tail @ tail))
    if denom == 0:
        raise metrics.UndefinedMetricError("autocorrelation is undefined for a constant series")
    return float(head @ tail / denom)


def detect_period(w, threshold: float = 0.0, harmonic_tol: float = 0.05) -> int | None:
    """Fundamental period of ``w`` as an autocorrelation peak lag in [2, T//2], or None.

    A peak must beat the lag before it, match or beat the lag after it, and
    exceed ``threshold``; a monotone series has none. Multiples of the true
    period score almost as high as the period itself (sometimes higher, with
    fewer overlapping terms), so the smallest peak lag within
    ``harmonic_tol`` of the best peak wins.
    """
    w = np.asarray(w, dtype=float)
    max_lag = len(w) // 2
    if max_lag < 2:
        return None
    ac = {k: autocorrelation(w, k) for k in range(1, min(max_lag + 1, len(w) - 1) + 1)}
    peaks = [
        k for k in range(2, max_lag + 1)
        if ac[k] > ac[k - 1] and ac[k] >= ac.get(k + 1, -np.inf) and ac[k] > threshold
    ]
    if not peaks:
        return None
    top = max(ac[k] for k in peaks)
    return min(k for k in peaks if ac[k] >= top - harmonic_tol)


def detect_anomalies(w, k_sigma: float = 1.0) -> set[int]:
    """Steps whose weight falls more than ``k_sigma`` standard deviations below the mean."""
    w = np.asarray(w, dtype=float)
    if len(w) < 3:
        raise ValueError("anomaly detection needs at least 3 timesteps")
    sd = w.std()
    if sd == 0:
        return set()
    return {int(t) for t in np.flatnonzero(w < w.mean() - k_sigma * sd)}


def detect_transitions(w, jump_threshold: float = 1.0) -> set[int]:
    """Steps t >= 1 where the weight rises by more than ``jump_threshold`` standard deviations."""
    w = np.asarray(w, dtype=float)
    if len(w) < 3:
        raise ValueError("transition detection needs at least 3 timesteps")
    sd = w.std()
    if sd == 0:
        return set()
    return {int(t) + 1 for t in np.flatnonzero(np.diff(w) > jump_threshold * sd)}


# ---------------------------------------------------------------------------
# output


def write_importance(imp: ImportanceVector, csv_path: str | os.PathLike, json_path: str | os.PathLike | None = None,
                     correlation: float | None = None, extra: dict | None = None) -> None:
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["timestep", "weight", "m_k", "I_k"])
        writer.writeheader()
        for row in imp.rows():
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    if json_path is not None:
        payload = {
            "m": imp.reference_accuracy,
            "r": correlation,
            "runs_per_mask": imp.runs_per_mask,
            "rows": imp.rows(),
        }
        if extra:
            payload.update(extra)
        with open(json_path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
