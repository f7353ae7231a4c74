"""Dynamic stochastic block model generator and snapshot manipulations."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .graph import DynamicGraph


@dataclass(frozen=True)
class GenParams:
    num_nodes: int = 200
    num_classes: int = 4
    num_timesteps: int = 10
    p_intra: float = 0.10
    p_inter: float = 0.005
    # entry t is the chance a node switches class between t-1 and t; entry 0 is ignored
    transition_prob: tuple[float, ...] | None = None
    seed: int | None = None

    def __post_init__(self):
        if min(self.num_nodes, self.num_classes, self.num_timesteps) < 1:
            raise ValueError("num_nodes, num_classes and num_timesteps must be >= 1")
        if self.transition_prob is None:
            object.__setattr__(self, "transition_prob", (0.05,) * self.num_timesteps)
        tp = tuple(float(p) for p in self.transition_prob)
        if len(tp) != self.num_timesteps:
            raise ValueError("transition_prob must have one entry per timestep")
        object.__setattr__(self, "transition_prob", tp)
        for p in (self.p_intra, self.p_inter, *tp):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"probability {p} outside [0, 1]")


def _pairs(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(n, k=1)


def sample_sbm(labels: np.ndarray, p_intra: float, p_inter: float, rng: np.random.Generator) -> np.ndarray:
    """One snapshot: each unordered pair is an edge with p_intra (same class) or p_inter."""
    iu, ju = _pairs(len(labels))
    prob = np.where(labels[iu] == labels[ju], p_intra, p_inter)
    keep = rng.random(len(iu)) < prob
    return np.stack([iu[keep], ju[keep]], axis=1).astype(np.int64)


def _drift(labels: np.ndarray, p: float, num_classes: int, rng: np.random.Generator) -> np.ndarray:
    out = labels.copy()
    if num_classes < 2:
        return out
    change = rng.random(len(labels)) < p
    # a shift in [1, C-1] lands uniformly on one of the other classes
    shift = rng.integers(1, num_classes, size=len(labels))
    out[change] = (labels[change] + shift[change]) % num_classes
    return out


def generate(params: GenParams) -> DynamicGraph:
    rng = np.random.default_rng(params.seed)
    n, c = params.num_nodes, params.num_classes
    labels = [rng.integers(0, c, size=n)]
    for t in range(1, params.num_timesteps):
        labels.append(_drift(labels[-1], params.transition_prob[t], c, rng))
    snapshots = [sample_sbm(lab, params.p_intra, params.p_inter, rng) for lab in labels]
    return DynamicGraph(num_nodes=n, num_classes=c, snapshots=tuple(snapshots), labels=tuple(labels))


def _check_steps(graph: DynamicGraph, timesteps: Iterable[int]) -> list[int]:
    steps = sorted(set(int(t) for t in timesteps))
    for t in steps:
        if not 0 <= t < graph.num_timesteps:
            raise ValueError(f"timestep {t} out of range")
    return steps


def delete_edges(graph: DynamicGraph, timesteps: Iterable[int], fraction: float, seed=None) -> DynamicGraph:
    """Remove floor(fraction * |E_t|) uniformly chosen edges at each listed step."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    snaps = list(graph.snapshots)
    for t in _check_steps(graph, timesteps):
        e = snaps[t]
        n_drop = int(np.floor(fraction * len(e)))
        drop = rng.choice(len(e), size=n_drop, replace=False)
        keep = np.ones(len(e), dtype=bool)
        keep[drop] = False
        snaps[t] = e[keep]
    return graph.replace(snapshots=tuple(snaps))


def densify(
    graph: DynamicGraph,
    timesteps: Iterable[int],
    classes: Iterable[int],
    p_intra_hi: float = 0.40,
    p_inter_hi: float = 0.10,
    seed=None,
    boost_between_listed: bool = False,
) -> DynamicGraph:
    """Regenerate the pairs involving boosted classes at the listed steps.

    Same-class pairs inside a boosted class get ``p_intra_hi`` and pairs with
    exactly one endpoint in a boosted class get ``p_inter_hi``. Pairs joining
    two different boosted classes keep their existing edges unless
    ``boost_between_listed`` is set, in which case they also use
    ``p_inter_hi``. Pairs touching no boosted class are left alone.
    """
    for p in (p_intra_hi, p_inter_hi):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"probability {p} outside [0, 1]")
    boosted = np.array(sorted(set(int(k) for k in classes)), dtype=np.int64)
    rng = np.random.default_rng(seed)
    n = graph.num_nodes
    iu, ju = _pairs(n)
    snaps = list(graph.snapshots)
    for t in _check_steps(graph, timesteps):
        lab = graph.labels[t]
        in_u, in_v = np.isin(lab[iu], boosted), np.isin(lab[ju], boosted)
        same = (lab[iu] == lab[ju]) & in_u
        one_side = in_u ^ in_v
        if boost_between_listed:
            one_side |= in_u & in_v & ~same
        regen = same | one_side
        prob = np.where(same, p_intra_hi, p_inter_hi)
        draw = rng.random(len(iu)) < prob
        present = np.where(regen, draw, _slot_mask(snaps[t], n))
        snaps[t] = np.stack([iu[present], ju[present]], axis=1)
    return graph.replace(snapshots=tuple(snaps))


def randomize_labels(
    graph: DynamicGraph,
    timesteps: Iterable[int],
    seed=None,
    p_intra: float = 0.10,
    p_inter: float = 0.005,
) -> DynamicGraph:
    """Give the listed steps fresh uniform labels and regenerate their edges from them."""
    steps = _check_steps(graph, timesteps)
    if graph.num_timesteps - 1 in steps:
        raise ValueError("the final timestep holds the prediction target and cannot be randomized")
    rng = np.random.default_rng(seed)
    snaps, labels = list(graph.snapshots), list(graph.labels)
    for t in steps:
        labels[t] = rng.integers(0, graph.num_classes, size=graph.num_nodes)
        snaps[t] = sample_sbm(labels[t], p_intra, p_inter, rng)
    return graph.replace(snapshots=tuple(snaps), labels=tuple(labels))


def _slot_mask(edges: np.ndarray, n: int) -> np.ndarray:
    """Boolean indicator over the row-major upper-triangle pair enumeration."""
    present = np.zeros(n * (n - 1) // 2, dtype=bool)
    if len(edges):
        u, v = edges[:, 0], edges[:, 1]
        present[u * n - u * (u + 1) // 2 + (v - u - 1)] = True
    return present


def flip_edges(edges: np.ndarray, n: int, flip_prob: float, rng: np.random.Generator) -> np.ndarray:
    iu, ju = _pairs(n)
    present = _slot_mask(edges, n) ^ (rng.random(len(iu)) < flip_prob)
    return np.stack([iu[present], ju[present]], axis=1)


def make_periodic(base: DynamicGraph, repeats: int, flip_prob: float = 0.01, seed=None) -> DynamicGraph:
    """Tile the base block ``repeats`` times, flipping each edge slot with ``flip_prob``."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    if not 0.0 <= flip_prob <= 1.0:
        raise ValueError("flip_prob must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    snaps, labels, attrs = [], [], []
    for _ in range(repeats):
        for t in range(base.num_timesteps):
            snaps.append(flip_edges(base.snapshots[t], base.num_nodes, flip_prob, rng))
            labels.append(base.labels[t])
            if base.attributes is not None:
                attrs.append(base.attributes[t])
    return base.replace(
        snapshots=tuple(snaps),
        labels=tuple(labels),
        attributes=tuple(attrs) if base.attributes is not None else None,
    )


def transition_schedule(num_timesteps: int, high_steps: Sequence[int], high: float = 0.80, low: float = 0.20):
    """Per-step label-change probabilities: ``high`` at the listed steps, ``low`` elsewhere."""
    sched = [low] * num_timesteps
    for t in high_steps:
        sched[t] = high
    return tuple(sched)
