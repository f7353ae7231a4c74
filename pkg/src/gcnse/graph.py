"""Dynamic graph container, adjacency normalization, node splits and text I/O."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

FORMAT_MAGIC = "DYNGRAPH"
FORMAT_VERSION = "v1"


class GraphFormatError(ValueError):
    """Raised when a graph file cannot be parsed."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def canonical_edges(edges: Iterable[Sequence[int]] | np.ndarray, n: int) -> np.ndarray:
    """Return edges as a sorted, de-duplicated (E, 2) int64 array with u < v.

    Self-loops are dropped; out-of-range endpoints raise ``ValueError``.
    """
    arr = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges, dtype=np.int64)
    if arr.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    arr = arr.reshape(-1, 2)
    if arr.min() < 0 or arr.max() >= n:
        bad = arr[(arr < 0).any(axis=1) | (arr >= n).any(axis=1)][0]
        raise ValueError(f"edge ({bad[0]}, {bad[1]}) out of range for {n} nodes")
    arr = np.sort(arr, axis=1)
    arr = arr[arr[:, 0] != arr[:, 1]]
    if arr.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    return np.unique(arr, axis=0)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DynamicGraph:
    """Ordered snapshots over a fixed node set.

    ``snapshots[t]`` is an (E_t, 2) array of undirected edges stored with
    ``u < v``; ``labels[t]`` holds one class index per node; ``attributes``
    is either ``None`` or one (N, F) matrix per timestep.
    """

    num_nodes: int
    num_classes: int
    snapshots: tuple[np.ndarray, ...]
    labels: tuple[np.ndarray, ...]
    attributes: tuple[np.ndarray, ...] | None = None

    def __post_init__(self):
        n, c = self.num_nodes, self.num_classes
        if n < 1 or c < 1:
            raise ValueError("num_nodes and num_classes must be >= 1")
        if len(self.snapshots) < 1:
            raise ValueError("a dynamic graph needs at least one snapshot")
        if len(self.labels) != len(self.snapshots):
            raise ValueError("one label vector per timestep is required")
        snaps = tuple(_frozen(canonical_edges(e, n)) for e in self.snapshots)
        labels = []
        for lab in self.labels:
            lab = np.asarray(lab, dtype=np.int64)
            if lab.shape != (n,):
                raise ValueError(f"label vector must have length {n}")
            if lab.min() < 0 or lab.max() >= c:
                raise ValueError(f"labels must lie in [0, {c})")
            labels.append(_frozen(lab))
        object.__setattr__(self, "snapshots", snaps)
        object.__setattr__(self, "labels", tuple(labels))
        if self.attributes is not None:
            attrs = tuple(_frozen(np.asarray(x, dtype=np.float64)) for x in self.attributes)
            if len(attrs) != len(snaps):
                raise ValueError("one attribute matrix per timestep is required")
            widths = {x.shape for x in attrs}
            if len(widths) != 1 or next(iter(widths))[0] != n or attrs[0].ndim != 2:
                raise ValueError("attribute matrices must all be N x F with the same F")
            if attrs[0].shape[1] == 0:
                attrs = None
            object.__setattr__(self, "attributes", attrs)

    @property
    def num_timesteps(self) -> int:
        return len(self.snapshots)

    @property
    def num_attributes(self) -> int:
        return 0 if self.attributes is None else self.attributes[0].shape[1]

    @property
    def final_labels(self) -> np.ndarray:
        return self.labels[-1]

    def replace(self, **changes) -> "DynamicGraph":
        kwargs = dict(
            num_nodes=self.num_nodes,
            num_classes=self.num_classes,
            snapshots=self.snapshots,
            labels=self.labels,
            attributes=self.attributes,
        )
        kwargs.update(changes)
        return DynamicGraph(**kwargs)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DynamicGraph):
            return NotImplemented
        if (self.num_nodes, self.num_classes, self.num_timesteps) != (
            other.num_nodes,
            other.num_classes,
            other.num_timesteps,
        ):
            return False
        if (self.attributes is None) != (other.attributes is None):
            return False
        for a, b in zip(self.snapshots, other.snapshots):
            if not np.array_equal(a, b):
                return False
        for a, b in zip(self.labels, other.labels):
            if not np.array_equal(a, b):
                return False
        if self.attributes is not None:
            for a, b in zip(self.attributes, other.attributes):
                if not np.array_equal(a, b):
                    return False
        return True

    __hash__ = None


def adjacency(edges: np.ndarray, n: int, weights: np.ndarray | None = None) -> sp.csr_matrix:
    """Symmetric (unnormalized) adjacency without self-loops."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= n):
        raise ValueError(f"edge endpoint out of range for {n} nodes")
    w = np.ones(len(edges)) if weights is None else np.asarray(weights, dtype=np.float64)
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    vals = np.concatenate([w, w])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _sym_normalize(a: sp.spmatrix) -> sp.csr_matrix:
    n = a.shape[0]
    a_tilde = (a + sp.identity(n, format="csr")).tocsr()
    deg = np.asarray(a_tilde.sum(axis=1)).ravel()
    d_inv_sqrt = sp.diags(1.0 / np.sqrt(deg))
    out = (d_inv_sqrt @ a_tilde @ d_inv_sqrt).tocsr()
    out.sort_indices()
    return out


def normalize(edges: Iterable[Sequence[int]] | np.ndarray, n: int) -> sp.csr_matrix:
    """D^-1/2 (A + I) D^-1/2 for an undirected, unweighted edge list."""
    arr = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges, dtype=np.int64)
    arr = arr.reshape(-1, 2)
    if arr.size and (arr.min() < 0 or arr.max() >= n):
        raise ValueError(f"edge endpoint out of range for {n} nodes")
    return _sym_normalize(adjacency(canonical_edges(arr, n), n))


def accumulate(graph: DynamicGraph) -> sp.csr_matrix:
    """Normalized sum of all snapshot adjacencies; multiplicities act as weights."""
    n = graph.num_nodes
    total = sp.csr_matrix((n, n))
    for edges in graph.snapshots:
        total = total + adjacency(edges, n)
    return _sym_normalize(total)


def one_hot_features(n: int) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    return np.eye(n)


@dataclass(frozen=True)
class NodeSplit:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    seed: int | None = field(default=None)


def split_nodes(
    n: int,
    ratios: tuple[float, float, float] = (0.7, 0.2, 0.1),
    seed: int | None = None,
) -> NodeSplit:
    """Uniform random train/val/test partition.

    Train and val sizes are floored; test takes the remainder.
    """
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ValueError("ratios must be three positive numbers")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)}")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = math.floor(ratios[0] * n + 1e-9)
    n_val = math.floor(ratios[1] * n + 1e-9)
    return NodeSplit(
        train=_frozen(np.sort(perm[:n_train])),
        val=_frozen(np.sort(perm[n_train : n_train + n_val])),
        test=_frozen(np.sort(perm[n_train + n_val :])),
        seed=seed,
    )


# ---------------------------------------------------------------------------
# text format


def dumps_graph(graph: DynamicGraph) -> str:
    f = graph.num_attributes
    lines = [
        f"{FORMAT_MAGIC} {FORMAT_VERSION} nodes={graph.num_nodes} classes={graph.num_classes} "
        f"timesteps={graph.num_timesteps} attrs={f}"
    ]
    for t in range(graph.num_timesteps):
        lines.append(f"T{t}")
        lines.extend(f"L {i} {c}" for i, c in enumerate(graph.labels[t].tolist()))
        lines.extend(f"E {u} {v}" for u, v in graph.snapshots[t].tolist())
        if f:
            for i, row in enumerate(graph.attributes[t].tolist()):
                lines.append(f"X {i} " + " ".join(repr(x) for x in row))
    return "\n".join(lines) + "\n"


def save_graph(graph: DynamicGraph, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_graph(graph))


def _parse_int(tok: str, lineno: int, what: str) -> int:
    try:
        return int(tok)
    except ValueError:
        raise GraphFormatError(f"expected integer {what}, got {tok!r}", lineno) from None


def loads_graph(text: str) -> DynamicGraph:
    lines = text.splitlines()
    if not lines:
        raise GraphFormatError("empty file", 1)
    head = lines[0].split()
    if len(head) != 6 or head[0] != FORMAT_MAGIC or head[1] != FORMAT_VERSION:
        raise GraphFormatError(f"malformed header {lines[0]!r}", 1)
    meta = {}
    for tok, key in zip(head[2:], ("nodes", "classes", "timesteps", "attrs")):
        k, sep, v = tok.partition("=")
        if not sep or k != key:
            raise GraphFormatError(f"expected {key}=<int> in header, got {tok!r}", 1)
        meta[key] = _parse_int(v, 1, key)
    n, c, n_t, f = meta["nodes"], meta["classes"], meta["timesteps"], meta["attrs"]
    if n < 1 or c < 1 or n_t < 1 or f < 0:
        raise GraphFormatError("header counts out of range", 1)

    edges: list[list[tuple[int, int]]] = []
    labels: list[np.ndarray] = []
    attrs: list[np.ndarray] = []
    seen_l: list[np.ndarray] = []
    seen_x: list[np.ndarray] = []
    block_start: list[int] = []

    for lineno, raw in enumerate(lines[1:], start=2):
        toks = raw.split()
        if not toks:
            continue
        tag = toks[0]
        if tag.startswith("T") and len(toks) == 1:
            t = _parse_int(tag[1:], lineno, "timestep")
            if t != len(edges):
                raise GraphFormatError(f"expected block T{len(edges)}, got {tag}", lineno)
            if t >= n_t:
                raise GraphFormatError(f"timestep count mismatch: header says {n_t}", lineno)
            edges.append([])
            labels.append(np.zeros(n, dtype=np.int64))
            seen_l.append(np.zeros(n, dtype=bool))
            attrs.append(np.zeros((n, f)))
            seen_x.append(np.zeros(n, dtype=bool))
            block_start.append(lineno)
            continue
        if not edges:
            raise GraphFormatError(f"record {tag!r} before first timestep block", lineno)
        if tag == "L":
            if len(toks) != 3:
                raise GraphFormatError("label line needs 'L i c'", lineno)
            i, cls = _parse_int(toks[1], lineno, "node"), _parse_int(toks[2], lineno, "class")
            if not 0 <= i < n:
                raise GraphFormatError(f"node index {i} out of range", lineno)
            if not 0 <= cls < c:
                raise GraphFormatError(f"class {cls} out of range", lineno)
            labels[-1][i] = cls
            seen_l[-1][i] = True
        elif tag == "E":
            if len(toks) != 3:
                raise GraphFormatError("edge line needs 'E u v'", lineno)
            u, v = _parse_int(toks[1], lineno, "node"), _parse_int(toks[2], lineno, "node")
            if not (0 <= u < n and 0 <= v < n):
                raise GraphFormatError(f"edge ({u}, {v}) out of range for {n} nodes", lineno)
            edges[-1].append((u, v))
        elif tag == "X":
            if f == 0:
                raise GraphFormatError("attribute line in a graph without attributes", lineno)
            if len(toks) != f + 2:
                raise GraphFormatError(f"attribute line needs {f} values", lineno)
            i = _parse_int(toks[1], lineno, "node")
            if not 0 <= i < n:
                raise GraphFormatError(f"node index {i} out of range", lineno)
            try:
                attrs[-1][i] = [float(x) for x in toks[2:]]
            except ValueError:
                raise GraphFormatError("non-numeric attribute value", lineno) from None
            seen_x[-1][i] = True
        else:
            raise GraphFormatError(f"unknown record type {tag!r}", lineno)

    if len(edges) != n_t:
        raise GraphFormatError(f"timestep count mismatch: header says {n_t}, found {len(edges)}", len(lines))
    for t in range(n_t):
        if not seen_l[t].all():
            raise GraphFormatError(f"block T{t} is missing labels", block_start[t])
        if f and not seen_x[t].all():
            raise GraphFormatError(f"block T{t} is missing attributes", block_start[t])
    return DynamicGraph(
        num_nodes=n,
        num_classes=c,
        snapshots=tuple(np.asarray(e, dtype=np.int64).reshape(-1, 2) for e in edges),
        labels=tuple(labels),
        attributes=tuple(attrs) if f else None,
    )


def load_graph(path: str | os.PathLike) -> DynamicGraph:
    with open(path, encoding="utf-8") as fh:
        return loads_graph(fh.read())
