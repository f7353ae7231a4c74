"""Small reverse-mode differentiation engine and the kernels the model needs.

Values are float64 numpy arrays of rank <= 2. A :class:`Tape` records each
primitive together with a closure mapping the output gradient to input
gradients; :func:`backward` replays the record in reverse.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

PROB_FLOOR = 1e-12


def _check_finite(a: np.ndarray, where: str) -> None:
    # a NaN or inf anywhere makes the sum non-finite
    if not np.isfinite(np.add.reduce(a, axis=None)) and not np.isfinite(a).all():
        raise FloatingPointError(f"non-finite values in {where}")


class Var:
    """A value recorded on a tape."""

    __slots__ = ("tape", "id", "value", "requires_grad")

    def __init__(self, tape: "Tape", id_: int, value: np.ndarray, requires_grad: bool):
        self.tape = tape
        self.id = id_
        self.value = value
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Var(id={self.id}, shape={self.shape})"


class Tape:
    """Records primitives for one forward pass.

    With ``enabled=False`` nothing is recorded, which keeps evaluation-only
    passes cheap.
    """

    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self._ops: list[tuple[int, tuple[Var, ...], Callable]] = []
        self._n = 0

    def _new(self, value: np.ndarray, requires_grad: bool) -> Var:
        v = Var(self, self._n, value, requires_grad)
        self._n += 1
        return v

    def leaf(self, value, requires_grad: bool = True) -> Var:
        value = np.asarray(value, dtype=np.float64)
        if value.ndim > 2:
            raise ValueError("tensors are limited to rank 2")
        _check_finite(value, "leaf")
        return self._new(value, requires_grad and self.enabled)

    def constant(self, value) -> Var:
        return self.leaf(value, requires_grad=False)

    def record(self, value: np.ndarray, inputs: Sequence[Var], grad_fn: Callable) -> Var:
        _check_finite(value, "op output")
        needs = self.enabled and any(x.requires_grad for x in inputs)
        out = self._new(value, needs)
        if needs:
            self._ops.append((out.id, tuple(inputs), grad_fn))
        return out

    def __len__(self) -> int:
        return len(self._ops)


def _same_tape(*xs: Var) -> Tape:
    tape = xs[0].tape
    for x in xs[1:]:
        if x.tape is not tape:
            raise ValueError("operands were recorded on different tapes")
    return tape


def backward(loss: Var, wrt: Sequence[Var] | None = None) -> dict[int, np.ndarray]:
    """Gradients of a scalar ``loss`` with respect to every recorded input.

    Returns a mapping from :attr:`Var.id` to gradient for every leaf reached;
    when ``wrt`` is given, exactly those ids (zeros for unreachable ones).
    """
    if loss.value.size != 1:
        raise ValueError("backward() needs a scalar loss")
    tape = loss.tape
    keep = set() if wrt is None else {w.id for w in wrt}
    grads: dict[int, np.ndarray] = {loss.id: np.ones_like(loss.value)}
    for out_id, inputs, grad_fn in reversed(tape._ops):
        g = grads.get(out_id) if out_id in keep else grads.pop(out_id, None)
        if g is None:
            continue
        in_grads = grad_fn(g)
        for x, gx in zip(inputs, in_grads):
            if gx is None or not x.requires_grad:
                continue
            if x.id in grads:
                grads[x.id] = grads[x.id] + gx
            else:
                grads[x.id] = gx
    if wrt is None:
        return grads
    return {w.id: grads.get(w.id, np.zeros_like(w.value)) for w in wrt}


# ---------------------------------------------------------------------------
# primitives


def matmul(a: Var, b: Var) -> Var:
    tape = _same_tape(a, b)
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch {a.shape} @ {b.shape}")
    av, bv = a.value, b.value
    return tape.record(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def spmm(matrix: sp.spmatrix, x: Var, transpose: sp.spmatrix | None = None) -> Var:
    """Constant sparse (or dense) matrix times a recorded dense value.

    ``transpose`` may carry a precomputed ``matrix.T`` (pass ``matrix`` itself
    when it is symmetric) to avoid converting it on every call.
    """
    if matrix.shape[1] != x.shape[0]:
        raise ValueError(f"spmm shape mismatch {matrix.shape} @ {x.shape}")
    if transpose is not None:
        mt = transpose
    else:
        mt = matrix.T.tocsr() if sp.issparse(matrix) else matrix.T
    out = matrix @ x.value
    return x.tape.record(np.asarray(out), (x,), lambda g: (np.asarray(mt @ g),))


def add(a: Var, b: Var) -> Var:
    tape = _same_tape(a, b)
    if a.shape != b.shape:
        raise ValueError(f"add shape mismatch {a.shape} vs {b.shape}")
    return tape.record(a.value + b.value, (a, b), lambda g: (g, g))


def add_row(x: Var, bias: Var) -> Var:
    """Broadcast a (1, k) row onto every row of x."""
    tape = _same_tape(x, bias)
    if bias.shape != (1, x.shape[1]):
        raise ValueError(f"bias shape {bias.shape} does not fit {x.shape}")
    return tape.record(x.value + bias.value, (x, bias), lambda g: (g, g.sum(axis=0, keepdims=True)))


def relu(x: Var) -> Var:
    mask = x.value > 0
    return x.tape.record(x.value * mask, (x,), lambda g: (g * mask,))


def sigmoid(x: Var) -> Var:
    s = 0.5 * (1.0 + np.tanh(0.5 * x.value))
    return x.tape.record(s, (x,), lambda g: (g * s * (1.0 - s),))


def softmax_rows(x: Var) -> Var:
    z = x.value - x.value.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)

    def grad(g):
        return (p * (g - (g * p).sum(axis=1, keepdims=True)),)

    return x.tape.record(p, (x,), grad)


def dropout_mask(shape: tuple[int, ...], rate: float, rng: np.random.Generator) -> np.ndarray:
    """Inverted-dropout multiplier: 0 with probability ``rate``, else 1/(1-rate)."""
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must lie in [0, 1)")
    if rate == 0.0:
        return np.ones(shape)
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def dropout(x: Var, rate: float, rng: np.random.Generator | int | None = None, training: bool = True) -> Var:
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must lie in [0, 1)")
    if not training or rate == 0.0:
        return x
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    return scale_by(x, dropout_mask(x.shape, rate, rng))


def scale_by(x: Var, factor: np.ndarray) -> Var:
    """Elementwise product with a constant array."""
    return x.tape.record(x.value * factor, (x,), lambda g: (g * factor,))


def concat_cols(a: Var, b: Var) -> Var:
    tape = _same_tape(a, b)
    k = a.shape[1]
    return tape.record(np.hstack([a.value, b.value]), (a, b), lambda g: (g[:, :k], g[:, k:]))


def block_mean(x: Var, num_blocks: int) -> Var:
    """Mean of each of ``num_blocks`` equal row blocks of x, as a (num_blocks, 1) column."""
    rows, cols = x.shape
    if rows % num_blocks:
        raise ValueError("row count is not a multiple of the block count")
    n = rows // num_blocks
    out = x.value.reshape(num_blocks, n * cols).mean(axis=1, keepdims=True)

    def grad(g):
        return (np.repeat(g.ravel() / (n * cols), n)[:, None] * np.ones((1, cols)),)

    return x.tape.record(out, (x,), grad)


def block_combine(x: Var, weights: Var) -> Var:
    """sum_t weights[t] * block_t(x), where x stacks T equal row blocks."""
    tape = _same_tape(x, weights)
    t = weights.value.size
    rows, cols = x.shape
    if rows % t:
        raise ValueError("row count is not a multiple of the weight count")
    n = rows // t
    blocks = x.value.reshape(t, n, cols)
    w = weights.value.reshape(t)
    out = np.tensordot(w, blocks, axes=1)

    def grad(g):
        gx = (w[:, None, None] * g[None, :, :]).reshape(rows, cols)
        gw = np.einsum("tnc,nc->t", blocks, g).reshape(weights.shape)
        return gx, gw

    return tape.record(out, (x, weights), grad)


def sum_all(x: Var) -> Var:
    return x.tape.record(np.array(x.value.sum()), (x,), lambda g: (np.full(x.shape, float(g)),))


def cross_entropy_masked(probs: Var, labels: np.ndarray, mask: np.ndarray) -> Var:
    """Mean of -log p[i, y_i] over the masked rows, probabilities floored at 1e-12."""
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        raise ValueError("cross-entropy needs a non-empty mask")
    p = probs.value
    picked = p[mask, labels[mask]]
    clamped = np.maximum(picked, PROB_FLOOR)
    loss = -np.log(clamped).mean()

    def grad(g):
        gp = np.zeros_like(p)
        live = picked > PROB_FLOOR
        np.add.at(gp, (mask[live], labels[mask][live]), -float(g) / (clamped[live] * mask.size))
        return (gp,)

    return probs.tape.record(np.array(loss), (probs,), grad)


# ---------------------------------------------------------------------------
# optimizer and initialisation


@dataclass
class AdamState:
    lr: float = 0.0025
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(state: AdamState, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """One bias-corrected Adam update; returns new parameter arrays."""
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    out = {}
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {k} {p.shape}")
        m = state.m.get(k)
        if m is None:
            m = state.m[k] = np.zeros_like(p)
            state.v[k] = np.zeros_like(p)
        v = state.v[k]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        out[k] = p - state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return out


def glorot_init(rows: int, cols: int, rng: np.random.Generator | int | None = None) -> np.ndarray:
    if rows < 1 or cols < 1:
        raise ValueError("dimensions must be >= 1")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))
