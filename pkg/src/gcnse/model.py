"""Per-snapshot graph convolutions combined by squeeze-and-excitation attention.

All T snapshots are processed at once: node embeddings of every timestep are
stacked into one (T*N, h) matrix and each layer multiplies by the block
diagonal of the per-timestep normalized adjacencies. Pooling and weighted
combination then operate on the row blocks.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from . import metrics, nn
from .graph import DynamicGraph, NodeSplit, accumulate, normalize, split_nodes

SCHEME_KINDS = ("se", "se-dual", "uniform", "exp-decay", "frozen", "static")
MODEL_FORMAT = "gcnse-model-v1"


def exp_decay_weights(num_timesteps: int, lam: float = 0.5) -> np.ndarray:
    """w_t = lam ** (T - 1 - t); the most recent snapshot gets weight 1."""
    if not 0.0 < lam <= 1.0:
        raise ValueError("decay factor must lie in (0, 1]")
    return lam ** np.arange(num_timesteps - 1, -1, -1, dtype=np.float64)


def uniform_weights(num_timesteps: int) -> np.ndarray:
    return np.full(num_timesteps, 1.0 / num_timesteps)


@dataclass(frozen=True)
class WeightingScheme:
    """How snapshot embeddings are weighted before the classifier.

    ``se`` and ``se-dual`` learn the weights; the rest are fixed. ``static``
    replaces the snapshots with their accumulated adjacency.
    """

    kind: str = "se"
    lam: float = 0.5
    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in SCHEME_KINDS:
            raise ValueError(f"unknown weighting scheme {self.kind!r}; expected one of {SCHEME_KINDS}")
        if self.kind == "exp-decay" and not 0.0 < self.lam <= 1.0:
            raise ValueError("decay factor must lie in (0, 1]")
        if self.kind == "frozen":
            if self.weights is None:
                raise ValueError("frozen scheme needs a weight vector")
            w = tuple(float(x) for x in self.weights)
            if any(x < 0 or not math.isfinite(x) for x in w):
                raise ValueError("frozen weights must be finite and nonnegative")
            object.__setattr__(self, "weights", w)

    @classmethod
    def frozen(cls, weights) -> "WeightingScheme":
        return cls(kind="frozen", weights=tuple(np.asarray(weights, dtype=float).tolist()))

    @property
    def learned(self) -> bool:
        return self.kind in ("se", "se-dual")

    @property
    def dual(self) -> bool:
        return self.kind == "se-dual"

    def fixed_weights(self, num_timesteps: int) -> np.ndarray | None:
        if self.kind == "uniform":
            return uniform_weights(num_timesteps)
        if self.kind == "exp-decay":
            return exp_decay_weights(num_timesteps, self.lam)
        if self.kind == "static":
            return np.ones(1)
        if self.kind == "frozen":
            if len(self.weights) != num_timesteps:
                raise ValueError(f"frozen weights have length {len(self.weights)}, graph has {num_timesteps} steps")
            return np.asarray(self.weights)
        return None


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.0025
    iterations: int = 500
    dropout: float = 0.5
    reduction: float = 0.5
    split: tuple[float, float, float] = (0.7, 0.2, 0.1)
    fc_bias: bool = True
    # SE path and combination path reuse the same conv pass (and dropout mask)
    shared_dropout: bool = True


# ---------------------------------------------------------------------------
# graph preparation


@dataclass(frozen=True, eq=False)
class PreparedGraph:
    """Constant operators for one graph: block-diagonal adjacency and layer-1 inputs."""

    num_nodes: int
    num_timesteps: int
    num_classes: int
    labels: np.ndarray
    block_adj: sp.csr_matrix
    topo_input: sp.csr_matrix
    topo_input_t: sp.csr_matrix
    attr_input: np.ndarray | None


def prepare(graph: DynamicGraph, static: bool = False) -> PreparedGraph:
    """Precompute the block adjacency and A_t X_t products for ``graph``.

    With ``static`` the snapshots are replaced by their accumulated
    adjacency and the last step's attributes.
    """
    n = graph.num_nodes
    if static:
        adjs = [accumulate(graph)]
        attrs = None if graph.attributes is None else [graph.attributes[-1]]
    else:
        adjs = [normalize(e, n) for e in graph.snapshots]
        attrs = None if graph.attributes is None else list(graph.attributes)
    block = sp.block_diag(adjs, format="csr")
    # layer-1 input is one-hot, so adj @ I is just the stacked adjacencies
    topo = sp.vstack(adjs, format="csr")
    attr = None
    if attrs is not None:
        attr = np.vstack([a @ x for a, x in zip(adjs, attrs)])
    return PreparedGraph(
        num_nodes=n,
        num_timesteps=len(adjs),
        num_classes=graph.num_classes,
        labels=np.asarray(graph.final_labels),
        block_adj=block,
        topo_input=topo,
        topo_input_t=topo.T.tocsr(),
        attr_input=attr,
    )


# ---------------------------------------------------------------------------
# parameters


@dataclass(frozen=True, eq=False)
class GcnSeParams:
    """Weights of one model plus the shape metadata needed to rebuild it."""

    arrays: dict[str, np.ndarray]
    num_timesteps: int
    num_classes: int
    num_nodes: int
    num_attributes: int
    scheme: WeightingScheme
    fc_bias: bool = True

    @property
    def hidden(self) -> int:
        return self.num_classes

    @property
    def se_hidden(self) -> int:
        return self.arrays["topo.se_w1"].shape[0] if "topo.se_w1" in self.arrays else 0

    def with_arrays(self, arrays: dict[str, np.ndarray]) -> "GcnSeParams":
        return replace(self, arrays=arrays)


def se_hidden_size(num_timesteps: int, reduction: float = 0.5) -> int:
    return max(1, math.ceil(reduction * num_timesteps))


def init_params(
    prepared: PreparedGraph,
    scheme: WeightingScheme,
    rng: np.random.Generator,
    reduction: float = 0.5,
    fc_bias: bool = True,
    num_attributes: int = 0,
) -> GcnSeParams:
    n, t, c = prepared.num_nodes, prepared.num_timesteps, prepared.num_classes
    h = c
    streams = [("topo", n)]
    if scheme.dual:
        if prepared.attr_input is None:
            raise ValueError("the dual-attention variant needs node attributes")
        streams.append(("attr", prepared.attr_input.shape[1]))
    arrays: dict[str, np.ndarray] = {}
    se_l = se_hidden_size(t, reduction)
    for name, width in streams:
        arrays[f"{name}.conv1"] = nn.glorot_init(width, h, rng)
        arrays[f"{name}.conv2"] = nn.glorot_init(h, h, rng)
        if scheme.learned:
            # pooled descriptors are nonnegative, so |W1| keeps every hidden unit live at the
            # start; a zero W2 opens every gate at exactly 0.5
            arrays[f"{name}.se_w1"] = np.abs(nn.glorot_init(se_l, t, rng))
            arrays[f"{name}.se_w2"] = np.zeros((t, se_l))
    arrays["fc.w"] = nn.glorot_init(h * len(streams), c, rng)
    if fc_bias:
        arrays["fc.b"] = np.zeros((1, c))
    return GcnSeParams(
        arrays=arrays,
        num_timesteps=t,
        num_classes=c,
        num_nodes=n,
        num_attributes=num_attributes,
        scheme=scheme,
        fc_bias=fc_bias,
    )


# ---------------------------------------------------------------------------
# building blocks


def gcn_layer(adj, z, w: nn.Var, activation=nn.relu, symmetric: bool = True) -> nn.Var:
    """activation(adj @ z @ w).

    ``z`` may be a recorded value or a constant array (dense or sparse);
    constants are folded into the adjacency product before touching ``w``.
    """
    if isinstance(z, nn.Var):
        out = nn.spmm(adj, nn.matmul(z, w), transpose=adj if symmetric else None)
    else:
        az = adj @ z
        out = nn.spmm(az, w)
    return out if activation is None else activation(out)


def squeeze(z: nn.Var | list, num_timesteps: int | None = None) -> nn.Var:
    """Per-snapshot mean over nodes and embedding dims; a (T, 1) column."""
    if isinstance(z, list):
        if not z:
            raise ValueError("squeeze needs at least one snapshot embedding")
        shapes = {x.shape for x in z}
        if len(shapes) != 1:
            raise ValueError("all snapshot embeddings must share a shape")
        tape = z[0].tape
        stacked = tape.record(np.vstack([x.value for x in z]), tuple(z), _split_rows(len(z)))
        return nn.block_mean(stacked, len(z))
    return nn.block_mean(z, num_timesteps)


def _split_rows(k: int):
    def grad(g):
        return tuple(np.split(g, k, axis=0))

    return grad


def excitation(c: nn.Var, se_w1: nn.Var, se_w2: nn.Var) -> nn.Var:
    """sigmoid(se_w2 @ relu(se_w1 @ c)); c and the result are (T, 1) columns."""
    if se_w1.shape[1] != c.shape[0] or se_w2.shape[1] != se_w1.shape[0] or se_w2.shape[0] != c.shape[0]:
        raise ValueError(f"excitation shape mismatch: W1 {se_w1.shape}, W2 {se_w2.shape}, c {c.shape}")
    return nn.sigmoid(nn.matmul(se_w2, nn.relu(nn.matmul(se_w1, c))))


def combine(z: nn.Var | list, weights) -> nn.Var:
    """Weighted sum of snapshot embeddings; ``weights`` may be a Var or an array."""
    if isinstance(z, list):
        tape = z[0].tape
        if len({x.shape for x in z}) != 1:
            raise ValueError("all snapshot embeddings must share a shape")
        z = tape.record(np.vstack([x.value for x in z]), tuple(z), _split_rows(len(z)))
    if not isinstance(weights, nn.Var):
        weights = z.tape.constant(np.asarray(weights, dtype=float).reshape(-1, 1))
    if z.shape[0] % weights.value.size:
        raise ValueError("weight vector length does not match the number of snapshots")
    return nn.block_combine(z, weights)


@dataclass
class ForwardResult:
    probs: nn.Var
    attention: list[np.ndarray]
    leaves: dict[str, nn.Var]
    tape: nn.Tape


def _stream_embeddings(tape, x_input, block_adj, conv1, conv2, rate, rng, training):
    # x_input is (adj_t @ X_t stacked over t, its transpose): layer 1 is a plain product with conv1
    x_input, x_input_t = x_input
    z1 = nn.relu(nn.spmm(x_input, conv1, transpose=x_input_t))
    if training and rate > 0:
        z1 = nn.scale_by(z1, nn.dropout_mask(z1.shape, rate, rng))
    return gcn_layer(block_adj, z1, conv2, nn.relu)


def forward(
    prepared: PreparedGraph,
    params: GcnSeParams,
    rng: np.random.Generator | int | None = None,
    training: bool = False,
    dropout: float = 0.5,
    shared_dropout: bool = True,
    tape: nn.Tape | None = None,
    scheme: WeightingScheme | None = None,
) -> ForwardResult:
    """Class probabilities for every node at the final timestep."""
    scheme = scheme or params.scheme
    if scheme.dual and prepared.attr_input is None:
        raise ValueError("the dual-attention variant needs node attributes")
    if prepared.num_timesteps != params.num_timesteps:
        raise ValueError("parameters were built for a different number of timesteps")
    if tape is None:
        tape = nn.Tape(enabled=training)
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    leaves = {k: tape.leaf(v) for k, v in params.arrays.items()}
    t = prepared.num_timesteps

    streams = [("topo", (prepared.topo_input, prepared.topo_input_t))]
    if scheme.dual:
        streams.append(("attr", (prepared.attr_input, prepared.attr_input.T)))

    fixed = scheme.fixed_weights(t)
    combined, attention = [], []
    for name, x_input in streams:
        z = _stream_embeddings(
            tape, x_input, prepared.block_adj, leaves[f"{name}.conv1"], leaves[f"{name}.conv2"], dropout, rng, training
        )
        if fixed is not None:
            w = tape.constant(fixed.reshape(-1, 1))
        else:
            w = excitation(squeeze(z, t), leaves[f"{name}.se_w1"], leaves[f"{name}.se_w2"])
            if training and not shared_dropout:
                z = _stream_embeddings(
                    tape, x_input, prepared.block_adj, leaves[f"{name}.conv1"], leaves[f"{name}.conv2"],
                    dropout, rng, training,
                )
        attention.append(w.value.ravel().copy())
        combined.append(combine(z, w))

    hidden = combined[0] if len(combined) == 1 else nn.concat_cols(combined[0], combined[1])
    logits = nn.matmul(hidden, leaves["fc.w"])
    if "fc.b" in leaves:
        logits = nn.add_row(logits, leaves["fc.b"])
    return ForwardResult(probs=nn.softmax_rows(logits), attention=attention, leaves=leaves, tape=tape)


def loss_and_grads(
    prepared: PreparedGraph,
    params: GcnSeParams,
    mask: np.ndarray,
    rng=None,
    training: bool = True,
    dropout: float = 0.5,
    shared_dropout: bool = True,
) -> tuple[float, dict[str, np.ndarray], ForwardResult]:
    tape = nn.Tape(enabled=True)
    res = forward(prepared, params, rng, training, dropout, shared_dropout, tape=tape)
    loss = nn.cross_entropy_masked(res.probs, prepared.labels, mask)
    leaf_list = list(res.leaves.values())
    g = nn.backward(loss, wrt=leaf_list)
    grads = {k: g[v.id] for k, v in res.leaves.items()}
    return float(loss.value), grads, res


def predict_proba(prepared: PreparedGraph, params: GcnSeParams) -> tuple[np.ndarray, list[np.ndarray]]:
    res = forward(prepared, params, training=False)
    return res.probs.value, res.attention


def predict(params: GcnSeParams, graph: DynamicGraph | PreparedGraph, scheme: WeightingScheme | None = None) -> np.ndarray:
    """Row-wise argmax of the eval-mode probabilities; ties go to the lowest class."""
    prepared = graph if isinstance(graph, PreparedGraph) else prepare(graph, static=(params.scheme.kind == "static"))
    res = forward(prepared, params, training=False, scheme=scheme)
    return np.argmax(res.probs.value, axis=1)


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainResult:
    params: GcnSeParams
    attention: np.ndarray
    attention_streams: list[np.ndarray]
    best_iteration: int
    train_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    split: NodeSplit | None = None


def train(
    graph: DynamicGraph | PreparedGraph,
    config: TrainConfig = TrainConfig(),
    split: NodeSplit | None = None,
    seed: int | None = None,
    scheme: WeightingScheme = WeightingScheme(),
    num_attributes: int | None = None,
) -> TrainResult:
    """Full-batch Adam on the masked cross-entropy of the final-step labels.

    Validation accuracy is measured before every update and once after the
    last; the returned parameters come from the best validation accuracy,
    ties resolved by the lower validation loss.
    """
    if isinstance(graph, PreparedGraph):
        prepared = graph
        n_attr = num_attributes or 0
    else:
        prepared = prepare(graph, static=(scheme.kind == "static"))
        n_attr = graph.num_attributes
    rng = np.random.default_rng(seed)
    if split is None:
        split = split_nodes(prepared.num_nodes, config.split, seed=int(rng.integers(2**31)))
    if len(split.train) == 0:
        raise ValueError("the training set is empty")
    params = init_params(prepared, scheme, rng, config.reduction, config.fc_bias, n_attr)
    adam = nn.AdamState(lr=config.lr)
    labels = prepared.labels

    result = TrainResult(params=params, attention=np.zeros(0), attention_streams=[], best_iteration=-1, split=split)
    best_key = (-1.0, math.inf)

    def evaluate(it: int, p: GcnSeParams):
        nonlocal best_key
        res = forward(prepared, p, training=False)
        probs = res.probs.value
        if len(split.val):
            acc = metrics.accuracy(np.argmax(probs, axis=1), labels, split.val)
            vloss = -np.log(np.maximum(probs[split.val, labels[split.val]], nn.PROB_FLOOR)).mean()
        else:
            acc, vloss = 0.0, 0.0
        result.val_accuracy.append(acc)
        key = (acc, -vloss)
        if key[0] > best_key[0] or (key[0] == best_key[0] and -key[1] < best_key[1]):
            best_key = (acc, vloss)
            result.params = p
            result.attention_streams = res.attention
            result.best_iteration = it

    for it in range(config.iterations):
        evaluate(it, params)
        loss, grads, _ = loss_and_grads(
            prepared, params, split.train, rng, True, config.dropout, config.shared_dropout
        )
        result.train_loss.append(loss)
        params = params.with_arrays(nn.adam_step(adam, params.arrays, grads))
    evaluate(config.iterations, params)
    result.attention = result.attention_streams[0]
    return result


def evaluate_split(params: GcnSeParams, prepared: PreparedGraph, nodes: np.ndarray) -> metrics.EvalReport:
    probs, _ = predict_proba(prepared, params)
    return metrics.evaluate(probs, prepared.labels, nodes)


# ---------------------------------------------------------------------------
# serialization


def save_model(params: GcnSeParams, path: str | os.PathLike, config: TrainConfig | None = None) -> None:
    meta = {
        "format": MODEL_FORMAT,
        "num_timesteps": params.num_timesteps,
        "num_classes": params.num_classes,
        "num_nodes": params.num_nodes,
        "num_attributes": params.num_attributes,
        "fc_bias": params.fc_bias,
        "scheme": asdict(params.scheme),
        "config": asdict(config) if config is not None else None,
        "keys": sorted(params.arrays),
    }
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **params.arrays)


def load_model(path: str | os.PathLike) -> tuple[GcnSeParams, TrainConfig | None]:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        if meta.get("format") != MODEL_FORMAT:
            raise ValueError(f"unsupported model format {meta.get('format')!r}")
        arrays = {k: data[k].copy() for k in meta["keys"]}
    sch = meta["scheme"]
    scheme = WeightingScheme(
        kind=sch["kind"], lam=sch["lam"], weights=tuple(sch["weights"]) if sch["weights"] is not None else None
    )
    cfg = meta["config"]
    config = None
    if cfg is not None:
        cfg["split"] = tuple(cfg["split"])
        config = TrainConfig(**cfg)
    params = GcnSeParams(
        arrays=arrays,
        num_timesteps=meta["num_timesteps"],
        num_classes=meta["num_classes"],
        num_nodes=meta["num_nodes"],
        num_attributes=meta["num_attributes"],
        scheme=scheme,
        fc_bias=meta["fc_bias"],
    )
    return params, config
