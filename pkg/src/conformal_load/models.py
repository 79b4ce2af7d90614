"""Edge-weight prediction models: graph autoencoders and a line-graph GNN.

Three families share one training loop:

* ``GAEModel``: GNN encoder over the full binary adjacency; an edge weight is
  decoded as the inner product of its endpoints' embeddings.
* ``DiGAEModel``: directed variant with separate source/target embeddings,
  propagating over the masked *weighted* adjacency so placeholder weights on
  non-train edges feed structural information into the encoder.
* ``LGNNModel``: node regression on the directed line graph, where each
  original edge becomes a node labelled by its weight.

Each model can carry a single mean head or a (mean, lower, upper) quantile
triple sharing the trunk; the triple is trained with pinball losses for
quantile-based calibration downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import sparse

from . import autodiff as ad
from .autodiff import DropoutKind, DropoutMode, Param, Tensor
from .graphs import Graph, EdgeSplit, MaskedWeightedAdjacency, build_adjacency, line_graph
from .nn import Adam, pinball


class LayerKind(Enum):
    GCNCONV = "gcnconv"
    GRAPHCONV = "graphconv"


class Propagation(Enum):
    RAW = "raw"
    SYM_NORMALIZED = "sym"


MEAN_HEAD = "mean"
LO_HEAD = "lo"
HI_HEAD = "hi"


@dataclass(frozen=True)
class Objective:
    """Mean-only regression, or mean plus a lower/upper quantile pair."""

    quantiles: bool
    alpha: float = 0.05

    @property
    def heads(self) -> tuple[str, ...]:
        return (MEAN_HEAD, LO_HEAD, HI_HEAD) if self.quantiles else (MEAN_HEAD,)


MEAN_ONLY = Objective(quantiles=False)


def mean_plus_quantiles(alpha: float) -> Objective:
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    return Objective(quantiles=True, alpha=alpha)


# -- propagation matrices ------------------------------------------------------


def sym_normalized(adj: np.ndarray, self_loop_weight: float = 1.0) -> np.ndarray:
    """D^-1/2 (A + cI) D^-1/2 with degrees taken from the self-looped matrix.

    Zero-degree rows (possible for weighted matrices with no self-loop mass)
    are left at zero instead of dividing by zero.
    """
    a_hat = adj + self_loop_weight * np.eye(adj.shape[0])
    deg = a_hat.sum(axis=1)
    deg[deg <= 0.0] = 1.0
    inv_sqrt = 1.0 / np.sqrt(deg)
    return inv_sqrt[:, None] * a_hat * inv_sqrt[None, :]


def row_normalized(weights: np.ndarray, self_loop_weight: float) -> np.ndarray:
    """Row-stochastic version of a weighted adjacency with weighted self-loops.

    Rows with no mass (a node without outgoing weight) stay at zero rather
    than dividing by zero.
    """
    w_hat = weights + self_loop_weight * np.eye(weights.shape[0])
    sums = w_hat.sum(axis=1)
    sums[sums <= 0.0] = 1.0
    return w_hat / sums[:, None]


# -- layers --------------------------------------------------------------------


class _ConvLayer:
    """One graph-convolution layer; `linear=True` skips the ReLU (output layers)."""

    def __init__(self, kind: LayerKind, in_dim: int, out_dim: int, name: str,
                 rng: np.random.Generator):
        self.kind = kind
        if kind is LayerKind.GCNCONV:
            self.params = [Param(f"{name}.weight", ad.glorot_uniform(in_dim, out_dim, rng))]
        else:
            self.params = [
                Param(f"{name}.self_weight", ad.glorot_uniform(in_dim, out_dim, rng)),
                Param(f"{name}.nbr_weight", ad.glorot_uniform(in_dim, out_dim, rng)),
            ]

    def __call__(self, h: Tensor, prop, linear: bool = False) -> Tensor:
        if self.kind is LayerKind.GCNCONV:
            out = ad.propagate(prop, h @ self.params[0].tensor)
        else:
            out = h @ self.params[0].tensor + ad.propagate(prop, h @ self.params[1].tensor)
        return out if linear else ad.relu(out)


class _PairConvLayer:
    """Source/target co-update layer for the directed autoencoder.

    The source state is refreshed from the target state propagated through
    the weighted adjacency, and vice versa through its transpose. GRAPHCONV
    adds a self-transform of the state being updated.
    """

    def __init__(self, kind: LayerKind, in_dim: int, out_dim: int, name: str,
                 rng: np.random.Generator):
        self.kind = kind
        self.tgt_weight = Param(f"{name}.tgt_weight", ad.glorot_uniform(in_dim, out_dim, rng))
        self.src_weight = Param(f"{name}.src_weight", ad.glorot_uniform(in_dim, out_dim, rng))
        self.extra: list[Param] = []
        if kind is LayerKind.GRAPHCONV:
            self.extra = [
                Param(f"{name}.src_self_weight", ad.glorot_uniform(in_dim, out_dim, rng)),
                Param(f"{name}.tgt_self_weight", ad.glorot_uniform(in_dim, out_dim, rng)),
            ]

    @property
    def params(self) -> list[Param]:
        return [self.tgt_weight, self.src_weight, *self.extra]

    def __call__(self, h_src: Tensor, h_tgt: Tensor, prop, prop_t,
                 linear: bool = False) -> tuple[Tensor, Tensor]:
        new_src = ad.propagate(prop, h_tgt @ self.tgt_weight.tensor)
        new_tgt = ad.propagate(prop_t, h_src @ self.src_weight.tensor)
        if self.kind is LayerKind.GRAPHCONV:
            new_src = h_src @ self.extra[0].tensor + new_src
            new_tgt = h_tgt @ self.extra[1].tensor + new_tgt
        if linear:
            return new_src, new_tgt
        return ad.relu(new_src), ad.relu(new_tgt)


def _hidden_dims(in_dim: int, hidden: int, n_layers: int) -> list[tuple[int, int]]:
    dims = [in_dim] + [hidden] * n_layers
    return list(zip(dims[:-1], dims[1:]))


_OFF = DropoutMode.off()


# -- model inputs ---------------------------------------------------------------


@dataclass(frozen=True)
class GAEInputs:
    features: np.ndarray
    prop: object                 # dense array or scipy.sparse matrix


@dataclass(frozen=True)
class DiGAEInputs:
    features: np.ndarray
    prop: object
    prop_t: object


@dataclass(frozen=True)
class LGNNInputs:
    features: np.ndarray
    prop: object
    line: Graph
    origin: tuple[tuple[int, int], ...]


def _sparsify(mat: np.ndarray):
    return sparse.csr_array(mat)


def gae_inputs(graph: Graph, propagation: Propagation,
               masked: MaskedWeightedAdjacency | None = None) -> GAEInputs:
    """Propagation matrix for the undirected autoencoder.

    When the masked weighted adjacency is supplied (the default pipeline),
    it is symmetrized and degree-normalized, so observed train weights and
    placeholder fills both steer the aggregation; structure-only propagation
    is what you get by omitting it, and RAW is the literal unnormalized
    binary adjacency.
    """
    if propagation is Propagation.RAW or masked is None:
        adj = build_adjacency(graph, range(graph.num_edges))
        if propagation is Propagation.RAW:
            prop = adj
        else:
            prop = sym_normalized(np.maximum(adj, adj.T))
        return GAEInputs(features=graph.node_features, prop=_sparsify(prop))
    w = np.maximum(masked.matrix, masked.matrix.T)
    delta = float(masked.delta_values.mean()) if masked.delta_values.size else 0.0
    # self-loops carry the fill weight so junctions with no train edge keep mass
    prop = sym_normalized(w, self_loop_weight=delta if delta > 0 else 1.0)
    return GAEInputs(features=graph.node_features, prop=_sparsify(prop))


def digae_inputs(graph: Graph, masked: MaskedWeightedAdjacency,
                 propagation: Propagation) -> DiGAEInputs:
    w = masked.matrix
    if propagation is Propagation.RAW:
        return DiGAEInputs(features=graph.node_features,
                           prop=_sparsify(w), prop_t=_sparsify(w.T))
    delta = float(masked.delta_values.mean()) if masked.delta_values.size else 0.0
    return DiGAEInputs(
        features=graph.node_features,
        prop=_sparsify(row_normalized(w, delta)),
        prop_t=_sparsify(row_normalized(w.T, delta)),
    )


def lgnn_inputs(graph: Graph, propagation: Propagation) -> LGNNInputs:
    lg, origin = line_graph(graph)
    adj = build_adjacency(lg, range(lg.num_edges))
    prop = adj if propagation is Propagation.RAW else sym_normalized(adj)
    return LGNNInputs(features=lg.node_features, prop=_sparsify(prop),
                      line=lg, origin=origin)


# -- models ---------------------------------------------------------------------


class GAEModel:
    """Autoencoder over the binary adjacency; one embedding per node per head."""

    family = "gae"

    def __init__(self, in_dim: int, hidden_dim: int = 32, embed_dim: int = 16,
                 n_layers: int = 2, layer_kind: LayerKind = LayerKind.GRAPHCONV,
                 propagation: Propagation = Propagation.SYM_NORMALIZED,
                 dropout_rate: float = 0.2, objective: Objective = MEAN_ONLY,
                 seed: int = 0):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x6a1]))
        self.layer_kind = layer_kind
        self.propagation = propagation
        self.dropout_rate = dropout_rate
        self.objective = objective
        self.trunk = [
            _ConvLayer(layer_kind, a, b, f"trunk{i}", rng)
            for i, (a, b) in enumerate(_hidden_dims(in_dim, hidden_dim, n_layers))
        ]
        last = hidden_dim if n_layers > 0 else in_dim
        self.heads = {
            h: _ConvLayer(layer_kind, last, embed_dim, f"head_{h}", rng)
            for h in objective.heads
        }
        # decoder offset per head: anchors the absolute level the inner
        # product alone cannot represent (quantile heads need this badly)
        self.biases = {h: Param(f"bias_{h}", np.zeros((1, 1))) for h in objective.heads}

    def params(self) -> list[Param]:
        out = [p for layer in self.trunk for p in layer.params]
        for h in self.objective.heads:
            out.extend(self.heads[h].params)
            out.append(self.biases[h])
        return out

    def encode(self, inputs: GAEInputs, mode: DropoutMode = _OFF,
               rng: np.random.Generator | None = None) -> dict[str, Tensor]:
        h = Tensor(inputs.features)
        prop = inputs.prop
        for layer in self.trunk:
            h = ad.dropout_apply(layer(h, prop), mode, rng)
        return {name: head(h, prop, linear=True) for name, head in self.heads.items()}

    def predict(self, inputs: GAEInputs, edge_indices, edges: tuple,
                mode: DropoutMode = _OFF,
                rng: np.random.Generator | None = None) -> dict[str, np.ndarray]:
        zs = self.encode(inputs, mode, rng)
        pairs = [edges[i] for i in edge_indices]
        return {h: decode_weights(z.data, z.data, pairs) + self.biases[h].value[0, 0]
                for h, z in zs.items()}

    def train_losses(self, inputs: GAEInputs, targets: "_EdgeTargets"):
        return _autoencoder_losses(self, inputs, targets, paired=False)


class DiGAEModel:
    """Directed autoencoder with separate source and target embeddings."""

    family = "digae"

    def __init__(self, in_dim: int, hidden_dim: int = 32, embed_dim: int = 16,
                 n_layers: int = 2, layer_kind: LayerKind = LayerKind.GRAPHCONV,
                 propagation: Propagation = Propagation.SYM_NORMALIZED,
                 dropout_rate: float = 0.2, objective: Objective = MEAN_ONLY,
                 seed: int = 0):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xd16]))
        self.layer_kind = layer_kind
        self.propagation = propagation
        self.dropout_rate = dropout_rate
        self.objective = objective
        self.trunk = [
            _PairConvLayer(layer_kind, a, b, f"pair{i}", rng)
            for i, (a, b) in enumerate(_hidden_dims(in_dim, hidden_dim, n_layers))
        ]
        last = hidden_dim if n_layers > 0 else in_dim
        self.heads = {
            h: _PairConvLayer(layer_kind, last, embed_dim, f"pair_head_{h}", rng)
            for h in objective.heads
        }
        self.biases = {h: Param(f"pair_bias_{h}", np.zeros((1, 1))) for h in objective.heads}

    def params(self) -> list[Param]:
        out = [p for layer in self.trunk for p in layer.params]
        for h in self.objective.heads:
            out.extend(self.heads[h].params)
            out.append(self.biases[h])
        return out

    def encode(self, inputs: DiGAEInputs, mode: DropoutMode = _OFF,
               rng: np.random.Generator | None = None) -> dict[str, tuple[Tensor, Tensor]]:
        h_src = h_tgt = Tensor(inputs.features)
        prop, prop_t = inputs.prop, inputs.prop_t
        for layer in self.trunk:
            h_src_new, h_tgt_new = layer(h_src, h_tgt, prop, prop_t)
            h_src = ad.dropout_apply(h_src_new, mode, rng)
            h_tgt = ad.dropout_apply(h_tgt_new, mode, rng)
        return {
            name: head(h_src, h_tgt, prop, prop_t, linear=True)
            for name, head in self.heads.items()
        }

    def predict(self, inputs: DiGAEInputs, edge_indices, edges: tuple,
                mode: DropoutMode = _OFF,
                rng: np.random.Generator | None = None) -> dict[str, np.ndarray]:
        zs = self.encode(inputs, mode, rng)
        pairs = [edges[i] for i in edge_indices]
        return {h: decode_weights(z_s.data, z_t.data, pairs) + self.biases[h].value[0, 0]
                for h, (z_s, z_t) in zs.items()}

    def train_losses(self, inputs: DiGAEInputs, targets: "_EdgeTargets"):
        return _autoencoder_losses(self, inputs, targets, paired=True)


class LGNNModel:
    """Scalar node regression on the line graph: one prediction per original edge."""

    family = "lgnn"

    def __init__(self, in_dim: int, hidden_dim: int = 32,
                 n_layers: int = 2, layer_kind: LayerKind = LayerKind.GRAPHCONV,
                 propagation: Propagation = Propagation.SYM_NORMALIZED,
                 dropout_rate: float = 0.2, objective: Objective = MEAN_ONLY,
                 seed: int = 0):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x167]))
        self.layer_kind = layer_kind
        self.propagation = propagation
        self.dropout_rate = dropout_rate
        self.objective = objective
        self.trunk = [
            _ConvLayer(layer_kind, a, b, f"ltrunk{i}", rng)
            for i, (a, b) in enumerate(_hidden_dims(in_dim, hidden_dim, n_layers))
        ]
        last = hidden_dim if n_layers > 0 else in_dim
        self.heads = {
            h: _ConvLayer(layer_kind, last, 1, f"lhead_{h}", rng)
            for h in objective.heads
        }
        self.biases = {h: Param(f"lbias_{h}", np.zeros((1, 1))) for h in objective.heads}

    def params(self) -> list[Param]:
        out = [p for layer in self.trunk for p in layer.params]
        for h in self.objective.heads:
            out.extend(self.heads[h].params)
            out.append(self.biases[h])
        return out

    def encode(self, inputs: LGNNInputs, mode: DropoutMode = _OFF,
               rng: np.random.Generator | None = None) -> dict[str, Tensor]:
        h = Tensor(inputs.features)
        prop = inputs.prop
        for layer in self.trunk:
            h = ad.dropout_apply(layer(h, prop), mode, rng)
        return {name: head(h, prop, linear=True) for name, head in self.heads.items()}

    def predict(self, inputs: LGNNInputs, edge_indices, edges: tuple = (),
                mode: DropoutMode = _OFF,
                rng: np.random.Generator | None = None) -> dict[str, np.ndarray]:
        zs = self.encode(inputs, mode, rng)
        idx = list(edge_indices)
        return {h: z.data[idx, 0] + self.biases[h].value[0, 0] for h, z in zs.items()}

    def train_losses(self, inputs: LGNNInputs, targets: "_EdgeTargets"):
        alpha = self.objective.alpha
        part_data = {
            part: (np.asarray(targets.indices[part], dtype=np.int64),
                   targets.values[list(targets.indices[part])].reshape(-1, 1))
            for part in ("train", "val")
        }

        def node_preds(zs, head, idx):
            return ad.gather_rows(zs[head], idx) + self.biases[head].tensor

        def loss(part: str, mode: DropoutMode, rng) -> Tensor:
            idx, vals = part_data[part]
            target = Tensor(vals)
            zs = self.encode(inputs, mode, rng)
            diff = node_preds(zs, MEAN_HEAD, idx) - target
            total = ad.tsum(ad.mul(diff, diff))
            if self.objective.quantiles:
                total = total + ad.tsum(pinball(target, node_preds(zs, LO_HEAD, idx), alpha / 2))
                total = total + ad.tsum(pinball(target, node_preds(zs, HI_HEAD, idx), 1 - alpha / 2))
            return total

        return loss


Model = GAEModel | DiGAEModel | LGNNModel


# -- decoding -------------------------------------------------------------------


def decode_weights(z_src: np.ndarray, z_tgt: np.ndarray, edge_pairs) -> np.ndarray:
    """Per-edge predictions dot(z_src[i], z_tgt[j]) for each requested (i, j)."""
    pairs = np.asarray(list(edge_pairs), dtype=np.int64).reshape(-1, 2)
    if pairs.size == 0:
        return np.empty(0)
    src, tgt = pairs[:, 0], pairs[:, 1]
    if src.min() < 0 or src.max() >= z_src.shape[0] or tgt.min() < 0 or tgt.max() >= z_tgt.shape[0]:
        raise IndexError("edge endpoint out of range for embeddings")
    return np.einsum("ed,ed->e", z_src[src], z_tgt[tgt])


def decode_adjacency_prob(z: np.ndarray, edge: tuple[int, int]) -> float:
    """Probability that edge (i, j) exists: sigmoid of the embedding dot product."""
    i, j = edge
    return float(1.0 / (1.0 + np.exp(-(z[i] @ z[j]))))


def clamped_band(lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Order the two quantile heads so the band is always well-formed."""
    return np.minimum(lo, hi), np.maximum(lo, hi)


# -- training -------------------------------------------------------------------


@dataclass
class _EdgeTargets:
    """Standardized weights plus per-part edge index sets used by the losses."""

    values: np.ndarray
    indices: dict[str, tuple[int, ...]]
    edges: tuple[tuple[int, int], ...]


def _autoencoder_losses(model, inputs, targets: _EdgeTargets, paired: bool):
    """Reconstruction + pinball losses over the given edge subsets.

    Evaluated through per-edge gathers: identical to masking the full decoded
    matrix (only the subset's entries ever contribute) without forming it.
    """
    alpha = model.objective.alpha
    edges = targets.edges
    part_data = {}
    for part in ("train", "val"):
        idx = list(targets.indices[part])
        pairs = np.array([edges[i] for i in idx], dtype=np.int64).reshape(-1, 2)
        vals = targets.values[idx].reshape(-1, 1)
        part_data[part] = (pairs[:, 0], pairs[:, 1], vals)

    def edge_preds(zs, head, part):
        src, tgt, _ = part_data[part]
        if paired:
            z_s, z_t = zs[head]
        else:
            z_s = z_t = zs[head]
        prod = ad.mul(ad.gather_rows(z_s, src), ad.gather_rows(z_t, tgt))
        ones = np.ones((z_s.cols, 1))
        return prod @ Tensor(ones) + model.biases[head].tensor

    def loss(part: str, mode: DropoutMode, rng) -> Tensor:
        zs = model.encode(inputs, mode, rng)
        target = Tensor(part_data[part][2])
        diff = edge_preds(zs, MEAN_HEAD, part) - target
        total = ad.sqrt(ad.tsum(ad.mul(diff, diff)))
        if model.objective.quantiles:
            total = total + ad.tsum(pinball(target, edge_preds(zs, LO_HEAD, part), alpha / 2))
            total = total + ad.tsum(pinball(target, edge_preds(zs, HI_HEAD, part), 1 - alpha / 2))
        return total

    return loss


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    max_epochs: int = 2000
    patience: int = 100
    seed: int = 0


@dataclass
class TrainingLog:
    train_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    best_epoch: int = -1
    best_val: float = np.inf

    @property
    def epochs_run(self) -> int:
        return len(self.train_losses)


class TrainingDiverged(RuntimeError):
    pass


def train(model: Model, inputs, graph: Graph, split: EdgeSplit,
          std_weights: np.ndarray, config: TrainConfig = TrainConfig()) -> TrainingLog:
    """Fit a model on the train edges, early-stopping on validation loss.

    `std_weights` holds all edge weights in standardized units; only train and
    val entries are ever read. The model is left at its best-validation
    snapshot. Raises TrainingDiverged if the loss goes non-finite.
    """
    targets = _EdgeTargets(values=std_weights,
                           indices={"train": split.train, "val": split.val},
                           edges=graph.edges)
    loss_fn = model.train_losses(inputs, targets)
    params = model.params()
    opt = Adam(params, lr=config.lr)
    drop = DropoutMode(DropoutKind.TRAIN, model.dropout_rate)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x7e4]))
    log = TrainingLog()
    best_state: dict[str, np.ndarray] | None = None
    since_best = 0

    for epoch in range(config.max_epochs):
        opt.zero_grad()
        try:
            loss = loss_fn("train", drop, rng)
            loss.backward()
        except ad.NonFiniteError as exc:
            raise TrainingDiverged(
                f"non-finite training loss at epoch {epoch}: {exc}; "
                f"last losses {log.train_losses[-3:]}") from exc
        train_loss = loss.item()
        if not np.isfinite(train_loss):
            raise TrainingDiverged(f"training loss diverged at epoch {epoch}")
        opt.step()

        val_loss = loss_fn("val", _OFF, None).item() if split.val else train_loss
        log.train_losses.append(train_loss)
        log.val_losses.append(val_loss)
        if val_loss < log.best_val:
            log.best_val = val_loss
            log.best_epoch = epoch
            best_state = {p.name: p.value.copy() for p in params}
            since_best = 0
        else:
            since_best += 1
            if since_best > config.patience:
                break

    if best_state is not None:
        for p in params:
            p.value = best_state[p.name]
    return log


def mc_dropout_predict(model: Model, inputs, edge_indices, edges: tuple,
                       k: int, base_seed: int,
                       rate: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Mean and spread of `k` stochastic forward passes with dropout active.

    The per-edge standard deviation (k-1 denominator) is the local-difficulty
    proxy used by error-reweighted calibration. Each pass draws its mask from
    an independently derived seed.
    """
    if k < 2:
        raise ValueError("Monte-Carlo dropout needs at least 2 passes")
    rate = model.dropout_rate if rate is None else rate
    if rate == 0.0:
        # deterministic network: every pass is identical
        pred = model.predict(inputs, edge_indices, edges)[MEAN_HEAD]
        return pred, np.zeros_like(pred)
    mode = DropoutMode(DropoutKind.MONTE_CARLO, rate)
    passes = np.empty((k, len(edge_indices)))
    for pass_idx in range(k):
        rng = np.random.default_rng(np.random.SeedSequence([base_seed, pass_idx]))
        passes[pass_idx] = model.predict(inputs, edge_indices, edges, mode, rng)[MEAN_HEAD]
    return passes.mean(axis=0), passes.std(axis=0, ddof=1)
