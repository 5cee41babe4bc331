"""Adam optimization, learning-rate schedule, and the bidirectional training loop.

Each batch takes two optimizer steps: one on the forward objective (supervised
label MSE plus latent-distribution MMD) and one on the reverse objective
(MMD between generated and data designs). The reverse pass pairs the batch's
own labels with freshly drawn standard-normal latents.

Batch order, latent draws, and weight initialization derive only from the
configured seed, so equal seeds give bit-identical runs.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover
    from contextlib import nullcontext

    def threadpool_limits(*_args, **_kwargs):
        return nullcontext()

from . import flow
from .domain import LabeledDataset, compute_stats, normalize
from .flow import FlowConfig, InnModel
from .losses import LossWeights, forward_loss, mse, reverse_loss
from .numgrad import Graph


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 3000
    batch_size: int = 200
    learning_rate: float = 0.001
    lr_drop_epochs: tuple[int, ...] = (1000, 2000)
    lr_drop_factor: float = 10.0
    weight_decay: float = 2e-5
    loss_weights: LossWeights = field(default_factory=LossWeights)
    grad_clip: float = 10.0  # global-norm cap; inf disables
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ValueError("epochs, batch_size and learning_rate must be positive")
        if any(drop >= self.epochs for drop in self.lr_drop_epochs):
            raise ValueError("lr drop epochs must precede the final epoch")


def desk_train_config(**overrides) -> TrainConfig:
    """CI-scale defaults: 300 epochs with drops at 100/200."""
    base = TrainConfig(epochs=300, lr_drop_epochs=(100, 200))
    return replace(base, **overrides) if overrides else base


def lr_at(epoch: int, config: TrainConfig) -> float:
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    lr = config.learning_rate
    for drop in config.lr_drop_epochs:
        if epoch >= drop:
            lr /= config.lr_drop_factor
    return lr


class AdamState:
    """First/second moment accumulators over one flat parameter vector."""

    def __init__(self, n_params: int, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.step_count = 0
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps


def adam_step(
    params: np.ndarray,
    grads: np.ndarray,
    state: AdamState,
    lr: float,
    weight_decay: float = 0.0,
) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update, in place. Weight decay is coupled (L2 gradient)."""
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ValueError(
            f"adam_step: shape mismatch params {params.shape}, grads {grads.shape}, "
            f"state {state.m.shape}"
        )
    if weight_decay != 0.0:
        grads = grads + weight_decay * params
    state.step_count += 1
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * grads
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * grads * grads
    bias1 = 1.0 - state.beta1**state.step_count
    bias2 = 1.0 - state.beta2**state.step_count
    params -= lr * (state.m / bias1) / (np.sqrt(state.v / bias2) + state.eps)
    return params, state


def _clip_gradient(grad: np.ndarray, max_norm: float) -> np.ndarray:
    if not np.isfinite(max_norm):
        return grad
    norm = float(np.linalg.norm(grad))
    if norm > max_norm:
        grad *= max_norm / norm
    return grad


class InnTrainer:
    """Stateful bidirectional trainer, resumable epoch by epoch (used by tuning)."""

    def __init__(
        self,
        dataset: LabeledDataset,
        config: TrainConfig,
        flow_config: FlowConfig,
        stats=None,
        label_bounds: tuple[np.ndarray, np.ndarray] | None = None,
    ):
        if len(dataset) == 0:
            raise ValueError("train_inn: empty dataset")
        self.config = config
        seeds = np.random.SeedSequence(config.seed).spawn(2)
        self.rng = np.random.default_rng(seeds[1])
        self.stats = stats or compute_stats(dataset.params, dataset.labels)
        y_min = dataset.labels.min(axis=0) if label_bounds is None else label_bounds[0]
        y_max = dataset.labels.max(axis=0) if label_bounds is None else label_bounds[1]
        self.model = flow.build_model(
            flow_config,
            self.stats,
            seed=int(seeds[0].generate_state(1)[0]),
            loss_weights=config.loss_weights,
            y_min=y_min,
            y_max=y_max,
        )
        self.x_std = normalize(dataset.params, self.stats.x_mean, self.stats.x_std)
        self.y_std = normalize(dataset.labels, self.stats.y_mean, self.stats.y_std)
        self.adam = AdamState(self.model.flat.size)
        self.history: list[dict] = []
        self.epoch = 0
        self._grad_buffer = np.empty_like(self.model.flat)
        self._latent_dim = flow_config.latent_dim
        self._label_dim = flow_config.label_dim

    def _step(self, graph: Graph, leaves, loss_node, lr: float) -> None:
        graph.backward(loss_node)
        grad = flow.gather_grads(leaves, self.model, self._grad_buffer)
        grad = _clip_gradient(grad, self.config.grad_clip)
        adam_step(self.model.flat, grad, self.adam, lr, self.config.weight_decay)

    def run_epoch(self) -> dict:
        config = self.config
        n = self.x_std.shape[0]
        batch = min(config.batch_size, n)
        lr = lr_at(self.epoch, config)
        order = self.rng.permutation(n)
        sums = {"loss_y": 0.0, "loss_z": 0.0, "loss_x": 0.0}
        n_batches = 0
        started = time.perf_counter()
        weights = config.loss_weights
        for start in range(0, n - batch + 1, batch):
            idx = order[start : start + batch]
            xb, yb = self.x_std[idx], self.y_std[idx]

            g = Graph()
            leaves = flow.param_leaves(g, self.model)
            out = flow.tape_forward(g, self.model, g.leaf(xb), leaves)
            y_pred = g.cols(out, 0, self._label_dim)
            z_pred = g.cols(out, self._label_dim, self.model.config.dim)
            z_samples = self.rng.standard_normal((batch, self._latent_dim))
            total, l_y, l_z = forward_loss(
                g, y_pred, z_pred, g.leaf(yb), g.leaf(z_samples), weights
            )
            self._step(g, leaves, total, lr)

            g = Graph()
            leaves = flow.param_leaves(g, self.model)
            z_fresh = self.rng.standard_normal((batch, self._latent_dim))
            yz = np.concatenate([yb, z_fresh], axis=1)
            x_gen = flow.tape_inverse(g, self.model, g.leaf(yz), leaves)
            total_rev, l_x = reverse_loss(g, x_gen, g.leaf(xb), weights)
            self._step(g, leaves, total_rev, lr)

            sums["loss_y"] += weights.lam_y * l_y
            sums["loss_z"] += weights.lam_z * l_z
            sums["loss_x"] += weights.lam_x * l_x
            n_batches += 1

        record = {
            "epoch": self.epoch,
            "lr": lr,
            "loss_y": sums["loss_y"] / n_batches,
            "loss_z": sums["loss_z"] / n_batches,
            "loss_x": sums["loss_x"] / n_batches,
            "wall_s": time.perf_counter() - started,
        }
        self.history.append(record)
        self.epoch += 1
        return record

    def run_epochs(self, count: int) -> list[dict]:
        with threadpool_limits(limits=1):
            return [self.run_epoch() for _ in range(count)]


def train_inn(
    dataset: LabeledDataset,
    config: TrainConfig,
    flow_config: FlowConfig | None = None,
    label_bounds=None,
) -> tuple[InnModel, list[dict]]:
    """Train a flow on the dataset per the configured schedule; returns (model, history)."""
    trainer = InnTrainer(dataset, config, flow_config or FlowConfig(), label_bounds=label_bounds)
    trainer.run_epochs(config.epochs)
    return trainer.model, trainer.history


# ------------------------------------------------------------------------ MLPs


@dataclass
class Mlp:
    """Plain feed-forward regressor over a flat parameter vector."""

    widths: tuple[int, ...]  # includes input and output dims
    flat: np.ndarray
    entries: list[tuple[int, tuple[int, int]]] = field(repr=False)

    def views(self) -> list[np.ndarray]:
        return [self.flat[o : o + r * c].reshape(r, c) for o, (r, c) in self.entries]

    def predict(self, x: np.ndarray) -> np.ndarray:
        h = np.atleast_2d(np.asarray(x, dtype=np.float64))
        views = self.views()
        n_layers = len(self.widths) - 1
        for i in range(n_layers):
            h = h @ views[2 * i] + views[2 * i + 1]
            if i < n_layers - 1:
                np.maximum(h, 0.0, out=h)
        return h


def build_mlp(widths: tuple[int, ...], seed: int) -> Mlp:
    rng = np.random.default_rng(seed)
    entries: list[tuple[int, tuple[int, int]]] = []
    offset = 0
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        entries.append((offset, (fan_in, fan_out)))
        offset += fan_in * fan_out
        entries.append((offset, (1, fan_out)))
        offset += fan_out
    mlp = Mlp(widths=tuple(widths), flat=np.zeros(offset), entries=entries)
    views = mlp.views()
    for view, (_, shape) in zip(views, mlp.entries):
        if shape[0] > 1:
            view[:] = rng.standard_normal(shape) * np.sqrt(2.0 / shape[0])
    views[-2][:] = 0.0  # zero output layer: training starts from the mean map
    return mlp


def _tape_mlp(g: Graph, leaves, x, n_layers: int):
    h = x
    for i in range(n_layers):
        activation = "relu" if i < n_layers - 1 else None
        h = g.dense(h, leaves[2 * i], leaves[2 * i + 1], activation=activation)
    return h


def train_mlp(
    x_train: np.ndarray,
    y_train: np.ndarray,
    widths: tuple[int, ...],
    config: TrainConfig,
    x_test: np.ndarray | None = None,
    y_test: np.ndarray | None = None,
) -> tuple[Mlp, dict]:
    """MSE-train a feed-forward regressor; returns (model, {train_mse, test_mse})."""
    x_train = np.atleast_2d(np.asarray(x_train, dtype=np.float64))
    y_train = np.atleast_2d(np.asarray(y_train, dtype=np.float64))
    if x_train.shape[0] == 0:
        raise ValueError("train_mlp: empty dataset")
    if widths[0] != x_train.shape[1] or widths[-1] != y_train.shape[1]:
        raise ValueError(f"widths {widths} disagree with data dims "
                         f"{x_train.shape[1]}->{y_train.shape[1]}")

    seeds = np.random.SeedSequence(config.seed).spawn(2)
    mlp = build_mlp(widths, seed=int(seeds[0].generate_state(1)[0]))
    rng = np.random.default_rng(seeds[1])
    adam = AdamState(mlp.flat.size)
    grad_buffer = np.empty_like(mlp.flat)
    n = x_train.shape[0]
    batch = min(config.batch_size, n)
    n_layers = len(widths) - 1

    with threadpool_limits(limits=1):
        for epoch in range(config.epochs):
            lr = lr_at(epoch, config)
            order = rng.permutation(n)
            for start in range(0, n - batch + 1, batch):
                idx = order[start : start + batch]
                g = Graph()
                leaves = [g.leaf(view) for view in mlp.views()]
                pred = _tape_mlp(g, leaves, g.leaf(x_train[idx]), n_layers)
                g.backward(mse(g, pred, g.leaf(y_train[idx])))
                for leaf, (offset, shape) in zip(leaves, mlp.entries):
                    size = shape[0] * shape[1]
                    grad_buffer[offset : offset + size] = leaf.grad.ravel()
                grad = _clip_gradient(grad_buffer, config.grad_clip)
                adam_step(mlp.flat, grad, adam, lr, config.weight_decay)

    metrics = {"train_mse": float(np.mean((mlp.predict(x_train) - y_train) ** 2))}
    if x_test is not None:
        metrics["test_mse"] = float(np.mean((mlp.predict(x_test) - y_test) ** 2))
    return mlp, metrics
