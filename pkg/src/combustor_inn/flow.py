"""Invertible flow between design parameters and (label, latent) coordinates.

The model is a chain of fixed coordinate permutations and affine coupling
blocks acting on standardized 6-vectors. A block splits its input into halves
u1 = x[0:3], u2 = x[3:6] and applies

    v1 = u1 * exp(s2(u2)) + t2(u2)
    v2 = u2 * exp(s1(v1)) + t1(v1)

with four independent 3-layer relu subnetworks s1, s2, t1, t2. The scale
exponents are soft-clamped to alpha * tanh(s / alpha), which keeps them in
(-alpha, alpha) and preserves exact algebraic invertibility:

    u2 = (v2 - t1(v1)) * exp(-s1(v1))
    u1 = (v1 - t2(u2)) * exp(-s2(u2))

The Jacobian of a block is triangular, so its log-determinant is the sum of
the clamped exponents; permutations contribute exactly 0. The first three
output coordinates carry the standardized label prediction, the last three the
latent variables.

Subnet output layers are initialized to zero so a fresh model is exactly the
identity (up to permutations), which both stabilizes early training and gives
an exactly testable initial state.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .domain import NormalizationStats, denormalize, format_float, normalize
from .losses import LossWeights
from .numgrad import Graph, Tensor

MODEL_FORMAT_VERSION = 1

_SUBNET_NAMES = ("s1", "s2", "t1", "t2")


class ModelFormatError(ValueError):
    """Model file is missing, truncated, or inconsistent with its config."""


@dataclass(frozen=True)
class FlowConfig:
    n_blocks: int = 10
    width: int = 115
    alpha: float = 2.0  # scale-clamp amplitude
    dim: int = 6
    label_dim: int = 3

    @property
    def half(self) -> int:
        return self.dim // 2

    @property
    def latent_dim(self) -> int:
        return self.dim - self.label_dim


def _subnet_shapes(config: FlowConfig) -> list[tuple[int, int]]:
    h, w = config.half, config.width
    return [(h, w), (1, w), (w, w), (1, w), (w, h), (1, h)]


@dataclass
class InnModel:
    config: FlowConfig
    stats: NormalizationStats
    perms: list[np.ndarray]
    flat: np.ndarray  # all parameters, one contiguous vector
    entries: list[tuple[int, tuple[int, int]]] = field(repr=False)
    loss_weights: LossWeights = field(default_factory=LossWeights)
    y_min: np.ndarray | None = None
    y_max: np.ndarray | None = None

    def views(self) -> list[np.ndarray]:
        """Parameter arrays as views into the flat vector (write-through)."""
        return [self.flat[o : o + r * c].reshape(r, c) for o, (r, c) in self.entries]

    def block_params(self, views=None) -> list[dict[str, list[np.ndarray]]]:
        """Per-block {subnet: [W1, b1, W2, b2, W3, b3]} views."""
        views = self.views() if views is None else views
        per_block = len(_SUBNET_NAMES) * 6
        blocks = []
        for b in range(self.config.n_blocks):
            chunk = views[b * per_block : (b + 1) * per_block]
            blocks.append(
                {name: chunk[i * 6 : (i + 1) * 6] for i, name in enumerate(_SUBNET_NAMES)}
            )
        return blocks


def build_model(
    config: FlowConfig,
    stats: NormalizationStats,
    seed: int,
    loss_weights: LossWeights | None = None,
    y_min: np.ndarray | None = None,
    y_max: np.ndarray | None = None,
) -> InnModel:
    """Construct a model with frozen seeded permutations and identity-initialized blocks."""
    rng = np.random.default_rng(seed)
    perms = [rng.permutation(config.dim) for _ in range(config.n_blocks)]

    shapes = _subnet_shapes(config)
    entries: list[tuple[int, tuple[int, int]]] = []
    offset = 0
    for _ in range(config.n_blocks * len(_SUBNET_NAMES)):
        for shape in shapes:
            entries.append((offset, shape))
            offset += shape[0] * shape[1]
    flat = np.zeros(offset)

    model = InnModel(
        config=config,
        stats=stats,
        perms=perms,
        flat=flat,
        entries=entries,
        loss_weights=loss_weights or LossWeights(),
        y_min=None if y_min is None else np.asarray(y_min, dtype=np.float64),
        y_max=None if y_max is None else np.asarray(y_max, dtype=np.float64),
    )
    for view, (_, shape) in zip(model.views(), model.entries):
        rows, cols = shape
        if rows == 1:
            continue  # biases stay zero
        if cols == config.half:
            continue  # zero-initialized output layer => identity flow
        view[:] = rng.standard_normal(shape) * np.sqrt(2.0 / rows)
    return model


# ----------------------------------------------------------------- evaluation


def _subnet_eval(x: np.ndarray, p: list[np.ndarray]) -> np.ndarray:
    h = np.maximum(x @ p[0] + p[1], 0.0)
    h = np.maximum(h @ p[2] + p[3], 0.0)
    return h @ p[4] + p[5]


def _clamp(s: np.ndarray, alpha: float) -> np.ndarray:
    return alpha * np.tanh(s / alpha)


def block_forward(params: dict, u: np.ndarray, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """One coupling block forward; returns (v, per-sample log-det contribution)."""
    if not np.all(np.isfinite(u)):
        raise FloatingPointError("block_forward: non-finite input")
    half = u.shape[1] // 2
    u1, u2 = u[:, :half], u[:, half:]
    cs2 = _clamp(_subnet_eval(u2, params["s2"]), alpha)
    v1 = u1 * np.exp(cs2) + _subnet_eval(u2, params["t2"])
    cs1 = _clamp(_subnet_eval(v1, params["s1"]), alpha)
    v2 = u2 * np.exp(cs1) + _subnet_eval(v1, params["t1"])
    return np.concatenate([v1, v2], axis=1), cs2.sum(axis=1) + cs1.sum(axis=1)


def block_inverse(params: dict, v: np.ndarray, alpha: float) -> np.ndarray:
    """Exact algebraic inverse of :func:`block_forward`."""
    if not np.all(np.isfinite(v)):
        raise FloatingPointError("block_inverse: non-finite input")
    half = v.shape[1] // 2
    v1, v2 = v[:, :half], v[:, half:]
    cs1 = _clamp(_subnet_eval(v1, params["s1"]), alpha)
    u2 = (v2 - _subnet_eval(v1, params["t1"])) * np.exp(-cs1)
    cs2 = _clamp(_subnet_eval(u2, params["s2"]), alpha)
    u1 = (v1 - _subnet_eval(u2, params["t2"])) * np.exp(-cs2)
    return np.concatenate([u1, u2], axis=1)


def forward_std(model: InnModel, x_std: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Full forward pass on standardized inputs; returns (output, per-sample log-det)."""
    h = np.atleast_2d(np.asarray(x_std, dtype=np.float64))
    logdet = np.zeros(h.shape[0])
    for perm, params in zip(model.perms, model.block_params()):
        h = h[:, perm]
        h, contribution = block_forward(params, h, model.config.alpha)
        logdet += contribution
    return h, logdet


def inverse_std(model: InnModel, yz_std: np.ndarray) -> np.ndarray:
    """Full inverse pass on standardized (label, latent) rows."""
    h = np.atleast_2d(np.asarray(yz_std, dtype=np.float64))
    for perm, params in zip(reversed(model.perms), reversed(model.block_params())):
        h = block_inverse(params, h, model.config.alpha)
        h = h[:, np.argsort(perm)]
    return h


def inn_forward(model: InnModel, x_raw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map raw designs to (raw label predictions, latent coordinates)."""
    x_std = normalize(np.atleast_2d(x_raw), model.stats.x_mean, model.stats.x_std)
    out, _ = forward_std(model, x_std)
    label_dim = model.config.label_dim
    y_pred = denormalize(out[:, :label_dim], model.stats.y_mean, model.stats.y_std)
    return y_pred, out[:, label_dim:]


def inn_inverse(model: InnModel, y_target_raw: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Generate raw design candidates for one target label vector and latent draws.

    N_H comes back continuous; rounding/validity filtering happens downstream.
    """
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    y_std = normalize(np.asarray(y_target_raw, dtype=np.float64), model.stats.y_mean, model.stats.y_std)
    yz = np.concatenate([np.tile(y_std, (z.shape[0], 1)), z], axis=1)
    x_std = inverse_std(model, yz)
    return denormalize(x_std, model.stats.x_mean, model.stats.x_std)


def log_det_jacobian(model: InnModel, x_std: np.ndarray) -> np.ndarray:
    """Per-sample log |det J| of the standardized forward map."""
    _, logdet = forward_std(model, x_std)
    return logdet


# ------------------------------------------------------------------- training


def tape_forward(g: Graph, model: InnModel, x: Tensor, leaves: list[Tensor]) -> Tensor:
    """Differentiable forward pass; ``leaves`` must be :func:`param_leaves` output."""
    alpha = model.config.alpha
    half = model.config.half
    h = x
    per_block = len(_SUBNET_NAMES) * 6
    for b, perm in enumerate(model.perms):
        chunk = leaves[b * per_block : (b + 1) * per_block]
        s1, s2 = chunk[0:6], chunk[6:12]
        t1, t2 = chunk[12:18], chunk[18:24]
        h = g.permute_cols(h, perm)
        u1, u2 = g.cols(h, 0, half), g.cols(h, half, 2 * half)
        v1 = g.couple(u1, _tape_subnet(g, u2, s2), _tape_subnet(g, u2, t2), alpha)
        v2 = g.couple(u2, _tape_subnet(g, v1, s1), _tape_subnet(g, v1, t1), alpha)
        h = g.concat_cols(v1, v2)
    return h


def tape_inverse(g: Graph, model: InnModel, yz: Tensor, leaves: list[Tensor]) -> Tensor:
    """Differentiable inverse pass (generative direction)."""
    alpha = model.config.alpha
    half = model.config.half
    h = yz
    per_block = len(_SUBNET_NAMES) * 6
    for b in range(model.config.n_blocks - 1, -1, -1):
        chunk = leaves[b * per_block : (b + 1) * per_block]
        s1, s2 = chunk[0:6], chunk[6:12]
        t1, t2 = chunk[12:18], chunk[18:24]
        v1, v2 = g.cols(h, 0, half), g.cols(h, half, 2 * half)
        u2 = g.uncouple(v2, _tape_subnet(g, v1, s1), _tape_subnet(g, v1, t1), alpha)
        u1 = g.uncouple(v1, _tape_subnet(g, u2, s2), _tape_subnet(g, u2, t2), alpha)
        h = g.permute_cols(g.concat_cols(u1, u2), np.argsort(model.perms[b]))
    return h


def _tape_subnet(g: Graph, x: Tensor, p: list[Tensor]) -> Tensor:
    h = g.dense(x, p[0], p[1], activation="relu")
    h = g.dense(h, p[2], p[3], activation="relu")
    return g.dense(h, p[4], p[5])


def param_leaves(g: Graph, model: InnModel) -> list[Tensor]:
    return [g.leaf(view) for view in model.views()]


def gather_grads(leaves: list[Tensor], model: InnModel, out: np.ndarray) -> np.ndarray:
    """Collect leaf gradients into a flat vector aligned with ``model.flat``."""
    for leaf, (offset, shape) in zip(leaves, model.entries):
        size = shape[0] * shape[1]
        out[offset : offset + size] = leaf.grad.ravel()
    return out


# ---------------------------------------------------------------- persistence


def model_save(path, model: InnModel) -> None:
    payload = {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": "inn",
        "config": {
            "n_blocks": model.config.n_blocks,
            "width": model.config.width,
            "alpha": model.config.alpha,
            "dim": model.config.dim,
            "label_dim": model.config.label_dim,
        },
        "loss_weights": [
            model.loss_weights.lam_x,
            model.loss_weights.lam_y,
            model.loss_weights.lam_z,
        ],
        "stats": {
            "x_mean": [format_float(v) for v in model.stats.x_mean],
            "x_std": [format_float(v) for v in model.stats.x_std],
            "y_mean": [format_float(v) for v in model.stats.y_mean],
            "y_std": [format_float(v) for v in model.stats.y_std],
        },
        "label_bounds": None
        if model.y_min is None
        else {
            "y_min": [format_float(v) for v in model.y_min],
            "y_max": [format_float(v) for v in model.y_max],
        },
        "permutations": [perm.tolist() for perm in model.perms],
        "weights": [format_float(v) for v in model.flat],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True)


def model_load(path) -> InnModel:
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"cannot load model from {path}: {exc}") from None
    try:
        if payload["format_version"] != MODEL_FORMAT_VERSION:
            raise ModelFormatError(
                f"{path}: format version {payload['format_version']} != {MODEL_FORMAT_VERSION}"
            )
        config = FlowConfig(**payload["config"])
        stats = NormalizationStats(
            x_mean=np.array([float(v) for v in payload["stats"]["x_mean"]]),
            x_std=np.array([float(v) for v in payload["stats"]["x_std"]]),
            y_mean=np.array([float(v) for v in payload["stats"]["y_mean"]]),
            y_std=np.array([float(v) for v in payload["stats"]["y_std"]]),
        )
        perms = [np.asarray(p, dtype=np.intp) for p in payload["permutations"]]
        weights = np.array([float(v) for v in payload["weights"]])
        lam_x, lam_y, lam_z = payload["loss_weights"]
        bounds = payload.get("label_bounds")
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"{path}: malformed model file: {exc}") from None

    if len(perms) != config.n_blocks:
        raise ModelFormatError(
            f"{path}: {len(perms)} permutations but config says {config.n_blocks} blocks"
        )
    for perm in perms:
        if sorted(perm.tolist()) != list(range(config.dim)):
            raise ModelFormatError(f"{path}: invalid permutation {perm.tolist()}")

    template = build_model(config, stats, seed=0)
    if weights.shape != template.flat.shape:
        raise ModelFormatError(
            f"{path}: weight count {weights.size} != expected {template.flat.size}"
        )
    template.perms = perms
    template.flat[:] = weights
    template.stats = stats
    template.loss_weights = LossWeights(lam_x, lam_y, lam_z)
    if bounds is not None:
        template.y_min = np.array([float(v) for v in bounds["y_min"]])
        template.y_max = np.array([float(v) for v in bounds["y_max"]])
    return template
