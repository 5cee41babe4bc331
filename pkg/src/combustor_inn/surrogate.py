"""Per-label forward surrogates: fast learned stand-ins for the simulation chain.

Three independent regressors (one per performance label) share the input
standardization and are trained on a fixed split of the oracle dataset. They
drive hyperparameter tuning objectives, design prevalidation, and dataset
augmentation, where sampled designs are labeled by surrogate prediction
instead of the expensive ground-truth evaluation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .domain import (
    LabeledDataset,
    NormalizationStats,
    compute_stats,
    format_float,
    latin_hypercube_unit,
    normalize,
    unit_to_params,
    validate_params,
)
from .flow import MODEL_FORMAT_VERSION, ModelFormatError
from .training import Mlp, TrainConfig, build_mlp, train_mlp

SURROGATE_WIDTHS = (6, 200, 200, 100, 50, 1)


def surrogate_train_config(**overrides) -> TrainConfig:
    base = TrainConfig(epochs=2000, batch_size=200, learning_rate=1e-3, lr_drop_epochs=(1000,))
    return replace(base, **overrides) if overrides else base


@dataclass
class SurrogateTriple:
    models: list[Mlp]
    stats: NormalizationStats
    label_ranges: np.ndarray
    train_mae: np.ndarray
    test_mae: np.ndarray

    def __post_init__(self):
        if len(self.models) != 3:
            raise ValueError("SurrogateTriple needs exactly three per-label models")


def mae(pred: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """Column-wise mean absolute error."""
    pred = np.atleast_2d(pred)
    truth = np.atleast_2d(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"mae: shapes differ: {pred.shape} vs {truth.shape}")
    return np.abs(pred - truth).mean(axis=0)


def train_surrogates(
    train: LabeledDataset,
    test: LabeledDataset,
    config: TrainConfig | None = None,
    widths: tuple[int, ...] = SURROGATE_WIDTHS,
    seed: int = 0,
) -> SurrogateTriple:
    """Fit one regressor per label on the train split; report train/test MAE."""
    if len(train) < 2:
        raise ValueError("train_surrogates: need at least 2 training rows")
    config = config or surrogate_train_config()
    stats = compute_stats(train.params, train.labels)
    x_train = normalize(train.params, stats.x_mean, stats.x_std)
    x_test = normalize(test.params, stats.x_mean, stats.x_std) if len(test) else None

    models: list[Mlp] = []
    train_errors, test_errors = [], []
    for j in range(3):
        y_train = normalize(train.labels[:, j : j + 1], stats.y_mean[j], stats.y_std[j])
        model, _ = train_mlp(
            x_train, y_train, widths, replace(config, seed=config.seed + 1000 * j + seed)
        )
        models.append(model)
        pred_train = model.predict(x_train) * stats.y_std[j] + stats.y_mean[j]
        train_errors.append(mae(pred_train, train.labels[:, j : j + 1])[0])
        if x_test is not None:
            pred_test = model.predict(x_test) * stats.y_std[j] + stats.y_mean[j]
            test_errors.append(mae(pred_test, test.labels[:, j : j + 1])[0])
        else:
            test_errors.append(np.nan)

    full_labels = np.vstack([train.labels, test.labels]) if len(test) else train.labels
    return SurrogateTriple(
        models=models,
        stats=stats,
        label_ranges=full_labels.max(axis=0) - full_labels.min(axis=0),
        train_mae=np.array(train_errors),
        test_mae=np.array(test_errors),
    )


def predict_labels(triple: SurrogateTriple, x, validate: bool = True) -> np.ndarray:
    """Surrogate label predictions for raw design rows.

    Surrogates are not trusted outside the sampled design space, so rows are
    range-checked unless ``validate=False``.
    """
    arr = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if validate:
        validate_params(arr, name="predict_labels")
    x_std = normalize(arr, triple.stats.x_mean, triple.stats.x_std)
    out = np.empty((arr.shape[0], 3))
    chunk = 16384  # bounds activation memory at the largest augmentation sizes
    for start in range(0, arr.shape[0], chunk):
        block = x_std[start : start + chunk]
        for j, model in enumerate(triple.models):
            out[start : start + chunk, j : j + 1] = (
                model.predict(block) * triple.stats.y_std[j] + triple.stats.y_mean[j]
            )
    return out[0] if np.asarray(x).ndim == 1 else out


def augment_dataset(triple: SurrogateTriple, n: int, seed: int) -> LabeledDataset:
    """n LHS-sampled designs labeled by surrogate prediction."""
    if n < 1:
        raise ValueError("augment_dataset: n must be >= 1")
    rng = np.random.default_rng(seed)
    params = unit_to_params(latin_hypercube_unit(n, 6, rng))
    labels = predict_labels(triple, params)
    return LabeledDataset(params, labels, provenance="surrogate-augmented")


# ---------------------------------------------------------------- persistence


def surrogates_save(path, triple: SurrogateTriple) -> None:
    payload = {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": "surrogate",
        "widths": [list(model.widths) for model in triple.models],
        "stats": {
            "x_mean": [format_float(v) for v in triple.stats.x_mean],
            "x_std": [format_float(v) for v in triple.stats.x_std],
            "y_mean": [format_float(v) for v in triple.stats.y_mean],
            "y_std": [format_float(v) for v in triple.stats.y_std],
        },
        "label_ranges": [format_float(v) for v in triple.label_ranges],
        "train_mae": [format_float(v) for v in triple.train_mae],
        "test_mae": [format_float(v) for v in triple.test_mae],
        "weights": [[format_float(v) for v in model.flat] for model in triple.models],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True)


def surrogates_load(path) -> SurrogateTriple:
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"cannot load surrogates from {path}: {exc}") from None
    try:
        if payload["kind"] != "surrogate":
            raise ModelFormatError(f"{path}: not a surrogate file (kind={payload.get('kind')})")
        if payload["format_version"] != MODEL_FORMAT_VERSION:
            raise ModelFormatError(f"{path}: unsupported format version")
        models = []
        for widths, weights in zip(payload["widths"], payload["weights"]):
            model = build_mlp(tuple(widths), seed=0)
            flat = np.array([float(v) for v in weights])
            if flat.shape != model.flat.shape:
                raise ModelFormatError(f"{path}: weight count mismatch for widths {widths}")
            model.flat[:] = flat
            models.append(model)
        stats = NormalizationStats(
            x_mean=np.array([float(v) for v in payload["stats"]["x_mean"]]),
            x_std=np.array([float(v) for v in payload["stats"]["x_std"]]),
            y_mean=np.array([float(v) for v in payload["stats"]["y_mean"]]),
            y_std=np.array([float(v) for v in payload["stats"]["y_std"]]),
        )
        return SurrogateTriple(
            models=models,
            stats=stats,
            label_ranges=np.array([float(v) for v in payload["label_ranges"]]),
            train_mae=np.array([float(v) for v in payload["train_mae"]]),
            test_mae=np.array([float(v) for v in payload["test_mae"]]),
        )
    except ModelFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"{path}: malformed surrogate file: {exc}") from None
