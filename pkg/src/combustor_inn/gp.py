"""Gaussian-process forward models and simplex-descent inverse design baseline.

One GP per performance label, fitted on standardized coordinates with an RBF
kernel k(x, x') = sigma^2 exp(-||x - x'||^2 / (2 l^2)) plus observation noise.
Hyperparameters are picked by log-marginal-likelihood over a fixed grid, which
matches off-the-shelf "standard settings" behavior without a gradient-based
marginal-likelihood optimizer.

The inverse problem min_x ||(y_target - GP(x)) / range||^2 is attacked by
Nelder-Mead descent from uniformly sampled starting points; candidate vertices
are clipped to the standardized design box. Local minima of the fitted GPs are
expected and part of what this baseline demonstrates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import (
    PARAM_HI,
    PARAM_LO,
    LabeledDataset,
    N_H_INDEX,
    NormalizationStats,
    compute_stats,
    normalize,
    params_valid_mask,
)

LENGTH_SCALE_GRID = (0.1, 0.2, 0.5, 1.0, 2.0)
SIGNAL_VARIANCE_GRID = (0.5, 1.0, 2.0)
NOISE_GRID = (1e-6, 1e-4, 1e-2)
JITTER_LADDER = (0.0, 1e-10, 1e-8, 1e-6)


class ConditioningError(RuntimeError):
    """Kernel matrix stayed non-positive-definite through the whole jitter ladder."""


@dataclass
class GPModel:
    x_train: np.ndarray  # standardized inputs
    y_train: np.ndarray
    sigma2: float
    length_scale: float
    noise: float
    chol: np.ndarray
    alpha_vec: np.ndarray
    log_marginal_likelihood: float


def _kernel(sigma2: float, ell: float, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    sq = (
        (a * a).sum(axis=1)[:, None]
        + (b * b).sum(axis=1)[None, :]
        - 2.0 * (a @ b.T)
    )
    np.maximum(sq, 0.0, out=sq)
    return sigma2 * np.exp(-0.5 * sq / (ell * ell))


def _cholesky_with_jitter(k: np.ndarray) -> tuple[np.ndarray, float]:
    for jitter in JITTER_LADDER:
        try:
            return np.linalg.cholesky(k + jitter * np.eye(k.shape[0])), jitter
        except np.linalg.LinAlgError:
            continue
    raise ConditioningError("Cholesky failed at every jitter level")


def _fit_fixed(x: np.ndarray, y: np.ndarray, sigma2: float, ell: float, noise: float) -> GPModel:
    n = x.shape[0]
    k = _kernel(sigma2, ell, x, x)
    k[np.diag_indices_from(k)] += noise
    chol, _ = _cholesky_with_jitter(k)
    alpha = np.linalg.solve(chol.T, np.linalg.solve(chol, y))
    lml = (
        -0.5 * float(y @ alpha)
        - float(np.log(np.diag(chol)).sum())
        - 0.5 * n * np.log(2.0 * np.pi)
    )
    return GPModel(x, y, sigma2, ell, noise, chol, alpha, lml)


def gp_fit(x_std: np.ndarray, y: np.ndarray, grid_search: bool = True, **fixed) -> GPModel:
    """Fit one scalar-output GP; hyperparameters by grid-searched marginal likelihood."""
    x_std = np.atleast_2d(np.asarray(x_std, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).ravel()
    if x_std.shape[0] < 2:
        raise ValueError("gp_fit: need at least 2 rows")
    if not grid_search:
        return _fit_fixed(x_std, y, fixed["sigma2"], fixed["length_scale"], fixed["noise"])
    best: GPModel | None = None
    for ell in LENGTH_SCALE_GRID:
        for sigma2 in SIGNAL_VARIANCE_GRID:
            for noise in NOISE_GRID:
                model = _fit_fixed(x_std, y, sigma2, ell, noise)
                if best is None or model.log_marginal_likelihood > best.log_marginal_likelihood:
                    best = model
    return best


def gp_predict(model: GPModel, x_std: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and (noise-free) variance per row; variance clamped at 0."""
    x_std = np.atleast_2d(np.asarray(x_std, dtype=np.float64))
    k_star = _kernel(model.sigma2, model.length_scale, x_std, model.x_train)
    mean = k_star @ model.alpha_vec
    v = np.linalg.solve(model.chol, k_star.T)
    var = model.sigma2 - (v * v).sum(axis=0)
    return mean, np.maximum(var, 0.0)


def gp_posterior_mean_direct(model: GPModel, x_std: np.ndarray) -> np.ndarray:
    """Posterior mean via an explicit (non-Cholesky) linear solve; test oracle path."""
    x_std = np.atleast_2d(np.asarray(x_std, dtype=np.float64))
    k = _kernel(model.sigma2, model.length_scale, model.x_train, model.x_train)
    k[np.diag_indices_from(k)] += model.noise
    k_star = _kernel(model.sigma2, model.length_scale, x_std, model.x_train)
    return k_star @ np.linalg.solve(k, model.y_train)


# ------------------------------------------------------------------ Nelder-Mead

_REFLECT, _EXPAND, _CONTRACT, _SHRINK = 1.0, 2.0, 0.5, 0.5


def nelder_mead(
    objective,
    x0: np.ndarray,
    bounds: tuple[np.ndarray, np.ndarray] | None = None,
    max_iter: int = 1000,
    tol: float = 1e-8,
    initial_step: float = 0.25,
) -> tuple[np.ndarray, float, int]:
    """Simplex descent with box handling by clipping candidate vertices.

    Returns (argmin, value, iterations). Terminates when every vertex sits
    within ``tol`` of the best vertex or after ``max_iter`` iterations.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    d = x0.size

    def clip(x):
        return np.clip(x, bounds[0], bounds[1]) if bounds is not None else x

    f0 = float(objective(x0))
    if not np.isfinite(f0):
        raise ValueError("nelder_mead: objective not finite at x0")

    vertices = [x0]
    for j in range(d):
        v = x0.copy()
        v[j] += initial_step if v[j] + initial_step <= (bounds[1][j] if bounds else np.inf) else -initial_step
        vertices.append(clip(v))
    simplex = np.array(vertices)
    values = np.array([f0] + [float(objective(v)) for v in simplex[1:]])

    iterations = 0
    while iterations < max_iter:
        order = np.argsort(values, kind="stable")
        simplex, values = simplex[order], values[order]
        if np.max(np.abs(simplex[1:] - simplex[0])) < tol:
            break
        iterations += 1

        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]
        reflected = clip(centroid + _REFLECT * (centroid - worst))
        f_reflected = float(objective(reflected))

        if f_reflected < values[0]:
            expanded = clip(centroid + _EXPAND * (centroid - worst))
            f_expanded = float(objective(expanded))
            if f_expanded < f_reflected:
                simplex[-1], values[-1] = expanded, f_expanded
            else:
                simplex[-1], values[-1] = reflected, f_reflected
        elif f_reflected < values[-2]:
            simplex[-1], values[-1] = reflected, f_reflected
        else:
            contracted = clip(centroid + _CONTRACT * (worst - centroid))
            f_contracted = float(objective(contracted))
            if f_contracted < values[-1]:
                simplex[-1], values[-1] = contracted, f_contracted
            else:
                for i in range(1, d + 1):
                    simplex[i] = clip(simplex[0] + _SHRINK * (simplex[i] - simplex[0]))
                    values[i] = float(objective(simplex[i]))

    order = np.argsort(values, kind="stable")
    return simplex[order[0]], float(values[order[0]]), iterations


# --------------------------------------------------------------- inverse design


@dataclass
class GpTriple:
    models: list[GPModel]
    stats: NormalizationStats
    label_ranges: np.ndarray


def fit_label_gps(train: LabeledDataset, label_ranges: np.ndarray | None = None) -> GpTriple:
    """Fit the three per-label GPs on standardized coordinates."""
    stats = compute_stats(train.params, train.labels)
    x_std = normalize(train.params, stats.x_mean, stats.x_std)
    models = [
        gp_fit(x_std, normalize(train.labels[:, j], stats.y_mean[j], stats.y_std[j]))
        for j in range(3)
    ]
    ranges = train.label_ranges() if label_ranges is None else np.asarray(label_ranges)
    return GpTriple(models=models, stats=stats, label_ranges=ranges)


def gp_predict_labels(triple: GpTriple, x_raw: np.ndarray) -> np.ndarray:
    """Posterior-mean label predictions in raw units for raw design rows."""
    x_std = normalize(np.atleast_2d(x_raw), triple.stats.x_mean, triple.stats.x_std)
    columns = []
    for j, model in enumerate(triple.models):
        mean, _ = gp_predict(model, x_std)
        columns.append(mean * triple.stats.y_std[j] + triple.stats.y_mean[j])
    return np.column_stack(columns)


def make_inverse_objective(triple: GpTriple, y_target: np.ndarray):
    """Range-normalized squared residual ||(y_target - GP(x)) / range||^2.

    The three GPs share training inputs, so the squared distances to the
    training set are computed once per evaluation; only the posterior means
    are needed, keeping a single evaluation cheap enough for simplex descent.
    """
    y_target = np.asarray(y_target, dtype=np.float64)
    stats = triple.stats
    x_train = triple.models[0].x_train
    params = [
        (model.sigma2, -0.5 / (model.length_scale * model.length_scale), model.alpha_vec)
        for model in triple.models
    ]

    def objective(x_std: np.ndarray) -> float:
        diff = x_train - x_std
        sq = np.einsum("ij,ij->i", diff, diff)
        acc = 0.0
        for j, (sigma2, gamma, alpha_vec) in enumerate(params):
            pred = sigma2 * float(np.exp(gamma * sq) @ alpha_vec)
            pred = pred * stats.y_std[j] + stats.y_mean[j]
            acc += ((y_target[j] - pred) / triple.label_ranges[j]) ** 2
        return acc

    return objective


def gp_inverse_design(
    triple: GpTriple,
    y_target: np.ndarray,
    n_starts: int,
    seed: int,
    max_iter: int = 1000,
) -> dict:
    """Descend the range-normalized residual from uniform starts; filter to validity.

    Returns candidates (valid, N_H rounded), all terminal points, residuals,
    and the valid-design yield.
    """
    y_target = np.asarray(y_target, dtype=np.float64)
    stats = triple.stats
    lo_std = normalize(PARAM_LO, stats.x_mean, stats.x_std)
    hi_std = normalize(PARAM_HI, stats.x_mean, stats.x_std)
    rng = np.random.default_rng(seed)
    objective = make_inverse_objective(triple, y_target)

    starts_raw = rng.uniform(PARAM_LO, PARAM_HI, (n_starts, 6))
    terminal = np.empty((n_starts, 6))
    residuals = np.empty(n_starts)
    for i, start in enumerate(starts_raw):
        x_std0 = normalize(start, stats.x_mean, stats.x_std)
        x_best, f_best, _ = nelder_mead(
            objective, x_std0, bounds=(lo_std, hi_std), max_iter=max_iter
        )
        terminal[i] = x_best * stats.x_std + stats.x_mean
        residuals[i] = f_best

    rounded = terminal.copy()
    rounded[:, N_H_INDEX] = np.rint(rounded[:, N_H_INDEX])
    valid_mask = params_valid_mask(rounded)
    return {
        "candidates": rounded[valid_mask],
        "residuals": residuals[valid_mask],
        "all_points": terminal,
        "all_residuals": residuals,
        "yield_rate": float(valid_mask.mean()),
    }
