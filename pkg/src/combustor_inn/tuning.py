"""Hyperband tuning of flow hyperparameters against a surrogate-scored objective.

A configuration's quality is the generative mean absolute error: run the model
in the generative direction for every target vector on the tuning grid, filter
the proposals to the valid design box, predict their labels with the forward
surrogates, and average |target - prediction| per label. The scalar objective
is the mean of the per-label MAEs normalized by each label's dataset range.

Successive halving trains all candidate configurations to the first rung
budget, keeps the best 1/eta (ties broken by sampling order), and continues
survivors from their saved state (budgets are cumulative, training resumes
rather than restarting). Hyperband runs one halving bracket per initial-budget
level so late bloomers are not culled too early.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .domain import LabeledDataset, N_H_INDEX, params_valid_mask
from .flow import FlowConfig, InnModel, inn_inverse
from .losses import LossWeights
from .surrogate import SurrogateTriple, predict_labels
from .training import InnTrainer, TrainConfig


@dataclass(frozen=True)
class HyperparamSpace:
    lr_range: tuple[float, float] = (1e-4, 1e-2)
    batch_sizes: tuple[int, ...] = (50, 100, 200, 400)
    blocks_range: tuple[int, int] = (4, 12)  # inclusive
    width_range: tuple[int, int] = (32, 256)  # inclusive
    lambda_range: tuple[float, float] = (1e1, 1e4)


@dataclass(frozen=True)
class TuningConfig:
    learning_rate: float
    batch_size: int
    n_blocks: int
    width: int
    lam_x: float
    lam_y: float
    lam_z: float
    seed: int  # per-config training seed, fixed at sampling time

    def as_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "n_blocks": self.n_blocks,
            "width": self.width,
            "lam_x": self.lam_x,
            "lam_y": self.lam_y,
            "lam_z": self.lam_z,
            "seed": self.seed,
        }


def _log_uniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    return float(np.exp(rng.uniform(np.log(lo), np.log(hi))))


def sample_config(space: HyperparamSpace, rng: np.random.Generator, seed: int) -> TuningConfig:
    return TuningConfig(
        learning_rate=_log_uniform(rng, *space.lr_range),
        batch_size=int(rng.choice(space.batch_sizes)),
        n_blocks=int(rng.integers(space.blocks_range[0], space.blocks_range[1] + 1)),
        width=int(rng.integers(space.width_range[0], space.width_range[1] + 1)),
        lam_x=_log_uniform(rng, *space.lambda_range),
        lam_y=_log_uniform(rng, *space.lambda_range),
        lam_z=_log_uniform(rng, *space.lambda_range),
        seed=seed,
    )


def sample_configs(space: HyperparamSpace, n: int, seed: int) -> list[TuningConfig]:
    rng = np.random.default_rng(seed)
    seeds = np.random.SeedSequence(seed).spawn(n)
    return [sample_config(space, rng, int(s.generate_state(1)[0])) for s in seeds]


# ------------------------------------------------------------------- objective


def generative_objective(
    model_or_inverse,
    triple: SurrogateTriple,
    targets: np.ndarray,
    m: int = 200,
    seed: int = 0,
) -> tuple[np.ndarray, float]:
    """Per-label generative MAE and its range-normalized scalar.

    ``model_or_inverse`` is a trained flow model, or a callable
    ``(y_target, z) -> designs`` (used by tests to plant ideal generators).
    Configurations that produce no valid design get an infinite objective:
    prunable, not a crash.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if callable(model_or_inverse) and not isinstance(model_or_inverse, InnModel):
        inverse = model_or_inverse
        latent = 3
    else:
        model = model_or_inverse
        inverse = lambda y, z: inn_inverse(model, y, z)
        latent = model.config.latent_dim
    rng = np.random.default_rng(seed)

    abs_errors = np.zeros(3)
    counts = 0
    for y_target in targets:
        z = rng.standard_normal((m, latent))
        x = np.asarray(inverse(y_target, z))
        x[:, N_H_INDEX] = np.rint(x[:, N_H_INDEX])
        mask = params_valid_mask(x)
        if not mask.any():
            continue
        pred = predict_labels(triple, x[mask])
        abs_errors += np.abs(pred - y_target).sum(axis=0)
        counts += int(mask.sum())
    if counts == 0:
        return np.full(3, np.inf), float("inf")
    label_mae = abs_errors / counts
    scalar = float(np.mean(label_mae / triple.label_ranges))
    return label_mae, scalar


# --------------------------------------------------------------------- runners


class InnTuningRunner:
    """Trains flow configurations incrementally and scores them generatively."""

    def __init__(
        self,
        dataset: LabeledDataset,
        surrogates: SurrogateTriple,
        targets: np.ndarray,
        m: int = 200,
        objective_seed: int = 0,
    ):
        self.dataset = dataset
        self.surrogates = surrogates
        self.targets = np.atleast_2d(targets)
        self.m = m
        self.objective_seed = objective_seed

    def start(self, config: TuningConfig):
        train_config = TrainConfig(
            epochs=1_000_000,  # rung budgets drive the actual epoch count
            batch_size=config.batch_size,
            learning_rate=config.learning_rate,
            lr_drop_epochs=(),
            loss_weights=LossWeights(config.lam_x, config.lam_y, config.lam_z),
            seed=config.seed,
        )
        flow_config = FlowConfig(n_blocks=config.n_blocks, width=config.width)
        return InnTrainer(self.dataset, train_config, flow_config)

    def advance(self, state: InnTrainer, epochs: int) -> float:
        state.run_epochs(epochs)
        _, scalar = generative_objective(
            state.model, self.surrogates, self.targets, m=self.m, seed=self.objective_seed
        )
        return scalar


class CountingRunner:
    """Deterministic stub used for accounting tests: no training, exact epoch ledger."""

    def __init__(self, objective_fn):
        self.objective_fn = objective_fn
        self.epochs_consumed = 0

    def start(self, config):
        return {"config": config, "epochs": 0}

    def advance(self, state, epochs: int) -> float:
        state["epochs"] += epochs
        self.epochs_consumed += epochs
        return float(self.objective_fn(state["config"], state["epochs"]))


# ------------------------------------------------------------ successive halving


def successive_halving(
    configs: list[TuningConfig],
    rung_budgets: list[int],
    runner,
    eta: int = 3,
    bracket: int = 0,
    config_offset: int = 0,
) -> dict:
    """Train, score, and cull configurations through increasing rung budgets.

    Budgets are cumulative epoch targets and must be strictly increasing;
    survivors resume from their existing state. Ties break toward the earlier
    sampling index.
    """
    if not configs:
        raise ValueError("successive_halving: empty configuration set")
    if any(b2 <= b1 for b1, b2 in zip(rung_budgets, rung_budgets[1:])) or not rung_budgets:
        raise ValueError(f"rung budgets must be strictly increasing, got {rung_budgets}")

    active = list(range(len(configs)))
    states = {i: runner.start(configs[i]) for i in active}
    trained = {i: 0 for i in active}
    trace: list[dict] = []
    epochs_total = 0
    objectives: dict[int, float] = {}

    for rung, budget in enumerate(rung_budgets):
        for i in active:
            delta = budget - trained[i]
            objectives[i] = runner.advance(states[i], delta)
            epochs_total += delta
            trained[i] = budget
            trace.append(
                {
                    "bracket": bracket,
                    "rung": rung,
                    "config_index": config_offset + i,
                    "config": configs[i].as_dict(),
                    "objective": objectives[i],
                    "epochs": budget,
                }
            )
        ranked = sorted(active, key=lambda i: (objectives[i], i))
        keep = max(1, len(active) // eta) if rung < len(rung_budgets) - 1 else 1
        active = ranked[:keep]

    winner = active[0]
    return {
        "best_config": configs[winner],
        "best_index": config_offset + winner,
        "best_objective": objectives[winner],
        "trace": trace,
        "epochs_total": epochs_total,
        "final_rung_members": sorted(
            {record["config_index"] for record in trace if record["rung"] == len(rung_budgets) - 1}
        ),
    }


# -------------------------------------------------------------------- hyperband


def bracket_schedule(R: int, eta: int) -> list[dict]:
    """Bracket/rung layout: one bracket per initial-budget level."""
    if R < eta or eta < 2:
        raise ValueError(f"hyperband needs R >= eta >= 2, got R={R}, eta={eta}")
    s_max = int(math.floor(math.log(R, eta)))
    B = (s_max + 1) * R
    brackets = []
    for s in range(s_max, -1, -1):
        n = int(math.ceil(B / R * eta**s / (s + 1)))
        r = R * eta ** (-s)
        rungs = []
        n_i = n
        for i in range(s + 1):
            budget = max(1, int(round(r * eta**i)))
            rungs.append({"n": n_i, "budget": budget})
            n_i = max(1, n_i // eta)
        brackets.append({"s": s, "n": n, "rungs": rungs})
    return brackets


def schedule_total_epochs(brackets: list[dict]) -> int:
    """Epochs the schedule consumes under resume-from-state semantics."""
    total = 0
    for bracket in brackets:
        previous = 0
        for rung in bracket["rungs"]:
            total += rung["n"] * (rung["budget"] - previous)
            previous = rung["budget"]
    return total


def hyperband(
    space: HyperparamSpace,
    R: int,
    eta: int,
    runner,
    seed: int = 0,
) -> dict:
    """Run every bracket; return the global best by final-rung objective."""
    brackets = bracket_schedule(R, eta)
    trace: list[dict] = []
    results = []
    epochs_total = 0
    offset = 0
    for index, bracket in enumerate(brackets):
        configs = sample_configs(space, bracket["n"], seed=seed + 7919 * index)
        budgets = [rung["budget"] for rung in bracket["rungs"]]
        result = successive_halving(
            configs, budgets, runner, eta=eta, bracket=bracket["s"], config_offset=offset
        )
        offset += len(configs)
        trace.extend(result["trace"])
        epochs_total += result["epochs_total"]
        results.append(result)
    best = min(results, key=lambda r: (r["best_objective"], r["best_index"]))
    return {
        "best_config": best["best_config"],
        "best_objective": best["best_objective"],
        "bracket_results": results,
        "trace": trace,
        "epochs_total": epochs_total,
        "schedule": brackets,
    }


def write_trace_jsonl(path, trace: list[dict]) -> None:
    with open(path, "w") as fh:
        for record in trace:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
