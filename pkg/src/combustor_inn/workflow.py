"""End-to-end protocol: generate, filter, prevalidate, select, validate, compare.

For every target label vector on the evaluation grid the pipeline

    1. draws latent samples and runs the flow in the generative direction,
    2. rounds the hole count and drops designs outside the valid box (yield),
    3. ranks survivors by surrogate-predicted, range-normalized distance to the
       target and keeps the best 20%,
    4. greedily picks k diverse designs from that pool (farthest-point rule in
       standardized parameter coordinates, seeded by the best-ranked design),
    5. labels the picks with the ground-truth oracle and aggregates mean,
       standard deviation, and MAE per target value.

The Gaussian-process baseline reuses exactly the same filter and selection
code path; only the proposal generator (simplex descent on the fitted GPs) and
the prevalidation predictor (GP posterior means) differ, and its final labels
come from the surrogates. Growth rates above 1 are clipped to 1 for reporting,
with the clip count recorded.

Every artifact a pipeline stage writes is deterministic given the manifest's
seeds; wall-clock timings go to a separate unhashed file.
"""

from __future__ import annotations

import hashlib
import json
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass

import numpy as np

from . import gp as gp_mod
from .domain import (
    CSV_HEADER,
    LabeledDataset,
    N_H_INDEX,
    dataset_read,
    dataset_write,
    format_float,
    latin_hypercube_sample,
    normalize,
    oracle_evaluate,
    params_valid_mask,
)
from .flow import FlowConfig, InnModel, inn_inverse, model_load, model_save
from .losses import LossWeights
from .surrogate import (
    SurrogateTriple,
    augment_dataset,
    predict_labels,
    surrogate_train_config,
    surrogates_load,
    surrogates_save,
    train_surrogates,
)
from .training import TrainConfig, train_inn

TOOL_VERSION = "0.1.0"

TARGET_VALUES = {
    "U_M": (0.02, 0.06, 0.10),
    "dp_rel": (0.033, 0.04, 0.045),
    "G": (-0.5, 0.0, 0.5),
}

G_CLIP = 1.0


def target_grid() -> np.ndarray:
    """The 27 target vectors: cross product of the per-label target values."""
    rows = [
        (u, dp, g)
        for u in TARGET_VALUES["U_M"]
        for dp in TARGET_VALUES["dp_rel"]
        for g in TARGET_VALUES["G"]
    ]
    return np.array(rows)


# ------------------------------------------------------------------- filtering


def filter_designs(x: np.ndarray) -> tuple[np.ndarray, float]:
    """Round N_H, drop rows outside the valid box; returns (valid rows, yield)."""
    arr = np.atleast_2d(np.asarray(x, dtype=np.float64)).copy()
    if arr.shape[0] == 0:
        return arr, 0.0
    arr[:, N_H_INDEX] = np.rint(arr[:, N_H_INDEX])
    mask = params_valid_mask(arr)
    return arr[mask], float(mask.mean())


# ------------------------------------------------------------------- selection


def prevalidate_select(
    valid_x: np.ndarray,
    predictions: np.ndarray,
    y_target: np.ndarray,
    label_ranges: np.ndarray,
    x_mean: np.ndarray,
    x_std: np.ndarray,
    k: int = 15,
    pool_fraction: float = 0.2,
) -> dict:
    """Keep the best 20% by predicted target distance, then pick k diverse designs.

    Diversity is greedy farthest-point in standardized parameter space, seeded
    by the single best-ranked design; ties break toward the better rank, so a
    duplicate is never picked while distinct designs remain. Fewer than k valid
    designs returns them all with a shortfall flag.
    """
    valid_x = np.atleast_2d(valid_x)
    n = valid_x.shape[0]
    distance = np.sqrt((((predictions - y_target) / label_ranges) ** 2).sum(axis=1))
    order = np.argsort(distance, kind="stable")

    if n < k:
        return {
            "selected": valid_x[order],
            "selected_indices": order,
            "shortfall": True,
            "pool_size": n,
        }

    pool_size = min(n, max(k, int(np.ceil(pool_fraction * n))))
    pool_idx = order[:pool_size]
    pool_std = normalize(valid_x[pool_idx], x_mean, x_std)

    chosen = [0]  # pool is rank-sorted; the best design seeds the selection
    min_dist = np.linalg.norm(pool_std - pool_std[0], axis=1)
    while len(chosen) < k:
        min_dist[chosen] = -np.inf
        next_pick = int(np.argmax(min_dist))  # argmax takes the earliest (best rank) on ties
        chosen.append(next_pick)
        min_dist = np.minimum(min_dist, np.linalg.norm(pool_std - pool_std[next_pick], axis=1))

    selected_indices = pool_idx[chosen]
    return {
        "selected": valid_x[selected_indices],
        "selected_indices": selected_indices,
        "shortfall": False,
        "pool_size": pool_size,
    }


# -------------------------------------------------------------------- protocol


def run_selection_protocol(
    generate_fn,
    predict_fn,
    targets: np.ndarray,
    label_ranges: np.ndarray,
    x_mean: np.ndarray,
    x_std: np.ndarray,
    k: int = 15,
    pool_fraction: float = 0.2,
) -> list[dict]:
    """Shared generate -> filter -> prevalidate -> select loop (flow and GP branches)."""
    results = []
    for index, y_target in enumerate(np.atleast_2d(targets)):
        raw = generate_fn(index, y_target)
        valid, yield_rate = filter_designs(raw)
        if valid.shape[0] == 0:
            results.append(
                {"target": y_target, "yield": yield_rate, "selected": valid,
                 "pool_size": 0, "shortfall": True, "predicted": np.zeros((0, 3))}
            )
            continue
        predictions = predict_fn(valid)
        selection = prevalidate_select(
            valid, predictions, y_target, label_ranges, x_mean, x_std, k, pool_fraction
        )
        results.append(
            {
                "target": y_target,
                "yield": yield_rate,
                "selected": selection["selected"],
                "predicted": predictions[selection["selected_indices"]],
                "pool_size": selection["pool_size"],
                "shortfall": selection["shortfall"],
            }
        )
    return results


def inn_generate_fn(model: InnModel, count: int, seed: int):
    """Per-target generator: seeded latent draws through the inverse flow."""
    seeds = np.random.SeedSequence(seed).spawn(1000)

    def generate(index: int, y_target: np.ndarray) -> np.ndarray:
        rng = np.random.default_rng(seeds[index])
        z = rng.standard_normal((count, model.config.latent_dim))
        return inn_inverse(model, y_target, z)

    return generate


def gp_generate_fn(triple: gp_mod.GpTriple, n_starts: int, seed: int, max_iter: int = 1000):
    """Per-target generator: Nelder-Mead descent terminal points (unfiltered)."""
    seeds = np.random.SeedSequence(seed).spawn(1000)

    def generate(index: int, y_target: np.ndarray) -> np.ndarray:
        result = gp_mod.gp_inverse_design(
            triple, y_target, n_starts, seed=int(seeds[index].generate_state(1)[0]),
            max_iter=max_iter,
        )
        return result["all_points"]

    return generate


# ------------------------------------------------------------------ evaluation


def clip_growth_rate(labels: np.ndarray) -> tuple[np.ndarray, int]:
    """Clip G above 1 for reporting; returns (clipped labels, clip count)."""
    clipped = labels.copy()
    over = clipped[:, 2] > G_CLIP
    clipped[over, 2] = G_CLIP
    return clipped, int(over.sum())


def accuracy_rows(protocol_results: list[dict], labels_per_target: list[np.ndarray]) -> list[dict]:
    """Table rows per (label, target value): mu, sigma, MAE, sign stats, clip count."""
    label_names = list(TARGET_VALUES)
    rows = []
    for j, name in enumerate(label_names):
        for value in TARGET_VALUES[name]:
            achieved = []
            for result, labels in zip(protocol_results, labels_per_target):
                if labels.shape[0] and np.isclose(result["target"][j], value):
                    achieved.append(labels[:, j])
            if not achieved:
                continue
            stacked = np.concatenate(achieved)
            clipped = np.minimum(stacked, G_CLIP) if name == "G" else stacked
            row = {
                "label": name,
                "target": value,
                "n": int(stacked.size),
                "mu": float(clipped.mean()),
                "sigma": float(clipped.std(ddof=0)),
                "mae": float(np.abs(clipped - value).mean()),
                "clipped": int((stacked > G_CLIP).sum()) if name == "G" else 0,
            }
            if name == "G" and value != 0.0:
                row["sign_match"] = float((np.sign(stacked) == np.sign(value)).mean())
            rows.append(row)
    return rows


def validate_inn(protocol_results: list[dict]) -> dict:
    """Oracle-label the selected designs and aggregate the accuracy table."""
    labels_per_target = [
        oracle_evaluate(result["selected"]) if result["selected"].shape[0] else np.zeros((0, 3))
        for result in protocol_results
    ]
    clip_total = sum(int((labels[:, 2] > G_CLIP).sum()) for labels in labels_per_target)
    return {
        "rows": accuracy_rows(protocol_results, labels_per_target),
        "labels_per_target": labels_per_target,
        "clip_count": clip_total,
        "mean_yield": float(np.mean([result["yield"] for result in protocol_results])),
    }


def validate_gp(protocol_results: list[dict], surrogates: SurrogateTriple) -> dict:
    """Surrogate-label the GP selections (the baseline is scored without the oracle)."""
    labels_per_target = [
        predict_labels(surrogates, result["selected"])
        if result["selected"].shape[0]
        else np.zeros((0, 3))
        for result in protocol_results
    ]
    return {
        "rows": accuracy_rows(protocol_results, labels_per_target),
        "labels_per_target": labels_per_target,
        "mean_yield": float(np.mean([result["yield"] for result in protocol_results])),
    }


def comparison_rows(inn_rows: list[dict], gp_rows: list[dict]) -> list[dict]:
    """Per target value: flow MAE vs baseline MAE and relative improvement in percent."""
    gp_by_key = {(row["label"], row["target"]): row for row in gp_rows}
    rows = []
    for inn_row in inn_rows:
        gp_row = gp_by_key.get((inn_row["label"], inn_row["target"]))
        if gp_row is None:
            continue
        eps_inn, eps_gp = inn_row["mae"], gp_row["mae"]
        delta = 100.0 * (eps_gp - eps_inn) / eps_gp if eps_gp > 0 else 0.0
        rows.append(
            {
                "label": inn_row["label"],
                "target": inn_row["target"],
                "eps_inn": eps_inn,
                "eps_gp": eps_gp,
                "delta_pct": delta,
            }
        )
    return rows


# ------------------------------------------------------------------- rendering


def render_accuracy_table(rows: list[dict]) -> str:
    lines = [
        "label     target        mu         sigma      MAE       n    clipped",
        "-" * 72,
    ]
    for row in rows:
        lines.append(
            f"{row['label']:<9} {row['target']:<10.4g} {row['mu']:<10.4g} "
            f"{row['sigma']:<10.4g} {row['mae']:<9.4g} {row['n']:<4d} {row['clipped']}"
        )
    return "\n".join(lines)


def render_comparison_table(rows: list[dict]) -> str:
    lines = [
        "label     target     eps_GP      eps_INN     delta_%",
        "-" * 56,
    ]
    for row in rows:
        lines.append(
            f"{row['label']:<9} {row['target']:<10.4g} {row['eps_gp']:<11.4g} "
            f"{row['eps_inn']:<11.4g} {row['delta_pct']:.2f}"
        )
    return "\n".join(lines)


# -------------------------------------------------------------------- manifest


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class PipelineConfig:
    """Full-scale settings by default; see the desk and mini variants below."""

    seed: int = 0
    n_data: int = 1295
    train_rows: int = 1000
    surrogate_epochs: int = 2000
    surrogate_widths: tuple[int, ...] = (6, 200, 200, 100, 50, 1)
    augment_n: int = 200_000
    flow_blocks: int = 10
    flow_width: int = 115
    train_epochs: int = 3000
    train_drops: tuple[int, ...] = (1000, 2000)
    batch_size: int = 200
    learning_rate: float = 1e-3
    weight_decay: float = 2e-5
    loss_weights: tuple[float, float, float] = (2000.0, 4000.0, 400.0)
    generate_count: int = 5000
    select_k: int = 15
    pool_fraction: float = 0.2
    baseline_starts: int = 2000
    baseline_max_iter: int = 1000
    # prevalidate GP candidates with the surrogates instead of the GPs' own
    # predictions (the reference protocol is asymmetric: GP-side prevalidation
    # uses the GPs)
    symmetric_prevalidation: bool = False

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: dict) -> "PipelineConfig":
        known = {f: payload[f] for f in payload if f in cls.__dataclass_fields__}
        for key in ("surrogate_widths", "train_drops", "loss_weights"):
            if key in known:
                known[key] = tuple(known[key])
        return cls(**known)


def desk_pipeline_config(seed: int = 0) -> PipelineConfig:
    """Laptop-scale settings: smaller flow and fewer descent starts, same protocol."""
    return PipelineConfig(
        seed=seed,
        augment_n=20_000,
        flow_blocks=6,
        flow_width=48,
        train_epochs=300,
        train_drops=(100, 200),
        baseline_starts=200,
    )


def mini_pipeline_config(seed: int = 0) -> PipelineConfig:
    """Minutes-scale settings used by reproducibility checks."""
    return PipelineConfig(
        seed=seed,
        n_data=300,
        train_rows=240,
        surrogate_epochs=60,
        surrogate_widths=(6, 32, 32, 1),
        augment_n=600,
        flow_blocks=3,
        flow_width=16,
        train_epochs=40,
        train_drops=(30,),
        batch_size=120,
        generate_count=400,
        select_k=5,
        baseline_starts=20,
        baseline_max_iter=80,
    )


def _stage_seeds(master: int) -> dict:
    children = np.random.SeedSequence(master).spawn(6)
    names = ("datagen", "surrogates", "augment", "train", "generate", "baseline")
    return {name: int(child.generate_state(1)[0]) for name, child in zip(names, children)}


def _write_candidates_csv(path, designs: np.ndarray, labels: np.ndarray, residuals=None) -> None:
    header = list(CSV_HEADER) + (["residual"] if residuals is not None else [])
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for i, (prow, lrow) in enumerate(zip(designs, labels)):
            record = [format_float(v) for v in prow] + [format_float(v) for v in lrow]
            record[N_H_INDEX] = str(int(round(prow[N_H_INDEX])))
            if residuals is not None:
                record.append(format_float(residuals[i]))
            fh.write(",".join(record) + "\n")


def run_pipeline(outdir, config: PipelineConfig, stages=None, timings_out=True) -> dict:
    """Execute datagen -> surrogates -> augment -> train -> generate -> validate -> baseline.

    Writes deterministic artifacts plus ``manifest.json``; returns the manifest.
    """
    from pathlib import Path

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    stages = stages or ("datagen", "surrogates", "augment", "train", "generate", "validate", "baseline")
    seeds = _stage_seeds(config.seed)
    files: dict[str, str] = {}
    timings: dict[str, float] = {}
    targets = target_grid()

    def record(name: str, path) -> None:
        files[name] = file_sha256(path)

    @contextmanager
    def timed(name):
        started = time.perf_counter()
        try:
            yield
        finally:
            timings[name] = time.perf_counter() - started

    # datagen (regenerated only when requested or absent; later stages reuse disk)
    dataset_path = outdir / "dataset.csv"
    if "datagen" in stages or not dataset_path.exists():
        with timed("datagen"):
            params = latin_hypercube_sample(config.n_data, seed=seeds["datagen"])
            dataset = LabeledDataset(params, oracle_evaluate(params))
            dataset_write(dataset_path, dataset)
        record("dataset.csv", dataset_path)
    else:
        dataset = dataset_read(dataset_path)
    train_split = dataset.subset(slice(0, config.train_rows))
    test_split = dataset.subset(slice(config.train_rows, None))

    # surrogates
    surrogates_path = outdir / "surrogates.json"
    if "surrogates" in stages:
        with timed("surrogates"):
            surrogate_config = surrogate_train_config(
                epochs=config.surrogate_epochs,
                batch_size=min(config.batch_size, config.train_rows),
                lr_drop_epochs=(max(1, config.surrogate_epochs // 2),),
            )
            surrogates = train_surrogates(
                train_split, test_split, config=surrogate_config,
                widths=config.surrogate_widths, seed=seeds["surrogates"],
            )
            surrogates_save(surrogates_path, surrogates)
        record("surrogates.json", surrogates_path)
    elif {"augment", "generate", "validate", "baseline"} & set(stages):
        surrogates = surrogates_load(surrogates_path)

    # augment
    augmented_path = outdir / "augmented.csv"
    if "augment" in stages:
        with timed("augment"):
            augmented = augment_dataset(surrogates, config.augment_n, seed=seeds["augment"])
            dataset_write(augmented_path, augmented)
        record("augmented.csv", augmented_path)
    elif "train" in stages:
        augmented = dataset_read(augmented_path, provenance="surrogate-augmented")

    # train (oracle train rows plus augmented rows)
    model_path = outdir / "model.json"
    metrics_path = outdir / "training_metrics.jsonl"
    if "train" in stages:
        with timed("train"):
            combined = LabeledDataset(
                np.vstack([train_split.params, augmented.params]),
                np.vstack([train_split.labels, augmented.labels]),
                provenance="oracle+surrogate-augmented",
            )
            train_config = TrainConfig(
                epochs=config.train_epochs,
                batch_size=config.batch_size,
                learning_rate=config.learning_rate,
                lr_drop_epochs=config.train_drops,
                weight_decay=config.weight_decay,
                loss_weights=LossWeights(*config.loss_weights),
                seed=seeds["train"],
            )
            model, history = train_inn(
                combined,
                train_config,
                FlowConfig(n_blocks=config.flow_blocks, width=config.flow_width),
                label_bounds=(dataset.labels.min(axis=0), dataset.labels.max(axis=0)),
            )
            model_save(model_path, model)
            with open(metrics_path, "w") as fh:
                for rec in history:
                    fh.write(json.dumps(rec, sort_keys=True) + "\n")
        record("model.json", model_path)
    elif {"generate", "validate", "baseline"} & set(stages):
        model = model_load(model_path)

    label_ranges = dataset.label_ranges()

    # generate + validate
    report: dict = {"targets": targets.tolist()}
    if "generate" in stages or "validate" in stages:
        with timed("generate"):
            protocol_results = run_selection_protocol(
                inn_generate_fn(model, config.generate_count, seeds["generate"]),
                lambda x: predict_labels(surrogates, x),
                targets,
                label_ranges,
                model.stats.x_mean,
                model.stats.x_std,
                k=config.select_k,
                pool_fraction=config.pool_fraction,
            )
            for i, result in enumerate(protocol_results):
                path = outdir / f"candidates_{i:02d}.csv"
                _write_candidates_csv(path, result["selected"], result["predicted"])
                record(path.name, path)
    if "validate" in stages:
        with timed("validate"):
            validation = validate_inn(protocol_results)
            selected_path = outdir / "selected.csv"
            all_selected = np.vstack([r["selected"] for r in protocol_results])
            all_labels = np.vstack(validation["labels_per_target"])
            _write_candidates_csv(selected_path, all_selected, all_labels)
            record("selected.csv", selected_path)
            report["inn"] = {
                "rows": validation["rows"],
                "mean_yield": validation["mean_yield"],
                "clip_count": validation["clip_count"],
            }

    # baseline
    if "baseline" in stages:
        with timed("baseline"):
            gp_triple = gp_mod.fit_label_gps(train_split, label_ranges=label_ranges)
            if config.symmetric_prevalidation:
                prevalidate_fn = lambda x: predict_labels(surrogates, x)
            else:
                prevalidate_fn = lambda x: gp_mod.gp_predict_labels(gp_triple, x)
            gp_results = run_selection_protocol(
                gp_generate_fn(gp_triple, config.baseline_starts, seeds["baseline"],
                               max_iter=config.baseline_max_iter),
                prevalidate_fn,
                targets,
                label_ranges,
                model.stats.x_mean,
                model.stats.x_std,
                k=config.select_k,
                pool_fraction=config.pool_fraction,
            )
            gp_validation = validate_gp(gp_results, surrogates)
            for i, (result, labels) in enumerate(
                zip(gp_results, gp_validation["labels_per_target"])
            ):
                residuals = np.sqrt(
                    (((labels - result["target"]) / label_ranges) ** 2).sum(axis=1)
                )
                path = outdir / f"gp_candidates_{i:02d}.csv"
                _write_candidates_csv(path, result["selected"], labels, residuals)
                record(path.name, path)
            report["gp"] = {
                "rows": gp_validation["rows"],
                "mean_yield": gp_validation["mean_yield"],
            }
            if "inn" in report:
                report["comparison"] = comparison_rows(report["inn"]["rows"],
                                                       report["gp"]["rows"])

    # report
    if "inn" in report or "gp" in report:
        report_path = outdir / "report.json"
        with open(report_path, "w") as fh:
            json.dump(report, fh, sort_keys=True, indent=1)
        record("report.json", report_path)
        text = []
        if "inn" in report:
            text.append("Generated-design accuracy (oracle-validated)")
            text.append(render_accuracy_table(report["inn"]["rows"]))
        if "comparison" in report:
            text.append("")
            text.append("Baseline comparison (surrogate-scored GP vs oracle-scored flow)")
            text.append(render_comparison_table(report["comparison"]))
        report_text_path = outdir / "report.txt"
        report_text_path.write_text("\n".join(text) + "\n")
        record("report.txt", report_text_path)

    manifest = {
        "tool_version": TOOL_VERSION,
        "seed": config.seed,
        "stage_seeds": seeds,
        "config": config.to_dict(),
        "stages": list(stages),
        "files": files,
    }
    with open(outdir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
    if timings_out:
        with open(outdir / "timings.json", "w") as fh:
            json.dump(timings, fh, sort_keys=True, indent=1)
    return manifest


def rerun_from_manifest(manifest_path, outdir) -> dict:
    """Re-execute the full pipeline from a manifest's recorded config and seeds."""
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    config = PipelineConfig.from_dict(manifest["config"])
    return run_pipeline(outdir, config, stages=tuple(manifest["stages"]))
