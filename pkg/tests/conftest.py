import os
import sys

# Single-threaded BLAS is both faster for this problem's small matrices and
# removes any threading question from bit-reproducibility checks. Must happen
# before numpy loads its BLAS.
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")

sys.path.insert(0, os.path.dirname(__file__))

from pathlib import Path

import numpy as np
import pytest

from combustor_inn import domain, flow, surrogate, training
from combustor_inn.domain import LabeledDataset

# Heavy artifacts (trained surrogates/flows) are cached on disk between test
# runs; they are bit-reproducible from their seeds, so the cache never changes
# results. Set COMBUSTOR_INN_TEST_CACHE=0 to force retraining.
CACHE_DIR = Path(__file__).resolve().parent.parent / ".testcache"
CACHE_ENABLED = os.environ.get("COMBUSTOR_INN_TEST_CACHE", "1") != "0"

ORACLE_SEED = 20240
SURROGATE_SEED = 7
TRAIN_ROWS = 1000

DESK_FLOW = flow.FlowConfig(n_blocks=6, width=48)


def cache_path(name: str) -> Path:
    CACHE_DIR.mkdir(exist_ok=True)
    return CACHE_DIR / name


def cached_artifact(name: str, build, save, load):
    path = cache_path(name)
    if CACHE_ENABLED and path.exists():
        return load(path)
    artifact = build()
    save(path, artifact)
    return artifact


@pytest.fixture(scope="session")
def oracle_ds() -> LabeledDataset:
    x = domain.latin_hypercube_sample(1295, seed=ORACLE_SEED)
    return LabeledDataset(x, domain.oracle_evaluate(x))


@pytest.fixture(scope="session")
def oracle_split(oracle_ds):
    return oracle_ds.subset(slice(0, TRAIN_ROWS)), oracle_ds.subset(slice(TRAIN_ROWS, None))


@pytest.fixture(scope="session")
def desk_surrogates(oracle_split) -> surrogate.SurrogateTriple:
    train, test = oracle_split

    return cached_artifact(
        "desk_surrogates.json",
        build=lambda: surrogate.train_surrogates(train, test, seed=SURROGATE_SEED),
        save=surrogate.surrogates_save,
        load=surrogate.surrogates_load,
    )


def build_desk_inn(oracle_ds, train_split, surrogates, augment_n: int, seed: int):
    """Augment, union with the oracle training rows, train the desk flow."""
    import numpy as np

    augmented = surrogate.augment_dataset(surrogates, augment_n, seed=101)
    combined = LabeledDataset(
        np.vstack([train_split.params, augmented.params]),
        np.vstack([train_split.labels, augmented.labels]),
        provenance="oracle+surrogate-augmented",
    )
    config = training.desk_train_config(seed=seed)
    model, _ = training.train_inn(
        combined,
        config,
        DESK_FLOW,
        label_bounds=(oracle_ds.labels.min(axis=0), oracle_ds.labels.max(axis=0)),
    )
    return model


def _timed_model_fixture(name: str, builder):
    import json
    import time

    path = cache_path(name)
    meta_path = cache_path(name + ".meta")
    if CACHE_ENABLED and path.exists() and meta_path.exists():
        model = flow.model_load(path)
        meta = json.loads(meta_path.read_text())
        return model, meta["build_seconds"]
    started = time.perf_counter()
    model = builder()
    build_seconds = time.perf_counter() - started
    flow.model_save(path, model)
    meta_path.write_text(json.dumps({"build_seconds": build_seconds}))
    return model, build_seconds


@pytest.fixture(scope="session")
def desk_inn(oracle_ds, oracle_split, desk_surrogates):
    """Desk-scale trained flow (20k augmentation); returns (model, build_seconds)."""
    train, _ = oracle_split
    return _timed_model_fixture(
        "desk_inn.json",
        lambda: build_desk_inn(oracle_ds, train, desk_surrogates, 20_000, seed=5),
    )


@pytest.fixture(scope="session")
def desk_inn_2k(oracle_ds, oracle_split, desk_surrogates):
    """Ablation twin trained with 2k augmentation instead of 20k."""
    train, _ = oracle_split
    return _timed_model_fixture(
        "desk_inn_2k.json",
        lambda: build_desk_inn(oracle_ds, train, desk_surrogates, 2_000, seed=5),
    )


@pytest.fixture(scope="session")
def desk_gp_triple(oracle_split, oracle_ds):
    from combustor_inn import gp

    train, _ = oracle_split
    return gp.fit_label_gps(train, label_ranges=oracle_ds.label_ranges())


def run_desk_validation(model, surrogates, oracle_ds, count=5000, k=15, seed=77):
    from combustor_inn import workflow
    from combustor_inn.surrogate import predict_labels

    targets = workflow.target_grid()
    results = workflow.run_selection_protocol(
        workflow.inn_generate_fn(model, count, seed=seed),
        lambda x: predict_labels(surrogates, x),
        targets,
        oracle_ds.label_ranges(),
        model.stats.x_mean,
        model.stats.x_std,
        k=k,
    )
    return workflow.validate_inn(results), results


@pytest.fixture(scope="session")
def desk_validation(desk_inn, desk_surrogates, oracle_ds):
    """Full 27-target generate/filter/select/oracle-validate pass on the desk flow."""
    import json
    import time

    path = cache_path("desk_validation.json")
    model, build_seconds = desk_inn
    if CACHE_ENABLED and path.exists():
        return json.loads(path.read_text())
    started = time.perf_counter()
    validation, _ = run_desk_validation(model, desk_surrogates, oracle_ds)
    payload = {
        "rows": validation["rows"],
        "mean_yield": validation["mean_yield"],
        "clip_count": validation["clip_count"],
        "protocol_seconds": time.perf_counter() - started,
        "train_seconds": build_seconds,
        "label_ranges": oracle_ds.label_ranges().tolist(),
    }
    path.write_text(json.dumps(payload))
    return payload
