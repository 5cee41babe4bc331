import numpy as np
import pytest

from combustor_inn import domain, workflow
from combustor_inn.workflow import (
    PipelineConfig,
    accuracy_rows,
    clip_growth_rate,
    comparison_rows,
    filter_designs,
    mini_pipeline_config,
    prevalidate_select,
    run_selection_protocol,
    target_grid,
)


def test_target_grid_values():
    grid = target_grid()
    assert grid.shape == (27, 3)
    assert set(np.round(grid[:, 0], 3)) == {0.02, 0.06, 0.10}
    assert set(np.round(grid[:, 1], 3)) == {0.033, 0.04, 0.045}
    assert set(np.round(grid[:, 2], 3)) == {-0.5, 0.0, 0.5}
    assert len({tuple(row) for row in grid}) == 27


# ------------------------------------------------------------------- filtering


def test_filter_all_in_range():
    x = domain.latin_hypercube_sample(50, seed=0)
    valid, yield_rate = filter_designs(x)
    assert yield_rate == 1.0
    assert valid.shape == (50, 6)


def test_filter_all_out_of_range():
    x = domain.latin_hypercube_sample(20, seed=1)
    x[:, 0] = 0.95  # R_A beyond its bound on every row
    valid, yield_rate = filter_designs(x)
    assert yield_rate == 0.0
    assert valid.shape[0] == 0


def test_filter_rounds_hole_count():
    x = domain.latin_hypercube_sample(10, seed=2).astype(float)
    x[:, domain.N_H_INDEX] = 5.4
    valid, yield_rate = filter_designs(x)
    assert yield_rate == 1.0
    assert np.all(valid[:, domain.N_H_INDEX] == 5.0)


def test_filter_drops_out_of_range_after_rounding():
    x = domain.latin_hypercube_sample(4, seed=3).astype(float)
    x[0, domain.N_H_INDEX] = 10.4  # rounds to 10, valid
    x[1, domain.N_H_INDEX] = 10.6  # rounds to 11, invalid
    valid, yield_rate = filter_designs(x)
    assert yield_rate == 0.75


# ------------------------------------------------------------------- selection


def selection_fixture(n=100, seed=4):
    rng = np.random.default_rng(seed)
    x = domain.latin_hypercube_sample(n, seed=seed)
    predictions = np.column_stack(
        [rng.uniform(0.02, 0.15, n), rng.uniform(0.03, 0.05, n), rng.uniform(-1, 1, n)]
    )
    ranges = np.array([0.13, 0.02, 2.2])
    mean = (domain.PARAM_LO + domain.PARAM_HI) / 2
    std = (domain.PARAM_HI - domain.PARAM_LO) / 4
    return x, predictions, ranges, mean, std


def test_prevalidate_pool_twenty_percent_then_k():
    x, predictions, ranges, mean, std = selection_fixture(100)
    result = prevalidate_select(
        x, predictions, np.array([0.06, 0.04, 0.0]), ranges, mean, std, k=15
    )
    assert result["pool_size"] == 20
    assert result["selected"].shape == (15, 6)
    assert not result["shortfall"]


def test_prevalidate_k1_returns_best_ranked():
    x, predictions, ranges, mean, std = selection_fixture(60)
    target = np.array([0.06, 0.04, 0.0])
    result = prevalidate_select(x, predictions, target, ranges, mean, std, k=1)
    distance = np.sqrt((((predictions - target) / ranges) ** 2).sum(axis=1))
    np.testing.assert_array_equal(result["selected"][0], x[np.argmin(distance)])


def test_prevalidate_duplicates_not_selected_while_distinct_remain():
    x, predictions, ranges, mean, std = selection_fixture(40)
    x = np.vstack([np.tile(x[0], (30, 1)), x[:10]])  # 30 duplicates + 10 distinct
    predictions = np.vstack([np.tile(predictions[0], (30, 1)), predictions[:10]])
    result = prevalidate_select(
        x, predictions, np.array([0.06, 0.04, 0.0]), ranges, mean, std,
        k=8, pool_fraction=1.0,
    )
    unique_rows = {tuple(row) for row in result["selected"]}
    assert len(unique_rows) == 8


def test_prevalidate_shortfall_returns_all():
    x, predictions, ranges, mean, std = selection_fixture(7)
    result = prevalidate_select(
        x, predictions, np.array([0.06, 0.04, 0.0]), ranges, mean, std, k=15
    )
    assert result["shortfall"]
    assert result["selected"].shape == (7, 6)


# ------------------------------------------------------------------ evaluation


def test_clip_growth_rate_counts():
    labels = np.array([[0.05, 0.04, 1.4], [0.05, 0.04, 0.2], [0.05, 0.04, 1.01]])
    clipped, count = clip_growth_rate(labels)
    assert count == 2
    assert clipped[:, 2].max() == 1.0


def test_accuracy_rows_hand_fixture():
    # one target vector, five designs, hand-computed mu/sigma/mae
    target = np.array([0.06, 0.04, 0.5])
    labels = np.array(
        [
            [0.050, 0.041, 0.4],
            [0.070, 0.039, 0.6],
            [0.060, 0.040, 0.5],
            [0.055, 0.042, 1.2],
            [0.065, 0.038, 0.3],
        ]
    )
    results = [{"target": target, "yield": 1.0, "selected": np.zeros((5, 6))}]
    rows = accuracy_rows(results, [labels])
    by_label = {(r["label"], r["target"]): r for r in rows}

    um = by_label[("U_M", 0.06)]
    assert um["mu"] == pytest.approx(0.06, abs=1e-12)
    assert um["sigma"] == pytest.approx(np.std([0.05, 0.07, 0.06, 0.055, 0.065]), abs=1e-12)
    assert um["mae"] == pytest.approx(np.mean([0.01, 0.01, 0.0, 0.005, 0.005]), abs=1e-12)

    g = by_label[("G", 0.5)]
    # G=1.2 clips to 1.0 for reporting
    g_clipped = [0.4, 0.6, 0.5, 1.0, 0.3]
    assert g["mu"] == pytest.approx(np.mean(g_clipped), abs=1e-12)
    assert g["mae"] == pytest.approx(np.mean(np.abs(np.array(g_clipped) - 0.5)), abs=1e-12)
    assert g["clipped"] == 1
    assert g["sign_match"] == 1.0


def test_accuracy_rows_structure_full_grid():
    targets = target_grid()
    results = [
        {"target": t, "yield": 1.0, "selected": np.zeros((2, 6))} for t in targets
    ]
    labels = [np.tile([[0.06, 0.04, 0.0]], (2, 1)) for _ in targets]
    rows = accuracy_rows(results, labels)
    assert len(rows) == 9  # 3 labels x 3 target values
    for row in rows:
        assert row["n"] == 2 * 9  # 9 grid vectors share each target value


def test_comparison_rows_zero_delta_for_identical():
    rows = [{"label": "U_M", "target": 0.02, "mae": 0.01}]
    comparison = comparison_rows(rows, rows)
    assert comparison[0]["delta_pct"] == 0.0
    assert comparison[0]["eps_inn"] == comparison[0]["eps_gp"]


def test_comparison_table_shape():
    inn_rows = [{"label": l, "target": t, "mae": 0.01}
                for l in workflow.TARGET_VALUES for t in workflow.TARGET_VALUES[l]]
    gp_rows = [{"label": l, "target": t, "mae": 0.02}
               for l in workflow.TARGET_VALUES for t in workflow.TARGET_VALUES[l]]
    comparison = comparison_rows(inn_rows, gp_rows)
    assert len(comparison) == 9
    assert all(row["delta_pct"] == pytest.approx(50.0) for row in comparison)


# -------------------------------------------------------------- protocol parity


def test_both_branches_share_filter_and_selection(monkeypatch):
    calls = {"filter": 0, "select": 0}
    true_filter = workflow.filter_designs
    true_select = workflow.prevalidate_select

    def counting_filter(x):
        calls["filter"] += 1
        return true_filter(x)

    def counting_select(*args, **kwargs):
        calls["select"] += 1
        return true_select(*args, **kwargs)

    monkeypatch.setattr(workflow, "filter_designs", counting_filter)
    monkeypatch.setattr(workflow, "prevalidate_select", counting_select)

    x = domain.latin_hypercube_sample(40, seed=5)
    ranges = np.array([0.13, 0.02, 2.2])
    mean = (domain.PARAM_LO + domain.PARAM_HI) / 2
    std = (domain.PARAM_HI - domain.PARAM_LO) / 4
    targets = np.array([[0.06, 0.04, 0.0]])

    def fake_predict(valid):
        return np.tile([[0.06, 0.04, 0.0]], (valid.shape[0], 1))

    for branch in ("inn-style", "gp-style"):
        workflow.run_selection_protocol(
            lambda i, t: x, fake_predict, targets, ranges, mean, std, k=5
        )
    assert calls == {"filter": 2, "select": 2}


def test_render_tables_smoke():
    rows = [{"label": "G", "target": 0.5, "mu": 0.45, "sigma": 0.1, "mae": 0.08,
             "n": 135, "clipped": 3}]
    text = workflow.render_accuracy_table(rows)
    assert "G" in text and "135" in text
    comparison = [{"label": "G", "target": 0.5, "eps_inn": 0.08, "eps_gp": 0.2,
                   "delta_pct": 60.0}]
    assert "60.00" in workflow.render_comparison_table(comparison)


# --------------------------------------------------------------------- pipeline


def test_pipeline_config_roundtrip():
    config = mini_pipeline_config(seed=3)
    back = PipelineConfig.from_dict(config.to_dict())
    assert back == config


def test_mini_pipeline_reproducible_hashes(tmp_path):
    config = mini_pipeline_config(seed=11)
    stages = ("datagen", "surrogates", "augment", "train", "generate", "validate")
    manifest_a = workflow.run_pipeline(tmp_path / "a", config, stages=stages)
    manifest_b = workflow.run_pipeline(tmp_path / "b", config, stages=stages)
    assert manifest_a["files"] == manifest_b["files"]
    assert len(manifest_a["files"]) >= 4


def test_pipeline_writes_readable_artifacts(tmp_path):
    config = mini_pipeline_config(seed=13)
    manifest = workflow.run_pipeline(
        tmp_path, config, stages=("datagen", "surrogates", "augment")
    )
    ds = domain.dataset_read(tmp_path / "dataset.csv")
    assert len(ds) == config.n_data
    augmented = domain.dataset_read(tmp_path / "augmented.csv",
                                    provenance="surrogate-augmented")
    assert len(augmented) == config.augment_n
    assert (tmp_path / "manifest.json").exists()
    for name in manifest["files"]:
        assert (tmp_path / name).exists()


def test_default_config_full_scale():
    config = PipelineConfig()
    assert config.n_data == 1295
    assert config.generate_count == 5000
    assert config.select_k == 15
    assert config.baseline_starts == 2000
    assert config.loss_weights == (2000.0, 4000.0, 400.0)
    assert (config.flow_blocks, config.flow_width) == (10, 115)
    assert config.train_epochs == 3000 and config.train_drops == (1000, 2000)
    assert config.augment_n == 200_000


def test_pipeline_writes_27_candidate_files(tmp_path):
    config = mini_pipeline_config(seed=5)
    workflow.run_pipeline(
        tmp_path, config,
        stages=("datagen", "surrogates", "augment", "train", "generate", "validate"),
    )
    files = sorted(p.name for p in tmp_path.glob("candidates_*.csv"))
    assert len(files) == 27
