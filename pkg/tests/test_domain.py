import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from combustor_inn import domain
from combustor_inn.domain import (
    DesignParams,
    LabeledDataset,
    NormalizationStats,
    ParseError,
    RangeError,
    StatsError,
)


def midpoint_design(n_h=6) -> np.ndarray:
    x = (domain.PARAM_LO + domain.PARAM_HI) / 2.0
    x[domain.N_H_INDEX] = n_h
    return x


# ------------------------------------------------------------------------- LHS


def test_lhs_quartile_stratification_n4():
    x = domain.latin_hypercube_sample(4, seed=3)
    unit = (x - domain.PARAM_LO) / (domain.PARAM_HI - domain.PARAM_LO)
    for j, name in enumerate(domain.PARAM_NAMES):
        if name == "N_H":
            continue
        strata = np.floor(unit[:, j] * 4).astype(int).clip(max=3)
        assert sorted(strata) == [0, 1, 2, 3], name


@settings(max_examples=12, deadline=None)
@given(n=st.sampled_from([1, 2, 7, 53, 400, 10_000]), seed=st.integers(0, 2**31))
def test_lhs_stratification_property(n, seed):
    rng = np.random.default_rng(seed)
    u = domain.latin_hypercube_unit(n, 6, rng)
    for j in range(6):
        strata = np.floor(u[:, j] * n).astype(int).clip(max=n - 1)
        assert np.array_equal(np.sort(strata), np.arange(n))


def test_lhs_full_scale_deterministic_and_valid():
    a = domain.latin_hypercube_sample(1295, seed=42)
    b = domain.latin_hypercube_sample(1295, seed=42)
    assert a.shape == (1295, 6)
    assert np.array_equal(a, b)
    domain.validate_params(a)
    assert np.all(a[:, domain.N_H_INDEX] == np.round(a[:, domain.N_H_INDEX]))


def test_lhs_different_seeds_differ():
    a = domain.latin_hypercube_sample(16, seed=0)
    b = domain.latin_hypercube_sample(16, seed=1)
    assert not np.array_equal(a, b)


def test_lhs_zero_rows_is_error():
    with pytest.raises(ValueError):
        domain.latin_hypercube_sample(0, seed=0)


# ---------------------------------------------------------------------- oracle


def test_oracle_dp_minimum_corner():
    x = midpoint_design()
    x[0] = 0.83  # R_A at top of range
    x[3] = 0.35  # R_D at bottom
    labels = domain.oracle_evaluate(x)
    assert labels[1] == pytest.approx(0.030, abs=1e-15)


def test_oracle_hole_count_minimum_at_8():
    base = midpoint_design()
    u_m = []
    for n_h in range(2, 11):
        x = base.copy()
        x[domain.N_H_INDEX] = n_h
        u_m.append(domain.oracle_evaluate(x)[0])
    assert int(np.argmin(u_m)) + 2 == 8
    assert u_m[8 - 2] < u_m[0]  # N_H=8 mixes better than N_H=2


def test_oracle_midpoint_matches_hand_evaluation():
    x = midpoint_design(n_h=6)
    u_m, dp, g = domain.oracle_evaluate(x)

    # independent hand evaluation of the closed forms
    r_a = r_d = r_l = r_p = 0.5
    dp_hand = 0.030 + 0.010 * r_d**2 + 0.008 * (1 - r_a) + 0.002 * r_d * (1 - r_a)
    h_hand = 0.5 + 0.5 * ((6 - 8) / 6) ** 2
    um_hand = 0.005 + 0.14 * h_hand * math.exp(-1.2 * r_l) * (1 - 0.3 * r_d) * (0.7 + 0.3 * r_a)
    tau = (32.5 * 8.0 - 80.0) / (540.0 - 80.0)
    g_hand = (1.1 - 0.6 * r_p) * math.cos(2 * math.pi * (1.3 * tau + 0.45 * r_p)) - 0.1

    assert dp == pytest.approx(dp_hand, abs=1e-12)
    assert u_m == pytest.approx(um_hand, abs=1e-12)
    assert g == pytest.approx(g_hand, abs=1e-12)


def test_oracle_out_of_range_names_coordinate():
    x = midpoint_design()
    x[3] = 0.60
    with pytest.raises(RangeError, match="R_D"):
        domain.oracle_evaluate(x)


def test_oracle_label_ranges():
    x = domain.latin_hypercube_sample(4000, seed=9)
    y = domain.oracle_evaluate(x)
    u_m, dp, g = y[:, 0], y[:, 1], y[:, 2]
    assert 0.012 < u_m.min() and u_m.max() < 0.16
    assert 0.030 < dp.min() and dp.max() < 0.050
    assert -1.2 < g.min() and g.max() < 1.1
    assert (g > 0).any() and (g < 0).any()


def test_oracle_dp_monotonic_in_rd_and_ra():
    base = midpoint_design()
    rd_grid = np.linspace(0.35, 0.55, 9)
    ra_grid = np.linspace(0.63, 0.83, 9)
    for ra in ra_grid:
        dps = []
        for rd in rd_grid:
            x = base.copy()
            x[0], x[3] = ra, rd
            dps.append(domain.oracle_evaluate(x)[1])
        assert np.all(np.diff(dps) > 0), "dp_rel must strictly increase in R_D"
    for rd in rd_grid:
        dps = []
        for ra in ra_grid:
            x = base.copy()
            x[0], x[3] = ra, rd
            dps.append(domain.oracle_evaluate(x)[1])
        assert np.all(np.diff(dps) < 0), "dp_rel must strictly decrease in R_A"


def test_oracle_growth_rate_sign_mixing_grid():
    # 50x50 grid in (D_M * R_L, L_P); each product realized by an in-range pair.
    products = np.linspace(80.0, 540.0, 50)
    l_ps = np.linspace(200.0, 900.0, 50)
    g = np.empty((50, 50))
    for i, prod in enumerate(products):
        r_l = min(max(prod / 45.0, 4.0), 12.0)
        d_m = min(max(prod / r_l, 20.0), 45.0)
        for j, l_p in enumerate(l_ps):
            x = midpoint_design()
            x[2], x[4], x[5] = d_m, r_l, l_p
            g[i, j] = domain.oracle_evaluate(x)[2]
    assert (g > 0).any() and (g < 0).any()
    frac_positive = (g > 0).mean(axis=0)
    assert frac_positive[:5].mean() > frac_positive[-5:].mean()


def test_oracle_noise_mode_off_by_default_and_seeded():
    x = domain.latin_hypercube_sample(10, seed=1)
    clean = domain.oracle_evaluate(x)
    assert np.array_equal(clean, domain.oracle_evaluate(x, noise_sigma=(0, 0, 0)))
    noisy = domain.oracle_evaluate(
        x, noise_sigma=(0.01, 0.001, 0.05), rng=np.random.default_rng(0)
    )
    assert not np.array_equal(clean, noisy)


# ---------------------------------------------------------------- growth rate


def test_growth_rate_zero_imaginary_part():
    assert domain.growth_rate_from_eigenfrequency(100.0, 0.0) == 0.0


def test_growth_rate_inversion_of_exponential():
    omega_re = 540.0
    omega_im = -math.log(2.0) / (2 * math.pi) * omega_re
    assert domain.growth_rate_from_eigenfrequency(omega_re, omega_im) == pytest.approx(1.0)


def test_growth_rate_hand_value():
    expected = math.exp(-0.2 * math.pi) - 1.0
    assert domain.growth_rate_from_eigenfrequency(540.0, 54.0) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(-0.4665, abs=5e-4)


def test_growth_rate_zero_real_part_is_error():
    with pytest.raises(ValueError):
        domain.growth_rate_from_eigenfrequency(0.0, 10.0)


# ------------------------------------------------------------------ mass flows


def test_mass_flow_zero_fuel_fraction():
    x = DesignParams(0.7, 6, 30.0, 0.4, 8.0, 500.0)
    _, mdot_f = domain.mass_flows(x, z_fg=0.0)
    assert mdot_f == 0.0


def test_mass_flow_hand_values():
    rho = 20e5 / (287.0 * 773.15)
    assert rho == pytest.approx(9.013, abs=5e-4)
    x = DesignParams(0.7, 6, 20.0, 0.4, 8.0, 500.0)
    mdot_a, mdot_f = domain.mass_flows(x)
    assert mdot_a == pytest.approx(100.0 * rho * math.pi * 0.01**2, rel=1e-12)
    assert mdot_a == pytest.approx(0.2832, abs=5e-4)
    assert mdot_f == pytest.approx(mdot_a * 0.03 / 0.97, rel=1e-12)


def test_dependent_geometry_relations():
    x = DesignParams(0.7, 5, 30.0, 0.4, 8.0, 500.0)
    geo = domain.dependent_geometry(x)
    assert geo.l_m == 240.0
    assert geo.d_l == 12.0
    assert geo.l_l == pytest.approx(48.0)
    assert geo.d_c == 120.0
    assert geo.l_c == 1000.0 and geo.r_c == 4.0
    assert geo.n_vg == 3  # round(5/2) half-up
    assert domain.dependent_geometry(DesignParams(0.7, 2, 30.0, 0.4, 8.0, 500.0)).n_vg == 2


# --------------------------------------------------------------- normalization


def test_normalize_mean_vector_is_zero():
    rng = np.random.default_rng(2)
    x = rng.normal(3.0, 2.0, (50, 6))
    y = rng.normal(-1.0, 0.5, (50, 3))
    stats = domain.compute_stats(x, y)
    np.testing.assert_allclose(domain.normalize(stats.x_mean, stats.x_mean, stats.x_std), 0.0)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_normalize_roundtrip(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(0.0, 5.0, (100, 6)) + rng.uniform(-3, 3, 6)
    stats_mean, stats_std = x.mean(axis=0), x.std(axis=0) + 0.1
    back = domain.denormalize(domain.normalize(x, stats_mean, stats_std), stats_mean, stats_std)
    assert np.max(np.abs(back - x)) < 1e-12


def test_standardized_columns_have_unit_stats():
    rng = np.random.default_rng(7)
    x = rng.normal(10.0, 4.0, (500, 6))
    y = rng.normal(0.0, 1.0, (500, 3))
    stats = domain.compute_stats(x, y)
    z = domain.normalize(x, stats.x_mean, stats.x_std)
    np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=1e-10)
    np.testing.assert_allclose(z.std(axis=0), 1.0, atol=1e-10)


def test_zero_std_raises_stats_error():
    with pytest.raises(StatsError):
        NormalizationStats(
            x_mean=np.zeros(6), x_std=np.zeros(6), y_mean=np.zeros(3), y_std=np.ones(3)
        )


# ----------------------------------------------------------------- persistence


def test_dataset_roundtrip(tmp_path):
    x = domain.latin_hypercube_sample(1295, seed=12)
    y = domain.oracle_evaluate(x)
    ds = LabeledDataset(x, y)
    path = tmp_path / "data.csv"
    domain.dataset_write(path, ds)
    loaded = domain.dataset_read(path)
    assert len(loaded) == 1295
    assert np.max(np.abs(loaded.params - x)) < 1e-12
    assert np.max(np.abs(loaded.labels - y)) < 1e-12


def test_dataset_header_mismatch(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(ParseError, match="line 1"):
        domain.dataset_read(path)


def test_dataset_malformed_row_reports_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text(",".join(domain.CSV_HEADER) + "\n0.7,6,30,0.4,8,500,0.05,0.04,oops\n")
    with pytest.raises(ParseError, match="line 2"):
        domain.dataset_read(path)


def test_dataset_out_of_range_row_names_coordinate(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text(",".join(domain.CSV_HEADER) + "\n0.9,6,30,0.4,8,500,0.05,0.04,0.1\n")
    with pytest.raises(RangeError, match="R_A"):
        domain.dataset_read(path)


def test_dataset_write_is_deterministic(tmp_path):
    x = domain.latin_hypercube_sample(20, seed=5)
    ds = LabeledDataset(x, domain.oracle_evaluate(x))
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    domain.dataset_write(p1, ds)
    domain.dataset_write(p2, ds)
    assert p1.read_bytes() == p2.read_bytes()
