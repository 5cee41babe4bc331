"""Combustor design space: parameter/label types, sampling, and the ground-truth oracle.

Independent design parameters (with valid ranges):

    R_A   free-area ratio at the vortex generators          [0.63, 0.83]
    N_H   number of fuel injection holes (integer)          {2, ..., 10}
    D_M   premixing tube diameter, mm                       [20, 45]
    R_D   lance diameter / premixing tube diameter          [0.35, 0.55]
    R_L   premixing tube length / diameter                  [4, 12]
    L_P   combustor plenum length, mm                       [200, 900]

Performance labels:

    U_M     fuel/air unmixedness at the premixing tube outlet
    dp_rel  relative total pressure loss
    G       thermoacoustic growth rate

The expensive simulation chain that would normally produce labels is replaced
by a deterministic analytic oracle (see ``oracle_evaluate``) that reproduces
the qualitative parameter/label relationships of the underlying physics:
the blockage trade-off between pressure loss and unmixedness, the nonlinear
hole-count optimum at N_H = 8, mixing decay along the tube, and a growth rate
governed by the convective time lag (the D_M * R_L product) and plenum length.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

PARAM_NAMES = ("R_A", "N_H", "D_M", "R_D", "R_L", "L_P")
LABEL_NAMES = ("U_M", "dp_rel", "G")

PARAM_BOUNDS = {
    "R_A": (0.63, 0.83),
    "N_H": (2.0, 10.0),
    "D_M": (20.0, 45.0),
    "R_D": (0.35, 0.55),
    "R_L": (4.0, 12.0),
    "L_P": (200.0, 900.0),
}

PARAM_LO = np.array([PARAM_BOUNDS[n][0] for n in PARAM_NAMES])
PARAM_HI = np.array([PARAM_BOUNDS[n][1] for n in PARAM_NAMES])

N_H_INDEX = PARAM_NAMES.index("N_H")

# Fixed geometry: combustion chamber length (mm) and dump ratio.
CHAMBER_LENGTH_MM = 1000.0
DUMP_RATIO = 4.0

# Air-side specific gas constant, J/(kg K); the mixture is air-dominated.
GAS_CONSTANT_AIR = 287.0

CSV_HEADER = list(PARAM_NAMES) + list(LABEL_NAMES)


class RangeError(ValueError):
    """A design parameter is outside its valid range; names the coordinate."""


class ParseError(ValueError):
    """A dataset file is malformed; carries the offending line number."""


class StatsError(ValueError):
    """Normalization statistics are degenerate (zero standard deviation)."""


@dataclass(frozen=True)
class DesignParams:
    r_a: float
    n_h: int
    d_m: float
    r_d: float
    r_l: float
    l_p: float

    def to_array(self) -> np.ndarray:
        return np.array([self.r_a, self.n_h, self.d_m, self.r_d, self.r_l, self.l_p])

    @classmethod
    def from_array(cls, x) -> "DesignParams":
        x = np.asarray(x, dtype=np.float64)
        return cls(float(x[0]), int(round(x[1])), float(x[2]), float(x[3]), float(x[4]), float(x[5]))


@dataclass(frozen=True)
class PerformanceLabels:
    u_m: float
    dp_rel: float
    g: float

    def to_array(self) -> np.ndarray:
        return np.array([self.u_m, self.dp_rel, self.g])


@dataclass(frozen=True)
class DependentGeometry:
    """Geometry derived from the independent parameters."""

    l_m: float  # premixing tube length, mm
    d_l: float  # lance diameter, mm
    l_l: float  # lance length, mm
    d_c: float  # chamber diameter, mm
    l_c: float  # chamber length, mm (fixed)
    r_c: float  # dump ratio (fixed)
    n_vg: int  # vortex generator count
    mdot_a: float  # air mass flow, kg/s
    mdot_f: float  # fuel mass flow, kg/s


@dataclass
class LabeledDataset:
    """Rows of (design parameters, labels) with a provenance tag."""

    params: np.ndarray  # (n, 6)
    labels: np.ndarray  # (n, 3)
    provenance: str = "oracle"

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.float64)
        if self.params.shape[0] != self.labels.shape[0]:
            raise ValueError("params and labels row counts differ")

    def __len__(self) -> int:
        return self.params.shape[0]

    def subset(self, idx) -> "LabeledDataset":
        return LabeledDataset(self.params[idx], self.labels[idx], self.provenance)

    def label_ranges(self) -> np.ndarray:
        return self.labels.max(axis=0) - self.labels.min(axis=0)


@dataclass(frozen=True)
class NormalizationStats:
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: np.ndarray
    y_std: np.ndarray

    def __post_init__(self):
        for name in ("x_std", "y_std"):
            std = getattr(self, name)
            if np.any(std <= 0.0):
                raise StatsError(f"{name} must be strictly positive, got {std}")


# --------------------------------------------------------------------- validity


def validate_params(x, name: str = "design") -> None:
    """Range-check one (6,) or many (n, 6) parameter vectors; N_H must be integral."""
    arr = np.atleast_2d(np.asarray(x, dtype=np.float64))
    for j, pname in enumerate(PARAM_NAMES):
        lo, hi = PARAM_BOUNDS[pname]
        col = arr[:, j]
        bad = (col < lo) | (col > hi) | ~np.isfinite(col)
        if bad.any():
            value = col[bad][0]
            raise RangeError(f"{name}: {pname}={value!r} outside [{lo}, {hi}]")
    nh = arr[:, N_H_INDEX]
    if np.any(nh != np.round(nh)):
        raise RangeError(f"{name}: N_H must be an integer in 2..10, got {nh[nh != np.round(nh)][0]}")


def params_valid_mask(x: np.ndarray) -> np.ndarray:
    """Vectorized validity mask for (n, 6) rows (N_H assumed already integral)."""
    arr = np.atleast_2d(np.asarray(x, dtype=np.float64))
    ok = np.all((arr >= PARAM_LO) & (arr <= PARAM_HI), axis=1)
    return ok & np.all(np.isfinite(arr), axis=1)


# --------------------------------------------------------------------- sampling


def latin_hypercube_unit(n: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-cube Latin Hypercube: one sample per equal stratum per coordinate."""
    if n < 1:
        raise ValueError("latin_hypercube_unit: n must be >= 1")
    u = np.empty((n, dim))
    for j in range(dim):
        u[:, j] = (rng.permutation(n) + rng.uniform(0.0, 1.0, n)) / n
    return u


def unit_to_params(u: np.ndarray) -> np.ndarray:
    """Map unit-cube samples to raw parameter coordinates; N_H rounded to its integer grid."""
    x = PARAM_LO + np.asarray(u) * (PARAM_HI - PARAM_LO)
    x[:, N_H_INDEX] = np.rint(x[:, N_H_INDEX])
    return x


def latin_hypercube_sample(n: int, seed: int) -> np.ndarray:
    """Draw n valid design-parameter rows by stratified Latin Hypercube sampling."""
    if n < 1:
        raise ValueError("latin_hypercube_sample: n must be >= 1")
    rng = np.random.default_rng(seed)
    return unit_to_params(latin_hypercube_unit(n, len(PARAM_NAMES), rng))


# ----------------------------------------------------------------------- oracle

# Closed-form label model, written over coordinates mapped affinely to [0, 1].
_DP_BASE = 0.030
_DP_QUAD_RD = 0.010
_DP_LIN_RA = 0.008
_DP_CROSS = 0.002

_UM_BASE = 0.005
_UM_AMP = 0.14
_UM_DECAY = 1.2

_TAU_LO = 80.0  # min of D_M * R_L
_TAU_HI = 540.0  # max of D_M * R_L
_G_AMP0 = 1.1
_G_AMP_SLOPE = 0.6
_G_FREQ_TAU = 1.3
_G_PHASE_LP = 0.45
_G_OFFSET = -0.1


def _unit(x: np.ndarray) -> np.ndarray:
    return (x - PARAM_LO) / (PARAM_HI - PARAM_LO)


def hole_count_factor(n_h) -> np.ndarray:
    """Mixing penalty of the hole count; minimal at 8 holes."""
    n_h = np.asarray(n_h, dtype=np.float64)
    return 0.5 + 0.5 * ((n_h - 8.0) / 6.0) ** 2


def oracle_evaluate(x, noise_sigma=None, rng: np.random.Generator | None = None) -> np.ndarray:
    """Deterministic performance labels for valid designs.

    With unit coordinates r = (x - lo)/(hi - lo):

        dp_rel = 0.030 + 0.010 r_D^2 + 0.008 (1 - r_A) + 0.002 r_D (1 - r_A)
        U_M    = 0.005 + 0.14 H(N_H) exp(-1.2 r_L) (1 - 0.3 r_D) (0.7 + 0.3 r_A)
        G      = (1.1 - 0.6 r_P) cos(2 pi (1.3 tau + 0.45 r_P)) - 0.1

    where H is :func:`hole_count_factor` and tau is the unit-mapped convective
    time-lag proxy D_M * R_L. An optional per-label Gaussian noise (off by
    default) emulates simulation scatter.
    """
    arr = np.atleast_2d(np.asarray(x, dtype=np.float64))
    single = np.asarray(x).ndim == 1
    validate_params(arr)

    r = _unit(arr)
    r_a, r_d, r_l = r[:, 0], r[:, 3], r[:, 4]
    n_h = arr[:, N_H_INDEX]

    dp = _DP_BASE + _DP_QUAD_RD * r_d**2 + _DP_LIN_RA * (1.0 - r_a) + _DP_CROSS * r_d * (1.0 - r_a)
    u_m = _UM_BASE + _UM_AMP * hole_count_factor(n_h) * np.exp(-_UM_DECAY * r_l) * (
        1.0 - 0.3 * r_d
    ) * (0.7 + 0.3 * r_a)

    tau = (arr[:, 2] * arr[:, 4] - _TAU_LO) / (_TAU_HI - _TAU_LO)
    r_p = r[:, 5]
    g = (_G_AMP0 - _G_AMP_SLOPE * r_p) * np.cos(
        2.0 * np.pi * (_G_FREQ_TAU * tau + _G_PHASE_LP * r_p)
    ) + _G_OFFSET

    labels = np.column_stack([u_m, dp, g])
    if noise_sigma is not None:
        sigma = np.asarray(noise_sigma, dtype=np.float64)
        if np.any(sigma < 0):
            raise ValueError("noise_sigma must be non-negative")
        if np.any(sigma > 0):
            if rng is None:
                raise ValueError("noise_sigma > 0 requires an explicit rng")
            labels = labels + rng.standard_normal(labels.shape) * sigma
    return labels[0] if single else labels


def growth_rate_from_eigenfrequency(omega_real: float, omega_imag: float) -> float:
    """Growth rate of an acoustic mode from its complex eigenfrequency parts."""
    if omega_real == 0.0:
        raise ValueError("omega_real must be nonzero")
    return math.exp(-2.0 * math.pi * omega_imag / omega_real) - 1.0


def mass_flows(
    x,
    v_m: float = 100.0,
    z_fg: float = 0.03,
    p: float = 20e5,
    t_a: float = 773.15,
) -> tuple[float, float]:
    """Air and fuel mass flow rates (kg/s) from continuity at the premixing tube outlet.

    The bulk velocity constraint v_m fixes the air flow through the tube cross
    section; the global fuel mixture fraction z_fg then fixes the fuel flow.
    Density is ideal-gas air at (p, t_a).
    """
    if isinstance(x, DesignParams):
        d_m_mm = x.d_m
    else:
        arr = np.asarray(x, dtype=np.float64)
        d_m_mm = float(arr[2]) if arr.ndim == 1 else float(arr[0, 2])
    rho = p / (GAS_CONSTANT_AIR * t_a)
    area = math.pi * (d_m_mm * 1e-3 / 2.0) ** 2
    mdot_a = v_m * rho * area
    mdot_f = mdot_a * z_fg / (1.0 - z_fg)
    return mdot_a, mdot_f


def dependent_geometry(x: DesignParams) -> DependentGeometry:
    """Derive the fixed/dependent geometry for one design."""
    validate_params(x.to_array())
    l_m = x.d_m * x.r_l
    mdot_a, mdot_f = mass_flows(x)
    return DependentGeometry(
        l_m=l_m,
        d_l=x.r_d * x.d_m,
        l_l=0.2 * l_m,
        d_c=DUMP_RATIO * x.d_m,
        l_c=CHAMBER_LENGTH_MM,
        r_c=DUMP_RATIO,
        n_vg=max(2, int(math.floor(x.n_h / 2.0 + 0.5))),
        mdot_a=mdot_a,
        mdot_f=mdot_f,
    )


# -------------------------------------------------------------- normalization


def compute_stats(x: np.ndarray, y: np.ndarray) -> NormalizationStats:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return NormalizationStats(
        x_mean=x.mean(axis=0),
        x_std=x.std(axis=0, ddof=0),
        y_mean=y.mean(axis=0),
        y_std=y.std(axis=0, ddof=0),
    )


def normalize(v: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    return (np.asarray(v, dtype=np.float64) - mean) / std


def denormalize(v: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    return np.asarray(v, dtype=np.float64) * std + mean


# ------------------------------------------------------------------ persistence


def format_float(v: float) -> str:
    """17 significant digits: enough for exact float64 round trips."""
    return format(float(v), ".17g")


def dataset_write(path, ds: LabeledDataset) -> None:
    validate_params(ds.params, name="dataset_write")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for prow, lrow in zip(ds.params, ds.labels):
            record = [format_float(v) for v in prow] + [format_float(v) for v in lrow]
            record[N_H_INDEX] = str(int(round(prow[N_H_INDEX])))
            writer.writerow(record)


def dataset_read(path, provenance: str = "oracle") -> LabeledDataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: line 1: empty file") from None
        if header != CSV_HEADER:
            raise ParseError(f"{path}: line 1: expected header {','.join(CSV_HEADER)}")
        params, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise ParseError(f"{path}: line {lineno}: expected {len(CSV_HEADER)} fields")
            try:
                values = [float(v) for v in row]
            except ValueError as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from None
            params.append(values[:6])
            labels.append(values[6:])
    params_arr = np.asarray(params, dtype=np.float64)
    try:
        validate_params(params_arr, name=str(path))
    except RangeError as exc:
        raise RangeError(f"validation failed reading {path}: {exc}") from None
    return LabeledDataset(params_arr, np.asarray(labels, dtype=np.float64), provenance)
