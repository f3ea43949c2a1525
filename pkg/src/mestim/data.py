"""Dataset ingestion, unit partitioning, design matrices, synthetic generators.

CSV handling is RFC-4180 style with a required header, UTF-8, dot decimals.
Missing values are rejected at ingest: every downstream estimating-function
contract assumes complete units.

Random generation uses PCG64 streams spawned per column from a single seed
(numpy ``SeedSequence(seed).spawn``), so datasets are bit-reproducible for a
given seed. Multivariate normals apply the lower-triangular Cholesky factor
of the covariance to iid standard normals.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .exceptions import ConfigError, IngestError, SchemaError
from .model import DataUnit, UnitPartition

_MISSING_TOKENS = {"", "NA", "NaN", "nan"}

# Coefficients of the synthetic linear response Y4 = c0 + c1*X1 + c2*X2 + eps.
GEEXEX_Y4_COEF = (2.0, 3.0, -1.0)

# Fixed constants of the confounded-treatment generator.
LUNCEFORD_TAU0 = np.array([-1.0, -1.0, 1.0, 1.0])
LUNCEFORD_TAU1 = -LUNCEFORD_TAU0
LUNCEFORD_SIGMA = np.array([
    [1.0, 0.5, -0.5, -0.5],
    [0.5, 1.0, -0.5, -0.5],
    [-0.5, -0.5, 1.0, 0.5],
    [-0.5, -0.5, 0.5, 1.0],
])


@dataclass(frozen=True)
class Dataset:
    """Named equal-length columns. Zero rows is valid (header-only file)."""

    columns: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.columns:
            raise SchemaError("dataset has no columns")
        if len({len(v) for v in self.columns.values()}) != 1:
            raise SchemaError("dataset has ragged columns")

    @property
    def n_rows(self) -> int:
        return len(next(iter(self.columns.values())))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self.columns)


@dataclass(frozen=True)
class GenConfig:
    """Settings for the confounded-treatment generator."""

    n: int
    beta: tuple = (0.0, 0.6, -0.6, 0.6)
    nu: tuple = (0.0, -1.0, 1.0, -1.0, 2.0)
    xi: tuple = (-1.0, 1.0, 1.0)
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        if len(self.beta) != 4 or len(self.nu) != 5 or len(self.xi) != 3:
            raise ConfigError("expected beta of length 4, nu of length 5, xi of length 3")


def _cast_cells(cells, kind):
    """Cast every cell, or return (index, cell) of the first failure."""
    caster = int if kind == "int" else float
    out = []
    for i, cell in enumerate(cells):
        try:
            out.append(caster(cell))
        except ValueError:
            return None, (i, cell)
    return np.array(out, dtype=np.int64 if kind == "int" else float), None


def _check_finite(name, arr, lines):
    if not np.all(np.isfinite(arr)):
        bad = int(np.flatnonzero(~np.isfinite(arr))[0])
        raise IngestError(f"column {name!r}: non-finite value", line=lines[bad])


def _parse_column(name, cells, lines, hint):
    if hint == "str":
        return np.array(cells, dtype=object)
    if hint in ("float", "int"):
        arr, failure = _cast_cells(cells, hint)
        if failure is not None:
            i, cell = failure
            raise IngestError(f"column {name!r}: cannot parse {cell!r} as {hint}",
                              line=lines[i])
        if hint == "float":
            _check_finite(name, arr, lines)
        return arr
    if hint is not None:
        raise ConfigError(f"unknown schema hint {hint!r} for column {name!r}")

    if not cells:
        return np.array([], dtype=float)
    for kind in ("int", "float"):
        arr, failure = _cast_cells(cells, kind)
        if arr is not None:
            if kind == "float":
                _check_finite(name, arr, lines)
            return arr
    return np.array(cells, dtype=object)


def read_csv(path, schema=None) -> Dataset:
    """Parse a headed CSV file into typed columns.

    ``schema`` optionally maps column names to "float", "int", or "str",
    overriding type inference. Ragged rows, unparsable numeric cells, and
    missing-value tokens (empty, "NA", "NaN") raise :class:`IngestError`
    with the 1-based line number.
    """
    schema = schema or {}
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError("empty file: header row required", line=1) from None
        if len(set(header)) != len(header):
            raise IngestError("duplicate column names in header", line=1)
        raw = {name: [] for name in header}
        lines = []
        for row in reader:
            line_no = reader.line_num
            if len(row) != len(header):
                raise IngestError(
                    f"expected {len(header)} fields, found {len(row)}", line=line_no
                )
            for name, cell in zip(header, row):
                if cell in _MISSING_TOKENS:
                    raise IngestError(
                        f"column {name!r}: missing value (missing data unsupported)",
                        line=line_no,
                    )
                raw[name].append(cell)
            lines.append(line_no)

    columns = {
        name: _parse_column(name, cells, lines, schema.get(name))
        for name, cells in raw.items()
    }
    if not columns:
        raise IngestError("no columns found", line=1)
    return Dataset(columns=columns)


def write_csv(ds: Dataset, path) -> None:
    """Write a dataset; floats use shortest round-trip formatting."""
    names = list(ds.columns)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(names)
        for i in range(ds.n_rows):
            row = []
            for name in names:
                v = ds.columns[name][i]
                if isinstance(v, (float, np.floating)):
                    row.append(repr(float(v)))
                else:
                    row.append(v)
            writer.writerow(row)


def partition_units(ds: Dataset, unit_col: str | None = None) -> UnitPartition:
    """Split a dataset into units: one per row, or grouped by ``unit_col``.

    Groups appear in first-appearance order of the key values.
    """
    if ds.n_rows == 0:
        raise ConfigError("cannot partition a dataset with no rows")
    if unit_col is None:
        units = [
            DataUnit(unit_id=i, columns={k: v[i:i + 1] for k, v in ds.columns.items()})
            for i in range(ds.n_rows)
        ]
        return UnitPartition(units=tuple(units))

    if unit_col not in ds.columns:
        raise SchemaError(f"unit column {unit_col!r} not in dataset")
    keys = ds.columns[unit_col]
    groups: dict = {}
    for i, key in enumerate(keys):
        groups.setdefault(_as_key(key), []).append(i)
    units = []
    for key, rows in groups.items():
        idx = np.asarray(rows)
        units.append(DataUnit(unit_id=key,
                              columns={k: v[idx] for k, v in ds.columns.items()}))
    return UnitPartition(units=tuple(units))


def _as_key(value):
    return value.item() if isinstance(value, np.generic) else value


def design_matrix(unit: DataUnit, covariates, intercept: bool = True) -> np.ndarray:
    """Stack covariate columns into an (n_rows, k) matrix, ones column first if asked."""
    cols = []
    if intercept:
        cols.append(np.ones(unit.n_rows))
    for name in covariates:
        cols.append(unit.numeric(name))
    if not cols:
        raise ConfigError("design matrix needs an intercept or at least one covariate")
    return np.column_stack(cols)


def gen_geexex(m: int, seed: int) -> Dataset:
    """Two measurement columns plus a linear-model block.

    Y1 ~ N(5, 16), Y2 ~ N(2, 1), X1 and X2 standard normal, and
    Y4 = c0 + c1*X1 + c2*X2 + eps with eps ~ N(0, 1); the coefficients are
    ``GEEXEX_Y4_COEF`` and are recorded in the dataset metadata. Column
    stream order: Y1, Y2, X1, X2, eps.
    """
    if m < 2:
        raise ConfigError("m must be >= 2")
    streams = [np.random.Generator(np.random.PCG64(s))
               for s in np.random.SeedSequence(seed).spawn(5)]
    y1 = 5.0 + 4.0 * streams[0].standard_normal(m)
    y2 = 2.0 + streams[1].standard_normal(m)
    x1 = streams[2].standard_normal(m)
    x2 = streams[3].standard_normal(m)
    eps = streams[4].standard_normal(m)
    c0, c1, c2 = GEEXEX_Y4_COEF
    y4 = c0 + c1 * x1 + c2 * x2 + eps
    return Dataset(
        columns={"Y1": y1, "Y2": y2, "X1": x1, "X2": x2, "Y4": y4},
        meta={"y4_coef": GEEXEX_Y4_COEF, "seed": seed},
    )


def gen_lunceford(cfg: GenConfig) -> Dataset:
    """Confounded binary-treatment data with correlated covariates.

    X3 ~ Bern(0.2); V3 ~ Bern(0.75 X3 + 0.25 (1 - X3)); (X1, V1, X2, V2) is
    multivariate normal with covariance ``LUNCEFORD_SIGMA`` shifted by tau1
    when V3 = 1 and tau0 otherwise; Z ~ Bern(expit((1, X1, X2, X3) . beta));
    Y = (1, X1, X2, X3, Z) . nu + (V1, V2, V3) . xi + N(0, 1).
    Column stream order: X3, V3, quad block, Z, noise.
    """
    n = cfg.n
    streams = [np.random.Generator(np.random.PCG64(s))
               for s in np.random.SeedSequence(cfg.seed).spawn(5)]
    x3 = streams[0].binomial(1, 0.2, size=n).astype(float)
    v3 = streams[1].binomial(1, 0.75 * x3 + 0.25 * (1.0 - x3)).astype(float)
    chol = np.linalg.cholesky(LUNCEFORD_SIGMA)
    quad = streams[2].standard_normal((n, 4)) @ chol.T
    quad += np.where(v3[:, np.newaxis] == 1.0, LUNCEFORD_TAU1, LUNCEFORD_TAU0)
    x1, v1, x2, v2 = quad.T
    beta = np.asarray(cfg.beta, dtype=float)
    prob_z = expit(beta[0] + beta[1] * x1 + beta[2] * x2 + beta[3] * x3)
    z = streams[3].binomial(1, prob_z).astype(float)
    nu = np.asarray(cfg.nu, dtype=float)
    xi = np.asarray(cfg.xi, dtype=float)
    y = (nu[0] + nu[1] * x1 + nu[2] * x2 + nu[3] * x3 + nu[4] * z
         + xi[0] * v1 + xi[1] * v2 + xi[2] * v3
         + streams[4].standard_normal(n))
    return Dataset(
        columns={"Y": y, "X1": x1, "X2": x2, "X3": x3, "Z": z,
                 "V1": v1, "V2": v2, "V3": v3},
        meta={"seed": cfg.seed, "beta": tuple(cfg.beta), "nu": tuple(cfg.nu),
              "xi": tuple(cfg.xi)},
    )
