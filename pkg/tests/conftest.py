import numpy as np
import pytest

from mestim import DataUnit, Dataset, EstimatorSpec, UnitPartition, partition_units


def mean_spec(y_col="Y"):
    """Custom one-parameter spec: psi = y - theta, summed over unit rows."""

    def outer(unit):
        y = unit.numeric(y_col)

        def psi(theta):
            return (y - theta[0])[:, np.newaxis]

        return psi

    return EstimatorSpec(p=1, outer_build=outer)


def row_partition(**columns):
    """One unit per row from plain arrays."""
    ds = Dataset(columns={k: np.asarray(v, dtype=float) for k, v in columns.items()})
    return partition_units(ds)


def single_unit(**columns):
    return DataUnit(unit_id=0,
                    columns={k: np.asarray(v, dtype=float) for k, v in columns.items()})


def rel_err(actual, expected):
    actual = np.asarray(actual, dtype=float)
    expected = np.asarray(expected, dtype=float)
    scale = np.max(np.abs(expected))
    if scale == 0.0:
        return float(np.max(np.abs(actual)))
    return float(np.max(np.abs(actual - expected)) / scale)


@pytest.fixture
def y123():
    return row_partition(Y=[1.0, 2.0, 3.0])


@pytest.fixture
def gee_dataset():
    """Two clusters of 27 rows with a three-level categorical design."""
    rng = np.random.default_rng(42)
    n = 54
    wool = np.array(["A"] * 27 + ["B"] * 27, dtype=object)
    tension_m = (np.arange(n) % 3 == 1).astype(float)
    tension_h = (np.arange(n) % 3 == 2).astype(float)
    breaks = 30.0 - 10.0 * tension_m - 15.0 * tension_h + rng.normal(0.0, 5.0, n)
    return Dataset(columns={"wool": wool, "tensionM": tension_m,
                            "tensionH": tension_h, "breaks": breaks})
