"""Core estimating-function abstractions.

An estimator is described by a per-unit function psi(O_i, theta) returning a
length-p vector. The dataset is split into m independent units (single rows or
whole clusters); the point estimate is the root of sum_i psi(O_i, theta).
This module defines the data-unit containers, the spec that builds per-unit
psi callables, and the stacking of several specs into one joint system.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .exceptions import ConfigError, ContractViolationError, LayoutError, SchemaError


@dataclass(frozen=True)
class DataUnit:
    """One independent unit: a block of equal-length named columns.

    A unit is a single row for iid data or a whole cluster for grouped data.
    """

    unit_id: object
    columns: dict[str, np.ndarray]

    def __post_init__(self):
        if not self.columns:
            raise SchemaError(f"unit {self.unit_id!r} has no columns")
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) != 1:
            raise SchemaError(f"unit {self.unit_id!r} has ragged columns")
        if lengths == {0}:
            raise SchemaError(f"unit {self.unit_id!r} has no rows")

    @property
    def n_rows(self) -> int:
        return len(next(iter(self.columns.values())))

    def col(self, name: str) -> np.ndarray:
        try:
            return self.columns[name]
        except KeyError:
            raise SchemaError(f"unit {self.unit_id!r}: missing column {name!r}") from None

    def numeric(self, name: str) -> np.ndarray:
        """Column as float64; raises if the column is non-numeric."""
        values = self.col(name)
        if values.dtype.kind not in "fiub":
            raise SchemaError(f"unit {self.unit_id!r}: column {name!r} is not numeric")
        return np.asarray(values, dtype=float)


@dataclass(frozen=True)
class UnitPartition:
    """Ordered split of a dataset into independent units."""

    units: tuple[DataUnit, ...]

    def __post_init__(self):
        object.__setattr__(self, "units", tuple(self.units))
        if len(self.units) < 1:
            raise ConfigError("a partition needs at least one unit")

    @property
    def m(self) -> int:
        return len(self.units)


@dataclass(frozen=True)
class EstimatorSpec:
    """Builder of per-unit estimating functions.

    ``outer_build(unit, **outer_args)`` runs once per unit and returns a
    callable ``fn(theta, **inner_args)``. In ``rows`` mode the callable
    returns per-row contributions (shape ``(n_rows, p)`` or ``(p,)`` for a
    single row) which are summed within the unit; in ``block`` mode it
    returns the unit's length-p vector directly (cluster-level estimating
    functions such as GEE).

    ``full_theta`` marks a spec that, inside :func:`stack`, reads the entire
    stacked parameter vector instead of its own slice. Its output length is
    still ``p``.
    """

    p: int
    outer_build: Callable
    outer_args: dict = field(default_factory=dict)
    inner_args: dict = field(default_factory=dict)
    unit_mode: str = "rows"
    full_theta: bool = False
    validate_partition: Callable[[UnitPartition], None] | None = None

    def __post_init__(self):
        if self.p < 1:
            raise ConfigError("parameter dimension p must be >= 1")
        if self.unit_mode not in ("rows", "block"):
            raise ConfigError(f"unknown unit_mode {self.unit_mode!r}")


class UnitPsi:
    """A built psi(O_i, .) for one unit: theta in, length-p vector out.

    Immutable and pure: repeated evaluation at the same theta returns
    bitwise-identical output.
    """

    __slots__ = ("_fn", "p", "input_dim", "unit_id", "_mode", "_inner")

    def __init__(self, fn, p, unit_id, mode, inner_args, input_dim=None):
        self._fn = fn
        self.p = p
        self.unit_id = unit_id
        self._mode = mode
        self._inner = inner_args
        self.input_dim = p if input_dim is None else input_dim

    def __call__(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.input_dim,):
            raise ContractViolationError(
                f"unit {self.unit_id!r}: theta has shape {theta.shape}, "
                f"expected ({self.input_dim},)"
            )
        out = np.asarray(self._fn(theta, **self._inner), dtype=float)
        if self._mode == "rows":
            if out.ndim == 1:  # a single row is its own sum
                if out.shape != (self.p,):
                    raise ContractViolationError(
                        f"unit {self.unit_id!r}: psi returned length {out.size}, "
                        f"expected {self.p}"
                    )
                return out
            if out.ndim != 2 or out.shape[1] != self.p:
                raise ContractViolationError(
                    f"unit {self.unit_id!r}: row contributions have shape "
                    f"{out.shape}, expected (n_rows, {self.p})"
                )
            return out.sum(axis=0)
        out = out.reshape(-1)
        if out.shape != (self.p,):
            raise ContractViolationError(
                f"unit {self.unit_id!r}: psi returned length {out.size}, expected {self.p}"
            )
        return out


def build_unit_psi(spec: EstimatorSpec, unit: DataUnit, _input_dim: int | None = None) -> UnitPsi:
    """Run the spec's outer builder on one unit. Does not evaluate psi."""
    fn = spec.outer_build(unit, **spec.outer_args)
    return UnitPsi(fn, spec.p, unit.unit_id, spec.unit_mode, spec.inner_args,
                   input_dim=_input_dim)


def check_theta(theta, p: int) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (p,):
        raise ConfigError(f"theta has shape {theta.shape}, expected ({p},)")
    if not np.all(np.isfinite(theta)):
        raise ConfigError("theta must be finite")
    return theta


def build_all(spec: EstimatorSpec, partition: UnitPartition) -> list[UnitPsi]:
    """Build every unit's psi once, running partition validation first."""
    if spec.validate_partition is not None:
        spec.validate_partition(partition)
    return [build_unit_psi(spec, unit) for unit in partition.units]


def sum_over_units(psis, theta) -> np.ndarray:
    """Sum psi over prebuilt units in fixed unit order.

    Out-of-domain arithmetic inside psi (sqrt or log of a negative probe) is
    allowed to yield non-finite values silently; callers treat them as
    recoverable.
    """
    total = np.zeros(psis[0].p)
    with np.errstate(all="ignore"):
        for psi in psis:
            total += psi(theta)
    return total


def sum_psi(spec: EstimatorSpec, partition: UnitPartition, theta) -> np.ndarray:
    """Evaluate G_m(theta) = sum_i psi(O_i, theta)."""
    theta = check_theta(theta, spec.p)
    return sum_over_units(build_all(spec, partition), theta)


def _normalize_layout(specs, layout):
    dims = [s.p for s in specs]
    total = sum(dims)
    if layout is None:
        offsets = np.cumsum([0] + dims)
        return [slice(int(a), int(b)) for a, b in zip(offsets[:-1], offsets[1:])]
    layout = list(layout)
    if len(layout) != len(specs):
        raise LayoutError(f"layout has {len(layout)} ranges for {len(specs)} specs")
    expected_start = 0
    slices = []
    for k, (start, stop) in enumerate(layout):
        start, stop = int(start), int(stop)
        if start != expected_start:
            raise LayoutError(
                f"range {k} starts at {start}, expected {expected_start} "
                "(layout must be contiguous, disjoint, and exhaustive)"
            )
        if stop - start != dims[k]:
            raise LayoutError(
                f"range {k} has width {stop - start}, spec has p={dims[k]}"
            )
        slices.append(slice(start, stop))
        expected_start = stop
    if expected_start != total:
        raise LayoutError(f"layout covers {expected_start} positions, expected {total}")
    return slices


def stack(specs, layout=None) -> EstimatorSpec:
    """Concatenate several specs into one joint estimating-function system.

    Each sub-spec sees only its own theta slice, except sub-specs flagged
    ``full_theta``, which receive the entire stacked vector (used when a
    component is defined in terms of other components' parameters). The
    stacked output is the concatenation of sub-outputs in layout order.
    ``layout`` defaults to consecutive ranges; if given, it must list one
    contiguous 0-based ``(start, stop)`` half-open range per spec.
    """
    specs = list(specs)
    if not specs:
        raise LayoutError("cannot stack zero specs")
    slices = _normalize_layout(specs, layout)
    total = sum(s.p for s in specs)

    def outer(unit):
        subs = [
            build_unit_psi(s, unit, _input_dim=total if s.full_theta else None)
            for s in specs
        ]
        def fn(theta):
            parts = [
                sub(theta if s.full_theta else theta[sl])
                for s, sub, sl in zip(specs, subs, slices)
            ]
            return np.concatenate(parts)
        return fn

    validators = [s.validate_partition for s in specs if s.validate_partition is not None]
    combined = None
    if validators:
        def combined(partition):
            for v in validators:
                v(partition)

    return EstimatorSpec(p=total, outer_build=outer, unit_mode="block",
                         validate_partition=combined)


def with_validator(spec: EstimatorSpec, validator) -> EstimatorSpec:
    """Spec copy with an extra partition validator chained after existing ones."""
    prev = spec.validate_partition

    def chained(partition):
        if prev is not None:
            prev(partition)
        validator(partition)

    return replace(spec, validate_partition=chained)
