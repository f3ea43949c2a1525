"""Built-in estimating-function constructors.

Each constructor returns an :class:`EstimatorSpec`; none of them touches data
until the spec is built against a unit. Row-level specs return per-row
contribution matrices which the engine sums within each unit, so the same
spec works for row partitions and for cluster partitions.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

from .data import design_matrix
from .exceptions import ConfigError, EstimationWarning, SchemaError
from .model import EstimatorSpec, UnitPartition, stack, with_validator

_KINDS = ("linear", "logistic")


@dataclass(frozen=True)
class ModelSpec:
    """A regression layout: response, design columns, optional row mask.

    ``subset`` is a (column, value) pair; rows where the column differs from
    the value contribute zero to the score (rows are masked, not dropped, so
    the unit count is the same for every model in a stack).
    """

    kind: str
    response: str
    covariates: tuple = ()
    intercept: bool = True
    subset: tuple | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigError(f"kind must be one of {_KINDS}, got {self.kind!r}")
        object.__setattr__(self, "covariates", tuple(self.covariates))
        if not self.covariates and not self.intercept:
            raise ConfigError("model needs an intercept or at least one covariate")

    @property
    def dim(self) -> int:
        return len(self.covariates) + int(self.intercept)


@dataclass(frozen=True)
class GeeConfig:
    """Cluster estimating equations with an exchangeable working correlation."""

    model: ModelSpec
    alpha: float = 0.0
    phi: float = 1.0

    def __post_init__(self):
        if not -1.0 < self.alpha < 1.0:
            raise ConfigError("alpha must be in (-1, 1)")
        if not self.phi > 0:
            raise ConfigError("phi must be positive")


def moments_spec(y_col: str = "Y1") -> EstimatorSpec:
    """Mean and variance of one column: psi = (y - t1, (y - t1)^2 - t2)."""

    def outer(unit):
        y = unit.numeric(y_col)

        def psi(theta):
            d = y - theta[0]
            return np.column_stack([d, d * d - theta[1]])

        return psi

    return EstimatorSpec(p=2, outer_build=outer)


def ratio_spec(y1_col: str = "Y1", y2_col: str = "Y2") -> EstimatorSpec:
    """Two means plus their ratio: third equation t1 - t3*t2."""

    def outer(unit):
        y1 = unit.numeric(y1_col)
        y2 = unit.numeric(y2_col)

        def psi(theta):
            link = np.full(y1.shape, theta[0] - theta[2] * theta[1])
            return np.column_stack([y1 - theta[0], y2 - theta[1], link])

        return psi

    return EstimatorSpec(p=3, outer_build=outer)


def delta_spec(y_col: str = "Y1") -> EstimatorSpec:
    """Moments plus sqrt and log of the variance (delta-method transforms)."""

    def outer(unit):
        y = unit.numeric(y_col)

        def psi(theta):
            d = y - theta[0]
            sd_link = np.full(y.shape, np.sqrt(theta[1]) - theta[2])
            log_link = np.full(y.shape, np.log(theta[1]) - theta[3])
            return np.column_stack([d, d * d - theta[1], sd_link, log_link])

        return psi

    return EstimatorSpec(p=4, outer_build=outer)


def _subset_mask(unit, subset):
    if subset is None:
        return None
    col, value = subset
    return (unit.numeric(col) == value).astype(float)


def linear_score_spec(model: ModelSpec) -> EstimatorSpec:
    """Least-squares score: per-row x * (y - x . theta)."""
    if model.kind != "linear":
        raise ConfigError("linear_score_spec needs a linear ModelSpec")

    def outer(unit):
        x = design_matrix(unit, model.covariates, model.intercept)
        y = unit.numeric(model.response)
        mask = _subset_mask(unit, model.subset)

        def psi(theta):
            contrib = x * (y - x @ theta)[:, np.newaxis]
            return contrib if mask is None else contrib * mask[:, np.newaxis]

        return psi

    return EstimatorSpec(p=model.dim, outer_build=outer)


def logistic_score_spec(model: ModelSpec) -> EstimatorSpec:
    """Logistic-regression score: per-row x * (y - expit(x . theta))."""
    if model.kind != "logistic":
        raise ConfigError("logistic_score_spec needs a logistic ModelSpec")

    def outer(unit):
        x = design_matrix(unit, model.covariates, model.intercept)
        y = unit.numeric(model.response)
        if not np.isin(y, (0.0, 1.0)).all():
            raise SchemaError(
                f"unit {unit.unit_id!r}: logistic response {model.response!r} "
                "must be 0/1"
            )
        mask = _subset_mask(unit, model.subset)

        def psi(theta):
            contrib = x * (y - expit(x @ theta))[:, np.newaxis]
            return contrib if mask is None else contrib * mask[:, np.newaxis]

        return psi

    return EstimatorSpec(p=model.dim, outer_build=outer)


def _mean_and_derivative(kind, eta):
    if kind == "linear":
        return eta, np.ones_like(eta)
    mu = expit(eta)
    return mu, mu * (1.0 - mu)


def _variance_function(kind, mu):
    return np.ones_like(mu) if kind == "linear" else mu * (1.0 - mu)


def gee_spec(cfg: GeeConfig) -> EstimatorSpec:
    """Cluster-level psi = D' V^{-1} (y - mu) with V = phi W^1/2 R(alpha) W^1/2.

    The working correlation R(alpha) is exchangeable; it must be positive
    definite for every cluster size present, which for alpha in (-1, 1)
    fails only when alpha <= -1/(n_i - 1).
    """
    model = cfg.model

    def outer(unit):
        x = design_matrix(unit, model.covariates, model.intercept)
        y = unit.numeric(model.response)
        n = y.size
        if n > 1 and cfg.alpha <= -1.0 / (n - 1):
            raise ConfigError(
                f"exchangeable correlation with alpha={cfg.alpha} is not positive "
                f"definite for cluster size {n} (unit {unit.unit_id!r})"
            )
        corr = np.full((n, n), cfg.alpha)
        np.fill_diagonal(corr, 1.0)

        def psi(theta):
            eta = x @ theta
            mu, dmu = _mean_and_derivative(model.kind, eta)
            d_mat = x * dmu[:, np.newaxis]
            sd = np.sqrt(_variance_function(model.kind, mu))
            v = cfg.phi * (sd[:, np.newaxis] * corr * sd[np.newaxis, :])
            return d_mat.T @ np.linalg.solve(v, y - mu)

        return psi

    return EstimatorSpec(p=model.dim, outer_build=outer, unit_mode="block")


def _require_both_arms(z_col):
    def validate(partition: UnitPartition):
        seen = set()
        for unit in partition.units:
            values = np.unique(unit.numeric(z_col))
            extra = set(values) - {0.0, 1.0}
            if extra:
                raise SchemaError(
                    f"treatment column {z_col!r} must be 0/1, found {sorted(extra)}"
                )
            seen.update(values)
        if seen != {0.0, 1.0}:
            raise ConfigError(
                f"treatment column {z_col!r} has a single arm; "
                "both treated and untreated rows are required"
            )

    return validate


def doubly_robust_spec(propensity: ModelSpec, outcome0: ModelSpec,
                       outcome1: ModelSpec) -> EstimatorSpec:
    """Stacked risk-difference system: propensity score, two outcome models,
    and a final contrast parameter.

    The propensity model must be logistic; its response is the binary
    treatment column. Outcome models must be linear; they are masked to
    their own arm automatically. The last stacked parameter solves
    mean(rd_hat) where
    ``rd_hat = (Z*Y - (Z - e)*m1)/e - ((1 - Z)*Y - (Z - e)*m0)/(1 - e)``.
    """
    if propensity.kind != "logistic":
        raise ConfigError("propensity model must be logistic")
    if outcome0.kind != "linear" or outcome1.kind != "linear":
        raise ConfigError("outcome models must be linear")
    if outcome0.response != outcome1.response:
        raise ConfigError("outcome models must share a response column")
    z_col = propensity.response
    y_col = outcome0.response
    outcome0 = replace(outcome0, subset=(z_col, 0.0))
    outcome1 = replace(outcome1, subset=(z_col, 1.0))

    p_e, p_m0, p_m1 = propensity.dim, outcome0.dim, outcome1.dim
    e_slice = slice(0, p_e)
    m0_slice = slice(p_e, p_e + p_m0)
    m1_slice = slice(p_e + p_m0, p_e + p_m0 + p_m1)

    def contrast_outer(unit):
        z = unit.numeric(z_col)
        y = unit.numeric(y_col)
        x_e = design_matrix(unit, propensity.covariates, propensity.intercept)
        x_m0 = design_matrix(unit, outcome0.covariates, outcome0.intercept)
        x_m1 = design_matrix(unit, outcome1.covariates, outcome1.intercept)

        def psi(theta):
            e = expit(x_e @ theta[e_slice])
            saturated = (e <= 0.0) | (e >= 1.0)
            if saturated.any():
                row = int(np.flatnonzero(saturated)[0])
                warnings.warn(
                    f"propensity score saturated at 0/1 (unit {unit.unit_id!r}, "
                    f"row {row}); weights explode",
                    EstimationWarning,
                    stacklevel=2,
                )
            m0 = x_m0 @ theta[m0_slice]
            m1 = x_m1 @ theta[m1_slice]
            rd = (z * y - (z - e) * m1) / e - ((1.0 - z) * y - (z - e) * m0) / (1.0 - e)
            return (rd - theta[-1])[:, np.newaxis]

        return psi

    contrast = EstimatorSpec(p=1, outer_build=contrast_outer, full_theta=True)
    stacked = stack([
        logistic_score_spec(propensity),
        linear_score_spec(outcome0),
        linear_score_spec(outcome1),
        contrast,
    ])
    return with_validator(stacked, _require_both_arms(z_col))
