"""Post-hoc covariance modifications over the sandwich components.

Two families are built in: a finite-sample bias correction that inflates the
per-unit meat through H_i(b) = {1 - min(b, {A_i Abar^{-1}}_jj)}^{-1/2}, and
autocorrelation-consistent meat replacements of the form
B_AC = sum_{i,j} w(i, j) psi_i psi_j' with user-supplied weights
(Newey-West lag-window weights provided).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .exceptions import ConfigError, CorrectionError, SingularMatrixError
from .sandwich import SandwichComponents, compute_sigma

_COND_LIMIT = 1e12


@dataclass(frozen=True)
class CorrectionSpec:
    """A named correction: pure function of the components plus fixed args."""

    name: str
    apply: Callable
    args: dict = field(default_factory=dict)


@dataclass(frozen=True)
class WeightRule:
    """Pairwise weights, either a fixed vector indexed by |i - j| or a function.

    Exactly one of the two variants must be set. With ``fixed_weights``,
    distances beyond the end of the vector get weight 0. ``weight_fn`` is
    called as ``weight_fn(i, j, **args)`` with 0-based unit positions.
    """

    fixed_weights: tuple | None = None
    weight_fn: Callable | None = None
    args: dict = field(default_factory=dict)

    def __post_init__(self):
        if (self.fixed_weights is None) == (self.weight_fn is None):
            raise ConfigError("set exactly one of fixed_weights / weight_fn")
        if self.fixed_weights is not None:
            w = np.asarray(self.fixed_weights, dtype=float)
            if not np.all(np.isfinite(w)):
                raise ConfigError("fixed_weights must be finite")

    def weight(self, i: int, j: int) -> float:
        if self.fixed_weights is not None:
            d = abs(i - j)
            w = self.fixed_weights
            return float(w[d]) if d < len(w) else 0.0
        return float(self.weight_fn(i, j, **self.args))


def newey_west_weight(i: int, j: int, lag: int) -> float:
    """Lag-window weight 1 - |i - j|/(lag + 1), zero beyond ``lag``."""
    if lag < 0:
        raise ConfigError("lag must be >= 0")
    d = abs(i - j)
    return 1.0 - d / (lag + 1.0) if d <= lag else 0.0


def pairwise_weighted_meat(ee_list, rule: WeightRule) -> np.ndarray:
    """B_AC = sum over all pairs (i, j) of w(i, j) * outer(psi_i, psi_j).

    Accumulated in fixed (i, then j) order; zero-weight pairs are skipped,
    which leaves the floating-point accumulation of the diagonal identical
    to the uncorrected meat when the rule is a Kronecker delta.
    """
    ee = [np.asarray(e, dtype=float) for e in ee_list]
    m = len(ee)
    p = ee[0].size
    meat = np.zeros((p, p))
    for i in range(m):
        for j in range(m):
            w = rule.weight(i, j)
            if np.isnan(w):
                raise CorrectionError(f"weight rule returned NaN for pair ({i}, {j})")
            if w == 0.0:
                continue
            meat += w * np.outer(ee[i], ee[j])
    return meat


def fay_bias_correction(components: SandwichComponents, b: float) -> np.ndarray:
    """Bias-corrected covariance via per-unit meat inflation.

    H_i(b) is diagonal with entries {1 - min(b, {A_i Abar^{-1}}_jj)}^{-1/2},
    where Abar = A/m; the corrected meat is sum_i H_i B_i H_i'. Diagonal
    influence values at or above 1 are capped by the min(b, .) term, never
    an error.
    """
    if not 0.0 < b < 1.0:
        raise ConfigError("b must be in (0, 1)")
    m = components.m
    a_bar = components.A / m
    if not np.all(np.isfinite(a_bar)) or np.linalg.cond(a_bar) > _COND_LIMIT:
        raise SingularMatrixError("bread matrix is singular; cannot bias-correct")
    a_bar_inv = np.linalg.solve(a_bar, np.eye(a_bar.shape[0]))

    p = a_bar.shape[0]
    meat = np.zeros((p, p))
    for a_i, b_i in zip(components.A_list, components.B_list):
        influence = np.diag(a_i @ a_bar_inv)
        h = (1.0 - np.minimum(b, influence)) ** -0.5
        meat += (h[:, np.newaxis] * b_i) * h[np.newaxis, :]
    return compute_sigma(components.A, meat)


def newey_west_correction(components: SandwichComponents, lag: int) -> np.ndarray:
    """Sandwich with the meat replaced by the Newey-West weighted pairwise sum."""
    rule = WeightRule(weight_fn=newey_west_weight, args={"lag": lag})
    meat = pairwise_weighted_meat(components.ee_list, rule)
    return compute_sigma(components.A, meat)


def apply_corrections(components: SandwichComponents, specs):
    """Run each correction on the same immutable components.

    Returns ``(results, errors)``: name-to-matrix for corrections that
    succeeded and name-to-exception for those that failed. One failure never
    aborts the others. Duplicate names are rejected up front.
    """
    specs = list(specs)
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate correction names: {sorted(names)}")
    results: dict[str, np.ndarray] = {}
    errors: dict[str, Exception] = {}
    p = components.A.shape[0]
    for s in specs:
        try:
            out = np.asarray(s.apply(components, **s.args), dtype=float)
            if out.shape != (p, p):
                raise CorrectionError(
                    f"correction {s.name!r} returned shape {out.shape}, expected ({p}, {p})"
                )
            results[s.name] = out
        except Exception as err:  # recorded per name, others still run
            errors[s.name] = err
    return results, errors
