"""Numerical Jacobians: central differences and Richardson extrapolation.

Used for the bread matrices A_i = -d psi/d theta and for Newton steps. Probe
steps are scaled per coordinate, h_c = base_step * max(|x_c|, 1). Probes that
land outside a function's domain (non-finite output) fall back to a one-sided
difference and emit an :class:`EstimationWarning`.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, DerivativeError, EstimationWarning

_METHODS = ("central", "richardson")


@dataclass(frozen=True)
class DerivControl:
    """Differentiation options.

    ``base_step`` is the relative central-difference step. The Richardson
    method extrapolates central estimates computed at steps
    ``sqrt(base_step) * max(|x_c|, 1) / 2**j`` for ``j = 0 .. levels-1``,
    which keeps every probe in the truncation-dominated regime so the
    extrapolated result beats a plain central difference on smooth functions.
    """

    method: str = "central"
    base_step: float = 1e-6
    richardson_levels: int = 4

    def __post_init__(self):
        if self.method not in _METHODS:
            raise ConfigError(f"method must be one of {_METHODS}, got {self.method!r}")
        if not self.base_step > 0:
            raise ConfigError("base_step must be positive")
        if not 2 <= self.richardson_levels <= 10:
            raise ConfigError("richardson_levels must be in [2, 10]")


def _probe(f, x, c, h):
    xp = x.copy()
    xp[c] = x[c] + h
    xm = x.copy()
    xm[c] = x[c] - h
    with np.errstate(all="ignore"):
        fp = np.asarray(f(xp), dtype=float).reshape(-1)
        fm = np.asarray(f(xm), dtype=float).reshape(-1)
    return fp, fm, xp[c] - xm[c]


def _central_column(f, x, c, h, f0_cache):
    """Central difference for coordinate c, with per-entry one-sided fallback."""
    fp, fm, denom = _probe(f, x, c, h)
    ok_p = np.isfinite(fp)
    ok_m = np.isfinite(fm)
    if ok_p.all() and ok_m.all():
        return (fp - fm) / denom

    warnings.warn(
        f"one-sided difference used for coordinate {c}; accuracy reduced",
        EstimationWarning,
        stacklevel=3,
    )
    if f0_cache[0] is None:
        with np.errstate(all="ignore"):
            f0_cache[0] = np.asarray(f(x), dtype=float).reshape(-1)
    f0 = f0_cache[0]
    dead = ~ok_p & ~ok_m
    if dead.any():
        raise DerivativeError(f"coordinate {c}: probes non-finite on both sides")
    p_only = ok_p & ~ok_m
    m_only = ok_m & ~ok_p
    if not np.isfinite(f0[p_only | m_only]).all():
        raise DerivativeError(f"coordinate {c}: base point non-finite, no one-sided fallback")
    col = np.empty_like(fp)
    both = ok_p & ok_m
    col[both] = (fp[both] - fm[both]) / denom
    half = denom / 2.0
    col[p_only] = (fp[p_only] - f0[p_only]) / half
    col[m_only] = (f0[m_only] - fm[m_only]) / half
    return col


def _richardson_column(f, x, c, ctrl, f0_cache):
    levels = ctrl.richardson_levels
    h0 = np.sqrt(ctrl.base_step) * max(abs(x[c]), 1.0)
    estimates = []
    for j in range(levels):
        fp, fm, denom = _probe(f, x, c, h0 / 2.0**j)
        if not (np.isfinite(fp).all() and np.isfinite(fm).all()):
            # domain edge: drop back to the plain central step with fallback
            h = ctrl.base_step * max(abs(x[c]), 1.0)
            return _central_column(f, x, c, h, f0_cache)
        estimates.append((fp - fm) / denom)
    table = list(estimates)
    for k in range(1, levels):
        factor = 4.0**k
        for j in range(levels - 1, k - 1, -1):
            table[j] = (factor * table[j] - table[j - 1]) / (factor - 1.0)
    return table[levels - 1]


def jacobian(f, x, ctrl: DerivControl | None = None) -> np.ndarray:
    """Numerical Jacobian of ``f: R^p -> R^q`` at ``x``; entry (r, c) is df_r/dx_c."""
    ctrl = ctrl or DerivControl()
    x = np.asarray(x, dtype=float).reshape(-1)
    f0_cache = [None]
    cols = []
    for c in range(x.size):
        if ctrl.method == "richardson":
            cols.append(_richardson_column(f, x, c, ctrl, f0_cache))
        else:
            h = ctrl.base_step * max(abs(x[c]), 1.0)
            cols.append(_central_column(f, x, c, h, f0_cache))
    return np.column_stack(cols)


def neg_jacobian_at(unit_psi, theta, ctrl: DerivControl | None = None) -> np.ndarray:
    """A_i = -d psi(O_i, theta)/d theta, a square p x p matrix."""
    mat = -jacobian(unit_psi, theta, ctrl)
    p = unit_psi.p
    if mat.shape != (p, p):
        raise DerivativeError(
            f"unit {unit_psi.unit_id!r}: expected a {p}x{p} Jacobian, got {mat.shape}"
        )
    return mat
