"""Damped Newton solver for sum_i psi(O_i, theta) = 0.

Each iteration takes a Newton step against a finite-difference Jacobian of
the summed estimating function; backtracking halves the step (up to 20 times)
until the sup-norm residual decreases. A non-finite residual counts as
non-decreasing, so the solver recovers from probes outside psi's domain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, NonConvergenceError, SingularMatrixError
from .model import EstimatorSpec, UnitPartition, build_all, check_theta, sum_over_units
from .numderiv import DerivControl, jacobian

_COND_LIMIT = 1e12
_MAX_HALVINGS = 20


@dataclass(frozen=True)
class RootControl:
    """Options for the root search. ``abs_tol`` bounds the sup norm of the sum."""

    start: tuple
    abs_tol: float = 1e-10
    max_iter: int = 100
    damping: str = "backtracking"

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise ConfigError("abs_tol must be positive")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1")
        if self.damping not in ("none", "backtracking"):
            raise ConfigError(f"unknown damping {self.damping!r}")


@dataclass(frozen=True)
class RootResult:
    theta_hat: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool


def _residual_norm(g):
    return float(np.max(np.abs(g))) if np.all(np.isfinite(g)) else float("inf")


def solve(spec: EstimatorSpec, partition: UnitPartition, ctrl: RootControl,
          deriv_control: DerivControl | None = None) -> RootResult:
    """Find theta with ||sum_i psi(O_i, theta)||_inf <= abs_tol.

    Raises :class:`SingularMatrixError` if a Newton Jacobian is singular and
    :class:`NonConvergenceError` (carrying the best iterate as ``.result``)
    if the iteration budget runs out or a backtracking search stalls.
    """
    theta = check_theta(np.asarray(ctrl.start, dtype=float), spec.p)
    psis = build_all(spec, partition)

    def g(t):
        return sum_over_units(psis, t)

    gv = g(theta)
    r = _residual_norm(gv)
    best_theta, best_r = theta, r

    for it in range(ctrl.max_iter):
        if r <= ctrl.abs_tol:
            return RootResult(theta, r, it, True)

        jac = jacobian(g, theta, deriv_control)
        if not np.all(np.isfinite(jac)) or np.linalg.cond(jac) > _COND_LIMIT:
            raise SingularMatrixError(
                f"Newton Jacobian singular or ill-conditioned at iteration {it}"
            )
        step = np.linalg.solve(jac, -gv)

        if ctrl.damping == "none":
            theta = theta + step
            gv = g(theta)
            r = _residual_norm(gv)
        else:
            accepted = False
            scale = 1.0
            for _ in range(_MAX_HALVINGS + 1):
                candidate = theta + scale * step
                if np.all(np.isfinite(candidate)):
                    gc = g(candidate)
                    rc = _residual_norm(gc)
                    if rc < r:
                        theta, gv, r = candidate, gc, rc
                        accepted = True
                        break
                scale /= 2.0
            if not accepted:
                raise NonConvergenceError(
                    f"backtracking stalled at iteration {it} (residual {r:.3e})",
                    result=RootResult(best_theta, best_r, it, False),
                )

        if r < best_r:
            best_theta, best_r = theta, r

    if r <= ctrl.abs_tol:
        return RootResult(theta, r, ctrl.max_iter, True)
    raise NonConvergenceError(
        f"no convergence in {ctrl.max_iter} iterations (best residual {best_r:.3e})",
        result=RootResult(best_theta, best_r, ctrl.max_iter, False),
    )
