"""Empirical sandwich covariance: bread, meat, and the full estimation pipeline.

With A_i = -d psi(O_i, theta_hat)/d theta and B_i = psi_i psi_i', the
covariance estimate is A^{-1} B {A^{-1}}' computed from the summed matrices
A = sum A_i, B = sum B_i. This equals the mean-form estimator
Abar^{-1} Bbar {Abar^{-1}}'/m exactly; the three m factors cancel, so sums
are stored and no division is performed.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    ConfigError,
    DerivativeError,
    EstimationWarning,
    NonConvergenceError,
    SingularMatrixError,
)
from .model import EstimatorSpec, UnitPartition, build_all, check_theta, sum_over_units
from .numderiv import DerivControl, neg_jacobian_at
from .rootfind import RootControl, RootResult, solve

_COND_LIMIT = 1e12
_ASYMMETRY_TOL = 1e-8


@dataclass(frozen=True)
class SandwichComponents:
    """Per-unit and summed sandwich ingredients at theta_hat.

    ``A`` and ``B`` are the sums of ``A_list`` and ``B_list``; ``ee_list``
    holds the observed estimating-function values psi(O_i, theta_hat).
    """

    A: np.ndarray
    A_list: tuple[np.ndarray, ...]
    B: np.ndarray
    B_list: tuple[np.ndarray, ...]
    ee_list: tuple[np.ndarray, ...]
    m: int


@dataclass(frozen=True)
class MEstimationResult:
    theta_hat: np.ndarray
    sigma_hat: np.ndarray
    components: SandwichComponents
    corrections: dict[str, np.ndarray] = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)


def _unit_components(psi, theta, deriv_control):
    try:
        a_i = neg_jacobian_at(psi, theta, deriv_control)
    except DerivativeError as err:
        raise DerivativeError(f"unit {psi.unit_id!r}: {err}") from err
    with np.errstate(all="ignore"):
        ee_i = psi(theta)
    return a_i, ee_i


def compute_components(spec: EstimatorSpec, partition: UnitPartition, theta_hat,
                       deriv_control: DerivControl | None = None,
                       threads: int = 1) -> SandwichComponents:
    """Evaluate A_i, B_i, and psi_i for every unit at theta_hat.

    Per-unit work may run on ``threads`` workers; sums are accumulated in
    unit order either way, so the result does not depend on ``threads``.
    """
    theta_hat = check_theta(theta_hat, spec.p)
    psis = build_all(spec, partition)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=min(threads, len(psis))) as pool:
            per_unit = list(pool.map(
                lambda psi: _unit_components(psi, theta_hat, deriv_control), psis
            ))
    else:
        per_unit = [_unit_components(psi, theta_hat, deriv_control) for psi in psis]

    p = spec.p
    a_sum = np.zeros((p, p))
    b_sum = np.zeros((p, p))
    a_list, b_list, ee_list = [], [], []
    for a_i, ee_i in per_unit:
        b_i = np.outer(ee_i, ee_i)
        a_sum += a_i
        b_sum += b_i
        a_list.append(a_i)
        b_list.append(b_i)
        ee_list.append(ee_i)
    return SandwichComponents(A=a_sum, A_list=tuple(a_list), B=b_sum,
                              B_list=tuple(b_list), ee_list=tuple(ee_list),
                              m=partition.m)


def compute_sigma(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """A^{-1} B {A^{-1}}', symmetrized. Raises if A is near-singular."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if not np.all(np.isfinite(A)) or np.linalg.cond(A) > _COND_LIMIT:
        raise SingularMatrixError("bread matrix A is singular or near-singular")
    a_inv = np.linalg.solve(A, np.eye(A.shape[0]))
    sigma = a_inv @ B @ a_inv.T
    asym = float(np.max(np.abs(sigma - sigma.T))) if sigma.size else 0.0
    if asym > _ASYMMETRY_TOL:
        warnings.warn(
            f"sandwich covariance asymmetric by {asym:.3e} before symmetrization",
            EstimationWarning,
            stacklevel=2,
        )
    return (sigma + sigma.T) / 2.0


def m_estimate(spec: EstimatorSpec, partition: UnitPartition,
               root_control: RootControl | None = None,
               fixed_roots=None,
               deriv_control: DerivControl | None = None,
               corrections=(),
               threads: int = 1) -> MEstimationResult:
    """Full pipeline: solve (or accept fixed roots), sandwich, corrections.

    Exactly one of ``root_control`` / ``fixed_roots`` must be given. With
    ``fixed_roots`` the solve step is skipped and the covariance is computed
    at the supplied parameter values. Corrections run independently; a
    failing correction is recorded under ``diagnostics["correction_errors"]``
    without aborting the rest.
    """
    if (root_control is None) == (fixed_roots is None):
        raise ConfigError("provide exactly one of root_control / fixed_roots")

    if fixed_roots is not None:
        theta = check_theta(fixed_roots, spec.p)
        residual = sum_over_units(build_all(spec, partition), theta)
        root = RootResult(theta, float(np.max(np.abs(residual))), 0, True)
        solved = False
    else:
        try:
            root = solve(spec, partition, root_control, deriv_control)
        except NonConvergenceError as err:
            root = err.result
        solved = True

    components = compute_components(spec, partition, root.theta_hat,
                                    deriv_control, threads=threads)
    sigma = compute_sigma(components.A, components.B)

    from .corrections import apply_corrections

    corrected, errors = apply_corrections(components, corrections)

    diagnostics = {
        "converged": root.converged,
        "iterations": root.iterations,
        "residual_norm": root.residual_norm,
        "m": components.m,
        "p": spec.p,
        "solved": solved,
    }
    if errors:
        diagnostics["correction_errors"] = {name: str(e) for name, e in errors.items()}

    return MEstimationResult(theta_hat=root.theta_hat, sigma_hat=sigma,
                             components=components, corrections=corrected,
                             diagnostics=diagnostics)
