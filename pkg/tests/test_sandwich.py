import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mestim import (
    ConfigError,
    CorrectionSpec,
    DerivativeError,
    EstimationWarning,
    EstimatorSpec,
    GeeConfig,
    ModelSpec,
    RootControl,
    SingularMatrixError,
    compute_components,
    compute_sigma,
    gee_spec,
    gen_geexex,
    linear_score_spec,
    m_estimate,
    moments_spec,
    partition_units,
)

from conftest import mean_spec, rel_err, row_partition


def test_components_mean_spec_hand_values(y123):
    comp = compute_components(mean_spec("Y"), y123, np.array([2.0]))
    np.testing.assert_allclose(comp.A, [[3.0]], atol=1e-9)
    np.testing.assert_allclose(comp.B, [[2.0]], atol=1e-12)
    ee = np.array([e[0] for e in comp.ee_list])
    np.testing.assert_allclose(ee, [-1.0, 0.0, 1.0], atol=1e-12)
    assert comp.m == 3
    np.testing.assert_allclose(sum(comp.A_list), comp.A)
    np.testing.assert_allclose(sum(comp.B_list), comp.B)


def test_moments_bread_is_unit_triangular_mean():
    ds = gen_geexex(m=100, seed=5)
    part = partition_units(ds)
    y = ds.columns["Y1"]
    theta_hat = np.array([y.mean(), y.var() ])
    comp = compute_components(moments_spec("Y1"), part, theta_hat)
    # mean-normalized bread is the identity: off-diagonal 2*sum(y - mean) = 0
    np.testing.assert_allclose(comp.A / comp.m, np.eye(2), atol=1e-6)
    for a_i, yi in zip(comp.A_list, y):
        np.testing.assert_allclose(
            a_i, [[1.0, 0.0], [2.0 * (yi - theta_hat[0]), 1.0]], atol=1e-6
        )


def test_gee_psi_matches_direct_matrix_oracle(gee_dataset):
    part = partition_units(gee_dataset, "wool")
    model = ModelSpec(kind="linear", response="breaks",
                      covariates=("tensionM", "tensionH"))
    alpha, phi = 0.3, 20.0
    spec = gee_spec(GeeConfig(model=model, alpha=alpha, phi=phi))
    theta = np.array([28.0, -9.0, -14.0])
    comp = compute_components(spec, part, theta)
    for unit, ee in zip(part.units, comp.ee_list):
        x = np.column_stack([np.ones(unit.n_rows), unit.columns["tensionM"],
                             unit.columns["tensionH"]])
        y = unit.columns["breaks"]
        n = y.size
        corr = np.full((n, n), alpha)
        np.fill_diagonal(corr, 1.0)
        v = phi * corr  # gaussian: W = I
        oracle = x.T @ np.linalg.inv(v) @ (y - x @ theta)
        np.testing.assert_allclose(ee, oracle, rtol=1e-10, atol=1e-10)


class TestComputeSigma:
    def test_hand_example(self):
        np.testing.assert_allclose(compute_sigma(np.array([[3.0]]), np.array([[2.0]])),
                                   [[2.0 / 9.0]])

    def test_identity_bread_returns_meat(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(3, 5))
        meat = x @ x.T
        np.testing.assert_allclose(compute_sigma(np.eye(3), meat), meat, atol=1e-12)

    def test_singular_bread_raises(self):
        with pytest.raises(SingularMatrixError):
            compute_sigma(np.zeros((2, 2)), np.eye(2))
        with pytest.raises(SingularMatrixError):
            compute_sigma(np.array([[1.0, 1.0], [1.0, 1.0 + 1e-15]]), np.eye(2))

    def test_sum_mean_convention_identity(self):
        rng = np.random.default_rng(1)
        a = rng.normal(size=(3, 3)) + 4 * np.eye(3)
        x = rng.normal(size=(3, 6))
        b = x @ x.T
        for m in (2, 7, 100):
            lhs = compute_sigma(a, b)
            rhs = compute_sigma(a / m, b / m) / m
            assert rel_err(lhs, rhs) < 1e-12

    def test_asymmetry_warning(self):
        a = np.eye(2)
        b = np.array([[1.0, 0.5], [0.2, 1.0]])  # asymmetric meat
        with pytest.warns(EstimationWarning, match="asymmetric"):
            sigma = compute_sigma(a, b)
        np.testing.assert_allclose(sigma, sigma.T)


def test_linear_score_sigma_is_hc0():
    ds = gen_geexex(m=80, seed=9)
    part = partition_units(ds)
    spec = linear_score_spec(ModelSpec(kind="linear", response="Y4",
                                       covariates=("X1", "X2")))
    res = m_estimate(spec, part, root_control=RootControl(start=(0.0, 0.0, 0.0)))
    x = np.column_stack([np.ones(ds.n_rows), ds.columns["X1"], ds.columns["X2"]])
    y = ds.columns["Y4"]
    beta = np.linalg.solve(x.T @ x, x.T @ y)
    r = y - x @ beta
    bread_inv = np.linalg.inv(x.T @ x)
    hc0 = bread_inv @ (x.T * r**2) @ x @ bread_inv
    assert rel_err(res.sigma_hat, hc0) < 1e-8


def test_mean_spec_sigma_formula():
    rng = np.random.default_rng(12)
    y = rng.normal(3.0, 2.0, size=40)
    part = row_partition(Y=y)
    res = m_estimate(mean_spec("Y"), part, root_control=RootControl(start=(0.0,)))
    m = y.size
    expected = (np.sum((y - y.mean()) ** 2) / m) / m
    assert abs(res.sigma_hat[0, 0] - expected) / expected < 1e-10


def test_duplicating_units_halves_sigma(y123):
    res1 = m_estimate(moments_spec("Y"), y123,
                      root_control=RootControl(start=(0.0, 1.0)))
    doubled = row_partition(Y=[1.0, 2.0, 3.0, 1.0, 2.0, 3.0])
    res2 = m_estimate(moments_spec("Y"), doubled,
                      root_control=RootControl(start=(0.0, 1.0)))
    np.testing.assert_allclose(res2.theta_hat, res1.theta_hat, atol=1e-8)
    assert rel_err(res2.sigma_hat, res1.sigma_hat / 2.0) < 1e-8


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-50.0, 50.0), min_size=4, max_size=12), st.integers(0, 3))
def test_sigma_symmetric_psd(values, jitter_seed):
    y = np.asarray(values)
    if np.ptp(y) < 1e-3:  # constant data gives a deliberately singular system
        y = y + np.linspace(0.0, 1.0, y.size)
    rng = np.random.default_rng(jitter_seed)
    y = y + rng.normal(0.0, 0.1, y.size)
    part = row_partition(Y=y)
    res = m_estimate(moments_spec("Y"), part,
                     root_control=RootControl(start=(y.mean(), max(y.var(), 1.0))))
    sigma = res.sigma_hat
    np.testing.assert_allclose(sigma, sigma.T, atol=1e-12)
    eigenvalues = np.linalg.eigvalsh(sigma)
    assert eigenvalues.min() > -1e-10 * max(1.0, eigenvalues.max())


class TestMEstimate:
    def test_requires_exactly_one_of_start_and_roots(self, y123):
        spec = mean_spec("Y")
        with pytest.raises(ConfigError):
            m_estimate(spec, y123)
        with pytest.raises(ConfigError):
            m_estimate(spec, y123, root_control=RootControl(start=(0.0,)),
                       fixed_roots=[2.0])

    def test_fixed_roots_skips_solving(self, y123):
        solved = m_estimate(moments_spec("Y"), y123,
                            root_control=RootControl(start=(0.0, 1.0)))
        fixed = m_estimate(moments_spec("Y"), y123,
                           fixed_roots=[2.0, 2.0 / 3.0])
        assert not fixed.diagnostics["solved"]
        assert fixed.diagnostics["iterations"] == 0
        assert rel_err(fixed.sigma_hat, solved.sigma_hat) < 1e-8
        np.testing.assert_allclose(fixed.theta_hat, [2.0, 2.0 / 3.0])

    def test_nonconvergence_is_reported_not_raised(self, y123):
        res = m_estimate(moments_spec("Y"), y123,
                         root_control=RootControl(start=(50.0, 50.0), max_iter=1))
        assert res.diagnostics["converged"] is False
        assert res.sigma_hat.shape == (2, 2)

    def test_threads_do_not_change_results(self, y123):
        a = m_estimate(moments_spec("Y"), y123, fixed_roots=[2.0, 2.0 / 3.0])
        b = m_estimate(moments_spec("Y"), y123, fixed_roots=[2.0, 2.0 / 3.0],
                       threads=3)
        assert a.sigma_hat.tobytes() == b.sigma_hat.tobytes()
        for x, y in zip(a.components.ee_list, b.components.ee_list):
            assert x.tobytes() == y.tobytes()

    def test_correction_failure_recorded_not_fatal(self, y123):
        def broken(components):
            raise ValueError("boom")

        def identity(components):
            return compute_sigma(components.A, components.B)

        res = m_estimate(
            moments_spec("Y"), y123, fixed_roots=[2.0, 2.0 / 3.0],
            corrections=[CorrectionSpec("bad", broken),
                         CorrectionSpec("plain", identity)],
        )
        assert "bad" in res.diagnostics["correction_errors"]
        assert res.corrections["plain"].tobytes() == res.sigma_hat.tobytes()

    def test_derivative_failure_names_unit(self, y123):
        def outer(unit):
            y = unit.numeric("Y")

            def psi(theta):
                if y[0] == 2.0:  # poison the second unit only
                    return np.full((y.size, 1), np.nan)
                return (y - theta[0])[:, np.newaxis]

            return psi

        spec = EstimatorSpec(p=1, outer_build=outer)
        with pytest.raises(DerivativeError, match="unit 1"):
            m_estimate(spec, y123, fixed_roots=[2.0])
