import numpy as np
import pytest

from mestim import (
    ConfigError,
    CorrectionSpec,
    DataUnit,
    ModelSpec,
    UnitPartition,
    WeightRule,
    apply_corrections,
    compute_components,
    compute_sigma,
    fay_bias_correction,
    gee_spec,
    GeeConfig,
    newey_west_correction,
    newey_west_weight,
    pairwise_weighted_meat,
    partition_units,
)

from conftest import rel_err, row_partition


def identical_cluster_components():
    """Two identical clusters so that A_i Abar^{-1} is exactly the identity."""
    y = np.array([1.0, 2.0, 4.0])
    part = UnitPartition(units=(
        DataUnit(unit_id="c1", columns={"Y": y}),
        DataUnit(unit_id="c2", columns={"Y": y.copy()}),
    ))
    from mestim import moments_spec
    theta = np.array([y.mean(), y.var()])
    return compute_components(moments_spec("Y"), part, theta)


class TestFayBias:
    def test_identical_clusters_quadruple_sigma(self):
        comp = identical_cluster_components()
        base = compute_sigma(comp.A, comp.B)
        corrected = fay_bias_correction(comp, b=0.75)
        # influence diagonals are 1, so min(b, 1) = 0.75 and H_i = 2 I
        assert rel_err(corrected, 4.0 * base) < 1e-10

    def test_small_b_limit_recovers_sigma(self):
        comp = identical_cluster_components()
        base = compute_sigma(comp.A, comp.B)
        corrected = fay_bias_correction(comp, b=1e-9)
        assert rel_err(corrected, base) < 1e-6

    def test_monotone_inflation_on_identical_clusters(self):
        comp = identical_cluster_components()
        base = compute_sigma(comp.A, comp.B)
        previous = 0.0
        for b in (0.1, 0.3, 0.5, 0.75, 0.9):
            corrected = fay_bias_correction(comp, b=b)
            assert rel_err(corrected, base / (1.0 - b)) < 1e-10
            assert corrected[0, 0] > previous
            previous = corrected[0, 0]

    def test_matches_straight_line_oracle_on_gee_data(self, gee_dataset):
        part = partition_units(gee_dataset, "wool")
        model = ModelSpec(kind="linear", response="breaks",
                          covariates=("tensionM", "tensionH"))
        spec = gee_spec(GeeConfig(model=model, alpha=0.25, phi=22.0))
        theta = np.array([29.0, -10.0, -15.0])
        comp = compute_components(spec, part, theta)
        for b in (0.1, 0.3):
            engine = fay_bias_correction(comp, b=b)
            # independent transcription of the corrected-meat formulas
            a_bar_inv = np.linalg.inv(comp.A / comp.m)
            meat = np.zeros_like(comp.B)
            for a_i, b_i in zip(comp.A_list, comp.B_list):
                h = np.diag((1.0 - np.minimum(b, np.diag(a_i @ a_bar_inv))) ** -0.5)
                meat += h @ b_i @ h.T
            a_inv = np.linalg.inv(comp.A)
            oracle = a_inv @ meat @ a_inv.T
            assert rel_err(engine, oracle) < 1e-10

    def test_b_out_of_range(self):
        comp = identical_cluster_components()
        for b in (0.0, 1.0, -0.2, 1.5):
            with pytest.raises(ConfigError):
                fay_bias_correction(comp, b=b)


class TestPairwiseMeat:
    def test_kronecker_delta_equals_meat_exactly(self):
        comp = identical_cluster_components()
        rule = WeightRule(weight_fn=lambda i, j: 1.0 if i == j else 0.0)
        meat = pairwise_weighted_meat(comp.ee_list, rule)
        assert meat.tobytes() == comp.B.tobytes()

    def test_all_ones_two_units(self):
        u = np.array([1.0, -2.0])
        v = np.array([0.5, 3.0])
        rule = WeightRule(weight_fn=lambda i, j: 1.0)
        meat = pairwise_weighted_meat([u, v], rule)
        np.testing.assert_allclose(meat, np.outer(u + v, u + v), atol=1e-12)

    def test_newey_west_lag1_three_units_brute_force(self):
        rng = np.random.default_rng(3)
        ee = [rng.normal(size=2) for _ in range(3)]
        rule = WeightRule(weight_fn=newey_west_weight, args={"lag": 1})
        meat = pairwise_weighted_meat(ee, rule)
        brute = np.zeros((2, 2))
        for i in range(3):
            for j in range(3):
                d = abs(i - j)
                w = {0: 1.0, 1: 0.5, 2: 0.0}[d]
                brute += w * np.outer(ee[i], ee[j])
        np.testing.assert_allclose(meat, brute, atol=1e-14)

    def test_fixed_weight_vector(self):
        rng = np.random.default_rng(4)
        ee = [rng.normal(size=2) for _ in range(4)]
        fn_rule = WeightRule(weight_fn=newey_west_weight, args={"lag": 1})
        vec_rule = WeightRule(fixed_weights=(1.0, 0.5))  # distances beyond get 0
        np.testing.assert_allclose(pairwise_weighted_meat(ee, vec_rule),
                                   pairwise_weighted_meat(ee, fn_rule), atol=1e-14)

    def test_nan_weight_reports_pair(self):
        ee = [np.ones(1), np.ones(1)]
        rule = WeightRule(weight_fn=lambda i, j: np.nan if (i, j) == (0, 1) else 1.0)
        with pytest.raises(Exception, match=r"\(0, 1\)"):
            pairwise_weighted_meat(ee, rule)

    def test_symmetric_rule_gives_symmetric_meat(self):
        rng = np.random.default_rng(5)
        ee = [rng.normal(size=3) for _ in range(6)]
        for lag in range(4):
            rule = WeightRule(weight_fn=newey_west_weight, args={"lag": lag})
            meat = pairwise_weighted_meat(ee, rule)
            assert np.max(np.abs(meat - meat.T)) < 1e-12

    def test_rule_wants_exactly_one_variant(self):
        with pytest.raises(ConfigError):
            WeightRule()
        with pytest.raises(ConfigError):
            WeightRule(fixed_weights=(1.0,), weight_fn=lambda i, j: 1.0)


class TestNeweyWestWeight:
    def test_reference_values(self):
        assert newey_west_weight(1, 1, lag=1) == 1.0
        assert newey_west_weight(1, 2, lag=1) == 0.5
        assert newey_west_weight(1, 3, lag=1) == 0.0

    def test_symmetry_exhaustive(self):
        for lag in range(6):
            for i in range(8):
                for j in range(8):
                    w = newey_west_weight(i, j, lag)
                    assert w == newey_west_weight(j, i, lag)
                    assert 0.0 <= w <= 1.0
        assert all(newey_west_weight(i, i, lag) == 1.0
                   for i in range(8) for lag in range(6))

    def test_negative_lag_rejected(self):
        with pytest.raises(ConfigError):
            newey_west_weight(0, 0, lag=-1)


def test_lag_zero_correction_equals_uncorrected_sigma():
    rng = np.random.default_rng(6)
    part = row_partition(Y=rng.normal(size=30))
    from mestim import moments_spec
    comp = compute_components(moments_spec("Y"), part,
                              np.array([0.0, 1.0]))
    base = compute_sigma(comp.A, comp.B)
    corrected = newey_west_correction(comp, lag=0)
    assert corrected.tobytes() == base.tobytes()


class TestApplyCorrections:
    def test_empty_list(self):
        comp = identical_cluster_components()
        results, errors = apply_corrections(comp, [])
        assert results == {} and errors == {}

    def test_two_fay_entries(self):
        comp = identical_cluster_components()
        results, errors = apply_corrections(comp, [
            CorrectionSpec("bias_correction_.1", fay_bias_correction, {"b": 0.1}),
            CorrectionSpec("bias_correction_.3", fay_bias_correction, {"b": 0.3}),
        ])
        assert not errors
        assert set(results) == {"bias_correction_.1", "bias_correction_.3"}
        assert results["bias_correction_.3"][0, 0] > results["bias_correction_.1"][0, 0]

    def test_identity_correction_bitwise(self):
        comp = identical_cluster_components()
        sigma = compute_sigma(comp.A, comp.B)
        results, _ = apply_corrections(comp, [
            CorrectionSpec("identity", lambda c: compute_sigma(c.A, c.B)),
            CorrectionSpec("fay", fay_bias_correction, {"b": 0.5}),
        ])
        assert results["identity"].tobytes() == sigma.tobytes()

    def test_duplicate_names_rejected(self):
        comp = identical_cluster_components()
        with pytest.raises(ConfigError, match="duplicate"):
            apply_corrections(comp, [
                CorrectionSpec("fay", fay_bias_correction, {"b": 0.1}),
                CorrectionSpec("fay", fay_bias_correction, {"b": 0.3}),
            ])

    def test_wrong_shape_recorded_as_error(self):
        comp = identical_cluster_components()
        results, errors = apply_corrections(comp, [
            CorrectionSpec("bad_shape", lambda c: np.zeros(3)),
        ])
        assert "bad_shape" in errors and not results
