import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as npst

from rfmanifold import (
    ForestConfig,
    fit_forest,
    kernel_prediction,
    kernel_to_distance,
    kernelize,
    oob_predict,
    proximity_oob,
    proximity_original,
    proximity_rfgap,
    synthesize_regression_gradient,
    to_kernel,
    validate_kernel,
)
from rfmanifold.proximity import Kernel

from conftest import make_stub_forest


class TestOriginal:
    def test_diagonal_is_one(self, blobs_forest):
        prox = proximity_original(blobs_forest)
        np.testing.assert_array_equal(np.diag(prox.values), 1.0)

    def test_hand_counted_stub(self):
        # Two stub trees over 3 points; co-membership counted by hand.
        # Tree 0 leaves: {0, 1} in node 1, {2} in node 2.
        # Tree 1 leaves: {0} in node 1, {1, 2} in node 2.
        leaf_of = np.array([[1, 1], [1, 2], [2, 2]])
        inbag = np.ones((2, 3), dtype=np.int64)
        stub = make_stub_forest(leaf_of, inbag)
        prox = proximity_original(stub)
        expected = np.array([[1.0, 0.5, 0.0], [0.5, 1.0, 0.5], [0.0, 0.5, 1.0]])
        np.testing.assert_array_equal(prox.values, expected)

    def test_shared_fraction(self):
        # Shares a leaf in 50 of 100 trees -> 0.5.
        leaf_of = np.zeros((2, 100), dtype=np.int32)
        leaf_of[1, 50:] = 1
        stub = make_stub_forest(leaf_of, np.ones((100, 2), dtype=np.int64))
        assert proximity_original(stub).values[0, 1] == 0.5

    def test_symmetric(self, blobs_forest):
        v = proximity_original(blobs_forest).values
        np.testing.assert_array_equal(v, v.T)


class TestOob:
    def test_co_oob_fraction(self):
        # Pair co-OOB in 10 trees, co-leafed in 4 of them -> 0.4.
        n_trees = 12
        leaf_of = np.zeros((2, n_trees), dtype=np.int32)
        leaf_of[1, 4:] = 1  # same leaf only in trees 0..3
        inbag = np.zeros((n_trees, 2), dtype=np.int64)
        inbag[10:, :] = 1  # both in-bag (not co-OOB) in the last 2 trees
        stub = make_stub_forest(leaf_of, inbag)
        assert proximity_oob(stub).values[0, 1] == pytest.approx(0.4)

    def test_never_co_oob_flagged(self):
        leaf_of = np.zeros((2, 4), dtype=np.int32)
        inbag = np.array([[1, 0], [1, 0], [0, 1], [0, 1]], dtype=np.int64)
        stub = make_stub_forest(leaf_of, inbag)
        prox = proximity_oob(stub)
        assert prox.values[0, 1] == 0.0
        assert prox.undefined_pairs[0, 1]
        assert not prox.undefined_pairs[0, 0]

    def test_symmetric_on_blobs(self, blobs_forest):
        v = proximity_oob(blobs_forest).values
        np.testing.assert_array_equal(v, v.T)
        assert v.min() >= 0.0 and v.max() <= 1.0


class TestRfgap:
    def test_single_tree_leaf_multiset(self):
        # i OOB; its leaf holds in-bag multiset {j x2, k x1}.
        leaf_of = np.array([[5], [5], [5], [7]])
        inbag = np.array([[0, 2, 1, 1]], dtype=np.int64)
        stub = make_stub_forest(leaf_of, inbag)
        with pytest.warns(UserWarning, match="never OOB"):
            prox = proximity_rfgap(stub)
        assert prox.values[0, 1] == pytest.approx(2.0 / 3.0)
        assert prox.values[0, 2] == pytest.approx(1.0 / 3.0)
        assert prox.values[0, 0] == 0.0

    def test_rows_sum_to_one(self, blobs_forest):
        prox = proximity_rfgap(blobs_forest)
        covered = ~prox.uncovered
        np.testing.assert_allclose(prox.values[covered].sum(axis=1), 1.0, atol=1e-12)

    def test_zero_diagonal(self, blobs_forest):
        np.testing.assert_array_equal(np.diag(proximity_rfgap(blobs_forest).values), 0.0)

    def test_classification_reconstruction(self, blobs_forest, blobs):
        report = oob_predict(blobs_forest, blobs)
        predicted = kernel_prediction(proximity_rfgap(blobs_forest), blobs)
        covered = predicted.covered & report.covered
        np.testing.assert_array_equal(
            predicted.predictions[covered], report.predictions[covered]
        )
        assert np.abs(predicted.votes[covered] - report.votes[covered]).max() <= 1e-12

    def test_regression_reconstruction(self):
        d = synthesize_regression_gradient(80, 4, seed=5)
        forest = fit_forest(d, ForestConfig(n_trees=60, seed=1, task="regression"))
        report = oob_predict(forest, d)
        predicted = kernel_prediction(proximity_rfgap(forest), d)
        covered = predicted.covered & report.covered
        ref = report.predictions[covered]
        rel = np.abs(predicted.predictions[covered] - ref) / np.maximum(np.abs(ref), 1.0)
        assert rel.max() <= 1e-12

    def test_uncovered_row_flagged(self):
        leaf_of = np.array([[0], [0], [0]])
        inbag = np.array([[1, 1, 1]], dtype=np.int64)  # nobody OOB
        stub = make_stub_forest(leaf_of, inbag)
        with pytest.warns(UserWarning, match="never OOB"):
            prox = proximity_rfgap(stub)
        assert prox.uncovered.all()
        np.testing.assert_array_equal(prox.values, 0.0)


class TestKernelize:
    def test_scaling_and_unit_diagonal(self):
        # Symmetric input, max off-diagonal 0.5: off-diagonal doubles.
        values = np.array([[1.0, 0.5, 0.25], [0.5, 1.0, 0.1], [0.25, 0.1, 1.0]])
        k = kernelize(values)
        assert k.values[0, 1] == 1.0
        assert k.values[0, 2] == 0.5
        np.testing.assert_array_equal(np.diag(k.values), 1.0)

    def test_normalize_then_average(self):
        # Asymmetric pair (0.2, 0.4); a symmetric pair holds the global max 0.4,
        # so after the off-diagonal scale the entry averages to (0.5 + 1.0)/2.
        values = np.array(
            [
                [0.0, 0.2, 0.0],
                [0.4, 0.0, 0.4],
                [0.0, 0.4, 0.0],
            ]
        )
        k = kernelize(values)
        assert k.values[0, 1] == pytest.approx(0.75)
        assert k.values[1, 0] == pytest.approx(0.75)
        assert k.values[1, 2] == 1.0

    def test_rfgap_kernel_contract(self, blobs_forest):
        k = to_kernel(proximity_rfgap(blobs_forest))
        validate_kernel(k)

    def test_all_zero_off_diagonal_warns_identity(self):
        with pytest.warns(UserWarning, match="identity"):
            k = kernelize(np.eye(4))
        np.testing.assert_array_equal(k.values, np.eye(4))

    @settings(max_examples=40, deadline=None)
    @given(st.data())
    def test_contract_on_random_nonnegative(self, data):
        n = data.draw(st.integers(2, 8))
        values = data.draw(
            npst.arrays(np.float64, (n, n), elements=st.floats(0, 1e6, allow_nan=False))
        )
        off = ~np.eye(n, dtype=bool)
        if values[off].max() <= 0:
            return
        validate_kernel(kernelize(values))


class TestKernelDistance:
    @pytest.mark.parametrize("k_val,expected", [(1.0, 0.0), (0.0, 1.0), (0.75, 0.5)])
    def test_pointwise(self, k_val, expected):
        values = np.array([[1.0, k_val], [k_val, 1.0]])
        d = kernel_to_distance(Kernel(values=values))
        assert d.values[0, 1] == pytest.approx(expected, abs=1e-15)

    def test_metric_shape(self, blobs_forest):
        d = kernel_to_distance(to_kernel(proximity_rfgap(blobs_forest)))
        np.testing.assert_array_equal(d.values, d.values.T)
        np.testing.assert_array_equal(np.diag(d.values), 0.0)
        assert d.values.min() >= 0.0


class TestKernelPrediction:
    def test_uniform_row_average(self):
        leaf_of = np.array([[5], [5], [5]])
        inbag = np.array([[0, 1, 1]], dtype=np.int64)
        stub = make_stub_forest(leaf_of, inbag, task="regression")
        from rfmanifold.data import Dataset

        d = Dataset(
            features=np.zeros((3, 1)),
            labels=np.array([9.0, 1.0, 3.0]),
            feature_names=("a",),
            label_kind="regression",
        )
        with pytest.warns(UserWarning, match="never OOB"):
            prox = proximity_rfgap(stub)
        predicted = kernel_prediction(prox, d)
        assert predicted.predictions[0] == pytest.approx(2.0)

    def test_rejects_non_rfgap(self, blobs_forest, blobs):
        with pytest.raises(ValueError, match="rfgap"):
            kernel_prediction(proximity_original(blobs_forest), blobs)

    def test_uncovered_rows_unpredicted(self):
        leaf_of = np.array([[0], [0], [0]])
        inbag = np.array([[1, 1, 1]], dtype=np.int64)
        stub = make_stub_forest(leaf_of, inbag)
        from rfmanifold.data import Dataset

        d = Dataset(
            features=np.zeros((3, 1)),
            labels=np.array([0, 1, 1]),
            feature_names=("a",),
            label_kind="classification",
        )
        with pytest.warns(UserWarning):
            prox = proximity_rfgap(stub)
        predicted = kernel_prediction(prox, d)
        assert not predicted.covered.any()
        assert (predicted.predictions == -1).all()
