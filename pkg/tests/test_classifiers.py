import numpy as np
import pytest

from rcfusion import classifiers as C
from rcfusion.classifiers import ClassifierError, ClassifierKind, ClassifierSpec, fit_platt, predict_scores, train


def separable(n=120, d=4, shift=2.5, seed=0):
    rng = np.random.default_rng(seed)
    y = np.repeat([0, 1], n // 2)
    X = rng.normal(size=(n, d))
    X[:, 0] += shift * (2 * y - 1)
    return X, y


ALL_KINDS = list(ClassifierKind)


class TestSpec:
    def test_defaults_merged(self):
        spec = ClassifierSpec.of("knn")
        assert spec.hyperparameters["k"] == 5

    def test_aliases(self):
        assert ClassifierKind.parse("DA") is ClassifierKind.LDA
        assert ClassifierKind.parse("svm") is ClassifierKind.LSVM
        assert ClassifierKind.parse("rbf") is ClassifierKind.RBF_SVC

    def test_unknown_kind(self):
        with pytest.raises(ClassifierError):
            ClassifierKind.parse("forest")

    def test_out_of_range(self):
        with pytest.raises(ClassifierError):
            ClassifierSpec.of("rbf_svc", C=1e6)

    def test_unknown_hyperparameter(self):
        with pytest.raises(ClassifierError):
            ClassifierSpec.of("knn", depth=3)

    def test_roster(self):
        assert [k.value for k in C.DEFAULT_ROSTER] == ["lsvm", "lr", "lda", "dt", "knn", "nb"]


@pytest.mark.parametrize("kind", ALL_KINDS, ids=lambda k: k.value)
class TestEveryKind:
    def test_learns_separable_problem(self, kind):
        X, y = separable()
        model = train(ClassifierSpec.of(kind), X, y, seed=1)
        Xt, yt = separable(seed=7)
        scores = predict_scores(model, Xt)
        assert ((scores[:, 1] > scores[:, 0]) == yt).mean() >= 0.9

    def test_rows_are_distributions(self, kind):
        X, y = separable(shift=0.5)
        scores = train(ClassifierSpec.of(kind), X, y).predict_scores(np.random.default_rng(3).normal(size=(50, 4)) * 10)
        assert scores.shape == (50, 2)
        assert np.all(scores > 0) and np.all(scores < 1)
        np.testing.assert_allclose(scores.sum(axis=1), 1.0, atol=1e-12)

    def test_deterministic(self, kind):
        X, y = separable(shift=0.8)
        a = predict_scores(train(ClassifierSpec.of(kind), X, y, seed=4), X)
        b = predict_scores(train(ClassifierSpec.of(kind), X, y, seed=4), X)
        np.testing.assert_array_equal(a, b)

    def test_wrong_width(self, kind):
        X, y = separable()
        model = train(ClassifierSpec.of(kind), X, y)
        with pytest.raises(ClassifierError):
            predict_scores(model, X[:, :2])


class TestTrainingChecks:
    def test_single_class_rejected(self):
        with pytest.raises(ClassifierError):
            train(ClassifierSpec.of("lr"), np.zeros((5, 2)), np.zeros(5))

    def test_labels_must_be_binary(self):
        with pytest.raises(ClassifierError):
            train(ClassifierSpec.of("lr"), np.zeros((4, 2)), np.array([0, 1, 2, 1]))

    def test_constant_features_do_not_crash(self):
        X = np.ones((20, 3))
        y = np.repeat([0, 1], 10)
        for kind in ALL_KINDS:
            scores = predict_scores(train(ClassifierSpec.of(kind), X, y), X)
            assert np.all(np.isfinite(scores))


class TestDetails:
    def test_knn_smoothed_vote(self):
        X = np.array([[0.0], [0.1], [0.2], [5.0], [5.1], [5.2]])
        y = np.array([0, 0, 0, 1, 1, 1])
        model = train(ClassifierSpec.of("knn", k=3, alpha=1.0), X, y)
        # three positive neighbours: (3 + 1) / (3 + 2)
        assert predict_scores(model, [[5.05]])[0, 1] == pytest.approx(0.8)

    def test_tree_laplace_leaves(self):
        X = np.array([[0.0], [1.0], [2.0], [10.0], [11.0], [12.0]])
        y = np.array([0, 0, 0, 1, 1, 1])
        model = train(ClassifierSpec.of("dt", min_leaf=1), X, y)
        assert predict_scores(model, [[11.5]])[0, 1] == pytest.approx(4 / 5)

    def test_platt_monotone(self):
        rng = np.random.default_rng(0)
        d = rng.normal(size=200)
        y = (d + 0.3 * rng.normal(size=200) > 0).astype(int)
        a, b = fit_platt(d, y)
        assert a > 0

    def test_nb_matches_closed_form(self):
        X = np.array([[0.0], [2.0], [4.0], [6.0]])
        y = np.array([0, 0, 1, 1])
        s = predict_scores(train(ClassifierSpec.of("nb"), X, y), [[3.0]])
        # symmetric about 3 with equal priors and variances
        assert s[0, 1] == pytest.approx(0.5, abs=1e-9)
