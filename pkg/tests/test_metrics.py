import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import synthetic_dataset
from rcfusion.metrics import (
    ConfigurationError,
    ConfusionCounts,
    CvProtocol,
    MetricReport,
    UndefinedMetricError,
    auc,
    confusion,
    cross_validate,
    cross_validate_many,
    roc_auc_trapezoid,
    sensitivity,
    specificity,
)
from rcfusion.data import Dataset


class TestConfusion:
    def test_perfect(self):
        assert confusion([1, 1, 0, 0], [1, 1, 0, 0]) == ConfusionCounts(tp=2, tn=2, fp=0, fn=0)

    def test_one_miss(self):
        c = confusion([1, 1, 1, 1], [1, 1, 1, 0])
        assert (c.tp, c.fn) == (3, 1)

    def test_empty(self):
        assert confusion([], []) == ConfusionCounts()

    def test_declared_positive_class(self):
        c = confusion(["b", "g", "b"], ["b", "b", "g"], positive_class="b")
        assert (c.tp, c.fp, c.fn, c.tn) == (1, 1, 1, 0)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            confusion([1, 0], [1])


class TestRates:
    def test_values(self):
        assert sensitivity(ConfusionCounts(tp=3, fn=1)) == 0.75
        assert specificity(ConfusionCounts(tn=9, fp=1)) == 0.9
        assert sensitivity(ConfusionCounts(tp=0, fn=5)) == 0.0

    def test_undefined(self):
        with pytest.raises(UndefinedMetricError):
            sensitivity(ConfusionCounts(tn=3))
        with pytest.raises(UndefinedMetricError):
            specificity(ConfusionCounts(tp=3))


class TestAuc:
    def test_separated_and_inverted(self):
        assert auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0
        assert auc([0.1, 0.2, 0.8, 0.9], [1, 1, 0, 0]) == 0.0

    def test_enumerated_pairs(self):
        assert auc([0.9, 0.8, 0.7, 0.6], [1, 0, 1, 0]) == 0.75

    def test_ties_half_credit(self):
        assert auc([0.5, 0.5], [1, 0]) == 0.5
        assert auc([0.5, 0.5, 0.1], [1, 0, 0]) == 0.75

    def test_single_class(self):
        with pytest.raises(UndefinedMetricError):
            auc([0.1, 0.2], [1, 1])

    def test_brute_force_pairs(self, rng):
        for _ in range(50):
            n = int(rng.integers(4, 40))
            s = rng.integers(0, 6, n) / 5.0
            y = rng.integers(0, 2, n)
            if y.min() == y.max():
                continue
            pos, neg = s[y == 1], s[y == 0]
            pairs = [(p > q) + 0.5 * (p == q) for p in pos for q in neg]
            assert auc(s, y) == pytest.approx(np.mean(pairs), abs=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 20), st.booleans()), min_size=2, max_size=60))
    def test_matches_trapezoid(self, rows):
        scores = np.array([r[0] for r in rows], dtype=float) / 7.0
        labels = np.array([int(r[1]) for r in rows])
        if labels.min() == labels.max():
            return
        assert auc(scores, labels) == pytest.approx(roc_auc_trapezoid(scores, labels), abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.integers(-50, 50), st.booleans()), min_size=2, max_size=40))
    def test_increasing_transform_invariance(self, rows):
        # integer scores keep the transform strictly increasing in floating point
        scores = np.array([r[0] for r in rows], dtype=float)
        labels = np.array([int(r[1]) for r in rows])
        if labels.min() == labels.max():
            return
        assert auc(scores, labels) == auc(scores**3 + 2 * scores + 7, labels)


def builder_from(fn):
    def build(ctx):
        return fn
    return build


class TestCrossValidate:
    def test_constant_prediction(self):
        ds = synthetic_dataset(n=50)
        always_positive = lambda X: np.tile([0.2, 0.8], (len(X), 1))
        report = cross_validate(ds, builder_from(always_positive), CvProtocol(repetitions=3))
        assert report.sensitivity.mean == 1.0 and report.specificity.mean == 0.0
        assert report.auc.mean == 0.5
        assert report.sensitivity.std == 0.0

    def test_every_fold_balanced(self):
        ds = Dataset(np.arange(10.0)[:, None], np.repeat([0, 1], 5), ("x",))
        seen = []

        def build(ctx):
            seen.append(ctx.train.class_counts())
            return lambda X: np.tile([0.5, 0.5], (len(X), 1))

        cross_validate(ds, build, CvProtocol(folds=5, repetitions=1))
        assert seen == [(4, 4)] * 5

    def test_inner_split_indices_refer_to_training_fold(self):
        ds = synthetic_dataset(n=60)

        def build(ctx):
            idx = np.concatenate([ctx.weight_train, ctx.validation])
            assert sorted(idx.tolist()) == list(range(ctx.train.n_samples))
            assert len(ctx.weight_train) == pytest.approx(0.7 * ctx.train.n_samples, abs=2)
            return lambda X: np.tile([0.5, 0.5], (len(X), 1))

        cross_validate(ds, build, CvProtocol(repetitions=2))

    def test_determinism_and_thread_independence(self):
        ds = synthetic_dataset(n=80)

        def build(ctx):
            rng = np.random.default_rng(ctx.seed)
            w = rng.normal(size=ctx.train.n_features)
            return lambda X: np.column_stack([1 - 1 / (1 + np.exp(-X @ w)), 1 / (1 + np.exp(-X @ w))])

        a = cross_validate(ds, build, CvProtocol(seed=5))
        b = cross_validate(ds, build, CvProtocol(seed=5), threads=4)
        assert a == b
        c = cross_validate(ds, build, CvProtocol(seed=6))
        assert a != c

    def test_many_and_pooled(self):
        ds = synthetic_dataset(n=80)
        oracle = lambda X: np.column_stack([1 - (X[:, 0] > 0.75), (X[:, 0] > 0.75)]).astype(float)
        reports = cross_validate_many(ds, lambda ctx: {"a": oracle, "b": oracle}, CvProtocol(repetitions=2))
        assert reports["a"] == reports["b"]
        pooled = cross_validate(ds, builder_from(oracle), CvProtocol(repetitions=2, pool_folds=True))
        assert 0.0 <= pooled.auc.mean <= 1.0

    def test_too_small(self):
        ds = Dataset(np.arange(6.0)[:, None], np.array([0, 0, 0, 0, 1, 1]), ("x",))
        with pytest.raises(ConfigurationError):
            cross_validate(ds, builder_from(lambda X: X), CvProtocol(folds=5))

    def test_protocol_validation(self):
        with pytest.raises(ConfigurationError):
            CvProtocol(folds=1)
        with pytest.raises(ConfigurationError):
            CvProtocol(weight_train_fraction=1.0)


class TestReport:
    def test_from_repetitions(self):
        r = MetricReport.from_repetitions([(0.8, 0.6, 0.9), (0.9, 0.7, 0.7)])
        assert r.auc.mean == pytest.approx(0.85)
        assert r.auc.std == pytest.approx(0.05)
        assert r.specificity.display() == "0.8000±0.1000"
