"""Classification metrics and the repeated stratified cross-validation harness."""

from __future__ import annotations

from collections.abc import Callable, Mapping
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .data import Dataset, DataError, make_splits, task_seed


class UndefinedMetricError(ValueError):
    pass


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def confusion(labels, predictions, positive_class=1) -> ConfusionCounts:
    labels = np.asarray(labels)
    predictions = np.asarray(predictions)
    if labels.shape != predictions.shape or labels.ndim != 1:
        raise ValueError(f"length mismatch: {labels.shape} labels vs {predictions.shape} predictions")
    actual = labels == positive_class
    called = predictions == positive_class
    return ConfusionCounts(
        tp=int(np.sum(actual & called)),
        tn=int(np.sum(~actual & ~called)),
        fp=int(np.sum(~actual & called)),
        fn=int(np.sum(actual & ~called)),
    )


def sensitivity(c: ConfusionCounts) -> float:
    if c.tp + c.fn == 0:
        raise UndefinedMetricError("sensitivity undefined without positive samples")
    return c.tp / (c.tp + c.fn)


def specificity(c: ConfusionCounts) -> float:
    if c.tn + c.fp == 0:
        raise UndefinedMetricError("specificity undefined without negative samples")
    return c.tn / (c.tn + c.fp)


def auc(scores, labels, positive_class=1) -> float:
    """Mann-Whitney AUC; tied positive/negative pairs earn half credit."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be equal-length vectors")
    pos = labels == positive_class
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs at least one positive and one negative sample")
    return float(auc_columns(scores[:, None], pos)[0])


def auc_columns(score_matrix, positive_mask) -> np.ndarray:
    """Mann-Whitney AUC of every column of an (n, g) score matrix."""
    score_matrix = np.asarray(score_matrix, dtype=float)
    pos = np.asarray(positive_mask, dtype=bool)
    n_pos = int(pos.sum())
    n_neg = len(pos) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs at least one positive and one negative sample")
    # midranks make a tied pair contribute exactly 0.5 to the U statistic
    ranks = rankdata(score_matrix, axis=0)
    u = ranks[pos].sum(axis=0) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def roc_auc_trapezoid(scores, labels, positive_class=1) -> float:
    """AUC as the trapezoidal area under the empirical ROC curve."""
    scores = np.asarray(scores, dtype=float)
    pos = np.asarray(labels) == positive_class
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs at least one positive and one negative sample")
    thresholds = np.unique(scores)[::-1]
    tpr = [0.0] + [np.sum(pos & (scores >= t)) / n_pos for t in thresholds]
    fpr = [0.0] + [np.sum(~pos & (scores >= t)) / n_neg for t in thresholds]
    trapezoid = getattr(np, "trapezoid", None) or np.trapz
    return float(trapezoid(tpr, fpr))


def predicted_labels(belief_rows: np.ndarray) -> np.ndarray:
    """Argmax over columns with ties to class 0."""
    belief_rows = np.asarray(belief_rows, dtype=float)
    return (belief_rows[:, 1] > belief_rows[:, 0]).astype(np.int64)


def score_beliefs(belief_rows, y) -> tuple[float, float, float]:
    """(AUC, sensitivity, specificity) for (n, 2) beliefs against 0/1 labels."""
    belief_rows = np.asarray(belief_rows, dtype=float)
    c = confusion(y, predicted_labels(belief_rows))
    return auc(belief_rows[:, 1], y), sensitivity(c), specificity(c)


@dataclass(frozen=True)
class MeanStd:
    mean: float
    std: float

    def display(self) -> str:
        return f"{self.mean:.4f}±{self.std:.4f}"


@dataclass(frozen=True)
class MetricReport:
    auc: MeanStd
    sensitivity: MeanStd
    specificity: MeanStd
    # one (auc, sens, spec) triple per repetition
    per_repetition: tuple[tuple[float, float, float], ...] = ()

    @classmethod
    def from_repetitions(cls, values) -> MetricReport:
        arr = np.asarray(values, dtype=float).reshape(-1, 3)
        means = arr.mean(axis=0)
        stds = arr.std(axis=0)
        return cls(
            *(MeanStd(float(m), float(s)) for m, s in zip(means, stds)),
            per_repetition=tuple(tuple(float(v) for v in row) for row in arr),
        )


@dataclass(frozen=True)
class CvProtocol:
    folds: int = 5
    repetitions: int = 10
    weight_train_fraction: float = 0.7
    stratified: bool = True
    seed: int = 0
    # pool test-fold predictions per repetition instead of averaging fold metrics
    pool_folds: bool = False

    def __post_init__(self):
        if self.folds < 2:
            raise ConfigurationError("folds must be at least 2")
        if self.repetitions < 1:
            raise ConfigurationError("repetitions must be at least 1")
        if not 0 < self.weight_train_fraction < 1:
            raise ConfigurationError("weight_train_fraction must lie in (0, 1)")


@dataclass(frozen=True, eq=False)
class FoldContext:
    """Everything a model builder sees for one (repetition, fold) task.

    ``weight_train`` and ``validation`` index rows of ``train``.
    """

    train: Dataset
    weight_train: np.ndarray
    validation: np.ndarray
    seed: int
    repetition: int
    fold: int


Predictor = Callable[[np.ndarray], np.ndarray]
ModelBuilder = Callable[[FoldContext], Mapping[str, Predictor]]


def _fold_seed(master: int, rep: int, fold: int) -> int:
    return int(task_seed(master, rep, fold, 1).generate_state(1, dtype=np.uint32)[0])


def cross_validate_many(dataset: Dataset, model_builder: ModelBuilder, protocol: CvProtocol,
                        threads: int = 1) -> dict[str, MetricReport]:
    """Run the CV protocol for a builder returning several named predictors per fold.

    A predictor maps raw feature rows to (n, 2) class scores. Every
    (repetition, fold) task draws from its own seed stream, and results are
    gathered in task order, so the report does not depend on ``threads``.
    """
    try:
        plan = make_splits(dataset, protocol.folds, protocol.repetitions, protocol.weight_train_fraction,
                           protocol.seed, stratified=protocol.stratified)
    except DataError as exc:
        raise ConfigurationError(str(exc)) from exc

    tasks = [(r, k) for r in range(protocol.repetitions) for k in range(protocol.folds)]

    def run(task):
        rep, fold = task
        train_idx, test_idx = plan.train_test(rep, fold)
        wt, val = plan.inner[rep][fold]
        # inner indices are global; re-express them relative to the training fold
        position = np.full(dataset.n_samples, -1)
        position[train_idx] = np.arange(len(train_idx))
        ctx = FoldContext(dataset.subset(train_idx), position[wt], position[val],
                          _fold_seed(protocol.seed, rep, fold), rep, fold)
        predictors = model_builder(ctx)
        X_test = dataset.X[test_idx]
        return {name: np.asarray(p(X_test), dtype=float) for name, p in predictors.items()}, test_idx

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outputs = list(pool.map(run, tasks))
    else:
        outputs = [run(t) for t in tasks]

    names = list(outputs[0][0])
    reports = {}
    for name in names:
        per_rep = []
        for rep in range(protocol.repetitions):
            chunk = outputs[rep * protocol.folds:(rep + 1) * protocol.folds]
            if protocol.pool_folds:
                beliefs = np.concatenate([o[0][name] for o in chunk])
                y = np.concatenate([dataset.y[o[1]] for o in chunk])
                per_rep.append(score_beliefs(beliefs, y))
            else:
                fold_values = [score_beliefs(o[0][name], dataset.y[o[1]]) for o in chunk]
                per_rep.append(tuple(np.mean(fold_values, axis=0)))
        reports[name] = MetricReport.from_repetitions(per_rep)
    return reports


def cross_validate(dataset: Dataset, model_builder: Callable[[FoldContext], Predictor], protocol: CvProtocol,
                   threads: int = 1) -> MetricReport:
    """Single-model form of :func:`cross_validate_many`."""
    return cross_validate_many(dataset, lambda ctx: {"model": model_builder(ctx)}, protocol, threads)["model"]
