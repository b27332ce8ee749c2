"""Model construction: feature selection, per-source classifiers, fusion
weight training, prediction and persistence."""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import classifiers as clf
from .data import Dataset, ZScore, stratified_folds, stratified_holdout, task_seed, zscore_apply, zscore_fit
from .fusion import BeliefDistribution, FusionStrategy, aer_batch, fuse_batch, reliabilities_batch
from .metrics import (
    FoldContext,
    MetricReport,
    CvProtocol,
    auc_columns,
    confusion,
    cross_validate_many,
    predicted_labels,
    sensitivity,
    specificity,
)
from .optimizer import CsaConfig, OptimizerConfig, csa_optimize, imia_optimize, select_best_solution

SCHEMA_VERSION = 1

# hyperparameters tuned jointly with the fusion weights, searched on a log2 scale
TUNABLE = {clf.ClassifierKind.RBF_SVC: ("C", "gamma")}


class PipelineError(ValueError):
    pass


class ModelFormatError(PipelineError):
    pass


class SchemaVersionError(ModelFormatError):
    pass


def derive_seed(seed: int, *path: int) -> int:
    return int(task_seed(seed, *path).generate_state(1, dtype=np.uint32)[0])


@dataclass(frozen=True)
class FeatureMask:
    bits: tuple[int, ...]

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if not bits or any(b not in (0, 1) for b in bits):
            raise PipelineError("a feature mask is a non-empty 0/1 vector")
        object.__setattr__(self, "bits", bits)

    @classmethod
    def full(cls, n: int) -> FeatureMask:
        return cls((1,) * n)

    @classmethod
    def from_indices(cls, n: int, indices) -> FeatureMask:
        bits = [0] * n
        for i in indices:
            bits[i] = 1
        return cls(tuple(bits))

    @property
    def selected(self) -> tuple[int, ...]:
        return tuple(i for i, b in enumerate(self.bits) if b)

    def __len__(self) -> int:
        return len(self.bits)


@dataclass(frozen=True)
class TrainConfig:
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    csa: CsaConfig = field(default_factory=CsaConfig)
    feature_selection: bool = True
    repeats: int = 20
    inner_folds: int = 5
    weight_train_fraction: float = 0.7
    # refit source classifiers on the whole training set once weights are known
    refit: bool = True
    workers: int = 1

    def __post_init__(self):
        if self.repeats < 1:
            raise PipelineError("repeats must be at least 1")
        if self.inner_folds < 2:
            raise PipelineError("inner_folds must be at least 2")
        if not 0 < self.weight_train_fraction < 1:
            raise PipelineError("weight_train_fraction must lie in (0, 1)")

    def as_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# Feature selection
# ---------------------------------------------------------------------------

def mask_evaluator(X, y, spec: clf.ClassifierSpec, n_folds: int = 5, seed: int = 0):
    """Objective function for masks: mean internal-CV (sensitivity, specificity).

    Each internal fold is z-scored with its own training statistics.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    folds = stratified_folds(y, n_folds, np.random.default_rng(seed))
    prepared = []
    for k in range(n_folds):
        tr = folds != k
        stats = zscore_fit(X[tr])
        prepared.append((zscore_apply(stats, X[tr]), y[tr], zscore_apply(stats, X[~tr]), y[~tr]))

    def evaluate(mask) -> tuple[float, float]:
        cols = np.flatnonzero(mask)
        sens, spec_ = [], []
        for X_tr, y_tr, X_te, y_te in prepared:
            model = clf.train(spec, X_tr[:, cols], y_tr, seed=seed)
            c = confusion(y_te, predicted_labels(clf.predict_scores(model, X_te[:, cols])))
            sens.append(sensitivity(c))
            spec_.append(specificity(c))
        return float(np.mean(sens)), float(np.mean(spec_))

    return evaluate


def select_features(dataset: Dataset, spec: clf.ClassifierSpec, config: OptimizerConfig,
                    inner_folds: int = 5, workers: int = 1):
    """Pareto front of feature masks for ``spec`` on ``dataset``."""
    if dataset.n_features < 1:
        raise PipelineError("feature selection needs at least one feature")
    evaluate = mask_evaluator(dataset.X, dataset.y, spec, inner_folds, config.seed)
    return imia_optimize(evaluate, config, n_genes=dataset.n_features, workers=workers)


def stable_select_features(dataset: Dataset, spec: clf.ClassifierSpec, config: OptimizerConfig,
                           repeats: int = 20, inner_folds: int = 5, workers: int = 1) -> FeatureMask:
    """Consensus mask over ``repeats`` independently seeded selection runs.

    The mask size is the rounded mean size of the per-run best solutions;
    the most frequently chosen features fill it, ties to the lower index.
    """
    M = dataset.n_features
    counts = np.zeros(M, dtype=np.int64)
    sizes = []
    for r in range(repeats):
        run_config = replace(config, seed=derive_seed(config.seed, r))
        best = select_best_solution(select_features(dataset, spec, run_config, inner_folds, workers))
        counts += np.asarray(best.genome, dtype=np.int64)
        sizes.append(best.n_selected)
    m_star = max(1, int(math.floor(float(np.mean(sizes)) + 0.5)))
    order = sorted(range(M), key=lambda i: (-counts[i], i))
    return FeatureMask.from_indices(M, order[:m_star])


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SourceModel:
    source_id: str
    feature_names: tuple[str, ...]
    mask: FeatureMask
    classifier: clf.TrainedClassifier
    zscore: ZScore

    def __post_init__(self):
        if len(self.mask) != len(self.feature_names):
            raise PipelineError(f"source {self.source_id!r}: mask length differs from its feature list")
        if not self.mask.selected:
            raise PipelineError(f"source {self.source_id!r}: empty feature mask")
        if self.classifier.n_features != len(self.mask.selected):
            raise PipelineError(f"source {self.source_id!r}: classifier arity differs from mask cardinality")

    @property
    def selected_names(self) -> tuple[str, ...]:
        return tuple(self.feature_names[i] for i in self.mask.selected)

    def scores(self, X_selected: np.ndarray) -> np.ndarray:
        return clf.predict_scores(self.classifier, zscore_apply(self.zscore, X_selected))


@dataclass(frozen=True, eq=False)
class FusedModel:
    sources: tuple[SourceModel, ...]
    strategy: FusionStrategy
    weights: tuple[float, ...]
    seed: int = 0
    config_hash: str = ""

    def __post_init__(self):
        if not self.sources:
            raise PipelineError("a fused model needs at least one source")
        if len(self.weights) != len(self.sources):
            raise PipelineError("one weight per source is required")
        if any(not (0.0 <= w <= 1.0) for w in self.weights):
            raise PipelineError(f"weights must lie in [0, 1]: {self.weights}")
        object.__setattr__(self, "strategy", FusionStrategy.parse(self.strategy))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))

    @property
    def input_names(self) -> tuple[str, ...]:
        """Every column some source reads, in first-appearance order."""
        return tuple(dict.fromkeys(n for s in self.sources for n in s.selected_names))


def _column_lookup(columns: Sequence[str]) -> dict[str, int]:
    return {name: i for i, name in enumerate(columns)}


def source_scores(model: FusedModel, X, columns: Sequence[str] | None = None) -> np.ndarray:
    """Stacked per-source scores, shape (n, N, 2).

    ``columns`` names the columns of ``X``; by default ``X`` holds exactly
    :attr:`FusedModel.input_names`.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    columns = tuple(columns) if columns is not None else model.input_names
    if len(columns) != X.shape[1]:
        raise PipelineError(f"{X.shape[1]} columns given but {len(columns)} names")
    lookup = _column_lookup(columns)
    out = []
    for src in model.sources:
        missing = [n for n in src.selected_names if n not in lookup]
        if missing:
            raise PipelineError(f"source {src.source_id!r} needs missing columns {missing}")
        out.append(src.scores(X[:, [lookup[n] for n in src.selected_names]]))
    return np.stack(out, axis=1)


def fuse_scores(model: FusedModel, stacked: np.ndarray) -> np.ndarray:
    return fuse_batch(model.strategy, stacked, np.asarray(model.weights))


def predict(model: FusedModel, X, columns: Sequence[str] | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Fused (n, 2) beliefs and argmax labels for the rows of ``X``."""
    beliefs = fuse_scores(model, source_scores(model, X, columns))
    return beliefs, predicted_labels(beliefs)


def predict_sample(model: FusedModel, row, columns: Sequence[str] | None = None) -> tuple[BeliefDistribution, int]:
    beliefs, labels = predict(model, np.asarray(row, dtype=float)[None, :], columns)
    return BeliefDistribution.from_array(beliefs[0]), int(labels[0])


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SourceDef:
    """A candidate evidence source: a set of columns and the classifier that reads them."""

    source_id: str
    columns: tuple[int, ...]
    spec: clf.ClassifierSpec


def fit_source(dataset: Dataset, source: SourceDef, mask: FeatureMask, rows, seed: int,
               spec: clf.ClassifierSpec | None = None) -> SourceModel:
    cols = [source.columns[i] for i in mask.selected]
    X = dataset.X[np.asarray(rows)][:, cols]
    stats = zscore_fit(X)
    model = clf.train(spec or source.spec, zscore_apply(stats, X), dataset.y[np.asarray(rows)], seed=seed)
    return SourceModel(source.source_id, tuple(dataset.feature_names[c] for c in source.columns), mask, model, stats)


def fused_positive_scores(strategy: FusionStrategy, stacked: np.ndarray, weight_rows: np.ndarray,
                          reliabilities: np.ndarray | None = None) -> np.ndarray:
    """Positive-class fused scores for many weight vectors at once, shape (n, g)."""
    n, N, _ = stacked.shape
    W = np.asarray(weight_rows, dtype=float).reshape(-1, N)
    g = len(W)
    if strategy is FusionStrategy.DSF:
        return np.repeat(fuse_batch(strategy, stacked, np.ones(N))[:, 1:2], g, axis=1)
    if strategy in (FusionStrategy.WF, FusionStrategy.ERF):
        totals = W.sum(axis=1, keepdims=True)
        # an all-zero weight vector falls back to equal weights
        W = np.where(totals > 0, W / np.where(totals > 0, totals, 1.0), 1.0 / N)
        if strategy is FusionStrategy.WF:
            return stacked[:, :, 1] @ W.T
    tiled = np.broadcast_to(stacked, (g, n, N, 2)).reshape(g * n, N, 2)
    w_rows = np.repeat(W, n, axis=0)
    if strategy is FusionStrategy.ERF:
        r_rows = w_rows
    elif strategy is FusionStrategy.RCF1:
        r_rows = 1.0
    else:
        rel = reliabilities if reliabilities is not None else reliabilities_batch(stacked)
        r_rows = np.tile(rel, (g, 1))
    return aer_batch(tiled, w_rows, r_rows)[:, 1].reshape(g, n).T


def train_weights(strategy, stacked_val: np.ndarray, y_val, csa: CsaConfig) -> tuple[float, ...]:
    """Fusion weights in [0, 1] maximizing validation AUC by clonal selection."""
    strategy = FusionStrategy.parse(strategy)
    N = stacked_val.shape[1]
    if strategy is FusionStrategy.DSF or N == 1:
        return (1.0,) * N
    pos = np.asarray(y_val) == 1
    rel = reliabilities_batch(stacked_val) if strategy is FusionStrategy.RCF else None

    def fitness(G):
        return auc_columns(fused_positive_scores(strategy, stacked_val, G, rel), pos)

    result = csa_optimize(fitness, [(0.0, 1.0)] * N, csa, vectorized=True)
    return tuple(float(w) for w in result.genome)


def _inner_split(dataset: Dataset, config: TrainConfig, seed: int, inner):
    if inner is not None:
        return np.asarray(inner[0]), np.asarray(inner[1])
    return stratified_holdout(dataset.y, config.weight_train_fraction, np.random.default_rng(derive_seed(seed, 0)))


def _map(fn, items, workers: int):
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _select_masks(dataset: Dataset, sources: Sequence[SourceDef], config: TrainConfig, seed: int):
    def one(i):
        src = sources[i]
        if not config.feature_selection:
            return FeatureMask.full(len(src.columns))
        opt = replace(config.optimizer, seed=derive_seed(seed, 1, i))
        return stable_select_features(dataset.columns(src.columns), src.spec, opt, config.repeats, config.inner_folds)

    return _map(one, list(range(len(sources))), config.workers)


def config_hash(payload: dict) -> str:
    text = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha1(text.encode("utf-8")).hexdigest()


def train_fused_models(dataset: Dataset, sources: Sequence[SourceDef], strategies, config: TrainConfig,
                       seed: int = 0, inner=None, masks=None) -> dict[FusionStrategy, FusedModel]:
    """Train shared source models, then one weight vector per strategy.

    Source classifiers are fit on the weight-training part of the inner
    split, weights maximize fused AUC on the held-out part, and the
    classifiers are refit on every training row when ``config.refit``.
    """
    if not sources:
        raise PipelineError("need at least one source")
    strategies = [FusionStrategy.parse(s) for s in strategies]
    wt, val = _inner_split(dataset, config, seed, inner)
    masks = masks if masks is not None else _select_masks(dataset, sources, config, seed)

    def fit_all(rows):
        return tuple(fit_source(dataset, src, m, rows, derive_seed(seed, 2, i))
                     for i, (src, m) in enumerate(zip(sources, masks)))

    stage = FusedModel(fit_all(wt), FusionStrategy.WF, (1.0,) * len(sources))
    stacked_val = source_scores(stage, dataset.X[val], dataset.feature_names)
    final_sources = fit_all(np.arange(dataset.n_samples)) if config.refit else stage.sources
    h = config_hash({"sources": [(s.source_id, s.columns, s.spec.kind.value, s.spec.hyperparameters) for s in sources],
                     "config": config.as_dict(), "seed": seed})
    models = {}
    for k, strategy in enumerate(strategies):
        csa = replace(config.csa, seed=derive_seed(seed, 3, k))
        weights = train_weights(strategy, stacked_val, dataset.y[val], csa)
        models[strategy] = FusedModel(final_sources, strategy, weights, seed, h)
    return models


def classifier_sources(dataset: Dataset, kinds) -> list[SourceDef]:
    cols = tuple(range(dataset.n_features))
    specs = [k if isinstance(k, clf.ClassifierSpec) else clf.ClassifierSpec.of(k) for k in kinds]
    return [SourceDef(s.kind.value, cols, s) for s in specs]


def train_multiclassifier(dataset: Dataset, kinds, config: TrainConfig | None = None, strategy="rcf",
                          seed: int = 0, inner=None) -> FusedModel:
    """One source per classifier kind over all columns, fused with CSA-trained weights."""
    if not kinds:
        raise PipelineError("need at least one classifier kind")
    config = config or TrainConfig()
    return train_fused_models(dataset, classifier_sources(dataset, kinds), [strategy], config, seed, inner)[
        FusionStrategy.parse(strategy)]


def modality_sources(dataset: Dataset, spec: clf.ClassifierSpec) -> list[SourceDef]:
    if not dataset.groups:
        raise PipelineError("dataset declares no modality groups")
    return [SourceDef(name, tuple(cols), spec) for name, cols in dataset.groups.items()]


def _tunable_bounds(spec: clf.ClassifierSpec) -> list[tuple[float, float]]:
    declared = clf.HYPERPARAMETERS[spec.kind]
    return [(math.log2(declared[n][1]), math.log2(declared[n][2])) for n in TUNABLE.get(spec.kind, ())]


def train_multimodality(dataset: Dataset, config: TrainConfig | None = None, strategy="rcf",
                        spec: clf.ClassifierSpec | None = None, seed: int = 0, inner=None) -> FusedModel:
    """Per-modality feature selection, then joint search over classifier
    hyperparameters and fusion weights.

    The joint genome holds log2 hyperparameters for every modality followed
    by one weight per modality (omitted for a single modality, which is
    used as is). Objectives are fused sensitivity and specificity on the
    held-out part of the inner split.
    """
    config = config or TrainConfig()
    strategy = FusionStrategy.parse(strategy)
    spec = spec or clf.ClassifierSpec.of(clf.ClassifierKind.RBF_SVC)
    sources = modality_sources(dataset, spec)
    N = len(sources)
    wt, val = _inner_split(dataset, config, seed, inner)
    masks = _select_masks(dataset, sources, config, seed)
    tunables = TUNABLE.get(spec.kind, ())
    hp_bounds = _tunable_bounds(spec)
    n_hp = len(hp_bounds)
    use_weights = N > 1 and strategy is not FusionStrategy.DSF
    bounds = hp_bounds * N + ([(0.0, 1.0)] * N if use_weights else [])
    y_val = dataset.y[val]

    def decode(genome):
        genome = np.asarray(genome, dtype=float)
        specs = []
        for i in range(N):
            hp = dict(spec.hyperparameters)
            for j, name in enumerate(tunables):
                hp[name] = 2.0 ** genome[i * n_hp + j]
            specs.append(clf.ClassifierSpec(spec.kind, hp))
        weights = tuple(float(w) for w in genome[n_hp * N:]) if use_weights else (1.0,) * N
        return specs, weights

    def fit_all(specs, rows):
        return tuple(fit_source(dataset, src, m, rows, derive_seed(seed, 2, i), spec=s)
                     for i, (src, m, s) in enumerate(zip(sources, masks, specs)))

    def objectives(genome):
        specs, weights = decode(genome)
        model = FusedModel(fit_all(specs, wt), strategy, weights)
        beliefs, labels = predict(model, dataset.X[val], dataset.feature_names)
        c = confusion(y_val, labels)
        return sensitivity(c), specificity(c)

    if bounds:
        opt = replace(config.optimizer, seed=derive_seed(seed, 4))
        best = select_best_solution(imia_optimize(objectives, opt, bounds=bounds, workers=config.workers))
        specs, weights = decode(best.genome)
    else:
        specs, weights = [spec] * N, (1.0,) * N
    rows = np.arange(dataset.n_samples) if config.refit else wt
    h = config_hash({"sources": [(s.source_id, s.columns) for s in sources], "spec": spec.kind.value,
                     "strategy": strategy.value, "config": config.as_dict(), "seed": seed})
    return FusedModel(fit_all(specs, rows), strategy, weights, seed, h)


def pooled_source(dataset: Dataset, spec: clf.ClassifierSpec) -> SourceDef:
    """All columns as one source; the single-model baseline."""
    return SourceDef("pooled", tuple(range(dataset.n_features)), spec)


# ---------------------------------------------------------------------------
# Cross-validated comparison
# ---------------------------------------------------------------------------

SINGLE_PREFIX = "single:"
POOLED = "pooled"


def evaluate_strategies(dataset: Dataset, strategies: Sequence[str], kinds, protocol: CvProtocol,
                        config: TrainConfig | None = None, threads: int = 1) -> dict[str, MetricReport]:
    """Cross-validated metrics per strategy for the multi-classifier model.

    ``strategies`` may name fusion strategies, ``single:<kind>`` for one
    source classifier on its own, or ``pooled`` for the first kind trained
    on all columns as a single source.
    """
    config = config or TrainConfig(weight_train_fraction=protocol.weight_train_fraction)
    fusion_names = [s for s in strategies if not s.startswith(SINGLE_PREFIX) and s != POOLED]
    fusion = [FusionStrategy.parse(s) for s in fusion_names]
    sources = classifier_sources(dataset, kinds)
    by_id = {s.source_id: i for i, s in enumerate(sources)}
    for s in strategies:
        if s.startswith(SINGLE_PREFIX):
            kind = clf.ClassifierKind.parse(s[len(SINGLE_PREFIX):]).value
            if kind not in by_id:
                raise PipelineError(f"{s} is not among the configured classifier kinds")

    def builder(ctx: FoldContext):
        models = train_fused_models(ctx.train, sources, fusion or [FusionStrategy.WF], config, ctx.seed,
                                    (ctx.weight_train, ctx.validation))
        names = ctx.train.feature_names
        any_model = next(iter(models.values()))
        predictors = {}
        for name, strategy in zip(fusion_names, fusion):
            predictors[name] = (lambda m: lambda X: predict(m, X, names)[0])(models[strategy])
        for s in strategies:
            if s.startswith(SINGLE_PREFIX):
                i = by_id[clf.ClassifierKind.parse(s[len(SINGLE_PREFIX):]).value]
                predictors[s] = (lambda i: lambda X: source_scores(any_model, X, names)[:, i])(i)
            elif s == POOLED:
                pooled = fit_source(ctx.train, pooled_source(ctx.train, sources[0].spec),
                                    FeatureMask.full(ctx.train.n_features), np.arange(ctx.train.n_samples),
                                    derive_seed(ctx.seed, 5))
                single = FusedModel((pooled,), FusionStrategy.RCF, (1.0,))
                predictors[s] = lambda X, m=single: predict(m, X, names)[0]
        return {s: predictors[s] for s in strategies}

    return cross_validate_many(dataset, builder, protocol, threads)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def _encode(value):
    if isinstance(value, np.ndarray):
        return {"dtype": value.dtype.str, "shape": list(value.shape), "data": value.ravel().tolist()}
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return value


def _decode(value):
    if isinstance(value, dict) and set(value) == {"dtype", "shape", "data"}:
        return np.array(value["data"], dtype=np.dtype(value["dtype"])).reshape(value["shape"])
    return value


def model_to_dict(model: FusedModel) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "strategy": model.strategy.value,
        "sources": [
            {
                "id": s.source_id,
                "feature_names": list(s.feature_names),
                "mask": list(s.mask.bits),
                "classifier": {
                    "kind": s.classifier.spec.kind.value,
                    "hyperparameters": dict(s.classifier.spec.hyperparameters),
                    "state": {k: _encode(v) for k, v in s.classifier.state.items()},
                },
                "zscore": {"mean": s.zscore.mean.tolist(), "std": s.zscore.std.tolist()},
            }
            for s in model.sources
        ],
        "weights": list(model.weights),
        "seed": model.seed,
        "config_hash": model.config_hash,
    }


def model_from_dict(doc: dict) -> FusedModel:
    if not isinstance(doc, dict) or "schema_version" not in doc:
        raise ModelFormatError("not a model document: schema_version missing")
    if doc["schema_version"] != SCHEMA_VERSION:
        raise SchemaVersionError(f"unsupported schema_version {doc['schema_version']!r}; expected {SCHEMA_VERSION}")
    try:
        sources = []
        for s in doc["sources"]:
            c = s["classifier"]
            spec = clf.ClassifierSpec(clf.ClassifierKind.parse(c["kind"]), c["hyperparameters"])
            mask = FeatureMask(tuple(s["mask"]))
            trained = clf.TrainedClassifier(spec, {k: _decode(v) for k, v in c["state"].items()}, len(mask.selected))
            stats = ZScore(np.array(s["zscore"]["mean"], dtype=float), np.array(s["zscore"]["std"], dtype=float))
            if stats.mean.shape != (len(mask.selected),) or stats.std.shape != stats.mean.shape:
                raise ModelFormatError(f"source {s['id']!r}: z-score length differs from mask cardinality")
            sources.append(SourceModel(s["id"], tuple(s["feature_names"]), mask, trained, stats))
        return FusedModel(tuple(sources), FusionStrategy.parse(doc["strategy"]),
                          tuple(float(w) for w in doc["weights"]), int(doc["seed"]), str(doc["config_hash"]))
    except ModelFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed model document: {exc}") from exc


def atomic_write_text(path, text: str) -> None:
    """Write via a temporary sibling file so readers never see partial output."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_model(model: FusedModel, path) -> None:
    atomic_write_text(path, json.dumps(model_to_dict(model), indent=1) + "\n")


def load_model(path) -> FusedModel:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not valid JSON ({exc})") from exc
    return model_from_dict(doc)
