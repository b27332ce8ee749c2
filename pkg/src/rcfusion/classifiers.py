"""Probabilistic base classifiers with a uniform train / predict-scores API.

Every classifier returns an ``(n, 2)`` array of class scores whose rows are
valid belief distributions; column 1 is the positive class. Labels are
encoded 0/1. Callers are expected to z-score features beforehand.

Learned state is a flat dict of numpy arrays and floats so that models can
be serialised to JSON and reloaded bit-exactly; prediction only reads that
dict.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.special import expit, logsumexp


class ClassifierError(ValueError):
    pass


class ClassifierKind(str, enum.Enum):
    LSVM = "lsvm"
    LR = "lr"
    LDA = "lda"
    DT = "dt"
    KNN = "knn"
    NB = "nb"
    RBF_SVC = "rbf_svc"

    @classmethod
    def parse(cls, value) -> ClassifierKind:
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"da": "lda", "svm": "lsvm", "rbf": "rbf_svc", "svc": "rbf_svc"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            names = ", ".join(k.value for k in cls)
            raise ClassifierError(f"unknown classifier kind {value!r} (expected one of {names})") from None


# name -> (default, low, high); integers where the default is an int
HYPERPARAMETERS: dict[ClassifierKind, dict[str, tuple[float, float, float]]] = {
    ClassifierKind.LR: {"l2": (1e-4, 0.0, 1.0), "iterations": (500, 1, 100000), "step": (0.1, 1e-6, 10.0)},
    ClassifierKind.LSVM: {"lam": (1e-3, 1e-8, 10.0), "epochs": (50, 1, 10000), "batch": (16, 1, 100000)},
    ClassifierKind.LDA: {"shrinkage": (1e-6, 0.0, 1.0)},
    ClassifierKind.DT: {"max_depth": (10, 1, 64), "min_leaf": (3, 1, 1000)},
    ClassifierKind.KNN: {"k": (5, 1, 1000), "alpha": (1.0, 0.0, 100.0)},
    ClassifierKind.NB: {"var_floor": (1e-9, 0.0, 1.0)},
    ClassifierKind.RBF_SVC: {"C": (1.0, 2.0**-5, 2.0**10), "gamma": (2.0**-4, 2.0**-10, 2.0**3)},
}


@dataclass(frozen=True)
class ClassifierSpec:
    kind: ClassifierKind
    hyperparameters: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        kind = ClassifierKind.parse(self.kind)
        object.__setattr__(self, "kind", kind)
        declared = HYPERPARAMETERS[kind]
        merged = {}
        for name, (default, low, high) in declared.items():
            value = self.hyperparameters.get(name, default)
            if isinstance(default, int):
                value = int(value)
            else:
                value = float(value)
            if not (low <= value <= high):
                raise ClassifierError(f"{kind.value}.{name}={value} outside [{low}, {high}]")
            merged[name] = value
        unknown = set(self.hyperparameters) - set(declared)
        if unknown:
            raise ClassifierError(f"unknown hyperparameters for {kind.value}: {sorted(unknown)}")
        object.__setattr__(self, "hyperparameters", merged)

    @classmethod
    def of(cls, kind, **hyperparameters) -> ClassifierSpec:
        return cls(ClassifierKind.parse(kind), hyperparameters)


@dataclass(frozen=True, eq=False)
class TrainedClassifier:
    spec: ClassifierSpec
    state: dict[str, Any]
    n_features: int

    def predict_scores(self, X) -> np.ndarray:
        return predict_scores(self, X)


def _check_training_data(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2:
        raise ClassifierError(f"features must be 2-D, got shape {X.shape}")
    if y.shape != (X.shape[0],):
        raise ClassifierError("labels must be a vector matching the number of rows")
    if not np.all(np.isin(y, (0, 1))):
        raise ClassifierError("labels must be encoded as 0/1")
    counts = np.bincount(y.astype(int), minlength=2)
    if counts.min() < 2:
        raise ClassifierError(f"need at least 2 samples per class, got {counts.tolist()}")
    return X, y.astype(int)


def train(spec: ClassifierSpec, X, y, seed: int = 0) -> TrainedClassifier:
    """Fit a classifier of ``spec.kind`` on z-scored features ``X`` and 0/1 labels."""
    X, y = _check_training_data(X, y)
    fit, _ = _REGISTRY[spec.kind]
    state = fit(X, y, spec.hyperparameters, np.random.default_rng(seed))
    return TrainedClassifier(spec, state, X.shape[1])


def predict_scores(model: TrainedClassifier, X) -> np.ndarray:
    """Class scores ``(n, 2)`` for the rows of ``X``."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != model.n_features:
        raise ClassifierError(f"expected {model.n_features} features, got {X.shape[1]}")
    _, predict = _REGISTRY[model.spec.kind]
    scores = predict(model.state, X)
    return scores


# scores stay strictly inside (0, 1) so that confident, opposing classifiers
# can never drive an unweighted product combination into total conflict
SCORE_FLOOR = 1e-12


def _two_class(p_pos: np.ndarray) -> np.ndarray:
    p_pos = np.clip(p_pos, SCORE_FLOOR, 1.0 - SCORE_FLOOR)
    return np.column_stack([1.0 - p_pos, p_pos])


def _log_posterior_scores(log_joint: np.ndarray) -> np.ndarray:
    # log_joint: (n, 2) unnormalised log posteriors
    post = np.exp(log_joint - logsumexp(log_joint, axis=1, keepdims=True))
    return _two_class(post[:, 1])


# ---------------------------------------------------------------------------
# Logistic regression: batch gradient descent with L2 on the weights
# ---------------------------------------------------------------------------

def _fit_lr(X, y, hp, rng):
    n, d = X.shape
    w = np.zeros(d)
    b = 0.0
    for _ in range(hp["iterations"]):
        p = expit(X @ w + b)
        err = p - y
        w -= hp["step"] * (X.T @ err / n + hp["l2"] * w)
        b -= hp["step"] * err.mean()
    return {"coef": w, "intercept": b}


def _predict_lr(state, X):
    return _two_class(expit(X @ state["coef"] + state["intercept"]))


# ---------------------------------------------------------------------------
# Platt map for margin classifiers
# ---------------------------------------------------------------------------

def fit_platt(decision: np.ndarray, y: np.ndarray, max_iter: int = 100) -> tuple[float, float]:
    """Fit ``P(y=1 | f) = sigmoid(a*f + b)`` by Newton's method.

    Uses the smoothed targets of Platt (1999) and the backtracking Newton
    iteration of Lin, Lin & Weng (2007).
    """
    f = np.asarray(decision, dtype=float)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    t = np.where(y == 1, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))
    a, b = 0.0, np.log((n_pos + 1.0) / (n_neg + 1.0))
    sigma = 1e-12

    def objective(a, b):
        z = a * f + b
        # -sum t*log(sigmoid(z)) + (1-t)*log(1-sigmoid(z))
        return np.sum(np.logaddexp(0.0, z) - t * z)

    fval = objective(a, b)
    for _ in range(max_iter):
        p = expit(a * f + b)
        d2 = p * (1.0 - p)
        h11 = np.sum(f * f * d2) + sigma
        h22 = np.sum(d2) + sigma
        h21 = np.sum(f * d2)
        g1 = np.sum(f * (p - t))
        g2 = np.sum(p - t)
        if abs(g1) < 1e-5 and abs(g2) < 1e-5:
            break
        det = h11 * h22 - h21 * h21
        da = -(h22 * g1 - h21 * g2) / det
        db = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * da + g2 * db
        step = 1.0
        while step >= 1e-10:
            new_a, new_b = a + step * da, b + step * db
            new_f = objective(new_a, new_b)
            if new_f < fval + 1e-4 * step * gd:
                a, b, fval = new_a, new_b, new_f
                break
            step /= 2.0
        else:
            break
    return float(a), float(b)


# ---------------------------------------------------------------------------
# Linear SVM: mini-batch Pegasos on the hinge loss, averaged iterate
# ---------------------------------------------------------------------------

def _fit_lsvm(X, y, hp, rng):
    n, d = X.shape
    lam = hp["lam"]
    batch = min(hp["batch"], n)
    signs = np.where(y == 1, 1.0, -1.0)
    # constant column carries the (regularised) bias
    Xa = np.hstack([X, np.ones((n, 1))])
    w = np.zeros(d + 1)
    w_avg = np.zeros(d + 1)
    limit = 1.0 / np.sqrt(lam)
    t = 0
    for _ in range(hp["epochs"]):
        order = rng.permutation(n)
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            t += 1
            eta = 1.0 / (lam * t)
            violated = signs[idx] * (Xa[idx] @ w) < 1.0
            grad_step = (signs[idx, None] * Xa[idx])[violated].sum(axis=0) / len(idx)
            w = (1.0 - eta * lam) * w + eta * grad_step
            norm = np.linalg.norm(w)
            if norm > limit:
                w *= limit / norm
            w_avg += (w - w_avg) / t
    coef, intercept = w_avg[:-1], float(w_avg[-1])
    a_platt, b_platt = fit_platt(X @ coef + intercept, y)
    return {"coef": coef, "intercept": intercept, "platt_a": a_platt, "platt_b": b_platt}


def _predict_margin(state, decision):
    return _two_class(expit(state["platt_a"] * decision + state["platt_b"]))


def _predict_lsvm(state, X):
    return _predict_margin(state, X @ state["coef"] + state["intercept"])


# ---------------------------------------------------------------------------
# Linear discriminant analysis with a shrunk shared covariance
# ---------------------------------------------------------------------------

def _fit_lda(X, y, hp, rng):
    n, d = X.shape
    means = np.vstack([X[y == c].mean(axis=0) for c in (0, 1)])
    centred = X - means[y]
    cov = centred.T @ centred / max(n - 2, 1)
    ridge = hp["shrinkage"] * np.trace(cov) / d
    cov = cov + max(ridge, 1e-12) * np.eye(d)
    precision_means = np.linalg.solve(cov, means.T).T  # (2, d)
    priors = np.bincount(y, minlength=2) / n
    const = -0.5 * np.sum(precision_means * means, axis=1) + np.log(priors)
    return {"coef": precision_means, "intercept": const}


def _predict_lda(state, X):
    return _log_posterior_scores(X @ state["coef"].T + state["intercept"])


# ---------------------------------------------------------------------------
# Gaussian naive Bayes
# ---------------------------------------------------------------------------

def _fit_nb(X, y, hp, rng):
    means = np.vstack([X[y == c].mean(axis=0) for c in (0, 1)])
    var = np.vstack([X[y == c].var(axis=0) for c in (0, 1)])
    var = np.maximum(var, hp["var_floor"])
    priors = np.bincount(y, minlength=2) / len(y)
    return {"mean": means, "var": var, "log_prior": np.log(priors)}


def _predict_nb(state, X):
    mean, var = state["mean"], state["var"]
    ll = -0.5 * (np.log(2 * np.pi * var)[None] + (X[:, None, :] - mean[None]) ** 2 / var[None]).sum(axis=2)
    return _log_posterior_scores(ll + state["log_prior"])


# ---------------------------------------------------------------------------
# k-nearest neighbours with Laplace-smoothed vote fractions
# ---------------------------------------------------------------------------

def _fit_knn(X, y, hp, rng):
    return {"X": X.copy(), "y": y.astype(float), "k": hp["k"], "alpha": hp["alpha"]}


def _predict_knn(state, X):
    train_X, train_y = state["X"], state["y"]
    k = min(int(state["k"]), len(train_y))
    alpha = float(state["alpha"])
    d2 = (
        np.sum(X**2, axis=1)[:, None]
        - 2.0 * X @ train_X.T
        + np.sum(train_X**2, axis=1)[None, :]
    )
    # stable sort: equal distances resolve to the lower training index
    nearest = np.argsort(d2, axis=1, kind="stable")[:, :k]
    positives = train_y[nearest].sum(axis=1)
    return _two_class((positives + alpha) / (k + 2.0 * alpha))


# ---------------------------------------------------------------------------
# CART decision tree, Gini impurity, Laplace-smoothed leaves
# ---------------------------------------------------------------------------

def _best_split(X, y, min_leaf):
    n, d = X.shape
    parent = 1.0 - ((y.mean()) ** 2 + (1 - y.mean()) ** 2)
    best = (parent - 1e-12, -1, 0.0)
    total_pos = y.sum()
    for j in range(d):
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        ys = y[order]
        left_n = np.arange(1, n)
        left_pos = np.cumsum(ys)[:-1]
        right_n = n - left_n
        right_pos = total_pos - left_pos
        valid = (xs[1:] > xs[:-1]) & (left_n >= min_leaf) & (right_n >= min_leaf)
        if not valid.any():
            continue
        pl = left_pos / left_n
        pr = right_pos / right_n
        gini = (left_n * 2 * pl * (1 - pl) + right_n * 2 * pr * (1 - pr)) / n
        gini = np.where(valid, gini, np.inf)
        i = int(np.argmin(gini))
        if gini[i] < best[0]:
            best = (gini[i], j, 0.5 * (xs[i] + xs[i + 1]))
    return best[1], best[2]


def _fit_dt(X, y, hp, rng):
    feature, threshold, left, right, counts = [], [], [], [], []

    def grow(idx, depth):
        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        ys = y[idx]
        counts.append((float((ys == 0).sum()), float((ys == 1).sum())))
        if depth >= hp["max_depth"] or len(idx) < 2 * hp["min_leaf"] or ys.min() == ys.max():
            return node
        j, thr = _best_split(X[idx], ys.astype(float), hp["min_leaf"])
        if j < 0:
            return node
        feature[node] = j
        threshold[node] = thr
        go_left = X[idx, j] <= thr
        left[node] = grow(idx[go_left], depth + 1)
        right[node] = grow(idx[~go_left], depth + 1)
        return node

    grow(np.arange(len(y)), 0)
    return {
        "feature": np.array(feature, dtype=np.int64),
        "threshold": np.array(threshold),
        "left": np.array(left, dtype=np.int64),
        "right": np.array(right, dtype=np.int64),
        "counts": np.array(counts),
    }


def _predict_dt(state, X):
    feature, threshold = state["feature"], state["threshold"]
    left, right, counts = state["left"], state["right"], state["counts"]
    node = np.zeros(len(X), dtype=np.int64)
    while True:
        f = feature[node]
        active = f >= 0
        if not active.any():
            break
        rows = np.nonzero(active)[0]
        go_left = X[rows, f[rows]] <= threshold[node[rows]]
        node[rows] = np.where(go_left, left[node[rows]], right[node[rows]])
    c = counts[node]
    return _two_class((c[:, 1] + 1.0) / (c.sum(axis=1) + 2.0))


# ---------------------------------------------------------------------------
# RBF-kernel SVM: dual solved by libsvm's SMO, margins mapped by Platt
# ---------------------------------------------------------------------------

def _rbf_decision(state, X):
    sv = state["support_vectors"]
    d2 = np.sum(X**2, axis=1)[:, None] - 2.0 * X @ sv.T + np.sum(sv**2, axis=1)[None, :]
    K = np.exp(-state["gamma"] * np.maximum(d2, 0.0))
    return K @ state["dual_coef"] + state["intercept"]


def _fit_rbf_svc(X, y, hp, rng):
    from sklearn.svm import SVC

    svc = SVC(C=hp["C"], kernel="rbf", gamma=hp["gamma"], tol=1e-4)
    svc.fit(X, y)
    state = {
        "support_vectors": np.array(svc.support_vectors_, dtype=float),
        "dual_coef": np.array(svc.dual_coef_[0], dtype=float),
        "intercept": float(svc.intercept_[0]),
        "gamma": float(hp["gamma"]),
    }
    state["platt_a"], state["platt_b"] = fit_platt(_rbf_decision(state, X), y)
    return state


def _predict_rbf_svc(state, X):
    return _predict_margin(state, _rbf_decision(state, X))


_REGISTRY = {
    ClassifierKind.LR: (_fit_lr, _predict_lr),
    ClassifierKind.LSVM: (_fit_lsvm, _predict_lsvm),
    ClassifierKind.LDA: (_fit_lda, _predict_lda),
    ClassifierKind.NB: (_fit_nb, _predict_nb),
    ClassifierKind.KNN: (_fit_knn, _predict_knn),
    ClassifierKind.DT: (_fit_dt, _predict_dt),
    ClassifierKind.RBF_SVC: (_fit_rbf_svc, _predict_rbf_svc),
}

DEFAULT_ROSTER = (
    ClassifierKind.LSVM,
    ClassifierKind.LR,
    ClassifierKind.LDA,
    ClassifierKind.DT,
    ClassifierKind.KNN,
    ClassifierKind.NB,
)
