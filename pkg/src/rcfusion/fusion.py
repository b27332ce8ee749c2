"""Belief-distribution fusion kernel.

Combines per-classifier class scores with trained weights and per-sample
reliabilities through the closed-form evidential reasoning (ER) combination.
Also provides the recursive ER combination (used as an independent check of
the closed form) and the baseline strategies compared against it:

    aer_fuse        closed-form ER combination with weight and reliability
    recursive_er_fuse  pairwise ER combination, normalised at the end
    weighted_fuse   convex combination of scores (WF)
    ds_fuse         normalised per-class product (DSF)
    er_fuse         ER combination with reliability tied to normalised weight (ERF)
    rcf_fuse        reliabilities from classifier agreement, then aer_fuse (RCF)

Scalar entry points take the small value types defined here. The ``*_batch``
functions operate on stacked score arrays of shape ``(n_samples, N, H)`` and
are what the training pipeline uses in its inner loops.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

SUM_TOL = 1e-9


class FusionError(ValueError):
    """Base class for fusion failures."""


class TotalConflictError(FusionError):
    """Fully weighted, fully reliable evidences disagree on every class."""


class UnsupportedArityError(FusionError):
    """Operation restricted to binary belief distributions."""


class InvalidWeightsError(FusionError):
    """Weights are negative, out of range or all zero."""


@dataclass(frozen=True)
class BeliefDistribution:
    """Probability assignment over the H classes of the frame."""

    scores: tuple[float, ...]

    def __post_init__(self):
        scores = tuple(float(s) for s in self.scores)
        object.__setattr__(self, "scores", scores)
        if len(scores) < 2:
            raise FusionError(f"need at least 2 classes, got {len(scores)}")
        if any(not (0.0 <= s <= 1.0) for s in scores):
            raise FusionError(f"scores must lie in [0, 1]: {scores}")
        if abs(math.fsum(scores) - 1.0) > SUM_TOL:
            raise FusionError(f"scores must sum to 1: {scores}")

    @classmethod
    def from_array(cls, values) -> BeliefDistribution:
        """Build from raw values, absorbing float round-off.

        Values outside [0, 1] by less than ``SUM_TOL`` are clipped; the
        result is renormalised only when its sum already agrees with 1
        to within the tolerance.
        """
        arr = np.asarray(values, dtype=float)
        arr = np.where((arr < 0) & (arr > -SUM_TOL), 0.0, arr)
        arr = np.where((arr > 1) & (arr < 1 + SUM_TOL), 1.0, arr)
        total = arr.sum()
        if abs(total - 1.0) <= SUM_TOL and total > 0:
            arr = arr / total
        return cls(tuple(arr.tolist()))

    @property
    def arity(self) -> int:
        return len(self.scores)

    def as_array(self) -> np.ndarray:
        return np.array(self.scores, dtype=float)

    def __len__(self):
        return len(self.scores)

    def __getitem__(self, h):
        return self.scores[h]


def predicted_label(bd: BeliefDistribution | Sequence[float]) -> int:
    """Index of the largest score; exact ties go to the lowest index."""
    scores = bd.scores if isinstance(bd, BeliefDistribution) else tuple(bd)
    best = 0
    for h in range(1, len(scores)):
        if scores[h] > scores[best]:
            best = h
    return best


@dataclass(frozen=True)
class ClassifierOutput:
    source_id: str
    belief: BeliefDistribution

    @property
    def label(self) -> int:
        return predicted_label(self.belief)


@dataclass(frozen=True)
class Evidence:
    belief: BeliefDistribution
    weight: float
    reliability: float

    def __post_init__(self):
        if not (0.0 <= self.weight <= 1.0):
            raise InvalidWeightsError(f"weight must be in [0, 1], got {self.weight}")
        if not (0.0 <= self.reliability <= 1.0):
            raise FusionError(f"reliability must be in [0, 1], got {self.reliability}")


class FusionStrategy(str, enum.Enum):
    RCF = "rcf"
    RCF1 = "rcf1"
    WF = "wf"
    DSF = "dsf"
    ERF = "erf"

    @classmethod
    def parse(cls, value: str | FusionStrategy) -> FusionStrategy:
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower().replace("-", ""))
        except ValueError:
            names = ", ".join(s.value for s in cls)
            raise ValueError(f"unknown fusion strategy {value!r} (expected one of {names})") from None


def _as_belief(b) -> BeliefDistribution:
    if isinstance(b, BeliefDistribution):
        return b
    if isinstance(b, ClassifierOutput):
        return b.belief
    return BeliefDistribution.from_array(b)


# ---------------------------------------------------------------------------
# Reliability
# ---------------------------------------------------------------------------

def reliabilities_batch(scores: np.ndarray) -> np.ndarray:
    """Per-sample reliabilities of N binary classifier outputs.

    ``scores`` has shape ``(n, N, 2)``. Classifier i gets
    ``SL_i / (N - 1) * (1 - prod_{j != i} (1 - p_j(l_i)))`` where ``l_i`` is
    its own argmax label, ``p_j(l_i)`` is the score classifier j gives to that
    label and ``SL_i`` counts the other classifiers that predict ``l_i``.
    A lone classifier has reliability 1.
    """
    scores = np.asarray(scores, dtype=float)
    if scores.ndim != 3:
        raise ValueError(f"expected (n, N, H) scores, got shape {scores.shape}")
    n, N, H = scores.shape
    if H != 2:
        raise UnsupportedArityError(f"reliability is defined for binary outputs only (H={H})")
    if N == 1:
        return np.ones((n, 1))
    # ties (p1 == p2) resolve to class 0
    labels = (scores[:, :, 1] > scores[:, :, 0]).astype(np.intp)
    # support[s, i, j] = score classifier j assigns to classifier i's label
    support = np.where(labels[:, :, None] == 1, scores[:, None, :, 1], scores[:, None, :, 0])
    others = ~np.eye(N, dtype=bool)
    dissimilarity = np.prod(np.where(others, 1.0 - support, 1.0), axis=2)
    same = (labels[:, :, None] == labels[:, None, :]) & others
    agree = same.sum(axis=2)
    return agree / (N - 1) * (1.0 - dissimilarity)


def compute_reliabilities(outputs: Sequence[ClassifierOutput | BeliefDistribution]) -> np.ndarray:
    """Reliabilities of N binary classifier outputs for one sample."""
    if len(outputs) == 0:
        raise ValueError("need at least one classifier output")
    beliefs = [_as_belief(o) for o in outputs]
    scores = np.array([b.scores for b in beliefs], dtype=float)[None]
    return reliabilities_batch(scores)[0]


# ---------------------------------------------------------------------------
# Analytic ER combination
# ---------------------------------------------------------------------------

def aer_batch(scores: np.ndarray, weights, reliabilities) -> np.ndarray:
    """Closed-form ER combination over stacked evidence.

    Parameters
    ----------
    scores : array, shape (n, N, H)
    weights : array broadcastable to (n, N), values in [0, 1]
    reliabilities : array broadcastable to (n, N), values in [0, 1]

    Returns
    -------
    array, shape (n, H)

    Evidence with zero weight is neutral and is dropped; a sample whose
    evidences all have zero weight yields the uniform distribution.
    Raises TotalConflictError if any sample's normalisation vanishes.
    """
    scores = np.asarray(scores, dtype=float)
    n, N, H = scores.shape
    w = np.broadcast_to(np.asarray(weights, dtype=float), (n, N))
    r = np.broadcast_to(np.asarray(reliabilities, dtype=float), (n, N))
    active = w > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        d = 1.0 + w - r
        m = w[:, :, None] * scores / d[:, :, None]
        m_frame = (1.0 - r) / d
    # inactive evidence contributes factor 1 to every product
    m = np.where(active[:, :, None], m, 0.0)
    m_frame = np.where(active, m_frame, 1.0)

    class_prod = np.prod(m + m_frame[:, :, None], axis=1)  # (n, H)
    frame_prod = np.prod(m_frame, axis=1)  # (n,)
    k_inv = class_prod.sum(axis=1) - (H - 1) * frame_prod
    numer = class_prod - frame_prod[:, None]

    none_active = ~active.any(axis=1)
    conflict = (k_inv <= 0) & ~none_active
    if conflict.any():
        raise TotalConflictError(
            f"total conflict in {int(conflict.sum())} sample(s): normalisation factor is undefined"
        )
    # p_h = k*numer_h / (1 - k*frame_prod) with k = 1/k_inv, i.e. numer_h / (k_inv - frame_prod)
    denom = k_inv - frame_prod
    with np.errstate(divide="ignore", invalid="ignore"):
        fused = numer / denom[:, None]
    fused = np.where(none_active[:, None], 1.0 / H, fused)
    return np.clip(fused, 0.0, 1.0)


def aer_fuse(evidences: Sequence[Evidence], H: int | None = None) -> BeliefDistribution:
    """Combine weighted, reliability-discounted evidence in closed form."""
    if len(evidences) == 0:
        raise ValueError("need at least one evidence")
    H = H or evidences[0].belief.arity
    if any(e.belief.arity != H for e in evidences):
        raise FusionError("all belief distributions must have the same arity")
    scores = np.array([e.belief.scores for e in evidences], dtype=float)[None]
    w = np.array([e.weight for e in evidences])
    r = np.array([e.reliability for e in evidences])
    return BeliefDistribution.from_array(aer_batch(scores, w, r)[0])


def recursive_er_fuse(evidences: Sequence[Evidence], H: int | None = None) -> BeliefDistribution:
    """Pairwise ER combination of singleton evidence, left to right.

    Each evidence becomes a weighted belief distribution with reliability:
    ``c*w*p_h`` on every class and ``c*(1 - r)`` on the frame, with
    ``c = 1/(1 + w - r)``. Combination is the orthogonal sum restricted to
    singletons plus frame mass; the combined masses are renormalised after
    each step, and the final belief is ``m_h / (1 - m_frame)``.

    Written with plain loops; it shares no code with ``aer_batch``.
    """
    if len(evidences) == 0:
        raise ValueError("need at least one evidence")
    H = H or evidences[0].belief.arity
    kept = [e for e in evidences if e.weight > 0]
    if not kept:
        return BeliefDistribution(tuple([1.0 / H] * H))

    def wbdr(e: Evidence):
        c = 1.0 / (1.0 + e.weight - e.reliability)
        return [c * e.weight * p for p in e.belief.scores], c * (1.0 - e.reliability)

    masses, frame = wbdr(kept[0])
    for e in kept[1:]:
        nxt, nxt_frame = wbdr(e)
        combined = [masses[h] * nxt[h] + masses[h] * nxt_frame + frame * nxt[h] for h in range(H)]
        combined_frame = frame * nxt_frame
        total = math.fsum(combined) + combined_frame
        if total <= 0:
            raise TotalConflictError("total conflict: combined mass vanishes")
        masses = [x / total for x in combined]
        frame = combined_frame / total

    residual = 1.0 - frame
    if residual <= 0:
        raise TotalConflictError("no class mass left after combination")
    return BeliefDistribution.from_array([x / residual for x in masses])


# ---------------------------------------------------------------------------
# Baseline strategies
# ---------------------------------------------------------------------------

def _normalised_weights(weights, n_sources: int) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.shape != (n_sources,):
        raise InvalidWeightsError(f"expected {n_sources} weights, got shape {w.shape}")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise InvalidWeightsError(f"weights must be non-negative and finite: {w}")
    total = w.sum()
    if total <= 0:
        raise InvalidWeightsError("weights must not all be zero")
    return w / total


def weighted_batch(scores: np.ndarray, weights) -> np.ndarray:
    scores = np.asarray(scores, dtype=float)
    w = _normalised_weights(weights, scores.shape[1])
    return np.einsum("snh,n->sh", scores, w)


def product_batch(scores: np.ndarray) -> np.ndarray:
    prod = np.prod(np.asarray(scores, dtype=float), axis=1)
    total = prod.sum(axis=1)
    if np.any(total <= 0):
        raise TotalConflictError("every class product is zero")
    return prod / total[:, None]


def weighted_fuse(beliefs: Sequence, weights) -> BeliefDistribution:
    """Convex combination of belief distributions (weights normalised to sum 1)."""
    if len(beliefs) == 0:
        raise ValueError("need at least one belief distribution")
    scores = np.array([_as_belief(b).scores for b in beliefs])[None]
    return BeliefDistribution.from_array(weighted_batch(scores, weights)[0])


def ds_fuse(beliefs: Sequence) -> BeliefDistribution:
    """Dempster combination of singleton beliefs: normalised per-class product."""
    if len(beliefs) == 0:
        raise ValueError("need at least one belief distribution")
    scores = np.array([_as_belief(b).scores for b in beliefs])[None]
    return BeliefDistribution.from_array(product_batch(scores)[0])


def er_fuse(beliefs: Sequence, weights) -> BeliefDistribution:
    """ER combination with reliability equal to the normalised weight."""
    if len(beliefs) == 0:
        raise ValueError("need at least one belief distribution")
    w = _normalised_weights(weights, len(beliefs))
    evidences = [Evidence(_as_belief(b), float(wi), float(wi)) for b, wi in zip(beliefs, w)]
    return aer_fuse(evidences)


def rcf_fuse(outputs: Sequence, weights) -> BeliefDistribution:
    """Reliable classifier fusion: agreement-based reliabilities, then aer_fuse."""
    beliefs = [_as_belief(o) for o in outputs]
    r = compute_reliabilities(beliefs)
    w = np.asarray(weights, dtype=float)
    if w.shape != (len(beliefs),):
        raise InvalidWeightsError(f"expected {len(beliefs)} weights, got shape {w.shape}")
    return aer_fuse([Evidence(b, float(wi), float(ri)) for b, wi, ri in zip(beliefs, w, r)])


def reliability_sweep(outputs: Sequence, weights, swept_index: int, grid, fixed_reliability: float = 1.0):
    """Fused distribution as one classifier's reliability moves along ``grid``.

    The other classifiers keep ``fixed_reliability``. Returns a list of
    ``(r, BeliefDistribution)`` pairs in grid order.
    """
    beliefs = [_as_belief(o) for o in outputs]
    if not 0 <= swept_index < len(beliefs):
        raise IndexError(f"swept_index {swept_index} out of range for {len(beliefs)} outputs")
    w = [float(x) for x in weights]
    result = []
    for value in grid:
        value = float(value)
        if not (0.0 < value <= 1.0):
            raise ValueError(f"grid values must be in (0, 1], got {value}")
        r = [fixed_reliability] * len(beliefs)
        r[swept_index] = value
        fused = aer_fuse([Evidence(b, wi, ri) for b, wi, ri in zip(beliefs, w, r)])
        result.append((value, fused))
    return result


def fuse_batch(strategy: FusionStrategy | str, scores: np.ndarray, weights) -> np.ndarray:
    """Fuse stacked scores ``(n, N, H)`` with one of the named strategies.

    RCF computes reliabilities per sample from the scores themselves;
    RCF1 fixes them at 1. DSF ignores the weights.
    """
    strategy = FusionStrategy.parse(strategy)
    scores = np.asarray(scores, dtype=float)
    w = np.asarray(weights, dtype=float)
    if strategy is FusionStrategy.WF:
        return weighted_batch(scores, w)
    if strategy is FusionStrategy.DSF:
        return product_batch(scores)
    if strategy is FusionStrategy.ERF:
        wn = _normalised_weights(w, scores.shape[1])
        return aer_batch(scores, wn, wn)
    if np.any(w < 0) or np.any(w > 1):
        raise InvalidWeightsError(f"weights must lie in [0, 1]: {w}")
    if strategy is FusionStrategy.RCF1:
        return aer_batch(scores, w, 1.0)
    return aer_batch(scores, w, reliabilities_batch(scores))
