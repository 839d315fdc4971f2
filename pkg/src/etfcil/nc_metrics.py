"""Neural-collapse diagnostics over feature dumps.

Given features tagged with class, session of origin and split, computes the
alignment cosines between centered class means and classifier prototypes
(same-class and cross-class averages), the within/between covariance trace
ratio tr(Sigma_W)/tr(Sigma_B), and the agreement between prototype-logit
prediction and nearest-class-mean prediction. Perfect collapse onto a
simplex ETF gives same-class cosine 1, cross-class cosine -1/(K-1), trace
ratio 0 and full agreement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import serialize
from .errors import (
    DegenerateBetweenError,
    DegenerateMeanError,
    EmptyClassError,
    ShapeMismatchError,
)
from .etf_geometry import prototype_matrix

SCOPES = ("per-session", "accumulate", "base-only")
SPLITS = ("train", "test")

TRAIN_SPLIT = 0
TEST_SPLIT = 1

_MEAN_EPS = 1e-12


@dataclass(frozen=True)
class FeatureDump:
    """Feature records: one vector per sample with label, session and split tags."""

    vectors: np.ndarray
    labels: np.ndarray
    sessions: np.ndarray
    splits: np.ndarray

    def __post_init__(self):
        n = len(self.vectors)
        if not (len(self.labels) == len(self.sessions) == len(self.splits) == n):
            raise ShapeMismatchError("dump arrays must share their leading dimension")

    def __len__(self) -> int:
        return len(self.vectors)

    def subset(self, mask: np.ndarray) -> "FeatureDump":
        return FeatureDump(
            self.vectors[mask], self.labels[mask], self.sessions[mask], self.splits[mask]
        )

    def save(self, path) -> None:
        serialize.write_feature_records(path, self.vectors, self.labels, self.sessions, self.splits)

    @classmethod
    def load(cls, path) -> "FeatureDump":
        vectors, labels, sessions, splits = serialize.read_feature_records(path)
        return cls(vectors=vectors, labels=labels, sessions=sessions, splits=splits)


@dataclass(frozen=True)
class MetricsReport:
    cross_class_cosine: float
    same_class_cosine: float
    trace_ratio: float
    nc4_agreement: float
    scope: str
    split: str
    session: int


def select_scope(dump: FeatureDump, scope: str, session_t: int, split: str) -> FeatureDump:
    """Record pool for one panel: split plus the scope's session filter."""
    if scope not in SCOPES:
        raise ValueError(f"scope must be one of {SCOPES}, got {scope!r}")
    if split not in SPLITS:
        raise ValueError(f"split must be one of {SPLITS}, got {split!r}")
    mask = dump.splits == (TRAIN_SPLIT if split == "train" else TEST_SPLIT)
    if scope == "per-session":
        mask &= dump.sessions == session_t
    elif scope == "accumulate":
        mask &= dump.sessions <= session_t
    else:
        mask &= dump.sessions == 0
    return dump.subset(mask)


def class_means(dump: FeatureDump, class_set) -> tuple[np.ndarray, np.ndarray]:
    """Per-class means (rows ordered like class_set) and the pool's global mean.

    The global mean is unweighted over all samples whose label is in
    class_set, matching the Avg notation of the diagnostics.
    """
    class_set = list(class_set)
    pool = np.isin(dump.labels, class_set)
    if not pool.any():
        raise EmptyClassError("no features for the requested class set")
    means = np.empty((len(class_set), dump.vectors.shape[1]))
    for i, c in enumerate(class_set):
        rows = dump.vectors[dump.labels == c]
        if len(rows) == 0:
            raise EmptyClassError(f"class {c} has no features in the dump")
        means[i] = rows.mean(axis=0)
    global_mean = dump.vectors[pool].mean(axis=0)
    return means, global_mean


def alignment_cosines(dump: FeatureDump, protos, class_set) -> tuple[float, float]:
    """(cross_class, same_class) average cosines of centered means vs prototypes.

    The same-class average pairs each centered mean m_k - m_G with its own
    prototype column. The cross-class average pairs it with every *other*
    prototype column of the classifier: the classifier is pre-assigned for
    the whole label space, so k' ranges over all columns, which makes the
    cross cosine of a perfectly collapsed model insensitive to how many
    classes have been encountered (unseen prototypes average to zero
    against any fixed vector by the zero-sum property).

    `protos` must cover the whole label space, columns indexed by class id.
    """
    class_set = list(class_set)
    w = prototype_matrix(protos)
    means, global_mean = class_means(dump, class_set)
    centered = means - global_mean
    norms = np.linalg.norm(centered, axis=1)
    if np.any(norms <= _MEAN_EPS):
        bad = class_set[int(np.argmin(norms))]
        raise DegenerateMeanError(f"centered mean of class {bad} has vanishing norm")
    col_norms = np.linalg.norm(w, axis=0)
    cos = (centered @ w) / np.outer(norms, col_norms)
    rows = np.arange(len(class_set))
    own = cos[rows, class_set]
    same = float(own.mean())
    total_classes = w.shape[1]
    cross = float((cos.sum() - own.sum()) / (len(class_set) * (total_classes - 1)))
    return cross, same


def trace_ratio(dump: FeatureDump, class_set) -> float:
    """tr(Sigma_W)/tr(Sigma_B) via sums of squared norms; no d x d matrices.

    tr(Sigma_W^(k)) = Avg_i ||x_{k,i} - m_k||^2, averaged over classes;
    tr(Sigma_B) = Avg_k ||m_k - m_G||^2.
    """
    class_set = list(class_set)
    if len(class_set) < 2:
        raise ValueError("trace ratio needs at least two classes")
    means, global_mean = class_means(dump, class_set)
    within = 0.0
    for i, c in enumerate(class_set):
        rows = dump.vectors[dump.labels == c]
        within += float(((rows - means[i]) ** 2).sum(axis=1).mean())
    within /= len(class_set)
    between = float(((means - global_mean) ** 2).sum(axis=1).mean())
    if between <= _MEAN_EPS:
        raise DegenerateBetweenError(f"between-class trace {between} is numerically zero")
    return within / between


def nc4_agreement(dump: FeatureDump, protos, class_set) -> float:
    """Fraction of samples where prototype-logit argmax = nearest-class-mean argmin.

    Both predictors range over class_set; ties resolve to the lowest class.
    """
    class_set = list(class_set)
    w = prototype_matrix(protos)
    means, _ = class_means(dump, class_set)
    pool = dump.vectors[np.isin(dump.labels, class_set)]
    logits = pool @ w[:, class_set]
    dists = ((pool[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
    return float((np.argmax(logits, axis=1) == np.argmin(dists, axis=1)).mean())


def report(dump: FeatureDump, protos, scope: str, split: str, session_t: int) -> MetricsReport:
    """All four diagnostics on one scope/split panel at session_t."""
    pool = select_scope(dump, scope, session_t, split)
    class_set = sorted(int(c) for c in np.unique(pool.labels))
    cross, same = alignment_cosines(pool, protos, class_set)
    return MetricsReport(
        cross_class_cosine=cross,
        same_class_cosine=same,
        trace_ratio=trace_ratio(pool, class_set),
        nc4_agreement=nc4_agreement(pool, protos, class_set),
        scope=scope,
        split=split,
        session=session_t,
    )
