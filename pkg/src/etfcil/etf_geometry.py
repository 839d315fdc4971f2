"""Simplex equiangular tight frame (ETF) construction and certification.

The classifier for the whole label space is pre-assigned as a simplex ETF:
K unit vectors in R^d whose pairwise inner products all equal -1/(K-1),
the maximal equiangular separation. Columns are built as

    sqrt(K/(K-1)) * U @ (I_K - (1/K) * 1 1^T)

where U is a d x K matrix with orthonormal columns obtained from a seeded
Gaussian draw. The construction needs U^T U = I_K, hence d >= K.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateRotationError, DimensionTooSmallError
from .seeding import spawn_rng

DEFAULT_TOL = 1e-9

_MAX_ROTATION_RETRIES = 8
_RANK_TOL = 1e-10


@dataclass(frozen=True)
class EtfPrototypes:
    """Fixed classifier matrix; column k is the unit prototype of class k.

    Immutable after construction (the column array is marked read-only),
    so instances are safe to share across concurrent readers.
    """

    dim: int
    num_classes: int
    columns: np.ndarray
    seed: int

    def column(self, k: int) -> np.ndarray:
        """Prototype vector of class k."""
        return self.columns[:, k]


@dataclass(frozen=True)
class GeometryCertificate:
    """Worst-case deviations of a prototype matrix from exact ETF geometry."""

    max_norm_error: float
    max_gram_error: float
    sum_norm: float
    passed: bool


def make_etf(dim: int, num_classes: int, seed: int) -> EtfPrototypes:
    """Build the seeded simplex ETF for `num_classes` classes in `dim` dimensions.

    Pure function of its arguments: identical inputs give bit-identical output.
    Raises DimensionTooSmallError when dim < num_classes and
    DegenerateRotationError if every retried rotation draw is rank-deficient.
    """
    if num_classes < 2:
        raise ValueError(f"need at least 2 classes, got {num_classes}")
    if dim < num_classes:
        raise DimensionTooSmallError(
            f"construction requires dim >= num_classes, got dim={dim} < K={num_classes}"
        )
    rotation = None
    for attempt in range(_MAX_ROTATION_RETRIES + 1):
        raw = spawn_rng(seed, 0, attempt).standard_normal((dim, num_classes))
        q, r = np.linalg.qr(raw)
        diag = np.diagonal(r)
        if np.min(np.abs(diag)) > _RANK_TOL * np.sqrt(dim):
            # Fix the QR sign ambiguity so the result matches Gram-Schmidt.
            rotation = q * np.sign(diag)
            break
    if rotation is None:
        raise DegenerateRotationError(
            f"rotation draw rank-deficient after {_MAX_ROTATION_RETRIES} retries"
        )
    k = num_classes
    centering = np.eye(k) - np.full((k, k), 1.0 / k)
    columns = np.sqrt(k / (k - 1.0)) * rotation @ centering
    columns.flags.writeable = False
    return EtfPrototypes(dim=dim, num_classes=k, columns=columns, seed=seed)


def verify_etf(protos: EtfPrototypes, tol: float = DEFAULT_TOL) -> GeometryCertificate:
    """Measure worst-case ETF deviations of `protos` and judge them against `tol`.

    Never raises on bad geometry; failures are reported through the
    certificate. The column-sum bound is 10*tol (it accumulates K rounding
    errors, unlike the per-entry norm and Gram checks).
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    gram = protos.columns.T @ protos.columns
    k = protos.num_classes
    max_norm_error = float(np.max(np.abs(np.sqrt(np.diagonal(gram)) - 1.0)))
    off_diag = gram[~np.eye(k, dtype=bool)]
    max_gram_error = float(np.max(np.abs(off_diag + 1.0 / (k - 1.0))))
    sum_norm = float(np.linalg.norm(protos.columns.sum(axis=1)))
    passed = max_norm_error <= tol and max_gram_error <= tol and sum_norm <= 10.0 * tol
    return GeometryCertificate(max_norm_error, max_gram_error, sum_norm, passed)


def slice_prototypes(protos: EtfPrototypes, class_ids: Sequence[int]) -> np.ndarray:
    """Read-only (dim, len(class_ids)) sub-matrix of the requested prototype columns."""
    ids = np.asarray(class_ids, dtype=np.intp)
    if ids.size and (ids.min() < 0 or ids.max() >= protos.num_classes):
        raise IndexError(
            f"class ids must lie in [0, {protos.num_classes}), got {class_ids!r}"
        )
    sub = protos.columns[:, ids]
    sub.flags.writeable = False
    return sub


def prototype_matrix(protos) -> np.ndarray:
    """Accept either EtfPrototypes or a plain (d, K) array and return the matrix."""
    if isinstance(protos, EtfPrototypes):
        return protos.columns
    mat = np.asarray(protos, dtype=np.float64)
    if mat.ndim != 2:
        raise ValueError(f"prototype matrix must be 2-D, got shape {mat.shape}")
    return mat
