"""Dot-regression and fixed-classifier cross-entropy losses with analytic gradients.

The dot-regression loss 0.5*(w^T mu_hat - 1)^2 pulls the normalized feature
onto its fixed class prototype with no push term; its gradient with respect
to the normalized feature is -(1 - cos(mu_hat, w)) * w. Cross-entropy against
the fixed prototype matrix keeps the usual softmax pull/push structure.
Gradients with respect to pre-normalization features are obtained by explicit
composition through `normalize_backward`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotNormalizedError, VanishingNormError
from .etf_geometry import EtfPrototypes

NORM_EPS = 1e-12
UNIT_TOL = 1e-6


@dataclass(frozen=True)
class DotRegression:
    """Pull-only quadratic alignment loss against the own-class prototype."""


@dataclass(frozen=True)
class CrossEntropy:
    """Softmax cross-entropy over logits scale * w_k^T feature."""

    scale: float = 16.0

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError(f"scale must be positive, got {self.scale}")


LossKind = DotRegression | CrossEntropy


def parse_loss_kind(spec, default_ce_scale: float = 16.0) -> LossKind:
    """Loss selection by name: "dr", "ce", or {"name": "ce", "scale": s}."""
    if isinstance(spec, (DotRegression, CrossEntropy)):
        return spec
    if isinstance(spec, str):
        name, scale = spec, default_ce_scale
    elif isinstance(spec, dict):
        name = spec.get("name", "")
        scale = float(spec.get("scale", default_ce_scale))
    else:
        raise ValueError(f"cannot parse loss kind from {spec!r}")
    if name == "dr":
        return DotRegression()
    if name == "ce":
        return CrossEntropy(scale=scale)
    raise ValueError(f"unknown loss {name!r} (expected 'dr' or 'ce')")


def loss_name(kind: LossKind) -> str:
    return "dr" if isinstance(kind, DotRegression) else "ce"


@dataclass
class LossEval:
    """Scalar loss with its gradient(s); grad_wrt_raw is filled by composition."""

    value: float
    grad_wrt_normalized: np.ndarray
    grad_wrt_raw: np.ndarray | None = None


def dr_loss(mu_hat: np.ndarray, target_proto: np.ndarray, allow_interior: bool = False) -> LossEval:
    """Dot-regression loss of a normalized feature against its class prototype.

    With allow_interior=True the feature may lie strictly inside the unit
    ball (norm <= 1 + UNIT_TOL), which is how the constrained layer-peeled
    variables use this loss on raw vectors.
    """
    mu_hat = np.asarray(mu_hat, dtype=np.float64)
    target_proto = np.asarray(target_proto, dtype=np.float64)
    feat_norm = float(np.linalg.norm(mu_hat))
    if allow_interior:
        if feat_norm > 1.0 + UNIT_TOL:
            raise NotNormalizedError(f"feature norm {feat_norm} exceeds the unit ball")
    elif abs(feat_norm - 1.0) > UNIT_TOL:
        raise NotNormalizedError(f"feature norm {feat_norm} is not within {UNIT_TOL} of 1")
    proto_norm = float(np.linalg.norm(target_proto))
    if abs(proto_norm - 1.0) > UNIT_TOL:
        raise NotNormalizedError(f"prototype norm {proto_norm} is not within {UNIT_TOL} of 1")
    cos = float(target_proto @ mu_hat)
    value = 0.5 * (cos - 1.0) ** 2
    grad = (cos - 1.0) * target_proto
    return LossEval(value=value, grad_wrt_normalized=grad)


def ce_loss_fixed(feature: np.ndarray, protos: EtfPrototypes, label: int, scale: float = 1.0) -> LossEval:
    """Cross-entropy of logits scale * W^T feature against the fixed prototypes."""
    if not 0 <= label < protos.num_classes:
        raise IndexError(f"label {label} outside [0, {protos.num_classes})")
    feature = np.asarray(feature, dtype=np.float64)
    logits = scale * (protos.columns.T @ feature)
    shifted = logits - logits.max()
    log_z = np.log(np.exp(shifted).sum())
    value = float(log_z - shifted[label])
    probs = np.exp(shifted - log_z)
    probs[label] -= 1.0
    grad = scale * (protos.columns @ probs)
    return LossEval(value=value, grad_wrt_normalized=grad)


def normalize_backward(mu_raw: np.ndarray, upstream_grad: np.ndarray) -> np.ndarray:
    """Chain rule through mu_hat = mu / ||mu||: (I - mu_hat mu_hat^T) g / ||mu||."""
    mu_raw = np.asarray(mu_raw, dtype=np.float64)
    upstream_grad = np.asarray(upstream_grad, dtype=np.float64)
    norm = float(np.linalg.norm(mu_raw))
    if norm <= NORM_EPS:
        raise VanishingNormError(f"cannot backprop through normalization at norm {norm}")
    mu_hat = mu_raw / norm
    return (upstream_grad - (upstream_grad @ mu_hat) * mu_hat) / norm


def eval_loss(kind: LossKind, mu_raw: np.ndarray, protos: EtfPrototypes, label: int) -> LossEval:
    """Evaluate `kind` on the normalized feature and compose the raw gradient."""
    mu_raw = np.asarray(mu_raw, dtype=np.float64)
    norm = float(np.linalg.norm(mu_raw))
    if norm <= NORM_EPS:
        raise VanishingNormError(f"feature norm {norm} too small to normalize")
    mu_hat = mu_raw / norm
    if isinstance(kind, DotRegression):
        out = dr_loss(mu_hat, protos.column(label))
    else:
        out = ce_loss_fixed(mu_hat, protos, label, scale=kind.scale)
    out.grad_wrt_raw = normalize_backward(mu_raw, out.grad_wrt_normalized)
    return out
