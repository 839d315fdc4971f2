"""Numerical certification of the incremental layer-peeled optimum.

The simplified incremental problem drops the network and treats each
last-layer feature m as a free variable under ||m||^2 <= 1, minimizing the
session's mean loss against the full fixed ETF classifier. Its global
minimizer places every feature exactly on its own prototype:

    ||m|| = 1,   m^T w_k' = K/(K-1) * delta_{k,k'} - 1/(K-1).

This module solves each session with projected gradient descent (features
are independent given the fixed classifier, so per-feature gradients are
used; the minimizer is identical to that of the session mean) and reports
worst-case gaps to that analytic optimum, plus the tangential KKT residual
on the unit sphere.

Step sizes: the DR loss is quartically flat along the sphere at its
optimum, so the projected-gradient angle to the prototype shrinks like
1/sqrt(lr * steps); the update map contracts monotonically for any lr > 0,
and a large constant step (default 5e4) is required to certify 1e-4 gaps
within a few thousand steps. CE has positive tangential curvature at its
boundary optimum and converges linearly at lr near 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, ShapeMismatchError
from .etf_geometry import EtfPrototypes
from .losses import CrossEntropy, DotRegression, LossKind
from .seeding import spawn_rng

DEFAULT_DR_LR = 5e4
DEFAULT_CE_LR = 1.0
DEFAULT_DR_STEPS = 5000
DEFAULT_CE_STEPS = 50000

INIT_NORM = 0.5


@dataclass(frozen=True)
class SessionSpec:
    """One session: its class count and per-class sample counts (may be imbalanced)."""

    num_classes: int
    samples_per_class: tuple[int, ...]

    def __post_init__(self):
        if self.num_classes < 1:
            raise ValueError("session needs at least one class")
        if len(self.samples_per_class) != self.num_classes:
            raise ShapeMismatchError(
                f"{self.num_classes} classes but {len(self.samples_per_class)} sample counts"
            )
        if any(n < 1 for n in self.samples_per_class):
            raise ValueError("every class needs at least one sample")


def session_spec(num_classes: int, samples_per_class) -> SessionSpec:
    """Convenience constructor; an int means balanced samples per class."""
    if isinstance(samples_per_class, int):
        counts = (samples_per_class,) * num_classes
    else:
        counts = tuple(int(n) for n in samples_per_class)
    return SessionSpec(num_classes=num_classes, samples_per_class=counts)


@dataclass(frozen=True)
class LayerPeeledProblem:
    dim: int
    sessions: tuple[SessionSpec, ...]
    protos: EtfPrototypes
    loss: LossKind

    def __post_init__(self):
        total = sum(s.num_classes for s in self.sessions)
        if self.protos.num_classes != total:
            raise ShapeMismatchError(
                f"classifier covers {self.protos.num_classes} classes, sessions define {total}"
            )
        if self.protos.dim != self.dim:
            raise ShapeMismatchError(
                f"classifier dim {self.protos.dim} != problem dim {self.dim}"
            )

    @property
    def total_classes(self) -> int:
        return self.protos.num_classes

    def class_offset(self, t: int) -> int:
        return sum(s.num_classes for s in self.sessions[:t])

    def session_labels(self, t: int) -> np.ndarray:
        """Global class index of every feature in session t, in bank order."""
        off = self.class_offset(t)
        spec = self.sessions[t]
        return np.concatenate(
            [np.full(n, off + k, dtype=np.intp) for k, n in enumerate(spec.samples_per_class)]
        )


@dataclass
class FeatureBank:
    """Per-session feature matrices (rows are features) with global class labels."""

    features: list[np.ndarray] = field(default_factory=list)
    labels: list[np.ndarray] = field(default_factory=list)

    def all_features(self) -> np.ndarray:
        return np.vstack(self.features)

    def all_labels(self) -> np.ndarray:
        return np.concatenate(self.labels)

    def max_norm(self) -> float:
        return float(max(np.linalg.norm(m, axis=1).max() for m in self.features))


@dataclass(frozen=True)
class OptimalityReport:
    max_norm_gap: float
    max_self_gap: float
    max_cross_gap: float
    max_kkt_residual: float


@dataclass
class SolveTrace:
    """Mean session loss sampled along the optimization, per session."""

    steps: list[list[int]] = field(default_factory=list)
    losses: list[list[float]] = field(default_factory=list)


def _session_losses_grads(m, labels, w, kind):
    """Per-feature loss vector and gradient rows for one session state."""
    if isinstance(kind, DotRegression):
        own = np.einsum("nd,dn->n", m, w[:, labels])
        losses = 0.5 * (own - 1.0) ** 2
        grads = (own - 1.0)[:, None] * w[:, labels].T
    else:
        logits = kind.scale * (m @ w)
        logits -= logits.max(axis=1, keepdims=True)
        log_z = np.log(np.exp(logits).sum(axis=1))
        losses = log_z - logits[np.arange(len(labels)), labels]
        probs = np.exp(logits - log_z[:, None])
        probs[np.arange(len(labels)), labels] -= 1.0
        grads = kind.scale * (probs @ w.T)
    return losses, grads


def run_session_pgd(init_features, labels, protos, kind, steps, lr, sample_every=0):
    """Projected gradient descent for one session's features on the unit ball.

    After every step any feature with norm > 1 is radially projected back to
    norm 1. Returns the final features and (step, mean loss) samples when
    sample_every > 0 (the final step is always sampled).
    """
    m = np.array(init_features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.intp)
    w = protos.columns
    sampled_steps: list[int] = []
    sampled_losses: list[float] = []
    for step in range(steps):
        losses, grads = _session_losses_grads(m, labels, w, kind)
        mean_loss = float(losses.mean())
        if not np.isfinite(mean_loss):
            raise DivergenceError(f"session mean loss became {mean_loss} at step {step}")
        if sample_every and (step % sample_every == 0 or step == steps - 1):
            sampled_steps.append(step)
            sampled_losses.append(mean_loss)
        m -= lr * grads
        norms = np.linalg.norm(m, axis=1)
        over = norms > 1.0
        if over.any():
            m[over] /= norms[over, None]
    return m, (sampled_steps, sampled_losses)


def default_lr(kind: LossKind) -> float:
    return DEFAULT_DR_LR if isinstance(kind, DotRegression) else DEFAULT_CE_LR


def default_steps(kind: LossKind) -> int:
    return DEFAULT_DR_STEPS if isinstance(kind, DotRegression) else DEFAULT_CE_STEPS


def solve_incremental(problem: LayerPeeledProblem, steps: int, lr: float, seed: int) -> FeatureBank:
    bank, _ = solve_incremental_traced(problem, steps, lr, seed)
    return bank


def solve_incremental_traced(
    problem: LayerPeeledProblem, steps: int, lr: float, seed: int, sample_every: int = 100
) -> tuple[FeatureBank, SolveTrace]:
    """Solve sessions in order; earlier sessions stay frozen afterwards.

    Session t features start from a seeded Gaussian rescaled to norm 0.5
    (strictly feasible). Deterministic given (problem, steps, lr, seed).
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    bank = FeatureBank()
    trace = SolveTrace()
    for t in range(len(problem.sessions)):
        labels = problem.session_labels(t)
        init = spawn_rng(seed, 3, t).standard_normal((len(labels), problem.dim))
        init *= INIT_NORM / np.linalg.norm(init, axis=1, keepdims=True)
        final, (s_steps, s_losses) = run_session_pgd(
            init, labels, problem.protos, problem.loss, steps, lr, sample_every=sample_every
        )
        bank.features.append(final)
        bank.labels.append(labels)
        trace.steps.append(s_steps)
        trace.losses.append(s_losses)
    return bank, trace


def softmax_probs(feature: np.ndarray, protos: EtfPrototypes) -> np.ndarray:
    """Softmax over the raw prototype logits w_j^T m; sums to 1 within 1e-12."""
    logits = protos.columns.T @ np.asarray(feature, dtype=np.float64)
    shifted = logits - logits.max()
    exp = np.exp(shifted)
    return exp / exp.sum()


def check_optimality(bank: FeatureBank, problem: LayerPeeledProblem) -> OptimalityReport:
    """Worst-case gaps of the bank against the analytic optimum geometry.

    The KKT residual is the norm of the loss gradient projected onto the
    tangent space of the unit sphere at each feature's direction (at a
    stationary boundary point the Euclidean gradient is radial).
    """
    if len(bank.features) != len(problem.sessions):
        raise ShapeMismatchError(
            f"bank has {len(bank.features)} sessions, problem {len(problem.sessions)}"
        )
    for t, spec in enumerate(problem.sessions):
        expected = sum(spec.samples_per_class)
        if bank.features[t].shape != (expected, problem.dim):
            raise ShapeMismatchError(
                f"session {t}: features {bank.features[t].shape}, expected {(expected, problem.dim)}"
            )
        if not np.array_equal(bank.labels[t], problem.session_labels(t)):
            raise ShapeMismatchError(f"session {t}: label layout does not match problem")
    m = bank.all_features()
    labels = bank.all_labels()
    w = problem.protos.columns
    k = problem.total_classes
    n = len(labels)

    norms = np.linalg.norm(m, axis=1)
    inner = m @ w
    own = inner[np.arange(n), labels]
    cross = np.abs(inner + 1.0 / (k - 1.0))
    cross[np.arange(n), labels] = 0.0

    _, grads = _session_losses_grads(m, labels, w, problem.loss)
    safe = norms > 1e-12
    units = np.where(safe[:, None], m / np.where(safe, norms, 1.0)[:, None], 0.0)
    radial = np.einsum("nd,nd->n", grads, units)
    tangential = grads - radial[:, None] * units
    residuals = np.where(safe, np.linalg.norm(tangential, axis=1), np.linalg.norm(grads, axis=1))

    return OptimalityReport(
        max_norm_gap=float(np.abs(norms - 1.0).max()),
        max_self_gap=float(np.abs(own - 1.0).max()),
        max_cross_gap=float(cross.max()),
        max_kkt_residual=float(residuals.max()),
    )
