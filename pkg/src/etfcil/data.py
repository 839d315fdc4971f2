"""Synthetic session data for desk-scale class-incremental runs.

Each class gets a mean drawn uniformly on a sphere of radius r_mean in input
space; samples are that mean plus isotropic Gaussian noise. The label space
is partitioned into a large base session followed by disjoint p-way q-shot
sessions, and the session-t test pool spans every class encountered so far.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .seeding import spawn_rng


@dataclass(frozen=True)
class SessionPlan:
    input_dim: int
    base_classes: int
    incremental_sessions: int
    ways: int
    shots: int
    base_train_per_class: int
    test_per_class: int
    seed: int

    def __post_init__(self):
        for name in (
            "input_dim",
            "base_classes",
            "incremental_sessions",
            "ways",
            "shots",
            "base_train_per_class",
            "test_per_class",
        ):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")

    @property
    def num_sessions(self) -> int:
        return self.incremental_sessions + 1

    @property
    def total_classes(self) -> int:
        return self.base_classes + self.incremental_sessions * self.ways

    def session_classes(self, t: int) -> range:
        """Disjoint label range of session t; base classes come first."""
        if not 0 <= t < self.num_sessions:
            raise IndexError(f"session {t} outside [0, {self.num_sessions})")
        if t == 0:
            return range(0, self.base_classes)
        start = self.base_classes + (t - 1) * self.ways
        return range(start, start + self.ways)

    def classes_through(self, t: int) -> range:
        return range(0, self.session_classes(t).stop)

    def train_per_class(self, t: int) -> int:
        return self.base_train_per_class if t == 0 else self.shots


@dataclass(frozen=True)
class SyntheticDataset:
    plan: SessionPlan
    class_means: np.ndarray
    train_x: tuple[np.ndarray, ...]
    train_y: tuple[np.ndarray, ...]
    test_x: tuple[np.ndarray, ...]
    test_y: tuple[np.ndarray, ...]

    def train_session(self, t: int) -> tuple[np.ndarray, np.ndarray]:
        return self.train_x[t], self.train_y[t]

    def test_pool_through(self, t: int) -> tuple[np.ndarray, np.ndarray]:
        """Evaluation pool for session t: test samples of all sessions <= t."""
        xs = np.vstack(self.test_x[: t + 1])
        ys = np.concatenate(self.test_y[: t + 1])
        return xs, ys

    def checksum(self) -> str:
        digest = hashlib.sha256()
        for arr in (self.class_means, *self.train_x, *self.train_y, *self.test_x, *self.test_y):
            digest.update(np.ascontiguousarray(arr).tobytes())
        return digest.hexdigest()


def generate_dataset(plan: SessionPlan, r_mean: float, sigma_noise: float) -> SyntheticDataset:
    """Deterministic synthetic dataset for (plan, r_mean, sigma_noise)."""
    if r_mean <= 0:
        raise ValueError(f"r_mean must be positive, got {r_mean}")
    if sigma_noise < 0:
        raise ValueError(f"sigma_noise must be nonnegative, got {sigma_noise}")
    k = plan.total_classes
    means = spawn_rng(plan.seed, 1, 0).standard_normal((k, plan.input_dim))
    means *= r_mean / np.linalg.norm(means, axis=1, keepdims=True)

    train_x, train_y, test_x, test_y = [], [], [], []
    for t in range(plan.num_sessions):
        xs_tr, ys_tr, xs_te, ys_te = [], [], [], []
        n_train = plan.train_per_class(t)
        for c in plan.session_classes(t):
            rng = spawn_rng(plan.seed, 1, 1, c)
            noise = rng.standard_normal((n_train + plan.test_per_class, plan.input_dim))
            samples = means[c] + sigma_noise * noise
            xs_tr.append(samples[:n_train])
            ys_tr.append(np.full(n_train, c, dtype=np.intp))
            xs_te.append(samples[n_train:])
            ys_te.append(np.full(plan.test_per_class, c, dtype=np.intp))
        train_x.append(np.vstack(xs_tr))
        train_y.append(np.concatenate(ys_tr))
        test_x.append(np.vstack(xs_te))
        test_y.append(np.concatenate(ys_te))
    return SyntheticDataset(
        plan=plan,
        class_means=means,
        train_x=tuple(train_x),
        train_y=tuple(train_y),
        test_x=tuple(test_x),
        test_y=tuple(test_y),
    )
