"""End-to-end toy class-incremental training against a fixed ETF classifier.

The model is a small fully connected backbone f producing an intermediate
feature h, followed by a two-layer MLP projection g producing mu, which is
l2-normalized before the loss. The base session trains f and g jointly; each
incremental session freezes f, rebuilds a memory of mean intermediate
features for every previously seen class, and finetunes g on the session's
shots mixed with the replayed memory, the sum of both loss terms divided by
|D_t| + |M_t|. Prediction is the inner-product argmax over the prototypes of
the whole label space. A learnable-classifier arm replaces the fixed ETF for
the ablation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .data import SyntheticDataset
from .errors import (
    DivergenceError,
    EmptyClassError,
    FrozenViolationError,
    VanishingNormError,
)
from .etf_geometry import EtfPrototypes
from .losses import NORM_EPS, CrossEntropy, DotRegression, LossKind
from .nc_metrics import TEST_SPLIT, TRAIN_SPLIT, FeatureDump, MetricsReport, report
from .network import SgdMomentum, TwoLayerParams, cosine_lr, forward_two_layer, backward_two_layer, init_two_layer
from .seeding import spawn_rng

ABLATION_ARMS = ("learnable_ce", "etf_ce", "etf_dr")


@dataclass(frozen=True)
class ModelDims:
    input_dim: int
    hidden: int = 64
    feature_mid: int = 32
    hidden_g: int = 64
    feature_dim: int = 16


@dataclass(frozen=True)
class TrainConfig:
    epochs_base: int = 200
    iters_incremental: int = 150
    batch_base: int = 32
    batch_incremental: int = 10
    lr_base: float = 0.3
    lr_incremental: float = 0.02
    momentum: float = 0.9
    loss: LossKind = DotRegression()
    classifier_mode: str = "etf"
    seed: int = 0
    ce_scale: float = 16.0
    normalize_ce_features: bool = True
    freeze_old_prototypes: bool = False
    # expanding-classifier baseline: the learnable arm's training logits only
    # cover classes encountered so far (the fixed ETF always covers all)
    mask_unseen_classes: bool = True

    def __post_init__(self):
        if self.epochs_base < 0 or self.iters_incremental < 0:
            raise ValueError("epoch/iteration counts must be nonnegative")
        if self.batch_base < 1 or self.batch_incremental < 1:
            raise ValueError("batch sizes must be positive")
        if self.lr_base < 0 or self.lr_incremental < 0:
            raise ValueError("learning rates must be nonnegative")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.classifier_mode not in ("etf", "learnable"):
            raise ValueError(f"classifier_mode must be 'etf' or 'learnable', got {self.classifier_mode!r}")
        if self.classifier_mode == "learnable" and isinstance(self.loss, DotRegression):
            raise ValueError("dot-regression loss requires the fixed unit-norm ETF classifier")


@dataclass
class FscilModel:
    dims: ModelDims
    backbone: TwoLayerParams
    projection: TwoLayerParams
    protos: EtfPrototypes
    classifier_mode: str
    learnable_w: np.ndarray | None
    memory: dict[int, np.ndarray] = field(default_factory=dict)

    def classifier_matrix(self) -> np.ndarray:
        return self.protos.columns if self.classifier_mode == "etf" else self.learnable_w

    def parameter_arrays(self) -> dict[str, np.ndarray]:
        arrays = {}
        for prefix, block in (("f", self.backbone), ("g", self.projection)):
            for name, arr in block.arrays().items():
                arrays[f"{prefix}.{name}"] = arr
        if self.learnable_w is not None:
            arrays["classifier"] = self.learnable_w
        return arrays

    def copy(self) -> "FscilModel":
        return FscilModel(
            dims=self.dims,
            backbone=self.backbone.copy(),
            projection=self.projection.copy(),
            protos=self.protos,
            classifier_mode=self.classifier_mode,
            learnable_w=None if self.learnable_w is None else self.learnable_w.copy(),
            memory={c: h.copy() for c, h in self.memory.items()},
        )


def new_model(dims: ModelDims, protos: EtfPrototypes, classifier_mode: str, seed: int) -> FscilModel:
    if protos.dim != dims.feature_dim:
        raise ValueError(f"classifier dim {protos.dim} != feature dim {dims.feature_dim}")
    learnable_w = None
    if classifier_mode == "learnable":
        learnable_w = spawn_rng(seed, 2, 2).standard_normal(
            (dims.feature_dim, protos.num_classes)
        ) / math.sqrt(dims.feature_dim)
    return FscilModel(
        dims=dims,
        backbone=init_two_layer(spawn_rng(seed, 2, 0), dims.input_dim, dims.hidden, dims.feature_mid),
        projection=init_two_layer(spawn_rng(seed, 2, 1), dims.feature_mid, dims.hidden_g, dims.feature_dim),
        protos=protos,
        classifier_mode=classifier_mode,
        learnable_w=learnable_w,
    )


def _project_batch(model: FscilModel, h: np.ndarray):
    mu, cache_g = forward_two_layer(model.projection, h)
    norms = np.linalg.norm(mu, axis=1)
    if np.any(norms <= NORM_EPS):
        raise VanishingNormError("projection output has vanishing norm")
    mu_hat = mu / norms[:, None]
    return mu, mu_hat, norms, cache_g


def forward(model: FscilModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Single-sample forward pass: (intermediate feature h, normalized feature mu_hat)."""
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    h, _ = forward_two_layer(model.backbone, x)
    _, mu_hat, _, _ = _project_batch(model, h)
    return h[0], mu_hat[0]


def _forward_features(model: FscilModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    h, _ = forward_two_layer(model.backbone, x)
    _, mu_hat, _, _ = _project_batch(model, h)
    return h, mu_hat


def _losses_and_feature_grads(model: FscilModel, mu: np.ndarray, mu_hat: np.ndarray,
                              norms: np.ndarray, labels: np.ndarray, config: TrainConfig,
                              active_classes: np.ndarray | None = None):
    """Per-sample losses plus gradients w.r.t. mu (pre-normalization).

    Returns (losses, grad_mu, grad_classifier_sum); the classifier gradient is
    the unnormalized sum over the batch, None unless the classifier learns.
    With active_classes set (learnable mode), logits cover only those columns.
    """
    kind = config.loss
    n = len(labels)
    if isinstance(kind, DotRegression):
        w = model.protos.columns
        own = np.einsum("nd,dn->n", mu_hat, w[:, labels])
        losses = 0.5 * (own - 1.0) ** 2
        grad_feat = (own - 1.0)[:, None] * w[:, labels].T
        feat_normalized = True
        grad_w = None
    else:
        w_full = model.classifier_matrix()
        if active_classes is not None and model.classifier_mode == "learnable":
            w = w_full[:, active_classes]
            label_pos = np.searchsorted(active_classes, labels)
        else:
            w = w_full
            label_pos = labels
        feat_normalized = config.normalize_ce_features
        feats = mu_hat if feat_normalized else mu
        logits = kind.scale * (feats @ w)
        logits -= logits.max(axis=1, keepdims=True)
        log_z = np.log(np.exp(logits).sum(axis=1))
        losses = log_z - logits[np.arange(n), label_pos]
        probs = np.exp(logits - log_z[:, None])
        probs[np.arange(n), label_pos] -= 1.0
        grad_feat = kind.scale * (probs @ w.T)
        grad_w = None
        if model.classifier_mode == "learnable":
            grad_cols = kind.scale * (feats.T @ probs)
            if active_classes is not None:
                grad_w = np.zeros_like(w_full)
                grad_w[:, active_classes] = grad_cols
            else:
                grad_w = grad_cols
    if feat_normalized:
        radial = np.einsum("nd,nd->n", grad_feat, mu_hat)
        grad_mu = (grad_feat - radial[:, None] * mu_hat) / norms[:, None]
    else:
        grad_mu = grad_feat
    return losses, grad_mu, grad_w


def _apply_batch(model: FscilModel, config: TrainConfig, opt: SgdMomentum, lr: float,
                 raw_x: np.ndarray | None, raw_y: np.ndarray | None,
                 mem_h: np.ndarray | None, mem_y: np.ndarray | None,
                 denom: int, update_backbone: bool, frozen_classes: np.ndarray | None = None) -> float:
    """One SGD step on sum(losses)/denom over raw samples and replayed memory rows."""
    parts_h, parts_y, n_raw = [], [], 0
    cache_f = None
    if raw_x is not None and len(raw_x):
        h_raw, cache_f = forward_two_layer(model.backbone, raw_x)
        parts_h.append(h_raw)
        parts_y.append(raw_y)
        n_raw = len(raw_x)
    if mem_h is not None and len(mem_h):
        parts_h.append(mem_h)
        parts_y.append(mem_y)
    h = np.vstack(parts_h)
    labels = np.concatenate(parts_y).astype(np.intp)

    mu, mu_hat, norms, cache_g = _project_batch(model, h)
    losses, grad_mu, grad_w = _losses_and_feature_grads(model, mu, mu_hat, norms, labels, config)
    total = float(losses.sum() / denom)
    if not np.isfinite(total):
        raise DivergenceError(f"batch loss became {total}")

    grads_g, grad_h = backward_two_layer(model.projection, cache_g, grad_mu / denom)
    grad_list = [grads_g.w1, grads_g.b1, grads_g.w2, grads_g.b2]
    if update_backbone:
        grads_f, _ = backward_two_layer(model.backbone, cache_f, grad_h[:n_raw])
        grad_list = [grads_f.w1, grads_f.b1, grads_f.w2, grads_f.b2] + grad_list
    if model.classifier_mode == "learnable":
        grad_w = grad_w / denom
        if frozen_classes is not None and len(frozen_classes):
            grad_w[:, frozen_classes] = 0.0
        grad_list.append(grad_w)
    opt.step(grad_list, lr)
    return total


def _optimizer_params(model: FscilModel, include_backbone: bool) -> list[np.ndarray]:
    params = []
    if include_backbone:
        params += [model.backbone.w1, model.backbone.b1, model.backbone.w2, model.backbone.b2]
    params += [model.projection.w1, model.projection.b1, model.projection.w2, model.projection.b2]
    if model.classifier_mode == "learnable":
        params.append(model.learnable_w)
    return params


def train_base(model: FscilModel, dataset: SyntheticDataset, config: TrainConfig) -> list[float]:
    """Joint mini-batch SGD on f and g over the base session; returns the epoch loss curve."""
    x, y = dataset.train_session(0)
    n = len(y)
    batches = max(1, math.ceil(n / config.batch_base))
    total_steps = max(1, config.epochs_base * batches)
    opt = SgdMomentum(_optimizer_params(model, include_backbone=True), config.momentum)
    shuffle_rng = spawn_rng(config.seed, 2, 3)
    curve: list[float] = []
    step = 0
    for _ in range(config.epochs_base):
        perm = shuffle_rng.permutation(n)
        epoch_losses = []
        for b in range(batches):
            idx = perm[b * config.batch_base : (b + 1) * config.batch_base]
            if not len(idx):
                continue
            loss = _apply_batch(
                model, config, opt, cosine_lr(config.lr_base, step, total_steps),
                x[idx], y[idx], None, None, denom=len(idx), update_backbone=True,
            )
            epoch_losses.append(loss)
            step += 1
        curve.append(float(np.mean(epoch_losses)))
    return curve


def build_memory(model: FscilModel, dataset: SyntheticDataset, session_t: int) -> dict[int, np.ndarray]:
    """Mean intermediate feature of every class seen before session_t (frozen f)."""
    if session_t < 1:
        raise ValueError("memory is only defined for incremental sessions (t >= 1)")
    plan = dataset.plan
    memory: dict[int, np.ndarray] = {}
    for s in range(session_t):
        x, y = dataset.train_session(s)
        h, _ = forward_two_layer(model.backbone, x)
        for c in plan.session_classes(s):
            rows = h[y == c]
            if not len(rows):
                raise EmptyClassError(f"class {c} has no train samples")
            memory[c] = rows.mean(axis=0)
    model.memory = memory
    return memory


def train_incremental(model: FscilModel, dataset: SyntheticDataset, session_t: int,
                      config: TrainConfig) -> list[float]:
    """Finetune g only on session shots plus replayed memory; f must stay frozen."""
    if session_t < 1:
        raise ValueError("train_incremental needs t >= 1")
    expected = set(dataset.plan.classes_through(session_t - 1))
    if set(model.memory) != expected:
        raise ValueError(f"memory must cover exactly the classes before session {session_t}")
    x, y = dataset.train_session(session_t)
    mem_classes = np.array(sorted(model.memory), dtype=np.intp)
    mem_h = np.vstack([model.memory[c] for c in mem_classes])
    frozen = None
    if config.classifier_mode == "learnable" and config.freeze_old_prototypes:
        frozen = mem_classes

    backbone_before = model.backbone.tobytes()
    opt = SgdMomentum(_optimizer_params(model, include_backbone=False), config.momentum)
    sample_rng = spawn_rng(config.seed, 2, 4, session_t)
    iters = config.iters_incremental
    losses: list[float] = []
    for it in range(iters):
        if config.batch_incremental < len(y):
            idx = sample_rng.choice(len(y), size=config.batch_incremental, replace=False)
            bx, by = x[idx], y[idx]
        else:
            bx, by = x, y
        loss = _apply_batch(
            model, config, opt, cosine_lr(config.lr_incremental, it, max(1, iters)),
            bx, by, mem_h, mem_classes, denom=len(by) + len(mem_classes),
            update_backbone=False, frozen_classes=frozen,
        )
        losses.append(loss)
    if model.backbone.tobytes() != backbone_before:
        raise FrozenViolationError(f"backbone changed during incremental session {session_t}")
    return losses


def predict(model: FscilModel, x: np.ndarray) -> int:
    """Inner-product argmax over the prototypes of the whole label space.

    Ties resolve to the lowest class index (argmax returns the first maximum).
    """
    _, mu_hat = forward(model, x)
    return int(np.argmax(model.classifier_matrix().T @ mu_hat))


def predict_batch(model: FscilModel, x: np.ndarray) -> np.ndarray:
    _, mu_hat = _forward_features(model, x)
    return np.argmax(mu_hat @ model.classifier_matrix(), axis=1)


@dataclass(frozen=True)
class SessionRow:
    session: int
    acc_all: float
    acc_base: float
    acc_novel: float
    loss_final: float


def evaluate(model: FscilModel, dataset: SyntheticDataset, session_t: int, loss_final: float) -> SessionRow:
    x, y = dataset.test_pool_through(session_t)
    pred = predict_batch(model, x)
    hit = pred == y
    base_mask = y < dataset.plan.base_classes
    novel = np.isin(y, list(dataset.plan.session_classes(session_t)))
    return SessionRow(
        session=session_t,
        acc_all=float(hit.mean()),
        acc_base=float(hit[base_mask].mean()),
        acc_novel=float(hit[novel].mean()),
        loss_final=loss_final,
    )


def collect_features(model: FscilModel, dataset: SyntheticDataset, through_t: int,
                     use_intermediate: bool = False) -> FeatureDump:
    """Features of all train/test samples from sessions <= through_t at the current model."""
    vectors, labels, sessions, splits = [], [], [], []
    for s in range(through_t + 1):
        for split_code, (x, y) in (
            (TRAIN_SPLIT, dataset.train_session(s)),
            (TEST_SPLIT, (dataset.test_x[s], dataset.test_y[s])),
        ):
            h, mu_hat = _forward_features(model, x)
            vectors.append(h if use_intermediate else mu_hat)
            labels.append(y)
            sessions.append(np.full(len(y), s, dtype=np.int64))
            splits.append(np.full(len(y), split_code, dtype=np.uint8))
    return FeatureDump(
        vectors=np.vstack(vectors),
        labels=np.concatenate(labels).astype(np.int64),
        sessions=np.concatenate(sessions),
        splits=np.concatenate(splits),
    )


@dataclass
class RunResult:
    arm: str
    rows: list[SessionRow]
    session_metrics: list[dict[str, MetricsReport]]
    final: float
    average: float
    pd: float
    dataset_checksum: str
    checkpoints: list[dict[str, np.ndarray]]
    dumps: list[FeatureDump]


def _session_metrics(model: FscilModel, dump: FeatureDump, session_t: int) -> dict[str, MetricsReport]:
    w = model.classifier_matrix()
    return {
        "accumulate_test": report(dump, w, "accumulate", "test", session_t),
        "base_test": report(dump, w, "base-only", "test", session_t),
    }


def run_fscil(dataset: SyntheticDataset, protos: EtfPrototypes, dims: ModelDims,
              config: TrainConfig, arm: str | None = None, keep_artifacts: bool = True) -> RunResult:
    """Train through all sessions and report accuracies plus collapse diagnostics."""
    model = new_model(dims, protos, config.classifier_mode, config.seed)
    rows: list[SessionRow] = []
    metrics: list[dict[str, MetricsReport]] = []
    checkpoints: list[dict[str, np.ndarray]] = []
    dumps: list[FeatureDump] = []

    curve = train_base(model, dataset, config)
    rows.append(evaluate(model, dataset, 0, curve[-1] if curve else float("nan")))
    dump = collect_features(model, dataset, 0)
    metrics.append(_session_metrics(model, dump, 0))
    if keep_artifacts:
        checkpoints.append({k: v.copy() for k, v in model.parameter_arrays().items()})
        dumps.append(dump)

    for t in range(1, dataset.plan.num_sessions):
        build_memory(model, dataset, t)
        losses = train_incremental(model, dataset, t, config)
        rows.append(evaluate(model, dataset, t, losses[-1] if losses else float("nan")))
        dump = collect_features(model, dataset, t)
        metrics.append(_session_metrics(model, dump, t))
        if keep_artifacts:
            checkpoints.append({k: v.copy() for k, v in model.parameter_arrays().items()})
            dumps.append(dump)

    accs = [r.acc_all for r in rows]
    return RunResult(
        arm=arm or f"{config.classifier_mode}_{'dr' if isinstance(config.loss, DotRegression) else 'ce'}",
        rows=rows,
        session_metrics=metrics,
        final=accs[-1],
        average=float(np.mean(accs)),
        pd=accs[0] - accs[-1],
        dataset_checksum=dataset.checksum(),
        checkpoints=checkpoints,
        dumps=dumps,
    )


def arm_config(base_config: TrainConfig, arm: str) -> TrainConfig:
    """Shared-seed configuration for one ablation arm."""
    ce_scale = base_config.loss.scale if isinstance(base_config.loss, CrossEntropy) else 16.0
    if arm == "learnable_ce":
        return replace(base_config, classifier_mode="learnable", loss=CrossEntropy(scale=ce_scale))
    if arm == "etf_ce":
        return replace(base_config, classifier_mode="etf", loss=CrossEntropy(scale=ce_scale))
    if arm == "etf_dr":
        return replace(base_config, classifier_mode="etf", loss=DotRegression())
    raise ValueError(f"unknown ablation arm {arm!r}")


def run_ablation(dataset: SyntheticDataset, base_config: TrainConfig, protos: EtfPrototypes,
                 dims: ModelDims, keep_artifacts: bool = False) -> list[RunResult]:
    """Learnable+CE, ETF+CE and ETF+DR end-to-end on the same dataset and seed."""
    return [
        run_fscil(dataset, protos, dims, arm_config(base_config, arm), arm=arm,
                  keep_artifacts=keep_artifacts)
        for arm in ABLATION_ARMS
    ]
