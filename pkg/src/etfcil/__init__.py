"""Fixed simplex-ETF classifiers for few-shot class-incremental learning.

Pre-assigns the classifier of the whole label space as a simplex
equiangular tight frame, trains features onto it with a pull-only
dot-regression loss (or cross-entropy), certifies the layer-peeled
collapse optimum numerically, and measures neural-collapse diagnostics
over feature dumps.
"""

from .data import SessionPlan, SyntheticDataset, generate_dataset
from .errors import (
    DegenerateBetweenError,
    DegenerateMeanError,
    DegenerateRotationError,
    DimensionTooSmallError,
    DivergenceError,
    EmptyClassError,
    FrozenViolationError,
    NotNormalizedError,
    ShapeMismatchError,
    VanishingNormError,
)
from .etf_geometry import (
    EtfPrototypes,
    GeometryCertificate,
    make_etf,
    slice_prototypes,
    verify_etf,
)
from .fscil_engine import (
    FscilModel,
    ModelDims,
    RunResult,
    TrainConfig,
    build_memory,
    forward,
    new_model,
    predict,
    run_ablation,
    run_fscil,
    train_base,
    train_incremental,
)
from .layer_peeled import (
    FeatureBank,
    LayerPeeledProblem,
    OptimalityReport,
    SessionSpec,
    check_optimality,
    session_spec,
    softmax_probs,
    solve_incremental,
)
from .losses import (
    CrossEntropy,
    DotRegression,
    LossEval,
    LossKind,
    ce_loss_fixed,
    dr_loss,
    normalize_backward,
    parse_loss_kind,
)
from .nc_metrics import (
    FeatureDump,
    MetricsReport,
    alignment_cosines,
    class_means,
    nc4_agreement,
    trace_ratio,
)

__version__ = "0.1.0"
