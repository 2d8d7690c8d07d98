"""v3 severity extrapolation from v2 assessments."""

from .evaluate import (
    BackfillResult,
    EvalReport,
    backfill_v3,
    evaluate,
    ground_truth_transition,
    split_dataset,
    transition_csv,
)
from .features import (
    FEATURE_ORDER,
    CweTable,
    EncodingError,
    Sample,
    encode_features,
    ground_truth_samples,
)
from .network import (
    AdamConfig,
    ModelKind,
    RegressionModel,
    predict_score,
    train_dnn,
    train_linear,
)
from .pca import PcaResult, RankError, pca_project

__all__ = [
    "AdamConfig",
    "BackfillResult",
    "CweTable",
    "EncodingError",
    "EvalReport",
    "FEATURE_ORDER",
    "ModelKind",
    "PcaResult",
    "RankError",
    "RegressionModel",
    "Sample",
    "backfill_v3",
    "encode_features",
    "evaluate",
    "ground_truth_samples",
    "ground_truth_transition",
    "pca_project",
    "predict_score",
    "split_dataset",
    "train_dnn",
    "train_linear",
    "transition_csv",
]
