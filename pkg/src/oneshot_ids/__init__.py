"""One-shot intrusion detection with twin-network similarity learning."""

from .dataset import (
    DatasetError,
    EncodedDataset,
    Encoder,
    ExperimentSplit,
    RawDataset,
    Schema,
    SchemaError,
    encode,
    fit_encoder,
    load_dataset,
    load_schema,
    make_split,
    prepare_experiment,
)
from .evaluator import (
    DEFAULT_VOTE_SWEEP,
    ConfusionMatrix,
    EvaluationError,
    MetricsReport,
    VoteConfig,
    classify_instance,
    evaluate,
    metrics,
    vote_sweep,
)
from .network import (
    LossConfig,
    SiameseModel,
    apply_update,
    batch_gradients,
    batch_loss,
    contrastive_loss,
    distance,
    embed,
    init_model,
    init_momentum_state,
    load_model,
    regularized_log_loss,
    save_model,
)
from .pairgen import (
    PairBatch,
    PairGenerationError,
    Similarity,
    generate_training_batch,
    pair_counts,
)
from .trainer import TrainingConfig, TrainingTrace, run_training

__version__ = "0.1.0"

__all__ = [
    "ConfusionMatrix",
    "DatasetError",
    "DEFAULT_VOTE_SWEEP",
    "EncodedDataset",
    "Encoder",
    "EvaluationError",
    "ExperimentSplit",
    "LossConfig",
    "MetricsReport",
    "PairBatch",
    "PairGenerationError",
    "RawDataset",
    "Schema",
    "SchemaError",
    "SiameseModel",
    "Similarity",
    "TrainingConfig",
    "TrainingTrace",
    "VoteConfig",
    "apply_update",
    "batch_gradients",
    "batch_loss",
    "classify_instance",
    "contrastive_loss",
    "distance",
    "embed",
    "encode",
    "evaluate",
    "fit_encoder",
    "generate_training_batch",
    "init_model",
    "init_momentum_state",
    "load_dataset",
    "load_model",
    "load_schema",
    "make_split",
    "metrics",
    "pair_counts",
    "prepare_experiment",
    "regularized_log_loss",
    "run_training",
    "save_model",
    "vote_sweep",
]
