"""Supervised anomaly detection for cellular-network KPI telemetry.

A from-scratch toolkit built on numpy: a two-branch multi-scale
convolutional LSTM with explicit gradients, binary cross-entropy + Adam
training, SMOTE rebalancing, EDA reports, and a checkpoint-based
weight-transfer (fine-tuning) workflow.
"""

from .data import (
    Dataset,
    DatasetSchema,
    EdaReport,
    NormStats,
    apply_norm,
    class_distribution,
    eda_report,
    emit_eda,
    fnv1a64,
    load_csv,
    normalize,
    pearson_correlation,
    smote,
    stratified_split,
)
from .errors import (
    CheckpointFormatError,
    CompatibilityError,
    ConfigError,
    DataError,
    DimensionError,
    SchemaError,
    UsageError,
    ValidationError,
)
from .metrics import ConfusionMatrix, EvalReport, confusion, format_report, report
from .model import ModelParams, Prediction, build_model, backward, forward, param_count, predict, predict_proba
from .optim import OptimizerState, adam_step, bce_loss
from .training import (
    Checkpoint,
    EpochLog,
    TrainConfig,
    evaluate,
    finetune,
    finetune_defaults,
    load_checkpoint,
    save_checkpoint,
    train_scratch,
    validation_split,
    write_curves_svg,
    write_epoch_log,
)

__version__ = "0.1.0"
