"""Context-attention video regression with a relational loss."""

from ._relaff import (
    ConfigError,
    ContractError,
    DegenerateVectorError,
    DimensionError,
    Error,
    IoError,
    Model,
    NumericError,
    RangeError,
    UndefinedMetricError,
    Video,
    ablate,
    alignment_score,
    ccc,
    ccc_loss,
    clip_frame_indices,
    concordance,
    context_starts,
    contrastive_loss,
    cosine_similarity_matrix,
    cross_validate,
    default_config,
    generate_corpus,
    gradcheck,
    lr_schedule,
    metrics_report,
    pearson,
    read_corpus,
    relational_loss,
    relational_loss_from_features,
    rmse_loss,
    scale_label,
    total_loss,
    train_model,
    validate_config,
    write_corpus,
)

__version__ = "0.1.0"
