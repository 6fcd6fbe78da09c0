"""Dyadic-interaction transformer toolkit.

A from-scratch float64 autodiff engine (``tensor``), transformer blocks
(``blocks``), the model family (``model``), dataset plumbing and synthesis
(``data``), the training loop (``train``), metrics (``metrics``), and a
command-line front end (``cli``).
"""

from .tensor import (
    ParamStore,
    RngStream,
    Tensor,
    backward,
    grad_check,
    no_grad,
)
from .blocks import (
    AttentionWeights,
    CaLayerWeights,
    FfnWeights,
    LayerNormParams,
    SaLayerWeights,
    ca_encoder_forward,
    encoder_trace,
    multi_head_attention,
    position_wise_ffn,
    sa_encoder_forward,
    scaled_dot_attention,
    sinusoidal_positional_encoding,
    sublayer,
)
from .model import (
    DyadInput,
    EmbeddingWeights,
    HeadWeights,
    ModelConfig,
    ModelVariant,
    count_parameters,
    cross_modal_stage,
    cross_subject_stage,
    embed_stream,
    forward,
    init_params,
    load_checkpoint,
    parameter_shapes,
    regression_head,
    save_checkpoint,
)
from .data import (
    SPLITS,
    TASKS,
    SequenceSample,
    SessionRecord,
    ParticipantTrack,
    SyntheticSpec,
    dataset_sequences,
    generate_synthetic,
    least_squares_decode,
    load_manifest,
    read_feature_file,
    sample_sequences,
    write_feature_file,
)
from .train import (
    TrainConfig,
    TrainState,
    evaluate_loss,
    predict_records,
    schedule_and_stop,
    sequence_loss,
    sgd_step,
    train,
)
from .metrics import (
    TRAITS,
    PredictionRecord,
    UndefinedCorrelationError,
    aggregate_participant,
    mse_part,
    mse_seq,
    pearson_part,
    render_report,
    report_table,
)

__version__ = "0.1.0"

__all__ = [
    "Tensor", "RngStream", "ParamStore", "backward", "grad_check", "no_grad",
    "AttentionWeights", "FfnWeights", "LayerNormParams", "SaLayerWeights",
    "CaLayerWeights", "scaled_dot_attention", "multi_head_attention",
    "position_wise_ffn", "sublayer", "sa_encoder_forward", "ca_encoder_forward",
    "sinusoidal_positional_encoding", "encoder_trace",
    "ModelVariant", "ModelConfig", "DyadInput", "EmbeddingWeights", "HeadWeights",
    "parameter_shapes", "init_params", "count_parameters", "embed_stream",
    "cross_modal_stage", "cross_subject_stage", "regression_head", "forward",
    "save_checkpoint", "load_checkpoint",
    "TASKS", "SPLITS", "SessionRecord", "ParticipantTrack", "SequenceSample",
    "SyntheticSpec", "generate_synthetic", "load_manifest", "sample_sequences",
    "dataset_sequences", "read_feature_file", "write_feature_file",
    "least_squares_decode",
    "TrainConfig", "TrainState", "sequence_loss", "sgd_step", "schedule_and_stop",
    "evaluate_loss", "predict_records", "train",
    "TRAITS", "PredictionRecord", "UndefinedCorrelationError", "mse_seq",
    "aggregate_participant", "mse_part", "pearson_part", "report_table",
    "render_report",
]
