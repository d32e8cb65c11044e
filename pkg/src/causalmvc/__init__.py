"""Causal multi-view clustering on partially aligned data."""

from .autoencoder import (
    ClusterAssignment,
    PretrainConfig,
    PretrainResult,
    ViewAutoencoder,
    ae_forward,
    kmeans,
    pretrain,
    reconstruction_loss,
    variant_features,
)
from .causal import (
    AnnealSchedule,
    CausalModel,
    GaussianParams,
    decode_invariant,
    decode_variant,
    elbo_loss,
    encode_invariant,
    kl_to_standard_normal,
    mc_mean_embed,
    post_intervention_infer,
    predict_clusters,
    sample_gaussian,
)
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, TrainConfig, load_config
from .contrastive import (
    DegenerateInputError,
    contrastive_loss,
    similarity_matrix,
)
from .data import (
    AlignmentMap,
    DataFormatError,
    MultiViewDataset,
    apply_alignment,
    inject_misalignment,
    load_dataset,
    make_synthetic,
    minmax_normalize,
    save_dataset,
)
from .metrics import MetricReport, acc, hungarian_min_cost, metric_report, nmi, purity
from .model import ModelState
from .nn import (
    AdamState,
    DenseLayer,
    Mlp,
    NumericsError,
    ShapeError,
    adam_step,
    grad_check,
    mlp_backward,
    mlp_forward,
    softmax_rows,
)
from .pipeline import (
    TrainHistory,
    ablate,
    evaluate,
    export_embeddings,
    infer,
    ratio_sweep,
    train,
)

__version__ = "0.1.0"
