"""signmotion: word-level 3D sign motion reconstruction, generation, evaluation."""

from .classifier import ClassifierConfig, SkeletonGraph, TrainedClassifier, accuracy, train_classifier
from .dataset import (
    ClipRecord,
    DatasetManifest,
    QCAnnotation,
    filter_by_min_samples,
    load_manifest,
    load_qc_sidecar,
    make_split,
    save_manifest,
    select_top_k_subset,
    trim_clip,
)
from .embeddings import EmbeddingService, ProviderConfig, SemanticEmbedding
from .errors import (
    ConfigError,
    DegenerateInputError,
    FormatError,
    InputError,
    InsufficientDataError,
    InvalidAnnotationError,
    InvalidArgumentError,
    SequenceLengthError,
    ShapeError,
    SignMotionError,
    StateError,
    TransportError,
)
from .metrics import EvalConfig, EvalReport, diversity, fid, full_report, multimodality
from .model import (
    CheckpointBundle,
    LatentDistribution,
    LatentSample,
    ModelConfig,
    SignCvae,
    cvae_loss,
    kl_loss,
    load_checkpoint,
    reconstruction_loss,
    reparameterize,
    save_checkpoint,
)
from .motion import (
    UPPER_BODY_52,
    JointLayout,
    Motion,
    convert_channels,
    fix_lower_body_rest,
    read_container,
    register_layout,
    resample,
    write_container,
)
from .rotations import axis_angle_to_matrix, matrix_to_axis_angle, matrix_to_sixd, sixd_to_matrix
from .training import TrainConfig, apply_mask, mask_ratio_schedule, train

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
