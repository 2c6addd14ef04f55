"""Out-of-core pixel-classifier pipeline over memory-mapped feature stores."""

from .annotations import (
    DEFAULT_CLASS_NAMES,
    IGNORE_LABEL,
    ClassCatalog,
    SegmentationMask,
    SplitAssignment,
    read_mask,
    split_dataset,
    write_mask,
)
from .errors import (
    BoundsError,
    ConfigError,
    DataError,
    FormatError,
    HdganError,
    IoError,
    SchemaError,
    ShapeError,
)
from .feature_store import (
    BlockSpec,
    FeatureStoreManifest,
    ImageEntry,
    StoreHandle,
    create_store,
    open_store,
    validate_store,
)
from .inference import VoteRule, export_pairs, predict_image
from .metrics import ConfusionMatrix, MetricsReport, accumulate, classwise_accuracy, dice
from .mlp import (
    MlpArch,
    MlpCheckpoint,
    MlpParams,
    Mode,
    backward,
    cross_entropy,
    forward,
    grad_check,
    init_params,
    load_checkpoint,
    save_checkpoint,
    sgd_step,
)
from .resampler import ResampleMode, source_coord, upsample_block
from .sampler import SampleIndex, SamplingPlan, Strategy, batches, draw_samples
from .synthetic import build_synthetic_store
from .trainer import TrainConfig, TrainHistory, evaluate, train

__version__ = "0.1.0"
