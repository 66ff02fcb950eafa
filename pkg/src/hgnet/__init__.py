"""Stacked-hourglass keypoint estimation on a hand-rolled autodiff core.

The package is self-contained: a tape-based reverse-mode engine over
eight array primitives, the recursive hourglass model built on top of
it, heatmap target rendering and decoding, supervised training with a
loss on every stack, and PCK evaluation tooling. The inner array
kernels exist twice, as a compiled extension and as a pure NumPy
fallback; `hgnet.kernels.BACKEND` names the one in use.
"""

from .annotations import (
    Annotation,
    AnnotationError,
    AnnotationSet,
    load_annotations,
    read_image,
    save_annotations,
    serialize_annotations,
    write_image,
)
from .checkpoint import CheckpointError, LoadedCheckpoint, load_checkpoint, save_checkpoint
from .evaluation import (
    DatasetPredictions,
    EvalReport,
    PCKResult,
    PRCurve,
    VisibilitySplit,
    evaluate_predictions,
    pck,
    pck_curve,
    predict_dataset,
    predict_with_flip,
    presence_pr,
    visibility_split_eval,
)
from .gradcheck import CheckReport, finite_difference_check, standard_checks
from .heatmaps import (
    DecodedPeak,
    HeatmapSet,
    decode,
    decode_set,
    render_targets,
    to_continuous,
)
from .model import (
    ModelConfig,
    StackedModelParams,
    count_parameters,
    hourglass_forward,
    init_params,
    named_parameters,
    parameter_count,
    residual_forward,
    stacked_forward,
    stem_forward,
)
from .optim import RMSprop, rmsprop_step
from .synth import (
    FLIP_PAIRS,
    JOINT_NAMES,
    SkeletonSpec,
    SynthDataset,
    default_skeleton,
    export,
    generate,
    generate_sample,
    load_dataset,
)
from .tensor import (
    BatchNormState,
    Graph,
    Tensor,
    add,
    backward,
    batchnorm,
    conv2d,
    maxpool2x2,
    mse_loss,
    relu,
    sum_all,
    upsample_nearest2x,
)
from .training import (
    TrainCallbacks,
    TrainConfig,
    TrainLog,
    TrainState,
    build_batch,
    multi_stack_loss,
    train,
    validation_accuracy,
)
from .transforms import (
    AugmentConfig,
    apply_affine,
    augment,
    build_transform,
    crop_and_resize,
    flip_permutation,
    invert_affine,
    warp_affine,
)

__version__ = "0.1.0"

__all__ = [
    "Annotation",
    "AnnotationError",
    "AnnotationSet",
    "AugmentConfig",
    "BatchNormState",
    "CheckReport",
    "CheckpointError",
    "DatasetPredictions",
    "DecodedPeak",
    "EvalReport",
    "FLIP_PAIRS",
    "Graph",
    "HeatmapSet",
    "JOINT_NAMES",
    "LoadedCheckpoint",
    "ModelConfig",
    "PCKResult",
    "PRCurve",
    "RMSprop",
    "SkeletonSpec",
    "StackedModelParams",
    "SynthDataset",
    "Tensor",
    "TrainCallbacks",
    "TrainConfig",
    "TrainLog",
    "TrainState",
    "VisibilitySplit",
    "add",
    "apply_affine",
    "augment",
    "backward",
    "batchnorm",
    "build_batch",
    "build_transform",
    "conv2d",
    "count_parameters",
    "crop_and_resize",
    "decode",
    "decode_set",
    "default_skeleton",
    "evaluate_predictions",
    "export",
    "finite_difference_check",
    "flip_permutation",
    "generate",
    "generate_sample",
    "hourglass_forward",
    "init_params",
    "invert_affine",
    "load_annotations",
    "load_checkpoint",
    "load_dataset",
    "maxpool2x2",
    "mse_loss",
    "multi_stack_loss",
    "named_parameters",
    "parameter_count",
    "pck",
    "pck_curve",
    "predict_dataset",
    "predict_with_flip",
    "presence_pr",
    "read_image",
    "relu",
    "render_targets",
    "residual_forward",
    "rmsprop_step",
    "save_annotations",
    "save_checkpoint",
    "serialize_annotations",
    "stacked_forward",
    "standard_checks",
    "stem_forward",
    "sum_all",
    "to_continuous",
    "train",
    "upsample_nearest2x",
    "validation_accuracy",
    "visibility_split_eval",
    "warp_affine",
    "write_image",
]
