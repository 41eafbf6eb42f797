"""shortcutforge: plant class-coded, visually imperceptible shortcuts in
labeled image datasets so that crawled copies are useless for model training,
and verify the protection with built-in probes and explanation-difference
metrics."""

from .codebook import AttributeCodebook
from .dataset_io import (
    DatasetManifest,
    ManifestRecord,
    ProtectionReport,
    load_image,
    parse_manifest,
    save_image,
    to_float,
    to_uint8,
    write_manifest,
    write_protected_dataset,
)
from .errors import (
    BudgetExceededError,
    CorruptImageError,
    ManifestError,
    MissingInputError,
    ShapeMismatchError,
    ShortcutForgeError,
    SpecError,
    UnsupportedFormatError,
)
from .perceptibility import BudgetCheck, PerceptibilityReport, check_budget, compare
from .probe import (
    EvalResult,
    GapReport,
    LinearProbe,
    TinyCNNClassifier,
    TrainConfig,
    evaluate,
    generalization_gap,
    load_checkpoint,
    save_checkpoint,
    train_cnn,
    train_linear_probe,
)
from .shapes import make_shapes, make_shapes_split
from .shortcuts import (
    ShortcutInjector,
    ShortcutSpec,
    apply_dust,
    apply_hue,
    apply_lens,
    apply_sensor,
    gen_sensor_pattern,
    protect_batch,
    protect_image,
)
from .xai import (
    ExplanationMap,
    grad_cam,
    integrated_gradients,
    saliency,
    save_heatmap,
    smooth_grad,
    xai_difference,
)

__version__ = "0.1.0"

__all__ = [
    "AttributeCodebook",
    "BudgetCheck",
    "BudgetExceededError",
    "CorruptImageError",
    "DatasetManifest",
    "EvalResult",
    "ExplanationMap",
    "GapReport",
    "LinearProbe",
    "ManifestError",
    "ManifestRecord",
    "MissingInputError",
    "PerceptibilityReport",
    "ProtectionReport",
    "ShapeMismatchError",
    "ShortcutForgeError",
    "ShortcutInjector",
    "ShortcutSpec",
    "SpecError",
    "TinyCNNClassifier",
    "TrainConfig",
    "UnsupportedFormatError",
    "apply_dust",
    "apply_hue",
    "apply_lens",
    "apply_sensor",
    "check_budget",
    "compare",
    "evaluate",
    "gen_sensor_pattern",
    "generalization_gap",
    "grad_cam",
    "integrated_gradients",
    "load_checkpoint",
    "load_image",
    "make_shapes",
    "make_shapes_split",
    "parse_manifest",
    "protect_batch",
    "protect_image",
    "saliency",
    "save_checkpoint",
    "save_heatmap",
    "save_image",
    "smooth_grad",
    "to_float",
    "to_uint8",
    "train_cnn",
    "train_linear_probe",
    "write_manifest",
    "write_protected_dataset",
    "xai_difference",
]
