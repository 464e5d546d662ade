"""Interactive mask-guided superpixel explanations for image classifiers.

The pieces compose in pipeline order: decode an image (``imgcore``), pick a
region and split it into superpixels (``segmentation``), optionally rewrite
the region (``editor`` / ``inpaint``), probe any classifier behind the
``Predictor`` protocol and fit a local surrogate (``explainer``), then
measure how stable those explanations stay under noise (``robustness``).
``service`` and ``cli`` expose the same flow over HTTP and the shell.
"""

__version__ = "0.1.0"

from .editor import apply_edits, edit_spec_to_json, parse_edit_spec
from .errors import MaskwiseError
from .explainer import (
    ExplainConfig,
    Explanation,
    compare_predictions,
    explain,
    render_overlay,
    trinary_mask,
)
from .imgcore import (
    ImageTensor,
    RegionMask,
    TrinaryMask,
    decode_image,
    decode_mask,
    encode_png,
    rasterize_polygon,
)
from .inpaint import inpaint_biharmonic
from .predictor import (
    Predictor,
    ProbabilityVector,
    TrainConfig,
    load_predictor,
    parse_predictor_spec,
    predict_batch,
    save_predictor,
    train_builtin_mlp,
)
from .robustness import SweepConfig, add_gaussian_noise, mask_distance, run_sweep, summarize
from .segmentation import (
    SegmentationConfig,
    SuperpixelMap,
    auto_segment,
    segment,
    suggest_counts,
)

__all__ = [
    "ExplainConfig",
    "Explanation",
    "ImageTensor",
    "MaskwiseError",
    "Predictor",
    "ProbabilityVector",
    "RegionMask",
    "SegmentationConfig",
    "SuperpixelMap",
    "SweepConfig",
    "TrainConfig",
    "TrinaryMask",
    "__version__",
    "add_gaussian_noise",
    "apply_edits",
    "auto_segment",
    "compare_predictions",
    "decode_image",
    "decode_mask",
    "edit_spec_to_json",
    "encode_png",
    "explain",
    "inpaint_biharmonic",
    "load_predictor",
    "mask_distance",
    "parse_edit_spec",
    "parse_predictor_spec",
    "predict_batch",
    "rasterize_polygon",
    "render_overlay",
    "run_sweep",
    "save_predictor",
    "segment",
    "suggest_counts",
    "summarize",
    "train_builtin_mlp",
    "trinary_mask",
]
