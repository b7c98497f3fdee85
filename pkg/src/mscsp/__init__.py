"""Multispectral center/scale pedestrian detection toolkit.

A numpy library for anchor-free pedestrian detection over aligned
visual-optical / thermal-infrared image pairs: the center/scale/offset
target codec with greedy-NMS decoding, the focal + smooth-L1 detection
objective with analytic gradients, forward-only simulators for seven
VIS/IR fusion wirings, an alignment-preserving multispectral augmentation
pipeline, and the log-average miss rate vs. FPPI evaluation protocol.
"""

from .augment import (
    AugmentConfig,
    EraseConfig,
    ImagePair,
    MaskConfig,
    NoiseConfig,
    apply_pipeline,
    geometric_augment,
    inject_noise,
    random_erasing,
    random_masking,
)
from .codec import (
    CodecConfig,
    Detection,
    ImageSize,
    TargetMaps,
    decode_detections,
    encode_targets,
    nms,
)
from .evaluation import (
    EvalReport,
    FrameResult,
    MrFppiCurve,
    balanced_sample,
    evaluate,
    log_average_mr,
    match_frame,
    mr_fppi_curve,
    render_report,
)
from .fusion import (
    BackboneSpec,
    FusionGraph,
    Topology,
    build_fusion_graph,
    clone_input_conv,
    conv2d,
    forward,
    graph_report,
    l2_normalize,
    nin_fuse,
    param_count,
    upsample,
)
from .geometry import (
    ALL_SUBSET,
    Annotation,
    BBox,
    GtClass,
    Label,
    Occlusion,
    REASONABLE_SUBSET,
    SubsetSpec,
    classify,
    ioa,
    iou,
    union_box,
    width_from_height,
)
from .losses import LossConfig, LossResult, center_focal_loss, smooth_l1, total_loss

__version__ = "0.1.0"
