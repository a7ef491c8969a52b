"""Change detection for path-repeating robots using LiDAR virtual cameras."""

from laserchange.baseline import (
    BaselineResult,
    geometric_3d_baseline,
    pixel_diff_baseline,
    point_flags_to_mask,
)
from laserchange.config import (
    CameraConfig,
    ConfigError,
    CorridorConfig,
    DetectionConfig,
    PipelineConfig,
    PromptingConfig,
    SegmenterConfig,
    apply_overrides,
    load_config,
    parse_config,
)
from laserchange.detect import (
    ChangeCandidate,
    Corridor,
    ObstacleEntry,
    ObstacleQueue,
    attach_points,
    changed_points,
    classify_changes,
    corridor_filter,
    mask_iou,
    verify_3d,
)
from laserchange.geom import (
    LidarPoint,
    Pose,
    PoseError,
    PointCloud,
    concatenate_clouds,
    read_ply,
    read_pose_file,
    write_ply,
    write_pose_file,
)
from laserchange.metrics import (
    FrameScore,
    MethodSummary,
    format_report,
    pixel_metrics,
    report_to_json,
    summarize_method,
)
from laserchange.pipeline import (
    BENCH_METHODS,
    FramePipeline,
    FrameResult,
    PipelineError,
    build_segmenter,
    run_bench,
    run_detect,
    run_eval,
    run_render,
    run_simulate,
)
from laserchange.prompting import (
    Component3D,
    DifferenceMap,
    NeighborIndex,
    Prompt,
    components_to_prompts,
    connected_components,
    difference_map,
    nn_change_flags,
    top_k_maxima,
)
from laserchange.render import (
    CameraIntrinsics,
    HsvImage,
    RenderedView,
    back_project,
    colorize,
    interpolate_gaps,
    intrinsics_from_fov,
    project,
    render_equirect,
    render_view,
)
from laserchange.segment import (
    BackendUnavailableError,
    BinaryMask,
    BridgeSegmenter,
    MalformedResponseError,
    MaskSet,
    ReferenceSegmenter,
    SegmentationError,
    Segmenter,
    decode_rle,
    encode_rle,
)
from laserchange.sim import (
    Benchmark,
    Box,
    ConeFrustum,
    Cylinder,
    Ground,
    Scene,
    SensorModel,
    build_submap,
    load_benchmark,
    make_benchmark,
    save_benchmark,
    simulate_scan,
    standard_benchmark,
    standard_scene,
)

__all__ = [
    "BENCH_METHODS",
    "BackendUnavailableError",
    "BaselineResult",
    "Benchmark",
    "BinaryMask",
    "Box",
    "BridgeSegmenter",
    "CameraConfig",
    "CameraIntrinsics",
    "ChangeCandidate",
    "Component3D",
    "ConeFrustum",
    "ConfigError",
    "Corridor",
    "CorridorConfig",
    "Cylinder",
    "DetectionConfig",
    "DifferenceMap",
    "FramePipeline",
    "FrameResult",
    "FrameScore",
    "Ground",
    "HsvImage",
    "LidarPoint",
    "MalformedResponseError",
    "MaskSet",
    "MethodSummary",
    "NeighborIndex",
    "ObstacleEntry",
    "ObstacleQueue",
    "PipelineConfig",
    "PipelineError",
    "PointCloud",
    "Pose",
    "PoseError",
    "Prompt",
    "PromptingConfig",
    "ReferenceSegmenter",
    "RenderedView",
    "Scene",
    "SegmentationError",
    "Segmenter",
    "SegmenterConfig",
    "SensorModel",
    "apply_overrides",
    "attach_points",
    "back_project",
    "build_segmenter",
    "build_submap",
    "changed_points",
    "classify_changes",
    "colorize",
    "components_to_prompts",
    "concatenate_clouds",
    "connected_components",
    "corridor_filter",
    "decode_rle",
    "difference_map",
    "encode_rle",
    "format_report",
    "geometric_3d_baseline",
    "interpolate_gaps",
    "intrinsics_from_fov",
    "load_benchmark",
    "load_config",
    "make_benchmark",
    "mask_iou",
    "nn_change_flags",
    "parse_config",
    "pixel_diff_baseline",
    "pixel_metrics",
    "point_flags_to_mask",
    "project",
    "read_ply",
    "read_pose_file",
    "render_equirect",
    "render_view",
    "report_to_json",
    "run_bench",
    "run_detect",
    "run_eval",
    "run_render",
    "run_simulate",
    "save_benchmark",
    "simulate_scan",
    "standard_benchmark",
    "standard_scene",
    "summarize_method",
    "top_k_maxima",
    "verify_3d",
    "write_ply",
    "write_pose_file",
]

__version__ = "0.1.0"
