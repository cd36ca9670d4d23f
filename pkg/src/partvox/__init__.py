"""partvox: part-restricted attention over sparse voxel grids.

Annotation pipeline (mesh -> part-labeled voxels), blocked part attention
with a masked dense reference, image-token projection masks, a residual
block stack, and a benchmark/verification CLI.
"""

from .annotate import (
    AgglomerativePartClusterer,
    AnnotationResult,
    FilterReport,
    PartAnnotator,
    annotate_mesh,
    average_linkage_labels,
    cluster_parts,
    filter_sample,
    geometric_features,
    load_point_features,
    neighborhood_inconsistency,
    squared_ratio_sum,
    voxelize,
)
from .attention import (
    AttentionInstance,
    BenchResult,
    FlopReport,
    bench_attention,
    count_flops,
    dense_attention,
    full_attention,
    make_bench_instance,
    part_cross_attention,
    part_self_attention,
)
from .blockstack import (
    CoarseMap,
    StackConfig,
    coarse_full_block,
    downsample,
    part_block,
    run_stack,
    upsample,
)
from .mesh import (
    PointSampleSet,
    TriangleMesh,
    load_obj,
    normalize_mesh,
    sample_surface,
    save_obj,
    triangle_areas,
)
from .projection import (
    CameraParams,
    ImageTokenMask,
    build_token_mask,
    load_camera,
    project_voxel,
    read_camera,
    read_token_mask,
    save_camera,
    write_camera,
    write_token_mask,
)
from .verify import VerifyResult, max_relative_error, run_all
from .voxgrid import (
    PartLabeling,
    SparseVoxelGrid,
    UvoxError,
    load_uvox,
    read_uvox,
    save_uvox,
    validate,
    write_uvox,
)

__version__ = "0.1.0"

__all__ = [
    "AgglomerativePartClusterer",
    "AnnotationResult",
    "AttentionInstance",
    "BenchResult",
    "CameraParams",
    "CoarseMap",
    "FilterReport",
    "FlopReport",
    "ImageTokenMask",
    "PartAnnotator",
    "PartLabeling",
    "PointSampleSet",
    "SparseVoxelGrid",
    "StackConfig",
    "TriangleMesh",
    "UvoxError",
    "VerifyResult",
    "annotate_mesh",
    "average_linkage_labels",
    "bench_attention",
    "build_token_mask",
    "cluster_parts",
    "coarse_full_block",
    "count_flops",
    "dense_attention",
    "downsample",
    "filter_sample",
    "full_attention",
    "geometric_features",
    "load_camera",
    "load_obj",
    "load_point_features",
    "load_uvox",
    "make_bench_instance",
    "max_relative_error",
    "neighborhood_inconsistency",
    "normalize_mesh",
    "part_block",
    "part_cross_attention",
    "part_self_attention",
    "project_voxel",
    "read_camera",
    "read_token_mask",
    "read_uvox",
    "run_all",
    "run_stack",
    "sample_surface",
    "save_camera",
    "save_obj",
    "save_uvox",
    "squared_ratio_sum",
    "triangle_areas",
    "upsample",
    "validate",
    "voxelize",
    "write_camera",
    "write_token_mask",
    "write_uvox",
]
