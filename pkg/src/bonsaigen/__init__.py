"""bonsaigen: deterministic bonsai structure generation and rendering.

Pipeline: sample attraction points in the crown domain, grow a branch
skeleton toward them, size the branches, wrap them in a tube mesh, sample
the surface into a labelled point cloud, initialize isotropic Gaussian
splats, render multi-view color/depth images, and optionally fit the growth
weights against reference silhouette masks.
"""

__version__ = "0.1.0"

from .attractors import AttractorField, domain_contains, kill_pass, sample_attractors
from .errors import (
    BonsaiError,
    DegenerateDirectionError,
    EmptyForegroundError,
    EmptyMeshError,
    InvariantViolationError,
    NonPositiveValueError,
    OrderingViolationError,
    ParseError,
    SingularCovarianceError,
    TooFewPointsError,
    UnsizedSkeletonError,
    ValidationError,
)
from .fitting import FitConfig, FitResult, SilhouetteStats, fit, loss, stats_from_mask
from .gaussians import GaussianCloud, composite_ray, eval_gaussian, init_gaussians
from .growth import GrowthTrace, assign_attractors, child_direction, grow, weight
from .meshing import (
    SurfaceCloud,
    TubeMesh,
    build_mesh,
    compute_sizes,
    sample_surface,
)
from .model import (
    BranchNode,
    GrowthParams,
    Skeleton,
    SizingParams,
    Vec3,
    deserialize_skeleton,
    serialize_skeleton,
    validate_params,
)
from .render import (
    Camera,
    ColorImage,
    DepthImage,
    default_camera_rig,
    render_views,
    scene_bounds,
)

__all__ = [
    "__version__",
    "AttractorField",
    "BonsaiError",
    "BranchNode",
    "Camera",
    "ColorImage",
    "DegenerateDirectionError",
    "DepthImage",
    "EmptyForegroundError",
    "EmptyMeshError",
    "FitConfig",
    "FitResult",
    "GaussianCloud",
    "GrowthParams",
    "GrowthTrace",
    "InvariantViolationError",
    "NonPositiveValueError",
    "OrderingViolationError",
    "ParseError",
    "SilhouetteStats",
    "SingularCovarianceError",
    "Skeleton",
    "SizingParams",
    "SurfaceCloud",
    "TooFewPointsError",
    "TubeMesh",
    "UnsizedSkeletonError",
    "ValidationError",
    "Vec3",
    "assign_attractors",
    "build_mesh",
    "child_direction",
    "composite_ray",
    "compute_sizes",
    "default_camera_rig",
    "deserialize_skeleton",
    "domain_contains",
    "eval_gaussian",
    "fit",
    "grow",
    "init_gaussians",
    "kill_pass",
    "loss",
    "render_views",
    "sample_attractors",
    "sample_surface",
    "scene_bounds",
    "serialize_skeleton",
    "stats_from_mask",
    "validate_params",
    "weight",
]
