"""Select-and-combine fusion of multi-view depth maps."""

__version__ = "0.1.0"

from .baselines import ConsistencyConfig, concat_fuse, consistency_fuse, multiray_fuse
from .correspond import GroupingConfig, PointGroup, build_groups
from .estimators import ConcatFusion, ConsistencyFusion, MultiRayFusion, SelectAndCombine
from .evaluation import EvalReport, accuracy, cloud_to_cloud, completeness, evaluate, f1
from .geometry import PointSample, Ray, project, triangulate_rays, unproject
from .netlet import FusedCloud, Labeling, Netlet, SacConfig, build_netlets, fuse
from .scene_io import (
    CameraIntrinsics,
    CameraView,
    DepthMap,
    PointCloud,
    Pose,
    load_camera_set,
    load_point_cloud,
    write_point_cloud,
)
from .synth import SceneSpec, generate_scene

__all__ = [
    "CameraIntrinsics", "CameraView", "ConcatFusion", "ConsistencyConfig", "ConsistencyFusion",
    "DepthMap", "EvalReport", "FusedCloud", "GroupingConfig", "Labeling", "MultiRayFusion",
    "Netlet", "PointCloud", "PointGroup", "PointSample", "Pose", "Ray", "SacConfig", "SceneSpec",
    "SelectAndCombine", "accuracy", "build_groups", "build_netlets", "cloud_to_cloud",
    "completeness", "concat_fuse", "consistency_fuse", "evaluate", "f1", "fuse", "generate_scene",
    "load_camera_set", "load_point_cloud", "multiray_fuse", "project", "triangulate_rays",
    "unproject", "write_point_cloud",
]
