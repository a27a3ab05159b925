"""Support-map-driven multi-modal extrinsic calibration.

Stages: initial estimate (:func:`scene_sim.perturb_pose`), residual
extraction (:func:`scene_sim.oracle_residuals`), support-map estimation
(:mod:`support_map`) and support-guided refinement (:mod:`refine`).
"""

from .geometry import CameraIntrinsics, Pixel, Pose, Twist, pose_error, se3_exp, se3_log
from .refine import RefineOptions, RefineResult, SamplingPlan, refine_pose, sgis_sample, support_distribution
from .support_map import SupportMap

__all__ = [
    "CameraIntrinsics", "Pixel", "Pose", "Twist", "pose_error", "se3_exp", "se3_log",
    "RefineOptions", "RefineResult", "SamplingPlan", "refine_pose", "sgis_sample", "support_distribution",
    "SupportMap",
]
__version__ = "0.1.0"
