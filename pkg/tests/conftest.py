import numpy as np
import pytest

from supportcal.geometry import CameraIntrinsics, Pose
from supportcal.scene_sim import ClassSpec, Region, SceneSpec, SemanticClass

ACCEPTANCE_RESULTS = []

# LiDAR (x fwd, y left, z up) -> camera (x right, y down, z fwd)
LIDAR_TO_CAM = np.array([[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]])


@pytest.fixture
def K():
    return CameraIntrinsics(fx=500.0, fy=500.0, cx=320.0, cy=240.0, width=640, height=480)


@pytest.fixture
def T_ref():
    return Pose(LIDAR_TO_CAM, [0.05, -0.1, -0.2])


@pytest.fixture
def spread_spec(K, T_ref):
    """500 well-spread points, noiseless matcher."""
    cls = SemanticClass(0, "structure", residual_sigma=0.0)
    return SceneSpec((ClassSpec(cls, 500, Region("box", (5.0, -8.0, -3.0), (30.0, 8.0, 3.0))),), K, T_ref)


def two_class_spec(K, T_ref, rigid_sigma=1.0, foliage_sigma=6.0, n_rigid=5000, n_foliage=5000,
                   outlier_rate=0.0, outlier_sigma=None):
    rigid = SemanticClass(0, "trunk", rigid_sigma)
    foliage = SemanticClass(1, "foliage", foliage_sigma, outlier_rate,
                            foliage_sigma if outlier_sigma is None else outlier_sigma)
    return SceneSpec((
        ClassSpec(rigid, n_rigid, Region("strips", (6.0, 1.5, -1.5), (12.0, 5.0, 1.5), n=30, radius=0.3)),
        ClassSpec(foliage, n_foliage, Region("box", (6.0, -8.0, -1.5), (25.0, 0.5, 3.0))),
    ), K, T_ref)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for cid, title, ok, detail in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {cid}. {title}: {detail}")
