"""Synthetic class-labelled scenes, pose perturbation and the residual oracle.

The oracle stands in for a dense cross-modal matcher: for each point it
returns the displacement from its projection under the current estimate to
its projection under the reference extrinsics, corrupted by class-dependent
Gaussian noise.  Occlusion is not simulated.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .errors import ConfigError, EmptySpec, NoVisiblePoints
from .geometry import CameraIntrinsics, Pixel, Pose, so3_exp, transform_points, visible

REGION_KINDS = ("box", "plane", "strips", "blobs")


@dataclass(frozen=True)
class SemanticClass:
    id: int
    name: str
    residual_sigma: float
    outlier_rate: float = 0.0
    outlier_sigma: float | None = None

    def __post_init__(self):
        if self.outlier_sigma is None:
            object.__setattr__(self, "outlier_sigma", self.residual_sigma)
        if self.residual_sigma < 0:
            raise ConfigError(f"class {self.name}: residual_sigma < 0")
        if not 0.0 <= self.outlier_rate <= 1.0:
            raise ConfigError(f"class {self.name}: outlier_rate outside [0, 1]")
        if self.outlier_sigma < self.residual_sigma:
            raise ConfigError(f"class {self.name}: outlier_sigma < residual_sigma")


@dataclass(frozen=True)
class Region:
    """Spatial extent a class samples its points from (LiDAR frame, meters).

    ``box``     uniform in the axis-aligned box ``[lo, hi]``.
    ``plane``   uniform on the parallelogram ``origin + s*edge_a + t*edge_b``.
    ``strips``  ``n`` vertical cylinders of ``radius`` inside the box (tree trunks, poles).
    ``blobs``   ``n`` balls of ``radius`` inside the box (foliage clumps).
    """

    kind: str
    lo: tuple = (0.0, 0.0, 0.0)
    hi: tuple = (1.0, 1.0, 1.0)
    origin: tuple = (0.0, 0.0, 0.0)
    edge_a: tuple = (1.0, 0.0, 0.0)
    edge_b: tuple = (0.0, 1.0, 0.0)
    n: int = 8
    radius: float = 0.2

    def __post_init__(self):
        if self.kind not in REGION_KINDS:
            raise ConfigError(f"unknown region kind {self.kind!r}")
        if self.kind != "plane" and np.any(np.asarray(self.hi) < np.asarray(self.lo)):
            raise ConfigError("region hi < lo")
        if self.kind in ("strips", "blobs") and (self.n < 1 or self.radius < 0):
            raise ConfigError("strips/blobs need n >= 1 and radius >= 0")

    def contains(self, P, tol: float = 1e-9) -> np.ndarray:
        P = np.asarray(P, dtype=np.float64)
        if self.kind == "plane":
            A = np.column_stack([self.edge_a, self.edge_b])
            d = P - np.asarray(self.origin)
            st, *_ = np.linalg.lstsq(A, d.T, rcond=None)
            on_plane = np.linalg.norm(d - (A @ st).T, axis=1) <= tol * (1 + np.linalg.norm(d, axis=1))
            return on_plane & np.all((st >= -tol) & (st <= 1 + tol), axis=0)
        lo, hi = np.asarray(self.lo) - tol, np.asarray(self.hi) + tol
        return np.all((P >= lo) & (P <= hi), axis=1)

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        lo, hi = np.asarray(self.lo, float), np.asarray(self.hi, float)
        if self.kind == "box":
            return rng.uniform(lo, hi, size=(count, 3))
        if self.kind == "plane":
            st = rng.uniform(0.0, 1.0, size=(count, 2))
            return np.asarray(self.origin) + st[:, :1] * np.asarray(self.edge_a) + st[:, 1:] * np.asarray(self.edge_b)
        # strips and blobs: centers placed so that the shape stays inside the box
        r_xy = np.minimum(self.radius, 0.5 * (hi[:2] - lo[:2]))
        if self.kind == "strips":
            cxy = rng.uniform(lo[:2] + r_xy, hi[:2] - r_xy, size=(self.n, 2))
            which = rng.integers(0, self.n, size=count)
            ang = rng.uniform(0.0, 2 * math.pi, size=count)
            rad = np.sqrt(rng.uniform(0.0, 1.0, size=count))
            xy = cxy[which] + rad[:, None] * r_xy * np.column_stack([np.cos(ang), np.sin(ang)])
            z = rng.uniform(lo[2], hi[2], size=count)
            return np.column_stack([xy, z])
        r = np.minimum(self.radius, 0.5 * (hi - lo))
        centers = rng.uniform(lo + r, hi - r, size=(self.n, 3))
        which = rng.integers(0, self.n, size=count)
        d = rng.normal(size=(count, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        rad = np.cbrt(rng.uniform(0.0, 1.0, size=count))
        return centers[which] + rad[:, None] * r * d


@dataclass(frozen=True)
class ClassSpec:
    cls: SemanticClass
    count: int
    region: Region


@dataclass(frozen=True)
class SceneSpec:
    classes: tuple[ClassSpec, ...]
    intrinsics: CameraIntrinsics
    reference_extrinsics: Pose = field(default_factory=Pose)


@dataclass(frozen=True)
class Scene:
    points: np.ndarray  # (n, 3), LiDAR frame
    class_ids: np.ndarray  # (n,)
    point_ids: np.ndarray  # (n,)
    intrinsics: CameraIntrinsics
    reference_extrinsics: Pose
    classes: tuple[SemanticClass, ...]

    def __post_init__(self):
        known = {c.id for c in self.classes}
        if not set(np.unique(self.class_ids).tolist()) <= known:
            raise ConfigError("scene references an undeclared class id")
        if len(np.unique(self.point_ids)) != len(self.point_ids):
            raise ConfigError("point ids are not unique")

    def __len__(self) -> int:
        return len(self.points)

    def class_by_id(self, cid: int) -> SemanticClass:
        for c in self.classes:
            if c.id == cid:
                return c
        raise KeyError(cid)


@dataclass(frozen=True)
class PerturbationSpec:
    translation_magnitude: float  # meters
    rotation_magnitude: float  # degrees
    seed: int = 0

    def __post_init__(self):
        if self.translation_magnitude < 0 or self.rotation_magnitude < 0:
            raise ConfigError("perturbation magnitudes must be >= 0")
        if self.rotation_magnitude >= 180.0:
            raise ConfigError("rotation perturbation must be below 180 degrees")


@dataclass(frozen=True)
class Correspondence:
    point_id: int
    class_id: int
    u: Pixel
    f: tuple[float, float]

    @property
    def u_matched(self) -> Pixel:
        return Pixel(self.u.u + self.f[0], self.u.v + self.f[1])


@dataclass
class Correspondences:
    """Columnar set of correspondences; iterating yields :class:`Correspondence` records.

    ``points`` holds the LiDAR-frame points when known; correspondences read
    back from CSV carry no geometry unless a scene is supplied.
    """

    point_ids: np.ndarray
    class_ids: np.ndarray
    u: np.ndarray  # (n, 2) projection under the current estimate
    f: np.ndarray  # (n, 2) residual
    points: np.ndarray | None = None

    def __post_init__(self):
        self.point_ids = np.asarray(self.point_ids, dtype=np.int64).reshape(-1)
        self.class_ids = np.asarray(self.class_ids, dtype=np.int64).reshape(-1)
        self.u = np.asarray(self.u, dtype=np.float64).reshape(-1, 2)
        self.f = np.asarray(self.f, dtype=np.float64).reshape(-1, 2)
        n = len(self.point_ids)
        if not (len(self.class_ids) == len(self.u) == len(self.f) == n):
            raise ValueError("correspondence columns differ in length")
        if self.points is not None:
            self.points = np.asarray(self.points, dtype=np.float64).reshape(n, 3)

    @property
    def u_matched(self) -> np.ndarray:
        return self.u + self.f

    def __len__(self) -> int:
        return len(self.point_ids)

    def __getitem__(self, i: int) -> Correspondence:
        return Correspondence(
            int(self.point_ids[i]), int(self.class_ids[i]), Pixel(*self.u[i]), (float(self.f[i, 0]), float(self.f[i, 1]))
        )

    def __iter__(self) -> Iterator[Correspondence]:
        return (self[i] for i in range(len(self)))

    def subset(self, idx) -> "Correspondences":
        idx = np.asarray(idx)
        return Correspondences(
            self.point_ids[idx], self.class_ids[idx], self.u[idx], self.f[idx],
            None if self.points is None else self.points[idx],
        )

    @classmethod
    def concat(cls, sets: Sequence["Correspondences"]) -> "Correspondences":
        pts = None
        if sets and all(s.points is not None for s in sets):
            pts = np.concatenate([s.points for s in sets])
        return cls(
            np.concatenate([s.point_ids for s in sets]),
            np.concatenate([s.class_ids for s in sets]),
            np.concatenate([s.u for s in sets]),
            np.concatenate([s.f for s in sets]),
            pts,
        )


def derive_seed(*keys: int) -> int:
    """Independent 64-bit seed from a tuple of integers."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1, np.uint64)[0])


def generate_scene(spec: SceneSpec, seed: int) -> Scene:
    if not spec.classes:
        raise EmptySpec("scene spec lists no classes")
    ids = [c.cls.id for c in spec.classes]
    if len(set(ids)) != len(ids):
        raise ConfigError("duplicate class ids in scene spec")
    rng = np.random.default_rng(seed)
    pts, cids = [], []
    for c in spec.classes:
        if c.count < 0:
            raise ConfigError(f"class {c.cls.name}: negative count")
        pts.append(c.region.sample(c.count, rng).reshape(-1, 3))
        cids.append(np.full(c.count, c.cls.id, dtype=np.int64))
    points = np.concatenate(pts)
    return Scene(
        points=points,
        class_ids=np.concatenate(cids),
        point_ids=np.arange(len(points), dtype=np.int64),
        intrinsics=spec.intrinsics,
        reference_extrinsics=spec.reference_extrinsics,
        classes=tuple(c.cls for c in spec.classes),
    )


def _unit_vector(rng: np.random.Generator) -> np.ndarray:
    while True:
        v = rng.normal(size=3)
        n = np.linalg.norm(v)
        if n > 1e-12:
            return v / n


def perturb_pose(T_ref: Pose, spec: PerturbationSpec) -> Pose:
    """Initial estimate at exactly the requested translation/rotation distance from ``T_ref``."""
    rng = np.random.default_rng(spec.seed)
    direction, axis = _unit_vector(rng), _unit_vector(rng)
    dR = so3_exp(axis * math.radians(spec.rotation_magnitude))
    return Pose(dR @ T_ref.rotation, T_ref.translation + spec.translation_magnitude * direction)


def oracle_residuals(scene: Scene, T0: Pose, seed: int, frame_index: int = 0) -> Correspondences:
    """Simulated matcher output for the estimate ``T0``.

    Only points visible under both ``T0`` and the reference are returned.
    The generator is derived from ``(seed, frame_index)``.
    """
    K = scene.intrinsics
    u0, ok0 = visible(K, transform_points(T0, scene.points))
    uref, okref = visible(K, transform_points(scene.reference_extrinsics, scene.points))
    keep = ok0 & okref
    if not np.any(keep):
        raise NoVisiblePoints("no point is visible under both the estimate and the reference")

    sigma = np.zeros(len(scene))
    rate = np.zeros(len(scene))
    out_sigma = np.zeros(len(scene))
    for c in scene.classes:
        m = scene.class_ids == c.id
        sigma[m], rate[m], out_sigma[m] = c.residual_sigma, c.outlier_rate, c.outlier_sigma

    # noise drawn for every scene point so a point's noise does not depend on
    # which other points happen to be visible
    rng = np.random.default_rng([int(seed), int(frame_index)])
    z = rng.normal(size=(len(scene), 2))
    is_outlier = rng.uniform(size=len(scene)) < rate
    std = np.where(is_outlier, out_sigma, sigma)
    f = (uref - u0) + std[:, None] * z
    return Correspondences(
        scene.point_ids[keep], scene.class_ids[keep], u0[keep], f[keep], scene.points[keep]
    )


# -- file formats -------------------------------------------------------------

def _g(x) -> str:
    return format(float(x), ".17g")


def scene_csv_rows(scene: Scene) -> list[str]:
    rows = ["x,y,z,class_id,point_id"]
    for p, c, i in zip(scene.points, scene.class_ids, scene.point_ids):
        rows.append(f"{_g(p[0])},{_g(p[1])},{_g(p[2])},{int(c)},{int(i)}")
    return rows


def write_scene_csv(scene: Scene, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(scene_csv_rows(scene)) + "\n")


def read_scene_csv(path, intrinsics: CameraIntrinsics, reference_extrinsics: Pose,
                   classes: Sequence[SemanticClass]) -> Scene:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["x", "y", "z", "class_id", "point_id"]:
            raise ConfigError(f"{path}: unexpected scene header {reader.fieldnames}")
        rows = list(reader)
    pts = np.array([[float(r["x"]), float(r["y"]), float(r["z"])] for r in rows]).reshape(-1, 3)
    return Scene(
        points=pts,
        class_ids=np.array([int(r["class_id"]) for r in rows], dtype=np.int64),
        point_ids=np.array([int(r["point_id"]) for r in rows], dtype=np.int64),
        intrinsics=intrinsics,
        reference_extrinsics=reference_extrinsics,
        classes=tuple(classes),
    )


CORR_HEADER = ["point_id", "class_id", "u", "v", "du", "dv"]


def correspondence_csv_rows(corrs: Correspondences) -> list[str]:
    rows = [",".join(CORR_HEADER)]
    for pid, cid, u, f in zip(corrs.point_ids, corrs.class_ids, corrs.u, corrs.f):
        rows.append(f"{int(pid)},{int(cid)},{_g(u[0])},{_g(u[1])},{_g(f[0])},{_g(f[1])}")
    return rows


def read_correspondences_csv(path, scene: Scene | None = None) -> Correspondences:
    """Read a correspondence file; attaches 3D points when ``scene`` is given."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CORR_HEADER:
            raise ConfigError(f"{path}: unexpected correspondence header {reader.fieldnames}")
        rows = list(reader)
    pids = np.array([int(r["point_id"]) for r in rows], dtype=np.int64)
    corrs = Correspondences(
        pids,
        np.array([int(r["class_id"]) for r in rows], dtype=np.int64),
        np.array([[float(r["u"]), float(r["v"])] for r in rows]).reshape(-1, 2),
        np.array([[float(r["du"]), float(r["dv"])] for r in rows]).reshape(-1, 2),
    )
    if scene is not None:
        lut = {int(p): i for i, p in enumerate(scene.point_ids)}
        try:
            corrs.points = scene.points[[lut[int(p)] for p in pids]].reshape(-1, 3)
        except KeyError as exc:
            raise ConfigError(f"{path}: point id {exc} not in scene") from None
    return corrs
