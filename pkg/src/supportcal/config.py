"""Experiment configuration (YAML) and its mapping onto library objects."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .errors import ConfigError
from .geometry import CameraIntrinsics, Pose
from .refine import RefineOptions, SamplingPlan
from .scene_sim import ClassSpec, PerturbationSpec, Region, SceneSpec, SemanticClass
from .support_map import DEFAULT_DOWNSAMPLE, DEFAULT_SIGMA, DEFAULT_TAU


@dataclass
class SupportMapParams:
    sigma: float = DEFAULT_SIGMA
    tau: float = DEFAULT_TAU
    downsample: int = DEFAULT_DOWNSAMPLE
    n_frames: int = 20


@dataclass
class SamplingParams:
    k: int = 2000
    with_replacement: bool = False
    divide_by_probability: bool = False


@dataclass
class ExperimentConfig:
    scene: SceneSpec
    perturbation: PerturbationSpec
    support_map: SupportMapParams = field(default_factory=SupportMapParams)
    sampling: SamplingParams = field(default_factory=SamplingParams)
    refine: RefineOptions = field(default_factory=RefineOptions)
    n_runs: int = 10
    seed: int = 0
    output_dir: str = "out"

    @property
    def intrinsics(self) -> CameraIntrinsics:
        return self.scene.intrinsics

    def sampling_plan(self) -> SamplingPlan:
        return SamplingPlan(self.sampling.k, self.sampling.with_replacement, 0)


def _build(cls, data: dict | None, where: str):
    data = dict(data or {})
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _region(data: dict, where: str) -> Region:
    data = dict(data)
    for key in ("lo", "hi", "origin", "edge_a", "edge_b"):
        if key in data:
            data[key] = tuple(float(v) for v in data[key])
    return _build(Region, data, where)


def class_from_dict(d: dict, where: str = "class") -> SemanticClass:
    keys = {"id", "name", "residual_sigma", "outlier_rate", "outlier_sigma"}
    return _build(SemanticClass, {k: v for k, v in d.items() if k in keys}, where)


def load_class_table(path) -> list[SemanticClass]:
    """Read a class table: a YAML list of ``{id, name, residual_sigma, outlier_rate, outlier_sigma}``."""
    try:
        rows = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read class table {path}: {exc}") from exc
    if not isinstance(rows, list):
        raise ConfigError(f"{path}: class table must be a list")
    return [class_from_dict(r, f"{path}[{i}]") for i, r in enumerate(rows)]


def class_table_yaml(classes) -> str:
    rows = [
        {"id": c.id, "name": c.name, "residual_sigma": float(c.residual_sigma),
         "outlier_rate": float(c.outlier_rate), "outlier_sigma": float(c.outlier_sigma)}
        for c in classes
    ]
    return yaml.safe_dump(rows, sort_keys=False)


def config_from_dict(cfg: dict[str, Any]) -> ExperimentConfig:
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a mapping")
    known = {"camera", "reference_extrinsics", "classes", "perturbation", "support_map",
             "sampling", "refine", "n_runs", "seed", "output_dir"}
    unknown = set(cfg) - known
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    for key in ("camera", "classes"):
        if key not in cfg:
            raise ConfigError(f"missing required key {key!r}")

    K = _build(CameraIntrinsics, cfg["camera"], "camera")
    ext = cfg.get("reference_extrinsics") or {}
    try:
        T_ref = Pose(np.array(ext.get("rotation", np.eye(3)), dtype=float),
                     np.array(ext.get("translation", [0.0, 0.0, 0.0]), dtype=float))
    except ValueError as exc:
        raise ConfigError(f"reference_extrinsics: {exc}") from exc

    specs = []
    for i, c in enumerate(cfg["classes"] or []):
        where = f"classes[{i}]"
        if "count" not in c or "region" not in c:
            raise ConfigError(f"{where}: needs count and region")
        specs.append(ClassSpec(class_from_dict(c, where), int(c["count"]), _region(c["region"], where + ".region")))

    pert = dict(cfg.get("perturbation") or {"translation_magnitude": 0.0, "rotation_magnitude": 0.0})
    pert.setdefault("seed", 0)
    return ExperimentConfig(
        scene=SceneSpec(tuple(specs), K, T_ref),
        perturbation=_build(PerturbationSpec, pert, "perturbation"),
        support_map=_build(SupportMapParams, cfg.get("support_map"), "support_map"),
        sampling=_build(SamplingParams, cfg.get("sampling"), "sampling"),
        refine=_build(RefineOptions, cfg.get("refine"), "refine"),
        n_runs=int(cfg.get("n_runs", 10)),
        seed=int(cfg.get("seed", 0)),
        output_dir=str(cfg.get("output_dir", "out")),
    )


def load_config(path) -> ExperimentConfig:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(data)


def bundled_config_path(name: str = "experiment3.yaml") -> Path:
    return Path(str(resources.files("supportcal") / "configs" / name))


def experiment3_config() -> ExperimentConfig:
    """The two-class rigid/foliage scenario used by the acceptance suite."""
    return load_config(bundled_config_path("experiment3.yaml"))
