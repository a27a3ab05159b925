"""Class-wise residual statistics and the SGIS-vs-uniform comparison harness."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyInput, InsufficientPopulation, LengthMismatch
from .geometry import pose_error
from .refine import (
    RefineOptions,
    RefineResult,
    SamplingPlan,
    refine_sgis,
    refine_uniform_baseline,
)
from .scene_sim import (
    Correspondences,
    PerturbationSpec,
    Scene,
    SceneSpec,
    derive_seed,
    generate_scene,
    oracle_residuals,
    perturb_pose,
)
from .support_map import SupportMap, accumulate_residuals, lookup, normalize

# seed streams; every random draw in an experiment is keyed by (base seed, stream, index)
SCENE_STREAM = 0
MAP_STREAM = 1
PERTURB_STREAM = 2
ORACLE_STREAM = 3
SAMPLE_STREAM = 4


@dataclass(frozen=True)
class ClassResidualStats:
    class_id: int
    count: int
    median_abs_du: float
    median_abs_dv: float
    summary: float  # median of |f|
    above_average: bool
    mean_abs_du: float = math.nan
    mean_abs_dv: float = math.nan


def class_stats(corrs: Correspondences) -> list[ClassResidualStats]:
    """Per-class median residuals, flagged against the unweighted mean of class summaries.

    Rows are ordered by class id.
    """
    if len(corrs) == 0:
        raise EmptyInput("no correspondences")
    f = corrs.f
    rows = []
    for cid in np.unique(corrs.class_ids):
        fc = f[corrs.class_ids == cid]
        adu, adv = np.abs(fc[:, 0]), np.abs(fc[:, 1])
        rows.append((int(cid), len(fc), float(np.median(adu)), float(np.median(adv)),
                     float(np.median(np.hypot(fc[:, 0], fc[:, 1]))), float(adu.mean()), float(adv.mean())))
    threshold = float(np.mean([r[4] for r in rows]))
    return [
        ClassResidualStats(cid, n, mdu, mdv, summ, summ > threshold, mean_du, mean_dv)
        for cid, n, mdu, mdv, summ, mean_du, mean_dv in rows
    ]


@dataclass(frozen=True)
class MetricSummary:
    mean: float
    median: float
    std: float  # population std over runs

    @classmethod
    def of(cls, x) -> "MetricSummary":
        x = np.asarray(x, dtype=np.float64)
        return cls(float(x.mean()), float(np.median(x)), float(x.std()))


def relative_improvement(baseline: float, candidate: float) -> float:
    """``(baseline - candidate) / baseline``; positive when the candidate is smaller."""
    if baseline == 0:
        return 0.0 if candidate == 0 else -math.inf
    return (baseline - candidate) / baseline


@dataclass(frozen=True)
class VariantComparison:
    """Per-run errors of a baseline ``a`` and a candidate ``b`` with aggregates.

    ``errors_*`` are ``(n_runs, 2)`` arrays of (translation m, rotation deg).
    """

    errors_a: np.ndarray
    errors_b: np.ndarray
    label_a: str = "uniform"
    label_b: str = "sgis"
    translation_a: MetricSummary = field(init=False)
    translation_b: MetricSummary = field(init=False)
    rotation_a: MetricSummary = field(init=False)
    rotation_b: MetricSummary = field(init=False)
    translation_wins_a: int = field(init=False)
    translation_wins_b: int = field(init=False)
    rotation_wins_a: int = field(init=False)
    rotation_wins_b: int = field(init=False)

    def __post_init__(self):
        a = np.array(self.errors_a, dtype=np.float64).reshape(-1, 2)
        b = np.array(self.errors_b, dtype=np.float64).reshape(-1, 2)
        if len(a) == 0 or len(b) == 0:
            raise EmptyInput("no runs")
        if len(a) != len(b):
            raise LengthMismatch(f"{len(a)} runs vs {len(b)} runs")
        a.setflags(write=False)
        b.setflags(write=False)
        put = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        put("errors_a", a)
        put("errors_b", b)
        put("translation_a", MetricSummary.of(a[:, 0]))
        put("translation_b", MetricSummary.of(b[:, 0]))
        put("rotation_a", MetricSummary.of(a[:, 1]))
        put("rotation_b", MetricSummary.of(b[:, 1]))
        put("translation_wins_a", int(np.sum(a[:, 0] < b[:, 0])))
        put("translation_wins_b", int(np.sum(b[:, 0] < a[:, 0])))
        put("rotation_wins_a", int(np.sum(a[:, 1] < b[:, 1])))
        put("rotation_wins_b", int(np.sum(b[:, 1] < a[:, 1])))

    @property
    def n_runs(self) -> int:
        return len(self.errors_a)

    def improvement(self, metric: str, stat: str) -> float:
        """Relative improvement of ``b`` over ``a``; ``metric`` in {translation, rotation},
        ``stat`` in {mean, median, std}."""
        sa = getattr(getattr(self, f"{metric}_a"), stat)
        sb = getattr(getattr(self, f"{metric}_b"), stat)
        return relative_improvement(sa, sb)

    def table(self) -> str:
        la, lb = self.label_a, self.label_b
        lines = [f"{'metric':<22}{la:>14}{lb:>14}{'improvement':>14}"]
        for metric, unit in (("translation", "m"), ("rotation", "deg")):
            for stat in ("mean", "median", "std"):
                va = getattr(getattr(self, f"{metric}_a"), stat)
                vb = getattr(getattr(self, f"{metric}_b"), stat)
                lines.append(f"{metric + ' ' + stat + ' [' + unit + ']':<22}{va:>14.6g}{vb:>14.6g}"
                             f"{100 * self.improvement(metric, stat):>13.2f}%")
        lines.append(f"{'translation wins':<22}{self.translation_wins_a:>14d}{self.translation_wins_b:>14d}"
                     f"{'/' + str(self.n_runs):>14}")
        lines.append(f"{'rotation wins':<22}{self.rotation_wins_a:>14d}{self.rotation_wins_b:>14d}"
                     f"{'/' + str(self.n_runs):>14}")
        return "\n".join(lines)


def compare_variants(runs_a, runs_b, label_a: str = "uniform", label_b: str = "sgis") -> VariantComparison:
    return VariantComparison(np.asarray(runs_a, float), np.asarray(runs_b, float), label_a, label_b)


def reference_frames(scene: Scene, n_frames: int, seed: int) -> list[Correspondences]:
    """Oracle output for ``n_frames`` reference-aligned observations of ``scene``."""
    return [
        oracle_residuals(scene, scene.reference_extrinsics, derive_seed(seed, MAP_STREAM), frame_index=t)
        for t in range(n_frames)
    ]


def build_support_map(frames, width: int, height: int, downsample: int, sigma: float, tau: float,
                      normalized: bool = True) -> SupportMap:
    smap = SupportMap.empty(width, height, downsample, sigma, tau)
    for c in frames:
        smap = accumulate_residuals(smap, c.u, c.f)
    return normalize(smap) if normalized else smap


@dataclass(frozen=True)
class RunRecord:
    run: int
    initial_error: tuple[float, float]
    uniform: RefineResult
    sgis: RefineResult
    uniform_error: tuple[float, float]
    sgis_error: tuple[float, float]


@dataclass(frozen=True)
class Experiment3Result:
    comparison: VariantComparison
    runs: tuple[RunRecord, ...]


def run_experiment3(scene: Scene | SceneSpec, perturbation: PerturbationSpec, support_map: SupportMap,
                    n_runs: int, base_seed: int, plan: SamplingPlan = SamplingPlan(),
                    opts: RefineOptions = RefineOptions(),
                    divide_by_probability: bool = False) -> Experiment3Result:
    """Uniform vs. support-guided refinement over ``n_runs`` perturbed initial estimates.

    Both variants see the same correspondence set in each run.  SGIS draws
    ``min(plan.k, n_nonzero)`` samples so a map with empty regions does not
    abort the run; the uniform baseline draws ``min(plan.k, n)``.
    ``plan.seed`` and ``perturbation.seed`` are replaced by per-run seeds.
    """
    if n_runs < 1:
        raise EmptyInput("n_runs must be >= 1")
    if isinstance(scene, SceneSpec):
        scene = generate_scene(scene, derive_seed(base_seed, SCENE_STREAM))
    K = scene.intrinsics
    T_ref = scene.reference_extrinsics
    records = []
    for r in range(n_runs):
        pert = PerturbationSpec(perturbation.translation_magnitude, perturbation.rotation_magnitude,
                                derive_seed(base_seed, PERTURB_STREAM, r))
        T0 = perturb_pose(T_ref, pert)
        corrs = oracle_residuals(scene, T0, derive_seed(base_seed, ORACLE_STREAM, r))
        sample_seed = derive_seed(base_seed, SAMPLE_STREAM, r)
        uni = refine_uniform_baseline(T0, corrs, K, plan.k, sample_seed, opts)

        supports = lookup(support_map, corrs.u)
        k = plan.k
        if not plan.with_replacement:
            k = min(k, int(np.count_nonzero(supports)))
            if k < 1:
                raise InsufficientPopulation("no correspondence has nonzero support")
        sg = refine_sgis(T0, corrs, supports, K, SamplingPlan(k, plan.with_replacement, sample_seed), opts,
                         divide_by_probability)
        records.append(RunRecord(r, pose_error(T0, T_ref), uni, sg,
                                 pose_error(uni.refined, T_ref), pose_error(sg.refined, T_ref)))
    comp = compare_variants([rec.uniform_error for rec in records], [rec.sgis_error for rec in records])
    return Experiment3Result(comp, tuple(records))


# -- CSV emitters ---------------------------------------------------------------

def _g(x) -> str:
    return format(float(x), ".17g")


CLASS_STATS_HEADER = "class,count,med_du,med_dv,summary,above_avg,mean_du,mean_dv"


def class_stats_csv_rows(stats: list[ClassResidualStats]) -> list[str]:
    rows = [CLASS_STATS_HEADER]
    for s in stats:
        rows.append(f"{s.class_id},{s.count},{_g(s.median_abs_du)},{_g(s.median_abs_dv)},{_g(s.summary)},"
                    f"{int(s.above_average)},{_g(s.mean_abs_du)},{_g(s.mean_abs_dv)}")
    return rows


def runs_csv_rows(comp: VariantComparison) -> list[str]:
    rows = ["run,variant,trans_err_m,rot_err_deg"]
    for r in range(comp.n_runs):
        for label, errs in ((comp.label_a, comp.errors_a), (comp.label_b, comp.errors_b)):
            rows.append(f"{r},{label},{_g(errs[r, 0])},{_g(errs[r, 1])}")
    return rows


def summary_csv_rows(comp: VariantComparison) -> list[str]:
    rows = ["metric,stat,variant_a,variant_b,value_a,value_b,improvement"]
    for metric in ("translation", "rotation"):
        for stat in ("mean", "median", "std"):
            va = getattr(getattr(comp, f"{metric}_a"), stat)
            vb = getattr(getattr(comp, f"{metric}_b"), stat)
            rows.append(f"{metric},{stat},{comp.label_a},{comp.label_b},{_g(va)},{_g(vb)},"
                        f"{_g(comp.improvement(metric, stat))}")
        wa = getattr(comp, f"{metric}_wins_a")
        wb = getattr(comp, f"{metric}_wins_b")
        rows.append(f"{metric},wins,{comp.label_a},{comp.label_b},{wa},{wb},{comp.n_runs}")
    return rows
