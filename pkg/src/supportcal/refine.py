"""Support-guided importance sampling and weighted SE(3) refinement.

The objective is

    sum_{i in K} w_i * || u_matched_i - pi(exp(xi) T0 p_i) ||^2

minimized over the left increment ``exp(xi)`` with Levenberg-Marquardt.
``w_i`` is the support value of correspondence ``i``, multiplied by its
multiplicity when the index set was drawn with replacement.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSupport, InsufficientPopulation, OutOfView, RankDeficient
from .geometry import (
    CameraIntrinsics,
    Pose,
    compose,
    project_jacobians,
    project_points,
    se3_exp,
    transform_points,
    visible,
)
from .scene_sim import Correspondences

_MAX_DAMPING = 1e16
_MIN_DAMPING = 1e-15
_RANK_TOL = 1e-12


@dataclass(frozen=True)
class SamplingPlan:
    k: int = 2000
    with_replacement: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass(frozen=True)
class RefineOptions:
    max_iterations: int = 100
    cost_tolerance: float = 1e-10
    step_tolerance: float = 1e-12
    initial_damping: float = 1e-3
    damping_up: float = 10.0
    damping_down: float = 0.1
    huber_delta: float | None = None

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not (self.cost_tolerance > 0 and self.step_tolerance > 0):
            raise ValueError("tolerances must be > 0")
        if not (self.initial_damping > 0 and self.damping_up > 1 and 0 < self.damping_down < 1):
            raise ValueError("bad damping schedule")
        if self.huber_delta is not None and not self.huber_delta > 0:
            raise ValueError("huber_delta must be > 0 or None")


@dataclass(frozen=True)
class RefineResult:
    delta: Pose
    refined: Pose
    iterations: int
    initial_cost: float
    final_cost: float
    converged: bool
    cost_trace: tuple[float, ...] = field(default=())
    n_used: int = 0


def support_distribution(supports) -> np.ndarray:
    """Normalize non-negative supports into sampling probabilities."""
    s = np.asarray(supports, dtype=np.float64).reshape(-1)
    if np.any(s < 0) or not np.all(np.isfinite(s)):
        raise ValueError("supports must be finite and non-negative")
    total = s.sum()
    if not total > 0:
        raise DegenerateSupport("all supports are zero")
    return s / total


def sgis_sample(p, plan: SamplingPlan) -> np.ndarray:
    """Draw ``plan.k`` indices with probability proportional to ``p``.

    Without replacement this uses exponential race keys ``E_i / p_i`` with
    ``E_i ~ Exp(1)``: the ``k`` smallest keys, in increasing order, have the
    same law as ``k`` successive draws with the remaining weights
    renormalized after each draw.  Zero-probability indices are never drawn.
    """
    p = np.asarray(p, dtype=np.float64).reshape(-1)
    if np.any(p < 0) or not p.sum() > 0:
        raise DegenerateSupport("sampling weights must be non-negative with positive sum")
    rng = np.random.default_rng(plan.seed)
    if plan.with_replacement:
        cdf = np.cumsum(p)
        cdf /= cdf[-1]
        return np.searchsorted(cdf, rng.random(plan.k), side="right")
    nz = np.flatnonzero(p > 0)
    if plan.k > len(nz):
        raise InsufficientPopulation(f"k={plan.k} exceeds {len(nz)} nonzero-probability indices")
    with np.errstate(over="ignore"):  # subnormal weights give infinite keys, drawn last
        keys = rng.standard_exponential(len(nz)) / p[nz]
    if plan.k < len(nz):
        part = np.argpartition(keys, plan.k - 1)[: plan.k]
    else:
        part = np.arange(len(nz))
    return nz[part[np.argsort(keys[part], kind="stable")]]


def _weighted_cost(r2: np.ndarray, w: np.ndarray, huber: float | None) -> float:
    if huber is None:
        return float(np.dot(w, r2))
    e = np.sqrt(w * r2)
    return float(np.sum(np.where(e <= huber, e * e, 2.0 * huber * e - huber * huber)))


def _check_rank(H: np.ndarray) -> None:
    dH = np.diag(H)
    if np.any(dH <= 0):
        raise RankDeficient("a twist direction has no constraint")
    scale = 1.0 / np.sqrt(dH)
    ev = np.linalg.eigvalsh(H * np.outer(scale, scale))
    if ev[0] <= _RANK_TOL * ev[-1]:
        raise RankDeficient(f"normal equations singular (scaled eigenvalue ratio {ev[0] / ev[-1]:.3g})")


def refine_pose(T0: Pose, corrs: Correspondences, supports, K: CameraIntrinsics, sampled,
                opts: RefineOptions = RefineOptions()) -> RefineResult:
    """Weighted Levenberg-Marquardt refinement of the left increment applied to ``T0``.

    Raises :class:`DegenerateSupport` when every sampled weight is zero and
    :class:`RankDeficient` when the sampled geometry cannot pin down 6 DoF.
    Hitting ``max_iterations`` is reported through ``converged=False``.
    """
    if corrs.points is None:
        raise ValueError("correspondences carry no 3D points")
    s = np.asarray(supports, dtype=np.float64).reshape(-1)
    if len(s) != len(corrs):
        raise ValueError("supports and correspondences differ in length")
    if np.any(s < 0) or not np.all(np.isfinite(s)):
        raise ValueError("supports must be finite and non-negative")
    sampled = np.asarray(sampled, dtype=np.int64).reshape(-1)
    if len(sampled) == 0:
        raise ValueError("sampled index set is empty")

    w_all = np.bincount(sampled, minlength=len(corrs)).astype(np.float64) * s
    used = np.flatnonzero(w_all > 0)
    if len(used) == 0:
        raise DegenerateSupport("all sampled correspondences have zero support")
    w = w_all[used]
    target = corrs.u_matched[used]
    P0 = transform_points(T0, corrs.points[used])
    _, vis = visible(K, P0)
    if not np.all(vis):
        raise OutOfView(f"{int(np.sum(~vis))} sampled correspondences are out of view under T0")

    huber = opts.huber_delta

    def residuals(D: Pose):
        Pc = transform_points(D, P0)
        uv, ok = project_points(K, Pc)
        r = np.where(ok[:, None], target - uv, 0.0)
        return Pc, r, ok

    def cost_of(r, ok):
        return _weighted_cost(np.sum(r * r, axis=1), np.where(ok, w, 0.0), huber)

    def normal_equations(wk, Pc, r, ok):
        J = project_jacobians(K, np.where(ok[:, None], Pc, [0.0, 0.0, 1.0]))
        return np.einsum("n,nki,nkj->ij", wk, J, J), np.einsum("n,nki,nk->i", wk, J, r)

    D = Pose()
    Pc, r, ok = residuals(D)
    # the sampled geometry must constrain all six directions even when the start is already optimal
    _check_rank(normal_equations(w, Pc, r, ok)[0])
    cost = cost_of(r, ok)
    initial_cost = cost
    trace = [cost]
    lam = opts.initial_damping
    converged = cost == 0.0
    it = 0
    while not converged and it < opts.max_iterations:
        it += 1
        wk = np.where(ok, w, 0.0)
        if huber is not None:
            e = np.sqrt(wk * np.sum(r * r, axis=1))
            wk = wk * np.where(e <= huber, 1.0, huber / np.maximum(e, 1e-300))
        H, g = normal_equations(wk, Pc, r, ok)
        dH = np.diag(H).copy()
        _check_rank(H)

        accepted = False
        while lam <= _MAX_DAMPING:
            try:
                step = np.linalg.solve(H + lam * np.diag(dH), g)
            except np.linalg.LinAlgError as exc:
                raise RankDeficient(str(exc)) from exc
            D_new = compose(se3_exp(step), D)
            Pc_new, r_new, ok_new = residuals(D_new)
            new_cost = cost_of(r_new, ok_new)
            if new_cost <= cost:
                accepted = True
                break
            lam *= opts.damping_up
        if not accepted:
            # no descent at any damping: stationary to working precision
            converged = True
            break
        rel = (cost - new_cost) / cost if cost > 0 else 0.0
        D, Pc, r, ok, cost = D_new, Pc_new, r_new, ok_new, new_cost
        trace.append(cost)
        lam = max(lam * opts.damping_down, _MIN_DAMPING)
        if cost == 0.0 or rel < opts.cost_tolerance or np.linalg.norm(step) < opts.step_tolerance:
            converged = True

    return RefineResult(
        delta=D,
        refined=compose(D, T0),
        iterations=it,
        initial_cost=initial_cost,
        final_cost=cost,
        converged=converged,
        cost_trace=tuple(trace),
        n_used=len(used),
    )


def refine_uniform_baseline(T0: Pose, corrs: Correspondences, K: CameraIntrinsics, k: int, seed: int,
                            opts: RefineOptions = RefineOptions()) -> RefineResult:
    """Uniform sampling without replacement and unit weights; otherwise identical to SGIS."""
    n = len(corrs)
    sampled = sgis_sample(np.full(n, 1.0 / n), SamplingPlan(min(k, n), False, seed))
    return refine_pose(T0, corrs, np.ones(n), K, sampled, opts)


def refine_sgis(T0: Pose, corrs: Correspondences, supports, K: CameraIntrinsics, plan: SamplingPlan,
                opts: RefineOptions = RefineOptions(), divide_by_probability: bool = False) -> RefineResult:
    """Sample by support, then refine with support weights.

    ``divide_by_probability`` switches to classical importance weights
    ``s_i / p_i``; since ``p_i`` is proportional to ``s_i`` this is a constant
    weight on every sampled correspondence.
    """
    s = np.asarray(supports, dtype=np.float64)
    p = support_distribution(s)
    sampled = sgis_sample(p, plan)
    weights = s
    if divide_by_probability:
        weights = np.where(p > 0, s / np.where(p > 0, p, 1.0), 0.0)
    return refine_pose(T0, corrs, weights, K, sampled, opts)
