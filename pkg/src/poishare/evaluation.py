"""Welfare benchmarks: grid optimum, efficiency ratios, closed-form bound."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .game import GameInstance, welfare_batch
from .equilibrium import (
    best_response_dynamics,
    count_simplex_points,
    enumerate_equilibria,
    simplex_grid,
)
from . import asp as _asp
from . import air as _air


def default_grid_step(k: int) -> float:
    """Ground-truth resolution: 0.01 through four paths, 0.05 through six."""

    return 0.01 if k <= 4 else 0.05


@dataclass(frozen=True)
class OptimumReport:
    sw_star: float
    argmax_flow: np.ndarray
    grid_step: float
    certified_gap: float


def _max_slopes(instance: GameInstance, h: float = 1e-6) -> np.ndarray:
    """Per-path value-function slopes at zero (the max, by concavity)."""

    k = instance.num_paths
    lo = instance.utility.path_values(np.zeros((1, k)))[0]
    hi = instance.utility.path_values(np.full((1, k), h))[0]
    return (hi - lo) / h


def social_optimum_grid(instance: GameInstance, grid_step: float | None = None,
                        max_points: int = 10 ** 7,
                        chunk: int = 500_000) -> OptimumReport:
    """Exhaustive welfare maximization over the simplex grid, with a certificate.

    The certified gap bounds how far the true optimum can sit above the grid
    value: any flow is within one step per coordinate of a grid point, and
    welfare moves at most (weight_j * slope_j + c_j) per unit of coordinate j.
    """

    k = instance.num_paths
    if grid_step is None:
        grid_step = default_grid_step(k)
    if count_simplex_points(k, grid_step) > max_points:
        raise ValueError("grid too large; coarsen grid_step or raise max_points")
    grid = simplex_grid(k, grid_step)
    best_val = -np.inf
    best_flow = None
    for start in range(0, grid.shape[0], chunk):
        flows = grid[start:start + chunk]
        w = welfare_batch(instance, flows)
        i = int(np.argmax(w))
        if w[i] > best_val:
            best_val = float(w[i])
            best_flow = flows[i].copy()
    lipschitz = float(instance.aggregate_weights @ _max_slopes(instance)
                      + instance.costs.sum())
    return OptimumReport(
        sw_star=best_val, argmax_flow=best_flow, grid_step=grid_step,
        certified_gap=lipschitz * grid_step,
    )


@dataclass(frozen=True)
class UpperBoundReport:
    ub: float
    n_max: int
    max_weight: float
    population: int
    num_paths: int
    total_cost: float


def welfare_upper_bound(instance: GameInstance) -> UpperBoundReport:
    """Closed-form cap on the social optimum for per-path saturating values.

    Concavity caps each path's contribution by the best path's curve at the
    balanced flow; costs enter at their per-path average.
    """

    u = instance.utility
    if u.mode != "per-path":
        raise ValueError("the closed-form bound needs per-path collection stocks")
    k = instance.num_paths
    n_max = int(max(u.poi_counts))
    max_w = float(instance.aggregate_weights.max())
    m = u.population
    saturation = -n_max * math.expm1((m / k) * math.log1p(-1.0 / n_max))
    ub = k * max_w * saturation - float(instance.costs.sum()) / k
    return UpperBoundReport(
        ub=float(ub), n_max=n_max, max_weight=max_w, population=m,
        num_paths=k, total_cost=float(instance.costs.sum()),
    )


def price_of_anarchy(instance: GameInstance, mechanism=None,
                     grid_step: float | None = None,
                     enum_step: float | None = None,
                     asp_thresholds: str = "problem2") -> float:
    """Worst-equilibrium welfare over the grid optimum.

    mechanism: None (free riding), a PenaltyFractionPlan, a
    SidePaymentSchedule, or the strings "air" / "asp" to build the standard
    design for this instance. Free-riding equilibria come from grid
    enumeration, access-restriction equilibria from the polished dynamics
    (the fraction plans admit an essentially unique equilibrium; grid
    enumeration under them is unsound because the payoff Lipschitz constant
    blows up near the simplex boundary), side-payment equilibria from the
    closed-form family.
    """

    k = instance.num_paths
    if grid_step is None:
        grid_step = default_grid_step(k)
    if enum_step is None:
        enum_step = grid_step
    opt = social_optimum_grid(instance, grid_step)

    if mechanism == "air":
        mechanism = _air.matryoshka_fractions(instance)
    if mechanism == "asp":
        result = _asp.problem_two_optimize(instance) if asp_thresholds == "problem2" \
            else None
        if result is None:
            schedule, adjudicated = _asp.mechanism_schedule(instance, asp_thresholds)
            report = _asp.asp_equilibrium(adjudicated, schedule)
            worst = report.worst_welfare
        else:
            worst = result.worst_welfare
        return worst / opt.sw_star

    if hasattr(mechanism, "access_fractions"):
        result = best_response_dynamics(instance, adjustment=mechanism,
                                        tol=1e-4 * instance.scale)
        if not result.converged:
            raise RuntimeError(
                f"dynamics left an equilibrium gap of {result.epsilon:.3g}")
        return result.welfare / opt.sw_star

    if mechanism is None:
        eqs = enumerate_equilibria(instance, mechanism, grid_step=enum_step)
        if not eqs:
            raise RuntimeError("no equilibrium found on the enumeration grid")
        return eqs[0].welfare / opt.sw_star

    if isinstance(mechanism, _asp.SidePaymentSchedule):
        adjudicated = instance.replace_paths(list(mechanism.path_order),
                                             mechanism.costs.tolist())
        report = _asp.asp_equilibrium(adjudicated, mechanism)
        return report.worst_welfare / opt.sw_star

    raise TypeError(f"unsupported mechanism {type(mechanism).__name__}")
