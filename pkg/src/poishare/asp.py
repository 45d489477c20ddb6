"""Side-payment mechanism: cost rearrangement plus threshold charges.

Tier one relabels travel costs so the most valuable paths (by aggregate
utility weight) carry the highest costs, via per-user transfers that sum to
zero per capita. Tier two charges users on cheap paths and redistributes the
pool to users on expensive ones, equalizing effective costs so balanced
flows become equilibria.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .game import ANALYTIC_TOL, GameInstance, flow_of
from .equilibrium import (
    EquilibriumResult,
    equilibrium_gap,
    simplex_grid,
    count_simplex_points,
)

ZERO_MASS = 1e-12
# effective cost assigned to an empty rewarded path while the pool is positive:
# joining it alone captures the entire pool, so it is maximally attractive
EMPTY_PATH_COST = -1e30


@dataclass(frozen=True)
class SidePaymentSchedule:
    """Both tiers of the side-payment design, in the schedule's path order.

    All arrays are in internal order: paths sorted for the mechanism
    (utility-weight-descending for the full design, cost-descending for the
    two-path one). ``path_order[l]`` is the position of internal path l in
    the instance the schedule was built from. The schedule adjudicates the
    instance whose paths are already in internal order.
    """

    path_order: tuple[int, ...]
    original_costs: np.ndarray      # pre-rearrangement costs (internal order)
    costs: np.ndarray               # effective tier-one costs, non-increasing
    tier1_transfers: np.ndarray     # costs - original_costs
    theta: float | None = None
    tau: float | None = None
    omega: int | None = None        # rewarded paths are internal 0..omega-1

    def __post_init__(self):
        c = np.asarray(self.costs, dtype=float)
        if np.any(np.diff(c) > ANALYTIC_TOL):
            raise ValueError("rearranged costs must be non-increasing")
        if sorted(self.original_costs.tolist()) != sorted(c.tolist()):
            raise ValueError("rearranged costs must be a permutation of the originals")
        if self.theta is not None:
            if self.tau is None or self.tau < 0:
                raise ValueError("tier two needs tau >= 0")
            w = int(np.sum(c > self.theta))
            if w < 1 or w >= len(c):
                raise ValueError("theta must separate at least one path on each side")
            if not (c[w - 1] > self.theta > c[w]):
                raise ValueError("theta must strictly separate rewarded from charged costs")
            object.__setattr__(self, "omega", w)

    # -- tier-two accounting --------------------------------------------------

    @property
    def num_paths(self) -> int:
        return len(self.costs)

    @property
    def has_tier_two(self) -> bool:
        return self.theta is not None

    @property
    def charges_per_user(self) -> np.ndarray:
        """Per-user charge on each charged path: tau + c_(omega+1) - c_j >= 0."""

        self._need_tier_two()
        w = self.omega
        return self.tau + self.costs[w] - self.costs[w:]

    def gamma_pool(self, flows) -> np.ndarray | float:
        """Total collected on the charged paths at the given flow(s)."""

        self._need_tier_two()
        flows = np.asarray(flows, dtype=float)
        squeeze = flows.ndim == 1
        flows = np.atleast_2d(flows)
        pool = flows[:, self.omega:] @ self.charges_per_user
        return float(pool[0]) if squeeze else pool

    def effective_costs(self, flows) -> np.ndarray:
        """Travel cost net of charges and rewards, per path, batched over flows.

        Charged paths all cost c_(omega+1) + tau. A rewarded path carrying
        mass x_j refunds c_j*pool/(x_j * sum of rewarded costs) per user; an
        empty rewarded path with a positive pool gets EMPTY_PATH_COST, since
        a lone joiner would capture the entire per-user refund.
        """

        self._need_tier_two()
        flows = np.atleast_2d(np.asarray(flows, dtype=float))
        w = self.omega
        eff = np.empty_like(flows)
        eff[:, w:] = self.costs[w] + self.tau
        pool = flows[:, w:] @ self.charges_per_user
        reward_base = self.costs[:w].sum()
        for j in range(w):
            xj = flows[:, j]
            occupied = xj > ZERO_MASS
            col = np.full(flows.shape[0], self.costs[j])
            col[occupied] -= self.costs[j] * pool[occupied] / (xj[occupied] * reward_base)
            col[(~occupied) & (pool > ZERO_MASS)] = EMPTY_PATH_COST
            eff[:, j] = col
        return eff

    def _need_tier_two(self):
        if not self.has_tier_two:
            raise ValueError("schedule has no tier-two thresholds yet")


def with_thresholds(schedule: SidePaymentSchedule, theta: float,
                    tau: float) -> SidePaymentSchedule:
    """Attach tier-two thresholds to a tier-one schedule."""

    return replace(schedule, theta=float(theta), tau=float(tau), omega=None)


# ---------------------------------------------------------------------------
# tier one

def tier_one_rearrange(instance: GameInstance) -> tuple[SidePaymentSchedule, GameInstance]:
    """Sort paths by aggregate utility weight and hand costs out non-increasingly.

    Returns the tier-one schedule (no thresholds yet) and the instance it
    adjudicates: same paths in weight order with the rearranged costs.
    """

    k = instance.num_paths
    weights = instance.aggregate_weights
    order = tuple(sorted(range(k), key=lambda j: (-weights[j], j)))
    original = instance.costs[list(order)]
    rearranged = np.sort(instance.costs)[::-1].astype(float)
    schedule = SidePaymentSchedule(
        path_order=order,
        original_costs=original,
        costs=rearranged,
        tier1_transfers=rearranged - original,
    )
    return schedule, instance.replace_paths(order, rearranged)


def tier_one_net(schedule: SidePaymentSchedule) -> float:
    """Per-capita transfer total, summed exactly: 0 by construction."""

    terms = [float(c) for c in schedule.costs] + [-float(c) for c in schedule.original_costs]
    return math.fsum(terms)


# ---------------------------------------------------------------------------
# thresholds

def theorem2_thresholds(rearranged_costs) -> tuple[float, float]:
    """Closed-form thresholds for non-increasing costs, k >= 3.

    theta sits midway between the top two costs; tau activates only when the
    top-three costs are convex (c1 + c3 > 2*c2).
    """

    c = np.asarray(rearranged_costs, dtype=float)
    if c.size < 3:
        raise ValueError("closed-form thresholds need k >= 3; use the two-path problem")
    if np.any(np.diff(c) > ANALYTIC_TOL):
        raise ValueError("costs must be non-increasing (run tier one first)")
    theta = (c[0] + c[1]) / 2.0
    gap = c[0] + c[2] - 2.0 * c[1]
    tau = 0.0 if gap <= 0 else (c[0] + c[2]) / 2.0 - c[1]
    return float(theta), float(tau)


def charge_dominance_strict(rearranged_costs, tau: float) -> bool:
    """The literal per-path inequality chain: tau+c2-c_j > c1-c2-tau > 0 for all j >= 2."""

    c = np.asarray(rearranged_costs, dtype=float)
    b = c[0] - c[1] - tau
    if not b > 0:
        return False
    a = tau + c[1] - c[1:]
    return bool(np.all(a > b))


def charge_dominance_supported(rearranged_costs, tau: float) -> bool:
    """The part the threshold construction actually guarantees.

    Charges are non-negative on every charged path, the first-path margin
    c1-c2-tau is positive, and charges from the third path on dominate it.
    The j=2 charge equals tau and can fall below the margin. The dominance
    comparison carries a rounding guard: at the closed-form charge the
    third-path charge ties the margin exactly, and the float evaluation of
    that charge perturbs the tie by a few ulp.
    """

    c = np.asarray(rearranged_costs, dtype=float)
    b = c[0] - c[1] - tau
    a = tau + c[1] - c[1:]
    guard = 64.0 * np.finfo(float).eps * max(1.0, float(np.max(np.abs(c))) + tau)
    return bool(b > 0 and np.all(a >= 0) and np.all(a[1:] >= b - guard))


# ---------------------------------------------------------------------------
# two-path mechanism

def two_path_schedule(instance: GameInstance, tau: float) -> tuple[SidePaymentSchedule, GameInstance]:
    """Charge tau on the cheap path, reward the expensive one; no tier one.

    Returns the schedule and the cost-ordered instance it adjudicates.
    """

    if instance.num_paths != 2:
        raise ValueError("two-path schedule needs exactly two paths")
    c = instance.costs
    if abs(c[0] - c[1]) <= ANALYTIC_TOL:
        raise ValueError("two-path side payment needs distinct costs")
    order = (0, 1) if c[0] > c[1] else (1, 0)
    costs = c[list(order)].astype(float)
    schedule = SidePaymentSchedule(
        path_order=order,
        original_costs=costs.copy(),
        costs=costs,
        tier1_transfers=np.zeros(2),
        theta=float(costs.mean()),
        tau=float(tau),
    )
    return schedule, instance.replace_paths(order, costs)


def two_path_closed_form_flow(schedule: SidePaymentSchedule) -> np.ndarray:
    """The unique two-path equilibrium (tau/(c1-c2), rest), internal order."""

    if schedule.num_paths != 2:
        raise ValueError("closed form applies to two paths")
    diff = float(schedule.costs[0] - schedule.costs[1])
    x1 = schedule.tau / diff
    if not (0.0 <= x1 <= 1.0):
        raise ValueError("tau outside (0, c1-c2); no interior equilibrium")
    return np.array([x1, 1.0 - x1])


@dataclass(frozen=True)
class TwoPathAspProblem:
    """Optimal two-path charge: candidates, feasibility bounds, and the winner.

    alpha1/alpha2 weight the expensive/cheap path's value in the objective;
    xL and xH bound the equilibrium share of the expensive path so every
    user's utility covers the charge.
    """

    alpha1: float
    alpha2: float
    xL: float
    xH: float
    tau_star: float
    welfare_star: float
    equilibrium_flow: np.ndarray      # internal order (expensive, cheap)
    tau_cap: float
    path_order: tuple[int, int]
    fallback_used: bool


def _crossing(fn, target, lo, hi, increasing, tol=1e-12):
    """x in [lo, hi] with fn(x) = target for monotone fn, clamped at the ends."""

    flo, fhi = fn(lo) - target, fn(hi) - target
    if increasing:
        if flo >= 0:
            return lo
        if fhi <= 0:
            return hi
    else:
        if flo <= 0:
            return lo
        if fhi >= 0:
            return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = fn(mid) - target
        if (fm < 0) == increasing:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def two_path_optimal_tau(instance: GameInstance, tau_points: int = 10001,
                         tau_grid=None, refine: bool = True,
                         alphas: tuple[float, float] | None = None) -> TwoPathAspProblem:
    """Grid-plus-refinement search for the welfare-best two-path charge.

    Feasible charges keep every type's utility at the induced split at or
    above the charge; the half-cost charge is always retained as a fallback
    candidate. Objective: alpha1*U_hi(x) + alpha2*U_lo(1-x) - tau at
    x = tau/(c1-c2), which is the equilibrium welfare.
    """

    if instance.num_paths != 2:
        raise ValueError("this problem is defined for two paths")
    c = instance.costs
    if abs(c[0] - c[1]) <= ANALYTIC_TOL:
        raise ValueError("two-path side payment needs distinct costs")
    hi = 0 if c[0] > c[1] else 1
    lo = 1 - hi
    diff = float(c[hi] - c[lo])
    u_hi = lambda x: instance.utility.path_value(hi, x)
    u_lo = lambda x: instance.utility.path_value(lo, x)
    if alphas is None:
        alphas = (float(instance.aggregate_weights[hi]), float(instance.aggregate_weights[lo]))
    a1, a2 = alphas

    w_hi = instance.weight_matrix[:, hi]

    def type_value(i, x):
        return float(w_hi[i] * u_hi(x) + (1.0 - w_hi[i]) * u_lo(1.0 - x))

    # cap: charge must stay below every type's value at the balanced flow
    tau_cap = min(type_value(i, 0.5) for i in range(instance.num_types))
    tau_cap = min(tau_cap, diff)

    def bounds(tau):
        """IR window [xL, xH] for the expensive-path share at charge tau."""

        xls = [0.0]
        xhs = [1.0]
        for i in range(instance.num_types):
            f = lambda x, i=i: type_value(i, x)
            if w_hi[i] > 0.5:
                xls.append(_crossing(f, tau, 0.0, 0.5, increasing=True))
            else:
                xhs.append(_crossing(f, tau, 0.5, 1.0, increasing=False))
        return max(xls), min(xhs)

    def objective(tau):
        x = tau / diff
        return a1 * float(u_hi(x)) + a2 * float(u_lo(1.0 - x)) - tau

    def feasible(tau):
        if not (0.0 <= tau <= diff):
            return False, 0.0, 1.0
        xl, xh = bounds(tau)
        ok = diff * xl - ANALYTIC_TOL <= tau <= diff * xh + ANALYTIC_TOL
        return ok, xl, xh

    if tau_grid is None:
        tau_grid = np.linspace(0.0, max(tau_cap, 0.0), tau_points)
    else:
        tau_grid = np.asarray(tau_grid, dtype=float)

    fallback = diff / 2.0
    best_tau, best_val, best_feasible_bounds = None, -np.inf, (0.0, 1.0)
    for tau in tau_grid:
        ok, xl, xh = feasible(float(tau))
        if not ok:
            continue
        val = objective(float(tau))
        if val > best_val:
            best_tau, best_val, best_feasible_bounds = float(tau), val, (xl, xh)

    fb_val = objective(fallback)
    fallback_used = best_tau is None
    if best_tau is None or fb_val > best_val:
        best_tau, best_val, best_feasible_bounds = fallback, fb_val, bounds(fallback)

    if refine and len(tau_grid) > 2:
        span = float(tau_grid[-1] - tau_grid[0]) / (len(tau_grid) - 1)
        lo_b = max(0.0, best_tau - span)
        hi_b = min(diff, best_tau + span)
        if hi_b > lo_b:
            res = minimize_scalar(lambda t: -objective(t), bounds=(lo_b, hi_b),
                                  method="bounded", options={"xatol": 1e-12})
            cand = float(res.x)
            ok, xl, xh = feasible(cand)
            if ok and -res.fun > best_val:
                best_tau, best_val, best_feasible_bounds = cand, float(-res.fun), (xl, xh)

    x1 = best_tau / diff
    return TwoPathAspProblem(
        alpha1=a1, alpha2=a2,
        xL=best_feasible_bounds[0], xH=best_feasible_bounds[1],
        tau_star=best_tau, welfare_star=best_val,
        equilibrium_flow=np.array([x1, 1.0 - x1]),
        tau_cap=tau_cap, path_order=(hi, lo), fallback_used=fallback_used,
    )


# ---------------------------------------------------------------------------
# equilibrium family

def schedule_welfare(instance: GameInstance, schedule: SidePaymentSchedule,
                     flows) -> np.ndarray | float:
    """Welfare of flows on the adjudicated instance, charged at original costs.

    Transfers cancel in the aggregate; the resources actually consumed are
    the pre-rearrangement travel costs of the physical paths.
    """

    flows = np.asarray(flows, dtype=float)
    squeeze = flows.ndim == 1
    flows = np.atleast_2d(flows)
    values = instance.utility.path_values(flows)
    out = values @ instance.aggregate_weights - flows @ schedule.original_costs
    return float(out[0]) if squeeze else out


def _charged_step(k: int) -> float:
    return 0.02 if k <= 5 else 0.05


def equilibrium_family_flows(schedule: SidePaymentSchedule,
                             charged_points: np.ndarray) -> np.ndarray:
    """Equilibrium flows for given charged-mass split directions.

    ``charged_points``: (P, k-omega) rows on the unit simplex giving the
    proportions of charged mass across charged paths. In the interior regime
    (tau below the smallest rewarded margin) the rewarded masses follow from
    indifference; otherwise the family collapses to zero-charged corners and
    this function raises.
    """

    w = schedule.omega
    k = schedule.num_paths
    c = schedule.costs
    b = schedule.charges_per_user                       # (k-w,)
    margins = c[:w] - c[w] - schedule.tau
    if np.any(margins <= 0):
        raise ValueError("no interior family: tau >= a rewarded margin")
    a = c[:w] / (margins * c[:w].sum())                 # (w,)
    p = np.atleast_2d(np.asarray(charged_points, dtype=float))
    load = p @ b                                        # pool per unit charged mass
    s = 1.0 / (1.0 + a.sum() * load)                    # charged mass total
    pool = s * load
    flows = np.empty((p.shape[0], k))
    flows[:, w:] = s[:, None] * p
    flows[:, :w] = a[None, :] * pool[:, None]
    return flows


def _corner_flows(schedule: SidePaymentSchedule, step: float) -> np.ndarray:
    """Zero-charged equilibria: all mass on the cheapest rewarded path(s)."""

    w = schedule.omega
    k = schedule.num_paths
    c = schedule.costs
    tied = [i for i in range(w) if c[i] - c[w - 1] <= ANALYTIC_TOL]
    if len(tied) == 1:
        flows = np.zeros((1, k))
        flows[0, tied[0]] = 1.0
        return flows
    grid = simplex_grid(len(tied), step)
    flows = np.zeros((grid.shape[0], k))
    flows[:, tied] = grid
    return flows


@dataclass(frozen=True)
class AspEquilibriumReport:
    representative: EquilibriumResult
    family_kind: str                    # "interior" or "corner"
    flows: np.ndarray                   # enumerated family flows (internal order)
    welfares: np.ndarray                # true-cost welfare per flow
    worst_flow: np.ndarray
    worst_welfare: float
    min_first_path_mass: float
    grid_step: float


def asp_equilibrium(instance: GameInstance, schedule: SidePaymentSchedule,
                    worst_step: float | None = None) -> AspEquilibriumReport:
    """Representative equilibrium plus the worst one over the charged simplex.

    The charged paths share one effective cost, so any split of the charged
    mass extends to an equilibrium with rewarded masses pinned by
    indifference. The representative uses the uniform charged split; the
    grid scan returns the welfare-minimizing member. When tau exceeds a
    rewarded margin the family degenerates to zero-charged corners.
    """

    if not schedule.has_tier_two:
        raise ValueError("attach tier-two thresholds before solving")
    if instance.num_paths != schedule.num_paths:
        raise ValueError("instance and schedule disagree on the number of paths")
    if np.max(np.abs(instance.costs - schedule.costs)) > ANALYTIC_TOL:
        raise ValueError("instance does not carry the schedule's rearranged costs")
    k = schedule.num_paths
    w = schedule.omega
    if worst_step is None:
        worst_step = _charged_step(k)

    margins = schedule.costs[:w] - schedule.costs[w] - schedule.tau
    if np.all(margins > 0):
        kind = "interior"
        points = simplex_grid(k - w, worst_step)
        flows = equilibrium_family_flows(schedule, points)
        rep_flow = equilibrium_family_flows(
            schedule, np.full((1, k - w), 1.0 / (k - w)))[0]
    else:
        kind = "corner"
        flows = _corner_flows(schedule, worst_step)
        rep_flow = flows[0]

    welfares = np.asarray(schedule_welfare(instance, schedule, flows))
    worst = int(np.argmin(welfares))
    rep_assignment = instance.proportions[:, None] * rep_flow[None, :]
    gap, _ = equilibrium_gap(instance, rep_assignment, schedule)
    rep = EquilibriumResult(
        assignment=rep_assignment, flow=rep_flow, epsilon=float(gap),
        iterations=0, converged=gap <= ANALYTIC_TOL * max(1.0, instance.scale),
        eps_trace=np.array([gap]),
        welfare=float(schedule_welfare(instance, schedule, rep_flow)),
    )
    return AspEquilibriumReport(
        representative=rep, family_kind=kind, flows=flows, welfares=welfares,
        worst_flow=flows[worst], worst_welfare=float(welfares[worst]),
        min_first_path_mass=float(flows[:, 0].min()), grid_step=worst_step,
    )


# ---------------------------------------------------------------------------
# robust threshold optimization

@dataclass(frozen=True)
class ProblemTwoResult:
    tau: float
    theta: float
    omega: int
    worst_welfare: float
    schedule: SidePaymentSchedule
    adjudicated: GameInstance
    candidates_evaluated: int


def default_theta_grid(rearranged_costs) -> np.ndarray:
    """Midpoints between adjacent distinct costs: every valid separation class."""

    c = np.asarray(rearranged_costs, dtype=float)
    mids = [(c[i] + c[i + 1]) / 2.0 for i in range(len(c) - 1)
            if c[i] - c[i + 1] > ANALYTIC_TOL]
    return np.array(mids)


def default_tau_grid(rearranged_costs, points: int = 25) -> np.ndarray:
    c = np.asarray(rearranged_costs, dtype=float)
    span = float(c[0] - c[-1])
    cands = set(np.linspace(0.0, span, points).tolist())
    cands.add(float(c[0] - c[1]) / 2.0)
    if len(c) >= 3:
        cands.add(theorem2_thresholds(c)[1])
    return np.array(sorted(cands))


def problem_two_optimize(instance: GameInstance, tau_grid=None, theta_grid=None,
                         inner_step: float | None = None,
                         max_inner_points: int = 200_000) -> ProblemTwoResult:
    """Max-min threshold search: best (tau, theta) against the worst equilibrium.

    Runs tier one on the given instance (a no-op if it is already in weight
    order with matching costs), then scans threshold candidates, scoring
    each by the minimum true-cost welfare over its equilibrium family. The
    closed-form thresholds are always among the candidates, so the result is
    never worse than them. Two-path instances reduce to the two-path charge
    problem.
    """

    if instance.num_paths == 2:
        prob = two_path_optimal_tau(instance, tau_grid=tau_grid,
                                    refine=tau_grid is None)
        schedule, adjudicated = two_path_schedule(instance, prob.tau_star)
        return ProblemTwoResult(
            tau=prob.tau_star, theta=float(schedule.theta), omega=1,
            worst_welfare=prob.welfare_star, schedule=schedule,
            adjudicated=adjudicated,
            candidates_evaluated=1,
        )

    tier1, adjudicated = tier_one_rearrange(instance)
    costs = tier1.costs
    if inner_step is None:
        inner_step = _charged_step(instance.num_paths)
    if theta_grid is None:
        theta_grid = default_theta_grid(costs)
    if tau_grid is None:
        tau_grid = default_tau_grid(costs)
    theta2, tau2 = theorem2_thresholds(costs)
    pairs = [(float(t), float(th)) for th in theta_grid for t in tau_grid]
    if (tau2, theta2) not in pairs:
        pairs.append((tau2, theta2))

    best = None
    evaluated = 0
    for tau, theta in pairs:
        try:
            schedule = with_thresholds(tier1, theta, tau)
        except ValueError:
            continue
        if count_simplex_points(schedule.num_paths - schedule.omega,
                                inner_step) > max_inner_points:
            raise ValueError("inner grid too large; coarsen inner_step")
        report = asp_equilibrium(adjudicated, schedule, worst_step=inner_step)
        evaluated += 1
        if best is None or report.worst_welfare > best[0]:
            best = (report.worst_welfare, tau, theta, schedule)
    if best is None:
        raise RuntimeError("no valid (tau, theta) candidate separates the costs")
    worst_welfare, tau, theta, schedule = best
    return ProblemTwoResult(
        tau=tau, theta=theta, omega=schedule.omega, worst_welfare=worst_welfare,
        schedule=schedule, adjudicated=adjudicated, candidates_evaluated=evaluated,
    )


def mechanism_schedule(instance: GameInstance, thresholds: str = "theorem2",
                       ) -> tuple[SidePaymentSchedule, GameInstance]:
    """End-to-end schedule construction: tier one plus tier-two thresholds.

    thresholds "theorem2" uses the closed form; "problem2" optimizes the
    worst case numerically. Two-path instances use the two-path charge.
    """

    if instance.num_paths == 2:
        prob = two_path_optimal_tau(instance)
        return two_path_schedule(instance, prob.tau_star)
    tier1, adjudicated = tier_one_rearrange(instance)
    if thresholds == "theorem2":
        theta, tau = theorem2_thresholds(tier1.costs)
        return with_thresholds(tier1, theta, tau), adjudicated
    if thresholds == "problem2":
        result = problem_two_optimize(instance)
        return result.schedule, result.adjudicated
    raise ValueError(f"unknown thresholds mode {thresholds!r}")


# ---------------------------------------------------------------------------
# budget accounting

@dataclass(frozen=True)
class BudgetLedger:
    tier1_transfers: np.ndarray
    tier1_per_capita_net: float      # exact 0 by multiset identity
    tier1_mass_weighted_net: float   # sum_j x_j t_j, generally nonzero
    tier2_charged_total: float
    tier2_rewarded_total: float
    tier2_undistributed: float       # pool share of empty rewarded paths


def budget_ledger(schedule: SidePaymentSchedule, flow) -> BudgetLedger:
    """Itemize both tiers at a flow (internal path order).

    Tier-one transfers cancel per capita exactly. Tier-two rewards equal the
    charged pool whenever every rewarded path is occupied, which holds at
    every equilibrium with a positive pool.
    """

    x = np.asarray(flow, dtype=float)
    t1_net = tier_one_net(schedule)
    t1_mass = float(x @ schedule.tier1_transfers)
    charged = rewarded = undist = 0.0
    if schedule.has_tier_two:
        w = schedule.omega
        pool = float(schedule.gamma_pool(x))
        charged = pool
        base = schedule.costs[:w].sum()
        for j in range(w):
            share = float(schedule.costs[j]) * pool / base
            if x[j] > ZERO_MASS:
                rewarded += share
            else:
                undist += share
    return BudgetLedger(
        tier1_transfers=schedule.tier1_transfers,
        tier1_per_capita_net=t1_net,
        tier1_mass_weighted_net=t1_mass,
        tier2_charged_total=charged,
        tier2_rewarded_total=rewarded,
        tier2_undistributed=undist,
    )
