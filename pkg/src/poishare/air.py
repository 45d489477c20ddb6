"""Access-restriction mechanism: penalty-fraction designs.

Instead of money, the mechanism grants each user on path j only a fraction
gamma_j of the aggregate collection value. Fractions are either static or
flow-dependent; the multi-path design composes per-round factors from a
recursive two-path reduction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .game import GameInstance, UtilityModel, flow_of, social_welfare
from .equilibrium import (
    EquilibriumResult,
    IndifferenceFunction,
    best_response_dynamics,
    find_root_in_window,
    two_path_indifference,
)


@dataclass(frozen=True)
class MatryoshkaRound:
    """One round of the recursive multi-path reduction (indices 0-based, plan order)."""

    round_index: int
    remaining_paths: tuple[int, ...]
    low_group: tuple[int, ...]
    high_group: tuple[int, ...]
    chosen_psi: int | None
    case_taken: str            # "eq14-break" or "eq15-continue"
    root_found: float | None


@dataclass(frozen=True)
class PenaltyFractionPlan:
    """A penalty-fraction design: maps flow to per-path access fractions.

    kind is one of "two-path-single-type", "two-path-two-type", "matryoshka".
    ``static_fractions`` is set when the design does not depend on flow.
    ``path_order`` lists original path indices in the plan's internal order
    (cost-descending for two-path kinds, utility-weight-descending for
    matryoshka); fractions returned by ``evaluate`` are in original order.
    The mechanism moves no money: ``monetary_transfers`` is always empty.
    """

    kind: str
    num_paths: int
    path_order: tuple[int, ...]
    branch: str                               # "static" or "flow-dependent"
    static_fractions: tuple[float, ...] | None = None
    rounds: tuple[MatryoshkaRound, ...] = ()
    costs: tuple[float, ...] = ()             # plan-order costs (for round replay)
    scale: float = 1.0
    monetary_transfers: tuple = ()

    def evaluate(self, flow) -> np.ndarray:
        """Fractions gamma_j at one flow, in original path order."""

        flow = np.asarray(flow, dtype=float)
        return self.access_fractions(flow[None, :])[0]

    def access_fractions(self, flows) -> np.ndarray:
        """Batch fractions: flows (P, k) -> (P, k), original path order."""

        flows = np.asarray(flows, dtype=float)
        if flows.ndim != 2 or flows.shape[1] != self.num_paths:
            raise ValueError(f"flows must have shape (P, {self.num_paths})")
        order = np.asarray(self.path_order)
        if self.static_fractions is not None:
            out = np.tile(np.asarray(self.static_fractions), (flows.shape[0], 1))
            return out
        xs = flows[:, order]                  # plan order
        if self.kind in ("two-path-single-type", "two-path-two-type"):
            factors = _two_path_flow_fractions(xs)
        else:
            factors = self._matryoshka_factors(xs)
        out = np.empty_like(factors)
        out[:, order] = factors
        return out

    def _matryoshka_factors(self, xs: np.ndarray) -> np.ndarray:
        p, k = xs.shape
        gamma = np.ones((p, k))
        for rnd in self.rounds:
            lam = rnd.round_index            # 0-based position in plan order
            if rnd.case_taken == "eq14-break":
                delta = (self.costs[lam] - self.costs[rnd.chosen_psi]) / (2.0 * self.scale)
                factor = np.full(k, 0.5 + delta)
                for j in rnd.low_group:
                    factor[j] = 0.5 - delta
                factor[:lam] = 1.0
                gamma *= np.clip(factor, 0.0, 1.0)[None, :]
                break
            tail = xs[:, lam:].sum(axis=1)
            tail_next = xs[:, lam + 1:].sum(axis=1)
            ok = tail > 0
            f_lam = np.where(ok, np.divide(tail_next, tail, out=np.full_like(tail, 0.5),
                                           where=ok), 0.5)
            f_rest = np.where(ok, np.divide(xs[:, lam], tail, out=np.full_like(tail, 0.5),
                                            where=ok), 0.5)
            gamma[:, lam] *= f_lam
            gamma[:, lam + 1:] *= f_rest[:, None]
        return gamma


def _two_path_flow_fractions(xs: np.ndarray) -> np.ndarray:
    """Flow-proportional fractions for a two-path plan (plan order: high cost first)."""

    total = xs.sum(axis=1)
    ok = total > 0
    g1 = np.where(ok, np.divide(xs[:, 1], total, out=np.full_like(total, 0.5), where=ok), 0.5)
    out = np.empty_like(xs)
    out[:, 0] = g1
    out[:, 1] = 1.0 - g1
    return out


# ---------------------------------------------------------------------------
# two-path designs

def two_path_single_type_fractions(w0: float, c1: float, c2: float,
                                   utility: UtilityModel) -> PenaltyFractionPlan:
    """Single-type two-path design; path 1 carries the higher cost c1 >= c2.

    Users with weight w0 < 1 on path 1 get flow-proportional fractions;
    w0 = 1 pins the static pair (1/2 + d, 1/2 - d) with d = (c1-c2)/(2 U(1)).
    """

    if not (0.0 <= w0 <= 1.0):
        raise ValueError(f"w0 must lie in [0, 1], got {w0}")
    if c1 < c2:
        raise ValueError("path 1 must carry the higher cost")
    scale = utility.scale
    if w0 == 1.0:
        delta = (c1 - c2) / (2.0 * scale)
        frac = (min(0.5 + delta, 1.0), max(0.5 - delta, 0.0))
        return PenaltyFractionPlan(
            kind="two-path-single-type", num_paths=2, path_order=(0, 1),
            branch="static", static_fractions=frac, scale=scale,
        )
    return PenaltyFractionPlan(
        kind="two-path-single-type", num_paths=2, path_order=(0, 1),
        branch="flow-dependent", scale=scale,
    )


def two_path_two_type_fractions(instance: GameInstance) -> PenaltyFractionPlan:
    """Two-type two-path design with a root test on the pivot's indifference curve.

    The majority type's indifference equation G(x) = c_high - c_low is probed
    for a small root in [max(0, 1-eta), 0.25]; when one exists the low split
    it represents is a bad equilibrium, and static fractions steer the flow
    toward balance. Otherwise the flow-proportional design applies.
    """

    if instance.num_paths != 2 or instance.num_types != 2:
        raise ValueError("this design needs exactly two paths and two types")
    # pivot = majority type; the listed first type wins only with eta > 1/2
    pivot = 0 if instance.proportions[0] > 0.5 else 1
    eta = float(instance.proportions[pivot])
    # plan order: high-cost path first (ties keep listed order)
    high = 0 if instance.costs[0] >= instance.costs[1] else 1
    low = 1 - high
    target = float(instance.costs[high] - instance.costs[low])
    fn = two_path_indifference(instance, type_index=pivot, main_path=high)
    root = find_root_in_window(fn, target, max(0.0, 1.0 - eta), 0.25)
    scale = instance.scale
    if root is not None:
        delta = target / (2.0 * scale)
        frac = [0.0, 0.0]
        frac[high] = min(0.5 + delta, 1.0)
        frac[low] = max(0.5 - delta, 0.0)
        return PenaltyFractionPlan(
            kind="two-path-two-type", num_paths=2, path_order=(high, low),
            branch="static", static_fractions=tuple(frac), scale=scale,
        )
    return PenaltyFractionPlan(
        kind="two-path-two-type", num_paths=2, path_order=(high, low),
        branch="flow-dependent", scale=scale,
    )


# ---------------------------------------------------------------------------
# multi-path design

def matryoshka_fractions(instance: GameInstance) -> PenaltyFractionPlan:
    """Recursive multi-path design: one fraction factor per round, composed.

    Paths are processed in descending utility-weight order (ties by index).
    Round lam treats path lam against the cheaper remainder: if the pivot
    type's indifference equation has a small root in the guarded window the
    round pins static fractions and stops; otherwise it emits
    flow-proportional factors and recurses into the remainder.
    """

    k = instance.num_paths
    weights = instance.aggregate_weights
    order = tuple(sorted(range(k), key=lambda j: (-weights[j], j)))
    mu = int(np.argmax(instance.proportions))     # first occurrence wins ties
    eta_mu = float(instance.proportions[mu])
    costs = instance.costs[list(order)]
    w_mu = instance.weight_matrix[mu, list(order)]
    scale = instance.scale

    def path_value(plan_pos):
        orig = order[plan_pos]
        return lambda x: instance.utility.path_value(orig, x)

    rounds = []
    for lam in range(k - 1):                      # 0-based plan positions
        remaining = tuple(range(lam + 1, k))
        low = tuple(j for j in remaining if costs[j] <= costs[lam])
        high = tuple(j for j in remaining if costs[j] > costs[lam])
        psi = None
        root = None
        case = "eq15-continue"
        if low:
            psi = min(low, key=lambda j: (costs[j], j))
            wsum = w_mu[lam] + w_mu[psi]
            if wsum > 0:
                fn = IndifferenceFunction(
                    weight=float(w_mu[lam] / wsum),
                    u_main=path_value(lam),
                    u_other=path_value(psi),
                    scale=scale,
                )
                target = float(costs[lam] - costs[psi])
                root = find_root_in_window(fn, target, max(0.0, 1.0 - eta_mu), 0.25)
                if root is not None:
                    case = "eq14-break"
        rounds.append(MatryoshkaRound(
            round_index=lam, remaining_paths=remaining, low_group=low,
            high_group=high, chosen_psi=psi, case_taken=case, root_found=root,
        ))
        if case == "eq14-break":
            break

    return PenaltyFractionPlan(
        kind="matryoshka", num_paths=k, path_order=order,
        branch="static" if rounds[-1].case_taken == "eq14-break" else "flow-dependent",
        rounds=tuple(rounds), costs=tuple(float(c) for c in costs), scale=scale,
    )


# ---------------------------------------------------------------------------
# welfare under a plan

def air_equilibrium_welfare(instance: GameInstance, plan: PenaltyFractionPlan,
                            tol: float | None = None, max_iters: int = 10000,
                            ) -> tuple[EquilibriumResult, float]:
    """Equilibrium under the plan via damped best response, plus its welfare.

    Welfare is the unrestricted aggregate value net of travel costs; the
    fractions shape incentives, not the realized collection. The fraction-
    weighted payoff total is available via realized_welfare.
    """

    if plan.num_paths != instance.num_paths:
        raise ValueError("plan and instance disagree on the number of paths")
    if tol is None:
        tol = 1e-4 * instance.scale
    result = best_response_dynamics(instance, adjustment=plan, tol=tol,
                                    max_iters=max_iters)
    return result, social_welfare(instance, result.flow)


def realized_welfare(instance: GameInstance, plan: PenaltyFractionPlan,
                     assignment) -> float:
    """Fraction-weighted welfare: sum_ij y_ij gamma_j U_i(x) - sum_j x_j c_j."""

    y = np.asarray(assignment, dtype=float)
    x = flow_of(y)
    gamma = plan.evaluate(x)
    values = instance.utility.path_values(x)
    per_type = instance.weight_matrix @ values          # (m,) type utilities
    collected = float(per_type @ (y @ gamma))
    return collected - float(instance.costs @ x)
