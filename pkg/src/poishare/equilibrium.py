"""Equilibrium computation: gaps, best-response dynamics, grid enumeration.

An assignment is an equilibrium when no type with mass on a path would gain
by moving to another path, payoffs evaluated at the same aggregate flow
(individual deviations carry zero mass).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np
from scipy.optimize import fsolve, least_squares, linprog

from .game import (
    ANALYTIC_TOL,
    GameInstance,
    SOLVER_TOL,
    _adjusted_payoffs,
    flow_of,
    payoff_matrix,
    payoff_tensor,
    social_welfare,
    validate_assignment,
    welfare_batch,
)

MASS_TOL = 1e-9  # mass below this is treated as "not on the path"


class NoRootError(RuntimeError):
    """Raised when an indifference equation has no root in the requested window."""


# ---------------------------------------------------------------------------
# equilibrium tests

@dataclass(frozen=True)
class DeviationWitness:
    """A profitable move: some type can leave one path for a better one."""

    type_index: int
    from_path: int
    to_path: int
    gain: float


def equilibrium_gap(instance: GameInstance, assignment, adjustment=None,
                    mass_tol: float = MASS_TOL):
    """Largest payoff gain any occupied type-path pair forgoes, with witness.

    Returns ``(gap, witness)``; gap 0.0 and witness None when nothing
    profitable exists.
    """

    y = validate_assignment(instance, assignment)
    pay = payoff_matrix(instance, flow_of(y), adjustment)
    best = pay.max(axis=1)
    occupied = y > mass_tol
    short = np.where(occupied, best[:, None] - pay, -np.inf)
    i, j = np.unravel_index(int(np.argmax(short)), short.shape)
    gap = float(short[i, j])
    if gap <= 0.0:
        return 0.0, None
    to = int(np.argmax(pay[i]))
    return gap, DeviationWitness(int(i), int(j), to, gap)


def is_equilibrium(instance: GameInstance, assignment, adjustment=None,
                   epsilon: float = SOLVER_TOL, mass_tol: float = MASS_TOL) -> bool:
    gap, _ = equilibrium_gap(instance, assignment, adjustment, mass_tol)
    return gap <= epsilon


def no_incentive_equilibrium(instance: GameInstance):
    """Without a mechanism every user free-rides onto a cheapest path.

    Collection value is enjoyed regardless of own path, so payoff differences
    reduce to costs and all mass pools on the min-cost path (smallest index
    among ties). Returns the (m, k) assignment.
    """

    j = int(np.argmin(instance.costs))
    y = np.zeros((instance.num_types, instance.num_paths))
    y[:, j] = instance.proportions
    gap, _ = equilibrium_gap(instance, y)
    assert gap == 0.0
    return y


# ---------------------------------------------------------------------------
# two-path indifference functions

@dataclass(frozen=True)
class IndifferenceFunction:
    """G(x) = (1 - 2x) * [w * U_main(x) + (1 - w) * U_other(1 - x)] on [0, 1/2].

    Setting G(x) equal to a cost difference locates the interior splits at
    which a user is indifferent between the two paths under flow-proportional
    access fractions. G is unimodal: log-concave always, concave when
    w >= 1/2. G(0) = (1 - w) * U_other(1).
    """

    weight: float
    u_main: Callable[[np.ndarray], np.ndarray]
    u_other: Callable[[np.ndarray], np.ndarray]
    scale: float

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = (1.0 - 2.0 * x) * (
            self.weight * np.asarray(self.u_main(x), dtype=float)
            + (1.0 - self.weight) * np.asarray(self.u_other(1.0 - x), dtype=float)
        )
        return float(out) if out.ndim == 0 else out

    @property
    def at_zero(self) -> float:
        return float((1.0 - self.weight) * np.asarray(self.u_other(np.array(1.0))))

    def peak(self, tol: float = 1e-10) -> tuple[float, float]:
        """Argmax and max of G on [0, 1/2] by ternary search (G is unimodal)."""

        lo, hi = 0.0, 0.5
        while hi - lo > tol:
            m1 = lo + (hi - lo) / 3.0
            m2 = hi - (hi - lo) / 3.0
            if self(m1) < self(m2):
                lo = m1
            else:
                hi = m2
        xm = 0.5 * (lo + hi)
        return xm, self(xm)

    def concavity_defect(self, n: int = 2001) -> float:
        """Max positive second difference of G on a uniform grid (0 if concave)."""

        xs = np.linspace(0.0, 0.5, n)
        return float(np.max(np.diff(self(xs), 2)))


def two_path_indifference(instance: GameInstance, type_index: int = 0,
                          main_path: int = 0) -> IndifferenceFunction:
    """Build the indifference function of one type for a two-path instance."""

    if instance.num_paths != 2:
        raise ValueError("indifference functions are defined for two-path instances")
    other = 1 - main_path
    w = float(instance.weight_matrix[type_index, main_path])
    return IndifferenceFunction(
        weight=w,
        u_main=lambda x: instance.utility.path_value(main_path, x),
        u_other=lambda x: instance.utility.path_value(other, x),
        scale=instance.scale,
    )


def _bisect(fn, target, lo, hi, increasing, tol):
    """Root of fn(x) = target on [lo, hi] where fn - target changes sign once."""

    flo = fn(lo) - target
    fhi = fn(hi) - target
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise NoRootError(f"no sign change on [{lo}, {hi}]")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = fn(mid) - target
        if fm == 0.0:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi, fhi = mid, fm
    return 0.5 * (lo + hi)


def solve_indifference(fn: IndifferenceFunction, target: float,
                       tol: float = 1e-12) -> tuple[float | None, float]:
    """All roots of G(x) = target on [0, 1/2).

    Returns ``(x_bar, x_tilde)`` with x_bar on the rising branch (present iff
    G(0) <= target <= peak) and x_tilde on the falling branch. G(1/2) = 0, so
    a falling root exists whenever target <= peak.
    """

    xm, gm = fn.peak()
    if target > gm + ANALYTIC_TOL * max(1.0, fn.scale):
        raise NoRootError(f"target {target} exceeds the peak {gm}")
    target = min(target, gm)
    x_tilde = _bisect(fn, target, xm, 0.5, increasing=False, tol=tol)
    x_bar = None
    if fn.at_zero <= target:
        x_bar = _bisect(fn, target, 0.0, xm, increasing=True, tol=tol)
    return x_bar, x_tilde


def find_root_in_window(fn: IndifferenceFunction, target: float, lo: float,
                        hi: float, tol: float = 1e-12) -> float | None:
    """Rising-branch root of G(x) = target restricted to [lo, hi], or None.

    Used by mechanism constructions that only accept the small root when it
    falls inside a feasibility window.
    """

    lo = max(lo, 0.0)
    if hi <= lo:
        return None
    xm, gm = fn.peak()
    if fn.at_zero > target or target > gm:
        return None
    try:
        root = _bisect(fn, target, 0.0, xm, increasing=True, tol=tol)
    except NoRootError:
        return None
    if lo - tol <= root <= hi + tol:
        return float(min(max(root, lo), hi))
    return None


# ---------------------------------------------------------------------------
# best-response dynamics

@dataclass
class EquilibriumResult:
    assignment: np.ndarray
    flow: np.ndarray
    epsilon: float
    iterations: int
    converged: bool
    eps_trace: np.ndarray = field(repr=False)
    welfare: float | None = None


def best_response_dynamics(instance: GameInstance, adjustment=None, initial=None,
                           step: float = 0.4, max_iters: int = 10000,
                           tol: float = SOLVER_TOL,
                           trace_every: int = 1) -> EquilibriumResult:
    """Averaged best response, then an exact polish on the active support.

    Phase one moves every type's mass toward its current best path (smallest
    index on ties) by a harmonically decaying fraction min(step, 2/(t+4));
    the averaging settles the aggregate flow into an equilibrium basin even
    when types keep flipping between near-tied paths. Phase two derives the
    candidate support from a max-payoff transport fill at the settled flow
    and root-solves the support's indifference conditions for the exact
    flow; a witness-repair sweep mops up degenerate cases. Tracks the best
    iterate seen so the reported epsilon trace is monotone.
    """

    m, k = instance.num_types, instance.num_paths
    if initial is None:
        y = np.tile(instance.proportions[:, None] / k, (1, k))
    else:
        y = validate_assignment(instance, initial).copy()

    best_eps = math.inf
    best_y = y.copy()
    trace = []
    last_gain_it = 0

    it = 0
    for it in range(1, max_iters + 1):
        gap, _ = equilibrium_gap(instance, y, adjustment)
        if gap < 0.99 * best_eps:
            last_gain_it = it
        if gap < best_eps:
            best_eps = gap
            best_y = y.copy()
        if it % trace_every == 0:
            trace.append(best_eps)
        if best_eps <= tol:
            break
        if it - last_gain_it > 150 and it >= 300:
            break   # settled in a basin; hand off to the polish
        pay = payoff_matrix(instance, flow_of(y), adjustment)
        target = np.zeros_like(y)
        target[np.arange(m), pay.argmax(axis=1)] = instance.proportions
        s = min(step, 2.0 / (it + 4.0))
        y = (1.0 - s) * y + s * target

    if best_eps > tol:
        # averaging leaves residue on dominated paths; try the pure
        # best-response point first, it is exact for pooling equilibria
        pay = payoff_matrix(instance, flow_of(y), adjustment)
        snap = np.zeros_like(y)
        snap[np.arange(m), pay.argmax(axis=1)] = instance.proportions
        snap_gap, _ = equilibrium_gap(instance, snap, adjustment)
        if snap_gap < best_eps:
            best_eps, best_y = snap_gap, snap
            trace.append(best_eps)
    if best_eps > tol:
        # polish from the settled endpoint: the averaged flow identifies the
        # basin even when its own gap is worse than an early iterate's
        y_p, eps_p, rounds = _support_polish(instance, adjustment,
                                             flow_of(y), tol)
        it += rounds
        if eps_p < best_eps:
            best_eps, best_y = eps_p, y_p
        trace.append(best_eps)
    if best_eps > tol:
        best_y, best_eps = _witness_repair(instance, adjustment, best_y, tol)
        trace.append(best_eps)

    converged = best_eps <= tol
    y_out = best_y
    return EquilibriumResult(
        assignment=y_out,
        flow=flow_of(y_out),
        epsilon=float(best_eps),
        iterations=it,
        converged=converged,
        eps_trace=np.asarray(trace),
        welfare=social_welfare(instance, flow_of(y_out)),
    )


def _max_payoff_fill(instance: GameInstance, adjustment, x: np.ndarray) -> np.ndarray:
    """Assignment maximizing total payoff at a fixed flow: a transport LP.

    Row sums are the type masses, column sums the flow. The optimum occupies
    only payoff-maximal cells exactly when the flow supports an equilibrium,
    so the fill doubles as an equilibrium witness.
    """

    m, k = instance.num_types, instance.num_paths
    pay = payoff_matrix(instance, x, adjustment)
    a_eq = np.zeros((m + k - 1, m * k))   # drop one redundant column constraint
    for i in range(m):
        a_eq[i, i * k:(i + 1) * k] = 1.0
    for j in range(k - 1):
        a_eq[m + j, j::k] = 1.0
    b_eq = np.concatenate([instance.proportions, x[:-1]])
    res = linprog(-pay.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0.0, None),
                  method="highs")
    if not res.success:
        raise RuntimeError(f"transport fill failed: {res.message}")
    return res.x.reshape(m, k)


def _support_polish(instance: GameInstance, adjustment, x, tol: float,
                    max_rounds: int = 20):
    """Solve the indifference system induced by the transport support.

    The max-payoff fill at a candidate flow reveals which type-path cells an
    equilibrium near it would occupy; cells of one type must then tie, which
    with the mass balance gives a square system in the used path flows. The
    flows enter through their logs (components spanning orders of magnitude
    wreck the Jacobian conditioning otherwise) and payoff residuals are
    normalized by the instance scale. Root-solving and re-deriving the
    support converges in a few rounds near a regular equilibrium. Returns
    (assignment, gap, rounds used).
    """

    m, k = instance.num_types, instance.num_paths
    scale = max(1.0, instance.scale)
    x = np.asarray(x, dtype=float).copy()
    best_gap, best_y = math.inf, None
    seen = set()
    jitter = np.random.default_rng(0)
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        x = np.clip(x, 1e-15, None)
        x /= x.sum()
        y = _max_payoff_fill(instance, adjustment, x)
        gap, _ = equilibrium_gap(instance, y, adjustment)
        if gap < best_gap:
            best_gap, best_y = gap, y.copy()
        if gap <= tol:
            break
        support = y > 1e-12
        key = support.tobytes()
        if key in seen:
            # degenerate vertex or cycle: a tiny multiplicative jitter makes
            # the fill pick a different support without moving the flow much
            x = x * np.exp(0.01 * jitter.standard_normal(k))
            continue
        seen.add(key)
        used = np.nonzero(support.any(axis=0))[0]

        def residual(z):
            full = np.zeros(k)
            full[used] = np.exp(np.minimum(z, 30.0))
            pay = _adjusted_payoffs(instance, full[None, :], adjustment)[0]
            parts = [full.sum() - 1.0]
            for i in range(m):
                js = np.nonzero(support[i])[0]
                parts.extend(((pay[i, js[:-1]] - pay[i, js[1:]]) / scale).tolist())
            return np.asarray(parts)

        guess = np.log(np.clip(x[used], 1e-12, 1.0))
        if residual(guess).size == used.size:
            sol, _, ok, _ = fsolve(residual, guess, full_output=True)
            if ok != 1:
                x = x * np.exp(0.01 * jitter.standard_normal(k))
                continue
        else:
            fit = least_squares(residual, guess)
            sol = fit.x
        new_x = np.zeros(k)
        new_x[used] = np.exp(np.minimum(sol, 30.0))
        if not np.isfinite(new_x).all() or new_x.sum() <= 0.0:
            break
        x = new_x
    return best_y, float(best_gap), rounds


def _witness_repair(instance: GameInstance, adjustment, y, tol: float,
                    max_repairs: int = 400):
    """Drive the gap down by settling one deviation witness at a time.

    Transfers exactly the mass that restores indifference between the
    witness pair (all of it when the gain never closes), which acts as a
    Gauss-Seidel pass over the complementarity conditions; near a regular
    equilibrium the max gap contracts quickly.
    """

    y = np.asarray(y, dtype=float).copy()
    best_gap, _ = equilibrium_gap(instance, y, adjustment)
    best_y = y.copy()
    for _ in range(max_repairs):
        gap, wit = equilibrium_gap(instance, y, adjustment)
        if gap < best_gap:
            best_gap, best_y = gap, y.copy()
        if gap <= tol or wit is None:
            break
        i, frm, to = wit.type_index, wit.from_path, wit.to_path
        avail = y[i, frm]

        def advantage(delta):
            z = y.copy()
            z[i, frm] -= delta
            z[i, to] += delta
            pay = payoff_matrix(instance, flow_of(z), adjustment)
            return pay[i, to] - pay[i, frm]

        if advantage(avail) >= 0.0:
            y[i, to] += avail
            y[i, frm] = 0.0
            continue
        lo, hi = 0.0, avail
        for _ in range(50):
            mid = 0.5 * (lo + hi)
            if advantage(mid) >= 0.0:
                lo = mid
            else:
                hi = mid
        y[i, to] += lo
        y[i, frm] -= lo
    gap, _ = equilibrium_gap(instance, y, adjustment)
    if gap < best_gap:
        best_gap, best_y = gap, y
    return best_y, float(best_gap)


# ---------------------------------------------------------------------------
# exhaustive grid enumeration

def simplex_grid(k: int, step: float) -> np.ndarray:
    """All length-k compositions of 1 with resolution ``step``, lexicographic.

    step must divide 1 into an integer number of parts (within 1e-9).
    """

    parts = round(1.0 / step)
    if abs(parts * step - 1.0) > 1e-9:
        raise ValueError(f"step {step} must divide 1 evenly")
    counts = _compositions(parts, k)
    return counts / parts


def _compositions(n: int, k: int) -> np.ndarray:
    """Integer compositions of n into k parts, lexicographic, as a (P, k) array."""

    if k == 1:
        return np.array([[n]], dtype=float)
    blocks = []
    for first in range(n + 1):
        rest = _compositions(n - first, k - 1)
        head = np.full((rest.shape[0], 1), first, dtype=float)
        blocks.append(np.hstack([head, rest]))
    return np.vstack(blocks)


def count_simplex_points(k: int, step: float) -> int:
    parts = round(1.0 / step)
    return math.comb(parts + k - 1, k - 1)


def gap_lipschitz_estimate(instance: GameInstance, adjustment=None,
                           samples: int = 256, seed: int = 0) -> float:
    """Sampled Lipschitz constant of the per-type payoff gap in the flow.

    Drives the enumeration tolerance: an exact equilibrium within grid_step
    (L-inf) of a grid point leaves a gap of at most 2 * L * grid_step there.
    """

    rng = np.random.default_rng(seed)
    k = instance.num_paths
    a = rng.dirichlet(np.ones(k), size=samples)
    h = 1e-5
    worst = 0.0
    for j in range(k):
        b = a.copy()
        room = np.minimum(h, 1.0 - b[:, j])
        b[:, j] += room
        b /= b.sum(axis=1, keepdims=True)
        pa = payoff_tensor(instance, a, adjustment)
        pb = payoff_tensor(instance, b, adjustment)
        ga = pa.max(axis=2, keepdims=True) - pa
        gb = pb.max(axis=2, keepdims=True) - pb
        dx = np.max(np.abs(b - a), axis=1)
        ok = dx > 0
        if ok.any():
            rate = np.max(np.abs(gb - ga)[ok] / dx[ok, None, None])
            worst = max(worst, float(rate))
    return worst


def _supportable_batch(eta: np.ndarray, allowed: np.ndarray, flows: np.ndarray,
                       tol: float = 1e-9) -> np.ndarray:
    """Exact transport feasibility for a batch of candidate flows.

    Hall's condition on the bipartite type-to-path problem: every subset T
    of types needs sum(eta_T) <= flow mass on the union of T's allowed
    paths. All 2^m - 1 subsets are checked, vectorized over candidates.
    """

    p, m, k = allowed.shape
    ok = np.ones(p, dtype=bool)
    for mask in range(1, 1 << m):
        members = [i for i in range(m) if mask >> i & 1]
        need = float(eta[members].sum())
        union = allowed[:, members, :].any(axis=1)        # (P, k)
        have = np.where(union, flows, 0.0).sum(axis=1)
        ok &= have + tol >= need
        if not ok.any():
            break
    return ok


def _transport_fill(instance: GameInstance, allowed: np.ndarray,
                    flow: np.ndarray) -> np.ndarray | None:
    """A feasible assignment through allowed cells via greedy + augmenting paths."""

    m, k = allowed.shape
    eta = instance.proportions.copy()
    cap = flow.copy()
    y = np.zeros((m, k))
    # greedy pass
    for i in range(m):
        rem = eta[i]
        for j in range(k):
            if allowed[i, j] and cap[j] > 0 and rem > 0:
                put = min(rem, cap[j])
                y[i, j] += put
                cap[j] -= put
                rem -= put
        eta[i] = rem
    # augment leftover demand along alternating paths
    for i in range(m):
        guard = 0
        while eta[i] > 1e-15 and guard < 4 * m * k:
            guard += 1
            moved = _augment(i, allowed, y, cap, eta)
            if not moved:
                return None
    return y


def _augment(src: int, allowed: np.ndarray, y: np.ndarray, cap: np.ndarray,
             eta: np.ndarray) -> bool:
    """One augmenting step of the transport problem; True if any mass moved."""

    m, k = allowed.shape
    # BFS over alternating type -> path -> type edges
    parent_path: dict[int, int] = {}
    parent_type: dict[int, int] = {}
    seen_t = {src}
    frontier = [src]
    target_path = None
    while frontier and target_path is None:
        nxt = []
        for ti in frontier:
            for j in range(k):
                if not allowed[ti, j] or j in parent_path:
                    continue
                parent_path[j] = ti
                if cap[j] > 1e-15:
                    target_path = j
                    break
                for t2 in range(m):
                    if t2 not in seen_t and y[t2, j] > 1e-15:
                        parent_type[t2] = j
                        seen_t.add(t2)
                        nxt.append(t2)
            if target_path is not None:
                break
        frontier = nxt
    if target_path is None:
        return False
    # bottleneck along the path
    amount = min(eta[src], cap[target_path])
    j = target_path
    while True:
        ti = parent_path[j]
        if ti == src:
            break
        j_prev = parent_type[ti]
        amount = min(amount, y[ti, j_prev])
        j = j_prev
    if amount <= 1e-15:
        return False
    # apply
    j = target_path
    while True:
        ti = parent_path[j]
        y[ti, j] += amount
        if ti == src:
            break
        j_prev = parent_type[ti]
        y[ti, j_prev] -= amount
        j = j_prev
    cap[target_path] -= amount
    eta[src] -= amount
    return True


@dataclass(frozen=True)
class EnumeratedEquilibrium:
    flow: np.ndarray
    assignment: np.ndarray
    welfare: float
    epsilon: float


def enumerate_equilibria(instance: GameInstance, adjustment=None,
                         grid_step: float = 0.01, epsilon: float | None = None,
                         max_points: int = 10 ** 7,
                         chunk: int = 200_000) -> list[EnumeratedEquilibrium]:
    """All grid flows supportable as (epsilon-) equilibria, sorted by welfare.

    A grid flow qualifies when the type masses can be split across the paths
    so every occupied cell is within ``epsilon`` of that type's best payoff
    at the flow (checked exactly via Hall's condition, witness assignment by
    a transport fill). Default epsilon is 2 * gap-Lipschitz * grid_step,
    which captures every exact equilibrium within one grid cell.
    """

    k = instance.num_paths
    if count_simplex_points(k, grid_step) > max_points:
        raise ValueError("grid too large; coarsen grid_step or raise max_points")
    if epsilon is None:
        epsilon = 2.0 * gap_lipschitz_estimate(instance, adjustment) * grid_step
    grid = simplex_grid(k, grid_step)
    eta = instance.proportions
    out: list[EnumeratedEquilibrium] = []
    for start in range(0, grid.shape[0], chunk):
        flows = grid[start:start + chunk]
        pay = payoff_tensor(instance, flows, adjustment)   # (P, m, k)
        best = pay.max(axis=2, keepdims=True)
        allowed = pay >= best - epsilon
        ok = _supportable_batch(eta, allowed, flows)
        for p in np.nonzero(ok)[0]:
            flow = flows[p]
            y = _transport_fill(instance, allowed[p], flow)
            if y is None:
                continue
            gap, _ = equilibrium_gap(instance, y, adjustment)
            out.append(EnumeratedEquilibrium(
                flow=flow.copy(),
                assignment=y,
                welfare=float(social_welfare(instance, flow)),
                epsilon=float(gap),
            ))
    out.sort(key=lambda e: e.welfare)
    return out


def worst_equilibrium_welfare(instance: GameInstance, adjustment=None,
                              grid_step: float = 0.01,
                              epsilon: float | None = None) -> float:
    eqs = enumerate_equilibria(instance, adjustment, grid_step, epsilon)
    if not eqs:
        raise RuntimeError("no equilibrium found on the grid; refine the step")
    return eqs[0].welfare
