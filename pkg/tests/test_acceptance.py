"""Acceptance gate: eleven numbered checks, one printed verdict line each.

Each check prints ``criterion N: PASS`` or ``criterion N: FAIL`` directly to
the terminal (bypassing capture) and then asserts. Four criteria encode
reference claims that measure as unattainable on honest equilibria; they are
implemented literally, fail red on purpose, and each carries a green
counterpart pinning the achievable form. The blocking analysis lives in the
project notes, outside the package.
"""

import sys
import time

import numpy as np
import pytest

from helpers import common_instance, per_path_instance, two_path_instance
from poishare import (
    CORRIDOR_POI_COUNTS,
    GameInstance,
    PathSpec,
    SweepConfig,
    UserType,
    UtilityModel,
    benchmark_sweep_config,
    compare_no_incentive,
    run_sweep,
    saturating_value_fn,
)
from poishare.asp import (
    asp_equilibrium,
    budget_ledger,
    charge_dominance_strict,
    charge_dominance_supported,
    mechanism_schedule,
    theorem2_thresholds,
    tier_one_net,
    tier_one_rearrange,
    two_path_schedule,
    with_thresholds,
)
from poishare.equilibrium import (
    IndifferenceFunction,
    is_equilibrium,
    solve_indifference,
)
from poishare.evaluation import (
    price_of_anarchy,
    social_optimum_grid,
    welfare_upper_bound,
)


def _report(label, ok, expected_red=False, elapsed=None):
    verdict = "PASS" if ok else (
        "FAIL (expected; see decisions ledger)" if expected_red else "FAIL")
    suffix = f"  [{elapsed:.1f}s]" if elapsed is not None else ""
    sys.__stdout__.write(f"\n  criterion {label}: {verdict}{suffix}\n")
    sys.__stdout__.flush()


# ---------------------------------------------------------------------------
# criterion 1: two-path side-payment closed form is an equilibrium

def test_criterion_01_two_path_closed_form():
    start = time.perf_counter()
    rng = np.random.default_rng(101)
    scale = float(saturating_value_fn(1000.0, 2000)(1.0))
    ok = True
    for _ in range(100):
        inst = two_path_instance(rng, c1=float(rng.uniform(0.01, 0.3)) * scale)
        c1 = float(inst.costs[0])
        tau = float(rng.uniform(0.02, 0.98)) * c1
        schedule, adjudicated = two_path_schedule(inst, tau)
        x = np.array([tau / c1, 1.0 - tau / c1])
        y = adjudicated.proportions[:, None] * x[None, :]
        ok &= is_equilibrium(adjudicated, y, schedule, epsilon=1e-9)
    elapsed = time.perf_counter() - start
    _report(1, ok and elapsed < 1.0, elapsed=elapsed)
    assert ok
    assert elapsed < 1.0


# ---------------------------------------------------------------------------
# criterion 2: root structure of the indifference curve vs a dense scan

def test_criterion_02_indifference_root_structure():
    start = time.perf_counter()
    rng = np.random.default_rng(102)
    xs = np.linspace(0.0, 0.5, 10**6)
    checked = 0
    while checked < 50:
        n = float(rng.uniform(300.0, 3000.0))
        m_pop = int(rng.integers(600, 4000))
        value = saturating_value_fn(n, m_pop)
        u1 = float(value(1.0))
        w = float(rng.uniform(0.6, 0.995))
        fn = IndifferenceFunction(weight=w, u_main=value, u_other=value,
                                  scale=u1)
        _, gm = fn.peak()
        c = float(rng.uniform(0.005, 0.12)) * u1
        if c > 0.9 * gm or abs(w - (1.0 - c / u1)) < 1e-6:
            continue
        checked += 1
        expect_two = w >= 1.0 - c / u1
        x_bar, x_tilde = solve_indifference(fn, c)
        assert (x_bar is not None) == expect_two
        roots = [r for r in (x_bar, x_tilde) if r is not None]
        for root in roots:
            assert abs(fn(root) - c) <= 1e-7 * u1
        # oracle: sign changes of the densely scanned curve
        g = (1.0 - 2.0 * xs) * (w * value(xs) + (1.0 - w) * value(1.0 - xs))
        neg = np.signbit(g - c)
        cross = np.nonzero(neg[1:] != neg[:-1])[0]
        assert len(cross) == len(roots)
        for root in roots:
            assert any(xs[i] - 1e-6 <= root <= xs[i + 1] + 1e-6 for i in cross)
    elapsed = time.perf_counter() - start
    _report(2, elapsed < 10.0, elapsed=elapsed)
    assert elapsed < 10.0


# ---------------------------------------------------------------------------
# criterion 3: balanced fixed point and monotonicity of the type utilities

def test_criterion_03_fixed_point_and_monotonicity():
    start = time.perf_counter()
    rng = np.random.default_rng(103)
    lo = np.linspace(0.0, 0.5, 1000)
    hi = np.linspace(0.5, 1.0, 1000)
    for _ in range(100):
        n = float(rng.uniform(300.0, 3000.0))
        m_pop = int(rng.integers(600, 4000))
        util = UtilityModel(mode="common", common=saturating_value_fn(n, m_pop))
        m = int(rng.integers(1, 5))
        props = rng.dirichlet(np.ones(m))
        weights = rng.uniform(0.01, 0.99, size=m)
        types = tuple(UserType(i, float(props[i]),
                               (float(weights[i]), float(1.0 - weights[i])))
                      for i in range(m))
        inst = GameInstance((PathSpec(0, float(rng.uniform(0.0, 5.0))),
                             PathSpec(1, 0.0)), types, util)
        half = inst.utility.path_values(np.array([0.5, 0.5]))
        u_half = float(half[0])
        tu = inst.weight_matrix @ half
        assert np.max(np.abs(tu - u_half)) <= 1e-12
        u_lo, u_lo_r = inst.utility.common(lo), inst.utility.common(1.0 - lo)
        u_hi, u_hi_r = inst.utility.common(hi), inst.utility.common(1.0 - hi)
        for i in range(m):
            w = float(inst.weight_matrix[i, 0])
            if w > 0.5:
                curve = w * u_lo + (1.0 - w) * u_lo_r
                assert np.all(np.diff(curve) >= -1e-9 * inst.scale)
            else:
                curve = w * u_hi + (1.0 - w) * u_hi_r
                assert np.all(np.diff(curve) <= 1e-9 * inst.scale)
    elapsed = time.perf_counter() - start
    _report(3, elapsed < 5.0, elapsed=elapsed)
    assert elapsed < 5.0


# ---------------------------------------------------------------------------
# criterion 4: budget balance at every enumerated side-payment equilibrium

def test_criterion_04_budget_balance():
    start = time.perf_counter()
    rng = np.random.default_rng(104)
    scale = float(saturating_value_fn(1000.0, 2000)(1.0))
    done = 0
    while done < 200:
        k = 3 + done % 3
        inst = common_instance(rng, k=k, m=int(rng.integers(1, 5)),
                               max_cost=float(rng.uniform(0.02, 0.1)) * scale)
        if len(np.unique(inst.costs)) < k:
            continue
        done += 1
        schedule, adjudicated = mechanism_schedule(inst, "theorem2")
        assert tier_one_net(schedule) == 0.0
        report = asp_equilibrium(adjudicated, schedule, worst_step=0.05)
        w = schedule.omega
        for flow in report.flows:
            led = budget_ledger(schedule, flow)
            pool = float(flow[w:] @ schedule.charges_per_user)
            assert abs(led.tier2_charged_total - led.tier2_rewarded_total) <= 1e-9
            assert abs(led.tier2_charged_total - pool) <= 1e-9
    elapsed = time.perf_counter() - start
    _report(4, elapsed < 30.0, elapsed=elapsed)
    assert elapsed < 30.0


# ---------------------------------------------------------------------------
# criterion 5: first-path mass under closed-form thresholds (red: the
# enumerated family admits members that concentrate charged mass elsewhere)

@pytest.fixture(scope="module")
def charged_family_reports():
    rng = np.random.default_rng(105)
    scale = float(saturating_value_fn(1000.0, 2000)(1.0))
    out = []
    while len(out) < 40:
        k = 3 + len(out) % 2
        inst = common_instance(rng, k=k, m=int(rng.integers(1, 5)),
                               max_cost=float(rng.uniform(0.02, 0.08)) * scale)
        if len(np.unique(inst.costs)) < k:
            continue
        schedule, adjudicated = mechanism_schedule(inst, "theorem2")
        report = asp_equilibrium(adjudicated, schedule, worst_step=0.02)
        out.append((inst, schedule, report))
    return out


def test_criterion_05_first_path_mass(charged_family_reports):
    start = time.perf_counter()
    worst = 1.0
    for _, _, report in charged_family_reports:
        worst = min(worst, float(report.flows[:, 0].min()))
    elapsed = time.perf_counter() - start
    ok = worst >= 0.5 - 0.02 and elapsed < 120.0
    _report(5, ok, expected_red=True, elapsed=elapsed)
    assert worst >= 0.5 - 0.02, (
        f"family members reach first-path mass {worst:.4f} < 0.48")


def test_criterion_05_counterpart_family_floor_and_balanced_choice(
        charged_family_reports):
    # (a) the enumerated family never dips below tau/(c1-c2) minus grid slack
    for _, schedule, report in charged_family_reports:
        floor = schedule.tau / (schedule.costs[0] - schedule.costs[1])
        assert float(report.flows[:, 0].min()) >= floor - 0.02 - 1e-9
    # (b) the balanced threshold pair, always in the optimizer's candidate
    # set, puts at least half the mass on the first path in every member
    rng = np.random.default_rng(155)
    scale = float(saturating_value_fn(1000.0, 2000)(1.0))
    done = 0
    while done < 20:
        k = 3 + done % 2
        inst = common_instance(rng, k=k, m=int(rng.integers(1, 5)),
                               max_cost=float(rng.uniform(0.02, 0.08)) * scale)
        if len(np.unique(inst.costs)) < k:
            continue
        done += 1
        tier1, adjudicated = tier_one_rearrange(inst)
        c = tier1.costs
        schedule = with_thresholds(tier1, (c[0] + c[1]) / 2.0,
                                   (c[0] - c[1]) / 2.0)
        report = asp_equilibrium(adjudicated, schedule, worst_step=0.02)
        assert float(report.flows[:, 0].min()) >= 0.5 - 0.02
    _report("5 counterpart (family floor, balanced thresholds)", True)


# ---------------------------------------------------------------------------
# criterion 6: charge-dominance inequalities at closed-form thresholds
# (red: the literal all-paths chain fails at the second path)

def _random_rearranged_costs(rng):
    k = int(rng.integers(3, 7))
    c = np.sort(rng.uniform(0.0, 100.0, size=k))[::-1]
    c[-1] = 0.0
    return c


def test_criterion_06_charge_dominance_literal():
    start = time.perf_counter()
    rng = np.random.default_rng(106)
    failures = 0
    for _ in range(10**4):
        c = _random_rearranged_costs(rng)
        _, tau = theorem2_thresholds(c)
        failures += not charge_dominance_strict(c, tau)
    elapsed = time.perf_counter() - start
    ok = failures == 0 and elapsed < 1.0
    _report(6, ok, expected_red=True, elapsed=elapsed)
    assert failures == 0, (
        f"literal chain fails on {failures} of 10000 cost vectors")


def test_criterion_06_counterpart_supported_form():
    rng = np.random.default_rng(106)
    for _ in range(10**4):
        c = _random_rearranged_costs(rng)
        _, tau = theorem2_thresholds(c)
        assert charge_dominance_supported(c, tau)
    _report("6 counterpart (supported form)", True)


# ---------------------------------------------------------------------------
# criterion 7: anarchy-ratio bounds in the small-cost regime

def _skewed_instance(rng, k, m, low_weight):
    n = float(rng.uniform(100.0, 300.0))
    util = UtilityModel(mode="common", common=saturating_value_fn(n, 2000))
    costs = rng.uniform(0.0, 1e-3 * util.scale, size=k)
    costs[rng.integers(k)] = 0.0
    j0 = int(np.argmin(costs))
    props = rng.dirichlet(np.ones(m))
    types = []
    for i in range(m):
        if low_weight is None:
            row = rng.dirichlet(np.ones(k))
        else:
            row = np.insert(rng.dirichlet(np.ones(k - 1)) * (1.0 - low_weight),
                            j0, low_weight)
        types.append(UserType(i, float(props[i]), tuple(float(v) for v in row)))
    return GameInstance(tuple(PathSpec(j, float(costs[j])) for j in range(k)),
                        tuple(types), util)


def test_criterion_07_anarchy_bounds():
    start = time.perf_counter()
    rng = np.random.default_rng(107)
    air_min = asp_min = 1.0
    collapse_max, collapse_hits = 0.0, 0
    for trial in range(200):
        k = int(rng.integers(2, 5))
        m = int(rng.integers(1, 5))
        skew = float(rng.uniform(0.003, 0.035)) if trial % 4 == 3 else None
        inst = _skewed_instance(rng, k, m, skew)
        assert float(np.max(inst.costs)) <= 1e-3 * inst.scale
        air_min = min(air_min, price_of_anarchy(inst, "air"))
        asp_min = min(asp_min, price_of_anarchy(inst, "asp"))
        j0 = int(np.argmin(inst.costs))
        if float(inst.aggregate_weights[j0]) < 0.04:
            collapse_hits += 1
            collapse_max = max(collapse_max, price_of_anarchy(inst, None))
    elapsed = time.perf_counter() - start
    ok = (air_min >= 0.25 - 0.02 and asp_min >= 0.50 - 0.02
          and collapse_hits >= 30 and collapse_max < 0.05 and elapsed < 600.0)
    _report(7, ok, elapsed=elapsed)
    assert air_min >= 0.25 - 0.02
    assert asp_min >= 0.50 - 0.02
    assert collapse_hits >= 30
    assert collapse_max < 0.05
    assert elapsed < 600.0


# ---------------------------------------------------------------------------
# criterion 8: closed-form upper bound dominates the grid optimum

def test_criterion_08_upper_bound_dominates():
    start = time.perf_counter()
    rng = np.random.default_rng(108)
    for _ in range(100):
        inst = per_path_instance(rng, k=6, m=int(rng.integers(1, 7)),
                                 max_cost=float(rng.uniform(20.0, 100.0)))
        ub = welfare_upper_bound(inst).ub
        opt = social_optimum_grid(inst, 0.05)
        assert ub >= opt.sw_star
    elapsed = time.perf_counter() - start
    _report(8, elapsed < 300.0, elapsed=elapsed)
    assert elapsed < 300.0


# ---------------------------------------------------------------------------
# criterion 9: heatmap bands and per-cell ordering (red: honest equilibrium
# ratios sit above the reference band for the restriction mechanism, which
# also beats the side-payment mechanism in most cells)

@pytest.fixture(scope="module")
def heatmap():
    start = time.perf_counter()
    config = benchmark_sweep_config(instances_per_cell=20)
    result = run_sweep(config, mechanisms=("air", "asp"), threads=1)
    return result, time.perf_counter() - start


def test_criterion_09_heatmap_bands(heatmap):
    result, elapsed = heatmap
    air = {(c.max_weight, c.max_cost): c.ratio_mean
           for c in result.cells if c.mechanism == "AIR"}
    asp = {(c.max_weight, c.max_cost): c.ratio_mean
           for c in result.cells if c.mechanism == "ASP"}
    assert len(air) == len(asp) == 100
    assert all(c.n >= 20 for c in result.cells)
    air_ok = all(0.24 <= v <= 0.49 for v in air.values())
    asp_ok = all(0.55 <= v <= 0.87 for v in asp.values())
    order_ok = all(asp[key] >= air[key] for key in air)
    ok = air_ok and asp_ok and order_ok and elapsed < 1800.0
    _report(9, ok, expected_red=True, elapsed=elapsed)
    assert elapsed < 1800.0
    assert asp_ok, "side-payment cell means left their band"
    assert air_ok, (
        f"restriction cell means span [{min(air.values()):.3f}, "
        f"{max(air.values()):.3f}], outside [0.24, 0.49]")
    assert order_ok, "ordering between the mechanisms flips in some cells"


def test_criterion_09_counterpart_asp_band(heatmap):
    result, _ = heatmap
    means = [c.ratio_mean for c in result.cells if c.mechanism == "ASP"]
    assert len(means) == 100
    assert all(0.55 <= v <= 0.87 for v in means)
    _report("9 counterpart (side-payment band)", True)


# ---------------------------------------------------------------------------
# criterion 10: gains over the no-incentive baseline at the weight extremes
# (red: at min-cost weight 1/6 even the optimum cannot double the baseline
# on these instances, so no equilibrium mechanism reaches a 2x mean)

@pytest.fixture(scope="module")
def baseline_comparison():
    start = time.perf_counter()
    config = benchmark_sweep_config(instances_per_cell=20)
    result = compare_no_incentive(config, weight_grid=(1.0 / 6.0, 0.75))
    return result, time.perf_counter() - start


def _comparison_means(result):
    means = {}
    for cell in result.cells:
        means[(round(cell.min_cost_weight, 6), cell.mechanism)] = cell.ratio_mean
    low, high = round(1.0 / 6.0, 6), 0.75
    return low, high, means


def test_criterion_10_baseline_gains(baseline_comparison):
    result, elapsed = baseline_comparison
    low, high, means = _comparison_means(result)
    low_ok = all(means[(low, mech)] > 2.0 for mech in ("AIR", "ASP"))
    high_ok = all(means[(high, mech)] < 1.5 for mech in ("AIR", "ASP"))
    ok = low_ok and high_ok and elapsed < 300.0
    _report(10, ok, expected_red=True, elapsed=elapsed)
    assert elapsed < 300.0
    assert high_ok, "ratios at the dominant weight do not fall below 1.5x"
    assert low_ok, (
        f"means at weight 1/6 are {means[(low, 'AIR')]:.3f} (AIR) and "
        f"{means[(low, 'ASP')]:.3f} (ASP), not above 2x")


def test_criterion_10_counterpart_gain_trend(baseline_comparison):
    result, _ = baseline_comparison
    low, high, means = _comparison_means(result)
    for mech in ("AIR", "ASP"):
        assert means[(low, mech)] >= 1.1    # beats the baseline where it matters
        assert means[(high, mech)] < 1.5    # converges toward it when dominant
        assert means[(low, mech)] > means[(high, mech)]
    _report("10 counterpart (gain trend)", True)


# ---------------------------------------------------------------------------
# criterion 11: byte-identical sweep output, serial vs threaded

def test_criterion_11_determinism():
    start = time.perf_counter()
    config = SweepConfig(weight_grid=(0.3, 0.5, 0.75),
                         cost_grid=(10.0, 60.0, 100.0),
                         instances_per_cell=3, seed=20240801, k=6, m=6,
                         population=2000, poi_counts=CORRIDOR_POI_COUNTS)
    serial = run_sweep(config, threads=1).to_csv()
    again = run_sweep(config, threads=1).to_csv()
    threaded = run_sweep(config, threads=4).to_csv()
    elapsed = time.perf_counter() - start
    ok = serial == again and serial.encode() == threaded.encode()
    _report(11, ok and elapsed < 300.0, elapsed=elapsed)
    assert ok
    assert elapsed < 300.0
