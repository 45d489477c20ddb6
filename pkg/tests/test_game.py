"""Model-layer tests: value curves, welfare identities, parsing, validation."""

import numpy as np
import pytest

from poishare import (
    GameInstance,
    InstanceFormatError,
    PathSpec,
    UserType,
    UtilityModel,
    flow_of,
    log_value_fn,
    parse_instance,
    payoff_matrix,
    saturating_value_fn,
    social_welfare,
    social_welfare_per_type,
    type_utility,
    utility_weight,
    validate_assignment,
    validate_flow,
    welfare_batch,
)
from helpers import common_instance, per_path_instance, two_path_instance


def test_saturating_curve_closed_form():
    u = saturating_value_fn(3875, 2000)
    xs = np.linspace(0.0, 1.0, 101)
    direct = 3875.0 * (1.0 - (1.0 - 1.0 / 3875.0) ** (2000.0 * xs))
    assert np.allclose(u(xs), direct, rtol=0, atol=1e-9)
    assert u(np.array(0.0)) == 0.0
    # full load stays below the stock
    assert u(np.array(1.0)) < 3875.0


def test_saturating_curve_shape():
    rng = np.random.default_rng(7)
    for _ in range(20):
        n = float(rng.uniform(2.0, 5000.0))
        pop = int(rng.integers(10, 4000))
        u = saturating_value_fn(n, pop)
        ys = u(np.linspace(0.0, 1.0, 400))
        assert abs(ys[0]) < 1e-12
        assert np.all(np.diff(ys) >= -1e-12)
        assert np.max(np.diff(ys, 2)) <= 1e-9


def test_value_fn_validation():
    with pytest.raises(ValueError):
        saturating_value_fn(0.5, 2000)
    with pytest.raises(ValueError):
        saturating_value_fn(100, 0)
    with pytest.raises(ValueError):
        log_value_fn(curvature=-1.0)
    # a non-concave curve is rejected by the model wrapper
    with pytest.raises(ValueError):
        UtilityModel(mode="common", common=lambda x: np.asarray(x) ** 2)
    with pytest.raises(ValueError):
        UtilityModel(mode="common", common=lambda x: np.asarray(x) + 1.0)


def test_two_path_exchange_identity():
    # U_i(x, 1-x) + U_i(1-x, x) == U(x) + U(1-x) for every weight split,
    # and the half-half point is a fixed point of the exchange.
    rng = np.random.default_rng(3)
    xs = np.linspace(0.0, 1.0, 1000)
    for _ in range(25):
        inst = two_path_instance(rng)
        u = inst.utility.common
        w = inst.weight_matrix[0]
        left = w[0] * u(xs) + w[1] * u(1.0 - xs)
        right = w[0] * u(1.0 - xs) + w[1] * u(xs)
        assert np.max(np.abs(left + right - (u(xs) + u(1.0 - xs)))) < 1e-9
        half = type_utility(inst, 0, np.array([0.5, 0.5]))
        assert abs(half - float(u(np.array(0.5)))) < 1e-9


def test_two_path_utility_monotone_toward_heavier_path():
    # with w0 > 1/2 the type utility rises on [0, 1/2]; with w0 <= 1/2 it
    # falls on [1/2, 1]
    rng = np.random.default_rng(11)
    lo = np.linspace(0.0, 0.5, 500)
    hi = np.linspace(0.5, 1.0, 500)
    for _ in range(40):
        inst = two_path_instance(rng)
        w0 = inst.weight_matrix[0, 0]
        u = inst.utility.common
        f = lambda x: w0 * u(x) + (1.0 - w0) * u(1.0 - x)
        if w0 > 0.5:
            assert np.min(np.diff(f(lo))) > -1e-9
        else:
            assert np.max(np.diff(f(hi))) < 1e-9


def test_utility_weights_sum_to_one():
    rng = np.random.default_rng(5)
    for _ in range(50):
        k = int(rng.integers(2, 7))
        m = int(rng.integers(1, 7))
        inst = common_instance(rng, k=k, m=m)
        total = sum(utility_weight(inst, j) for j in range(k))
        assert abs(total - 1.0) < 1e-12
        assert abs(inst.aggregate_weights.sum() - 1.0) < 1e-12


def test_welfare_definitions_agree():
    # per-path aggregation and per-type aggregation of the same welfare
    rng = np.random.default_rng(2024)
    for t in range(1000):
        k = int(rng.integers(2, 6))
        m = int(rng.integers(1, 5))
        if t % 2 == 0:
            inst = common_instance(rng, k=k, m=m)
        else:
            counts = rng.integers(50, 5000, size=k)
            inst = per_path_instance(rng, k=k, m=m, counts=counts, max_cost=10.0)
        x = rng.dirichlet(np.ones(k))
        a = social_welfare(inst, x)
        b = social_welfare_per_type(inst, x)
        assert abs(a - b) < 1e-9
        assert abs(welfare_batch(inst, x[None, :])[0] - a) < 1e-9


def test_cost_normalization_records_shift():
    paths = (PathSpec(0, 13.0), PathSpec(1, 4.5), PathSpec(2, 9.0))
    types = (UserType(0, 1.0, (0.2, 0.3, 0.5)),)
    utility = UtilityModel(mode="common", common=saturating_value_fn(100, 500))
    inst = GameInstance(paths, types, utility)
    assert inst.cost_shift == 4.5
    assert np.allclose(inst.costs, [8.5, 0.0, 4.5])
    assert inst.costs.min() == 0.0


def test_payoff_matrix_is_utility_minus_cost():
    rng = np.random.default_rng(13)
    for _ in range(20):
        inst = common_instance(rng, k=4, m=3)
        x = rng.dirichlet(np.ones(4))
        pay = payoff_matrix(inst, x)
        vals = inst.utility.path_values(x)
        for i in range(3):
            ui = float(inst.weight_matrix[i] @ vals)
            assert np.allclose(pay[i], ui - inst.costs, atol=1e-12)


def test_replace_paths_permutes_everything():
    rng = np.random.default_rng(29)
    inst = per_path_instance(rng, k=4, m=3, max_cost=5.0)
    order = [2, 0, 3, 1]
    new_costs = [7.0, 3.0, 1.0, 0.0]
    out = inst.replace_paths(order, new_costs)
    assert np.allclose(out.costs, np.asarray(new_costs) - min(new_costs))
    assert np.allclose(out.weight_matrix, inst.weight_matrix[:, order])
    assert out.utility.poi_counts == tuple(inst.utility.poi_counts[j] for j in order)
    # welfare of a permuted flow matches the original flow's welfare when
    # costs are carried along
    x = rng.dirichlet(np.ones(4))
    carried = inst.replace_paths(order, [inst.costs[j] for j in order])
    assert abs(social_welfare(carried, x[order]) - social_welfare(inst, x)) < 1e-9


def test_flow_and_assignment_validation():
    rng = np.random.default_rng(31)
    inst = common_instance(rng, k=3, m=2)
    with pytest.raises(ValueError):
        validate_flow(inst, [0.5, 0.5])  # wrong length
    with pytest.raises(ValueError):
        validate_flow(inst, [0.7, 0.7, -0.4])  # negative mass
    with pytest.raises(ValueError):
        validate_flow(inst, [0.5, 0.4, 0.2])  # sums above 1
    y = np.zeros((2, 3))
    y[:, 0] = inst.proportions
    assert np.allclose(flow_of(validate_assignment(inst, y)), [1.0, 0.0, 0.0])
    bad = y.copy()
    bad[0, 0] *= 0.5
    with pytest.raises(ValueError):
        validate_assignment(inst, bad)  # row mass != type proportion


def test_instance_construction_validation():
    utility = UtilityModel(mode="common", common=saturating_value_fn(100, 500))
    with pytest.raises(ValueError):
        GameInstance((PathSpec(0, 1.0),), (UserType(0, 1.0, (1.0,)),), utility)
    with pytest.raises(ValueError):
        GameInstance(
            (PathSpec(0, 1.0), PathSpec(1, 0.0)),
            (UserType(0, 0.6, (0.5, 0.5)), UserType(1, 0.3, (0.5, 0.5))),
            utility,
        )
    with pytest.raises(ValueError):
        UserType(0, 1.0, (0.7, 0.7))
    per_path = UtilityModel(mode="per-path", poi_counts=(10, 20, 30), population=100)
    with pytest.raises(ValueError):
        GameInstance((PathSpec(0, 1.0), PathSpec(1, 0.0)),
                     (UserType(0, 1.0, (0.5, 0.5)),), per_path)


INSTANCE_TEXT = """\
# two paths, two types
[paths]
1 12.5 3875
2 0.0  2116

[types]
0.6  0.25 0.75
0.4  0.5  0.5

[utility]
mode = per-path
M = 2000
"""


def test_parse_instance_round_trip():
    inst = parse_instance(INSTANCE_TEXT)
    assert inst.num_paths == 2 and inst.num_types == 2
    assert np.allclose(inst.costs, [12.5, 0.0])
    assert inst.utility.poi_counts == (3875, 2116)
    assert inst.utility.population == 2000
    assert np.allclose(inst.proportions, [0.6, 0.4])
    assert np.allclose(inst.weight_matrix, [[0.25, 0.75], [0.5, 0.5]])


def test_parse_instance_common_mode_defaults():
    text = "[paths]\n1 0.2\n2 0\n[types]\n1.0 0.5 0.5\n[utility]\nmode = common\nM = 300\n"
    inst = parse_instance(text)
    assert inst.utility.mode == "common"
    # default pseudo stock n = 1000
    assert abs(inst.scale - 1000.0 * (1.0 - (1.0 - 1e-3) ** 300)) < 1e-9


def test_parse_instance_errors_carry_line_numbers():
    with pytest.raises(InstanceFormatError) as exc:
        parse_instance("[roads]\n1 0.0\n")
    assert exc.value.line == 1

    bad_weights = INSTANCE_TEXT.replace("0.4  0.5  0.5", "0.4  0.5")
    with pytest.raises(InstanceFormatError) as exc:
        parse_instance(bad_weights)
    assert exc.value.line == 8 and exc.value.field_name == "types"

    with pytest.raises(InstanceFormatError) as exc:
        parse_instance(INSTANCE_TEXT.replace("12.5", "twelve"))
    assert exc.value.field_name == "cost"

    with pytest.raises(InstanceFormatError):
        parse_instance(INSTANCE_TEXT.replace("M = 2000", ""))
    with pytest.raises(InstanceFormatError):
        parse_instance("1 0.0\n[paths]\n")  # content before any section


def test_parse_instance_per_path_needs_capacities():
    text = INSTANCE_TEXT.replace("2 0.0  2116", "2 0.0")
    with pytest.raises(InstanceFormatError):
        parse_instance(text)


def test_instances_are_immutable():
    rng = np.random.default_rng(1)
    inst = common_instance(rng, k=3, m=2)
    with pytest.raises(ValueError):
        inst.costs[0] = 5.0
    with pytest.raises(ValueError):
        inst.weight_matrix[0, 0] = 1.0
