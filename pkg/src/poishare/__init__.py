"""Routing games with shared collection value: mechanisms, equilibria, benchmarks."""

from .game import (
    ANALYTIC_TOL,
    GameInstance,
    InstanceFormatError,
    PathSpec,
    SOLVER_TOL,
    STRUCT_TOL,
    UserType,
    UtilityModel,
    flow_of,
    load_instance,
    log_value_fn,
    parse_instance,
    payoff_matrix,
    payoff_tensor,
    saturating_value_fn,
    social_welfare,
    social_welfare_per_type,
    type_payoff,
    type_utility,
    utility_weight,
    validate_assignment,
    validate_flow,
    welfare_batch,
)
from .equilibrium import (
    DeviationWitness,
    EnumeratedEquilibrium,
    EquilibriumResult,
    IndifferenceFunction,
    NoRootError,
    best_response_dynamics,
    count_simplex_points,
    enumerate_equilibria,
    equilibrium_gap,
    find_root_in_window,
    gap_lipschitz_estimate,
    is_equilibrium,
    no_incentive_equilibrium,
    simplex_grid,
    solve_indifference,
    two_path_indifference,
    worst_equilibrium_welfare,
)
from .air import (
    MatryoshkaRound,
    PenaltyFractionPlan,
    air_equilibrium_welfare,
    matryoshka_fractions,
    realized_welfare,
    two_path_single_type_fractions,
    two_path_two_type_fractions,
)
from .asp import (
    AspEquilibriumReport,
    BudgetLedger,
    ProblemTwoResult,
    SidePaymentSchedule,
    TwoPathAspProblem,
    asp_equilibrium,
    budget_ledger,
    equilibrium_family_flows,
    charge_dominance_strict,
    charge_dominance_supported,
    mechanism_schedule,
    problem_two_optimize,
    schedule_welfare,
    theorem2_thresholds,
    tier_one_net,
    tier_one_rearrange,
    two_path_closed_form_flow,
    two_path_optimal_tau,
    two_path_schedule,
    with_thresholds,
)
from .evaluation import (
    OptimumReport,
    UpperBoundReport,
    price_of_anarchy,
    social_optimum_grid,
    welfare_upper_bound,
)
from .geo import (
    haversine_m,
    point_polyline_distance_m,
    point_segment_distance_m,
)
from .experiments import (
    CompareResult,
    Corridor,
    CorridorCounts,
    IngestReport,
    CORRIDOR_POI_COUNTS,
    PoIRecord,
    SweepCell,
    SweepConfig,
    SweepResult,
    assign_pois_to_corridors,
    compare_no_incentive,
    dataset_dir,
    ingest_poi_csv,
    load_corridors,
    benchmark_sweep_config,
    run_sweep,
    sample_instance,
)

__version__ = "0.1.0"
