"""Two paths, two types: why everyone pools, and how access fractions fix it.

Walks one small instance end to end: the no-incentive equilibrium, the
indifference curve whose roots locate the usable split, the access-fraction
plan built from those roots, and the welfare ladder from anarchy to optimum.
"""

import numpy as np

from poishare import (
    GameInstance,
    PathSpec,
    UserType,
    UtilityModel,
    air_equilibrium_welfare,
    no_incentive_equilibrium,
    saturating_value_fn,
    social_optimum_grid,
    social_welfare,
    solve_indifference,
    two_path_indifference,
    two_path_two_type_fractions,
)


def main():
    value = saturating_value_fn(1000.0, 2000)
    util = UtilityModel(mode="common", common=value)
    # one type prefers path 0's collection, the other path 1's
    types = (UserType(0, 0.55, (0.8, 0.2)),
             UserType(1, 0.45, (0.3, 0.7)))
    inst = GameInstance((PathSpec(0, 30.0), PathSpec(1, 0.0)), types, util)
    print(f"paths: costs {inst.costs}, value scale U(1) = {inst.scale:.2f}")

    y0 = no_incentive_equilibrium(inst)
    x0 = y0.sum(axis=0)
    sw0 = social_welfare(inst, x0)
    print(f"\nno incentive: flow {np.round(x0, 3)}, welfare {sw0:.2f}")
    print("  both types pool on the free path; payoff differences reduce to costs")

    fn = two_path_indifference(inst, type_index=0)
    x_bar, x_tilde = solve_indifference(fn, inst.costs[0])
    xm, gm = fn.peak()
    print(f"\nindifference curve for type 0: peak G({xm:.4f}) = {gm:.2f}")
    print(f"  roots at cost {inst.costs[0]}: x_bar = {x_bar}, x_tilde = {x_tilde:.4f}")

    plan = two_path_two_type_fractions(inst)
    result, sw_plan = air_equilibrium_welfare(inst, plan)
    gamma = plan.evaluate(result.flow)
    print(f"\naccess plan ({plan.kind}, {plan.branch}): fractions {np.round(gamma, 4)}")
    print(f"  equilibrium under plan: flow {np.round(result.flow, 4)}, "
          f"welfare {sw_plan:.2f} (converged={result.converged})")

    opt = social_optimum_grid(inst, 0.01)
    print(f"\ngrid optimum: flow {np.round(opt.argmax_flow, 3)}, welfare {opt.sw_star:.2f}")
    print(f"welfare ladder: anarchy {sw0 / opt.sw_star:.3f}  "
          f"-> plan {sw_plan / opt.sw_star:.3f}  -> optimum 1.000")


if __name__ == "__main__":
    main()
