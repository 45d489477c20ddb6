"""Thin command-line front end over the library.

Subcommands: air (access-restriction plan + equilibrium), asp (side-payment
schedule + equilibrium family), eval (optimum / upper bound / anarchy
ratios), ingest (PoI records onto corridors), sweep (heatmap benchmark),
compare (mechanisms vs the no-incentive baseline).
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

import numpy as np

from . import air as _air
from . import asp as _asp
from .equilibrium import no_incentive_equilibrium
from .evaluation import social_optimum_grid, welfare_upper_bound, price_of_anarchy
from .experiments import (SweepConfig, assign_pois_to_corridors,
                          compare_no_incentive, ingest_poi_csv,
                          load_corridors, run_sweep)
from .game import InstanceFormatError, flow_of, load_instance, social_welfare


def _fmt_vec(x) -> str:
    return " ".join(format(float(v), ".6g") for v in np.atleast_1d(x))


def _cmd_air(args) -> int:
    instance = load_instance(args.instance)
    if args.plan == "two-path" or (args.plan == "auto" and instance.num_paths == 2
                                   and instance.num_types == 2):
        plan = _air.two_path_two_type_fractions(instance)
    else:
        plan = _air.matryoshka_fractions(instance)

    print(f"plan kind: {plan.kind} (k={instance.num_paths}, m={instance.num_types})")
    print(f"path order (by utility weight): {' '.join(map(str, plan.path_order))}")
    if plan.branch == "static":
        print(f"branch: static, fractions {_fmt_vec(plan.static_fractions)}")
    else:
        print(f"branch: {plan.branch}")
    for rnd in plan.rounds:
        print(f"  round {rnd.round_index}: low={list(rnd.low_group)} "
              f"high={list(rnd.high_group)} psi={rnd.chosen_psi} "
              f"case={rnd.case_taken} root={rnd.root_found}")

    result, welfare = _air.air_equilibrium_welfare(instance, plan,
                                                   max_iters=args.max_iters)
    gamma = plan.evaluate(result.flow)
    baseline = social_welfare(instance, flow_of(no_incentive_equilibrium(instance)))
    print(f"best-response: converged={result.converged} "
          f"iterations={result.iterations} eps={result.epsilon:.3g}")
    print(f"equilibrium flow: {_fmt_vec(result.flow)}")
    print(f"access fractions at equilibrium: {_fmt_vec(gamma)}")
    print(f"welfare (unrestricted): {welfare:.6g}")
    print(f"welfare (fraction-weighted): "
          f"{_air.realized_welfare(instance, plan, result.assignment):.6g}")
    print(f"no-incentive welfare: {baseline:.6g}")

    if args.csv:
        lines = ["path,cost,flow,access_fraction"]
        for j in range(instance.num_paths):
            lines.append(f"{j},{instance.costs[j]:.12g},"
                         f"{result.flow[j]:.12g},{gamma[j]:.12g}")
        with open(args.csv, "w", encoding="utf-8", newline="\n") as handle:
            handle.write("\n".join(lines) + "\n")
        print(f"wrote {args.csv}")
    return 0


def _cmd_asp(args) -> int:
    instance = load_instance(args.instance)
    schedule, adjudicated = _asp.mechanism_schedule(instance,
                                                    thresholds=args.thresholds)
    print(f"tier one (paths sorted by utility weight, costs reassigned):")
    print("  pos  orig_path  cost_before  cost_after  transfer")
    for pos, orig in enumerate(schedule.path_order):
        before = schedule.original_costs[pos]
        after = schedule.costs[pos]
        print(f"  {pos:>3}  {orig:>9}  {before:>11.6g}  {after:>10.6g}  "
              f"{schedule.tier1_transfers[pos]:>8.6g}")
    print(f"thresholds: theta={schedule.theta:.6g} tau={schedule.tau:.6g} "
          f"omega={schedule.omega}")

    report = _asp.asp_equilibrium(adjudicated, schedule)
    ledger = _asp.budget_ledger(schedule, report.representative.flow)
    opt = social_optimum_grid(instance)
    print(f"equilibrium family: {report.family_kind}, "
          f"{report.flows.shape[0]} members at step {report.grid_step:.3g}")
    print(f"representative flow: {_fmt_vec(report.representative.flow)}")
    print(f"representative welfare: {report.representative.welfare:.6g}")
    print(f"worst flow: {_fmt_vec(report.worst_flow)}")
    print(f"worst welfare: {report.worst_welfare:.6g}")
    print(f"pool at representative: {ledger.tier2_charged_total:.6g} charged, "
          f"{ledger.tier2_rewarded_total:.6g} rewarded, "
          f"{ledger.tier2_undistributed:.6g} undistributed")
    print(f"tier-one per-capita net: {ledger.tier1_per_capita_net:.6g}; "
          f"mass-weighted net: {ledger.tier1_mass_weighted_net:.6g}")
    print(f"grid optimum: {opt.sw_star:.6g}")
    print(f"welfare ratios: representative {report.representative.welfare / opt.sw_star:.4f}, "
          f"worst {report.worst_welfare / opt.sw_star:.4f}")

    if args.csv:
        lines = ["position,orig_path,cost_before,cost_after,transfer"]
        for pos, orig in enumerate(schedule.path_order):
            lines.append(f"{pos},{orig},{schedule.original_costs[pos]:.12g},"
                         f"{schedule.costs[pos]:.12g},"
                         f"{schedule.tier1_transfers[pos]:.12g}")
        with open(args.csv, "w", encoding="utf-8", newline="\n") as handle:
            handle.write("\n".join(lines) + "\n")
        print(f"wrote {args.csv}")
    return 0


def _cmd_eval(args) -> int:
    instance = load_instance(args.instance)
    opt = social_optimum_grid(instance, args.grid_step)
    print(f"grid optimum SW*: {opt.sw_star:.6g} "
          f"(step {opt.grid_step:.3g}, certified gap {opt.certified_gap:.3g})")
    print(f"optimal flow: {_fmt_vec(opt.argmax_flow)}")
    try:
        ub = welfare_upper_bound(instance)
        print(f"upper bound: {ub.ub:.6g} (N_max={ub.n_max}, "
              f"max weight {ub.max_weight:.4f})")
    except ValueError:
        print("upper bound: n/a (needs the per-path saturating utility)")

    rows = []
    mechanisms = (["none", "air", "asp"] if args.mechanism == "all"
                  else [args.mechanism])
    for mech in mechanisms:
        ratio = price_of_anarchy(instance, None if mech == "none" else mech,
                                 grid_step=args.grid_step)
        rows.append((mech, ratio))
        print(f"anarchy ratio [{mech}]: {ratio:.4f}")

    if args.csv:
        lines = ["mechanism,worst_over_optimum"]
        lines += [f"{mech},{ratio:.12g}" for mech, ratio in rows]
        with open(args.csv, "w", encoding="utf-8", newline="\n") as handle:
            handle.write("\n".join(lines) + "\n")
        print(f"wrote {args.csv}")
    return 0


def _cmd_ingest(args) -> int:
    bbox = tuple(float(v) for v in args.bbox.split(","))
    if len(bbox) != 4:
        raise ValueError("--bbox wants latmin,latmax,lonmin,lonmax")
    report = ingest_poi_csv(args.input, bbox, columns=args.columns,
                            delimiter=args.delimiter)
    print(f"rows scanned: {report.scanned}, parsed: {report.parsed}, "
          f"malformed: {report.malformed}")
    print(f"records inside box: {len(report)}")
    if args.assign:
        corridors, meta = load_corridors()
        counts = assign_pois_to_corridors(report.records, corridors,
                                          max_snap_m=args.snap_m)
        for corridor, n, published in zip(corridors, counts.counts,
                                          meta["poi_counts"]):
            print(f"  {corridor.name}: {n} (published {published})")
        print(f"  unassigned: {counts.unassigned}")
    return 0


def _cmd_sweep(args) -> int:
    config = SweepConfig.load(args.config)
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    result = run_sweep(config, mechanisms=args.mechanism,
                       threads=args.threads, asp_thresholds=args.thresholds)
    result.write_csv(args.out)
    print(f"wrote {len(result.cells)} rows to {args.out} (seed {result.seed})")
    return 0


def _cmd_compare(args) -> int:
    config = SweepConfig.load(args.config)
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    grid = None
    if args.weights:
        grid = [float(w) for w in args.weights.split(",")]
    result = compare_no_incentive(config, weight_grid=grid,
                                  asp_thresholds=args.thresholds)
    result.write_csv(args.out)
    print(f"wrote {len(result.cells)} rows to {args.out} "
          f"(max cost {result.max_cost:.6g})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="poishare",
        description="Parallel-path collection games with incentive mechanisms.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_air = sub.add_parser("air", help="access-restriction plan and equilibrium")
    p_air.add_argument("--instance", required=True)
    p_air.add_argument("--plan", choices=("auto", "two-path", "matryoshka"),
                       default="auto")
    p_air.add_argument("--max-iters", type=int, default=10000)
    p_air.add_argument("--csv", default=None, help="write per-path trace CSV")
    p_air.set_defaults(func=_cmd_air)

    p_asp = sub.add_parser("asp", help="side-payment schedule and equilibria")
    p_asp.add_argument("--instance", required=True)
    p_asp.add_argument("--thresholds", choices=("theorem2", "problem2"),
                       default="theorem2")
    p_asp.add_argument("--csv", default=None, help="write transfer table CSV")
    p_asp.set_defaults(func=_cmd_asp)

    p_eval = sub.add_parser("eval", help="optimum, upper bound, anarchy ratios")
    p_eval.add_argument("--instance", required=True)
    p_eval.add_argument("--mechanism", choices=("none", "air", "asp", "all"),
                        default="all")
    p_eval.add_argument("--grid-step", type=float, default=None)
    p_eval.add_argument("--csv", default=None)
    p_eval.set_defaults(func=_cmd_eval)

    p_ing = sub.add_parser("ingest", help="filter PoI records, snap to corridors")
    p_ing.add_argument("--input", required=True)
    p_ing.add_argument("--bbox", required=True,
                       help="latmin,latmax,lonmin,lonmax")
    p_ing.add_argument("--columns", default="id=0,lat=1,lon=2")
    p_ing.add_argument("--delimiter", default=",")
    p_ing.add_argument("--assign", action="store_true",
                       help="snap to the packaged corridors and print counts")
    p_ing.add_argument("--snap-m", type=float, default=250.0)
    p_ing.set_defaults(func=_cmd_ingest)

    p_sw = sub.add_parser("sweep", help="welfare-ratio heatmap benchmark")
    p_sw.add_argument("--config", required=True)
    p_sw.add_argument("--out", required=True)
    p_sw.add_argument("--seed", type=int, default=None,
                      help="override the config's seed")
    p_sw.add_argument("--mechanism", choices=("air", "asp", "none", "all"),
                      default="all")
    p_sw.add_argument("--threads", type=int, default=1)
    p_sw.add_argument("--thresholds", choices=("theorem2", "problem2"),
                      default="theorem2")
    p_sw.set_defaults(func=_cmd_sweep)

    p_cmp = sub.add_parser("compare", help="mechanisms vs no-incentive baseline")
    p_cmp.add_argument("--config", required=True)
    p_cmp.add_argument("--out", required=True)
    p_cmp.add_argument("--seed", type=int, default=None)
    p_cmp.add_argument("--weights", default=None,
                       help="comma-separated min-cost-path weights")
    p_cmp.add_argument("--thresholds", choices=("theorem2", "problem2"),
                       default="theorem2")
    p_cmp.set_defaults(func=_cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InstanceFormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
