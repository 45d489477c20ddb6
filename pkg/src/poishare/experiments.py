"""Dataset ingestion, seeded instance sampling, and benchmark sweeps.

Ties the geometry helpers to the game model: place-of-interest records are
snapped onto named corridors to produce per-path counts, seeded random
instances are drawn with an exact maximum-utility-weight knob, and the
heatmap/no-incentive comparisons run as deterministic, parallelizable
sweeps with byte-identical CSV output for a fixed seed and config.
"""

from __future__ import annotations

import csv
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .air import matryoshka_fractions, air_equilibrium_welfare
from .asp import asp_equilibrium, mechanism_schedule
from .equilibrium import no_incentive_equilibrium
from .evaluation import welfare_upper_bound
from .game import GameInstance, PathSpec, UserType, UtilityModel, flow_of, social_welfare
from .geo import point_polyline_distance_m

CORRIDOR_POI_COUNTS = (3875, 3426, 2933, 2116, 3258, 2116)

DATA_DIR_ENV = "POISHARE_DATA_DIR"


# ---------------------------------------------------------------------------
# record and corridor types

@dataclass(frozen=True)
class PoIRecord:
    id: str
    latitude: float
    longitude: float

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude {self.latitude} out of range")
        if not -180.0 <= self.longitude <= 180.0:
            raise ValueError(f"longitude {self.longitude} out of range")


@dataclass(frozen=True)
class Corridor:
    name: str
    polyline: tuple   # ((lat, lon), ...)

    def __post_init__(self):
        pts = tuple((float(a), float(b)) for a, b in self.polyline)
        if len(pts) < 2:
            raise ValueError("a corridor needs at least two waypoints")
        for p, q in zip(pts[:-1], pts[1:]):
            if p == q:
                raise ValueError("consecutive corridor waypoints must differ")
        object.__setattr__(self, "polyline", pts)


@dataclass(frozen=True)
class IngestReport:
    records: tuple          # PoIRecord strictly inside the box
    parsed: int             # rows with usable id/lat/lon
    malformed: int
    scanned: int            # data rows seen (header excluded)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)


def _parse_columns(spec: str) -> dict:
    """Column mapping like "id=0,lat=2,lon=3"; names instead of indices
    mean the file's first row is a header."""

    out = {}
    for part in spec.split(","):
        key, _, value = part.partition("=")
        key = key.strip().lower()
        value = value.strip()
        if key not in ("id", "lat", "lon") or not value:
            raise ValueError(f"bad column spec component {part!r}")
        out[key] = int(value) if value.lstrip("+-").isdigit() else value
    missing = {"id", "lat", "lon"} - set(out)
    if missing:
        raise ValueError(f"column spec is missing {sorted(missing)}")
    return out


def ingest_poi_csv(path, bounding_box, columns: str = "id=0,lat=1,lon=2",
                   delimiter: str = ",") -> IngestReport:
    """Read point-of-interest rows, keeping those strictly inside the box.

    bounding_box is (lat_min, lat_max, lon_min, lon_max). Malformed rows
    (short, unparsable, out-of-range coordinates) are counted, not fatal;
    a file with zero parsable rows raises.
    """

    lat_min, lat_max, lon_min, lon_max = map(float, bounding_box)
    if lat_min >= lat_max or lon_min >= lon_max:
        raise ValueError("bounding box must have positive extent")
    colmap = _parse_columns(columns)
    needs_header = any(isinstance(v, str) for v in colmap.values())

    records = []
    parsed = malformed = scanned = 0
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle, delimiter=delimiter)
        if needs_header:
            header = next(reader, None)
            if header is None:
                raise ValueError("empty file where a header row was expected")
            lookup = {name.strip(): i for i, name in enumerate(header)}
            try:
                colmap = {k: (v if isinstance(v, int) else lookup[v])
                          for k, v in colmap.items()}
            except KeyError as exc:
                raise ValueError(f"header column {exc.args[0]!r} not found") from None
        for row in reader:
            if not row or all(not cell.strip() for cell in row):
                continue
            scanned += 1
            try:
                rec = PoIRecord(id=row[colmap["id"]].strip(),
                                latitude=float(row[colmap["lat"]]),
                                longitude=float(row[colmap["lon"]]))
            except (IndexError, ValueError):
                malformed += 1
                continue
            parsed += 1
            if lat_min < rec.latitude < lat_max and lon_min < rec.longitude < lon_max:
                records.append(rec)
    if parsed == 0:
        raise ValueError(f"no parsable rows in {path}")
    return IngestReport(records=tuple(records), parsed=parsed,
                        malformed=malformed, scanned=scanned)


@dataclass(frozen=True)
class CorridorCounts:
    counts: np.ndarray      # per-corridor assigned PoIs
    unassigned: int
    max_snap_m: float


def assign_pois_to_corridors(records, corridors, max_snap_m: float = 250.0,
                             ) -> CorridorCounts:
    """Snap each record to the nearest corridor polyline within max_snap_m.

    Ties go to the lower corridor index; records farther than the snap
    radius from every corridor are counted as unassigned.
    """

    corridors = list(corridors)
    if not corridors:
        raise ValueError("need at least one corridor")
    if max_snap_m <= 0:
        raise ValueError("max_snap_m must be positive")
    counts = np.zeros(len(corridors), dtype=int)
    records = list(records)
    if not records:
        return CorridorCounts(counts=counts, unassigned=0, max_snap_m=max_snap_m)
    lats = np.array([r.latitude for r in records])
    lons = np.array([r.longitude for r in records])
    dists = np.column_stack([
        point_polyline_distance_m(lats, lons, c.polyline) for c in corridors])
    nearest = np.argmin(dists, axis=1)              # first occurrence on ties
    within = dists[np.arange(len(records)), nearest] <= max_snap_m
    for j in nearest[within]:
        counts[j] += 1
    return CorridorCounts(counts=counts, unassigned=int((~within).sum()),
                          max_snap_m=max_snap_m)


def load_corridors():
    """Packaged corridor geometry: (corridors, region metadata dict).

    The metadata carries the bounding box, the population size, and the
    published per-corridor counts the reconstructed polylines target.
    """

    raw = resources.files("poishare").joinpath("data/corridors_la.json").read_text()
    payload = json.loads(raw)
    corridors = [Corridor(name=c["name"], polyline=tuple(map(tuple, c["polyline"])))
                 for c in payload["corridors"]]
    region = payload["region"]
    meta = {
        "region": region["name"],
        "bounding_box": (region["lat_min"], region["lat_max"],
                         region["lon_min"], region["lon_max"]),
        "origin": region["origin"],
        "destination": region["destination"],
        "population": payload["population"],
        "poi_counts": tuple(c["poi_count"] for c in payload["corridors"]),
    }
    return corridors, meta


def dataset_dir() -> Path | None:
    """Directory with the raw PoI dataset, if configured in the environment."""

    value = os.environ.get(DATA_DIR_ENV)
    return Path(value) if value else None


# ---------------------------------------------------------------------------
# seeded instance sampling

def _retarget_column(eta, weights, column, target, tol=1e-9, max_rounds=200_000):
    """Rescale-then-renormalize until the column's utility weight hits target."""

    w = weights.copy()
    for _ in range(max_rounds):
        u = eta @ w
        j = int(np.argmax(u)) if column is None else column
        cur = float(u[j])
        if abs(cur - target) <= tol:
            return w
        w[:, j] *= target / cur
        w /= w.sum(axis=1, keepdims=True)
    raise RuntimeError(f"weight targeting did not reach {target} within {tol}")


def sample_instance(seed, k: int = 4, m: int = 4,
                    target_max_weight: float | None = None,
                    max_cost: float = 1.0, poi_counts=None,
                    population: int = 2000, weight_column=None,
                    count_range=(2000, 4000)) -> GameInstance:
    """Random instance: uniform-normalized type mix and weights, uniform costs.

    target_max_weight pins the largest utility weight exactly (residual
    1e-9) via iterative column rescaling; weight_column retargets a specific
    column instead ("min_cost" means the cheapest path's column). Per-path
    counts come from poi_counts or are drawn from count_range.
    """

    rng = np.random.default_rng(seed)
    eta = rng.uniform(size=m)
    eta = eta / eta.sum()
    weights = rng.uniform(size=(m, k))
    weights = weights / weights.sum(axis=1, keepdims=True)
    costs = rng.uniform(0.0, max_cost, size=k)
    if poi_counts is None:
        counts = rng.integers(count_range[0], count_range[1] + 1, size=k)
    else:
        counts = np.asarray(poi_counts)
        if counts.shape != (k,):
            raise ValueError(f"poi_counts must have length k={k}")

    if target_max_weight is not None:
        column = None
        if weight_column == "min_cost":
            column = int(np.argmin(costs))
        elif weight_column is not None:
            column = int(weight_column)
        if column is None and not 1.0 / k <= target_max_weight < 1.0:
            raise ValueError(f"target max weight {target_max_weight} not in [1/k, 1)")
        if column is not None and not 0.0 < target_max_weight < 1.0:
            raise ValueError(f"target column weight {target_max_weight} not in (0, 1)")
        weights = _retarget_column(eta, weights, column, float(target_max_weight))

    utility = UtilityModel(mode="per-path", poi_counts=tuple(int(n) for n in counts),
                           population=population)
    paths = [PathSpec(index=j, cost=float(costs[j]), poi_capacity=int(counts[j]))
             for j in range(k)]
    types = [UserType(index=i, proportion=float(eta[i]), weights=tuple(weights[i]))
             for i in range(m)]
    return GameInstance(paths=tuple(paths), types=tuple(types), utility=utility)


# ---------------------------------------------------------------------------
# sweep configuration

@dataclass(frozen=True)
class SweepConfig:
    weight_grid: tuple
    cost_grid: tuple
    instances_per_cell: int
    seed: int
    k: int = 6
    m: int = 6
    population: int = 2000
    poi_counts: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "weight_grid",
                           tuple(float(w) for w in self.weight_grid))
        object.__setattr__(self, "cost_grid",
                           tuple(float(c) for c in self.cost_grid))
        if self.poi_counts is not None:
            object.__setattr__(self, "poi_counts",
                               tuple(int(n) for n in self.poi_counts))
            if len(self.poi_counts) != self.k:
                raise ValueError("poi_counts length must equal k")
        if not self.weight_grid or not self.cost_grid:
            raise ValueError("weight and cost grids must be non-empty")
        if self.instances_per_cell < 1:
            raise ValueError("instances_per_cell must be at least 1")

    def to_json(self) -> str:
        payload = {
            "weight_grid": list(self.weight_grid),
            "cost_grid": list(self.cost_grid),
            "instances_per_cell": self.instances_per_cell,
            "seed": self.seed, "k": self.k, "m": self.m,
            "population": self.population,
            "poi_counts": list(self.poi_counts) if self.poi_counts else None,
        }
        return json.dumps(payload, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SweepConfig":
        payload = json.loads(text)
        return cls(**payload)

    def save(self, path):
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "SweepConfig":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def benchmark_sweep_config(instances_per_cell: int = 20,
                       seed: int = 20240801) -> SweepConfig:
    """The published heatmap protocol: 10x10 grid over max weight and cost."""

    return SweepConfig(
        weight_grid=tuple(np.linspace(0.30, 0.75, 10)),
        cost_grid=tuple(np.linspace(10.0, 100.0, 10)),
        instances_per_cell=instances_per_cell, seed=seed,
        k=6, m=6, population=2000, poi_counts=CORRIDOR_POI_COUNTS,
    )


# ---------------------------------------------------------------------------
# the sweep itself

_MECH_NAMES = {"air": "AIR", "asp": "ASP", "none": "none"}

SWEEP_CSV_COLUMNS = ("max_weight", "max_cost", "mechanism",
                     "ratio_mean", "ratio_min", "ratio_max", "n", "converged")

COMPARE_CSV_COLUMNS = ("min_cost_weight", "mechanism",
                       "ratio_mean", "ratio_min", "ratio_max", "n")


@dataclass(frozen=True)
class SweepCell:
    max_weight: float
    max_cost: float
    mechanism: str          # display name: AIR | ASP | none
    ratio_mean: float
    ratio_min: float
    ratio_max: float
    n: int
    converged: int          # instances whose solver converged
    wall_ms: float = field(compare=False, default=0.0)


@dataclass(frozen=True)
class SweepResult:
    cells: tuple
    seed: int
    config: SweepConfig

    def to_csv(self) -> str:
        lines = [",".join(SWEEP_CSV_COLUMNS)]
        for cell in self.cells:
            lines.append(",".join((
                format(cell.max_weight, ".12g"), format(cell.max_cost, ".12g"),
                cell.mechanism, format(cell.ratio_mean, ".12g"),
                format(cell.ratio_min, ".12g"), format(cell.ratio_max, ".12g"),
                str(cell.n), str(cell.converged))))
        return "\n".join(lines) + "\n"

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(self.to_csv())


def _normalize_mechanisms(mechanisms):
    if isinstance(mechanisms, str):
        mechanisms = (mechanisms,)
    mechs = []
    for mech in mechanisms:
        mech = mech.lower()
        if mech == "all":
            mechs.extend(("none", "air", "asp"))
        elif mech in _MECH_NAMES:
            mechs.append(mech)
        else:
            raise ValueError(f"unknown mechanism {mech!r}")
    # dedupe, keep first occurrence
    seen = []
    for mech in mechs:
        if mech not in seen:
            seen.append(mech)
    return tuple(seen)


def _cell_key(value: float) -> int:
    # cell RNG streams hang off grid values, not positions, so a sub-grid
    # run reproduces the same cells
    return int(round(value * 1e9))


def _instance_ratios(config: SweepConfig, wt: float, ct: float, idx: int,
                     mechanisms, asp_thresholds: str, weight_column=None,
                     salt: int = 0):
    entropy = (config.seed, _cell_key(wt), _cell_key(ct), salt, idx)
    inst = sample_instance(np.random.SeedSequence(entropy), k=config.k,
                           m=config.m, target_max_weight=wt, max_cost=ct,
                           poi_counts=config.poi_counts,
                           population=config.population,
                           weight_column=weight_column)
    ub = welfare_upper_bound(inst).ub
    out = {}
    for mech in mechanisms:
        if mech == "none":
            y = no_incentive_equilibrium(inst)
            sw, ok = social_welfare(inst, flow_of(y)), True
        elif mech == "air":
            plan = matryoshka_fractions(inst)
            result, sw = air_equilibrium_welfare(inst, plan)
            ok = result.converged
        else:
            schedule, adjudicated = mechanism_schedule(inst, thresholds=asp_thresholds)
            report = asp_equilibrium(adjudicated, schedule)
            sw, ok = report.representative.welfare, report.representative.converged
        out[mech] = (sw, sw / ub, ok)
    return out


def _sweep_cell(config: SweepConfig, wt: float, ct: float, mechanisms,
                asp_thresholds: str):
    start = time.perf_counter()
    ratios = {mech: [] for mech in mechanisms}
    converged = dict.fromkeys(mechanisms, 0)
    for idx in range(config.instances_per_cell):
        per = _instance_ratios(config, wt, ct, idx, mechanisms, asp_thresholds)
        for mech, (_, ratio, ok) in per.items():
            ratios[mech].append(ratio)
            converged[mech] += bool(ok)
    wall = (time.perf_counter() - start) * 1e3
    cells = []
    for mech in mechanisms:
        r = np.asarray(ratios[mech])
        cells.append(SweepCell(
            max_weight=wt, max_cost=ct, mechanism=_MECH_NAMES[mech],
            ratio_mean=float(r.mean()), ratio_min=float(r.min()),
            ratio_max=float(r.max()), n=r.size, converged=converged[mech],
            wall_ms=wall / len(mechanisms)))
    return cells


def run_sweep(config: SweepConfig, mechanisms=("none", "air", "asp"),
              threads: int = 1, asp_thresholds: str = "theorem2") -> SweepResult:
    """Mean welfare/upper-bound ratio per (max weight, max cost, mechanism).

    Instances within a cell are shared across mechanisms. Per-cell RNG
    streams derive from (seed, cell values), so serial and threaded runs
    produce identical rows; output is sorted by cell key then mechanism.
    """

    mechs = _normalize_mechanisms(mechanisms)
    tasks = [(wt, ct) for wt in config.weight_grid for ct in config.cost_grid]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_sweep_cell, config, wt, ct, mechs,
                                   asp_thresholds) for wt, ct in tasks]
            chunks = [f.result() for f in futures]
    else:
        chunks = [_sweep_cell(config, wt, ct, mechs, asp_thresholds)
                  for wt, ct in tasks]
    cells = [cell for chunk in chunks for cell in chunk]
    cells.sort(key=lambda c: (c.max_weight, c.max_cost, c.mechanism))
    return SweepResult(cells=tuple(cells), seed=config.seed, config=config)


# ---------------------------------------------------------------------------
# no-incentive comparison

@dataclass(frozen=True)
class CompareCell:
    min_cost_weight: float
    mechanism: str          # AIR | ASP
    ratio_mean: float       # mechanism welfare / no-incentive welfare
    ratio_min: float
    ratio_max: float
    n: int


@dataclass(frozen=True)
class CompareResult:
    cells: tuple
    seed: int
    max_cost: float

    def to_csv(self) -> str:
        lines = [",".join(COMPARE_CSV_COLUMNS)]
        for cell in self.cells:
            lines.append(",".join((
                format(cell.min_cost_weight, ".12g"), cell.mechanism,
                format(cell.ratio_mean, ".12g"), format(cell.ratio_min, ".12g"),
                format(cell.ratio_max, ".12g"), str(cell.n))))
        return "\n".join(lines) + "\n"

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(self.to_csv())


def compare_no_incentive(config: SweepConfig, weight_grid=None,
                         asp_thresholds: str = "theorem2") -> CompareResult:
    """Mechanism welfare over the pooled no-incentive welfare.

    Sweeps the cheapest path's utility weight (instead of the max weight);
    costs sit at the middle of the config's cost grid. Gains should shrink
    toward 1 as the cheapest path's weight approaches dominance.
    """

    if weight_grid is None:
        weight_grid = np.linspace(1.0 / 6.0, 0.75, 8)
    weight_grid = [float(w) for w in weight_grid]
    for wt in weight_grid:
        if not 1.0 / config.k <= wt < 1.0:
            raise ValueError(f"weight {wt} outside [1/k, 1)")
    max_cost = config.cost_grid[len(config.cost_grid) // 2]
    cells = []
    for wt in weight_grid:
        gains = {"air": [], "asp": []}
        for idx in range(config.instances_per_cell):
            per = _instance_ratios(config, wt, max_cost, idx,
                                   ("none", "air", "asp"), asp_thresholds,
                                   weight_column="min_cost", salt=7919)
            base = per["none"][0]
            for mech in ("air", "asp"):
                gains[mech].append(per[mech][0] / base)
        for mech in ("air", "asp"):
            g = np.asarray(gains[mech])
            cells.append(CompareCell(
                min_cost_weight=wt, mechanism=_MECH_NAMES[mech],
                ratio_mean=float(g.mean()), ratio_min=float(g.min()),
                ratio_max=float(g.max()), n=g.size))
    cells.sort(key=lambda c: (c.min_cost_weight, c.mechanism))
    return CompareResult(cells=tuple(cells), seed=config.seed,
                         max_cost=float(max_cost))
