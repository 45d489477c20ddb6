"""Data model for non-atomic routing games with shared collection value.

A unit mass of users splits across k parallel paths. The value collected on
a path grows concavely with the mass travelling it, every user enjoys the
aggregate collection regardless of her own path choice, and paths differ in
travel cost. User types differ in how they weight each path's collection.

All indices in function arguments are 0-based. ``PathSpec.index`` and
``UserType.index`` carry 1-based display labels used by the instance file
format.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

# Tolerance tiers used across the package.
STRUCT_TOL = 1e-12   # structural identities (mass sums, weight rows)
ANALYTIC_TOL = 1e-9  # closed-form identities
SOLVER_TOL = 1e-7    # iterative solvers

_VALIDATION_GRID = 1001


class InstanceFormatError(ValueError):
    """Raised when an instance file cannot be parsed.

    Carries the 1-based line number and the offending field when known.
    """

    def __init__(self, message, line=None, field_name=None):
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if field_name is not None:
            loc.append(f"field '{field_name}'")
        prefix = " (".join([", ".join(loc)]) if loc else ""
        super().__init__(f"{message}" + (f" [{', '.join(loc)}]" if loc else ""))
        self.line = line
        self.field_name = field_name


@dataclass(frozen=True)
class PathSpec:
    """One parallel path: display label, travel cost, optional collection stock."""

    index: int
    cost: float
    poi_capacity: int | None = None

    def __post_init__(self):
        if not math.isfinite(self.cost) or self.cost < 0:
            raise ValueError(f"path {self.index}: cost must be finite and >= 0, got {self.cost}")
        if self.poi_capacity is not None and self.poi_capacity < 1:
            raise ValueError(f"path {self.index}: poi_capacity must be a positive integer")


@dataclass(frozen=True)
class UserType:
    """A user type: its population share and per-path preference weights."""

    index: int
    proportion: float
    weights: tuple[float, ...]

    def __post_init__(self):
        if not (0.0 <= self.proportion <= 1.0):
            raise ValueError(f"type {self.index}: proportion must lie in [0, 1]")
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ValueError(f"type {self.index}: weights must be a non-empty vector")
        if np.any(w < -STRUCT_TOL) or np.any(w > 1 + STRUCT_TOL):
            raise ValueError(f"type {self.index}: weights must lie in [0, 1]")
        if abs(float(w.sum()) - 1.0) > STRUCT_TOL:
            raise ValueError(f"type {self.index}: weights must sum to 1, got {w.sum()!r}")


def saturating_value_fn(n: float, population: int) -> Callable[[np.ndarray], np.ndarray]:
    """Expected number of n distinct items hit by population*x uniform draws.

    U(x) = n * (1 - (1 - 1/n)^(population*x)); concave, increasing, U(0)=0.
    """

    if n < 1 or population < 1:
        raise ValueError("saturating value needs n >= 1 and population >= 1")
    log_miss = math.log1p(-1.0 / n) if n > 1 else -math.inf

    def u(x):
        x = np.asarray(x, dtype=float)
        if n == 1:
            return 1.0 - np.exp(population * x * -math.inf)  # pragma: no cover
        return -n * np.expm1(population * x * log_miss)

    return u


def log_value_fn(curvature: float = 9.0, scale: float = 1.0) -> Callable[[np.ndarray], np.ndarray]:
    """Concave benchmark value function scale * log(1 + curvature*x) / log(1 + curvature)."""

    if curvature <= 0 or scale <= 0:
        raise ValueError("curvature and scale must be positive")
    denom = math.log1p(curvature)

    def u(x):
        return scale * np.log1p(curvature * np.asarray(x, dtype=float)) / denom

    return u


def _vectorized(fn):
    """Return a callable mapping float arrays to float arrays, wrapping scalar fns."""

    probe = np.array([0.0, 0.5, 1.0])
    try:
        out = np.asarray(fn(probe), dtype=float)
        if out.shape == probe.shape:
            return lambda x: np.asarray(fn(np.asarray(x, dtype=float)), dtype=float)
    except Exception:
        pass
    vfn = np.vectorize(lambda t: float(fn(float(t))), otypes=[float])
    return lambda x: vfn(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class UtilityModel:
    """Collection-value model, either one shared curve or one curve per path.

    mode "common": ``common`` is a concave increasing callable with U(0)=0.
    mode "per-path": path j gets the saturating curve with stock
    ``poi_counts[j]`` and population ``population``.
    """

    mode: str
    common: Callable[[np.ndarray], np.ndarray] | None = None
    poi_counts: tuple[int, ...] | None = None
    population: int | None = None

    def __post_init__(self):
        if self.mode not in ("common", "per-path"):
            raise ValueError(f"unknown utility mode {self.mode!r}")
        if self.mode == "common":
            if self.common is None:
                raise ValueError("common mode requires a value callable")
            object.__setattr__(self, "common", _vectorized(self.common))
        else:
            if not self.poi_counts or self.population is None:
                raise ValueError("per-path mode requires poi_counts and population")
            if self.population < 1 or any(n < 1 for n in self.poi_counts):
                raise ValueError("poi_counts and population must be positive")
        self._validate_curves()

    # -- evaluation ---------------------------------------------------------

    def path_values(self, flows) -> np.ndarray:
        """Value collected per path: flows (..., k) -> (..., k)."""

        flows = np.asarray(flows, dtype=float)
        if self.mode == "common":
            return self.common(flows)
        counts = np.asarray(self.poi_counts, dtype=float)
        if flows.shape[-1] != counts.shape[0]:
            raise ValueError("flow has wrong number of paths for per-path model")
        log_miss = np.log1p(-1.0 / counts)
        return -counts * np.expm1(self.population * flows * log_miss)

    def path_value(self, path_index: int, x) -> np.ndarray | float:
        """Value of path ``path_index`` at scalar or array flow x."""

        x = np.asarray(x, dtype=float)
        if self.mode == "common":
            out = self.common(x)
        else:
            n = float(self.poi_counts[path_index])
            out = -n * np.expm1(self.population * x * math.log1p(-1.0 / n))
        return float(out) if out.ndim == 0 else out

    @property
    def scale(self) -> float:
        """The value of a fully loaded path, U(1); per-path mode takes the max path."""

        if self.mode == "common":
            return float(self.common(np.array(1.0)))
        return float(max(self.path_value(j, 1.0) for j in range(len(self.poi_counts))))

    @property
    def paths(self) -> int | None:
        return None if self.mode == "common" else len(self.poi_counts)

    # -- validation ---------------------------------------------------------

    def _validate_curves(self):
        xs = np.linspace(0.0, 1.0, _VALIDATION_GRID)
        if self.mode == "common":
            curves = [self.common(xs)]
        else:
            curves = [np.asarray(self.path_value(j, xs)) for j in range(len(self.poi_counts))]
        for u in curves:
            if not np.all(np.isfinite(u)):
                raise ValueError("value function must be finite on [0, 1]")
            if abs(float(u[0])) > ANALYTIC_TOL:
                raise ValueError(f"value function must satisfy U(0)=0, got {u[0]!r}")
            d1 = np.diff(u)
            if np.min(d1) < -ANALYTIC_TOL:
                raise ValueError("value function must be non-decreasing on [0, 1]")
            d2 = np.diff(u, 2)
            if np.max(d2) > ANALYTIC_TOL:
                raise ValueError("value function must be concave on [0, 1]")


@dataclass(frozen=True)
class GameInstance:
    """Immutable routing-game instance; costs are shifted so min cost is 0."""

    paths: tuple[PathSpec, ...]
    types: tuple[UserType, ...]
    utility: UtilityModel
    cost_shift: float = field(init=False, default=0.0)

    def __post_init__(self):
        paths = tuple(self.paths)
        types = tuple(self.types)
        if len(paths) < 2:
            raise ValueError("an instance needs at least two paths")
        if len(types) < 1:
            raise ValueError("an instance needs at least one user type")
        k = len(paths)
        for t in types:
            if len(t.weights) != k:
                raise ValueError(f"type {t.index}: expected {k} weights, got {len(t.weights)}")
        total = math.fsum(t.proportion for t in types)
        if abs(total - 1.0) > STRUCT_TOL:
            raise ValueError(f"type proportions must sum to 1, got {total!r}")
        if self.utility.mode == "per-path" and len(self.utility.poi_counts) != k:
            raise ValueError("per-path utility must list one poi count per path")
        shift = min(p.cost for p in paths)
        if shift != 0.0:
            paths = tuple(
                PathSpec(p.index, p.cost - shift, p.poi_capacity) for p in paths
            )
        object.__setattr__(self, "paths", paths)
        object.__setattr__(self, "types", types)
        object.__setattr__(self, "cost_shift", shift)

    # -- derived arrays -----------------------------------------------------

    @cached_property
    def costs(self) -> np.ndarray:
        c = np.array([p.cost for p in self.paths], dtype=float)
        c.flags.writeable = False
        return c

    @cached_property
    def proportions(self) -> np.ndarray:
        e = np.array([t.proportion for t in self.types], dtype=float)
        e.flags.writeable = False
        return e

    @cached_property
    def weight_matrix(self) -> np.ndarray:
        w = np.array([t.weights for t in self.types], dtype=float)
        w.flags.writeable = False
        return w

    @cached_property
    def aggregate_weights(self) -> np.ndarray:
        """Per-path social value weight: sum_i eta_i * w_ij."""

        w = self.proportions @ self.weight_matrix
        w.flags.writeable = False
        return w

    @property
    def num_paths(self) -> int:
        return len(self.paths)

    @property
    def num_types(self) -> int:
        return len(self.types)

    @property
    def scale(self) -> float:
        return self.utility.scale

    @property
    def cost_ratio(self) -> float:
        """max_j c_j over U(1); small values put the instance in the low-cost regime."""

        return float(self.costs.max() / self.scale)

    def replace_paths(self, order: Sequence[int], new_costs: Sequence[float]) -> "GameInstance":
        """New instance with paths permuted by ``order`` and costs replaced.

        Weight columns and per-path stocks follow their paths; type
        proportions are untouched.
        """

        order = list(order)
        k = self.num_paths
        if sorted(order) != list(range(k)) or len(new_costs) != k:
            raise ValueError("order must be a permutation and new_costs must match k")
        paths = tuple(
            PathSpec(self.paths[o].index, float(c), self.paths[o].poi_capacity)
            for o, c in zip(order, new_costs)
        )
        types = tuple(
            UserType(t.index, t.proportion, tuple(t.weights[o] for o in order))
            for t in self.types
        )
        utility = self.utility
        if utility.mode == "per-path":
            utility = UtilityModel(
                mode="per-path",
                poi_counts=tuple(utility.poi_counts[o] for o in order),
                population=utility.population,
            )
        return GameInstance(paths=paths, types=types, utility=utility)


# ---------------------------------------------------------------------------
# flows and assignments

def flow_of(assignment) -> np.ndarray:
    """Aggregate per-path flow induced by a type-by-path assignment."""

    return np.asarray(assignment, dtype=float).sum(axis=0)


def validate_flow(instance: GameInstance, flow, tol: float = ANALYTIC_TOL) -> np.ndarray:
    x = np.asarray(flow, dtype=float)
    if x.shape != (instance.num_paths,):
        raise ValueError(f"flow must have shape ({instance.num_paths},)")
    if np.any(x < -tol) or abs(float(x.sum()) - 1.0) > tol:
        raise ValueError("flow must be non-negative and sum to 1")
    return x


def validate_assignment(instance: GameInstance, assignment, tol: float = ANALYTIC_TOL) -> np.ndarray:
    y = np.asarray(assignment, dtype=float)
    if y.shape != (instance.num_types, instance.num_paths):
        raise ValueError(
            f"assignment must have shape ({instance.num_types}, {instance.num_paths})"
        )
    if np.any(y < -tol):
        raise ValueError("assignment masses must be non-negative")
    if np.max(np.abs(y.sum(axis=1) - instance.proportions)) > tol:
        raise ValueError("each type's row must sum to its proportion")
    return y


# ---------------------------------------------------------------------------
# payoffs and welfare

def _adjusted_payoffs(instance: GameInstance, flows: np.ndarray, adjustment) -> np.ndarray:
    """Payoff tensor for a batch of flows: (P, k) -> (P, m, k)."""

    values = instance.utility.path_values(flows)          # (P, k)
    tu = values @ instance.weight_matrix.T                # (P, m)
    if adjustment is None:
        return tu[:, :, None] - instance.costs[None, None, :]
    if hasattr(adjustment, "access_fractions"):
        frac = np.asarray(adjustment.access_fractions(flows), dtype=float)
        return frac[:, None, :] * tu[:, :, None] - instance.costs[None, None, :]
    if hasattr(adjustment, "effective_costs"):
        eff = np.asarray(adjustment.effective_costs(flows), dtype=float)
        return tu[:, :, None] - eff[:, None, :]
    raise TypeError(f"unsupported mechanism adjustment {type(adjustment).__name__}")


def payoff_tensor(instance: GameInstance, flows, adjustment=None) -> np.ndarray:
    flows = np.asarray(flows, dtype=float)
    if flows.ndim != 2 or flows.shape[1] != instance.num_paths:
        raise ValueError("flows must have shape (P, k)")
    return _adjusted_payoffs(instance, flows, adjustment)


def payoff_matrix(instance: GameInstance, flow, adjustment=None) -> np.ndarray:
    """Per-type, per-path payoff at one aggregate flow: (m, k)."""

    x = validate_flow(instance, flow)
    return _adjusted_payoffs(instance, x[None, :], adjustment)[0]


def type_utility(instance: GameInstance, type_index: int, flow) -> float:
    """Weighted aggregate collection value enjoyed by one type at a flow."""

    x = validate_flow(instance, flow)
    values = instance.utility.path_values(x)
    return float(instance.weight_matrix[type_index] @ values)


def type_payoff(instance: GameInstance, type_index: int, path_index: int, flow,
                adjustment=None) -> float:
    """Payoff of a type-``type_index`` user travelling path ``path_index``."""

    return float(payoff_matrix(instance, flow, adjustment)[type_index, path_index])


def utility_weight(instance: GameInstance, path_index: int) -> float:
    """Social value weight of one path: sum_i eta_i w_ij."""

    return float(instance.aggregate_weights[path_index])


def social_welfare(instance: GameInstance, flow) -> float:
    """Aggregate welfare: sum_j (sum_i eta_i w_ij) U_j(x_j) - sum_j x_j c_j."""

    x = validate_flow(instance, flow)
    values = instance.utility.path_values(x)
    return float(instance.aggregate_weights @ values - instance.costs @ x)


def social_welfare_per_type(instance: GameInstance, flow) -> float:
    """Same welfare summed type by type; agrees with social_welfare to 1e-9."""

    x = validate_flow(instance, flow)
    values = instance.utility.path_values(x)
    per_type = instance.weight_matrix @ values
    return float(instance.proportions @ per_type - instance.costs @ x)


def welfare_batch(instance: GameInstance, flows) -> np.ndarray:
    """Vectorized social welfare over flows of shape (P, k)."""

    flows = np.asarray(flows, dtype=float)
    values = instance.utility.path_values(flows)
    return values @ instance.aggregate_weights - flows @ instance.costs


# ---------------------------------------------------------------------------
# instance file format

_INSTANCE_DOC = """\
Instance files are plain text with three sections:

    [paths]
    # index cost [poi_capacity]
    1 12.5 3875
    2 0.0  2116

    [types]
    # proportion w1 ... wk
    0.6  0.25 0.75
    0.4  0.5  0.5

    [utility]
    mode = per-path      # or: common
    M = 2000             # population size
    n = 1000             # pseudo stock, common mode only

Blank lines and '#' comments are ignored. Costs are shifted so the smallest
is zero. Common mode uses the saturating curve with stock n.
"""


def _parse_float(token, line, name):
    try:
        return float(token)
    except ValueError:
        raise InstanceFormatError(f"expected a number, got {token!r}", line, name) from None


def parse_instance(text: str) -> GameInstance:
    """Parse the sectioned instance format. See module docs for the schema."""

    section = None
    paths: list[PathSpec] = []
    type_rows: list[tuple[int, float, tuple[float, ...]]] = []
    settings: dict[str, str] = {}
    setting_lines: dict[str, int] = {}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if section not in ("paths", "types", "utility"):
                raise InstanceFormatError(f"unknown section [{section}]", lineno)
            continue
        if section is None:
            raise InstanceFormatError("content before any section header", lineno)
        if section == "paths":
            parts = line.split()
            if len(parts) not in (2, 3):
                raise InstanceFormatError(
                    "path rows need 'index cost [poi_capacity]'", lineno, "paths"
                )
            idx = int(_parse_float(parts[0], lineno, "index"))
            cost = _parse_float(parts[1], lineno, "cost")
            cap = None
            if len(parts) == 3:
                cap = int(_parse_float(parts[2], lineno, "poi_capacity"))
            try:
                paths.append(PathSpec(idx, cost, cap))
            except ValueError as exc:
                raise InstanceFormatError(str(exc), lineno, "paths") from None
        elif section == "types":
            parts = line.split()
            if len(parts) < 2:
                raise InstanceFormatError(
                    "type rows need 'proportion w1 ... wk'", lineno, "types"
                )
            prop = _parse_float(parts[0], lineno, "proportion")
            weights = tuple(_parse_float(p, lineno, "weights") for p in parts[1:])
            type_rows.append((lineno, prop, weights))
        else:
            if "=" not in line:
                raise InstanceFormatError("utility settings use 'key = value'", lineno, "utility")
            key, _, value = line.partition("=")
            settings[key.strip().lower()] = value.strip()
            setting_lines[key.strip().lower()] = lineno

    if not paths:
        raise InstanceFormatError("missing [paths] section or it is empty")
    if not type_rows:
        raise InstanceFormatError("missing [types] section or it is empty")
    mode = settings.get("mode")
    if mode is None:
        raise InstanceFormatError("missing 'mode' in [utility]")
    mode = mode.lower()

    k = len(paths)
    types = []
    for n, (lineno, prop, weights) in enumerate(type_rows, start=1):
        if len(weights) != k:
            raise InstanceFormatError(
                f"expected {k} weights, got {len(weights)}", lineno, "types"
            )
        try:
            types.append(UserType(n, prop, weights))
        except ValueError as exc:
            raise InstanceFormatError(str(exc), lineno, "types") from None

    def _int_setting(name, required=True, default=None):
        if name not in settings:
            if required:
                raise InstanceFormatError(f"missing '{name}' in [utility]")
            return default
        try:
            return int(settings[name])
        except ValueError:
            raise InstanceFormatError(
                f"'{name}' must be an integer, got {settings[name]!r}",
                setting_lines.get(name), name,
            ) from None

    if mode == "per-path":
        population = _int_setting("m")
        caps = [p.poi_capacity for p in paths]
        if any(c is None for c in caps):
            raise InstanceFormatError("per-path mode requires poi_capacity on every path")
        utility = UtilityModel(mode="per-path", poi_counts=tuple(caps), population=population)
    elif mode == "common":
        population = _int_setting("m")
        pseudo = _int_setting("n", required=False, default=1000)
        utility = UtilityModel(mode="common", common=saturating_value_fn(pseudo, population))
    else:
        raise InstanceFormatError(
            f"mode must be 'common' or 'per-path', got {mode!r}",
            setting_lines.get("mode"), "mode",
        )

    try:
        return GameInstance(paths=tuple(paths), types=tuple(types), utility=utility)
    except ValueError as exc:
        raise InstanceFormatError(str(exc)) from None


def load_instance(path) -> GameInstance:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_instance(fh.read())
