"""Experiment engine: damage curves against model parameters, network-structure
comparisons, and the damage-minimizing remedy delay.

All sweeps draw parameter combinations uniformly from configured ranges. Draws
are paired across grid points (common random numbers): sample ``si`` uses the
same parameters, network, and initial condition at every grid value, with only
the swept quantity overridden. This keeps desk-scale mean curves stable enough
for rank-based monotonicity checks and makes every result a pure function of
the spec and its master seed, independent of worker count.
"""

from __future__ import annotations

import dataclasses
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import stats

from . import seeds
from .damage import CostParams, antivirus_cost, economic_loss, total_damage
from .dynamics import InitialCondition, ModelParams, Trajectory, integrate
from .graph import Network, generate_scale_free, generate_small_world, load_edge_list

PARAM_NAMES = ("beta", "gamma", "theta", "tau", "A", "alpha")

DEFAULT_RANGES: dict[str, tuple[float, float]] = {
    "beta": (0.005, 0.016),
    "gamma": (0.1, 0.3),
    "theta": (0.1, 0.3),
    "tau": (1.0, 20.0),
    "A": (500.0, 600.0),
    "alpha": (1.0, 6.0),
}

SCALE_FREE_EXPONENTS = (2.7, 2.8, 2.9, 3.0, 3.1)
SMALL_WORLD_REWIRE_PROBS = (0.1, 0.15, 0.2, 0.25, 0.3)


def scale_free_sources(n: int = 100, edges: int = 109) -> tuple[dict, ...]:
    """The five-network scale-free suite (exponents 2.7 to 3.1)."""
    return tuple(
        {"kind": "scale-free", "n": n, "edges": edges, "exponent": e}
        for e in SCALE_FREE_EXPONENTS
    )


def small_world_sources(n: int = 100, k: int = 4) -> tuple[dict, ...]:
    """The five-network small-world suite (rewiring 0.1 to 0.3)."""
    return tuple(
        {"kind": "small-world", "n": n, "k": k, "rewire_prob": p}
        for p in SMALL_WORLD_REWIRE_PROBS
    )


@lru_cache(maxsize=32)
def _load_cached(path: str, directed: bool) -> Network:
    return load_edge_list(path, directed=directed)


def realize_network(source: dict, seed: int) -> Network:
    """Instantiate a network source (generator spec or file path)."""
    kind = source.get("kind")
    if kind == "scale-free":
        return generate_scale_free(source["n"], source["edges"], source["exponent"], seed)
    if kind == "small-world":
        return generate_small_world(source["n"], source["k"], source["rewire_prob"], seed)
    if kind == "file":
        return _load_cached(str(source["path"]), bool(source.get("directed", False)))
    raise ValueError(f"unknown network source kind {kind!r}")


_INIT_KINDS = ("single", "single_random", "uniform")


def make_init(policy: dict, n: int, rng: np.random.Generator) -> InitialCondition:
    kind = policy.get("kind")
    if kind == "single":
        return InitialCondition.single(n, int(policy["index"]))
    if kind == "single_random":
        return InitialCondition.random_single(n, rng)
    if kind == "uniform":
        return InitialCondition.uniform(n, float(policy["p0"]))
    raise ValueError(f"unknown init policy {kind!r} (expected one of {_INIT_KINDS})")


@dataclass
class SweepSpec:
    """Sweep configuration: parameter ranges, network suite, sampling budget,
    master seed, integrator step, and initial-condition policy."""

    ranges: dict[str, tuple[float, float]] = field(
        default_factory=lambda: dict(DEFAULT_RANGES)
    )
    networks: tuple[dict, ...] = field(default_factory=small_world_sources)
    samples: int = 200
    seed: int = 0
    step: float = 0.05
    horizon: float = 30.0
    init: dict = field(default_factory=lambda: {"kind": "single_random"})

    def __post_init__(self):
        merged = dict(DEFAULT_RANGES)
        merged.update(self.ranges)
        self.ranges = merged
        self.networks = tuple(dict(src) for src in self.networks)
        if self.samples < 1:
            raise ValueError("samples must be at least 1")
        if not self.networks:
            raise ValueError("need at least one network source")
        if self.step <= 0:
            raise ValueError("step must be positive")
        for name in PARAM_NAMES:
            lo, hi = self.ranges[name]
            if not (0 < lo <= hi):
                raise ValueError(f"range for {name} must satisfy 0 < lo <= hi")
        if self.ranges["tau"][1] >= self.horizon:
            raise ValueError("tau range must stay below the horizon")
        make_init(self.init, 1, np.random.default_rng(0))  # policy shape check

    def to_dict(self) -> dict:
        return {
            "ranges": {k: list(v) for k, v in self.ranges.items()},
            "networks": [dict(src) for src in self.networks],
            "samples": self.samples,
            "seed": self.seed,
            "step": self.step,
            "horizon": self.horizon,
            "init": dict(self.init),
        }


@dataclass(frozen=True)
class CurveResult:
    """Mean damage (and its two components) per grid value."""

    parameter: str
    grid: np.ndarray
    mean_damage: np.ndarray
    mean_loss: np.ndarray
    mean_cost: np.ndarray
    samples: np.ndarray  # per-point sample count
    spearman_sign: int


def spearman_sign(grid, values) -> int:
    """Sign (-1/0/+1) of the Spearman rank correlation of a curve."""
    grid = np.asarray(grid, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if grid.size < 2 or np.all(values == values[0]):
        return 0
    rho = stats.spearmanr(grid, values).statistic
    if math.isnan(rho) or rho == 0.0:
        return 0
    return 1 if rho > 0 else -1


def sample_params(spec: SweepSpec, k: int) -> list[tuple[ModelParams, CostParams]]:
    """``k`` reproducible uniform draws from the spec's ranges."""
    if k < 1:
        raise ValueError("need at least one draw")
    return [_draw_params(spec, si) for si in range(k)]


def _draw_params(spec: SweepSpec, si: int) -> tuple[ModelParams, CostParams]:
    rng = seeds.substream(spec.seed, "params", si)
    values = {name: rng.uniform(*spec.ranges[name]) for name in PARAM_NAMES}
    model = ModelParams(
        beta=values["beta"],
        gamma=values["gamma"],
        theta=values["theta"],
        tau=values["tau"],
        horizon=spec.horizon,
    )
    return model, CostParams(a_coeff=values["A"], alpha=values["alpha"])


def draw_case(spec: SweepSpec, si: int) -> tuple[ModelParams, CostParams, Network, InitialCondition]:
    """Everything sample ``si`` needs: parameters, network, initial condition."""
    model, cost = _draw_params(spec, si)
    net_rng = seeds.substream(spec.seed, "network", si)
    source = spec.networks[int(net_rng.integers(len(spec.networks)))]
    net = realize_network(source, int(net_rng.integers(2**63)))
    init = make_init(spec.init, net.n, seeds.substream(spec.seed, "init", si))
    return model, cost, net, init


def _with_override(
    model: ModelParams, cost: CostParams, which: str, value: float
) -> tuple[ModelParams, CostParams]:
    if which == "A":
        return model, dataclasses.replace(cost, a_coeff=value)
    if which == "alpha":
        return model, dataclasses.replace(cost, alpha=value)
    return dataclasses.replace(model, **{which: value}), cost


def _curve_row(args: tuple) -> tuple[np.ndarray, np.ndarray]:
    spec, which, grid, si = args
    model, cost, net, init = draw_case(spec, si)
    losses = np.empty(grid.size)
    costs = np.empty(grid.size)
    if which in ("A", "alpha"):
        # the trajectory does not depend on the cost parameters
        loss = economic_loss(integrate(net, model, init, spec.step))
        for gi, value in enumerate(grid):
            _, cost_g = _with_override(model, cost, which, value)
            losses[gi] = loss
            costs[gi] = antivirus_cost(cost_g, model.tau)
    else:
        for gi, value in enumerate(grid):
            model_g, _ = _with_override(model, cost, which, value)
            losses[gi] = economic_loss(integrate(net, model_g, init, spec.step))
            costs[gi] = antivirus_cost(cost, model_g.tau)
    return losses, costs


def _structure_row(args: tuple) -> tuple[np.ndarray, np.ndarray]:
    spec, family, grid, base, si = args
    model, cost = _draw_params(spec, si)
    net_seed = seeds.derived_seed(spec.seed, "structure-net", si)
    init_rng = seeds.substream(spec.seed, "init", si)
    init = make_init(spec.init, base["n"], init_rng)
    losses = np.empty(grid.size)
    costs = np.empty(grid.size)
    for gi, value in enumerate(grid):
        if family == "scale-free":
            net = generate_scale_free(base["n"], base["edges"], float(value), net_seed)
        else:
            net = generate_small_world(base["n"], base["k"], float(value), net_seed)
        losses[gi] = economic_loss(integrate(net, model, init, spec.step))
        costs[gi] = antivirus_cost(cost, model.tau)
    return losses, costs


def _map_rows(worker, args_list: list[tuple], workers: int) -> list:
    if workers <= 1:
        return [worker(args) for args in args_list]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(worker, args_list, chunksize=1))


def _aggregate(
    parameter: str, grid: np.ndarray, rows: list[tuple[np.ndarray, np.ndarray]], samples: int
) -> CurveResult:
    losses = np.stack([row[0] for row in rows])
    costs = np.stack([row[1] for row in rows])
    damages = losses + costs
    mean_damage = damages.mean(axis=0)
    return CurveResult(
        parameter=parameter,
        grid=grid,
        mean_damage=mean_damage,
        mean_loss=losses.mean(axis=0),
        mean_cost=costs.mean(axis=0),
        samples=np.full(grid.size, samples, dtype=np.int64),
        spearman_sign=spearman_sign(grid, mean_damage),
    )


def marginal_curve(spec: SweepSpec, which: str, grid, workers: int = 1) -> CurveResult:
    """Mean total damage as one parameter sweeps a grid, everything else drawn
    per sample from the spec."""
    if which not in PARAM_NAMES:
        raise ValueError(f"unknown parameter {which!r} (expected one of {PARAM_NAMES})")
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size < 1 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be non-empty and strictly increasing")
    if np.any(grid <= 0):
        raise ValueError(f"grid values for {which} must be positive")
    if which == "tau" and grid[-1] >= spec.horizon:
        raise ValueError("tau grid must stay below the horizon")
    args = [(spec, which, grid, si) for si in range(spec.samples)]
    rows = _map_rows(_curve_row, args, workers)
    return _aggregate(which, grid, rows, spec.samples)


def structure_curve(
    spec: SweepSpec,
    family: str,
    family_param_grid,
    *,
    n: int = 100,
    edges: int = 109,
    k: int = 4,
    workers: int = 1,
) -> CurveResult:
    """Mean total damage across a network family: scale-free power exponents or
    small-world rewiring probabilities. Networks are regenerated per sample."""
    grid = np.asarray(family_param_grid, dtype=np.float64)
    if grid.size < 1 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be non-empty and strictly increasing")
    if family == "scale-free":
        if np.any(grid <= 2):
            raise ValueError("power exponents must exceed 2")
        base = {"n": n, "edges": edges}
    elif family == "small-world":
        if np.any(grid < 0) or np.any(grid > 1):
            raise ValueError("rewiring probabilities must lie in [0, 1]")
        base = {"n": n, "k": k}
    else:
        raise ValueError(f"unknown family {family!r}")
    args = [(spec, family, grid, base, si) for si in range(spec.samples)]
    rows = _map_rows(_structure_row, args, workers)
    return _aggregate(family, grid, rows, spec.samples)


@dataclass(frozen=True)
class DelayResult:
    """Damage-minimizing remedy delay plus the coarse damage curve."""

    tau_star: float
    damage_star: float
    curve_taus: np.ndarray
    curve_damages: np.ndarray
    at_boundary: bool


_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def find_optimal_delay(
    net: Network,
    *,
    beta: float,
    gamma: float,
    theta: float,
    horizon: float,
    cost: CostParams,
    init: InitialCondition,
    tau_range: tuple[float, float],
    coarse_points: int = 21,
    tol: float = 0.05,
    step: float = 0.01,
) -> DelayResult:
    """Minimize total damage over the remedy delay.

    Scans a coarse grid first (the damage curve need not be unimodal), then
    refines the bracketing triple around the best point by golden-section
    search to width ``tol``. A minimum on a range endpoint is returned as-is
    with ``at_boundary`` set instead of being refined.
    """
    lo, hi = float(tau_range[0]), float(tau_range[1])
    if not 0 < lo < hi < horizon:
        raise ValueError("need 0 < lo < hi < horizon for the delay range")
    if coarse_points < 5:
        raise ValueError("need at least 5 coarse points")
    if tol <= 0:
        raise ValueError("tol must be positive")

    def damage_at(tau: float) -> float:
        params = ModelParams(beta=beta, gamma=gamma, theta=theta, tau=tau, horizon=horizon)
        traj = integrate(net, params, init, step)
        return total_damage(traj, cost, tau).total

    taus = np.linspace(lo, hi, coarse_points)
    damages = np.array([damage_at(t) for t in taus])
    best = int(np.argmin(damages))
    if best == 0 or best == taus.size - 1:
        return DelayResult(
            tau_star=float(taus[best]),
            damage_star=float(damages[best]),
            curve_taus=taus,
            curve_damages=damages,
            at_boundary=True,
        )

    a, b = float(taus[best - 1]), float(taus[best + 1])
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = damage_at(c), damage_at(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = damage_at(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = damage_at(d)
    tau_star = 0.5 * (a + b)
    return DelayResult(
        tau_star=tau_star,
        damage_star=damage_at(tau_star),
        curve_taus=taus,
        curve_damages=damages,
        at_boundary=False,
    )


def curve_to_csv(curve: CurveResult, target) -> None:
    """Write ``param_value,mean_damage,mean_loss,mean_cost,samples`` rows."""
    lines = ["param_value,mean_damage,mean_loss,mean_cost,samples"]
    for gi in range(curve.grid.size):
        lines.append(
            f"{curve.grid[gi]:.17g},{curve.mean_damage[gi]:.17g},"
            f"{curve.mean_loss[gi]:.17g},{curve.mean_cost[gi]:.17g},{curve.samples[gi]}"
        )
    text = "\n".join(lines) + "\n"
    if isinstance(target, (str, Path)):
        Path(target).write_text(text, encoding="utf-8")
    else:
        target.write(text)


def write_manifest(path, spec: SweepSpec, extra: dict) -> None:
    """JSON manifest echoing the full spec, master seed, and run metadata."""
    payload = {"spec": spec.to_dict()}
    payload.update(extra)
    Path(path).write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
