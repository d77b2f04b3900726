"""Command-line surface: network generation, single simulations, damage
curves, delay optimization, and oracle cross-checks.

Every command is a pure function of its config file plus seed flags; reruns
produce byte-identical outputs regardless of worker count. Exit codes:
0 success, 2 config/usage error, 3 numerical or validation failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import damage as damage_mod
from . import dynamics, experiments, graph, oracle

_NETWORK_SOURCE_SCHEMA = {
    "oneOf": [
        {
            "type": "object",
            "properties": {
                "kind": {"const": "scale-free"},
                "n": {"type": "integer", "minimum": 2},
                "edges": {"type": "integer", "minimum": 1},
                "exponent": {"type": "number"},
            },
            "required": ["kind", "n", "edges", "exponent"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "kind": {"const": "small-world"},
                "n": {"type": "integer", "minimum": 3},
                "k": {"type": "integer", "minimum": 2},
                "rewire_prob": {"type": "number", "minimum": 0, "maximum": 1},
            },
            "required": ["kind", "n", "k", "rewire_prob"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "kind": {"const": "file"},
                "path": {"type": "string"},
                "directed": {"type": "boolean"},
            },
            "required": ["kind", "path"],
            "additionalProperties": False,
        },
    ]
}

_INIT_SCHEMA = {
    "oneOf": [
        {
            "type": "object",
            "properties": {"kind": {"const": "single"}, "index": {"type": "integer", "minimum": 0}},
            "required": ["kind", "index"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"kind": {"const": "single_random"}},
            "required": ["kind"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "kind": {"const": "uniform"},
                "p0": {"type": "number", "minimum": 0, "maximum": 1},
            },
            "required": ["kind", "p0"],
            "additionalProperties": False,
        },
    ]
}

_MODEL_PARAMS_SCHEMA = {
    "type": "object",
    "properties": {
        "beta": {"type": "number", "exclusiveMinimum": 0},
        "gamma": {"type": "number", "exclusiveMinimum": 0},
        "theta": {"type": "number", "exclusiveMinimum": 0},
        "tau": {"type": "number", "exclusiveMinimum": 0},
        "horizon": {"type": "number", "exclusiveMinimum": 0},
    },
    "required": ["beta", "gamma", "theta", "tau", "horizon"],
    "additionalProperties": False,
}

_RATES_SCHEMA = {  # model parameters without the delay (optimal-delay searches it)
    "type": "object",
    "properties": {
        "beta": {"type": "number", "exclusiveMinimum": 0},
        "gamma": {"type": "number", "exclusiveMinimum": 0},
        "theta": {"type": "number", "exclusiveMinimum": 0},
        "horizon": {"type": "number", "exclusiveMinimum": 0},
    },
    "required": ["beta", "gamma", "theta", "horizon"],
    "additionalProperties": False,
}

_COST_SCHEMA = {
    "type": "object",
    "properties": {
        "A": {"type": "number", "exclusiveMinimum": 0},
        "alpha": {"type": "number", "exclusiveMinimum": 0},
    },
    "required": ["A", "alpha"],
    "additionalProperties": False,
}

_RANGES_SCHEMA = {
    "type": "object",
    "properties": {
        name: {
            "type": "array",
            "items": {"type": "number"},
            "minItems": 2,
            "maxItems": 2,
        }
        for name in experiments.PARAM_NAMES
    },
    "additionalProperties": False,
}

_TARGET_SCHEMA = {
    "oneOf": [
        {
            "type": "object",
            "properties": {
                "which": {"enum": list(experiments.PARAM_NAMES)},
                "grid": {"type": "array", "items": {"type": "number"}, "minItems": 1},
            },
            "required": ["which", "grid"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "family": {"enum": ["scale-free", "small-world"]},
                "grid": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                "n": {"type": "integer", "minimum": 3},
                "edges": {"type": "integer", "minimum": 2},
                "k": {"type": "integer", "minimum": 2},
            },
            "required": ["family", "grid"],
            "additionalProperties": False,
        },
    ]
}

_SWEEP_KEYS = {
    "seed": {"type": "integer", "minimum": 0},
    "output_dir": {"type": "string"},
    "ranges": _RANGES_SCHEMA,
    "networks": {"type": "array", "items": _NETWORK_SOURCE_SCHEMA, "minItems": 1},
    "samples": {"type": "integer", "minimum": 1},
    "step": {"type": "number", "exclusiveMinimum": 0},
    "horizon": {"type": "number", "exclusiveMinimum": 0},
    "init": _INIT_SCHEMA,
}

SCHEMAS = {
    "simulate": {
        "type": "object",
        "properties": {
            "seed": {"type": "integer", "minimum": 0},
            "output_dir": {"type": "string"},
            "network": _NETWORK_SOURCE_SCHEMA,
            "params": _MODEL_PARAMS_SCHEMA,
            "cost": _COST_SCHEMA,
            "init": _INIT_SCHEMA,
            "step": {"type": "number", "exclusiveMinimum": 0},
        },
        "required": ["network", "params", "cost", "init"],
        "additionalProperties": False,
    },
    "curve": {
        "type": "object",
        "properties": {**_SWEEP_KEYS, "target": _TARGET_SCHEMA},
        "required": ["target"],
        "additionalProperties": False,
    },
    "sweep": {
        "type": "object",
        "properties": {
            **_SWEEP_KEYS,
            "targets": {"type": "array", "items": _TARGET_SCHEMA, "minItems": 1},
        },
        "required": ["targets"],
        "additionalProperties": False,
    },
    "optimal-delay": {
        "type": "object",
        "properties": {
            "seed": {"type": "integer", "minimum": 0},
            "output_dir": {"type": "string"},
            "network": _NETWORK_SOURCE_SCHEMA,
            "params": _RATES_SCHEMA,
            "cost": _COST_SCHEMA,
            "init": _INIT_SCHEMA,
            "step": {"type": "number", "exclusiveMinimum": 0},
            "tau_range": {
                "type": "array",
                "items": {"type": "number"},
                "minItems": 2,
                "maxItems": 2,
            },
            "coarse_points": {"type": "integer", "minimum": 5},
            "tol": {"type": "number", "exclusiveMinimum": 0},
        },
        "required": ["network", "params", "cost", "init", "tau_range"],
        "additionalProperties": False,
    },
    "oracle-check": {
        "type": "object",
        "properties": {
            "seed": {"type": "integer", "minimum": 0},
            "output_dir": {"type": "string"},
            "fixture": {"enum": ["P2", "P3", "S4"]},
            "network": _NETWORK_SOURCE_SCHEMA,
            "infected": {"type": "array", "items": {"type": "integer", "minimum": 0}},
            "params": _MODEL_PARAMS_SCHEMA,
            "runs": {"type": "integer", "minimum": 1},
            "checkpoints": {"type": "array", "items": {"type": "number"}, "minItems": 1},
            "step": {"type": "number", "exclusiveMinimum": 0},
        },
        "additionalProperties": False,
    },
}


class ConfigError(Exception):
    """Invalid config file or option combination (exit code 2)."""


def _load_config(path: str, command: str) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    try:
        config = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}")
    try:
        jsonschema.validate(config, SCHEMAS[command])
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config {path} rejected: {exc.message}")
    return config


def _apply_overrides(config: dict, args) -> dict:
    config = dict(config)
    for key, flag in (("seed", "seed"), ("step", "step"), ("samples", "samples")):
        value = getattr(args, flag, None)
        if value is not None:
            config[key] = value
    if getattr(args, "output", None) is not None:
        config["output_dir"] = args.output
    return config


def _resolve_threads(args) -> int:
    if getattr(args, "threads", None) is not None:
        return max(1, args.threads)
    return max(1, int(os.environ.get("VIRUSDAMAGE_THREADS", "1")))


def _out_dir(config: dict) -> Path:
    out = Path(config.get("output_dir", "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _model_params(section: dict) -> dynamics.ModelParams:
    return dynamics.ModelParams(
        beta=section["beta"],
        gamma=section["gamma"],
        theta=section["theta"],
        tau=section["tau"],
        horizon=section["horizon"],
    )


def _cost_params(section: dict) -> damage_mod.CostParams:
    return damage_mod.CostParams(a_coeff=section["A"], alpha=section["alpha"])


def _build_init(config: dict, n: int) -> dynamics.InitialCondition:
    rng = experiments.seeds.substream(int(config.get("seed", 0)), "init", 0)
    return experiments.make_init(config["init"], n, rng)


def cmd_gen_net(args) -> int:
    if args.kind == "scale-free":
        if args.edges is None or args.exponent is None:
            raise ConfigError("scale-free generation needs --edges and --exponent")
        net = graph.generate_scale_free(args.n, args.edges, args.exponent, args.seed)
    else:
        if args.k is None or args.p is None:
            raise ConfigError("small-world generation needs --k and --p")
        net = graph.generate_small_world(args.n, args.k, args.p, args.seed)
    out = Path(args.out)
    if out.exists() and not args.force:
        raise ConfigError(f"{out} exists; pass --force to overwrite")
    out.parent.mkdir(parents=True, exist_ok=True)
    graph.write_edge_list(net, out)
    stats = graph.degree_stats(net)
    print(
        json.dumps(
            {
                "n": net.n,
                "edges": net.edge_count,
                "mean_degree": stats.mean_degree,
                "max_degree": stats.max_degree,
                "degree_variance": stats.degree_variance,
                "estimated_power_exponent": stats.estimated_power_exponent,
            },
            sort_keys=True,
        )
    )
    return 0


def cmd_simulate(args) -> int:
    config = _apply_overrides(_load_config(args.config, "simulate"), args)
    seed = int(config.get("seed", 0))
    net = experiments.realize_network(
        config["network"], experiments.seeds.derived_seed(seed, "network", 0)
    )
    params = _model_params(config["params"])
    cost = _cost_params(config["cost"])
    init = _build_init(config, net.n)
    step = float(config.get("step", 0.01))
    traj = dynamics.integrate(net, params, init, step)
    report = damage_mod.total_damage(traj, cost, params.tau)
    out = _out_dir(config)
    dynamics.trajectory_to_csv(traj, out / "trajectory.csv")
    payload = report.as_dict()
    payload["params"] = dict(config["params"])
    payload["cost"] = dict(config["cost"])
    payload["seed"] = seed
    payload["step"] = step
    _dump_json(out / "damage.json", payload)
    print(f"total damage {report.total:.6g} (loss {report.economic_loss:.6g}, "
          f"cost {report.antivirus_cost:.6g})", file=sys.stderr)
    return 0


def _sweep_spec(config: dict) -> experiments.SweepSpec:
    kwargs: dict = {}
    if "ranges" in config:
        kwargs["ranges"] = {k: tuple(v) for k, v in config["ranges"].items()}
    if "networks" in config:
        kwargs["networks"] = tuple(config["networks"])
    for key in ("samples", "seed", "step", "horizon", "init"):
        if key in config:
            kwargs[key] = config[key]
    try:
        return experiments.SweepSpec(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc))


def _run_target(spec: experiments.SweepSpec, target: dict, workers: int) -> experiments.CurveResult:
    if "which" in target:
        return experiments.marginal_curve(spec, target["which"], target["grid"], workers=workers)
    extra = {key: target[key] for key in ("n", "edges", "k") if key in target}
    return experiments.structure_curve(
        spec, target["family"], target["grid"], workers=workers, **extra
    )


def _target_label(target: dict) -> str:
    return (target.get("which") or target["family"]).replace("-", "_")


def _run_curve_targets(config: dict, targets: list[dict], workers: int) -> int:
    spec = _sweep_spec(config)
    out = _out_dir(config)
    manifest_targets = []
    for target in targets:
        try:
            curve = _run_target(spec, target, workers)
        except ValueError as exc:
            raise ConfigError(str(exc))
        label = _target_label(target)
        csv_name = f"curve_{label}.csv"
        experiments.curve_to_csv(curve, out / csv_name)
        manifest_targets.append(
            {
                "target": target,
                "csv": csv_name,
                "spearman_sign": curve.spearman_sign,
            }
        )
        print(f"{label}: spearman sign {curve.spearman_sign:+d}", file=sys.stderr)
    experiments.write_manifest(out / "manifest.json", spec, {"targets": manifest_targets})
    return 0


def cmd_curve(args) -> int:
    config = _apply_overrides(_load_config(args.config, "curve"), args)
    return _run_curve_targets(config, [config["target"]], _resolve_threads(args))


def cmd_sweep(args) -> int:
    config = _apply_overrides(_load_config(args.config, "sweep"), args)
    return _run_curve_targets(config, list(config["targets"]), _resolve_threads(args))


def cmd_optimal_delay(args) -> int:
    config = _apply_overrides(_load_config(args.config, "optimal-delay"), args)
    seed = int(config.get("seed", 0))
    net = experiments.realize_network(
        config["network"], experiments.seeds.derived_seed(seed, "network", 0)
    )
    rates = config["params"]
    cost = _cost_params(config["cost"])
    init = _build_init(config, net.n)
    try:
        result = experiments.find_optimal_delay(
            net,
            beta=rates["beta"],
            gamma=rates["gamma"],
            theta=rates["theta"],
            horizon=rates["horizon"],
            cost=cost,
            init=init,
            tau_range=tuple(config["tau_range"]),
            coarse_points=int(config.get("coarse_points", 21)),
            tol=float(config.get("tol", 0.05)),
            step=float(config.get("step", 0.01)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc))
    out = _out_dir(config)
    lines = ["tau,damage"]
    lines += [
        f"{t:.17g},{d:.17g}" for t, d in zip(result.curve_taus, result.curve_damages)
    ]
    (out / "delay_curve.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    _dump_json(
        out / "optimal_delay.json",
        {
            "tau_star": result.tau_star,
            "damage_star": result.damage_star,
            "at_boundary": result.at_boundary,
            "seed": seed,
        },
    )
    flag = " (range boundary)" if result.at_boundary else ""
    print(f"optimal delay {result.tau_star:.4g}{flag}, damage {result.damage_star:.6g}",
          file=sys.stderr)
    return 0


def cmd_oracle_check(args) -> int:
    config = _apply_overrides(_load_config(args.config, "oracle-check"), args)
    if ("fixture" in config) == ("network" in config):
        raise ConfigError("give exactly one of 'fixture' or 'network'")
    seed = int(config.get("seed", 0))
    if "fixture" in config:
        name = config["fixture"]
        net = oracle.fixture_network(name)
        infected = [0]
    else:
        name = "custom"
        net = experiments.realize_network(
            config["network"], experiments.seeds.derived_seed(seed, "network", 0)
        )
        infected = config.get("infected", [0])
    if net.n > oracle.MASTER_EQUATION_MAX_NODES:
        raise ConfigError(
            f"master equation supports at most {oracle.MASTER_EQUATION_MAX_NODES} hosts; "
            f"got n={net.n}"
        )
    params = (
        _model_params(config["params"]) if "params" in config else oracle.FIXTURE_PARAMS
    )
    runs = int(config.get("runs", 100000))
    checkpoints = np.asarray(
        config.get("checkpoints", np.linspace(0.0, params.horizon, 13).tolist())
    )
    step = float(config.get("step", 0.01))

    init_state = np.zeros(net.n, dtype=np.int8)
    for idx in infected:
        if not 0 <= idx < net.n:
            raise ConfigError(f"infected index {idx} out of range")
        init_state[idx] = oracle.INFECTED

    exact = oracle.master_equation_marginals(net, params, init_state, checkpoints)
    mc = oracle.estimate_marginals(net, params, init_state, runs, checkpoints, seed)
    ode = dynamics.integrate(
        net, params, dynamics.InitialCondition(init_state == oracle.INFECTED), step
    )
    ode_inf = np.stack(
        [np.interp(checkpoints, ode.times, ode.infected[:, i]) for i in range(net.n)], axis=1
    )
    ode_rec = np.stack(
        [np.interp(checkpoints, ode.times, ode.recovered[:, i]) for i in range(net.n)], axis=1
    )

    diff_inf = np.abs(mc.mean_infected - exact.infected)
    diff_rec = np.abs(mc.mean_recovered - exact.recovered)
    within = np.concatenate(
        [
            (diff_inf <= 3.0 * mc.stderr_infected).ravel(),
            (diff_rec <= 3.0 * mc.stderr_recovered).ravel(),
        ]
    )
    pass_rate = float(within.mean())
    passed = pass_rate >= 0.99
    gap_inf = float(np.abs(ode_inf - exact.infected).max())
    gap_rec = float(np.abs(ode_rec - exact.recovered).max())

    print(f"oracle check: {name} (n={net.n}, runs={runs}, seed={seed})")
    print(f"  monte carlo vs master equation: max |dI|={diff_inf.max():.3e} "
          f"max |dR|={diff_rec.max():.3e}")
    print(f"  3-stderr agreement: {100 * pass_rate:.2f}% of (host, time) pairs "
          f"-> {'PASS' if passed else 'FAIL'} (requires >= 99%)")
    print(f"  mean-field gap vs master equation (reported, no threshold): "
          f"max |dI|={gap_inf:.3e} max |dR|={gap_rec:.3e}")

    if "output_dir" in config:
        out = _out_dir(config)
        oracle.marginals_to_csv(mc, out / f"{name}_gillespie.csv")
        oracle.marginals_to_csv(exact, out / f"{name}_master.csv")
        dynamics.trajectory_to_csv(ode, out / f"{name}_ode.csv")
    return 0 if passed else 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="virusdamage",
        description="Delayed SIR virus spread on networks with damage accounting.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-net", help="generate a network edge-list file")
    gen.add_argument("kind", choices=["scale-free", "small-world"])
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--edges", type=int)
    gen.add_argument("--exponent", type=float)
    gen.add_argument("--k", type=int)
    gen.add_argument("--p", type=float)
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--out", required=True)
    gen.add_argument("--force", action="store_true")
    gen.set_defaults(func=cmd_gen_net)

    for name, func, help_text in (
        ("simulate", cmd_simulate, "integrate one parameter point and report damage"),
        ("curve", cmd_curve, "mean damage curve over one parameter or family grid"),
        ("sweep", cmd_sweep, "run several curve targets into one output directory"),
        ("optimal-delay", cmd_optimal_delay, "find the damage-minimizing remedy delay"),
        ("oracle-check", cmd_oracle_check, "cross-validate simulation against exact oracles"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="JSON config file")
        cmd.add_argument("--seed", type=int, help="override the config seed")
        cmd.add_argument("--step", type=float, help="override the integrator step")
        cmd.add_argument("--samples", type=int, help="override the per-point sample count")
        cmd.add_argument("--output", help="override the output directory")
        cmd.add_argument("--threads", type=int,
                         help="worker processes (default $VIRUSDAMAGE_THREADS or 1)")
        cmd.set_defaults(func=func)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, graph.EdgeListParseError, graph.GraphConstructionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except dynamics.IntegrationError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except RuntimeError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
