"""Delayed SIR spread of a computer virus on a host network, with damage
accounting (economic loss plus remedy development cost), exact stochastic
validation oracles, and sweep experiments."""

from .damage import CostParams, DamageReport, antivirus_cost, economic_loss, total_damage
from .dynamics import (
    InitialCondition,
    IntegrationError,
    ModelParams,
    Trajectory,
    integrate,
    trajectory_to_csv,
)
from .experiments import (
    CurveResult,
    DelayResult,
    SweepSpec,
    find_optimal_delay,
    marginal_curve,
    sample_params,
    structure_curve,
)
from .graph import (
    DegreeStats,
    Network,
    degree_stats,
    generate_scale_free,
    generate_small_world,
    load_edge_list,
    write_edge_list,
)
from .oracle import (
    estimate_marginals,
    gillespie_run,
    master_equation_marginals,
)

__all__ = [
    "CostParams",
    "CurveResult",
    "DamageReport",
    "DegreeStats",
    "DelayResult",
    "InitialCondition",
    "IntegrationError",
    "ModelParams",
    "Network",
    "SweepSpec",
    "Trajectory",
    "antivirus_cost",
    "degree_stats",
    "economic_loss",
    "estimate_marginals",
    "find_optimal_delay",
    "generate_scale_free",
    "generate_small_world",
    "gillespie_run",
    "integrate",
    "load_edge_list",
    "marginal_curve",
    "master_equation_marginals",
    "sample_params",
    "structure_curve",
    "total_damage",
    "trajectory_to_csv",
    "write_edge_list",
]
