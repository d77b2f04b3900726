"""Damage accounting: economic loss, remedy development cost, and their sum."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import Trajectory


@dataclass(frozen=True)
class CostParams:
    """Remedy development cost ``a_coeff / tau**alpha``."""

    a_coeff: float
    alpha: float

    def __post_init__(self):
        if self.a_coeff <= 0:
            raise ValueError("cost coefficient must be positive")
        if self.alpha <= 0:
            raise ValueError("cost index must be positive")


@dataclass(frozen=True)
class DamageReport:
    economic_loss: float
    antivirus_cost: float
    total: float

    def as_dict(self) -> dict:
        return {
            "economic_loss": self.economic_loss,
            "antivirus_cost": self.antivirus_cost,
            "total": self.total,
        }


def economic_loss(traj: Trajectory) -> float:
    """Loss integral at the horizon (one loss unit per infected host per unit time)."""
    return float(traj.cumulative_loss[-1])


def trapezoid_loss(traj: Trajectory) -> float:
    """Post-hoc trapezoid quadrature of the loss integral; test oracle for the
    integrated ``cumulative_loss``."""
    return float(np.trapezoid(traj.infected.sum(axis=1), traj.times))


def antivirus_cost(cost: CostParams, tau: float) -> float:
    if tau <= 0:
        raise ValueError("remedy delay must be positive")
    return cost.a_coeff * tau**-cost.alpha


def total_damage(traj: Trajectory, cost: CostParams, tau: float) -> DamageReport:
    """Economic loss plus remedy cost for a trajectory produced at this ``tau``."""
    if not math.isclose(traj.tau, tau, rel_tol=1e-9, abs_tol=1e-12):
        raise ValueError(f"trajectory was integrated with tau={traj.tau}, not {tau}")
    loss = economic_loss(traj)
    dev_cost = antivirus_cost(cost, tau)
    return DamageReport(economic_loss=loss, antivirus_cost=dev_cost, total=loss + dev_cost)
