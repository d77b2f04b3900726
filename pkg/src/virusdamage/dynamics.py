"""Two-phase per-host SIR dynamics with a delayed remedy.

Hosts are susceptible, infected, or recovered. Before the remedy release time
``tau`` only infection acts; from ``tau`` on, infected hosts recover at rate
``gamma`` and susceptible hosts are vaccinated at rate ``theta``. The state
tracked per host is the probability of being infected (``I``) or recovered
(``R``); the susceptible probability is always ``1 - I - R`` and is never
stored. The running economic loss ``integral of sum_i I_i`` is integrated
alongside the state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import Network

#: Allowed overshoot of [0, 1] bounds before integration aborts.
BOX_TOLERANCE = 1e-9


class IntegrationError(RuntimeError):
    """State left the probability box by more than the tolerance."""


@dataclass(frozen=True)
class ModelParams:
    """Dynamic rates plus the remedy delay and time horizon."""

    beta: float  # infection force per infected in-neighbor
    gamma: float  # recovery rate, active from tau on
    theta: float  # vaccination rate, active from tau on
    tau: float  # delay from outbreak to remedy release
    horizon: float  # end of the evaluation window

    def __post_init__(self):
        if self.beta <= 0 or self.gamma <= 0 or self.theta <= 0:
            raise ValueError("rates beta, gamma, theta must be positive")
        if not 0 < self.tau < self.horizon:
            raise ValueError("need 0 < tau < horizon")


@dataclass(frozen=True)
class InitialCondition:
    """Per-host infection probabilities at time zero (recovered starts at 0)."""

    i0: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.i0, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError("i0 must be one-dimensional")
        if arr.size < 1:
            raise ValueError("i0 must cover at least one host")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("i0 entries must lie in [0, 1]")
        object.__setattr__(self, "i0", arr)

    @classmethod
    def single(cls, n: int, index: int) -> "InitialCondition":
        """One host infected with certainty; all others susceptible."""
        if not 0 <= index < n:
            raise ValueError("seed index out of range")
        i0 = np.zeros(n)
        i0[index] = 1.0
        return cls(i0)

    @classmethod
    def random_single(cls, n: int, rng: np.random.Generator) -> "InitialCondition":
        return cls.single(n, int(rng.integers(n)))

    @classmethod
    def uniform(cls, n: int, p0: float) -> "InitialCondition":
        """Every host infected with the same probability ``p0``."""
        return cls(np.full(n, float(p0)))


@dataclass(frozen=True)
class Trajectory:
    """Probability trajectories on a grid that contains ``tau`` and the horizon
    exactly, plus the running loss integral."""

    times: np.ndarray  # (m,)
    infected: np.ndarray  # (m, n)
    recovered: np.ndarray  # (m, n)
    cumulative_loss: np.ndarray  # (m,)
    tau: float
    horizon: float

    @property
    def n(self) -> int:
        return self.infected.shape[1]


def rhs_phase1(infected: np.ndarray, net: Network, beta: float) -> np.ndarray:
    """dI/dt before the remedy: pure infection pressure, no recovery."""
    return beta * (1.0 - infected) * (net.in_matrix @ infected)


def rhs_phase2(
    infected: np.ndarray, recovered: np.ndarray, net: Network, params: ModelParams
) -> tuple[np.ndarray, np.ndarray]:
    """(dI/dt, dR/dt) once recovery and vaccination are active."""
    susceptible = 1.0 - infected - recovered
    pressure = net.in_matrix @ infected
    d_inf = params.beta * susceptible * pressure - params.gamma * infected
    d_rec = params.theta * susceptible + params.gamma * infected
    return d_inf, d_rec


def _leg_times(t0: float, t1: float, step: float) -> np.ndarray:
    """Grid ``t0, t0+step, ...`` with the final substep shortened so the last
    point is exactly ``t1``."""
    span = t1 - t0
    n_round = round(span / step)
    if n_round >= 1 and math.isclose(n_round * step, span, rel_tol=1e-9, abs_tol=1e-12):
        times = t0 + step * np.arange(n_round + 1)
    else:
        n_full = int(math.floor(span / step))
        times = t0 + step * np.arange(n_full + 2)
    times[0] = t0
    times[-1] = t1
    return times


def _check_box(values: np.ndarray, label: str) -> None:
    if values.min() < -BOX_TOLERANCE or values.max() > 1.0 + BOX_TOLERANCE:
        raise IntegrationError(
            f"{label} left [0, 1] by more than {BOX_TOLERANCE}; reduce the step size"
        )


def integrate(
    net: Network, params: ModelParams, init: InitialCondition, step: float = 0.01
) -> Trajectory:
    """Integrate the two-phase dynamics with classical fixed-step RK4.

    The run is split into the legs ``[0, tau]`` and ``[tau, horizon]``; the
    last substep of each leg is shortened so the grid lands on ``tau`` and the
    horizon exactly. State values are clamped to ``[0, 1]`` within
    ``BOX_TOLERANCE``; larger excursions raise ``IntegrationError`` (the step
    is too coarse).
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if step > params.tau or step > params.horizon - params.tau:
        raise ValueError("step must not exceed either integration leg")
    if init.i0.size != net.n:
        raise ValueError("initial condition length does not match the network")

    # Dense matvec beats sparse dispatch overhead up to a few hundred hosts.
    matrix = net.in_matrix.toarray() if net.n <= 512 else net.in_matrix
    beta, gamma, theta = params.beta, params.gamma, params.theta

    times1 = _leg_times(0.0, params.tau, step)
    times2 = _leg_times(params.tau, params.horizon, step)
    m = times1.size + times2.size - 1
    infected = np.empty((m, net.n))
    recovered = np.zeros((m, net.n))
    loss = np.empty(m)

    # State updates use compensated (Kahan) summation: long fixed-step runs
    # otherwise accumulate enough rounding noise to mask the method's order.
    inf = init.i0.copy()
    inf_comp = np.zeros(net.n)
    running_loss = 0.0
    loss_comp = 0.0
    infected[0] = inf
    loss[0] = 0.0

    def _advance(
        values: np.ndarray, comp: np.ndarray, increment: np.ndarray, label: str
    ) -> np.ndarray:
        term = increment - comp
        updated = values + term
        comp[:] = (updated - values) - term
        _check_box(updated, label)
        clipped = np.clip(updated, 0.0, 1.0)
        comp[clipped != updated] = 0.0
        return clipped

    # Leg 1: infection only; recovered stays identically zero.
    for idx in range(times1.size - 1):
        h = times1[idx + 1] - times1[idx]
        k1 = beta * (1.0 - inf) * (matrix @ inf)
        s1 = inf + 0.5 * h * k1
        k2 = beta * (1.0 - s1) * (matrix @ s1)
        s2 = inf + 0.5 * h * k2
        k3 = beta * (1.0 - s2) * (matrix @ s2)
        s3 = inf + h * k3
        k4 = beta * (1.0 - s3) * (matrix @ s3)
        gain = (h / 6.0) * (inf.sum() + 2.0 * s1.sum() + 2.0 * s2.sum() + s3.sum()) - loss_comp
        new_loss = running_loss + gain
        loss_comp = (new_loss - running_loss) - gain
        running_loss = new_loss
        increment = (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        inf = _advance(inf, inf_comp, increment, "infected probability")
        infected[idx + 1] = inf
        loss[idx + 1] = running_loss

    # Leg 2: infection, recovery, vaccination.
    rec = np.zeros(net.n)
    rec_comp = np.zeros(net.n)
    offset = times1.size - 1

    def _derivs(i_vec: np.ndarray, r_vec: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        sus = 1.0 - i_vec - r_vec
        infection_gain = gamma * i_vec
        d_inf = beta * sus * (matrix @ i_vec) - infection_gain
        d_rec = theta * sus + infection_gain
        return d_inf, d_rec

    for idx in range(times2.size - 1):
        h = times2[idx + 1] - times2[idx]
        ki1, kr1 = _derivs(inf, rec)
        i1, r1 = inf + 0.5 * h * ki1, rec + 0.5 * h * kr1
        ki2, kr2 = _derivs(i1, r1)
        i2, r2 = inf + 0.5 * h * ki2, rec + 0.5 * h * kr2
        ki3, kr3 = _derivs(i2, r2)
        i3, r3 = inf + h * ki3, rec + h * kr3
        ki4, kr4 = _derivs(i3, r3)
        gain = (h / 6.0) * (inf.sum() + 2.0 * i1.sum() + 2.0 * i2.sum() + i3.sum()) - loss_comp
        new_loss = running_loss + gain
        loss_comp = (new_loss - running_loss) - gain
        running_loss = new_loss
        inf = _advance(inf, inf_comp, (h / 6.0) * (ki1 + 2.0 * ki2 + 2.0 * ki3 + ki4),
                       "infected probability")
        rec = _advance(rec, rec_comp, (h / 6.0) * (kr1 + 2.0 * kr2 + 2.0 * kr3 + kr4),
                       "recovered probability")
        if np.max(inf + rec) > 1.0 + BOX_TOLERANCE:
            raise IntegrationError("infected + recovered exceeded 1; reduce the step size")
        row = offset + idx + 1
        infected[row] = inf
        recovered[row] = rec
        loss[row] = running_loss

    times = np.concatenate([times1, times2[1:]])
    return Trajectory(
        times=times,
        infected=infected,
        recovered=recovered,
        cumulative_loss=loss,
        tau=params.tau,
        horizon=params.horizon,
    )


def trajectory_to_csv(traj: Trajectory, target) -> None:
    """Write ``t,loss,I_0..,R_0..`` rows at full double precision."""
    n = traj.n
    header = (
        "t,loss,"
        + ",".join(f"I_{i}" for i in range(n))
        + ","
        + ",".join(f"R_{i}" for i in range(n))
    )
    lines = [header]
    for k in range(traj.times.size):
        fields = [traj.times[k], traj.cumulative_loss[k], *traj.infected[k], *traj.recovered[k]]
        lines.append(",".join(f"{x:.17g}" for x in fields))
    text = "\n".join(lines) + "\n"
    if isinstance(target, (str, Path)):
        Path(target).write_text(text, encoding="utf-8")
    else:
        target.write(text)
