"""Exact stochastic ground truth for the two-phase spreading process.

Two independent references for the per-host dynamics: event-driven sampling of
the continuous-time Markov chain (any network size) and direct integration of
the Kolmogorov forward equations over all ``3**n`` joint states (tiny
networks). Both use the exact rate description: a susceptible host is infected
at rate ``beta`` times its number of infected in-neighbors at all times; from
``tau`` on, infected hosts recover at rate ``gamma`` and susceptible hosts are
vaccinated at rate ``theta``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .dynamics import ModelParams
from .graph import Network

SUSCEPTIBLE, INFECTED, RECOVERED = 0, 1, 2

#: Master-equation cap: 3**10 = 59049 joint states.
MASTER_EQUATION_MAX_NODES = 10


def single_infected_state(n: int, index: int = 0) -> np.ndarray:
    """Initial host labels with exactly one infected host."""
    state = np.zeros(n, dtype=np.int8)
    state[index] = INFECTED
    return state


@dataclass(frozen=True)
class GillespieResult:
    """One sample path: (time, host, new label) events plus realized loss."""

    events: tuple[tuple[float, int, int], ...]
    loss: float


@dataclass(frozen=True)
class MarginalEstimate:
    """Monte Carlo per-host marginals with binomial standard errors."""

    times: np.ndarray
    mean_infected: np.ndarray  # (m, n)
    mean_recovered: np.ndarray
    stderr_infected: np.ndarray
    stderr_recovered: np.ndarray
    runs: int


@dataclass(frozen=True)
class ExactMarginals:
    times: np.ndarray
    infected: np.ndarray  # (m, n)
    recovered: np.ndarray


def _validate_init(net: Network, init: np.ndarray) -> np.ndarray:
    state = np.asarray(init, dtype=np.int8)
    if state.shape != (net.n,):
        raise ValueError("initial state length does not match the network")
    if not np.all((state >= 0) & (state <= 2)):
        raise ValueError("host labels must be 0 (susceptible), 1 (infected), or 2 (recovered)")
    return state


def gillespie_run(net: Network, params: ModelParams, init, seed) -> GillespieResult:
    """Statistically exact sample path of the two-phase chain on ``[0, horizon]``.

    Standard event-driven simulation within each phase. When the sampled
    waiting time would cross ``tau`` the clock is advanced to ``tau`` and the
    waiting time is redrawn under the phase-2 rates, which is exact because
    exponential clocks are memoryless. ``seed`` may be an integer or a numpy
    ``SeedSequence``.
    """
    state = _validate_init(net, init).tolist()
    n = net.n
    in_nb = net.in_neighbors
    out_nb = net.out_neighbors
    rng = np.random.default_rng(seed)

    infected_in = [sum(1 for j in in_nb[i] if state[j] == INFECTED) for i in range(n)]
    num_infected = sum(1 for s in state if s == INFECTED)
    beta, gamma, theta = params.beta, params.gamma, params.theta
    tau, horizon = params.tau, params.horizon

    t = 0.0
    loss = 0.0
    events: list[tuple[float, int, int]] = []

    while True:
        remedy_active = t >= tau
        rates: list[float] = []
        targets: list[tuple[int, int]] = []
        for i in range(n):
            if state[i] == SUSCEPTIBLE:
                if infected_in[i]:
                    rates.append(beta * infected_in[i])
                    targets.append((i, INFECTED))
                if remedy_active:
                    rates.append(theta)
                    targets.append((i, RECOVERED))
            elif state[i] == INFECTED and remedy_active:
                rates.append(gamma)
                targets.append((i, RECOVERED))
        total = sum(rates)

        if total == 0.0:
            if not remedy_active:
                loss += num_infected * (tau - t)
                t = tau
                continue
            loss += num_infected * (horizon - t)
            break

        wait = rng.exponential(1.0 / total)
        if not remedy_active and t + wait >= tau:
            loss += num_infected * (tau - t)
            t = tau
            continue
        if t + wait >= horizon:
            loss += num_infected * (horizon - t)
            break
        loss += num_infected * wait
        t += wait

        draw = rng.random() * total
        acc = 0.0
        chosen = len(rates) - 1
        for idx, rate in enumerate(rates):
            acc += rate
            if draw < acc:
                chosen = idx
                break
        node, new_label = targets[chosen]
        old_label = state[node]
        state[node] = new_label
        if new_label == INFECTED:
            num_infected += 1
            for other in out_nb[node]:
                infected_in[other] += 1
        elif old_label == INFECTED:
            num_infected -= 1
            for other in out_nb[node]:
                infected_in[other] -= 1
        events.append((t, node, new_label))

    return GillespieResult(events=tuple(events), loss=loss)


def states_at(net: Network, init, result: GillespieResult, grid: np.ndarray) -> np.ndarray:
    """Host labels at each grid time for one sample path (right-continuous)."""
    state = _validate_init(net, init).copy()
    grid = np.asarray(grid, dtype=np.float64)
    out = np.empty((grid.size, net.n), dtype=np.int8)
    ptr = 0
    for ev_time, node, new_label in result.events:
        while ptr < grid.size and grid[ptr] < ev_time:
            out[ptr] = state
            ptr += 1
        state[node] = new_label
    while ptr < grid.size:
        out[ptr] = state
        ptr += 1
    return out


def estimate_marginals(
    net: Network, params: ModelParams, init, runs: int, grid, seed: int
) -> MarginalEstimate:
    """Empirical per-host marginals over independent sample paths.

    Each run draws from its own child of ``seed``, so estimates are
    reproducible and runs can be distributed freely.
    """
    if runs < 1:
        raise ValueError("need at least one run")
    grid = np.asarray(grid, dtype=np.float64)
    count_inf = np.zeros((grid.size, net.n), dtype=np.int64)
    count_rec = np.zeros((grid.size, net.n), dtype=np.int64)
    children = np.random.SeedSequence(seed).spawn(runs)
    for child in children:
        result = gillespie_run(net, params, init, child)
        labels = states_at(net, init, result, grid)
        count_inf += labels == INFECTED
        count_rec += labels == RECOVERED
    mean_inf = count_inf / runs
    mean_rec = count_rec / runs
    return MarginalEstimate(
        times=grid,
        mean_infected=mean_inf,
        mean_recovered=mean_rec,
        stderr_infected=np.sqrt(mean_inf * (1.0 - mean_inf) / runs),
        stderr_recovered=np.sqrt(mean_rec * (1.0 - mean_rec) / runs),
        runs=runs,
    )


def realized_loss_stats(
    net: Network, params: ModelParams, init, runs: int, seed: int
) -> tuple[float, float]:
    """Mean and standard error of the per-path realized loss."""
    if runs < 1:
        raise ValueError("need at least one run")
    losses = np.empty(runs)
    children = np.random.SeedSequence(seed).spawn(runs)
    for k, child in enumerate(children):
        losses[k] = gillespie_run(net, params, init, child).loss
    return float(losses.mean()), float(losses.std(ddof=1) / np.sqrt(runs))


def _encode(state: np.ndarray) -> int:
    code = 0
    for i, label in enumerate(state):
        code += int(label) * 3**i
    return code


def _build_generators(net: Network, params: ModelParams) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Sparse forward generators ``G`` with ``d pi/dt = G @ pi`` for each phase."""
    n = net.n
    size = 3**n
    powers = 3 ** np.arange(n, dtype=np.int64)
    codes = np.arange(size, dtype=np.int64)
    digits = (codes[:, None] // powers[None, :]) % 3  # (size, n)
    infected = (digits == INFECTED).astype(np.float64)
    susceptible = digits == SUSCEPTIBLE
    # infected in-neighbor count of host i in each joint state
    pressure = infected @ net.in_matrix.T.toarray()  # (size, n)

    def assemble(transitions: list[tuple[np.ndarray, np.ndarray, np.ndarray]]) -> sp.csr_matrix:
        rows: list[np.ndarray] = []
        cols: list[np.ndarray] = []
        vals: list[np.ndarray] = []
        for sources, destinations, rates in transitions:
            rows.append(destinations)
            cols.append(sources)
            vals.append(rates)
            rows.append(sources)
            cols.append(sources)
            vals.append(-rates)
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(size, size),
        )

    infection: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
    remedy: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
    for i in range(n):
        sus_i = np.flatnonzero(susceptible[:, i] & (pressure[:, i] > 0))
        infection.append((sus_i, sus_i + powers[i], params.beta * pressure[sus_i, i]))
        sus_all = np.flatnonzero(susceptible[:, i])
        remedy.append((sus_all, sus_all + 2 * powers[i], np.full(sus_all.size, params.theta)))
        inf_i = np.flatnonzero(digits[:, i] == INFECTED)
        remedy.append((inf_i, inf_i + powers[i], np.full(inf_i.size, params.gamma)))

    phase1 = assemble(infection)
    phase2 = assemble(infection + remedy)
    return phase1, phase2


def _rk4_matrix_path(
    generator_for: callable, y0: np.ndarray, checkpoints: np.ndarray, tau: float, max_step: float
) -> np.ndarray:
    """RK4 through sorted checkpoints, inserting ``tau`` as a phase boundary."""
    points = np.unique(np.concatenate([checkpoints, [0.0, tau]]))
    points = points[points <= checkpoints.max() + 1e-15] if checkpoints.size else points
    out = np.empty((checkpoints.size, y0.size))
    y = y0.copy()
    t = 0.0
    ptr = 0
    while ptr < checkpoints.size and checkpoints[ptr] <= t:
        out[ptr] = y
        ptr += 1
    for target in points[points > 0.0]:
        span = target - t
        if span <= 0:
            continue
        gen = generator_for(t)
        nsub = max(1, int(np.ceil(span / max_step - 1e-12)))
        h = span / nsub
        for _ in range(nsub):
            k1 = gen @ y
            k2 = gen @ (y + 0.5 * h * k1)
            k3 = gen @ (y + 0.5 * h * k2)
            k4 = gen @ (y + h * k3)
            y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = target
        while ptr < checkpoints.size and checkpoints[ptr] <= t + 1e-15:
            out[ptr] = y
            ptr += 1
    return out


def master_equation_joint(
    net: Network, params: ModelParams, init, grid, max_step: float = 0.005
) -> np.ndarray:
    """Exact joint distribution over all ``3**n`` host-label states at each
    grid time; refuses networks with more than 10 hosts.

    Joint states are encoded base-3 with host ``i`` contributing digit
    ``3**i``. The distribution must stay normalized to within 1e-8 or the run
    aborts.
    """
    if net.n > MASTER_EQUATION_MAX_NODES:
        raise ValueError(
            f"master equation supports at most {MASTER_EQUATION_MAX_NODES} hosts "
            f"(3**n joint states); got n={net.n}"
        )
    state = _validate_init(net, init)
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be non-empty and strictly increasing")
    if grid[0] < 0 or grid[-1] > params.horizon:
        raise ValueError("grid must lie within [0, horizon]")
    if max_step > 0.005:
        raise ValueError("master-equation step must be at most 0.005")

    phase1, phase2 = _build_generators(net, params)
    pi0 = np.zeros(3**net.n)
    pi0[_encode(state)] = 1.0

    def generator_for(t: float) -> sp.csr_matrix:
        return phase1 if t < params.tau else phase2

    joint = _rk4_matrix_path(generator_for, pi0, grid, params.tau, max_step)
    totals = joint.sum(axis=1)
    worst = float(np.abs(totals - 1.0).max())
    if worst > 1e-8:
        raise RuntimeError(f"probability mass drifted by {worst:.3e} (> 1e-8)")
    return joint


def master_equation_marginals(
    net: Network, params: ModelParams, init, grid, max_step: float = 0.005
) -> ExactMarginals:
    """Exact per-host infected/recovered probabilities on the grid."""
    grid = np.asarray(grid, dtype=np.float64)
    joint = master_equation_joint(net, params, init, grid, max_step=max_step)
    powers = 3 ** np.arange(net.n, dtype=np.int64)
    digits = (np.arange(3**net.n, dtype=np.int64)[:, None] // powers[None, :]) % 3
    infected = joint @ (digits == INFECTED)
    recovered = joint @ (digits == RECOVERED)
    return ExactMarginals(times=grid, infected=infected, recovered=recovered)


def marginals_to_csv(est: MarginalEstimate | ExactMarginals, target) -> None:
    """Write marginals in the trajectory CSV schema (``t,loss,I_*,R_*``); the
    loss column is the trapezoid integral of the summed infected marginals.
    Monte Carlo estimates carry an extra ``seI_*,seR_*`` block."""
    if isinstance(est, MarginalEstimate):
        infected, recovered = est.mean_infected, est.mean_recovered
        stderr: tuple[np.ndarray, np.ndarray] | None = (est.stderr_infected, est.stderr_recovered)
    else:
        infected, recovered = est.infected, est.recovered
        stderr = None
    n = infected.shape[1]
    columns = ["t", "loss"]
    columns += [f"I_{i}" for i in range(n)] + [f"R_{i}" for i in range(n)]
    if stderr is not None:
        columns += [f"seI_{i}" for i in range(n)] + [f"seR_{i}" for i in range(n)]
    totals = infected.sum(axis=1)
    lines = [",".join(columns)]
    for k in range(est.times.size):
        loss_k = float(np.trapezoid(totals[: k + 1], est.times[: k + 1])) if k else 0.0
        fields = [est.times[k], loss_k, *infected[k], *recovered[k]]
        if stderr is not None:
            fields += [*stderr[0][k], *stderr[1][k]]
        lines.append(",".join(f"{x:.17g}" for x in fields))
    text = "\n".join(lines) + "\n"
    if isinstance(target, (str, Path)):
        Path(target).write_text(text, encoding="utf-8")
    else:
        target.write(text)


def fixture_network(name: str) -> Network:
    """Tiny named validation networks: paths P2/P3 and the 4-host star S4."""
    chains = {"P2": 2, "P3": 3}
    if name in chains:
        n = chains[name]
        neighbors = [
            [j for j in (i - 1, i + 1) if 0 <= j < n] for i in range(n)
        ]
        return Network(n=n, in_neighbors=neighbors, meta={"kind": "loaded", "fixture": name})
    if name == "S4":
        return Network(
            n=4,
            in_neighbors=[[1, 2, 3], [0], [0], [0]],
            meta={"kind": "loaded", "fixture": name},
        )
    raise ValueError(f"unknown fixture {name!r} (expected P2, P3, or S4)")


#: Shared parameter point for the validation fixtures.
FIXTURE_PARAMS = ModelParams(beta=0.01, gamma=0.2, theta=0.1, tau=5.0, horizon=30.0)
