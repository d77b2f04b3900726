"""Host networks: generators, edge-list IO, and degree statistics.

A network is a set of ``n`` hosts plus, for every host ``i``, the list of
hosts that can directly infect ``i`` (its in-neighbors). Undirected networks
store each edge in both neighbor lists.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np
import scipy.sparse as sp

#: New degree-sequence samples drawn before the scale-free generator gives up.
SCALE_FREE_RETRY_BUDGET = 1000
#: Stub-matching attempts per degree sequence before resampling the sequence.
_PAIRING_TRIES = 20


class GraphConstructionError(RuntimeError):
    """A generator exhausted its retry budget without a valid network."""


class EdgeListParseError(ValueError):
    """Malformed edge-list input; ``line_no`` is 1-based."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Network:
    """Immutable host network.

    ``in_neighbors[i]`` lists the hosts that can directly infect host ``i``.
    For undirected networks the relation is symmetric. ``meta`` records
    provenance (generator kind, parameters, seed) for reproducibility.
    """

    n: int
    in_neighbors: tuple[tuple[int, ...], ...]
    directed: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(
            self, "in_neighbors", tuple(tuple(int(j) for j in row) for row in self.in_neighbors)
        )

    @property
    def edge_count(self) -> int:
        stubs = sum(len(row) for row in self.in_neighbors)
        return stubs if self.directed else stubs // 2

    @cached_property
    def degrees(self) -> np.ndarray:
        """In-degree per host (equals plain degree for undirected networks)."""
        return np.array([len(row) for row in self.in_neighbors], dtype=np.int64)

    @cached_property
    def in_matrix(self) -> sp.csr_matrix:
        """Sparse matrix ``M`` with ``M[i, j] = 1`` iff ``j`` can infect ``i``.

        ``M @ x`` sums ``x`` over each host's in-neighbors.
        """
        rows = [i for i, row in enumerate(self.in_neighbors) for _ in row]
        cols = [j for row in self.in_neighbors for j in row]
        data = np.ones(len(cols))
        return sp.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))

    @cached_property
    def out_neighbors(self) -> tuple[tuple[int, ...], ...]:
        """For each host ``j``, the hosts that ``j`` can directly infect."""
        if not self.directed:
            return self.in_neighbors
        out: list[list[int]] = [[] for _ in range(self.n)]
        for i, row in enumerate(self.in_neighbors):
            for j in row:
                out[j].append(i)
        return tuple(tuple(row) for row in out)

    def validate(self) -> None:
        """Raise ``ValueError`` on any structural invariant violation."""
        if self.n < 1:
            raise ValueError("network must have at least one host")
        if len(self.in_neighbors) != self.n:
            raise ValueError("in_neighbors length does not match n")
        for i, row in enumerate(self.in_neighbors):
            if i in row:
                raise ValueError(f"self-loop at node {i}")
            if len(set(row)) != len(row):
                raise ValueError(f"duplicate in-neighbor entries at node {i}")
            for j in row:
                if not 0 <= j < self.n:
                    raise ValueError(f"node index {j} out of range at node {i}")
        if not self.directed:
            neighbor_sets = [set(row) for row in self.in_neighbors]
            for i, row in enumerate(self.in_neighbors):
                for j in row:
                    if i not in neighbor_sets[j]:
                        raise ValueError(f"asymmetric edge {j}->{i} in undirected network")


@dataclass(frozen=True)
class DegreeStats:
    mean_degree: float
    max_degree: int
    degree_variance: float
    estimated_power_exponent: float | None


def degree_stats(net: Network) -> DegreeStats:
    """Summary statistics of the degree sequence.

    The power exponent is a maximum-likelihood fit (continuous approximation
    with lower cutoff 2) over degrees >= 2, or ``None`` when no such degree
    exists.
    """
    deg = net.degrees
    tail = deg[deg >= 2]
    exponent = None
    if tail.size > 0:
        exponent = 1.0 + tail.size / float(np.sum(np.log(tail / 1.5)))
    return DegreeStats(
        mean_degree=float(deg.mean()),
        max_degree=int(deg.max()),
        degree_variance=float(deg.var()),
        estimated_power_exponent=exponent,
    )


def _adjacency_from_edges(n: int, edges: Iterable[tuple[int, int]]) -> list[list[int]]:
    neighbors: list[list[int]] = [[] for _ in range(n)]
    for u, v in edges:
        neighbors[u].append(v)
        neighbors[v].append(u)
    return neighbors


def _is_connected(n: int, neighbors: Sequence[Sequence[int]]) -> bool:
    if n == 0:
        return False
    seen = bytearray(n)
    stack = [0]
    seen[0] = 1
    count = 1
    while stack:
        u = stack.pop()
        for v in neighbors[u]:
            if not seen[v]:
                seen[v] = 1
                count += 1
                stack.append(v)
    return count == n


def _sample_power_law_degrees(
    rng: np.random.Generator, n: int, exponent: float, cdf: np.ndarray
) -> np.ndarray:
    # Inverse-CDF sampling: shared uniforms give coupled sequences across
    # exponents (lower exponent => pointwise larger degrees for equal seeds).
    u = rng.random(n)
    return 1 + np.searchsorted(cdf, u, side="right").astype(np.int64)


def _adjust_degree_sum(rng: np.random.Generator, deg: np.ndarray, target: int, k_max: int) -> None:
    # Unit increments/decrements at random positions until the stub count
    # matches the requested edge count; target is even so parity works out.
    while True:
        diff = target - int(deg.sum())
        if diff == 0:
            return
        if diff > 0:
            candidates = np.flatnonzero(deg < k_max)
            deg[rng.choice(candidates)] += 1
        else:
            candidates = np.flatnonzero(deg > 1)
            deg[rng.choice(candidates)] -= 1


def _pair_stubs(rng: np.random.Generator, deg: np.ndarray) -> list[tuple[int, int]] | None:
    """One configuration-model matching; None if it has a self-loop or multi-edge."""
    stubs = np.repeat(np.arange(deg.size), deg)
    rng.shuffle(stubs)
    pairs = stubs.reshape(-1, 2)
    if np.any(pairs[:, 0] == pairs[:, 1]):
        return None
    lo = np.minimum(pairs[:, 0], pairs[:, 1])
    hi = np.maximum(pairs[:, 0], pairs[:, 1])
    keys = lo * deg.size + hi
    if np.unique(keys).size != keys.size:
        return None
    return list(zip(lo.tolist(), hi.tolist()))


def _component_labels(n: int, neighbors: Sequence[Sequence[int]]) -> tuple[np.ndarray, int]:
    labels = np.full(n, -1, dtype=np.int64)
    count = 0
    for start in range(n):
        if labels[start] >= 0:
            continue
        stack = [start]
        labels[start] = count
        while stack:
            u = stack.pop()
            for v in neighbors[u]:
                if labels[v] < 0:
                    labels[v] = count
                    stack.append(v)
        count += 1
    return labels, count


def _connect_by_edge_swaps(
    rng: np.random.Generator, n: int, edges: list[tuple[int, int]]
) -> list[tuple[int, int]]:
    """Merge components with degree-preserving double-edge swaps.

    Swapping one edge from each of two components for the two cross edges
    keeps every degree, cannot create self-loops or duplicates (the endpoints
    live in different components), and always reduces the component count by
    one, so the repair terminates after components-minus-one swaps.
    """
    edge_set = {tuple(sorted(e)) for e in edges}
    while True:
        neighbors = _adjacency_from_edges(n, edge_set)
        labels, count = _component_labels(n, neighbors)
        if count <= 1:
            return sorted(edge_set)
        by_component: dict[int, list[tuple[int, int]]] = {}
        for edge in sorted(edge_set):
            by_component.setdefault(int(labels[edge[0]]), []).append(edge)
        # merge the two lowest-labelled components that own edges
        first, second = sorted(by_component)[:2]
        u, v = by_component[first][rng.integers(len(by_component[first]))]
        x, y = by_component[second][rng.integers(len(by_component[second]))]
        if rng.random() < 0.5:
            u, v = v, u
        edge_set.remove((min(u, v), max(u, v)))
        edge_set.remove((min(x, y), max(x, y)))
        edge_set.add((min(u, x), max(u, x)))
        edge_set.add((min(v, y), max(v, y)))


def generate_scale_free(n: int, edges: int, exponent: float, seed: int) -> Network:
    """Random connected network with a truncated power-law degree sequence.

    Degrees are drawn from ``P(k) ~ k**-exponent`` on ``[1, n-1]``, minimally
    adjusted so the stub count equals ``2 * edges``, then realized as a simple
    graph by configuration-model matching (self-loops and multi-edges
    rejected). A disconnected realization is made connected by
    degree-preserving cross-component edge swaps, which keeps the sampled
    degree sequence intact; pure resampling practically never yields a
    connected graph at these densities.
    """
    if n < 2:
        raise ValueError("need at least 2 nodes")
    if edges < n - 1:
        raise ValueError("a connected network needs at least n - 1 edges")
    if exponent <= 2:
        raise ValueError("power exponent must exceed 2")
    if edges > n * (n - 1) // 2:
        raise ValueError("too many edges for a simple graph")

    rng = np.random.default_rng(seed)
    ks = np.arange(1, n, dtype=np.float64)
    pmf = ks**-exponent
    cdf = np.cumsum(pmf / pmf.sum())
    target = 2 * edges

    for _ in range(SCALE_FREE_RETRY_BUDGET):
        deg = _sample_power_law_degrees(rng, n, exponent, cdf)
        _adjust_degree_sum(rng, deg, target, k_max=n - 1)
        for _ in range(_PAIRING_TRIES):
            pairs = _pair_stubs(rng, deg)
            if pairs is not None:
                break
        else:
            continue
        pairs = _connect_by_edge_swaps(rng, n, pairs)
        meta = {
            "kind": "scale-free",
            "n": n,
            "edges": edges,
            "exponent": exponent,
            "seed": seed,
        }
        return Network(
            n=n, in_neighbors=_adjacency_from_edges(n, pairs), directed=False, meta=meta
        )

    raise GraphConstructionError(
        f"no simple realization with n={n}, edges={edges}, exponent={exponent} "
        f"within {SCALE_FREE_RETRY_BUDGET} degree-sequence samples"
    )


def generate_small_world(n: int, k: int, rewire_prob: float, seed: int) -> Network:
    """Ring lattice with ``k`` nearest neighbors, each edge rewired with
    probability ``rewire_prob`` (self-loops and duplicate edges avoided).

    The edge count is always ``n * k // 2``. Each lattice edge owns its own
    decision uniform and target stream derived from the seed, so equal seeds
    give tightly coupled realizations across rewiring probabilities: raising
    the probability rewires a superset of edges to the same targets. This
    keeps paired sweeps over the rewiring probability low-variance.
    """
    if k % 2 != 0:
        raise ValueError("k must be even")
    if not 2 <= k < n:
        raise ValueError("need n > k >= 2")
    if not 0.0 <= rewire_prob <= 1.0:
        raise ValueError("rewire_prob must lie in [0, 1]")

    adj: list[set[int]] = [set() for _ in range(n)]
    for j in range(1, k // 2 + 1):
        for u in range(n):
            v = (u + j) % n
            adj[u].add(v)
            adj[v].add(u)

    decision_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))
    decisions = decision_rng.random(n * (k // 2))
    for j in range(1, k // 2 + 1):
        for u in range(n):
            v = (u + j) % n
            edge_index = (j - 1) * n + u
            if decisions[edge_index] >= rewire_prob or len(adj[u]) >= n - 1:
                continue
            target_rng = np.random.default_rng(
                np.random.SeedSequence(seed, spawn_key=(1 + edge_index,))
            )
            w = int(target_rng.integers(n))
            while w == u or w in adj[u]:
                w = int(target_rng.integers(n))
            adj[u].remove(v)
            adj[v].remove(u)
            adj[u].add(w)
            adj[w].add(u)

    neighbors = [sorted(s) for s in adj]
    meta = {"kind": "small-world", "n": n, "k": k, "rewire_prob": rewire_prob, "seed": seed}
    return Network(n=n, in_neighbors=neighbors, directed=False, meta=meta)


def _open_source(source) -> IO[str]:
    if isinstance(source, (str, Path)):
        return open(source, "r", encoding="utf-8")
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(source.decode("utf-8"))
    if hasattr(source, "read"):
        first = source.read(0)
        if isinstance(first, bytes):
            return io.TextIOWrapper(source, encoding="utf-8")
        return source
    raise TypeError(f"cannot read edge list from {type(source).__name__}")


def load_edge_list(source, directed: bool = False) -> Network:
    """Parse a SNAP-style edge list into a network.

    Lines starting with ``#`` are comments; every other line must hold exactly
    two integer tokens. Node labels are re-indexed densely to ``[0, n)`` in
    sorted label order. Duplicate edges are collapsed and self-loops dropped
    (counted in ``meta['self_loops_dropped']``). In directed mode a line
    ``u v`` means ``u`` can directly infect ``v``.
    """
    header: dict[str, str] = {}
    labels: set[int] = set()
    edges: set[tuple[int, int]] = set()
    self_loops = 0
    duplicates = 0

    stream = _open_source(source)
    try:
        for line_no, raw in enumerate(stream, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line.lstrip("#").strip()
                if "=" in body:
                    key, _, value = body.partition("=")
                    header[key.strip()] = value.strip()
                continue
            tokens = line.split()
            if len(tokens) != 2:
                raise EdgeListParseError(
                    f"expected 2 tokens, found {len(tokens)}", line_no=line_no
                )
            try:
                u, v = int(tokens[0]), int(tokens[1])
            except ValueError:
                raise EdgeListParseError(f"non-integer token in {line!r}", line_no=line_no)
            labels.add(u)
            labels.add(v)
            if u == v:
                self_loops += 1
                continue
            key = (u, v) if directed else (min(u, v), max(u, v))
            if key in edges:
                duplicates += 1
            else:
                edges.add(key)
    finally:
        if isinstance(source, (str, Path, bytes, bytearray)):
            stream.close()

    if not edges:
        raise EdgeListParseError("edge list contains no usable edges")

    index = {label: i for i, label in enumerate(sorted(labels))}
    n = len(index)
    neighbors: list[list[int]] = [[] for _ in range(n)]
    for u, v in sorted(edges):
        if directed:
            neighbors[index[v]].append(index[u])
        else:
            neighbors[index[u]].append(index[v])
            neighbors[index[v]].append(index[u])
    meta = {
        "kind": "loaded",
        "self_loops_dropped": self_loops,
        "duplicates_dropped": duplicates,
    }
    if header:
        meta["header"] = header
    return Network(n=n, in_neighbors=[sorted(row) for row in neighbors], directed=directed, meta=meta)


def write_edge_list(net: Network, target) -> None:
    """Write a network in the edge-list format with a ``# key=value`` header.

    Output is deterministic (sorted edges), so identical networks produce
    byte-identical files.
    """
    lines = [f"# {key}={net.meta[key]}" for key in sorted(net.meta) if key != "header"]
    lines.append(f"# directed={net.directed}")
    lines.append(f"# nodes={net.n}")
    lines.append(f"# edges={net.edge_count}")
    pairs: list[tuple[int, int]] = []
    for i, row in enumerate(net.in_neighbors):
        for j in row:
            if net.directed:
                pairs.append((j, i))  # line "j i" means j can infect i
            elif i < j:
                pairs.append((i, j))
    for u, v in sorted(pairs):
        lines.append(f"{u} {v}")
    text = "\n".join(lines) + "\n"
    if isinstance(target, (str, Path)):
        Path(target).write_text(text, encoding="utf-8")
    else:
        target.write(text)
