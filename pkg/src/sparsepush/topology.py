"""Directed graphs, column-stochastic mixing matrices and graph schedules.

Conventions
-----------
An edge ``(src, dst)`` means ``src`` sends to ``dst``. Every node is
implicitly its own in- and out-neighbour; self-loops never appear in
``edges``.

The gossip weight node ``j`` assigns to each of its out-neighbours is
``1 / degree(j)`` where ``degree(j)`` defaults to the out-degree counting the
self-loop. The node keeps the rest of its mass. A graph may override the
degree per node (``nominal_degree``). This keeps the matrix column-stochastic
while letting a single-out-edge ring use unequal send fractions, which is how
the built-in asymmetric 4-node graphs are defined.

With averaging rate ``eta`` the effective matrix is ``I + eta * (W - I)``.
Column ``j`` holds ``eta / degree(j)`` on each out-neighbour row and
``1 - eta * outdeg(j) / degree(j)`` on the diagonal, with ``outdeg`` counting
only non-self edges.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, NumericalFailure

__all__ = [
    "DirectedTopology",
    "MixingMatrix",
    "GraphSchedule",
    "build_directed_ring",
    "build_topology",
    "four_node_graphs",
    "effective_mixing_matrix",
    "schedule_topology_at",
    "spectral_gap",
    "is_strongly_connected",
]


def _reachable(n: int, adjacency: Sequence[Sequence[int]], start: int) -> set[int]:
    seen = {start}
    stack = [start]
    while stack:
        node = stack.pop()
        for nxt in adjacency[node]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return seen


def is_strongly_connected(n: int, edges: Iterable[tuple[int, int]]) -> bool:
    """DFS reachability from node 0 along edges and along reversed edges."""
    if n <= 1:
        return True
    fwd: list[list[int]] = [[] for _ in range(n)]
    rev: list[list[int]] = [[] for _ in range(n)]
    for src, dst in edges:
        fwd[src].append(dst)
        rev[dst].append(src)
    return len(_reachable(n, fwd, 0)) == n and len(_reachable(n, rev, 0)) == n


@dataclass(frozen=True)
class DirectedTopology:
    """A strongly connected directed graph on nodes ``0..n-1``.

    Attributes:
        n: Number of nodes.
        edges: Ordered ``(src, dst)`` pairs, self-loops excluded.
        nominal_degree: Optional per-node send denominator. ``None`` means
            the out-degree including the self-loop.
        name: Free-form label used in logs and configs.
    """

    n: int
    edges: frozenset[tuple[int, int]]
    nominal_degree: tuple[int, ...] | None = None
    name: str = ""
    _out: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)
    _in: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.n < 1:
            raise InvalidArgument(f"a topology needs at least one node, got n={self.n}")
        cleaned = set()
        for edge in self.edges:
            src, dst = (int(v) for v in edge)
            if not (0 <= src < self.n and 0 <= dst < self.n):
                raise InvalidArgument(f"edge {edge} references a node outside 0..{self.n - 1}")
            if src != dst:
                cleaned.add((src, dst))
        object.__setattr__(self, "edges", frozenset(cleaned))
        if not is_strongly_connected(self.n, cleaned):
            raise InvalidArgument(f"topology {self.name or '<unnamed>'} is not strongly connected")
        out = [sorted(dst for src, dst in cleaned if src == i) for i in range(self.n)]
        inn = [sorted(src for src, dst in cleaned if dst == i) for i in range(self.n)]
        object.__setattr__(self, "_out", tuple(tuple(o) for o in out))
        object.__setattr__(self, "_in", tuple(tuple(o) for o in inn))
        if self.nominal_degree is not None:
            degrees = tuple(int(d) for d in self.nominal_degree)
            if len(degrees) != self.n:
                raise InvalidArgument(f"nominal_degree has {len(degrees)} entries for {self.n} nodes")
            for i, d in enumerate(degrees):
                if d < len(out[i]) + 1:
                    raise InvalidArgument(
                        f"nominal_degree[{i}]={d} is below the out-degree {len(out[i]) + 1} of node {i}"
                    )
            object.__setattr__(self, "nominal_degree", degrees)

    def out_neighbours(self, node: int) -> tuple[int, ...]:
        """Non-self out-neighbours of ``node`` in ascending order."""
        return self._out[node]

    def in_neighbours(self, node: int) -> tuple[int, ...]:
        """Non-self in-neighbours of ``node`` in ascending order."""
        return self._in[node]

    def degree(self, node: int) -> int:
        """Send denominator of ``node`` (self-loop included)."""
        if self.nominal_degree is not None:
            return self.nominal_degree[node]
        return len(self._out[node]) + 1

    @property
    def num_edges(self) -> int:
        """Number of non-self directed edges, i.e. messages per round."""
        return len(self.edges)

    def to_dict(self) -> dict:
        data: dict = {"n": self.n, "edges": sorted([list(e) for e in self.edges])}
        if self.nominal_degree is not None:
            data["nominal_degree"] = list(self.nominal_degree)
        if self.name:
            data["name"] = self.name
        return data


def build_directed_ring(n: int, reverse: bool = False) -> DirectedTopology:
    """Ring where node ``i`` sends to ``(i + 1) mod n`` (or ``i - 1`` if ``reverse``)."""
    if n < 2:
        raise InvalidArgument(f"a ring needs n >= 2, got {n}")
    step = -1 if reverse else 1
    edges = frozenset((i, (i + step) % n) for i in range(n))
    return DirectedTopology(n, edges, name="reverse_ring" if reverse else "ring")


def four_node_graphs() -> dict[str, DirectedTopology]:
    """The three asymmetric 4-node directed rings used for rotation experiments.

    Nodes 0 and 2 send half of their mass, nodes 1 and 3 a third, so none of
    the mixing matrices is doubly stochastic.

    ``a``: 0 -> 1 -> 2 -> 3 -> 0
    ``b``: the same ring reversed
    ``c``: 0 -> 2 -> 1 -> 3 -> 0
    """
    degrees = (2, 3, 2, 3)
    cycles = {
        "a": [0, 1, 2, 3],
        "b": [0, 3, 2, 1],
        "c": [0, 2, 1, 3],
    }
    graphs = {}
    for key, order in cycles.items():
        edges = frozenset((order[k], order[(k + 1) % 4]) for k in range(4))
        graphs[key] = DirectedTopology(4, edges, nominal_degree=degrees, name=f"graph_{key}")
    return graphs


def build_topology(spec: dict) -> DirectedTopology:
    """Construct a topology from its config dictionary.

    Accepted forms::

        {"kind": "ring", "n": 4}
        {"kind": "reverse_ring", "n": 4}
        {"kind": "graph_a"}            # also graph_b, graph_c
        {"kind": "single"}             # one isolated node
        {"kind": "edges", "n": 3, "edges": [[0, 1], [1, 2], [2, 0]],
         "nominal_degree": [2, 2, 2]}  # nominal_degree optional
    """
    kind = spec.get("kind", "edges")
    if kind == "ring":
        return build_directed_ring(int(spec["n"]))
    if kind == "reverse_ring":
        return build_directed_ring(int(spec["n"]), reverse=True)
    if kind in ("graph_a", "graph_b", "graph_c"):
        return four_node_graphs()[kind[-1]]
    if kind == "single":
        return DirectedTopology(1, frozenset(), name="single")
    if kind == "edges":
        edges = frozenset((int(a), int(b)) for a, b in spec["edges"])
        nominal = spec.get("nominal_degree")
        return DirectedTopology(
            int(spec["n"]),
            edges,
            nominal_degree=tuple(nominal) if nominal is not None else None,
            name=str(spec.get("name", "")),
        )
    raise InvalidArgument(f"unknown topology kind {kind!r}")


@dataclass(frozen=True)
class MixingMatrix:
    """Effective gossip weights ``I + eta * (W - I)`` for one topology.

    ``weights[i, j]`` is the share of node ``j``'s message that lands on node
    ``i``. Columns sum to one.
    """

    weights: np.ndarray
    eta: float
    topology: DirectedTopology

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    def offsets(self) -> np.ndarray:
        """``weights - I``, the matrix applied to messages in a gossip round."""
        return self.weights - np.eye(self.n)


def effective_mixing_matrix(g: DirectedTopology, eta: float) -> MixingMatrix:
    if not (0.0 < eta <= 1.0):
        raise InvalidArgument(f"eta must lie in (0, 1], got {eta}")
    n = g.n
    w = np.zeros((n, n))
    for j in range(n):
        share = eta / g.degree(j)
        outs = g.out_neighbours(j)
        for i in outs:
            w[i, j] = share
        w[j, j] = 1.0 - share * len(outs)
    w.setflags(write=False)
    return MixingMatrix(w, float(eta), g)


@dataclass(frozen=True)
class GraphSchedule:
    """Topologies visited in order, switching every ``rotation_period`` epochs."""

    topologies: tuple[DirectedTopology, ...]
    rotation_period: int = 1

    def __post_init__(self) -> None:
        topologies = tuple(self.topologies)
        if not topologies:
            raise InvalidArgument("a schedule needs at least one topology")
        if self.rotation_period < 1:
            raise InvalidArgument(f"rotation_period must be >= 1, got {self.rotation_period}")
        sizes = {t.n for t in topologies}
        if len(sizes) != 1:
            raise InvalidArgument(f"schedule mixes node counts {sorted(sizes)}")
        object.__setattr__(self, "topologies", topologies)

    @classmethod
    def static(cls, topology: DirectedTopology) -> "GraphSchedule":
        return cls((topology,), 1)

    @property
    def n(self) -> int:
        return self.topologies[0].n

    def topology_at(self, epoch: int) -> DirectedTopology:
        return schedule_topology_at(self, epoch)


def schedule_topology_at(s: GraphSchedule, epoch: int) -> DirectedTopology:
    if epoch < 0:
        raise InvalidArgument(f"epoch must be non-negative, got {epoch}")
    return s.topologies[(epoch // s.rotation_period) % len(s.topologies)]


def _stationary_vector(w: np.ndarray, tol: float, max_iter: int) -> np.ndarray:
    # Right Perron vector of a column-stochastic matrix, normalized to sum 1.
    n = w.shape[0]
    pi = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        nxt = w @ pi
        nxt /= nxt.sum()
        if np.max(np.abs(nxt - pi)) < tol:
            return nxt
        pi = nxt
    raise NumericalFailure("stationary vector did not converge")


def spectral_gap(m: MixingMatrix | np.ndarray, tol: float = 1e-9, max_iter: int = 100_000) -> float:
    """Return ``1 - |lambda_2|`` of a column-stochastic matrix.

    The Perron eigenpair is deflated (``B = W - pi 1^T``) and the dominant
    eigenvalues of ``B`` are found by orthogonal subspace iteration with a
    Rayleigh-Ritz step. A block of up to four vectors is used because
    directed rings have complex-conjugate eigenvalue pairs of equal modulus,
    for which single-vector power iteration does not settle.
    """
    w = np.asarray(m.weights if isinstance(m, MixingMatrix) else m, dtype=float)
    n = w.shape[0]
    if w.shape != (n, n):
        raise InvalidArgument("mixing matrix must be square")
    if n == 1:
        return 1.0
    pi = _stationary_vector(w, 1e-15, max_iter)
    b = w - np.outer(pi, np.ones(n))
    p = min(n - 1, 4)
    rng = np.random.default_rng(0)
    q, _ = np.linalg.qr(rng.standard_normal((n, p)))
    # Keep the block inside the invariant subspace {x : 1^T x = 0}.
    q -= np.outer(np.ones(n) / n, q.sum(axis=0))
    q, _ = np.linalg.qr(q)
    prev = np.inf
    for _ in range(max_iter):
        bq = b @ q
        h = q.T @ bq
        evals, evecs = np.linalg.eig(h)
        top = int(np.argmax(np.abs(evals)))
        lam = evals[top]
        y = q @ evecs[:, top]
        norm = np.linalg.norm(y)
        residual = np.linalg.norm(b @ y - lam * y) / norm if norm > 0 else 0.0
        est = float(np.abs(lam))
        if (residual <= tol * max(1.0, est) or np.linalg.norm(bq) < tol) and abs(est - prev) <= tol:
            return 1.0 - est
        prev = est
        q, _ = np.linalg.qr(bq)
        if not np.all(np.isfinite(q)):
            break
    raise NumericalFailure(f"spectral gap iteration did not converge in {max_iter} iterations")
