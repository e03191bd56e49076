"""Adjacency matrices, acyclicity, essential graphs, SHD and random DAGs.

Adjacency convention: ``g[i, j] == 1`` encodes the edge ``i -> j``; column
``j`` therefore lists the parents of node ``j``.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from math import comb

import numpy as np

from ._validation import check_adjacency, check_rng


# ---------------------------------------------------------------------------
# acyclicity
# ---------------------------------------------------------------------------

def is_acyclic(g) -> bool:
    """Return True iff the hard graph ``g`` admits a topological order."""
    g = check_adjacency(g, hard=True)
    return topological_order(g) is not None


def topological_order(g):
    """Kahn's algorithm; returns a list of nodes or None if ``g`` has a cycle."""
    g = np.asarray(g) != 0
    d = g.shape[0]
    indeg = g.sum(axis=0).astype(int)
    stack = [i for i in range(d) if indeg[i] == 0]
    order = []
    while stack:
        i = stack.pop()
        order.append(i)
        for j in np.flatnonzero(g[i]):
            indeg[j] -= 1
            if indeg[j] == 0:
                stack.append(j)
    return order if len(order) == d else None


def batch_is_acyclic(gs: np.ndarray) -> np.ndarray:
    """Vectorized acyclicity check for a stack of hard graphs ``(..., d, d)``.

    A graph is a DAG iff its boolean path matrix vanishes after ``d`` steps.
    """
    gs = np.asarray(gs) != 0
    d = gs.shape[-1]
    if d == 0:
        return np.ones(gs.shape[:-2], dtype=bool)
    g = gs.astype(np.float64)
    reach = g.copy()
    # reach^(2^m) covers walks up to length 2^m; d steps suffice
    length = 1
    while length < d:
        reach = np.minimum(reach + reach @ reach, 1.0)
        length *= 2
    return ~np.any(np.diagonal(reach, axis1=-2, axis2=-1) > 0, axis=-1)


def _matrix_power(a: np.ndarray, n: int) -> np.ndarray:
    """Exact integer power of a (stack of) square matrices by repeated squaring."""
    if n == 0:
        return np.broadcast_to(np.eye(a.shape[-1]), a.shape).copy()
    result = None
    base = a
    while n:
        if n & 1:
            result = base if result is None else result @ base
        n >>= 1
        if n:
            base = base @ base
    return result


def acyclicity_penalty(g, d: int | None = None):
    """Cyclicity ``tr[(I + g/d)^d] - d``; zero exactly for hard DAGs.

    Accepts soft matrices and stacks ``(..., d, d)``.
    """
    g = np.asarray(g, dtype=np.float64)
    if d is None:
        d = g.shape[-1]
    m = np.eye(g.shape[-1]) + g / d
    p = _matrix_power(m, d)
    return np.trace(p, axis1=-2, axis2=-1) - d


def acyclicity_penalty_grad(g, d: int | None = None):
    """Gradient of :func:`acyclicity_penalty`: ``((I + g/d)^(d-1))^T``."""
    g = np.asarray(g, dtype=np.float64)
    if d is None:
        d = g.shape[-1]
    m = np.eye(g.shape[-1]) + g / d
    p = _matrix_power(m, d - 1)
    return np.swapaxes(p, -1, -2)


# ---------------------------------------------------------------------------
# essential graphs
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Cpdag:
    """Partially directed graph.

    ``adj[i, j] == 1`` and ``adj[j, i] == 0`` is the directed edge ``i -> j``;
    ``adj[i, j] == adj[j, i] == 1`` is the undirected edge ``i -- j``.
    """

    adj: np.ndarray

    def __post_init__(self):
        a = np.array(self.adj, dtype=np.int8)
        a.setflags(write=False)
        object.__setattr__(self, "adj", a)

    @property
    def d(self) -> int:
        return self.adj.shape[0]

    @property
    def directed_edges(self) -> set[tuple[int, int]]:
        a = self.adj
        return {(int(i), int(j)) for i, j in zip(*np.nonzero(a & (1 - a.T)))}

    @property
    def undirected_edges(self) -> set[frozenset[int]]:
        a = self.adj
        return {frozenset((int(i), int(j))) for i, j in zip(*np.nonzero(a & a.T)) if i < j}

    def __eq__(self, other):
        if not isinstance(other, Cpdag):
            return NotImplemented
        return self.adj.shape == other.adj.shape and bool(np.all(self.adj == other.adj))

    def __hash__(self):
        return hash((self.adj.shape, self.adj.tobytes()))

    def __repr__(self):
        return (f"Cpdag(d={self.d}, directed={sorted(self.directed_edges)}, "
                f"undirected={sorted(tuple(sorted(e)) for e in self.undirected_edges)})")


def dag_to_cpdag(g) -> Cpdag:
    """Essential graph of the Markov equivalence class of the DAG ``g``.

    Skeleton plus v-structures, closed under Meek's orientation rules 1-3.
    """
    g = check_adjacency(g, hard=True).astype(np.int8)
    if topological_order(g) is None:
        raise ValueError("dag_to_cpdag requires an acyclic graph")
    d = g.shape[0]
    skel = (g | g.T).astype(bool)
    a = skel.astype(np.int8)  # start fully undirected

    for j in range(d):
        parents = np.flatnonzero(g[:, j])
        for i, k in itertools.combinations(parents, 2):
            if not skel[i, k]:
                a[j, i] = 0
                a[j, k] = 0

    def directed(x, y):
        return a[x, y] == 1 and a[y, x] == 0

    def undirected(x, y):
        return a[x, y] == 1 and a[y, x] == 1

    changed = True
    while changed:
        changed = False
        for b, c in itertools.permutations(range(d), 2):
            if not undirected(b, c):
                continue
            orient = False
            # R1: a -> b -- c with a, c nonadjacent
            for x in range(d):
                if x != c and directed(x, b) and not skel[x, c]:
                    orient = True
                    break
            # R2: b -> x -> c with b -- c
            if not orient:
                for x in range(d):
                    if directed(b, x) and directed(x, c):
                        orient = True
                        break
            # R3: b -- x -> c, b -- y -> c, x, y nonadjacent
            if not orient:
                cands = [x for x in range(d) if undirected(b, x) and directed(x, c)]
                for x, y in itertools.combinations(cands, 2):
                    if not skel[x, y]:
                        orient = True
                        break
            if orient:
                a[c, b] = 0
                changed = True
    return Cpdag(a)


def shd(a: Cpdag, b: Cpdag) -> int:
    """Number of node pairs whose edge mark differs between two CPDAGs.

    Marks are absent, ``i -> j``, ``j -> i`` or undirected; a reversal or a
    directed/undirected switch counts once.
    """
    if a.adj.shape != b.adj.shape:
        raise ValueError(f"dimension mismatch: {a.d} vs {b.d}")
    x, y = a.adj, b.adj
    iu = np.triu_indices(a.d, k=1)
    diff = (x[iu] != y[iu]) | (x.T[iu] != y.T[iu])
    return int(diff.sum())


# ---------------------------------------------------------------------------
# random graphs and priors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GraphPrior:
    """Structure prior.

    ``kind`` is ``"er"`` (independent edges with probability ``q``; ``None``
    means ``4 / (d - 1)``, i.e. ``2d`` expected edges), ``"sf"`` (power-law
    in-degree) or ``"uniform"``.
    """

    kind: str = "er"
    q: float | None = None

    def __post_init__(self):
        if self.kind not in ("er", "sf", "uniform"):
            raise ValueError(f"unknown graph prior kind {self.kind!r}")
        if self.q is not None and not 0.0 < self.q < 1.0:
            raise ValueError(f"edge probability q must lie in (0, 1), got {self.q}")

    def edge_prob(self, d: int) -> float:
        if self.q is not None:
            return self.q
        return min(4.0 / (d - 1), 0.5) if d > 2 else 0.5


def sample_random_dag(spec: GraphPrior, d: int, rng=None, q: float | None = None) -> np.ndarray:
    """Draw a random DAG.

    Erdos-Renyi: uniform node order, each compatible edge kept with
    probability ``q``. Scale-free: preferential attachment where every
    arriving node sends up to two edges to earlier nodes.

    ``q`` overrides the prior's edge probability and may be 0 or 1 here.
    """
    if d < 2:
        raise ValueError("need d >= 2")
    rng = check_rng(rng)
    perm = rng.permutation(d)
    g = np.zeros((d, d), dtype=np.int8)
    if spec.kind in ("er", "uniform"):
        p = spec.edge_prob(d) if q is None else q
        upper = np.triu(rng.random((d, d)) < p, k=1)
        g[np.ix_(perm, perm)] = upper
        return g
    # scale-free: node t attaches to earlier nodes with prob ~ (degree + 1)
    deg = np.zeros(d)
    for t in range(1, d):
        m = min(2, t)
        w = deg[:t] + 1.0
        targets = rng.choice(t, size=m, replace=False, p=w / w.sum())
        for s in targets:
            g[perm[t], perm[s]] = 1
            deg[s] += 1
        deg[t] += m
    return g


def log_graph_prior(g, spec: GraphPrior) -> float | np.ndarray:
    """Unnormalized log prior; accepts soft matrices and stacks ``(..., d, d)``."""
    g = np.asarray(g, dtype=np.float64)
    d = g.shape[-1]
    if spec.kind == "uniform":
        return np.zeros(g.shape[:-2]) if g.ndim > 2 else 0.0
    if spec.kind == "er":
        q = spec.edge_prob(d)
        n_edges = g.sum(axis=(-2, -1))
        return n_edges * np.log(q) + (comb(d, 2) - n_edges) * np.log1p(-q)
    indeg = g.sum(axis=-2)
    return -3.0 * np.log1p(indeg).sum(axis=-1)


def log_graph_prior_grad(g, spec: GraphPrior) -> np.ndarray:
    """Gradient of :func:`log_graph_prior` with respect to (soft) ``g``."""
    g = np.asarray(g, dtype=np.float64)
    d = g.shape[-1]
    if spec.kind == "uniform":
        return np.zeros_like(g)
    if spec.kind == "er":
        q = spec.edge_prob(d)
        return np.full_like(g, np.log(q) - np.log1p(-q))
    indeg = g.sum(axis=-2, keepdims=True)
    return np.broadcast_to(-3.0 / (1.0 + indeg), g.shape).copy()


# ---------------------------------------------------------------------------
# enumeration and serialization
# ---------------------------------------------------------------------------

def enumerate_dags(d: int) -> np.ndarray:
    """All labelled DAGs on ``d`` nodes as a ``(n, d, d)`` int8 array.

    Generated as upper-triangular graphs under every node permutation, then
    deduplicated; ordering is deterministic.
    """
    if d < 1 or d > 5:
        raise ValueError("exhaustive DAG enumeration supports 1 <= d <= 5")
    iu = np.triu_indices(d, k=1)
    n_pairs = len(iu[0])
    bits = ((np.arange(2 ** n_pairs)[:, None] >> np.arange(n_pairs)) & 1).astype(np.int8)
    upper = np.zeros((len(bits), d, d), dtype=np.int8)
    upper[:, iu[0], iu[1]] = bits
    seen = {}
    for perm in itertools.permutations(range(d)):
        p = np.array(perm)
        gs = np.zeros_like(upper)
        gs[:, p[:, None], p[None, :]] = upper
        for g in gs:
            seen.setdefault(g.tobytes(), g)
    keys = sorted(seen)
    return np.stack([seen[k] for k in keys])


def count_dags(d: int) -> int:
    """Robinson's recurrence for the number of labelled DAGs."""
    a = [1]
    for n in range(1, d + 1):
        a.append(sum((-1) ** (k + 1) * comb(n, k) * 2 ** (k * (n - k)) * a[n - k]
                     for k in range(1, n + 1)))
    return a[d]


def graph_to_json(g) -> dict:
    g = check_adjacency(g, hard=True)
    return {"d": int(g.shape[0]), "edges": [[int(i), int(j)] for i, j in zip(*np.nonzero(g))]}


def graph_from_json(obj) -> np.ndarray:
    if isinstance(obj, str):
        obj = json.loads(obj)
    d = int(obj["d"])
    g = np.zeros((d, d), dtype=np.int8)
    for i, j in obj["edges"]:
        if i == j:
            raise ValueError("self-loops are not allowed")
        g[i, j] = 1
    return g
