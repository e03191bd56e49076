"""Structure MCMC over DAGs and its two joint extensions over (G, Theta).

Edge proposals pick a move type (add, delete, reverse) and an ordered node
pair uniformly at random. A move that is impossible or would create a cycle
leaves the graph unchanged, which keeps the proposal symmetric so the
acceptance ratio is exactly the posterior ratio.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import check_data, check_rng
from .graph import GraphPrior, log_graph_prior
from .models import param_prior_log_prob

ADD, DELETE, REVERSE = 0, 1, 2


@dataclass(frozen=True)
class McmcConfig:
    burn_in: int = 100_000
    thinning: int = 10_000
    samples: int = 30
    proposal_scale: float = 0.05
    invalid_moves: str = "stay"

    def __post_init__(self):
        if self.burn_in < 0 or self.thinning < 1 or self.samples < 1:
            raise ValueError("need burn_in >= 0, thinning >= 1 and samples >= 1")
        if not self.proposal_scale > 0:
            raise ValueError(f"proposal_scale must be > 0, got {self.proposal_scale}")
        if self.invalid_moves not in ("stay", "retry"):
            raise ValueError("invalid_moves must be 'stay' or 'retry'")


def reaches(g: np.ndarray, src: int, dst: int) -> bool:
    """Whether a directed path ``src -> ... -> dst`` exists."""
    if src == dst:
        return True
    seen = {src}
    stack = [src]
    while stack:
        v = stack.pop()
        for w in np.flatnonzero(g[v]):
            w = int(w)
            if w == dst:
                return True
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return False


def propose_edge_move(g: np.ndarray, move: int, i: int, j: int):
    """Apply one move to a copy of ``g``; ``None`` if impossible or cyclic.

    Returns ``(new_graph, affected_nodes)``.
    """
    if i == j:
        return None
    if move == ADD:
        if g[i, j] or g[j, i] or reaches(g, j, i):
            return None
        h = g.copy()
        h[i, j] = 1
        return h, (j,)
    if move == DELETE:
        if not g[i, j]:
            return None
        h = g.copy()
        h[i, j] = 0
        return h, (j,)
    if move == REVERSE:
        if not g[i, j]:
            return None
        h = g.copy()
        h[i, j] = 0
        if reaches(h, i, j):
            return None
        h[j, i] = 1
        return h, (i, j)
    raise ValueError(f"unknown move {move}")


class _MoveSource:
    """Buffered uniform draws of (move, i, j) with i != j."""

    def __init__(self, rng, d, chunk=4096):
        self.rng, self.d, self.chunk = rng, d, chunk
        self._fill()

    def _fill(self):
        n, d = self.chunk, self.d
        self.moves = self.rng.integers(3, size=n).tolist()
        i = self.rng.integers(d, size=n)
        j = self.rng.integers(d - 1, size=n)
        j = j + (j >= i)
        self.i, self.j = i.tolist(), j.tolist()
        self.pos = 0

    def draw(self):
        if self.pos == self.chunk:
            self._fill()
        p = self.pos
        self.pos += 1
        return self.moves[p], self.i[p], self.j[p]


def _draw_move(g, source: _MoveSource, retry: bool):
    while True:
        out = propose_edge_move(g, *source.draw())
        if out is not None or not retry:
            return out


def _prior_delta(g, h, graph_prior):
    if graph_prior is None or graph_prior.kind == "uniform":
        return 0.0
    return float(log_graph_prior(h, graph_prior) - log_graph_prior(g, graph_prior))


def _family_delta(scorer, g, h, nodes):
    delta = 0.0
    pow2 = 1 << np.arange(g.shape[0])
    for j in nodes:
        delta += scorer.family(j, int(pow2 @ h[:, j])) - scorer.family(j, int(pow2 @ g[:, j]))
    return delta


@dataclass
class ChainResult:
    graphs: np.ndarray
    params: np.ndarray | None
    acceptance_rate: float
    param_acceptance_rate: float | None = None
    visits: dict | None = None


def structure_mcmc(x, scorer, graph_prior: GraphPrior | None = None,
                   config: McmcConfig | None = None, seed=0, *, init=None,
                   count_visits: bool = False) -> ChainResult:
    """Metropolis-Hastings over DAGs with a decomposable marginal likelihood.

    ``scorer`` exposes ``family(node, parent_mask)``, e.g. ``BGe().scorer(x)``.
    With ``count_visits`` every post-burn-in state is tallied in
    ``visits`` (keyed by graph bytes) in addition to the thinned samples.
    """
    x = check_data(x)
    config = config or McmcConfig()
    rng = check_rng(seed)
    d = x.shape[1]
    g = np.zeros((d, d), dtype=np.int8) if init is None else np.array(init, dtype=np.int8)
    retry = config.invalid_moves == "retry"
    total = config.burn_in + config.thinning * config.samples
    out = np.empty((config.samples, d, d), dtype=np.int8)
    visits: dict[bytes, int] = {}
    accepted = 0
    key = g.tobytes()
    source = _MoveSource(rng, d)
    log_u = np.log(rng.random(total))
    for step in range(total):
        prop = _draw_move(g, source, retry)
        if prop is not None:
            h, nodes = prop
            log_ratio = _family_delta(scorer, g, h, nodes) + _prior_delta(g, h, graph_prior)
            if log_u[step] < log_ratio:
                g = h
                key = g.tobytes()
                accepted += 1
        if step >= config.burn_in:
            k = step - config.burn_in
            if count_visits:
                visits[key] = visits.get(key, 0) + 1
            if (k + 1) % config.thinning == 0:
                out[k // config.thinning] = g
    return ChainResult(out, None, accepted / max(total, 1), visits=visits if count_visits else None)


def log_joint_density(model, x, g, theta, graph_prior: GraphPrior | None = None) -> float:
    """``log p(G) + log p(Theta) + log p(D | G, Theta)``."""
    lp = 0.0 if graph_prior is None or graph_prior.kind == "uniform" else float(
        log_graph_prior(g, graph_prior))
    return lp + param_prior_log_prob(theta) + model.log_lik(x, g.astype(np.float64), theta)


def log_accept_ratio(model, x, current, proposal, graph_prior: GraphPrior | None = None) -> float:
    """MH log ratio for a symmetric proposal between two ``(G, Theta)`` states."""
    return (log_joint_density(model, x, *proposal, graph_prior)
            - log_joint_density(model, x, *current, graph_prior))


def _joint_chain(x, model, graph_prior, config, seed, init, gibbs):
    x = check_data(x)
    config = config or McmcConfig()
    rng = check_rng(seed)
    d = x.shape[1]
    retry = config.invalid_moves == "retry"
    if init is None:
        g = np.zeros((d, d), dtype=np.int8)
        theta = model.sample_params(rng, d)
    else:
        g, theta = np.array(init[0], dtype=np.int8), np.array(init[1], dtype=np.float64)
    cur = log_joint_density(model, x, g, theta, graph_prior)
    total = config.burn_in + config.thinning * config.samples
    gs = np.empty((config.samples, d, d), dtype=np.int8)
    ths = np.empty((config.samples,) + theta.shape)
    acc_g = acc_t = n_g = n_t = 0
    source = _MoveSource(rng, d)

    def try_state(h, th):
        nonlocal g, theta, cur
        new = log_joint_density(model, x, h, th, graph_prior)
        if np.log(rng.random()) < new - cur:
            g, theta, cur = h, th, new
            return 1
        return 0

    for step in range(total):
        if gibbs:
            prop = _draw_move(g, source, retry)
            n_g += 1
            if prop is not None:
                acc_g += try_state(prop[0], theta)
            n_t += 1
            acc_t += try_state(g, theta + config.proposal_scale * rng.normal(size=theta.shape))
        else:
            prop = _draw_move(g, source, retry)
            h = g if prop is None else prop[0]
            n_g += 1
            ok = try_state(h, theta + config.proposal_scale * rng.normal(size=theta.shape))
            acc_g += ok
        if step >= config.burn_in and (step - config.burn_in + 1) % config.thinning == 0:
            k = (step - config.burn_in) // config.thinning
            gs[k], ths[k] = g, theta
    return ChainResult(gs, ths, acc_g / max(n_g, 1), acc_t / n_t if n_t else None)


def mh_joint(x, model, graph_prior: GraphPrior | None = None, config: McmcConfig | None = None,
             seed=0, *, init=None) -> ChainResult:
    """Each step proposes an edge move and a Gaussian parameter walk together."""
    return _joint_chain(x, model, graph_prior, config, seed, init, gibbs=False)


def gibbs_joint(x, model, graph_prior: GraphPrior | None = None, config: McmcConfig | None = None,
                seed=0, *, init=None) -> ChainResult:
    """Alternates an edge move given Theta with a parameter walk given G."""
    return _joint_chain(x, model, graph_prior, config, seed, init, gibbs=True)
