"""Metrics over weighted posterior samples and the exact small-graph posterior."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import check_adjacency
from .graph import GraphPrior, dag_to_cpdag, enumerate_dags, log_graph_prior, shd
from .models import BGe, LinearGaussian


@dataclass
class WeightedPosterior:
    """Hard DAGs (optionally with parameters) and normalized weights."""

    graphs: np.ndarray
    weights: np.ndarray | None = None
    params: np.ndarray | None = None

    def __post_init__(self):
        self.graphs = np.asarray(self.graphs).astype(np.int8)
        if self.graphs.ndim != 3 or self.graphs.shape[0] == 0:
            raise ValueError("posterior needs a nonempty (n, d, d) stack of graphs")
        n = self.graphs.shape[0]
        if self.weights is None:
            self.weights = np.full(n, 1.0 / n)
        else:
            w = np.asarray(self.weights, dtype=np.float64)
            if w.shape != (n,) or np.any(w < 0) or not np.isfinite(w).all():
                raise ValueError("weights must be nonnegative and match the number of graphs")
            if abs(w.sum() - 1.0) > 1e-9:
                w = w / w.sum()
            self.weights = w
        if self.params is not None and len(self.params) != n:
            raise ValueError("parameter count does not match graph count")

    @property
    def d(self) -> int:
        return self.graphs.shape[1]

    def __len__(self):
        return self.graphs.shape[0]


def expected_shd(post: WeightedPosterior, g_star) -> float:
    g_star = check_adjacency(g_star, hard=True)
    if g_star.shape[0] != post.d:
        raise ValueError(f"ground truth has {g_star.shape[0]} nodes, posterior has {post.d}")
    ref = dag_to_cpdag(g_star)
    cache: dict[bytes, int] = {}
    total = 0.0
    for g, w in zip(post.graphs, post.weights):
        key = g.tobytes()
        if key not in cache:
            cache[key] = shd(dag_to_cpdag(g), ref)
        total += w * cache[key]
    return float(total)


def edge_marginals(post: WeightedPosterior) -> np.ndarray:
    m = np.tensordot(post.weights, post.graphs.astype(np.float64), axes=1)
    np.fill_diagonal(m, 0.0)
    return m


def pairwise_marginal(post: WeightedPosterior, edge_a, edge_b) -> float:
    """Posterior probability that both directed edges are present."""
    (i, j), (k, l) = edge_a, edge_b
    hit = (post.graphs[:, i, j] == 1) & (post.graphs[:, k, l] == 1)
    return float(post.weights[hit].sum())


def auroc(marginals, g_star) -> float | None:
    """Rank-based area under the ROC curve over off-diagonal entries.

    Returns ``None`` when ``g_star`` has no edges or every possible edge.
    """
    marginals = np.asarray(marginals, dtype=np.float64)
    g_star = check_adjacency(g_star, hard=True)
    d = g_star.shape[0]
    if d < 2 or marginals.shape != (d, d):
        raise ValueError("marginals and ground truth must be matching d x d matrices, d >= 2")
    off = ~np.eye(d, dtype=bool)
    scores, labels = marginals[off], g_star[off] == 1
    n_pos, n_neg = int(labels.sum()), int((~labels).sum())
    if n_pos == 0 or n_neg == 0:
        return None
    # midranks handle ties
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores))
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def neg_log_lik(post: WeightedPosterior, x, model, *, targets=()) -> float:
    """``-sum_m w_m log p(x | G_m, Theta_m)``, or the marginal version for BGe."""
    if isinstance(model, BGe):
        if post.params is not None:
            raise ValueError("marginal likelihood takes no parameters; drop them or use a joint model")
        scorer = model.scorer(x)
        vals = np.array([scorer(g, targets=targets) for g in post.graphs])
    else:
        if post.params is None:
            raise ValueError("joint likelihood needs parameter samples")
        vals = np.array([model.log_lik(x, g.astype(np.float64), th, targets=targets)
                         for g, th in zip(post.graphs, post.params)])
    return float(-np.dot(post.weights, vals))


def neg_interventional_log_lik(post: WeightedPosterior, datasets, model) -> float:
    """Average of :func:`neg_log_lik` over interventional datasets."""
    if not datasets:
        raise ValueError("no interventional datasets given")
    return float(np.mean([neg_log_lik(post, ds.x, model, targets=ds.targets) for ds in datasets]))


def linear_gaussian_log_marginal(x, g, obs_noise: float = 0.1, weight_var: float = 1.0) -> float:
    """``log p(x | G)`` for the linear Gaussian model with weights integrated out.

    Each node is Gaussian given its parents' columns with covariance
    ``obs_noise I + weight_var X_pa X_pa^T``.
    """
    x = np.asarray(x, dtype=np.float64)
    n, d = x.shape
    total = 0.0
    for j in range(d):
        pa = np.flatnonzero(g[:, j])
        cov = obs_noise * np.eye(n)
        if pa.size:
            xp = x[:, pa]
            cov = cov + weight_var * xp @ xp.T
        _, logdet = np.linalg.slogdet(cov)
        total += -0.5 * (x[:, j] @ np.linalg.solve(cov, x[:, j]) + logdet + n * np.log(2 * np.pi))
    return float(total)


@dataclass
class ExactPosterior:
    """Exact posterior over every DAG on ``d <= 5`` nodes."""

    graphs: np.ndarray
    log_joint: np.ndarray

    @property
    def probs(self) -> np.ndarray:
        m = self.log_joint.max()
        p = np.exp(self.log_joint - m)
        return p / p.sum()

    def as_weighted(self) -> WeightedPosterior:
        return WeightedPosterior(self.graphs, self.probs)

    def edge_marginals(self) -> np.ndarray:
        return edge_marginals(self.as_weighted())

    def pairwise_marginal(self, edge_a, edge_b) -> float:
        return pairwise_marginal(self.as_weighted(), edge_a, edge_b)

    def mec_masses(self) -> dict:
        out: dict = {}
        for g, p in zip(self.graphs, self.probs):
            key = dag_to_cpdag(g)
            out[key] = out.get(key, 0.0) + p
        return out


def exact_posterior_oracle(x, model, graph_prior: GraphPrior | None = None) -> ExactPosterior:
    """Score every DAG by its unnormalized posterior and normalize.

    ``model`` is a :class:`BGe` instance or a :class:`LinearGaussian`,
    whose weights are integrated in closed form under their standard normal prior.
    """
    x = np.asarray(x, dtype=np.float64)
    d = x.shape[1]
    if d > 5:
        raise ValueError(f"exhaustive enumeration supports d <= 5, got {d}")
    graphs = enumerate_dags(d)
    if isinstance(model, BGe):
        ll = model.scorer(x).batch(graphs)
    elif isinstance(model, LinearGaussian):
        ll = np.array([linear_gaussian_log_marginal(x, g, model.obs_noise) for g in graphs])
    else:
        raise ValueError(f"no exact oracle for {model!r}")
    lp = np.zeros(len(graphs)) if graph_prior is None or graph_prior.kind == "uniform" \
        else np.asarray(log_graph_prior(graphs, graph_prior))
    return ExactPosterior(graphs, ll + lp)


# The four orientation configurations of two node pairs, in the row order of
# the usual pairwise-marginal table: (a->b, b->c), (a->b, b<-c), (a<-b, b->c), (a<-b, b<-c)
def pairwise_configurations(a: int, b: int, c: int):
    return [((a, b), (b, c)), ((a, b), (c, b)), ((b, a), (b, c)), ((b, a), (c, b))]


def mec_table(post) -> list[dict]:
    """Pairwise marginals for the four-node equivalence-class example.

    Rows cover ``x1 - x0 - x2`` and ``x1 - x3 - x2`` in all four orientations.
    """
    if isinstance(post, ExactPosterior):
        post = post.as_weighted()
    rows = []
    for mid in (0, 3):
        for ea, eb in pairwise_configurations(1, mid, 2):
            rows.append({"edge_a": list(ea), "edge_b": list(eb),
                         "prob": pairwise_marginal(post, ea, eb)})
    return rows
