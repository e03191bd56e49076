"""Gaussian Bayesian network models.

Two explicitly parameterized families (:class:`LinearGaussian`,
:class:`NonlinearGaussian`) used for joint inference over graphs and
parameters, and the closed-form :class:`BGe` marginal likelihood used for
marginal inference over graphs.

Parameters always have graph-independent dimensionality; the graph enters
only as a mask, so every likelihood is also defined for soft graphs.
"""
from __future__ import annotations

from functools import cached_property

import numpy as np
from scipy.special import multigammaln

from ._validation import check_adjacency, check_data, check_positive, check_rng, check_targets
from .graph import topological_order

_LOG_2PI = np.log(2.0 * np.pi)


def param_prior_log_prob(theta) -> float:
    """Standard normal log density over every parameter entry."""
    theta = np.asarray(theta, dtype=np.float64)
    return float(-0.5 * np.sum(theta ** 2) - 0.5 * theta.size * _LOG_2PI)


def param_prior_score(theta) -> np.ndarray:
    return -np.asarray(theta, dtype=np.float64)


def _node_mask(d: int, targets) -> np.ndarray:
    mask = np.ones(d)
    mask[list(targets)] = 0.0
    return mask


class LinearGaussian:
    """``x = (G * Theta)^T x + eps`` with ``eps ~ N(0, obs_noise I)``.

    ``theta`` is a full ``(d, d)`` weight matrix; ``theta[i, j]`` is the
    weight of edge ``i -> j``.
    """

    family = "lingauss"

    def __init__(self, obs_noise: float = 0.1):
        self.obs_noise = check_positive("obs_noise", obs_noise)

    def __repr__(self):
        return f"LinearGaussian(obs_noise={self.obs_noise})"

    def param_shape(self, d: int) -> tuple[int, ...]:
        return (d, d)

    def n_params(self, d: int) -> int:
        return d * d

    def sample_params(self, rng, d: int, n: int | None = None) -> np.ndarray:
        shape = self.param_shape(d) if n is None else (n,) + self.param_shape(d)
        return rng.normal(size=shape)

    def _check(self, x, g, theta):
        x = check_data(x)
        g = check_adjacency(g).astype(np.float64)
        theta = np.asarray(theta, dtype=np.float64)
        d = x.shape[1]
        if g.shape != (d, d) or theta.shape != (d, d):
            raise ValueError(f"shape mismatch: data d={d}, graph {g.shape}, theta {theta.shape}")
        return x, g, theta

    def node_means(self, x, g, theta) -> np.ndarray:
        return x @ (g * theta)

    def log_lik(self, x, g, theta, targets=()) -> float:
        """Sum over observations and non-intervened nodes of ``log N(x_i; mean_i, obs_noise)``."""
        x, g, theta = self._check(x, g, theta)
        mask = _node_mask(x.shape[1], check_targets(targets, x.shape[1]))
        r = x - self.node_means(x, g, theta)
        ll = -0.5 * r ** 2 / self.obs_noise - 0.5 * (_LOG_2PI + np.log(self.obs_noise))
        return float((ll * mask).sum())

    def log_lik_grads(self, x, g, theta):
        """Return ``(log_lik, d/dg, d/dtheta)`` for one (soft) graph."""
        x, g, theta = self._check(x, g, theta)
        r = x - self.node_means(x, g, theta)
        ll = float((-0.5 * r ** 2 / self.obs_noise).sum()
                   - 0.5 * r.size * (_LOG_2PI + np.log(self.obs_noise)))
        dw = x.T @ r / self.obs_noise
        dg = dw * theta
        np.fill_diagonal(dg, 0.0)
        return ll, dg, dw * g

    # -- batched path used during inference --------------------------------

    def prepare(self, x) -> dict:
        x = check_data(x)
        return {"C": x.T @ x, "n": x.shape[0], "d": x.shape[1]}

    def log_lik_batch(self, stats: dict, g, theta, *, grads: bool = True):
        """Vectorized log likelihood from the sufficient statistic ``X^T X``.

        ``g`` has shape ``(..., d, d)`` and ``theta`` broadcasts against it.
        Returns ``(ll, dll/dg, dll/dtheta)`` (gradients ``None`` if not requested).
        """
        c, n, d = stats["C"], stats["n"], stats["d"]
        w = g * theta
        cw = c @ w
        sse = np.trace(c) - 2.0 * np.sum(w * c, axis=(-2, -1)) + np.sum(w * cw, axis=(-2, -1))
        ll = -0.5 * sse / self.obs_noise - 0.5 * n * d * (_LOG_2PI + np.log(self.obs_noise))
        if not grads:
            return ll, None, None
        dw = (c - cw) / self.obs_noise
        dg = dw * theta * (1.0 - np.eye(d))
        return ll, dg, dw * g

    def sample_node(self, x, g, theta, i, rng) -> np.ndarray:
        mean = x @ (g[:, i] * theta[:, i])
        return mean + np.sqrt(self.obs_noise) * rng.normal(size=x.shape[0])


class NonlinearGaussian:
    """Per-node feed-forward network on the masked parent vector.

    ``x_i ~ N(FFN(G[:, i] * x; Theta_i), obs_noise)`` with rectifier
    activations. Parameters are stored as one flat vector; see
    :meth:`unpack`.
    """

    family = "nonlingauss"

    def __init__(self, hidden=(5,), obs_noise: float = 0.1):
        self.hidden = tuple(int(h) for h in hidden)
        if any(h < 1 for h in self.hidden):
            raise ValueError("hidden layer sizes must be positive")
        self.obs_noise = check_positive("obs_noise", obs_noise)

    def __repr__(self):
        return f"NonlinearGaussian(hidden={self.hidden}, obs_noise={self.obs_noise})"

    def layer_dims(self, d: int) -> list[int]:
        return [d, *self.hidden, 1]

    def n_params(self, d: int) -> int:
        dims = self.layer_dims(d)
        return d * sum(o * i + o for i, o in zip(dims[:-1], dims[1:]))

    def param_shape(self, d: int) -> tuple[int, ...]:
        return (self.n_params(d),)

    def sample_params(self, rng, d: int, n: int | None = None) -> np.ndarray:
        shape = self.param_shape(d) if n is None else (n,) + self.param_shape(d)
        return rng.normal(size=shape)

    def unpack(self, theta, d: int) -> list[tuple[np.ndarray, np.ndarray]]:
        """Split ``(..., P)`` into per-layer ``(W (..., d, out, in), b (..., d, out))``."""
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape[-1] != self.n_params(d):
            raise ValueError(f"expected {self.n_params(d)} parameters, got {theta.shape[-1]}")
        lead = theta.shape[:-1]
        dims = self.layer_dims(d)
        layers, pos = [], 0
        for i, o in zip(dims[:-1], dims[1:]):
            w = theta[..., pos:pos + d * o * i].reshape(lead + (d, o, i))
            pos += d * o * i
            b = theta[..., pos:pos + d * o].reshape(lead + (d, o))
            pos += d * o
            layers.append((w, b))
        return layers

    def pack(self, layers) -> np.ndarray:
        parts = []
        for w, b in layers:
            lead = w.shape[:-3]
            parts.append(w.reshape(lead + (-1,)))
            parts.append(b.reshape(lead + (-1,)))
        return np.concatenate(parts, axis=-1)

    def _forward_backward(self, x, g, theta, obs_mask=None, grads=True):
        """Shared forward/backward pass; leading axes of ``g`` and ``theta`` broadcast."""
        d = x.shape[1]
        layers = self.unpack(theta, d)
        w1, b1 = layers[0]
        gt = np.swapaxes(g, -1, -2)  # gt[..., i, j] = g[..., j, i]
        w_eff = w1 * gt[..., :, None, :]  # (..., d, H, d)
        pre = [np.einsum("nj,...ihj->...nih", x, w_eff) + b1[..., None, :, :]]
        acts = []
        for w, b in layers[1:]:
            a = np.maximum(pre[-1], 0.0)
            acts.append(a)
            pre.append(np.einsum("...ioh,...nih->...nio", w, a) + b[..., None, :, :])
        mean = pre[-1][..., 0]  # (..., n, d)
        r = x - mean
        mask = np.ones(d) if obs_mask is None else obs_mask
        ll = ((-0.5 * r ** 2 / self.obs_noise - 0.5 * (_LOG_2PI + np.log(self.obs_noise)))
              * mask).sum(axis=(-2, -1))
        if not grads:
            return ll, None, None
        delta = (r / self.obs_noise * mask)[..., None]  # dll/dmean, (..., n, d, 1)
        dlayers = [None] * len(layers)
        for li in range(len(layers) - 1, 0, -1):
            w, _ = layers[li]
            a = acts[li - 1]
            dw = np.einsum("...nio,...nih->...ioh", delta, a)
            db = delta.sum(axis=-3)
            dlayers[li] = (dw, db)
            delta = np.einsum("...ioh,...nio->...nih", w, delta) * (pre[li - 1] > 0)
        dw_eff = np.einsum("...nih,nj->...ihj", delta, x)
        dw1 = dw_eff * gt[..., :, None, :]
        db1 = delta.sum(axis=-3)
        dlayers[0] = (dw1, db1)
        dgt = np.einsum("...ihj,...ihj->...ij", dw_eff, np.broadcast_to(w1, dw_eff.shape))
        dg = np.swapaxes(dgt, -1, -2) * (1.0 - np.eye(d))
        return ll, dg, self.pack(dlayers)

    def _check(self, x, g, theta):
        x = check_data(x)
        g = check_adjacency(g).astype(np.float64)
        theta = np.asarray(theta, dtype=np.float64)
        d = x.shape[1]
        if g.shape != (d, d) or theta.shape != (self.n_params(d),):
            raise ValueError(f"shape mismatch: data d={d}, graph {g.shape}, theta {theta.shape}")
        return x, g, theta

    def node_means(self, x, g, theta) -> np.ndarray:
        x, g, theta = self._check(x, g, theta)
        layers = self.unpack(theta, x.shape[1])
        h = x[:, None, :] * g.T[None, :, :]  # (n, i, j): inputs of node i
        for li, (w, b) in enumerate(layers):
            h = np.einsum("ioh,nih->nio", w, h) + b
            if li < len(layers) - 1:
                h = np.maximum(h, 0.0)
        return h[..., 0]

    def log_lik(self, x, g, theta, targets=()) -> float:
        x, g, theta = self._check(x, g, theta)
        mask = _node_mask(x.shape[1], check_targets(targets, x.shape[1]))
        ll, _, _ = self._forward_backward(x, g, theta, obs_mask=mask, grads=False)
        return float(ll)

    def log_lik_grads(self, x, g, theta):
        x, g, theta = self._check(x, g, theta)
        ll, dg, dtheta = self._forward_backward(x, g, theta)
        return float(ll), dg, dtheta

    def prepare(self, x) -> dict:
        x = check_data(x)
        return {"x": x, "n": x.shape[0], "d": x.shape[1]}

    def log_lik_batch(self, stats: dict, g, theta, *, grads: bool = True):
        return self._forward_backward(stats["x"], g, theta, grads=grads)

    def sample_node(self, x, g, theta, i, rng) -> np.ndarray:
        d = x.shape[1]
        layers = self.unpack(theta, d)
        h = x * g[:, i]
        for li, (w, b) in enumerate(layers):
            h = h @ w[i].T + b[i]
            if li < len(layers) - 1:
                h = np.maximum(h, 0.0)
        return h[:, 0] + np.sqrt(self.obs_noise) * rng.normal(size=x.shape[0])


def make_model(family: str, **kwargs):
    if family == "lingauss":
        return LinearGaussian(**kwargs)
    if family == "nonlingauss":
        return NonlinearGaussian(**kwargs)
    if family == "bge":
        return BGe(**kwargs)
    raise ValueError(f"unknown model family {family!r}")


def ancestral_sample(g, model, theta, n: int, rng=None, clamp=None) -> np.ndarray:
    """Sample ``n`` observations in topological order.

    ``clamp`` is ``(targets, value)``; clamped nodes are fixed to ``value``.
    """
    g = check_adjacency(g, hard=True)
    order = topological_order(g)
    if order is None:
        raise ValueError("ancestral sampling requires an acyclic graph")
    rng = check_rng(rng)
    d = g.shape[0]
    targets, value = (), 0.0
    if clamp is not None:
        targets, value = check_targets(clamp[0], d), float(clamp[1])
    gf = g.astype(np.float64)
    x = np.zeros((n, d))
    for i in order:
        if i in targets:
            x[:, i] = value
        else:
            x[:, i] = model.sample_node(x, gf, theta, i, rng)
    return x


def interventional_log_lik(model, x, g, theta, targets) -> float:
    """Log likelihood with the factors of intervened nodes removed."""
    return model.log_lik(x, g, theta, targets=targets)


class BGe:
    """Bayesian Gaussian equivalent marginal likelihood.

    Normal-Wishart prior with mean ``0``, effective sample sizes
    ``alpha_mu`` and ``alpha_omega`` (default ``d + 2``) and a diagonal
    inverse scale ``t I`` where ``t`` defaults to
    ``alpha_mu (alpha_omega - d - 1) / (alpha_mu + 1)``.
    """

    family = "bge"

    def __init__(self, alpha_mu: float = 1.0, alpha_omega: float | None = None,
                 t: float | None = None):
        self.alpha_mu = check_positive("alpha_mu", alpha_mu)
        self.alpha_omega = alpha_omega
        self.t = t

    def __repr__(self):
        return f"BGe(alpha_mu={self.alpha_mu}, alpha_omega={self.alpha_omega}, t={self.t})"

    def scorer(self, x) -> "BGeScore":
        return BGeScore(check_data(x), self)

    def log_marginal(self, x, g) -> float:
        return self.scorer(x)(g)

    def interventional_log_marginal(self, x, g, targets) -> float:
        return self.scorer(x)(g, targets=targets)


class BGeScore:
    """BGe score bound to one dataset, with cached node-family scores."""

    dense_max_d = 12

    def __init__(self, x: np.ndarray, model: BGe):
        n, d = x.shape
        self.n, self.d = n, d
        a_mu = model.alpha_mu
        a_w = float(d + 2) if model.alpha_omega is None else float(model.alpha_omega)
        if a_w <= d - 1:
            raise ValueError(f"alpha_omega must exceed d - 1 = {d - 1}, got {a_w}")
        t = a_mu * (a_w - d - 1) / (a_mu + 1) if model.t is None else float(model.t)
        if t <= 0:
            raise ValueError("BGe inverse scale t must be positive; set t or alpha_omega > d + 1")
        self.alpha_mu, self.alpha_omega, self.t = a_mu, a_w, t
        xbar = x.mean(axis=0)
        xc = x - xbar
        self.R = t * np.eye(d) + xc.T @ xc + (n * a_mu / (n + a_mu)) * np.outer(xbar, xbar)
        self._subset_cache: dict[int, float] = {0: 0.0}
        self._family_cache: dict[int, float] = {}
        self._pow2 = 1 << np.arange(d, dtype=np.int64)

    def subset_log_marginal(self, mask: int) -> float:
        """``log p(data restricted to the variables in mask)``."""
        cached = self._subset_cache.get(mask)
        if cached is not None:
            return cached
        idx = [i for i in range(self.d) if mask >> i & 1]
        l = len(idx)
        n, d = self.n, self.d
        a = self.alpha_omega - d + l
        _, logdet_r = np.linalg.slogdet(self.R[np.ix_(idx, idx)])
        val = (0.5 * l * np.log(self.alpha_mu / (n + self.alpha_mu))
               - 0.5 * n * l * np.log(np.pi)
               + multigammaln(0.5 * (n + a), l) - multigammaln(0.5 * a, l)
               + 0.5 * a * l * np.log(self.t)
               - 0.5 * (n + a) * logdet_r)
        self._subset_cache[mask] = float(val)
        return float(val)

    def family(self, j: int, parents_mask: int) -> float:
        key = parents_mask * self.d + j
        cached = self._family_cache.get(key)
        if cached is None:
            cached = (self.subset_log_marginal(parents_mask | (1 << j))
                      - self.subset_log_marginal(parents_mask))
            self._family_cache[key] = cached
        return cached

    @cached_property
    def _table(self) -> np.ndarray:
        d = self.d
        table = np.empty((d, 1 << d))
        for j in range(d):
            for m in range(1 << d):
                table[j, m] = np.nan if m >> j & 1 else self.family(j, m)
        return table

    def parent_masks(self, gs) -> np.ndarray:
        return np.einsum("...ij,i->...j", np.asarray(gs, dtype=np.int64), self._pow2)

    def __call__(self, g, targets=()) -> float:
        g = check_adjacency(g, hard=True)
        if g.shape[0] != self.d:
            raise ValueError(f"graph has {g.shape[0]} nodes, data has {self.d}")
        if topological_order(g) is None:
            raise ValueError("BGe score is only defined for acyclic graphs")
        targets = check_targets(targets, self.d)
        masks = self.parent_masks(g)
        return float(sum(self.family(j, int(masks[j])) for j in range(self.d) if j not in targets))

    def family_scores(self, gs) -> np.ndarray:
        """Per-node family scores for a stack of hard graphs, shape ``(..., d)``."""
        masks = self.parent_masks(gs)
        if self.d <= self.dense_max_d:
            return self._table[np.arange(self.d), masks]
        keys = masks * self.d + np.arange(self.d)
        uniq, inv = np.unique(keys.ravel(), return_inverse=True)
        vals = np.array([self.family(int(k % self.d), int(k // self.d)) for k in uniq])
        return vals[inv].reshape(keys.shape)

    def batch(self, gs, acyclic: np.ndarray | None = None) -> np.ndarray:
        """Log marginal likelihoods of a stack of graphs; cyclic graphs get ``-inf``."""
        from .graph import batch_is_acyclic

        gs = np.asarray(gs)
        if acyclic is None:
            acyclic = batch_is_acyclic(gs)
        out = np.full(gs.shape[:-2], -np.inf)
        if np.any(acyclic):
            out[acyclic] = self.family_scores(gs[acyclic]).sum(axis=-1)
        return out
