"""Latent graph model ``p(G | Z)`` and the acyclicity-penalizing latent prior.

A latent particle is an array of shape ``(2, k, d)`` holding ``U = z[0]`` and
``V = z[1]``; the logit of edge ``i -> j`` is ``u_i . v_j`` (columns of U, V).
With ``scalar=True`` the latent is a plain ``(d, d)`` logit matrix instead.
All functions broadcast over leading batch dimensions.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_expit

from ._validation import check_positive, check_rng
from .graph import GraphPrior, acyclicity_penalty_grad, log_graph_prior_grad


@dataclass(frozen=True)
class TemperatureState:
    alpha: float
    beta: float
    tau: float = 1.0
    sigma_z: float = 1.0

    def __post_init__(self):
        check_positive("alpha", self.alpha, strict=False)
        check_positive("beta", self.beta, strict=False)
        check_positive("tau", self.tau)
        check_positive("sigma_z", self.sigma_z)


def _offdiag(d: int) -> np.ndarray:
    return 1.0 - np.eye(d)


def edge_logits(z, *, scalar: bool = False) -> np.ndarray:
    """Inner products ``u_i . v_j`` (or the scalar latents) with zero diagonal."""
    z = np.asarray(z, dtype=np.float64)
    s = z if scalar else np.einsum("...ki,...kj->...ij", z[..., 0, :, :], z[..., 1, :, :])
    return s * _offdiag(s.shape[-1])


def backprop_logits(z, dlogits, *, scalar: bool = False) -> np.ndarray:
    """Map a gradient with respect to the logit matrix onto the latent ``z``."""
    z = np.asarray(z, dtype=np.float64)
    b = dlogits * _offdiag(dlogits.shape[-1])
    if scalar:
        return b
    u, v = z[..., 0, :, :], z[..., 1, :, :]
    du = np.einsum("...kj,...ij->...ki", v, b)
    dv = np.einsum("...ki,...ij->...kj", u, b)
    return np.stack([du, dv], axis=-3)


def edge_prob_matrix(z, alpha: float, *, scalar: bool = False) -> np.ndarray:
    """``sigmoid(alpha * u_i . v_j)`` off the diagonal, 0 on it."""
    s = edge_logits(z, scalar=scalar)
    return expit(alpha * s) * _offdiag(s.shape[-1])


def sample_graph(z, alpha: float, rng=None, *, scalar: bool = False) -> np.ndarray:
    """Draw a hard graph with independent Bernoulli edges."""
    rng = check_rng(rng)
    p = edge_prob_matrix(z, alpha, scalar=scalar)
    return (rng.random(p.shape) < p).astype(np.int8)


def limit_graph(z, *, scalar: bool = False) -> np.ndarray:
    """Graph implied by ``z`` as ``alpha -> inf``: edge iff the logit is positive."""
    s = edge_logits(z, scalar=scalar)
    g = (s > 0).astype(np.int8)
    g *= (1 - np.eye(s.shape[-1], dtype=np.int8))
    return g


def sample_logistic_noise(shape, rng) -> np.ndarray:
    """i.i.d. Logistic(0, 1) draws via the inverse CDF of uniforms."""
    u = rng.random(shape)
    u = np.clip(u, 1e-300, None)
    return np.log(u) - np.log1p(-u)


def gumbel_soft_sample(z, alpha: float, tau: float, logistic_noise, rng=None, *,
                       scalar: bool = False) -> np.ndarray:
    """Relaxed graph ``sigmoid((l_ij + alpha u_i . v_j) / tau)`` with zero diagonal.

    ``rng`` is unused when noise is given; it is accepted so callers can pass
    ``logistic_noise=None`` and have it drawn here.
    """
    s = edge_logits(z, scalar=scalar)
    if logistic_noise is None:
        logistic_noise = sample_logistic_noise(s.shape, check_rng(rng))
    return expit((logistic_noise + alpha * s) / tau) * _offdiag(s.shape[-1])


def soft_sample_logit_grad(g_soft: np.ndarray, alpha: float, tau: float) -> np.ndarray:
    """Elementwise derivative of a soft sample with respect to the logit ``u_i . v_j``."""
    return (alpha / tau) * g_soft * (1.0 - g_soft)


def log_prob_graph_given_z(g, z, alpha: float, *, scalar: bool = False) -> np.ndarray:
    """``sum_{i != j} log Bernoulli(g_ij; sigmoid(alpha u_i . v_j))``."""
    g = np.asarray(g, dtype=np.float64)
    s = alpha * edge_logits(z, scalar=scalar)
    ll = g * log_expit(s) + (1.0 - g) * log_expit(-s)
    return (ll * _offdiag(s.shape[-1])).sum(axis=(-2, -1))


def grad_log_graph_given_z(g, z, alpha: float, *, scalar: bool = False) -> np.ndarray:
    """Exact ``grad_Z log p(G | Z)`` for hard ``g``; broadcasts over leading axes."""
    g = np.asarray(g, dtype=np.float64)
    p = edge_prob_matrix(z, alpha, scalar=scalar)
    return backprop_logits(z, alpha * (g - p), scalar=scalar)


def acyclicity_latent_grad(z, g_soft: np.ndarray, alpha: float, tau: float, *,
                           scalar: bool = False) -> np.ndarray:
    """Gumbel-softmax estimate of ``grad_Z E[h(G)]`` from soft samples.

    ``g_soft`` has shape ``(S, ..., d, d)`` with the Monte Carlo axis first.
    Because the chain rule is linear, upstream gradients are averaged over
    samples before being mapped onto ``z``.
    """
    dh = acyclicity_penalty_grad(g_soft)
    b = (dh * soft_sample_logit_grad(g_soft, alpha, tau)).mean(axis=0)
    return backprop_logits(z, b, scalar=scalar)


def graph_prior_latent_grad(z, alpha: float, graph_prior: GraphPrior | None, *,
                            scalar: bool = False) -> np.ndarray:
    """``grad_Z log p(G_alpha(Z))`` for a structure prior evaluated at edge probabilities."""
    z = np.asarray(z, dtype=np.float64)
    if graph_prior is None or graph_prior.kind == "uniform":
        return np.zeros_like(z)
    p = edge_prob_matrix(z, alpha, scalar=scalar)
    b = log_graph_prior_grad(p, graph_prior) * alpha * p * (1.0 - p)
    return backprop_logits(z, b, scalar=scalar)


def latent_prior_score(z, state: TemperatureState, mc_samples: int, rng=None,
                       graph_prior: GraphPrior | None = None, *, scalar: bool = False,
                       g_soft: np.ndarray | None = None) -> np.ndarray:
    """Score of the latent prior ``-beta grad E[h(G)] - z / sigma_z^2 (+ graph prior)``.

    ``g_soft`` lets the caller share relaxed samples with the likelihood term.
    """
    z = np.asarray(z, dtype=np.float64)
    score = -z / state.sigma_z ** 2
    if state.beta > 0:
        if g_soft is None:
            if mc_samples < 1:
                raise ValueError("mc_samples must be >= 1")
            rng = check_rng(rng)
            s = edge_logits(z, scalar=scalar)
            noise = sample_logistic_noise((mc_samples,) + s.shape, rng)
            g_soft = gumbel_soft_sample(z, state.alpha, state.tau, noise, scalar=scalar)
        score = score - state.beta * acyclicity_latent_grad(z, g_soft, state.alpha, state.tau,
                                                            scalar=scalar)
    if graph_prior is not None:
        score = score + graph_prior_latent_grad(z, state.alpha, graph_prior, scalar=scalar)
    return score


def sample_latent_prior(rng, n: int, d: int, k: int, sigma_z: float, *,
                        scalar: bool = False) -> np.ndarray:
    """Initial particles from the Gaussian factor of the latent prior."""
    shape = (n, d, d) if scalar else (n, 2, k, d)
    return rng.normal(0.0, sigma_z, size=shape)
