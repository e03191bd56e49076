"""Monte Carlo estimators of the latent posterior scores.

The likelihood enters the latent score as a ratio of two expectations under
``p(G | Z)``. Both are estimated from the same graph samples and combined in
log space, so likelihoods far below ``exp(-700)`` never underflow.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ._validation import check_positive, check_rng
from .graph import GraphPrior, acyclicity_penalty
from .latent import (
    TemperatureState,
    backprop_logits,
    edge_logits,
    edge_prob_matrix,
    latent_prior_score,
    sample_logistic_noise,
    soft_sample_logit_grad,
)


@dataclass(frozen=True)
class EstimatorConfig:
    """``kind`` is ``"score"`` (score function) or ``"gumbel"`` (Gumbel-softmax)."""

    kind: str = "gumbel"
    mc_samples: int = 128
    baseline: float = 0.0
    tau: float = 1.0
    hard_forward: bool = False

    def __post_init__(self):
        if self.kind not in ("score", "gumbel"):
            raise ValueError(f"unknown estimator kind {self.kind!r}")
        if int(self.mc_samples) < 1:
            raise ValueError("mc_samples must be >= 1")
        check_positive("tau", self.tau)


def signed_logsumexp(log_abs, sign=None, axis=0):
    """``log |sum sign * exp(log_abs)|`` and its sign, stabilized by the max."""
    log_abs = np.asarray(log_abs, dtype=np.float64)
    sign = np.ones_like(log_abs) if sign is None else np.broadcast_to(sign, log_abs.shape)
    m = np.max(log_abs, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    total = np.sum(sign * np.exp(log_abs - m), axis=axis)
    with np.errstate(divide="ignore"):
        out = np.log(np.abs(total)) + np.squeeze(m, axis=axis)
    return out, np.sign(total)


def stable_expectation_ratio(log_num, log_den, num_sign=None, axis=0):
    """``sum(sign * exp(log_num)) / sum(exp(log_den))`` computed in log space.

    ``log_num`` may carry trailing axes (e.g. one per gradient entry); the
    reduction runs over ``axis``.
    """
    log_num = np.asarray(log_num, dtype=np.float64)
    log_den = np.asarray(log_den, dtype=np.float64)
    if log_num.shape[axis] == 0 or log_den.shape[axis] == 0:
        raise ValueError("stable_expectation_ratio needs at least one sample")
    if log_num.shape[axis] != log_den.shape[axis]:
        raise ValueError("numerator and denominator need the same number of samples")
    ln, sn = signed_logsumexp(log_num, num_sign, axis=axis)
    ld, _ = signed_logsumexp(log_den, axis=axis)
    if not np.all(np.isfinite(ld)):
        raise ValueError("denominator is zero")
    return sn * np.exp(ln - ld)


def _softmax_weights(log_w: np.ndarray) -> np.ndarray:
    """Normalize along axis 0; an all ``-inf`` column gets all-zero weights."""
    m = np.max(log_w, axis=0, keepdims=True)
    finite = np.isfinite(m)
    w = np.exp(log_w - np.where(finite, m, 0.0)) * finite
    s = w.sum(axis=0, keepdims=True)
    return w / np.where(s > 0, s, 1.0)


def _expand(w: np.ndarray, x: np.ndarray) -> np.ndarray:
    return w.reshape(w.shape + (1,) * (x.ndim - w.ndim))


def _noise(z, n_samples, rng, scalar):
    s = edge_logits(z, scalar=scalar)
    return s, sample_logistic_noise((n_samples,) + s.shape, rng)


def score_function_grad(z, alpha: float, f, config: EstimatorConfig, rng=None, *,
                        scalar: bool = False, return_samples: bool = False):
    """Estimate ``grad_Z E_{p(G|Z)}[f(G)]`` as the mean of ``(f(G) - b) grad log p(G|Z)``.

    ``f`` maps a stack of hard graphs ``(S, d, d)`` to values ``(S,)``.
    With ``return_samples`` the per-sample terms are returned as well, so
    callers can attach standard errors.
    """
    rng = check_rng(rng)
    z = np.asarray(z, dtype=np.float64)
    s, noise = _noise(z, config.mc_samples, rng, scalar)
    gs = (noise + alpha * s > 0).astype(np.float64) * (1.0 - np.eye(s.shape[-1]))
    fv = np.asarray(f(gs), dtype=np.float64) - config.baseline
    b = alpha * (gs - edge_prob_matrix(z, alpha, scalar=scalar))
    per = backprop_logits(z, fv.reshape(fv.shape + (1, 1)) * b, scalar=scalar)
    est = per.mean(axis=0)
    return (est, per) if return_samples else est


def gumbel_soft_path_grad(z, alpha: float, tau: float, noise, dg, *, scalar: bool = False):
    """Chain an upstream ``dL/dG`` through the soft sample ``sigmoid((l + alpha s) / tau)``."""
    s = edge_logits(z, scalar=scalar)
    g = expit((noise + alpha * s) / tau) * (1.0 - np.eye(s.shape[-1]))
    return backprop_logits(z, dg * soft_sample_logit_grad(g, alpha, tau), scalar=scalar)


def gumbel_softmax_grad(z, alpha: float, f_soft, config: EstimatorConfig, rng=None, *,
                        scalar: bool = False, return_samples: bool = False):
    """Estimate ``grad_Z E[f(G)]`` by reparameterizing through relaxed samples.

    ``f_soft`` maps ``(S, d, d)`` graphs to ``(values (S,), grads (S, d, d))``.
    In hard-forward mode ``f`` is evaluated at the thresholded samples and
    its gradient is passed straight through the relaxation.
    """
    rng = check_rng(rng)
    z = np.asarray(z, dtype=np.float64)
    s, noise = _noise(z, config.mc_samples, rng, scalar)
    off = 1.0 - np.eye(s.shape[-1])
    g_soft = expit((noise + alpha * s) / config.tau) * off
    g_fwd = (noise + alpha * s > 0).astype(np.float64) * off if config.hard_forward else g_soft
    _, dg = f_soft(g_fwd)
    per = backprop_logits(z, dg * soft_sample_logit_grad(g_soft, alpha, config.tau), scalar=scalar)
    est = per.mean(axis=0)
    return (est, per) if return_samples else est


def marginal_posterior_score(z, log_marginal, state: TemperatureState, config: EstimatorConfig,
                             rng=None, graph_prior: GraphPrior | None = None, *,
                             scalar: bool = False, noise=None) -> np.ndarray:
    """``grad_Z log p(Z | D)`` for a model with a closed-form marginal likelihood.

    ``z`` may carry leading particle axes. ``log_marginal`` maps hard graphs
    ``(S, ..., d, d)`` to log marginal likelihoods ``(S, ...)`` and must
    return ``-inf`` for cyclic graphs. Only the score-function estimator
    applies since the marginal likelihood has no gradient in ``G``.
    """
    z = np.asarray(z, dtype=np.float64)
    if noise is None:
        _, noise = _noise(z, config.mc_samples, check_rng(rng), scalar)
    s = edge_logits(z, scalar=scalar)
    off = 1.0 - np.eye(s.shape[-1])
    logits = noise + state.alpha * s
    gs = (logits > 0).astype(np.int8) * off.astype(np.int8)
    ll = np.asarray(log_marginal(gs), dtype=np.float64)
    w = _softmax_weights(ll)
    p = edge_prob_matrix(z, state.alpha, scalar=scalar)
    wf = _expand(w, gs)
    bsum = state.alpha * ((wf * gs).sum(axis=0) - w.sum(axis=0)[..., None, None] * p)
    if config.baseline:
        # the baseline adds -b * mean(grad log p) / E[p(D|G)]
        m = np.max(ll, axis=0)
        finite = np.isfinite(m)
        den = np.sum(np.exp(ll - np.where(finite, m, 0.0)), axis=0)
        log_scale = np.log(abs(config.baseline)) - np.where(finite, m, 0.0) - np.log(
            np.where(den > 0, den, 1.0))
        scale = np.where(finite, np.sign(config.baseline) * np.exp(log_scale), 0.0)
        bsum = bsum - scale[..., None, None] * state.alpha * (gs - p).sum(axis=0)
    lik = backprop_logits(z, bsum, scalar=scalar)
    g_soft = expit(logits / state.tau) * off
    return lik + latent_prior_score(z, state, config.mc_samples, graph_prior=graph_prior,
                                    scalar=scalar, g_soft=g_soft)


def joint_posterior_score(z, theta, model, stats, state: TemperatureState,
                          config: EstimatorConfig, rng=None,
                          graph_prior: GraphPrior | None = None, *, scalar: bool = False,
                          noise=None, lik_scale: float = 1.0):
    """``(grad_Z, grad_Theta)`` of ``log p(Z, Theta | D)``.

    ``stats`` comes from ``model.prepare(x)``. The latent gradient uses the
    Gumbel-softmax estimator (or the score function if configured); the
    parameter gradient is a self-normalized average over hard samples that
    share their logistic noise with the relaxed ones. ``lik_scale`` rescales
    a minibatch likelihood to the full data size.
    """
    z = np.asarray(z, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    if noise is None:
        _, noise = _noise(z, config.mc_samples, check_rng(rng), scalar)
    s = edge_logits(z, scalar=scalar)
    off = 1.0 - np.eye(s.shape[-1])
    logits = noise + state.alpha * s
    g_soft = expit(logits / state.tau) * off
    g_hard = (logits > 0).astype(np.float64) * off

    ll_h, _, dth = model.log_lik_batch(stats, g_hard, theta)
    w_h = _softmax_weights(lik_scale * ll_h)
    grad_theta = lik_scale * (_expand(w_h, dth) * dth).sum(axis=0)
    grad_theta = grad_theta - theta

    if config.kind == "score":
        w = w_h
        p = edge_prob_matrix(z, state.alpha, scalar=scalar)
        wf = _expand(w, g_hard)
        b = state.alpha * ((wf * g_hard).sum(axis=0) - w.sum(axis=0)[..., None, None] * p)
    else:
        if config.hard_forward:
            ll_s, dg = ll_h, model.log_lik_batch(stats, g_hard, theta)[1]
        else:
            ll_s, dg, _ = model.log_lik_batch(stats, g_soft, theta)
        w = _softmax_weights(lik_scale * ll_s)
        up = lik_scale * dg * soft_sample_logit_grad(g_soft, state.alpha, state.tau)
        b = (_expand(w, up) * up).sum(axis=0)
    grad_z = backprop_logits(z, b, scalar=scalar)
    grad_z = grad_z + latent_prior_score(z, state, config.mc_samples, graph_prior=graph_prior,
                                         scalar=scalar, g_soft=g_soft)
    return grad_z, grad_theta


def expected_cyclicity(z, alpha: float, noise, *, scalar: bool = False) -> np.ndarray:
    """Monte Carlo ``E_{p(G|Z)}[h(G)]`` from hard samples; shape of the particle axes."""
    s = edge_logits(z, scalar=scalar)
    gs = (noise + alpha * s > 0).astype(np.float64) * (1.0 - np.eye(s.shape[-1]))
    return acyclicity_penalty(gs).mean(axis=0)


__all__ = [
    "EstimatorConfig",
    "signed_logsumexp",
    "stable_expectation_ratio",
    "score_function_grad",
    "gumbel_soft_path_grad",
    "gumbel_softmax_grad",
    "marginal_posterior_score",
    "joint_posterior_score",
    "expected_cyclicity",
]
