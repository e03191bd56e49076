"""Estimator interface around the particle inference routines."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_data
from .gradients import EstimatorConfig
from .graph import GraphPrior
from .metrics import WeightedPosterior, edge_marginals
from .models import BGe, LinearGaussian, NonlinearGaussian
from .svgd import KernelSpec, Schedule, dibs_plus_weights, run_joint, run_marginal


def _graph_prior(kind, edge_prob):
    return None if kind in (None, "uniform") else GraphPrior(kind, edge_prob)


class _DiBSBase(BaseEstimator):
    def _schedule(self):
        return Schedule(iterations=self.n_steps, alpha_slope=self.alpha_slope,
                        beta_slope=self.beta_slope, learning_rate=self.learning_rate,
                        rmsprop_decay=self.rmsprop_decay, tau=self.tau)

    def _store(self, res):
        self.graphs_ = res.graphs
        self.latents_ = res.latents
        self.log_joint_ = res.log_joint
        self.n_discarded_ = res.n_discarded
        self.trace_ = res.trace
        self.weights_ = dibs_plus_weights(res.log_joint, res.graphs, res.params)

    def posterior(self, weighting: str = "uniform") -> WeightedPosterior:
        """Particle mixture with ``"uniform"`` or ``"dibs+"`` weights."""
        check_is_fitted(self, "graphs_")
        if weighting not in ("uniform", "dibs+"):
            raise ValueError("weighting must be 'uniform' or 'dibs+'")
        w = None if weighting == "uniform" else self.weights_
        return WeightedPosterior(self.graphs_, w, getattr(self, "params_", None))

    def edge_marginals(self, weighting: str = "uniform") -> np.ndarray:
        return edge_marginals(self.posterior(weighting))

    def predict(self, X=None, weighting: str = "dibs+") -> np.ndarray:
        """Most probable particle graph under the chosen weighting."""
        post = self.posterior(weighting)
        return post.graphs[int(np.argmax(post.weights))]


class MarginalDiBS(_DiBSBase):
    """Particle approximation of ``p(G | D)`` under the BGe marginal likelihood."""

    def __init__(self, n_particles=30, n_steps=3000, alpha_slope=2.0, beta_slope=1.0,
                 gamma_z=2.0, latent_dim=None, sigma_z=None, mc_samples=128, learning_rate=0.005,
                 rmsprop_decay=0.9, tau=1.0, baseline=0.0, graph_prior="er", edge_prob=None,
                 scalar_latent=False, bge_alpha_mu=1.0, bge_alpha_omega=None, bge_t=None,
                 random_state=0, log_every=10, log_path=None):
        self.n_particles = n_particles
        self.n_steps = n_steps
        self.alpha_slope = alpha_slope
        self.beta_slope = beta_slope
        self.gamma_z = gamma_z
        self.latent_dim = latent_dim
        self.sigma_z = sigma_z
        self.mc_samples = mc_samples
        self.learning_rate = learning_rate
        self.rmsprop_decay = rmsprop_decay
        self.tau = tau
        self.baseline = baseline
        self.graph_prior = graph_prior
        self.edge_prob = edge_prob
        self.scalar_latent = scalar_latent
        self.bge_alpha_mu = bge_alpha_mu
        self.bge_alpha_omega = bge_alpha_omega
        self.bge_t = bge_t
        self.random_state = random_state
        self.log_every = log_every
        self.log_path = log_path

    def fit(self, X, y=None):
        x = check_data(X, min_samples=2)
        self.n_features_in_ = x.shape[1]
        self.model_ = BGe(self.bge_alpha_mu, self.bge_alpha_omega, self.bge_t)
        self.scorer_ = self.model_.scorer(x)
        res = run_marginal(
            x, self.scorer_, n_particles=self.n_particles, latent_dim=self.latent_dim,
            schedule=self._schedule(), kernel=KernelSpec(self.gamma_z),
            estimator=EstimatorConfig("score", self.mc_samples, self.baseline, self.tau),
            graph_prior=_graph_prior(self.graph_prior, self.edge_prob), sigma_z=self.sigma_z,
            scalar=self.scalar_latent, seed=self.random_state, log_every=self.log_every,
            log_path=self.log_path)
        self._store(res)
        return self

    def score(self, X, y=None) -> float:
        """Posterior-averaged log marginal likelihood of ``X`` (DiBS+ weights)."""
        check_is_fitted(self, "graphs_")
        x = check_data(X, n_vars=self.n_features_in_)
        scorer = self.model_.scorer(x)
        return float(np.dot(self.weights_, scorer.batch(self.graphs_)))


class JointDiBS(_DiBSBase):
    """Particle approximation of ``p(G, Theta | D)`` for Gaussian networks."""

    def __init__(self, model="lingauss", n_particles=30, n_steps=3000, alpha_slope=0.2,
                 beta_slope=1.0, gamma_z=5.0, gamma_theta=500.0, latent_dim=None, sigma_z=None,
                 mc_samples=128, learning_rate=0.005, rmsprop_decay=0.9, tau=1.0,
                 estimator="gumbel", hard_forward=False, baseline=0.0, graph_prior="er",
                 edge_prob=None, scalar_latent=False, obs_noise=0.1, hidden=(5,),
                 minibatch_size=None, random_state=0, log_every=10, log_path=None):
        self.model = model
        self.n_particles = n_particles
        self.n_steps = n_steps
        self.alpha_slope = alpha_slope
        self.beta_slope = beta_slope
        self.gamma_z = gamma_z
        self.gamma_theta = gamma_theta
        self.latent_dim = latent_dim
        self.sigma_z = sigma_z
        self.mc_samples = mc_samples
        self.learning_rate = learning_rate
        self.rmsprop_decay = rmsprop_decay
        self.tau = tau
        self.estimator = estimator
        self.hard_forward = hard_forward
        self.baseline = baseline
        self.graph_prior = graph_prior
        self.edge_prob = edge_prob
        self.scalar_latent = scalar_latent
        self.obs_noise = obs_noise
        self.hidden = hidden
        self.minibatch_size = minibatch_size
        self.random_state = random_state
        self.log_every = log_every
        self.log_path = log_path

    def _make_model(self):
        if self.model == "lingauss":
            return LinearGaussian(self.obs_noise)
        if self.model == "nonlingauss":
            return NonlinearGaussian(tuple(self.hidden), self.obs_noise)
        raise ValueError(f"unknown model {self.model!r}; use 'lingauss' or 'nonlingauss'")

    def fit(self, X, y=None):
        x = check_data(X, min_samples=1)
        self.n_features_in_ = x.shape[1]
        self.model_ = self._make_model()
        res = run_joint(
            x, self.model_, n_particles=self.n_particles, latent_dim=self.latent_dim,
            schedule=self._schedule(), kernel=KernelSpec(self.gamma_z, self.gamma_theta),
            estimator=EstimatorConfig(self.estimator, self.mc_samples, self.baseline, self.tau,
                                      self.hard_forward),
            graph_prior=_graph_prior(self.graph_prior, self.edge_prob), sigma_z=self.sigma_z,
            scalar=self.scalar_latent, seed=self.random_state,
            minibatch_size=self.minibatch_size, log_every=self.log_every, log_path=self.log_path)
        self.params_ = res.params
        self._store(res)
        return self

    def score(self, X, y=None) -> float:
        """Posterior-averaged log likelihood of ``X`` (DiBS+ weights)."""
        check_is_fitted(self, "graphs_")
        x = check_data(X, n_vars=self.n_features_in_)
        vals = [self.model_.log_lik(x, g.astype(np.float64), th)
                for g, th in zip(self.graphs_, self.params_)]
        return float(np.dot(self.weights_, vals))
