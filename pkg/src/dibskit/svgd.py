"""Stein variational transport of latent graph (and parameter) particles."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_positive
from .gradients import EstimatorConfig, _noise, expected_cyclicity, joint_posterior_score, \
    marginal_posterior_score
from .graph import GraphPrior, batch_is_acyclic, log_graph_prior
from .latent import TemperatureState, limit_graph, sample_latent_prior
from .models import param_prior_log_prob


@dataclass(frozen=True)
class KernelSpec:
    """Bandwidths of the additive squared-exponential kernel.

    ``gamma_theta=None`` drops the parameter term (marginal inference).
    """

    gamma_z: float = 5.0
    gamma_theta: float | None = None

    def __post_init__(self):
        check_positive("gamma_z", self.gamma_z)
        if self.gamma_theta is not None:
            check_positive("gamma_theta", self.gamma_theta)


@dataclass(frozen=True)
class Schedule:
    """``alpha_t = alpha_slope * t`` and ``beta_t = beta_slope * t`` for ``t = 1..T``."""

    iterations: int = 3000
    alpha_slope: float = 1.0
    beta_slope: float = 1.0
    learning_rate: float = 0.005
    rmsprop_decay: float = 0.9
    rmsprop_eps: float = 1e-8
    tau: float = 1.0

    def __post_init__(self):
        if int(self.iterations) < 0:
            raise ValueError("iterations must be >= 0")
        check_positive("alpha_slope", self.alpha_slope, strict=False)
        check_positive("beta_slope", self.beta_slope, strict=False)
        check_positive("learning_rate", self.learning_rate)
        if not 0.0 <= self.rmsprop_decay < 1.0:
            raise ValueError(f"rmsprop_decay must lie in [0, 1), got {self.rmsprop_decay}")
        check_positive("rmsprop_eps", self.rmsprop_eps)
        check_positive("tau", self.tau)

    def state(self, t: int, sigma_z: float) -> TemperatureState:
        return TemperatureState(self.alpha_slope * t, self.beta_slope * t, self.tau, sigma_z)


def _sqdist(x: np.ndarray) -> np.ndarray:
    flat = x.reshape(x.shape[0], -1)
    diff = flat[:, None, :] - flat[None, :, :]
    return np.einsum("kmp,kmp->km", diff, diff)


def kernel_eval(a_z, b_z, spec: KernelSpec, a_theta=None, b_theta=None) -> float:
    """``exp(-|Z - Z'|^2 / gamma_z) + exp(-|Theta - Theta'|^2 / gamma_theta)``."""
    a_z, b_z = np.asarray(a_z, dtype=np.float64), np.asarray(b_z, dtype=np.float64)
    if a_z.shape != b_z.shape:
        raise ValueError("latent shapes differ")
    k = math.exp(-np.sum((a_z - b_z) ** 2) / spec.gamma_z)
    if spec.gamma_theta is not None:
        a_t, b_t = np.asarray(a_theta, dtype=np.float64), np.asarray(b_theta, dtype=np.float64)
        if a_t.shape != b_t.shape:
            raise ValueError("parameter shapes differ")
        k += math.exp(-np.sum((a_t - b_t) ** 2) / spec.gamma_theta)
    return k


def kernel_grad_first(a_z, b_z, spec: KernelSpec, a_theta=None, b_theta=None):
    """Gradients of :func:`kernel_eval` with respect to its first argument."""
    a_z, b_z = np.asarray(a_z, dtype=np.float64), np.asarray(b_z, dtype=np.float64)
    diff = a_z - b_z
    gz = -2.0 / spec.gamma_z * diff * math.exp(-np.sum(diff ** 2) / spec.gamma_z)
    if spec.gamma_theta is None:
        return gz, None
    dt = np.asarray(a_theta, dtype=np.float64) - np.asarray(b_theta, dtype=np.float64)
    gt = -2.0 / spec.gamma_theta * dt * math.exp(-np.sum(dt ** 2) / spec.gamma_theta)
    return gz, gt


def svgd_direction(z, score_z, spec: KernelSpec, theta=None, score_theta=None):
    """Stein direction ``phi(x_m) = mean_k [k(x_k, x_m) score_k + grad_{x_k} k(x_k, x_m)]``.

    All particles are evaluated at the same (pre-update) ensemble.
    """
    m = z.shape[0]
    kz = np.exp(-_sqdist(z) / spec.gamma_z)
    k = kz
    kt = None
    if spec.gamma_theta is not None:
        kt = np.exp(-_sqdist(theta) / spec.gamma_theta)
        k = kz + kt

    def repulsion(x, kx, gamma):
        # sum_k -(2 / gamma) (x_k - x_m) K_km
        flat = x.reshape(m, -1)
        out = -(2.0 / gamma) * (kx.T @ flat - kx.sum(axis=0)[:, None] * flat)
        return out.reshape(x.shape)

    phi_z = (np.tensordot(k.T, score_z, axes=1) + repulsion(z, kz, spec.gamma_z)) / m
    if kt is None:
        return phi_z, None
    phi_t = (np.tensordot(k.T, score_theta, axes=1) + repulsion(theta, kt, spec.gamma_theta)) / m
    return phi_z, phi_t


class RMSProp:
    """Ascent steps ``x += lr * g / sqrt(v + eps)`` with ``v`` an EMA of ``g^2``."""

    def __init__(self, learning_rate=0.005, decay=0.9, eps=1e-8):
        self.learning_rate, self.decay, self.eps = learning_rate, decay, eps
        self.v = None

    def step(self, x: np.ndarray, g: np.ndarray) -> np.ndarray:
        if self.v is None:
            self.v = np.zeros_like(g)
        self.v = self.decay * self.v + (1.0 - self.decay) * g * g
        return x + self.learning_rate * g / np.sqrt(self.v + self.eps)


@dataclass
class ParticleEnsemble:
    z: np.ndarray
    theta: np.ndarray | None = None
    iteration: int = 0
    opt_z: RMSProp | None = field(default=None, repr=False)
    opt_theta: RMSProp | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.z.shape[0] < 1:
            raise ValueError("need at least one particle")
        if self.theta is not None and self.theta.shape[0] != self.z.shape[0]:
            raise ValueError("latent and parameter particle counts differ")

    @property
    def n_particles(self) -> int:
        return self.z.shape[0]


def svgd_step(ensemble: ParticleEnsemble, score_z, spec: KernelSpec, score_theta=None,
              schedule: Schedule | None = None) -> ParticleEnsemble:
    """Synchronous update of every particle along the Stein direction."""
    if not np.all(np.isfinite(score_z)) or (
            score_theta is not None and not np.all(np.isfinite(score_theta))):
        bad = np.where(~np.isfinite(score_z.reshape(score_z.shape[0], -1)).all(axis=1))[0]
        raise FloatingPointError(
            f"non-finite posterior score at iteration {ensemble.iteration}, particles {bad.tolist()}")
    schedule = schedule or Schedule()
    phi_z, phi_t = svgd_direction(ensemble.z, score_z, spec, ensemble.theta, score_theta)
    if ensemble.opt_z is None:
        ensemble.opt_z = RMSProp(schedule.learning_rate, schedule.rmsprop_decay, schedule.rmsprop_eps)
    ensemble.z = ensemble.opt_z.step(ensemble.z, phi_z)
    if phi_t is not None:
        if ensemble.opt_theta is None:
            ensemble.opt_theta = RMSProp(schedule.learning_rate, schedule.rmsprop_decay,
                                         schedule.rmsprop_eps)
        ensemble.theta = ensemble.opt_theta.step(ensemble.theta, phi_t)
    ensemble.iteration += 1
    return ensemble


def step_rng(seed: int, t: int) -> np.random.Generator:
    """Generator for iteration ``t``; independent of how many particles are run."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1, t)))


def init_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))


def trace_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2,)))


class ProgressLog:
    """Collects ``(iteration, alpha, beta, mean expected cyclicity, mean log joint)`` rows."""

    header = ("iteration", "alpha", "beta", "mean_cyclicity", "mean_log_joint")

    def __init__(self, path=None):
        self.rows: list[tuple] = []
        self._fh = None
        if path is not None:
            self._fh = open(path, "w", newline="")
            self._writer = csv.writer(self._fh)
            self._writer.writerow(self.header)

    def add(self, *row):
        self.rows.append(row)
        if self._fh is not None:
            self._writer.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])
            self._fh.flush()

    def close(self):
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def as_array(self) -> np.ndarray:
        return np.array(self.rows, dtype=np.float64).reshape(-1, len(self.header))


def _transport(ensemble, score_fn, log_joint_fn, kernel, schedule, seed, sigma_z, scalar,
               mc_samples, log_every, log):
    """Shared loop of the marginal and joint variants."""
    trace_noise = None
    for t in range(1, schedule.iterations + 1):
        state = schedule.state(t, sigma_z)
        rng = step_rng(seed, t)
        gz, gt = score_fn(ensemble.z, ensemble.theta, state, rng)
        svgd_step(ensemble, gz, kernel, gt, schedule)
        if log is not None and log_every and (t % log_every == 0 or t == schedule.iterations):
            if trace_noise is None:
                _, trace_noise = _noise(ensemble.z, mc_samples, trace_rng(seed), scalar)
            cyc = expected_cyclicity(ensemble.z, state.alpha, trace_noise, scalar=scalar)
            lj = log_joint_fn(limit_graph(ensemble.z, scalar=scalar), ensemble.theta)
            lj = lj[np.isfinite(lj)]
            log.add(t, float(state.alpha), float(state.beta), float(cyc.mean()),
                    float(lj.mean()) if lj.size else float("-inf"))
    return ensemble


@dataclass
class SvgdResult:
    graphs: np.ndarray
    latents: np.ndarray
    log_joint: np.ndarray
    params: np.ndarray | None = None
    n_discarded: int = 0
    trace: np.ndarray | None = None
    all_graphs: np.ndarray | None = None


def _finalize(z, theta, scalar, log_joint_fn, trace):
    gs = limit_graph(z, scalar=scalar)
    keep = batch_is_acyclic(gs)
    if not np.any(keep):
        raise RuntimeError("all particles ended in cyclic graphs; increase iterations or beta")
    th = None if theta is None else theta[keep]
    lj = log_joint_fn(gs[keep], th)
    return SvgdResult(graphs=gs[keep], latents=z[keep], log_joint=lj, params=th,
                      n_discarded=int((~keep).sum()), trace=trace, all_graphs=gs)


def _graph_log_prior(gs, graph_prior):
    if graph_prior is None or graph_prior.kind == "uniform":
        return np.zeros(gs.shape[:-2])
    return np.asarray(log_graph_prior(gs, graph_prior))


def init_particles(seed, n_particles, d, k, sigma_z, scalar=False, model=None):
    rng = init_rng(seed)
    z = sample_latent_prior(rng, n_particles, d, k, sigma_z, scalar=scalar)
    theta = None if model is None else model.sample_params(rng, d, n_particles)
    return z, theta


def run_marginal(x, scorer, *, n_particles: int = 30, latent_dim: int | None = None,
                 schedule: Schedule | None = None, kernel: KernelSpec | None = None,
                 estimator: EstimatorConfig | None = None, graph_prior: GraphPrior | None = None,
                 sigma_z: float | None = None, scalar: bool = False, seed: int = 0,
                 log_every: int = 10, log_path=None) -> SvgdResult:
    """Marginal inference of ``p(G | D)``.

    ``scorer`` is a bound marginal likelihood such as ``BGe().scorer(x)``;
    it must expose ``batch(graphs)`` returning ``-inf`` for cyclic graphs.
    """
    d = x.shape[1]
    schedule = schedule or Schedule(alpha_slope=2.0)
    kernel = kernel or KernelSpec(gamma_z=2.0)
    if kernel.gamma_theta is not None:
        raise ValueError("marginal inference uses a latent-only kernel; set gamma_theta=None")
    estimator = estimator or EstimatorConfig(kind="score")
    k = latent_dim or d
    sigma_z = sigma_z or 1.0 / math.sqrt(k)
    z, _ = init_particles(seed, n_particles, d, k, sigma_z, scalar)

    def score_fn(zs, _theta, state, rng):
        return marginal_posterior_score(zs, scorer.batch, state, estimator, rng, graph_prior,
                                        scalar=scalar), None

    def log_joint_fn(gs, _theta):
        return scorer.batch(gs) + _graph_log_prior(gs, graph_prior)

    log = ProgressLog(log_path) if log_every else None
    try:
        ens = _transport(ParticleEnsemble(z), score_fn, log_joint_fn, kernel, schedule, seed,
                         sigma_z, scalar, estimator.mc_samples, log_every, log)
    finally:
        if log is not None:
            log.close()
    return _finalize(ens.z, None, scalar, log_joint_fn, None if log is None else log.as_array())


def run_joint(x, model, *, n_particles: int = 30, latent_dim: int | None = None,
              schedule: Schedule | None = None, kernel: KernelSpec | None = None,
              estimator: EstimatorConfig | None = None, graph_prior: GraphPrior | None = None,
              sigma_z: float | None = None, scalar: bool = False, seed: int = 0,
              minibatch_size: int | None = None, log_every: int = 10,
              log_path=None) -> SvgdResult:
    """Joint inference of ``p(G, Theta | D)`` for an explicit likelihood model."""
    n, d = x.shape
    schedule = schedule or Schedule(alpha_slope=0.2)
    kernel = kernel or KernelSpec(gamma_z=5.0, gamma_theta=500.0)
    if kernel.gamma_theta is None:
        raise ValueError("joint inference needs gamma_theta")
    estimator = estimator or EstimatorConfig(kind="gumbel")
    k = latent_dim or d
    sigma_z = sigma_z or 1.0 / math.sqrt(k)
    z, theta = init_particles(seed, n_particles, d, k, sigma_z, scalar, model)
    full_stats = model.prepare(x)
    use_batches = minibatch_size is not None and minibatch_size < n

    def score_fn(zs, thetas, state, rng):
        stats, scale = full_stats, 1.0
        if use_batches:
            idx = rng.choice(n, size=minibatch_size, replace=False)
            stats, scale = model.prepare(x[idx]), n / minibatch_size
        return joint_posterior_score(zs, thetas, model, stats, state, estimator, rng, graph_prior,
                                     scalar=scalar, lik_scale=scale)

    def log_joint_fn(gs, thetas):
        ll, _, _ = model.log_lik_batch(full_stats, gs.astype(np.float64), thetas, grads=False)
        lp = np.array([param_prior_log_prob(th) for th in thetas])
        return ll + lp + _graph_log_prior(gs, graph_prior)

    log = ProgressLog(log_path) if log_every else None
    try:
        ens = _transport(ParticleEnsemble(z, theta), score_fn, log_joint_fn, kernel, schedule, seed,
                         sigma_z, scalar, estimator.mc_samples, log_every, log)
    finally:
        if log is not None:
            log.close()
    return _finalize(ens.z, ens.theta, scalar, log_joint_fn,
                     None if log is None else log.as_array())


def dibs_plus_weights(log_joint, graphs, params=None) -> np.ndarray:
    """Per-particle weights proportional to the unnormalized posterior.

    Duplicate particles form one mixture component whose mass is shared
    equally among the copies.
    """
    log_joint = np.asarray(log_joint, dtype=np.float64)
    if log_joint.size == 0:
        raise ValueError("no particles to weight")
    graphs = np.asarray(graphs)
    keys = []
    for i in range(len(log_joint)):
        key = graphs[i].astype(np.int8).tobytes()
        if params is not None:
            key += np.asarray(params[i], dtype=np.float64).tobytes()
        keys.append(key)
    uniq: dict[bytes, list[int]] = {}
    for i, key in enumerate(keys):
        uniq.setdefault(key, []).append(i)
    groups = list(uniq.values())
    lj = np.array([log_joint[g[0]] for g in groups])
    m = np.max(lj)
    if not np.isfinite(m):
        raise ValueError("all particles have zero posterior density")
    mass = np.exp(lj - m)
    mass /= mass.sum()
    w = np.empty(len(log_joint))
    for g, p in zip(groups, mass):
        w[g] = p / len(g)
    return w
