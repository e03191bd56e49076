import numpy as np
import pytest

from dibskit.gradients import EstimatorConfig, marginal_posterior_score
from dibskit.graph import is_acyclic
from dibskit.latent import limit_graph
from dibskit.models import BGe, LinearGaussian, ancestral_sample
from dibskit.svgd import (
    KernelSpec,
    ParticleEnsemble,
    ProgressLog,
    RMSProp,
    Schedule,
    dibs_plus_weights,
    init_particles,
    kernel_eval,
    kernel_grad_first,
    run_joint,
    run_marginal,
    step_rng,
    svgd_direction,
    svgd_step,
)

from conftest import central_diff, mec4_graphs


@pytest.fixture(scope="module")
def small_data():
    g = np.array([[0, 1, 0], [0, 0, 1], [0, 0, 0]])
    theta = np.array([[0, 1.5, 0], [0, 0, -1.0], [0, 0, 0]])
    return ancestral_sample(g, LinearGaussian(0.5), theta, 50, 0)


def test_kernel_self_values(rng):
    z = rng.normal(size=(2, 3, 3))
    th = rng.normal(size=(3, 3))
    assert kernel_eval(z, z, KernelSpec(1.0)) == 1.0
    assert kernel_eval(z, z, KernelSpec(1.0, 10.0), th, th) == 2.0
    gz, gt = kernel_grad_first(z, z, KernelSpec(1.0, 10.0), th, th)
    assert np.all(gz == 0) and np.all(gt == 0)


def test_kernel_grad_finite_differences(rng):
    spec = KernelSpec(gamma_z=3.0, gamma_theta=7.0)
    for _ in range(50):
        a, b = rng.normal(size=(2, 2, 2, 3)) * 0.7
        ta, tb = rng.normal(size=(2, 3, 3)) * 0.7
        gz, gt = kernel_grad_first(a, b, spec, ta, tb)
        num_z = central_diff(lambda x: kernel_eval(x, b, spec, ta, tb), a)
        num_t = central_diff(lambda x: kernel_eval(a, b, spec, x, tb), ta)
        assert np.allclose(gz, num_z, atol=1e-6) and np.allclose(gt, num_t, atol=1e-6)


def test_kernel_shape_mismatch(rng):
    with pytest.raises(ValueError):
        kernel_eval(np.zeros((2, 2, 3)), np.zeros((2, 3, 3)), KernelSpec())


def test_svgd_direction_matches_explicit_sum(rng):
    spec = KernelSpec(2.0, 5.0)
    z = rng.normal(size=(4, 2, 2, 3))
    th = rng.normal(size=(4, 3, 3))
    sz, st = rng.normal(size=z.shape), rng.normal(size=th.shape)
    phi_z, phi_t = svgd_direction(z, sz, spec, th, st)
    for m in range(4):
        ref_z = np.zeros_like(z[m])
        ref_t = np.zeros_like(th[m])
        for k in range(4):
            kv = kernel_eval(z[k], z[m], spec, th[k], th[m])
            gz, gt = kernel_grad_first(z[k], z[m], spec, th[k], th[m])
            ref_z += kv * sz[k] + gz
            ref_t += kv * st[k] + gt
        assert np.allclose(phi_z[m], ref_z / 4) and np.allclose(phi_t[m], ref_t / 4)


def test_single_particle_direction_is_score(rng):
    z = rng.normal(size=(1, 2, 3, 3))
    s = rng.normal(size=z.shape)
    phi, _ = svgd_direction(z, s, KernelSpec(1.0))
    assert np.array_equal(phi, s)


def test_identical_particles_zero_score_stay(rng):
    z = np.repeat(rng.normal(size=(1, 2, 2, 3)), 2, axis=0)
    ens = ParticleEnsemble(z.copy())
    svgd_step(ens, np.zeros_like(z), KernelSpec(1.0))
    assert np.array_equal(ens.z, z)


def test_distinct_particles_repel(rng):
    z = rng.normal(size=(2, 2, 2, 3))
    phi, _ = svgd_direction(z, np.zeros_like(z), KernelSpec(1.0))
    diff = (z[0] - z[1]).ravel()
    assert phi[0].ravel() @ diff > 0 and phi[1].ravel() @ diff < 0
    ens = ParticleEnsemble(z.copy())
    svgd_step(ens, np.zeros_like(z), KernelSpec(1.0))
    assert np.linalg.norm(ens.z[0] - ens.z[1]) > np.linalg.norm(z[0] - z[1])


def test_rmsprop_update_rule():
    opt = RMSProp(0.1, 0.9, 1e-8)
    x = np.array([1.0, -2.0])
    g = np.array([0.5, -4.0])
    v = 0.1 * g ** 2
    assert np.allclose(opt.step(x, g), x + 0.1 * g / np.sqrt(v + 1e-8))


def test_svgd_step_rejects_nan(rng):
    ens = ParticleEnsemble(rng.normal(size=(2, 2, 2, 2)))
    bad = np.zeros_like(ens.z)
    bad[1, 0, 0, 0] = np.nan
    with pytest.raises(FloatingPointError, match="particles \\[1\\]"):
        svgd_step(ens, bad, KernelSpec())


def test_schedule_validation():
    with pytest.raises(ValueError):
        Schedule(iterations=-1)
    with pytest.raises(ValueError):
        Schedule(rmsprop_decay=1.0)
    s = Schedule(alpha_slope=0.5, beta_slope=2.0)
    st = s.state(10, 1.0)
    assert st.alpha == 5.0 and st.beta == 20.0


def test_single_particle_equals_gradient_ascent(small_data):
    scorer = BGe().scorer(small_data)
    sched = Schedule(iterations=30, alpha_slope=1.0)
    est = EstimatorConfig("score", 32)
    sigma = 1 / np.sqrt(3)
    z0, _ = init_particles(5, 1, 3, 3, sigma)
    ens = ParticleEnsemble(z0.copy())
    z_ref, v = z0[0].copy(), np.zeros_like(z0[0])
    for t in range(1, 31):
        state = sched.state(t, sigma)
        g_ens = marginal_posterior_score(ens.z, scorer.batch, state, est, step_rng(5, t))
        svgd_step(ens, g_ens, KernelSpec(2.0), schedule=sched)
        g = marginal_posterior_score(z_ref, scorer.batch, state, est, step_rng(5, t))
        v = 0.9 * v + 0.1 * g * g
        z_ref = z_ref + 0.005 * g / np.sqrt(v + 1e-8)
        assert np.max(np.abs(ens.z[0] - z_ref)) <= 1e-12
    res = run_marginal(small_data, scorer, n_particles=1, schedule=sched, estimator=est, seed=5,
                       graph_prior=None, log_every=0)
    assert res.n_discarded == 0
    assert np.max(np.abs(res.latents[0] - z_ref)) <= 1e-12


def test_zero_iterations_returns_initial_limit_graphs(small_data):
    res = run_marginal(small_data, BGe().scorer(small_data), n_particles=6,
                       schedule=Schedule(iterations=0), seed=1, log_every=0)
    z0, _ = init_particles(1, 6, 3, 3, 1 / np.sqrt(3))
    gs = limit_graph(z0)
    keep = [is_acyclic(g) for g in gs]
    assert np.array_equal(res.graphs, gs[keep])
    assert res.n_discarded == 6 - sum(keep)


def test_marginal_run_is_deterministic(small_data, tmp_path):
    kw = dict(n_particles=5, schedule=Schedule(iterations=40, alpha_slope=1.0), seed=3,
              log_every=5)
    a = run_marginal(small_data, BGe().scorer(small_data), log_path=tmp_path / "a.csv", **kw)
    b = run_marginal(small_data, BGe().scorer(small_data), log_path=tmp_path / "b.csv", **kw)
    assert np.array_equal(a.latents, b.latents) and np.array_equal(a.graphs, b.graphs)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert a.trace.shape == (8, 5)
    assert all(is_acyclic(g) for g in a.graphs)


def test_joint_run_smoke(small_data):
    res = run_joint(small_data, LinearGaussian(0.5), n_particles=4,
                    schedule=Schedule(iterations=30, alpha_slope=0.2),
                    estimator=EstimatorConfig("gumbel", 16), seed=2, log_every=0)
    assert res.params.shape == (len(res.graphs), 3, 3)
    assert np.all(np.isfinite(res.log_joint))
    assert all(is_acyclic(g) for g in res.graphs)


def test_joint_minibatch_runs(small_data):
    res = run_joint(small_data, LinearGaussian(0.5), n_particles=3,
                    schedule=Schedule(iterations=10), estimator=EstimatorConfig("gumbel", 8),
                    seed=2, minibatch_size=20, log_every=0)
    assert len(res.graphs) + res.n_discarded == 3


def test_kernel_mode_checks(small_data):
    with pytest.raises(ValueError):
        run_marginal(small_data, BGe().scorer(small_data), kernel=KernelSpec(1.0, 1.0))
    with pytest.raises(ValueError):
        run_joint(small_data, LinearGaussian(), kernel=KernelSpec(1.0))


def test_cyclicity_trace_decreases_at_the_end(small_data):
    runs = 0
    for seed in range(30):
        res = run_marginal(small_data, BGe().scorer(small_data), n_particles=4,
                           schedule=Schedule(iterations=200, alpha_slope=1.0),
                           estimator=EstimatorConfig("score", 32), seed=seed, log_every=1)
        tail = res.trace[-20:, 3]
        runs += bool(np.all(np.diff(tail) <= 0))
    assert runs >= 27


def test_dibs_plus_weights_examples():
    assert np.array_equal(dibs_plus_weights([3.0], np.zeros((1, 2, 2))), [1.0])
    gs = np.stack([np.array([[0, 1], [0, 0]]), np.zeros((2, 2), dtype=int)])
    assert np.allclose(dibs_plus_weights([np.log(3.0), 0.0], gs), [0.75, 0.25])
    same = np.zeros((3, 2, 2), dtype=int)
    assert np.allclose(dibs_plus_weights([1.0, 1.0, 1.0], same), 1 / 3)


def test_dibs_plus_weights_split_duplicates():
    a = np.array([[0, 1], [0, 0]])
    b = np.zeros((2, 2), dtype=int)
    w = dibs_plus_weights([0.0, 0.0, 0.0], np.stack([a, a, b]))
    assert np.allclose(w, [0.25, 0.25, 0.5])


def test_dibs_plus_weights_equal_on_markov_equivalent_graphs(rng):
    x = rng.normal(size=(30, 4))
    scorer = BGe().scorer(x)
    gs = np.stack(mec4_graphs())
    w = dibs_plus_weights(scorer.batch(gs), gs)
    assert np.ptp(w) <= 1e-6


def test_dibs_plus_weights_errors():
    with pytest.raises(ValueError):
        dibs_plus_weights([], np.zeros((0, 2, 2)))
    with pytest.raises(ValueError):
        dibs_plus_weights([-np.inf], np.zeros((1, 2, 2)))


def test_progress_log_roundtrip(tmp_path):
    log = ProgressLog(tmp_path / "p.csv")
    log.add(1, 0.5, 1.0, 0.25, -3.0)
    log.close()
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == ",".join(ProgressLog.header)
    assert log.as_array().shape == (1, 5)
