import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from dibskit import JointDiBS, MarginalDiBS
from dibskit.graph import is_acyclic
from dibskit.models import LinearGaussian, ancestral_sample


@pytest.fixture(scope="module")
def data():
    g = np.array([[0, 1, 0], [0, 0, 1], [0, 0, 0]])
    return ancestral_sample(g, LinearGaussian(0.1), np.array([[0, 1.5, 0], [0, 0, -1.0], [0, 0, 0]]),
                            60, 0)


FAST = dict(n_particles=4, n_steps=40, mc_samples=16, log_every=0)


def test_params_and_clone():
    est = MarginalDiBS(n_particles=7, gamma_z=3.0)
    assert est.get_params()["n_particles"] == 7
    c = clone(est)
    assert c.get_params() == est.get_params() and c is not est
    j = JointDiBS().set_params(alpha_slope=0.5)
    assert j.alpha_slope == 0.5


def test_unfitted_raises():
    with pytest.raises(NotFittedError):
        MarginalDiBS().posterior()


@pytest.mark.parametrize("cls", [MarginalDiBS, JointDiBS])
def test_fit_outputs(cls, data):
    est = cls(**FAST).fit(data)
    assert est.n_features_in_ == 3
    assert len(est.graphs_) + est.n_discarded_ == 4
    assert all(is_acyclic(g) for g in est.graphs_)
    assert est.weights_.sum() == pytest.approx(1.0)
    m = est.edge_marginals("dibs+")
    assert m.shape == (3, 3) and np.all((m >= 0) & (m <= 1))
    assert est.predict().shape == (3, 3)
    assert np.isfinite(est.score(data))
    with pytest.raises(ValueError):
        est.posterior("mystery")
    with pytest.raises(ValueError):
        est.score(data[:, :2])


def test_fit_is_reproducible(data):
    a = JointDiBS(**FAST, random_state=4).fit(data)
    b = JointDiBS(**FAST, random_state=4).fit(data)
    assert np.array_equal(a.latents_, b.latents_) and np.array_equal(a.params_, b.params_)


def test_joint_nonlinear_and_unknown_model(data):
    est = JointDiBS(model="nonlingauss", hidden=(3,), **FAST).fit(data)
    assert est.params_.shape[1] == est.model_.n_params(3)
    with pytest.raises(ValueError):
        JointDiBS(model="poisson", **FAST).fit(data)


def test_input_validation():
    with pytest.raises(ValueError):
        MarginalDiBS(**FAST).fit(np.ones(5))
    with pytest.raises(ValueError):
        JointDiBS(**FAST).fit(np.full((3, 2), np.nan))


def test_progress_log_written(tmp_path, data):
    path = tmp_path / "progress.csv"
    MarginalDiBS(n_particles=3, n_steps=20, mc_samples=8, log_every=5, log_path=str(path)).fit(data)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("iteration,alpha,beta") and len(lines) == 5
