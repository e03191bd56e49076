import numpy as np
import pytest

from dibskit.graph import is_acyclic
from dibskit.metrics import auroc, edge_marginals, expected_shd, neg_log_lik
from dibskit.models import NonlinearGaussian
from dibskit.synth import (
    MEC4_GRAPH,
    MethodSpec,
    PRESETS,
    aggregate,
    evaluate_posterior,
    mec4_instance,
    generate_instance,
    instance_seed,
    load_instance,
    run_benchmark,
    save_instance,
)


def _same(a, b):
    assert np.array_equal(a.graph, b.graph) and np.array_equal(a.params, b.params)
    assert np.array_equal(a.train.x, b.train.x) and np.array_equal(a.heldout.x, b.heldout.x)
    assert len(a.interventions) == len(b.interventions)
    for p, q in zip(a.interventions, b.interventions):
        assert p.targets == q.targets and np.array_equal(p.x, q.x)


@pytest.mark.parametrize("family,kind", [("lingauss", "er"), ("nonlingauss", "sf")])
def test_generation_is_deterministic(family, kind):
    _same(generate_instance(family, kind, 6, 11), generate_instance(family, kind, 6, 11))


def test_instance_contents():
    inst = generate_instance("lingauss", "er", 10, 3)
    assert is_acyclic(inst.graph)
    assert inst.train.x.shape == (100, 10) and inst.heldout.x.shape == (100, 10)
    assert len(inst.interventions) == 10
    for ds in inst.interventions:
        assert ds.x.shape == (100, 10) and len(ds.targets) == 1
        assert np.all(ds.x[:, list(ds.targets)] == 0.0)


def test_er_edge_count_across_seeds():
    counts = [generate_instance("lingauss", "er", 20, s, n_train=1, n_heldout=1,
                                n_interventions=0).graph.sum() for s in range(200)]
    assert abs(np.mean(counts) - 40) < 2.0


def test_generation_errors():
    with pytest.raises(ValueError):
        generate_instance("poisson", "er", 5, 0)
    with pytest.raises(ValueError):
        generate_instance("lingauss", "grid", 5, 0)


def test_nonlinear_instance_params():
    inst = generate_instance("nonlingauss", "er", 5, 1, n_interventions=1)
    assert isinstance(inst.model, NonlinearGaussian)
    assert inst.params.shape == (inst.model.n_params(5),)


def test_save_load_round_trip(tmp_path):
    for family in ("lingauss", "nonlingauss"):
        inst = generate_instance(family, "er", 5, 2, n_interventions=3)
        save_instance(inst, tmp_path / family)
        files = sorted(p.name for p in (tmp_path / family).iterdir())
        assert files == ["graph.json", "heldout.csv", "interv_0.csv", "interv_1.csv",
                         "interv_2.csv", "interv_meta.json", "params.json", "train.csv"]
        _same(inst, load_instance(tmp_path / family))


def test_load_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError, match="graph.json"):
        load_instance(tmp_path)


def test_mec4_preset():
    inst = PRESETS["mec4"](0)
    assert np.array_equal(inst.graph, MEC4_GRAPH)
    assert inst.params[0, 1] == 2.0 and inst.params[0, 2] == -2.0
    assert inst.params[1, 3] == 3.0 and inst.params[2, 3] == 1.0
    assert np.array_equal(inst.train.x, mec4_instance(0).train.x)


def test_instance_seed_xor():
    assert [instance_seed(8, i) for i in range(4)] == [8, 9, 10, 11]


def test_method_spec_validation():
    with pytest.raises(ValueError):
        MethodSpec("x", "magic")


def test_single_record_matches_direct_calls():
    inst = generate_instance("lingauss", "er", 5, 4, n_interventions=2)
    rep = run_benchmark([MethodSpec("Empty", "empty")], [inst])
    rec = rep["records"][0]
    from dibskit.metrics import WeightedPosterior

    post = WeightedPosterior(np.zeros((1, 5, 5)), params=np.zeros((1, 5, 5)))
    assert rec["e_shd"] == expected_shd(post, inst.graph)
    assert rec["auroc"] == auroc(edge_marginals(post), inst.graph)
    assert rec["neg_ll"] == neg_log_lik(post, inst.heldout.x, inst.model)
    assert rec == {"method": "Empty", "seed": 4,
                   **evaluate_posterior(post, inst, inst.model)}


def test_empty_metric_list_is_runtime_only():
    inst = generate_instance("lingauss", "er", 4, 0, n_interventions=0)
    rep = run_benchmark([MethodSpec("Empty", "empty")], [inst], metrics=())
    assert set(rep["records"][0]) == {"method", "seed", "runtime_s"}


def test_failures_are_recorded_not_fatal():
    inst = generate_instance("lingauss", "er", 4, 0, n_interventions=0)
    bad = MethodSpec("Bad", "dibs-joint", {"n_particles": -1})
    rep = run_benchmark([bad, MethodSpec("Empty", "empty")], [inst])
    assert "error" in rep["records"][0]
    assert rep["summary"]["Bad"]["failures"] == 1 and "e_shd" in rep["records"][1]


def test_dibs_methods_report_both_variants():
    inst = generate_instance("lingauss", "er", 4, 1, n_interventions=1)
    methods = [MethodSpec("DiBS", "dibs-joint", {"n_particles": 3, "n_steps": 10,
                                                   "mc_samples": 8, "log_every": 0}),
               MethodSpec("BGeDiBS", "dibs-marginal", {"n_particles": 3, "n_steps": 10,
                                                        "mc_samples": 8, "log_every": 0}),
               MethodSpec("MCMC", "mcmc", {"burn_in": 100, "thinning": 10, "samples": 5}),
               MethodSpec("G-MCMC", "gibbs-mcmc", {"burn_in": 50, "thinning": 5, "samples": 5})]
    rep = run_benchmark(methods, [inst])
    names = [r["method"] for r in rep["records"]]
    assert names == ["DiBS", "DiBS+", "BGeDiBS", "BGeDiBS+", "MCMC", "G-MCMC"]
    assert all("error" not in r for r in rep["records"])


def test_parallel_matches_serial():
    insts = [generate_instance("lingauss", "er", 4, s, n_interventions=1) for s in range(2)]
    m = [MethodSpec("MCMC", "mh-mcmc", {"burn_in": 50, "thinning": 5, "samples": 4})]
    assert run_benchmark(m, insts, workers=2) == run_benchmark(m, insts, workers=1)


def test_aggregate_quartiles():
    recs = [{"method": "A", "seed": i, "e_shd": float(i)} for i in range(5)]
    recs.append({"method": "A", "seed": 9, "error": "boom"})
    s = aggregate(recs, metrics=("e_shd",))["A"]
    assert s["n"] == 6 and s["failures"] == 1
    assert s["e_shd"] == {"median": 2.0, "q25": 1.0, "q75": 3.0}
