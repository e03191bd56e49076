"""Synthetic benchmark instances and the method x instance benchmark loop."""
from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset, read_csv, read_interventions, write_csv, write_interventions_meta
from .graph import GraphPrior, graph_from_json, graph_to_json, sample_random_dag
from .models import BGe, LinearGaussian, NonlinearGaussian, ancestral_sample

FAMILIES = ("lingauss", "nonlingauss")
GRAPH_KINDS = ("er", "sf")


@dataclass
class BenchmarkInstance:
    family: str
    graph_kind: str
    d: int
    seed: int
    graph: np.ndarray
    params: np.ndarray
    model: object
    train: Dataset
    heldout: Dataset
    interventions: list[Dataset] = field(default_factory=list)


def make_generating_model(family: str, obs_noise: float = 0.1, hidden=(5,)):
    if family == "lingauss":
        return LinearGaussian(obs_noise=obs_noise)
    if family == "nonlingauss":
        return NonlinearGaussian(hidden=hidden, obs_noise=obs_noise)
    raise ValueError(f"unsupported model family {family!r}; choose from {FAMILIES}")


def generate_instance(family: str, graph_kind: str, d: int, seed: int, *, n_train: int = 100,
                      n_heldout: int = 100, n_interventions: int = 10, n_interv_obs: int = 100,
                      interv_fraction: float = 0.1, obs_noise: float = 0.1,
                      hidden=(5,)) -> BenchmarkInstance:
    """Sample a ground-truth network and its train, held-out and interventional data."""
    if graph_kind not in GRAPH_KINDS:
        raise ValueError(f"unsupported graph kind {graph_kind!r}; choose from {GRAPH_KINDS}")
    if d < 2:
        raise ValueError("need d >= 2")
    model = make_generating_model(family, obs_noise, hidden)
    ss = np.random.SeedSequence(seed)
    r_graph, r_params, r_train, r_held, r_int = (np.random.default_rng(s) for s in ss.spawn(5))
    g = sample_random_dag(GraphPrior(graph_kind), d, r_graph)
    theta = model.sample_params(r_params, d)
    train = Dataset(ancestral_sample(g, model, theta, n_train, r_train))
    heldout = Dataset(ancestral_sample(g, model, theta, n_heldout, r_held))
    n_targets = max(1, int(round(interv_fraction * d)))
    interventions = []
    for _ in range(n_interventions):
        targets = tuple(sorted(int(t) for t in r_int.choice(d, size=n_targets, replace=False)))
        xi = ancestral_sample(g, model, theta, n_interv_obs, r_int, clamp=(targets, 0.0))
        interventions.append(Dataset(xi, targets=targets, value=0.0))
    return BenchmarkInstance(family, graph_kind, d, seed, g, theta, model, train, heldout,
                             interventions)


MEC4_GRAPH = np.array([[0, 1, 1, 0],
                          [0, 0, 0, 1],
                          [0, 0, 0, 1],
                          [0, 0, 0, 0]], dtype=np.int8)
MEC4_WEIGHTS = np.array([[0.0, 2.0, -2.0, 0.0],
                            [0.0, 0.0, 0.0, 3.0],
                            [0.0, 0.0, 0.0, 1.0],
                            [0.0, 0.0, 0.0, 0.0]])


def mec4_instance(seed: int, n_train: int = 100) -> BenchmarkInstance:
    """Four-node network with a reversible pair x1 - x0 - x2 and the v-structure x1 -> x3 <- x2."""
    model = LinearGaussian(obs_noise=1.0)
    ss = np.random.SeedSequence(seed)
    r_train, r_held = (np.random.default_rng(s) for s in ss.spawn(2))
    train = Dataset(ancestral_sample(MEC4_GRAPH, model, MEC4_WEIGHTS, n_train, r_train))
    heldout = Dataset(ancestral_sample(MEC4_GRAPH, model, MEC4_WEIGHTS, 100, r_held))
    return BenchmarkInstance("lingauss", "fixed", 4, seed, MEC4_GRAPH.copy(),
                             MEC4_WEIGHTS.copy(), model, train, heldout, [])


PRESETS = {"mec4": mec4_instance}


def instance_seed(master: int, i: int) -> int:
    return int(master) ^ int(i)


def save_instance(inst: BenchmarkInstance, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    graph = graph_to_json(inst.graph)
    graph.update({"family": inst.family, "graph_kind": inst.graph_kind, "seed": inst.seed})
    (directory / "graph.json").write_text(json.dumps(graph, indent=2) + "\n")
    model = {"family": inst.family, "obs_noise": inst.model.obs_noise,
             "theta": np.asarray(inst.params).tolist()}
    if isinstance(inst.model, NonlinearGaussian):
        model["hidden"] = list(inst.model.hidden)
    (directory / "params.json").write_text(json.dumps(model) + "\n")
    write_csv(directory / "train.csv", inst.train.x)
    write_csv(directory / "heldout.csv", inst.heldout.x)
    for i, ds in enumerate(inst.interventions):
        write_csv(directory / f"interv_{i}.csv", ds.x)
    write_interventions_meta(directory / "interv_meta.json", inst.interventions)
    return directory


def load_instance(directory) -> BenchmarkInstance:
    directory = Path(directory)
    for name in ("graph.json", "params.json", "train.csv", "heldout.csv"):
        if not (directory / name).exists():
            raise FileNotFoundError(f"instance file not found: {directory / name}")
    graph_obj = json.loads((directory / "graph.json").read_text())
    g = graph_from_json(graph_obj)
    pobj = json.loads((directory / "params.json").read_text())
    model = make_generating_model(pobj["family"], pobj["obs_noise"], tuple(pobj.get("hidden", (5,))))
    interventions = read_interventions(directory) if (directory / "interv_meta.json").exists() else []
    return BenchmarkInstance(pobj["family"], graph_obj.get("graph_kind", "er"), g.shape[0],
                             int(graph_obj.get("seed", 0)), g, np.array(pobj["theta"]), model,
                             read_csv(directory / "train.csv"), read_csv(directory / "heldout.csv"),
                             interventions)


# -- benchmark loop ------------------------------------------------------------

METRICS = ("e_shd", "auroc", "neg_ll", "neg_ill")


@dataclass(frozen=True)
class MethodSpec:
    """``kind`` is one of ``dibs-joint``, ``dibs-marginal``, ``mcmc``, ``mh-mcmc``,
    ``gibbs-mcmc`` or ``empty``. DiBS kinds report both the uniform and the
    weighted (suffix ``+``) particle mixtures from one run.
    """

    name: str
    kind: str
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        kinds = ("dibs-joint", "dibs-marginal", "mcmc", "mh-mcmc", "gibbs-mcmc", "empty")
        if self.kind not in kinds:
            raise ValueError(f"unknown method kind {self.kind!r}; choose from {kinds}")


def _posteriors(method: MethodSpec, inst: BenchmarkInstance):
    """Run one method; returns ``[(name, WeightedPosterior, eval_model)]``."""
    from .estimators import JointDiBS, MarginalDiBS
    from .mcmc import McmcConfig, gibbs_joint, mh_joint, structure_mcmc
    from .metrics import WeightedPosterior

    x = inst.train.x
    opts = dict(method.options)
    if method.kind == "empty":
        return [(method.name, WeightedPosterior(np.zeros((1, inst.d, inst.d), dtype=np.int8),
                                                params=np.zeros((1,) + np.shape(inst.params))),
                 inst.model)]
    if method.kind == "dibs-marginal":
        est = MarginalDiBS(random_state=inst.seed, **opts).fit(x)
        bge = est.model_
        return [(method.name, est.posterior("uniform"), bge),
                (method.name + "+", est.posterior("dibs+"), bge)]
    if method.kind == "dibs-joint":
        opts.setdefault("model", inst.family)
        est = JointDiBS(random_state=inst.seed, **opts).fit(x)
        return [(method.name, est.posterior("uniform"), est.model_),
                (method.name + "+", est.posterior("dibs+"), est.model_)]
    bge_opts = {k: opts.pop(k) for k in list(opts) if k.startswith("bge_")}
    config = McmcConfig(**opts)
    if method.kind == "mcmc":
        bge = BGe(**{k[4:]: v for k, v in bge_opts.items()})
        res = structure_mcmc(x, bge.scorer(x), None, config, inst.seed)
        return [(method.name, WeightedPosterior(res.graphs), bge)]
    chain = mh_joint if method.kind == "mh-mcmc" else gibbs_joint
    res = chain(x, inst.model, None, config, inst.seed)
    return [(method.name, WeightedPosterior(res.graphs, params=res.params), inst.model)]


def evaluate_posterior(post, inst: BenchmarkInstance, model, metrics=METRICS) -> dict:
    from .metrics import auroc, edge_marginals, expected_shd, neg_interventional_log_lik, neg_log_lik

    out = {}
    if "e_shd" in metrics:
        out["e_shd"] = expected_shd(post, inst.graph)
    if "auroc" in metrics:
        out["auroc"] = auroc(edge_marginals(post), inst.graph)
    if "neg_ll" in metrics:
        out["neg_ll"] = neg_log_lik(post, inst.heldout.x, model)
    if "neg_ill" in metrics and inst.interventions:
        out["neg_ill"] = neg_interventional_log_lik(post, inst.interventions, model)
    return out


def _run_one(args):
    method, inst, metrics, timing = args
    start = time.perf_counter()
    try:
        results = _posteriors(method, inst)
    except Exception as exc:  # a failing method is recorded, not fatal
        rec = {"method": method.name, "seed": inst.seed, "error": f"{type(exc).__name__}: {exc}"}
        return [rec]
    runtime = time.perf_counter() - start
    records = []
    for name, post, model in results:
        rec = {"method": name, "seed": inst.seed}
        try:
            rec.update(evaluate_posterior(post, inst, model, metrics))
        except Exception as exc:
            rec["error"] = f"{type(exc).__name__}: {exc}"
        if timing:
            rec["runtime_s"] = runtime
        records.append(rec)
    return records


def aggregate(records: list[dict], metrics=METRICS) -> dict:
    """Median and quartiles per method and metric, ignoring missing values."""
    out: dict = {}
    for rec in records:
        out.setdefault(rec["method"], [])
        out[rec["method"]].append(rec)
    summary = {}
    for name, recs in out.items():
        entry = {"n": len(recs), "failures": sum("error" in r for r in recs)}
        for m in list(metrics) + (["runtime_s"] if any("runtime_s" in r for r in recs) else []):
            vals = np.array([r[m] for r in recs if r.get(m) is not None], dtype=np.float64)
            if vals.size:
                q25, med, q75 = np.percentile(vals, [25, 50, 75])
                entry[m] = {"median": float(med), "q25": float(q25), "q75": float(q75)}
        summary[name] = entry
    return summary


def run_benchmark(methods: list[MethodSpec], instances: list[BenchmarkInstance],
                  metrics=METRICS, *, timing: bool = False, workers: int = 1) -> dict:
    """Run every method on every instance; returns per-instance records and a summary.

    Runtimes are only recorded with ``timing=True`` (or when no metric is
    requested) so that reports are reproducible byte for byte by default.
    """
    if not methods or not instances:
        raise ValueError("need at least one method and one instance")
    metrics = tuple(metrics)
    if not metrics:
        timing = True
    jobs = [(m, inst, metrics, timing) for inst in instances for m in methods]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_one, jobs))
    else:
        chunks = [_run_one(j) for j in jobs]
    records = [r for chunk in chunks for r in chunk]
    return {"records": records, "summary": aggregate(records, metrics)}
