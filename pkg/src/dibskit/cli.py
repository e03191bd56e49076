"""Command-line entry point: ``dibskit {generate,infer,evaluate,oracle,benchmark}``."""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .config import ConfigError, load_config, write_manifest
from .data import Dataset, read_csv
from .graph import GraphPrior, graph_from_json, graph_to_json
from .models import BGe, LinearGaussian, NonlinearGaussian


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n")


def _graph_prior(cfg):
    gp = cfg["graph_prior"]
    return None if gp["kind"] == "uniform" else GraphPrior(gp["kind"], gp["edge_prob"])


def _model(cfg):
    m = cfg["model"]
    if m["family"] == "bge":
        return BGe(m["bge_alpha_mu"], m["bge_alpha_omega"], m["bge_t"])
    if m["family"] == "lingauss":
        return LinearGaussian(m["obs_noise"])
    return NonlinearGaussian(tuple(m["hidden"]), m["obs_noise"])


def _load_data(cfg) -> Dataset:
    from .synth import mec4_instance, load_instance

    data = cfg.get("data") or {}
    sources = [k for k in ("instance", "csv", "preset") if k in data]
    if len(sources) != 1:
        raise ConfigError(["data: give exactly one of 'instance', 'csv' or 'preset'"])
    if "instance" in data:
        return load_instance(data["instance"]).train
    if "csv" in data:
        return read_csv(data["csv"], standardize=data.get("standardize", False))
    return mec4_instance(cfg["seed"], data.get("n_train", 100)).train


def cmd_generate(cfg, out: Path) -> dict:
    from .synth import mec4_instance, generate_instance, save_instance

    g = cfg["generate"]
    if g.get("preset") == "mec4":
        inst = mec4_instance(cfg["seed"], g["n_train"])
    else:
        inst = generate_instance(g["family"], g["graph_kind"], g["d"], cfg["seed"],
                                 n_train=g["n_train"], n_heldout=g["n_heldout"],
                                 n_interventions=g["n_interventions"],
                                 n_interv_obs=g["n_interv_obs"],
                                 interv_fraction=g["interv_fraction"], obs_noise=g["obs_noise"],
                                 hidden=tuple(g["hidden"]))
    save_instance(inst, out)
    return {"instance": str(out), "d": inst.d, "edges": int(inst.graph.sum())}


def _posterior_json(graphs, weights, params=None, **extra) -> dict:
    obj = {"d": int(graphs.shape[1]), "graphs": [graph_to_json(g)["edges"] for g in graphs],
           "weights": {k: np.asarray(v).tolist() for k, v in weights.items()}}
    if params is not None:
        obj["params"] = np.asarray(params).tolist()
    obj.update(extra)
    return obj


def cmd_infer(cfg, out: Path) -> dict:
    from .estimators import JointDiBS, MarginalDiBS
    from .mcmc import McmcConfig, gibbs_joint, mh_joint, structure_mcmc

    x = _load_data(cfg).x
    inf, mcfg = cfg["inference"], cfg["model"]
    prior = _graph_prior(cfg)
    method = inf["method"]
    if method == "dibs":
        common = dict(n_particles=inf["n_particles"], n_steps=inf["n_steps"],
                      alpha_slope=inf["alpha_slope"], beta_slope=inf["beta_slope"],
                      gamma_z=inf["gamma_z"], latent_dim=inf["latent_dim"],
                      sigma_z=inf["sigma_z"], mc_samples=inf["mc_samples"],
                      learning_rate=inf["learning_rate"], rmsprop_decay=inf["rmsprop_decay"],
                      tau=inf["tau"], baseline=inf["baseline"],
                      graph_prior=cfg["graph_prior"]["kind"],
                      edge_prob=cfg["graph_prior"]["edge_prob"],
                      scalar_latent=inf["scalar_latent"], random_state=cfg["seed"],
                      log_every=inf["log_every"],
                      log_path=str(out / "progress.csv") if inf["log_every"] else None)
        if mcfg["family"] == "bge":
            est = MarginalDiBS(bge_alpha_mu=mcfg["bge_alpha_mu"],
                               bge_alpha_omega=mcfg["bge_alpha_omega"], bge_t=mcfg["bge_t"],
                               **common)
            mode = "marginal"
        else:
            est = JointDiBS(model=mcfg["family"], gamma_theta=inf["gamma_theta"],
                            estimator=inf["estimator"], hard_forward=inf["hard_forward"],
                            obs_noise=mcfg["obs_noise"], hidden=tuple(mcfg["hidden"]),
                            minibatch_size=inf["minibatch_size"], **common)
            mode = "joint"
        est.fit(x)
        post = _posterior_json(est.graphs_, {"uniform": np.full(len(est.graphs_),
                                                                1 / len(est.graphs_)),
                                             "dibs+": est.weights_},
                               getattr(est, "params_", None), mode=mode, method="dibs",
                               n_discarded=est.n_discarded_,
                               log_joint=est.log_joint_.tolist())
    else:
        mc = McmcConfig(**cfg["mcmc"])
        model = _model(cfg)
        if method == "mcmc":
            if not isinstance(model, BGe):
                raise ConfigError(["model.family: structure MCMC needs the 'bge' model"])
            res = structure_mcmc(x, model.scorer(x), prior, mc, cfg["seed"])
            mode = "marginal"
        else:
            if isinstance(model, BGe):
                raise ConfigError([f"model.family: {method} needs an explicit likelihood model"])
            chain = mh_joint if method == "mh-mcmc" else gibbs_joint
            res = chain(x, model, prior, mc, cfg["seed"])
            mode = "joint"
        n = len(res.graphs)
        post = _posterior_json(res.graphs, {"uniform": np.full(n, 1 / n)}, res.params, mode=mode,
                               method=method, acceptance_rate=res.acceptance_rate)
    _dump(out / "posterior.json", post)
    return {"posterior": str(out / "posterior.json"), "particles": len(post["graphs"])}


def load_posterior(path, weighting: str):
    from .metrics import WeightedPosterior

    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"posterior file not found: {path}")
    obj = json.loads(path.read_text())
    d = obj["d"]
    graphs = np.stack([graph_from_json({"d": d, "edges": e}) for e in obj["graphs"]])
    params = np.array(obj["params"]) if "params" in obj else None
    return WeightedPosterior(graphs, obj["weights"][weighting], params), obj


def cmd_evaluate(cfg, out: Path) -> dict:
    from .synth import evaluate_posterior, load_instance

    ev = cfg["evaluate"]
    missing = [k for k in ("posterior", "instance") if k not in ev]
    if missing:
        raise ConfigError([f"evaluate.{k}: required for the evaluate command" for k in missing])
    inst = load_instance(ev["instance"])
    _, obj = load_posterior(ev["posterior"], "uniform")
    if obj["mode"] == "marginal":
        model = _model(cfg) if cfg["model"]["family"] == "bge" else BGe()
    else:
        model = inst.model
    records = []
    for weighting in obj["weights"]:
        post, _ = load_posterior(ev["posterior"], weighting)
        name = obj["method"] + ("+" if weighting == "dibs+" else "")
        rec = {"method": name, "seed": cfg["seed"]}
        rec.update(evaluate_posterior(post, inst, model, tuple(ev["metrics"])))
        records.append(rec)
    _dump(out / "metrics.json", records)
    _write_records_csv(out / "metrics.csv", records)
    return {"metrics": str(out / "metrics.json")}


def _write_records_csv(path: Path, records: list[dict]) -> None:
    keys = ["method", "seed", "e_shd", "auroc", "neg_ll", "neg_ill", "runtime_s", "error"]
    present = [k for k in keys if any(k in r for r in records)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(present)
        for r in records:
            w.writerow(["" if r.get(k) is None else r[k] for k in present])


def cmd_oracle(cfg, out: Path) -> dict:
    from .metrics import exact_posterior_oracle, mec_table

    x = _load_data(cfg).x
    model = _model(cfg)
    if isinstance(model, NonlinearGaussian):
        raise ConfigError(["model.family: the exact oracle supports 'bge' and 'lingauss'"])
    exact = exact_posterior_oracle(x, model, _graph_prior(cfg))
    probs = exact.probs
    order = np.argsort(-probs, kind="stable")
    result = {"d": int(x.shape[1]), "n_dags": int(len(exact.graphs)),
              "edge_marginals": exact.edge_marginals().tolist(),
              "dags": [{"edges": graph_to_json(exact.graphs[i])["edges"], "prob": float(probs[i])}
                       for i in order]}
    if x.shape[1] == 4:
        table = mec_table(exact)
        result["pairwise_table"] = table
        with open(out / "pairwise_table.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["edge_a", "edge_b", "prob"])
            for row in table:
                w.writerow([f"{row['edge_a'][0]}->{row['edge_a'][1]}",
                            f"{row['edge_b'][0]}->{row['edge_b'][1]}", repr(row["prob"])])
    _dump(out / "oracle.json", result)
    return {"oracle": str(out / "oracle.json")}


def cmd_benchmark(cfg, out: Path) -> dict:
    from .synth import MethodSpec, generate_instance, instance_seed, run_benchmark

    b, g = cfg["benchmark"], cfg["generate"]
    methods = [MethodSpec(m["name"], m["kind"], m.get("options", {}))
               for m in b.get("methods", [{"name": "DiBS", "kind": "dibs-joint"}])]
    instances = [generate_instance(b["family"], b["graph_kind"], b["d"],
                                   instance_seed(cfg["seed"], i), n_train=b["n_train"],
                                   n_heldout=g["n_heldout"], n_interventions=g["n_interventions"],
                                   n_interv_obs=g["n_interv_obs"],
                                   interv_fraction=g["interv_fraction"], obs_noise=g["obs_noise"],
                                   hidden=tuple(g["hidden"]))
                 for i in range(b["n_instances"])]
    report = run_benchmark(methods, instances, b["metrics"], timing=b["timing"],
                           workers=cfg["threads"] or 1)
    _dump(out / "report.json", report)
    _write_records_csv(out / "records.csv", report["records"])
    return {"report": str(out / "report.json"), "records": len(report["records"])}


COMMANDS = {"generate": cmd_generate, "infer": cmd_infer, "evaluate": cmd_evaluate,
            "oracle": cmd_oracle, "benchmark": cmd_benchmark}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dibskit", description=__doc__)
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="YAML or JSON config file (a previous manifest.json works)")
    p.add_argument("--profile", help="named default profile, e.g. bge-d20 or lingauss-d20")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--threads", type=int, help="worker processes / BLAS threads (default: all cores)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides: dict = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.threads is not None:
        overrides["threads"] = args.threads
    if args.profile is not None:
        overrides["profile"] = args.profile
    try:
        cfg = load_config(args.config, overrides)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        threads = cfg["threads"] or os.cpu_count() or 1
        with threadpool_limits(limits=1 if args.command == "benchmark" else threads):
            summary = COMMANDS[args.command](cfg, out)
        write_manifest(out, cfg, args.command)
    except (ConfigError, FileNotFoundError, ValueError, RuntimeError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, ConfigError):
            err["violations"] = exc.errors
        print(json.dumps(err, indent=2), file=sys.stderr)
        return 2
    print(json.dumps(summary))
    return 0


if __name__ == "__main__":
    sys.exit(main())
