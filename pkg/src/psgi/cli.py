"""Command-line interface.

Subcommands: sample-task, adapt, infer, meta-train, meta-eval, attr-eval,
export-dot, plan.  Exit codes: 0 success, 1 validation/usage error, 2 runtime
error.  The PSGI_LOG environment variable (error|warn|info|debug) controls
diagnostics.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .attributes import attribute_accuracy, generate_candidate_attributes, synth_embeddings
from .domain import load_domain
from .dot import export_dot
from .env import critical_paths, reset, sample_task
from .errors import ParseError, PsgiError, ValidationError
from .graphio import graph_to_json, load_graphs, save_graphs
from .graphs import semantic_graph_error
from .grprop import GRPropConfig
from .harness import (
    ExperimentConfig,
    RewardEstimator,
    meta_eval,
    meta_train,
    run_adaptation,
    write_csv,
)
from .inference import InferenceMode, infer_psg
from .policies import CountBasedPolicy, exact_plan

_LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging() -> None:
    level = os.environ.get("PSGI_LOG", "warn").lower()
    logging.basicConfig(
        level=_LOG_LEVELS.get(level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--domain", type=Path, help="domain config file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--mode", choices=["psgi", "msgi", "random"], default="psgi")
    p.add_argument("--pool", choices=["train", "eval"], default="eval")
    p.add_argument("--budget", type=int, default=1000, help="adaptation steps")
    p.add_argument("--embed-sigma", type=float, default=0.1)
    p.add_argument("--embed-seed", type=int, default=17)
    # graph-propagation overrides
    p.add_argument("--temperature", type=float, default=200.0)
    p.add_argument("--w-a", type=float, default=3.0)
    p.add_argument("--beta-a", type=float, default=8.0)
    p.add_argument("--eps-or", type=float, default=0.8)
    p.add_argument("--t-or", type=float, default=2.0)
    p.add_argument("--k-iters", type=int, default=8)
    # transfer settings
    p.add_argument("--t-prior", type=int, default=2000)
    p.add_argument("--n-priors", type=int, default=4)
    p.add_argument("--t-switch", type=int, default=1000)
    p.add_argument("--test-episodes", type=int, default=10)
    p.add_argument("--test-horizon", type=int, default=None)
    p.add_argument("--budgets", type=str, default="0,100,250,500,1000,2000")
    p.add_argument("--agents", type=str, default="psgi,msgi,random")
    p.add_argument("--seeds", type=str, default=None, help="comma list; default: --seed only")
    p.add_argument("--train-seed", type=int, default=1000)
    p.add_argument("--probes", type=int, default=10_000)


def _require_domain(args) -> Path:
    if args.domain is None:
        raise ValidationError("--domain is required")
    return args.domain


def _grprop_config(args) -> GRPropConfig:
    return GRPropConfig(
        temperature=args.temperature,
        w_a=args.w_a,
        beta_a=args.beta_a,
        eps_or=args.eps_or,
        t_or=args.t_or,
        k_iters=args.k_iters,
    )


def _experiment_config(args) -> ExperimentConfig:
    seeds = (
        tuple(int(s) for s in args.seeds.split(",")) if args.seeds else (args.seed,)
    )
    return ExperimentConfig(
        domain=_require_domain(args),
        seeds=seeds,
        budgets=tuple(int(b) for b in args.budgets.split(",")),
        agents=tuple(args.agents.split(",")),
        test_episodes=args.test_episodes,
        test_horizon=args.test_horizon,
        n_priors=args.n_priors,
        t_prior=args.t_prior,
        t_switch=args.t_switch,
        grprop=_grprop_config(args),
        embed_sigma=args.embed_sigma,
        embed_seed=args.embed_seed,
        probes=args.probes,
        train_seed=args.train_seed,
        out_dir=args.out,
    )


def _embedding_spec(args) -> dict:
    return {"source": "synthetic", "sigma": args.embed_sigma, "seed": args.embed_seed}


def _cmd_sample_task(args) -> int:
    cfg = load_domain(_require_domain(args))
    task = sample_task(cfg, args.pool, args.seed)
    cpl = critical_paths(task)
    doc = {
        "domain": cfg.name,
        "pool": args.pool,
        "seed": args.seed,
        "entities": list(task.entities),
        "n_subtasks": task.n_subtasks,
        "n_options": task.n_options,
        "rewarded_subtask": str(task.subtasks[task.rewarded_subtask]),
        "critical_path_length": float(cpl.lengths[task.rewarded_subtask]),
    }
    print(json.dumps(doc, indent=2))
    return 0


def _adapt(args, cfg, task):
    policy = CountBasedPolicy(task.n_options, np.random.default_rng(args.seed))
    return run_adaptation(task, policy, args.budget)


def _cmd_adapt(args) -> int:
    cfg = load_domain(_require_domain(args))
    task = sample_task(cfg, args.pool, args.seed)
    traj = _adapt(args, cfg, task)
    doc = {
        "domain": str(args.domain),
        "pool": args.pool,
        "seed": args.seed,
        "budget": args.budget,
        "steps": len(traj),
        "reward_collected": float(traj.rewards.sum()),
        "episodes": int(traj.dones.sum()),
    }
    print(json.dumps(doc, indent=2))
    return 0


def _cmd_infer(args) -> int:
    cfg = load_domain(_require_domain(args))
    task = sample_task(cfg, args.pool, args.seed)
    traj = _adapt(args, cfg, task)
    if args.mode == "msgi":
        graph = infer_psg(traj, task, [], InferenceMode.MSGI_PLUS)
    else:
        emb = synth_embeddings(cfg, args.embed_sigma, args.embed_seed)
        attrs = generate_candidate_attributes(list(task.entities), emb)
        graph = infer_psg(traj, task, attrs, InferenceMode.PSGI)
    prec, eff = semantic_graph_error(graph, task.graph, task, probes=args.probes, rng_seed=args.seed)
    doc = graph_to_json(graph)
    doc["semantic_error"] = {"precondition": prec, "effect": eff}
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        path = args.out / f"{cfg.name}_{args.mode}_seed{args.seed}.graph.json"
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        print(str(path))
    else:
        print(json.dumps(doc, indent=2, sort_keys=True))
    return 0


def _cmd_meta_train(args) -> int:
    exp = _experiment_config(args)
    cfg = load_domain(exp.domain)
    priors = meta_train(exp, cfg)
    out = Path(args.out) if args.out else Path.cwd()
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{cfg.name}_priors.json"
    save_graphs(path, priors, _embedding_spec(args))
    print(str(path))
    return 0


def _cmd_meta_eval(args) -> int:
    exp = _experiment_config(args)
    cfg = load_domain(exp.domain)
    if args.priors:
        priors = load_graphs(args.priors, cfg)
    elif "psgi" in exp.agents:
        priors = meta_train(exp, cfg)
    else:
        priors = []
    points = meta_eval(exp, priors, cfg)
    out = Path(args.out) if args.out else Path.cwd()
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{cfg.name}_curves.csv"
    write_csv(path, points)
    print(str(path))
    return 0


def _cmd_attr_eval(args) -> int:
    cfg = load_domain(_require_domain(args))
    task = sample_task(cfg, "train", args.seed)
    rng = np.random.default_rng([args.seed, 0xA77])
    names = [f"probe_{i}" for i in range(args.holdout)]
    donors = [task.entities[int(rng.integers(len(task.entities)))] for _ in names]
    import dataclasses

    holdout_defs = [
        dataclasses.replace(cfg.entities[0], id=n, attributes={a: cfg.entity_attribute(d, a) for a in cfg.attributes}, pool="eval")
        for n, d in zip(names, donors)
    ]
    extended = dataclasses.replace(
        cfg, entities=tuple(cfg.entities) + tuple(holdout_defs)
    )
    emb = synth_embeddings(extended, args.embed_sigma, args.embed_seed)
    attrs = generate_candidate_attributes(list(task.entities), emb)
    truth = {
        a: {e: extended.entity_attribute(e, a) for e in list(task.entities) + names}
        for a in cfg.attributes
    }
    per_attr, mean = attribute_accuracy(attrs, truth, names, emb)
    doc = {"domain": cfg.name, "sigma": args.embed_sigma, "per_attribute": per_attr, "mean": mean}
    print(json.dumps(doc, indent=2, sort_keys=True))
    return 0


def _cmd_export_dot(args) -> int:
    if args.graph:
        cfg = load_domain(_require_domain(args)) if args.domain else None
        doc = json.loads(Path(args.graph).read_text(encoding="utf-8"))
        from .graphio import embedding_from_spec, graph_from_json

        emb = None
        if "attributes" in doc and cfg is not None:
            emb = embedding_from_spec(doc.get("embedding", _embedding_spec(args)), cfg)
        graph = graph_from_json(doc, emb)
    else:
        cfg = load_domain(_require_domain(args))
        task = sample_task(cfg, args.pool, args.seed)
        graph = task.graph
    sys.stdout.write(export_dot(graph))
    return 0


def _cmd_plan(args) -> int:
    cfg = load_domain(_require_domain(args))
    task = sample_task(cfg, args.pool, args.seed)
    x = reset(task).x
    plan = exact_plan(task.graph, task, x, task.rewarded_subtask)
    doc = {
        "rewarded_subtask": str(task.subtasks[task.rewarded_subtask]),
        "plan": None if plan is None else [str(task.options[o]) for o in plan],
        "length": None if plan is None else len(plan),
    }
    print(json.dumps(doc, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="psgi", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    specs = {
        "sample-task": _cmd_sample_task,
        "adapt": _cmd_adapt,
        "infer": _cmd_infer,
        "meta-train": _cmd_meta_train,
        "meta-eval": _cmd_meta_eval,
        "attr-eval": _cmd_attr_eval,
        "export-dot": _cmd_export_dot,
        "plan": _cmd_plan,
    }
    for name, fn in specs.items():
        p = sub.add_parser(name)
        _add_common(p)
        if name == "meta-eval":
            p.add_argument("--priors", type=Path, help="prior graphs file from meta-train")
        if name == "attr-eval":
            p.add_argument("--holdout", type=int, default=20)
        if name == "export-dot":
            p.add_argument("graph", nargs="?", type=Path, help="inferred-graph JSON file")
        p.set_defaults(fn=fn)
    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except PsgiError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
