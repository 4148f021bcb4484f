"""Command-line entry point: ``drsandbox <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from drsandbox import SandboxError


def _graph(path: str | None):
    from drsandbox.kgforge import bundled_graph, load_graph

    return load_graph(path) if path else bundled_graph()


def _env(args):
    from drsandbox.searchenv import SearchEnv, ToolLayerConfig

    return SearchEnv.from_graph(_graph(args.graph), ToolLayerConfig(failure_injection_rate=getattr(args, "failure_rate", 0.0)))


def _policy(spec: str):
    from drsandbox.policyopt import load_policy
    from drsandbox.searchenv import ChainPolicy, UniformPolicy

    if spec == "uniform":
        return UniformPolicy()
    if spec == "chain":
        return ChainPolicy()
    return load_policy(spec)


def _print(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True, default=str))


def cmd_synth(args) -> None:
    from drsandbox.kgforge import synthesize, write_instances

    hops = [int(h) for h in args.hops.split(",")]
    insts = synthesize(_graph(args.graph), hops if len(hops) > 1 else hops[0], args.count, args.seed)
    write_instances(insts, args.out)
    _print({"written": len(insts), "out": args.out})


def cmd_rollout(args) -> None:
    import numpy as np

    from drsandbox.kgforge import read_instances
    from drsandbox.policyopt.train import derive_seed
    from drsandbox.rewards import orm
    from drsandbox.searchenv import Limits, rollout, write_trajectories

    insts = read_instances(args.instances)
    env, policy = _env(args), _policy(args.policy)
    layer = env.new_layer()
    trajs = [rollout(policy, q, env, Limits(args.max_steps), derive_seed(args.seed, i), layer) for i, q in enumerate(insts)]
    write_trajectories(trajs, args.out)
    _print({"rollouts": len(trajs), "orm_acc": float(np.mean([orm(t, q).decision for t, q in zip(trajs, insts)]))})


def cmd_train(args) -> None:
    from drsandbox.kgforge import read_instances
    from drsandbox.policyopt import TrainConfig, evaluate, save_policy, train, write_metrics_csv
    from drsandbox.searchenv import Limits

    insts = read_instances(args.instances)
    env = _env(args)
    cfg = TrainConfig(objective=args.objective, steps=args.steps, seed=args.seed, lr=args.lr)
    res = train(cfg, insts, env)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_policy(res.params, out / "policy.json")
    write_metrics_csv(res.log, out / "train_metrics.csv")
    summary = {"steps": len(res.log), "final_phase": res.schedule.phase, "transitions": [list(h) for h in res.schedule.history]}
    if args.heldout:
        summary["heldout_orm_acc"] = evaluate(res.params, read_instances(args.heldout), env, Limits(cfg.max_steps), args.seed + 1)
    _print(summary)


def cmd_align(args) -> None:
    from drsandbox import alignment as al
    from drsandbox.kgforge import read_instances
    from drsandbox.policyopt import load_policy, save_policy

    if args.stage == "sample":
        ss = al.self_sample(_policy(args.policy), read_instances(args.instances), args.K, args.seed, _env(args))
        al.write_samples(ss.samples, args.out)
        _print({"samples": len(ss.samples), "zero_diversity": ss.zero_diversity})
    elif args.stage == "score":
        scored = al.score_samples(al.read_samples(args.input), read_instances(args.instances), _env(args), now=args.now)
        al.write_scored(scored, args.out)
        _print({"scored": len(scored)})
    elif args.stage == "partition":
        plus, minus = al.partition(al.read_scored(args.input), args.tau_hi, args.tau_lo)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        al.write_scored(plus, out / "d_plus.jsonl", "plus")
        al.write_scored(minus, out / "d_minus.jsonl", "minus")
        pairs = al.make_pairs(plus, minus)
        al.write_pairs(pairs, out / "pairs.jsonl")
        _print({"d_plus": len(plus), "d_minus": len(minus), "pairs": len(pairs)})
    elif args.stage == "dpo":
        fr = al.fit_dpo(load_policy(args.policy), al.read_pairs(args.input), args.beta, args.steps, args.lr)
        save_policy(fr.params, args.out)
        _print({"loss_start": fr.losses[0], "loss_end": fr.losses[-1]})
    else:
        fr = al.fit_self_sft(load_policy(args.policy), al.read_scored(args.input), args.steps, args.lr)
        save_policy(fr.params, args.out)
        _print({"loss_start": fr.losses[0], "loss_end": fr.losses[-1]})


def cmd_research(args) -> None:
    from drsandbox.kgforge import read_instances
    from drsandbox.orchestrator import AgentBackend, persist_trace, run_research
    from drsandbox.policyopt import load_policy

    kw = {}
    if args.backend == "scripted":
        kw["script"] = tuple(args.script.split(","))
    if args.policy:
        kw["params"] = load_policy(args.policy)
    backend = AgentBackend(args.backend, **kw)
    catalog = read_instances(args.catalog) if args.catalog else ()
    run = run_research(args.query, _env(args), backend, args.parallelism, args.seed, catalog)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    persist_trace(run, out / "trace.jsonl")
    (out / "report.md").write_text(run.final.body)
    _print({"subtasks": len(run.subreports), "answers": [sr.answer for sr in run.subreports], "out": str(out)})


def cmd_score_report(args) -> None:
    from drsandbox.reportrewards import load_rubric, score_report

    s = score_report(Path(args.report).read_text(), load_rubric(args.rubric), Path(args.ref).read_text(),
                     tau=args.tau, lambda_c=args.lambda_c, lambda_f=args.lambda_f)
    _print(s.to_dict())


def cmd_tense(args) -> None:
    from drsandbox.reportrewards import detect_temporal_errors

    findings = detect_temporal_errors(Path(args.report).read_text(), args.now)
    _print({
        "errors": sum(f.verdict == "error" for f in findings),
        "findings": [
            {"sentence": f.sentence, "expression": f.expression, "time": f.time_text,
             "attribution_found": f.attribution_found, "verdict": f.verdict, "detail": f.detail}
            for f in findings
        ],
    })


def cmd_eval(args) -> None:
    from drsandbox.harness.metrics import module_eval
    from drsandbox.orchestrator import load_trace
    from drsandbox.searchenv import read_trajectories

    trajs, reports = [], []
    for p in args.trace:
        first = json.loads(Path(p).read_text().split("\n", 1)[0])
        if first.get("type") == "header":
            run = load_trace(p)
            trajs += [t for t in run.trajectories if t is not None]
            reports.append(run.final)
        else:
            trajs += read_trajectories(p)
    reports += [Path(p).read_text() for p in args.report or ()]
    _print(module_eval(trajs, reports, args.now).to_dict())


def cmd_run(args) -> None:
    from drsandbox.harness.config import load_config
    from drsandbox.harness.pipeline import run_pipeline

    out = run_pipeline(load_config(args.config), args.out)
    _print(json.loads((out / "summary.json").read_text())["results"])


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="drsandbox", description="Desk-scale deep-research training sandbox.")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(fn=fn)
        return sp

    def graph(sp):
        sp.add_argument("--graph", help="graph JSON file (default: bundled graph)")

    sp = add("synth", cmd_synth, "synthesize multi-hop query instances")
    graph(sp)
    sp.add_argument("--hops", default="2", help="hop count, or a comma list to cycle")
    sp.add_argument("--count", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)

    sp = add("rollout", cmd_rollout, "roll out a policy on instances")
    graph(sp)
    sp.add_argument("--instances", required=True)
    sp.add_argument("--policy", default="uniform", help="uniform, chain, or a policy JSON file")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--max-steps", type=int, default=8)
    sp.add_argument("--failure-rate", type=float, default=0.0)
    sp.add_argument("--out", required=True)

    sp = add("train", cmd_train, "train the surrogate policy")
    graph(sp)
    sp.add_argument("--instances", required=True)
    sp.add_argument("--heldout")
    sp.add_argument("--objective", default="grpo", choices=("grpo", "gspo", "dapo"))
    sp.add_argument("--steps", type=int, default=300)
    sp.add_argument("--lr", type=float, default=2.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)

    sp = add("align", cmd_align, "preference alignment stages")
    graph(sp)
    sp.add_argument("--stage", required=True, choices=("sample", "score", "partition", "dpo", "self-sft"))
    sp.add_argument("--policy", default="uniform")
    sp.add_argument("--instances")
    sp.add_argument("--input", help="samples / scored / pairs file from the previous stage")
    sp.add_argument("--K", type=int, default=6)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--now")
    sp.add_argument("--tau-hi", type=float)
    sp.add_argument("--tau-lo", type=float)
    sp.add_argument("--beta", type=float, default=0.1)
    sp.add_argument("--steps", type=int, default=50)
    sp.add_argument("--lr", type=float, default=0.5)
    sp.add_argument("--out", required=True)

    sp = add("research", cmd_research, "run the planning / deep-search / report pipeline")
    graph(sp)
    sp.add_argument("--query", required=True)
    sp.add_argument("--backend", default="surrogate_policy", choices=("surrogate_policy", "scripted", "remote_chat"))
    sp.add_argument("--policy", help="policy JSON for the surrogate backend (default: oracle chain policy)")
    sp.add_argument("--script", default="web_search:start,web_search:next,web_search:next,answer:last")
    sp.add_argument("--catalog", help="instances file used to match subtasks to synthesized questions")
    sp.add_argument("--parallelism", type=int, default=1)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)

    sp = add("score-report", cmd_score_report, "composite reward of a markdown report")
    sp.add_argument("--report", required=True)
    sp.add_argument("--rubric", required=True)
    sp.add_argument("--ref", required=True)
    sp.add_argument("--tau", type=float, default=0.3)
    sp.add_argument("--lambda-c", type=float, default=1.0)
    sp.add_argument("--lambda-f", type=float, default=0.1)

    sp = add("tense", cmd_tense, "detect predictions about past time points")
    sp.add_argument("--report", required=True)
    sp.add_argument("--now", required=True)

    sp = add("eval", cmd_eval, "module metrics over traces and reports")
    sp.add_argument("--trace", nargs="+", default=[], help="research traces or trajectory JSONL files")
    sp.add_argument("--report", nargs="*", help="extra markdown reports")
    sp.add_argument("--now")

    sp = add("run", cmd_run, "run the configured pipeline")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.fn(args)
    except (SandboxError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
