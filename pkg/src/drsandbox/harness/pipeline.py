"""End-to-end pipeline: synth -> rollout -> train -> align -> research -> eval."""

from __future__ import annotations

import csv
import hashlib
import json
import traceback
from pathlib import Path

import numpy as np

from drsandbox import SandboxError
from drsandbox.alignment import fit_dpo, fit_self_sft, make_pairs, partition, score_samples, self_sample, write_pairs, write_samples
from drsandbox.harness.config import STAGES, RunConfig, dump_config
from drsandbox.harness.metrics import module_eval
from drsandbox.kgforge import bundled_graph, load_graph, read_instances, synthesize, write_instances
from drsandbox.orchestrator import AgentBackend, load_trace, persist_trace, run_research
from drsandbox.policyopt import PolicyParams, evaluate, load_policy, save_policy, train, write_metrics_csv
from drsandbox.policyopt.train import derive_seed
from drsandbox.rewards import orm
from drsandbox.searchenv import ChainPolicy, SearchEnv, UniformPolicy, read_trajectories, rollout, write_trajectories


class StageFailed(SandboxError):
    def __init__(self, stage: str, record: dict):
        super().__init__(f"stage {stage!r} failed: {record['error_type']}: {record['message']}")
        self.stage = stage
        self.record = record


def sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


class _Run:
    """Lazily loads earlier-stage artifacts from disk, or regenerates them."""

    def __init__(self, cfg: RunConfig, out: Path):
        self.cfg, self.out = cfg, out
        self._graph = self._env = self._instances = None
        self.summary: dict = {}

    @property
    def graph(self):
        if self._graph is None:
            g = self.cfg.synth.graph
            self._graph = load_graph(g) if g else bundled_graph()
        return self._graph

    @property
    def env(self):
        if self._env is None:
            self._env = SearchEnv.from_graph(self.graph, self.cfg.tool_config())
        return self._env

    def instances(self):
        if self._instances is None:
            tr, ho = self.out / "train_instances.jsonl", self.out / "heldout_instances.jsonl"
            if tr.exists() and ho.exists():
                self._instances = (read_instances(tr), read_instances(ho))
            else:
                s = self.cfg.synth
                pool = synthesize(self.graph, s.hops, s.train_count + s.heldout_count, seed=s.seed)
                if len(pool) < s.train_count + s.heldout_count:
                    raise SandboxError(f"graph yielded only {len(pool)} instances")
                self._instances = (pool[: s.train_count], pool[s.train_count:])
        return self._instances

    def params(self, prefer=("aligned_policy.json", "policy.json")):
        for name in prefer:
            if (self.out / name).exists():
                return load_policy(self.out / name)
        return None

    # ---- stages ----

    def synth(self):
        train_set, heldout = self.instances()
        write_instances(train_set, self.out / "train_instances.jsonl")
        write_instances(heldout, self.out / "heldout_instances.jsonl")
        self.summary["synth"] = {"train": len(train_set), "heldout": len(heldout)}

    def rollout(self):
        train_set, _ = self.instances()
        r = self.cfg.rollout
        policy = ChainPolicy() if r.policy == "chain" else UniformPolicy()
        layer = self.env.new_layer()
        items = train_set[: r.count]
        trajs = [rollout(policy, q, self.env, self.cfg.limits(), derive_seed(self.cfg.run.seed, 7, i), layer) for i, q in enumerate(items)]
        write_trajectories(trajs, self.out / "rollouts.jsonl")
        acc = float(np.mean([orm(t, q).decision for t, q in zip(trajs, items)]))
        self.summary["rollout"] = {"policy": r.policy, "count": len(trajs), "orm_acc": acc}

    def train(self):
        train_set, heldout = self.instances()
        res = train(self.cfg.train_config(), train_set, self.env)
        save_policy(res.params, self.out / "policy.json")
        write_metrics_csv(res.log, self.out / "train_metrics.csv")
        acc = evaluate(res.params, heldout, self.env, self.cfg.limits(), derive_seed(self.cfg.run.seed, 99))
        self.summary["train"] = {
            "steps": len(res.log), "final_phase": res.schedule.phase, "heldout_orm_acc": acc,
            "transitions": [list(h) for h in res.schedule.history], "proportions": res.proportions,
        }

    def align(self):
        train_set, _ = self.instances()
        a = self.cfg.align
        params = self.params(("policy.json",))
        if params is None:
            params = PolicyParams.random(self.cfg.run.seed, self.cfg.train.init_scale)
        inputs = train_set[: a.inputs]
        ss = self_sample(params, inputs, a.K, derive_seed(self.cfg.run.seed, 5), self.env, self.cfg.limits())
        write_samples(ss.samples, self.out / "samples.jsonl")
        scored = score_samples(ss.samples, inputs, self.env, self.cfg.quality_weights(), now=self.cfg.now(), limits=self.cfg.limits())
        plus, minus = partition(scored, hi_pct=a.hi_pct, lo_pct=a.lo_pct)
        pairs = make_pairs(plus, minus)
        write_pairs(pairs, self.out / "pairs.jsonl")
        losses = {"dpo": [], "self_sft": []}
        if pairs:
            fr = fit_dpo(params, pairs, a.beta, a.dpo_steps, a.lr)
            params, losses["dpo"] = fr.params, fr.losses
        if plus:
            fr = fit_self_sft(params, plus, a.sft_steps, a.lr)
            params, losses["self_sft"] = fr.params, fr.losses
        save_policy(params, self.out / "aligned_policy.json")
        with open(self.out / "align_losses.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["phase", "step", "loss"])
            for phase, vals in losses.items():
                w.writerows((phase, i, f"{v:.12g}") for i, v in enumerate(vals))
        self.summary["align"] = {
            "samples": len(ss.samples), "d_plus": len(plus), "d_minus": len(minus), "pairs": len(pairs),
            "zero_diversity_inputs": sum(ss.zero_diversity.values()),
            "dpo_loss": [losses["dpo"][0], losses["dpo"][-1]] if losses["dpo"] else None,
        }

    def research(self):
        _, heldout = self.instances()
        r = self.cfg.research
        backend = AgentBackend(r.backend, params=self.params(), script=("web_search:start", "web_search:next", "web_search:next", "answer:last")) \
            if r.backend == "scripted" else AgentBackend(r.backend, params=self.params())
        (self.out / "research").mkdir(exist_ok=True)
        grounded = []
        for i in range(r.queries):
            group = heldout[i * r.subtasks:(i + 1) * r.subtasks]
            if not group:
                break
            run = run_research("; ".join(q.query_text for q in group), self.env, backend, r.parallelism,
                               derive_seed(self.cfg.run.seed, 3, i), group, self.cfg.limits())
            persist_trace(run, self.out / "research" / f"trace_{i}.jsonl")
            (self.out / "research" / f"report_{i}.md").write_text(run.final.body)
            grounded.append(all(run.memory.resolve(t) is not None for t in run.final.references))
            ok = [sr.answer == q.answer for sr, q in zip(run.subreports, group)]
            self.summary.setdefault("research", {"subtask_accuracy": []})["subtask_accuracy"].append(float(np.mean(ok)))
        self.summary["research"]["all_citations_grounded"] = all(grounded)

    def eval(self):
        traces = sorted((self.out / "research").glob("trace_*.jsonl")) if (self.out / "research").exists() else []
        trajs, reports = [], []
        for p in traces:
            run = load_trace(p)
            trajs += [t for t in run.trajectories if t is not None]
            reports.append(run.final)
        if not trajs and (self.out / "rollouts.jsonl").exists():
            trajs = read_trajectories(self.out / "rollouts.jsonl")
        m = module_eval(trajs, reports, self.cfg.now())
        _write_json(self.out / "metrics.json", m.to_dict())
        self.summary["eval"] = m.flat()


def run_pipeline(cfg: RunConfig, out_dir: str | Path | None = None) -> Path:
    """Run the configured stages in order and write ``summary.json``.

    A failing stage writes ``error.json`` (stage, error type, message,
    traceback) and raises StageFailed; later stages do not run.
    """
    cfg.validate()
    out = Path(out_dir or cfg.run.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.toml").write_text(dump_config(cfg))
    (out / "error.json").unlink(missing_ok=True)
    ctx = _Run(cfg, out)
    done = []
    for stage in STAGES:
        if stage not in cfg.run.stages:
            continue
        try:
            getattr(ctx, stage)()
        except Exception as exc:
            record = {"stage": stage, "error_type": type(exc).__name__, "message": str(exc),
                      "traceback": traceback.format_exc(), "completed_stages": done}
            _write_json(out / "error.json", record)
            raise StageFailed(stage, record) from exc
        done.append(stage)
    artifacts = {
        str(p.relative_to(out)): sha256_file(p)
        for p in sorted(out.rglob("*")) if p.is_file() and p.name not in ("summary.json", "error.json")
    }
    _write_json(out / "summary.json", {"stages": done, "results": ctx.summary, "artifacts": artifacts})
    return out
