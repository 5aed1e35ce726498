"""Meta-train / meta-eval orchestration, metrics, and CSV emission.

One evaluation cell = (agent, adaptation budget, seed).  Each cell samples an
evaluation task from the held-out entity pool, runs budgeted count-based
adaptation, infers a test-time graph, acts for a fixed number of test
episodes, and records success rate, average return, and the semantic error of
the test-time graph against the task's ground truth.

Test-task subtask rewards are re-estimated online: empirical means once a
subtask has been observed flipping, and before that a per-verb-signature mean
carried over from the prior graphs' reward observations, which is what lets a
structural prior seek out reward it has never seen in this task's entities.
"""

from __future__ import annotations

import csv
import logging
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attributes import generate_candidate_attributes, synth_embeddings
from .domain import DomainConfig, load_domain
from .env import TaskInstance, Trajectory, TrajectoryBuilder, reset, sample_task, step
from .errors import ValidationError
from .graphs import GroundGraph, ParamGraph, semantic_graph_error
from .grprop import GRPropConfig, GRPropScorer
from .inference import InferenceMode, infer_psg
from .policies import (
    CountBasedPolicy,
    EnsemblePolicy,
    EnsembleSchedule,
    GRPropPolicy,
    RandomPolicy,
)

__all__ = [
    "ExperimentConfig",
    "CurvePoint",
    "RewardEstimator",
    "run_adaptation",
    "run_test_phase",
    "meta_train",
    "meta_eval",
    "write_csv",
    "CSV_HEADER",
]

logger = logging.getLogger(__name__)

CSV_HEADER = (
    "domain,agent,seed,adaptation_steps,success_rate,avg_return,prec_error,eff_error"
)

AGENTS = ("psgi", "msgi", "random")


@dataclass
class ExperimentConfig:
    domain: str | Path
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    budgets: tuple[int, ...] = (0, 100, 250, 500, 1000, 2000)
    agents: tuple[str, ...] = AGENTS
    test_episodes: int = 10
    test_horizon: int | None = None  # None: the domain's own horizon
    n_priors: int = 4
    t_prior: int = 2000
    t_switch: int = 1000
    grprop: GRPropConfig = field(default_factory=GRPropConfig)
    embed_sigma: float = 0.1
    embed_seed: int = 17
    probes: int = 10_000
    train_seed: int = 1000
    out_dir: str | Path | None = None

    def __post_init__(self):
        if not self.seeds:
            raise ValidationError("seeds must be nonempty")
        if list(self.budgets) != sorted(self.budgets):
            raise ValidationError("budgets must be sorted ascending")
        for a in self.agents:
            if a not in AGENTS:
                raise ValidationError(f"unknown agent {a!r}")


@dataclass(frozen=True)
class CurvePoint:
    domain: str
    agent: str
    seed: int
    adaptation_steps: int
    success_rate: float
    avg_return: float
    prec_error: float
    eff_error: float


def _rng(*keys) -> np.random.Generator:
    ints = [k if isinstance(k, int) else zlib.crc32(str(k).encode()) for k in keys]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(ints)))


def run_adaptation(task: TaskInstance, policy, budget: int) -> Trajectory:
    """Step the environment exactly ``budget`` times, episodes auto-resetting."""
    builder = TrajectoryBuilder(task)
    state = reset(task, phase_steps=budget)
    for _ in range(budget):
        option = policy.select(state)
        outcome = step(task, state, option)
        policy.observe(option)
        builder.record(state, option, outcome)
        state = outcome.state
    return builder.build()


class RewardEstimator:
    """Test-task subtask rewards: empirical mean once observed, otherwise the
    per-signature mean of the prior graphs' reward observations."""

    def __init__(self, task: TaskInstance, priors: list[ParamGraph] = ()):
        self.task = task
        n = task.n_subtasks
        self.sums = np.zeros(n)
        self.counts = np.zeros(n, dtype=np.int64)
        sig_sum: dict = {}
        sig_count: dict = {}
        for g in priors or ():
            for s, (mu, count) in g.rewards.items():
                key = s.signature
                sig_sum[key] = sig_sum.get(key, 0.0) + mu * count
                sig_count[key] = sig_count.get(key, 0) + count
        self.base = np.zeros(n)
        for i, s in enumerate(task.subtasks):
            c = sig_count.get(s.signature, 0)
            if c:
                self.base[i] = sig_sum[s.signature] / c

    def observe_step(self, x_before: np.ndarray, x_after: np.ndarray, reward: float) -> bool:
        flips = np.nonzero(x_after & ~x_before)[0]
        for i in flips:
            self.sums[i] += reward
            self.counts[i] += 1
        return len(flips) > 0

    def observe_trajectory(self, traj: Trajectory) -> None:
        for t in range(len(traj)):
            self.observe_step(traj.x[t], traj.x_after[t], float(traj.rewards[t]))

    def vector(self) -> np.ndarray:
        seen = self.counts > 0
        out = self.base.copy()
        out[seen] = self.sums[seen] / self.counts[seen]
        return out


def run_test_phase(
    task: TaskInstance,
    policy,
    horizon: int,
    estimator: RewardEstimator | None = None,
) -> tuple[float, bool]:
    """One fresh test episode: act until the reward is collected or the
    horizon runs out.  With an estimator, reward observations update the
    policy's reward vector as they arrive."""
    if horizon <= 0:
        raise ValidationError("test horizon must be positive")
    state = reset(task, episode_steps=horizon, phase_steps=0)
    total = 0.0
    success = False
    while True:
        option = policy.select(state)
        outcome = step(task, state, option)
        policy.observe(option)
        total += outcome.reward
        if estimator is not None:
            changed = estimator.observe_step(state.x, outcome.completion_after, outcome.reward)
            if changed and hasattr(policy, "set_rewards"):
                policy.set_rewards(estimator.vector())
        if outcome.reward > 0:
            success = True
        state = outcome.state
        if outcome.done:
            break
    return total, success


def _candidate_attrs(cfg: DomainConfig, task: TaskInstance, exp: ExperimentConfig):
    emb = synth_embeddings(cfg, exp.embed_sigma, exp.embed_seed)
    return generate_candidate_attributes(list(task.entities), emb)


def meta_train(exp: ExperimentConfig, cfg: DomainConfig | None = None) -> list[ParamGraph]:
    """Sample training tasks, explore count-based, and infer one prior each."""
    cfg = cfg or load_domain(exp.domain)
    priors = []
    for i in range(exp.n_priors):
        task = sample_task(cfg, "train", int(_rng(exp.train_seed, "train-task", i).integers(2**31)))
        policy = CountBasedPolicy(task.n_options, _rng(exp.train_seed, "train-adapt", i))
        traj = run_adaptation(task, policy, exp.t_prior)
        attrs = _candidate_attrs(cfg, task, exp)
        priors.append(infer_psg(traj, task, attrs, InferenceMode.PSGI))
        logger.info("prior %d/%d trained on %d entities", i + 1, exp.n_priors, len(task.entities))
    return priors


def _empty_graph(task: TaskInstance) -> ParamGraph:
    empty = Trajectory(
        task=task,
        x=np.zeros((0, task.n_subtasks), dtype=bool),
        e=np.zeros((0, task.n_options), dtype=bool),
        options=np.zeros(0, dtype=np.int64),
        rewards=np.zeros(0),
        dones=np.zeros(0, dtype=bool),
        x_after=np.zeros((0, task.n_subtasks), dtype=bool),
        e_after=np.zeros((0, task.n_options), dtype=bool),
    )
    return infer_psg(empty, task, [], InferenceMode.PSGI)


def _eval_cell(
    exp: ExperimentConfig,
    cfg: DomainConfig,
    priors: list[ParamGraph],
    agent: str,
    budget: int,
    seed: int,
    task_cache: dict[int, TaskInstance] | None = None,
) -> CurvePoint:
    # the evaluation task depends on the seed alone, so budgets and agents
    # within one seed are directly comparable
    if task_cache is not None and seed in task_cache:
        task = task_cache[seed]
    else:
        task = sample_task(cfg, "eval", int(_rng(seed, "eval-task").integers(2**31)))
        if task_cache is not None:
            task_cache[seed] = task
    horizon = exp.test_horizon or task.config.test_horizon

    if agent == "random":
        test_graph = _empty_graph(task)
        policy = RandomPolicy(_rng(seed, budget, agent, "test"))
        estimator = None
    else:
        adapt_policy = CountBasedPolicy(task.n_options, _rng(seed, budget, agent, "adapt"))
        traj = run_adaptation(task, adapt_policy, budget)
        if agent == "psgi":
            attrs = _candidate_attrs(cfg, task, exp)
            test_graph = infer_psg(traj, task, attrs, InferenceMode.PSGI)
            estimator = RewardEstimator(task, priors)
        else:
            test_graph = infer_psg(traj, task, [], InferenceMode.MSGI_PLUS)
            estimator = RewardEstimator(task)
        estimator.observe_trajectory(traj)
        test_scorer = GRPropScorer(GroundGraph(task, test_graph), exp.grprop)
        rng = _rng(seed, budget, agent, "test")
        if agent == "psgi":
            prior_scorers = [GRPropScorer(GroundGraph(task, g), exp.grprop) for g in priors]
            policy = EnsemblePolicy(
                prior_scorers, test_scorer, EnsembleSchedule(exp.t_switch), exp.grprop, rng
            )
        else:
            policy = GRPropPolicy(test_scorer, exp.grprop, rng)
        policy.set_rewards(estimator.vector())

    successes = 0
    total_return = 0.0
    for _ in range(exp.test_episodes):
        ret, success = run_test_phase(task, policy, horizon, estimator)
        successes += success
        total_return += ret

    prec_error, eff_error = semantic_graph_error(
        test_graph, task.graph, task, probes=exp.probes, rng_seed=seed
    )
    return CurvePoint(
        domain=cfg.name,
        agent=agent,
        seed=seed,
        adaptation_steps=budget,
        success_rate=successes / exp.test_episodes,
        avg_return=total_return / exp.test_episodes,
        prec_error=prec_error,
        eff_error=eff_error,
    )


def meta_eval(
    exp: ExperimentConfig,
    priors: list[ParamGraph],
    cfg: DomainConfig | None = None,
) -> list[CurvePoint]:
    """Full sweep over (agent, budget, seed); partial CSV is flushed on failure."""
    cfg = cfg or load_domain(exp.domain)
    points: list[CurvePoint] = []
    task_cache: dict[int, TaskInstance] = {}
    try:
        for agent in sorted(exp.agents):
            for budget in exp.budgets:
                for seed in exp.seeds:
                    points.append(_eval_cell(exp, cfg, priors, agent, budget, seed, task_cache))
                    logger.info(
                        "cell %s budget=%d seed=%d: success=%.2f prec_err=%.4f",
                        agent,
                        budget,
                        seed,
                        points[-1].success_rate,
                        points[-1].prec_error,
                    )
    finally:
        if exp.out_dir is not None and points:
            out = Path(exp.out_dir)
            out.mkdir(parents=True, exist_ok=True)
            write_csv(out / f"{cfg.name}_curves.csv", points)
    return points


def write_csv(path: str | Path, points: list[CurvePoint]) -> None:
    rows = sorted(points, key=lambda p: (p.agent, p.adaptation_steps, p.seed))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER.split(","))
        for p in rows:
            writer.writerow(
                [
                    p.domain,
                    p.agent,
                    p.seed,
                    p.adaptation_steps,
                    repr(float(p.success_rate)),
                    repr(float(p.avg_return)),
                    repr(float(p.prec_error)),
                    repr(float(p.eff_error)),
                ]
            )
