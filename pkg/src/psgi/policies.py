"""Acting: exploration policies, the graph-conditioned test policy, the
prior/test ensemble, and an exact planner used as a behavioral oracle."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .env import EnvState, TaskInstance
from .errors import NoEligibleOptionError
from .graphs import GroundGraph, ParamGraph
from .grprop import GRPropConfig, GRPropScorer, grprop_select

__all__ = [
    "EnsembleSchedule",
    "random_eligible",
    "count_based_adapt",
    "exact_plan",
    "ensemble_select",
    "RandomPolicy",
    "CountBasedPolicy",
    "GRPropPolicy",
    "EnsemblePolicy",
]


def random_eligible(state: EnvState, rng: np.random.Generator) -> int:
    """Uniform over the currently eligible options."""
    eligible = np.nonzero(state.e)[0]
    if len(eligible) == 0:
        raise NoEligibleOptionError("no eligible option")
    return int(eligible[rng.integers(len(eligible))])


def count_based_adapt(state: EnvState, exec_counts: np.ndarray, rng: np.random.Generator) -> int:
    """Least-executed eligible option; ties break uniformly at random."""
    eligible = np.nonzero(state.e)[0]
    if len(eligible) == 0:
        raise NoEligibleOptionError("no eligible option")
    counts = np.asarray(exec_counts)[eligible]
    best = eligible[counts == counts.min()]
    return int(best[rng.integers(len(best))])


def exact_plan(
    graph: ParamGraph,
    task: TaskInstance,
    x: np.ndarray,
    target: int,
    state_cap: int = 500_000,
) -> list[int] | None:
    """Shortest option sequence completing ``target`` under the graph's own
    semantics, by breadth-first search; None when unreachable.  Ties resolve
    to the lowest option index."""
    gg = task.ground_truth if graph is task.graph else GroundGraph(task, graph)
    x = np.asarray(x, dtype=bool)
    if x[target]:
        return []
    start = x.tobytes()
    parent: dict[bytes, tuple[bytes, int] | None] = {start: None}
    queue = deque([x])
    while queue:
        cur = queue.popleft()
        cur_key = cur.tobytes()
        for oi in np.nonzero(gg.eligibility(cur))[0]:
            nxt = gg.apply(int(oi), cur)
            key = nxt.tobytes()
            if key in parent:
                continue
            parent[key] = (cur_key, int(oi))
            if nxt[target]:
                plan: list[int] = []
                link = parent[key]
                while link is not None:
                    prev_key, opt = link
                    plan.append(opt)
                    link = parent[prev_key]
                return plan[::-1]
            if len(parent) >= state_cap:
                return None
            queue.append(nxt)
    return None


@dataclass(frozen=True)
class EnsembleSchedule:
    """Linear decay of the prior weight over the first ``t_switch`` test steps."""

    t_switch: int = 1000

    def __post_init__(self):
        if self.t_switch <= 0:
            raise ValueError("t_switch must be positive")

    def alpha(self, t: int) -> float:
        return max(0.0, 1.0 - t / self.t_switch)


def ensemble_select(
    prior_graphs: list[ParamGraph],
    test_graph: ParamGraph,
    task: TaskInstance,
    x: np.ndarray,
    t: int,
    cfg: GRPropConfig,
    schedule: EnsembleSchedule,
    rng: np.random.Generator,
    eligibility: np.ndarray | None = None,
    rewards: np.ndarray | None = None,
) -> int:
    """One-shot prior/test mixture; long-lived callers use ``EnsemblePolicy``."""
    policy = EnsemblePolicy(
        [GRPropScorer(GroundGraph(task, g), cfg) for g in prior_graphs],
        GRPropScorer(GroundGraph(task, test_graph), cfg),
        schedule,
        cfg,
        rng,
    )
    if rewards is not None:
        policy.set_rewards(rewards)
    policy.t = t
    e = eligibility if eligibility is not None else task.ground_truth.eligibility(x)
    return policy.select_for(np.asarray(x, dtype=bool), e)


class RandomPolicy:
    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def select(self, state: EnvState) -> int:
        return random_eligible(state, self.rng)

    def observe(self, option: int) -> None:
        pass


class CountBasedPolicy:
    def __init__(self, n_options: int, rng: np.random.Generator):
        self.counts = np.zeros(n_options, dtype=np.int64)
        self.rng = rng

    def select(self, state: EnvState) -> int:
        return count_based_adapt(state, self.counts, self.rng)

    def observe(self, option: int) -> None:
        self.counts[option] += 1


class GRPropPolicy:
    def __init__(self, scorer: GRPropScorer, cfg: GRPropConfig, rng: np.random.Generator):
        self.scorer = scorer
        self.cfg = cfg
        self.rng = rng

    def set_rewards(self, rewards: np.ndarray) -> None:
        self.scorer.set_rewards(rewards)

    def select(self, state: EnvState) -> int:
        return self.select_for(state.x, state.e)

    def select_for(self, x: np.ndarray, eligibility: np.ndarray) -> int:
        scores = self.scorer.scores(x)
        return grprop_select(scores, eligibility, self.cfg.temperature, self.rng)

    def observe(self, option: int) -> None:
        pass


class EnsemblePolicy:
    """Mixture of prior-graph scores and test-graph scores with the prior
    weight decaying over the test phase; ``t`` advances on every selection."""

    def __init__(
        self,
        prior_scorers: list[GRPropScorer],
        test_scorer: GRPropScorer,
        schedule: EnsembleSchedule,
        cfg: GRPropConfig,
        rng: np.random.Generator,
    ):
        self.priors = prior_scorers
        self.test = test_scorer
        self.schedule = schedule
        self.cfg = cfg
        self.rng = rng
        self.t = 0

    def set_rewards(self, rewards: np.ndarray) -> None:
        for s in self.priors:
            s.set_rewards(rewards)
        self.test.set_rewards(rewards)

    def combined_scores(self, x: np.ndarray, t: int | None = None) -> np.ndarray:
        a = self.schedule.alpha(self.t if t is None else t)
        if not self.priors:
            return self.test.scores(x)
        if a == 0.0:
            return self.test.scores(x)
        prior = np.mean([s.scores(x) for s in self.priors], axis=0)
        if a == 1.0:
            return prior
        return a * prior + (1.0 - a) * self.test.scores(x)

    def select(self, state: EnvState) -> int:
        return self.select_for(state.x, state.e)

    def select_for(self, x: np.ndarray, eligibility: np.ndarray) -> int:
        scores = self.combined_scores(x)
        self.t += 1
        return grprop_select(scores, eligibility, self.cfg.temperature, self.rng)

    def observe(self, option: int) -> None:
        pass
