"""Task sampling and the deterministic symbolic MDP engine.

A task instantiates the domain templates over a random entity subset, places
the reward on a deepest reachable subtask, and then behaves as a deterministic
MDP over completion bitvectors: executing an eligible option applies its
effect; executing an ineligible one wastes the step.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .domain import DomainConfig
from .errors import (
    EpisodeExhaustedError,
    NoReachableSubtaskError,
    PoolTooSmallError,
)
from .graphs import (
    GroundGraph,
    GroundOption,
    GroundSubtask,
    ParamGraph,
)

__all__ = [
    "TaskInstance",
    "EnvState",
    "StepOutcome",
    "Trajectory",
    "TrajectoryBuilder",
    "UNREACHABLE",
    "sample_task",
    "assign_reward",
    "critical_path_length",
    "critical_paths",
    "reset",
    "step",
    "compute_eligibility",
]

UNREACHABLE = math.inf

BFS_STATE_CAP = 200_000


@dataclass(eq=False)
class TaskInstance:
    """One sampled task: ground subtasks/options, ground truth, reward, budgets."""

    config: DomainConfig
    pool: str
    seed: int
    entities: tuple[str, ...]
    subtasks: tuple[GroundSubtask, ...]
    options: tuple[GroundOption, ...]
    graph: ParamGraph
    rewarded_subtask: int = -1
    reward_value: float = 1.0
    _ground: GroundGraph | None = field(default=None, repr=False)
    _cpl: "CriticalPaths | None" = field(default=None, repr=False)

    def __post_init__(self):
        self.subtask_index = {s: i for i, s in enumerate(self.subtasks)}
        self.option_index = {o: i for i, o in enumerate(self.options)}

    @property
    def ground_truth(self) -> GroundGraph:
        if self._ground is None:
            self._ground = GroundGraph(self, self.graph)
        return self._ground

    @property
    def n_subtasks(self) -> int:
        return len(self.subtasks)

    @property
    def n_options(self) -> int:
        return len(self.options)

    def signatures(self):
        return sorted({o.signature for o in self.options}, key=lambda s: (s.verb, s.arity))


@dataclass
class CriticalPaths:
    lengths: np.ndarray  # float; inf means unreachable
    approximate: np.ndarray  # bool; True when the BFS cap forced a relaxed value


@dataclass(frozen=True)
class EnvState:
    x: np.ndarray  # completion bits (N,)
    e: np.ndarray  # eligibility bits (M,)
    step: int  # steps remaining in the episode
    step_phase: int  # steps remaining in the adaptation phase


@dataclass(frozen=True)
class StepOutcome:
    state: EnvState  # post-step state (auto-reset applied during adaptation)
    reward: float
    done: bool
    completion_after: np.ndarray  # pre-reset completion after the effect
    eligibility_after: np.ndarray


def sample_task(cfg: DomainConfig, pool: str, rng_seed: int) -> TaskInstance:
    """Sample entities without replacement and instantiate every template."""
    candidates = cfg.pool_entities(pool)
    k = cfg.entities_per_task
    if k > len(candidates):
        raise PoolTooSmallError(
            f"{cfg.name}: pool {pool!r} has {len(candidates)} entities, task needs {k}"
        )
    rng = np.random.Generator(np.random.PCG64(rng_seed))
    chosen = rng.choice(len(candidates), size=k, replace=False)
    entities = tuple(sorted(candidates[i] for i in chosen))

    subtasks = tuple(
        GroundSubtask(sig.verb, binding)
        for sig in cfg.subtasks
        for binding in itertools.product(entities, repeat=sig.arity)
    )
    options = []
    for tpl in cfg.options:
        for binding in itertools.product(entities, repeat=tpl.signature.arity):
            if all(
                cfg.entity_attribute(binding[slot], attr)
                for slot, attr in tpl.filters.items()
            ):
                options.append(GroundOption(tpl.signature.verb, binding))

    graph = ParamGraph(
        preconditions={t.signature: t.precondition for t in cfg.options},
        effects={t.signature: t.effect for t in cfg.options},
        provenance="ground_truth",
    )
    task = TaskInstance(
        config=cfg,
        pool=pool,
        seed=rng_seed,
        entities=entities,
        subtasks=subtasks,
        options=tuple(options),
        graph=graph,
        reward_value=cfg.reward_value,
    )
    task.rewarded_subtask = assign_reward(task, rng_seed)
    graph.rewards = {task.subtasks[task.rewarded_subtask]: (cfg.reward_value, 1)}
    if task._ground is not None:
        task._ground.set_rewards(
            np.array([graph.reward_estimate(s)[0] for s in task.subtasks])
        )
    return task


def critical_paths(task: TaskInstance) -> CriticalPaths:
    """Minimum option executions to first complete each subtask.

    Exact breadth-first search over completion vectors up to a state cap;
    subtasks not reached before the cap fall back to the relaxed
    planning-graph level (deletions ignored, negated completions optimistic)
    and are marked approximate.
    """
    if task._cpl is not None:
        return task._cpl
    gg = task.ground_truth
    n = task.n_subtasks
    lengths = np.full(n, UNREACHABLE)
    approx = np.zeros(n, dtype=bool)

    start = np.zeros(n, dtype=bool)
    seen = {start.tobytes()}
    frontier = [start]
    depth = 0
    capped = False
    remaining = n
    while frontier and remaining:
        depth += 1
        nxt = []
        elig = gg.eligibility_many(np.array(frontier, dtype=bool).reshape(len(frontier), n))
        for x, row in zip(frontier, elig):
            for oi in np.nonzero(row)[0]:
                y = gg.apply(int(oi), x)
                key = y.tobytes()
                if key in seen:
                    continue
                seen.add(key)
                new_bits = np.nonzero(y & ~np.isfinite(lengths))[0]
                for b in new_bits:
                    lengths[b] = depth
                    remaining -= 1
                if len(seen) >= BFS_STATE_CAP:
                    capped = True
                    break
                nxt.append(y)
            if capped:
                break
        if capped:
            break
        frontier = nxt

    if capped:
        relaxed = _relaxed_levels(gg)
        missing = ~np.isfinite(lengths)
        lengths[missing] = relaxed[missing]
        approx[missing] = True
    task._cpl = CriticalPaths(lengths, approx)
    return task._cpl


def _relaxed_levels(gg: GroundGraph) -> np.ndarray:
    """Monotone fixed point ignoring deletions; negated completions read true."""
    n = gg.n_subtasks
    levels = np.full(n, UNREACHABLE)
    x = np.zeros(n, dtype=bool)
    depth = 0
    while True:
        depth += 1
        elig = gg.eligibility_relaxed(x)
        new = x.copy()
        for oi in np.nonzero(elig)[0]:
            a = gg.adds[int(oi)]
            if a:
                new[list(a)] = True
        added = new & ~x
        if not added.any():
            return levels
        levels[np.nonzero(added)[0]] = depth
        x = new


def critical_path_length(task: TaskInstance, subtask: int | GroundSubtask) -> float:
    """Exact-or-approximate minimum steps for one subtask (inf if unreachable)."""
    if isinstance(subtask, GroundSubtask):
        subtask = task.subtask_index[subtask]
    return float(critical_paths(task).lengths[subtask])


def assign_reward(task: TaskInstance, rng_seed: int) -> int:
    """Uniform choice among the subtasks with the largest finite critical path."""
    lengths = critical_paths(task).lengths
    finite = np.isfinite(lengths)
    if not finite.any():
        raise NoReachableSubtaskError(f"{task.config.name}: no subtask is reachable")
    best = lengths[finite].max()
    candidates = np.nonzero(finite & (lengths == best))[0]
    rng = np.random.Generator(np.random.PCG64([rng_seed, 0x5EED]))
    return int(candidates[rng.integers(len(candidates))])


def reset(
    task: TaskInstance,
    *,
    episode_steps: int | None = None,
    phase_steps: int | None = None,
) -> EnvState:
    """Fresh episode: empty completion, budgets from the config unless overridden."""
    x = np.zeros(task.n_subtasks, dtype=bool)
    e = task.ground_truth.eligibility(x)
    return EnvState(
        x=x,
        e=e,
        step=task.config.episode_steps if episode_steps is None else episode_steps,
        step_phase=task.config.adaptation_steps if phase_steps is None else phase_steps,
    )


def step(task: TaskInstance, state: EnvState, option_index: int) -> StepOutcome:
    """Execute one option; ineligible executions waste the step.

    Reward is paid exactly when the rewarded subtask flips incomplete ->
    complete.  The episode ends on reward collection or when the step budget
    hits zero; during the adaptation phase a finished episode auto-resets.
    """
    if state.step <= 0:
        raise EpisodeExhaustedError("step called with no episode steps remaining")
    if not (0 <= option_index < task.n_options):
        raise IndexError(f"option index {option_index} out of range")
    gg = task.ground_truth
    if state.e[option_index]:
        x_after = gg.apply(option_index, state.x)
        e_after = gg.eligibility(x_after)
    else:
        x_after = state.x.copy()
        e_after = state.e.copy()
    r = task.rewarded_subtask
    reward = (
        task.reward_value
        if bool(x_after[r]) and not bool(state.x[r])
        else 0.0
    )
    step_after = state.step - 1
    in_adaptation = state.step_phase > 0
    phase_after = state.step_phase - 1 if in_adaptation else 0
    done = bool(x_after[r]) or step_after == 0
    if done and phase_after > 0:
        nxt = reset(task, phase_steps=phase_after)
    else:
        nxt = EnvState(x=x_after, e=e_after, step=step_after, step_phase=phase_after)
    return StepOutcome(nxt, reward, done, x_after, e_after)


def compute_eligibility(task: TaskInstance, x: np.ndarray) -> np.ndarray:
    """Ground-truth eligibility of every option under completion ``x``."""
    return task.ground_truth.eligibility(np.asarray(x, dtype=bool))


# --- trajectories -----------------------------------------------------------


@dataclass
class Trajectory:
    """Step records of one adaptation run (completion, eligibility, option,
    reward, done), plus the post-effect observables of every step so that
    transitions survive episode auto-resets."""

    task: TaskInstance
    x: np.ndarray  # (T, N) pre-step completion
    e: np.ndarray  # (T, M) pre-step eligibility
    options: np.ndarray  # (T,)
    rewards: np.ndarray  # (T,)
    dones: np.ndarray  # (T,)
    x_after: np.ndarray  # (T, N) post-effect, pre-reset
    e_after: np.ndarray  # (T, M)

    def __len__(self) -> int:
        return len(self.options)

    def state_samples(self) -> tuple[np.ndarray, np.ndarray]:
        """All observed (completion, eligibility) pairs, including the states
        reached at episode boundaries and the final state."""
        T = len(self)
        if T == 0:
            return self.x, self.e
        extra = self.dones.copy()
        extra[-1] = True
        return (
            np.concatenate([self.x, self.x_after[extra]]),
            np.concatenate([self.e, self.e_after[extra]]),
        )

    def successful_steps(self) -> np.ndarray:
        """Indices of steps whose option was eligible when executed."""
        T = len(self)
        if T == 0:
            return np.zeros(0, dtype=np.int64)
        ok = self.e[np.arange(T), self.options]
        return np.nonzero(ok)[0]


class TrajectoryBuilder:
    def __init__(self, task: TaskInstance):
        self.task = task
        self._x: list[np.ndarray] = []
        self._e: list[np.ndarray] = []
        self._o: list[int] = []
        self._r: list[float] = []
        self._d: list[bool] = []
        self._xa: list[np.ndarray] = []
        self._ea: list[np.ndarray] = []

    def record(self, state: EnvState, option: int, outcome: StepOutcome) -> None:
        self._x.append(state.x)
        self._e.append(state.e)
        self._o.append(option)
        self._r.append(outcome.reward)
        self._d.append(outcome.done)
        self._xa.append(outcome.completion_after)
        self._ea.append(outcome.eligibility_after)

    def build(self) -> Trajectory:
        n, m = self.task.n_subtasks, self.task.n_options
        T = len(self._o)
        return Trajectory(
            task=self.task,
            x=np.array(self._x, dtype=bool).reshape(T, n),
            e=np.array(self._e, dtype=bool).reshape(T, m),
            options=np.array(self._o, dtype=np.int64),
            rewards=np.array(self._r, dtype=np.float64),
            dones=np.array(self._d, dtype=bool),
            x_after=np.array(self._xa, dtype=bool).reshape(T, n),
            e_after=np.array(self._ea, dtype=bool).reshape(T, m),
        )
