"""Parameterized graphs, grounding, effect application, and semantic comparison.

A ``ParamGraph`` stores, per option verb signature, a precondition expression
and an effect delta, plus per-ground-subtask reward estimates.  Graphs inferred
without parameter sharing instead carry per-ground-option entries.  Both forms
compile to a ``GroundGraph``: flat numpy structures over one task's dense
subtask/option indices, used by the environment engine, the scoring policy,
the planner, and the semantic error metric.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable

import numpy as np

from .errors import UnknownSignatureError
from .exprs import (
    AttributePattern,
    GroundPattern,
    Lit,
    ParamExpr,
    SubtaskPattern,
    dnf_terms,
)

if TYPE_CHECKING:  # pragma: no cover
    from .env import TaskInstance

__all__ = [
    "VerbSignature",
    "GroundSubtask",
    "GroundOption",
    "EffectDelta",
    "ParamGraph",
    "GroundGraph",
    "AttrValues",
    "attribute_valuation",
    "ground_eligibility",
    "apply_effect",
    "semantic_graph_error",
]

AttrValues = Callable[[str, str], bool]


@dataclass(frozen=True)
class VerbSignature:
    verb: str
    arity: int

    def __str__(self):
        return f"{self.verb}/{self.arity}"


@dataclass(frozen=True)
class GroundSubtask:
    verb: str
    entities: tuple[str, ...]

    @property
    def signature(self) -> VerbSignature:
        return VerbSignature(self.verb, len(self.entities))

    def __str__(self):
        return f"{self.verb}({','.join(self.entities)})" if self.entities else self.verb


@dataclass(frozen=True)
class GroundOption:
    verb: str
    entities: tuple[str, ...]

    @property
    def signature(self) -> VerbSignature:
        return VerbSignature(self.verb, len(self.entities))

    def __str__(self):
        return f"{self.verb}({','.join(self.entities)})" if self.entities else self.verb


# (pattern, sign) pairs; sign is +1 (set) or -1 (clear)
EffectDelta = tuple[tuple[SubtaskPattern | GroundPattern, int], ...]


@dataclass
class ParamGraph:
    """Preconditions, effects, and reward estimates.

    ``preconditions``/``effects`` hold the first-order, per-signature model.
    Graphs inferred per ground option populate ``ground_preconditions`` and
    ``ground_effects`` instead (keyed by the ground option).  ``rewards`` maps
    ground subtasks to (mean, observation count); missing keys mean (0.0, 0).
    ``attr_defs`` resolves the attribute names referenced by the expressions;
    when absent, attribute values come from the task's ground-truth bits.
    """

    preconditions: dict[VerbSignature, ParamExpr] = field(default_factory=dict)
    effects: dict[VerbSignature, EffectDelta] = field(default_factory=dict)
    rewards: dict[GroundSubtask, tuple[float, int]] = field(default_factory=dict)
    provenance: str = "ground_truth"  # ground_truth | psgi | msgi
    ground_preconditions: dict[GroundOption, ParamExpr] = field(default_factory=dict)
    ground_effects: dict[GroundOption, EffectDelta] = field(default_factory=dict)
    attr_defs: dict[str, Callable[[str], bool]] | None = None

    def precondition_for(self, opt: GroundOption) -> ParamExpr:
        if opt in self.ground_preconditions:
            return self.ground_preconditions[opt]
        try:
            return self.preconditions[opt.signature]
        except KeyError:
            raise UnknownSignatureError(f"no precondition entry for {opt.signature}") from None

    def effect_for(self, opt: GroundOption) -> EffectDelta:
        if opt in self.ground_preconditions or opt in self.ground_effects:
            return self.ground_effects.get(opt, ())
        try:
            return self.effects[opt.signature]
        except KeyError:
            raise UnknownSignatureError(f"no effect entry for {opt.signature}") from None

    def reward_estimate(self, subtask: GroundSubtask) -> tuple[float, int]:
        return self.rewards.get(subtask, (0.0, 0))


def attribute_valuation(graph: ParamGraph, task: "TaskInstance") -> AttrValues:
    """Resolve attribute literals: candidate definitions if the graph carries
    them, ground-truth entity bits otherwise."""
    if graph.attr_defs is not None:
        defs = graph.attr_defs

        def from_defs(attr: str, entity: str) -> bool:
            return bool(defs[attr](entity))

        return from_defs
    config = task.config

    def from_config(attr: str, entity: str) -> bool:
        return config.entity_attribute(entity, attr)

    return from_config


def _substitute(pattern: SubtaskPattern | GroundPattern, binding: tuple[str, ...]) -> GroundSubtask:
    if isinstance(pattern, GroundPattern):
        return GroundSubtask(pattern.verb, pattern.entities)
    return GroundSubtask(pattern.verb, tuple(binding[j] for j in pattern.args))


def ground_eligibility(
    graph: ParamGraph,
    opt: GroundOption,
    x: np.ndarray,
    attr_values: AttrValues,
    task: "TaskInstance",
) -> bool:
    """Evaluate the option's precondition under completion vector ``x``.

    Substituted subtasks absent from the task read as incomplete.
    """
    expr = graph.precondition_for(opt)
    index = task.subtask_index

    def value(e: Lit) -> bool:
        p = e.pattern
        if isinstance(p, AttributePattern):
            v = bool(attr_values(p.attr, opt.entities[p.slot]))
        else:
            idx = index.get(_substitute(p, opt.entities))
            v = bool(x[idx]) if idx is not None else False
        return v if e.positive else not v

    return _eval_with(expr, value)


def _eval_with(expr: ParamExpr, lit_value) -> bool:
    from .exprs import And, Or, _Const

    if isinstance(expr, _Const):
        return expr.value
    if isinstance(expr, Lit):
        return lit_value(expr)
    if isinstance(expr, And):
        return all(_eval_with(c, lit_value) for c in expr.children)
    if isinstance(expr, Or):
        return any(_eval_with(c, lit_value) for c in expr.children)
    raise TypeError(f"not an expression node: {expr!r}")


def apply_effect(
    graph: ParamGraph,
    opt: GroundOption,
    x: np.ndarray,
    task: "TaskInstance",
) -> np.ndarray:
    """Return ``x`` with the option's effect applied (pure, idempotent)."""
    delta = graph.effect_for(opt)
    out = x.copy()
    index = task.subtask_index
    for pattern, sign in delta:
        idx = index.get(_substitute(pattern, opt.entities))
        if idx is not None:
            out[idx] = sign > 0
    return out


# --- compiled form ----------------------------------------------------------


@dataclass
class _SoftDisjunct:
    pos: tuple[int, ...]  # positive completion literals (subtask indices)
    neg: tuple[int, ...]  # negated completion literals
    const_unit_sum: float  # sum of values of weight-1 constant literals
    const_unit_n: int
    const_wa_n: int  # absent positive completion literals (value 0, heavy weight)
    hard_alive: bool  # all constant literals true


class GroundGraph:
    """A ParamGraph bound to one task's dense indices.

    ``elig_const`` marks options with constant preconditions (+1 always
    eligible, 0 never); others are evaluated from the per-disjunct masks.
    """

    def __init__(self, task: "TaskInstance", graph: ParamGraph, attr_values: AttrValues | None = None):
        if attr_values is None:
            attr_values = attribute_valuation(graph, task)
        self.task = task
        self.graph = graph
        n = len(task.subtasks)
        m = len(task.options)
        self.n_subtasks = n
        self.n_options = m

        self.soft: list[list[_SoftDisjunct]] = []
        self.elig_const = np.full(m, -1, dtype=np.int8)
        hard_pos: list[np.ndarray] = []
        hard_neg: list[np.ndarray] = []
        hard_owner: list[int] = []
        adds: list[tuple[int, ...]] = []
        dels: list[tuple[int, ...]] = []
        index = task.subtask_index
        dnf_cache: dict[int, list] = {}

        for oi, opt in enumerate(task.options):
            expr = graph.precondition_for(opt)
            key = id(expr)
            if key not in dnf_cache:
                dnf_cache[key] = dnf_terms(expr)
            terms = dnf_cache[key]
            disjuncts: list[_SoftDisjunct] = []
            if terms == [()]:
                self.elig_const[oi] = 1
            elif not terms:
                self.elig_const[oi] = 0
            else:
                any_alive = False
                for term in terms:
                    pos: list[int] = []
                    neg: list[int] = []
                    cu_sum = 0.0
                    cu_n = 0
                    cwa_n = 0
                    alive = True
                    for lit in term:
                        p = lit.pattern
                        if isinstance(p, AttributePattern):
                            v = bool(attr_values(p.attr, opt.entities[p.slot]))
                            val = v if lit.positive else not v
                            cu_sum += float(val)
                            cu_n += 1
                            alive = alive and val
                        else:
                            idx = index.get(_substitute(p, opt.entities))
                            if idx is None:
                                if lit.positive:
                                    cwa_n += 1
                                    alive = False
                                else:
                                    cu_sum += 1.0
                                    cu_n += 1
                            elif lit.positive:
                                pos.append(idx)
                            else:
                                neg.append(idx)
                    disjuncts.append(
                        _SoftDisjunct(tuple(pos), tuple(neg), cu_sum, cu_n, cwa_n, alive)
                    )
                    if alive:
                        any_alive = True
                        pm = np.zeros(n, dtype=bool)
                        pm[list(pos)] = True
                        nm = np.zeros(n, dtype=bool)
                        nm[list(neg)] = True
                        hard_pos.append(pm)
                        hard_neg.append(nm)
                        hard_owner.append(oi)
                if not any_alive:
                    self.elig_const[oi] = 0
            self.soft.append(disjuncts)

            delta = graph.effect_for(opt)
            a: list[int] = []
            d: list[int] = []
            for pattern, sign in delta:
                idx = index.get(_substitute(pattern, opt.entities))
                if idx is not None:
                    (a if sign > 0 else d).append(idx)
            adds.append(tuple(a))
            dels.append(tuple(d))

        self.hard_pos = np.array(hard_pos, dtype=bool).reshape(len(hard_owner), n)
        self.hard_neg = np.array(hard_neg, dtype=bool).reshape(len(hard_owner), n)
        self.hard_owner = np.array(hard_owner, dtype=np.int64)
        self.adds = adds
        self.dels = dels
        self.rewards = np.array(
            [graph.reward_estimate(s)[0] for s in task.subtasks], dtype=np.float64
        )

    def eligibility(self, x: np.ndarray) -> np.ndarray:
        return self.eligibility_many(x.reshape(1, -1))[0]

    def eligibility_many(self, X: np.ndarray) -> np.ndarray:
        """Eligibility for a batch of completion vectors: (P, N) -> (P, M)."""
        P = X.shape[0]
        out = np.zeros((P, self.n_options), dtype=bool)
        out[:, self.elig_const == 1] = True
        if len(self.hard_owner):
            # disjunct satisfied: all pos bits present, no neg bits present
            Xf = X.astype(np.float64)
            pos_need = self.hard_pos.sum(axis=1).astype(np.float64)
            pos_have = Xf @ self.hard_pos.T.astype(np.float64)
            neg_have = Xf @ self.hard_neg.T.astype(np.float64)
            sat = (pos_have >= pos_need) & (neg_have == 0)
            idx = np.nonzero(sat)
            out[idx[0], self.hard_owner[idx[1]]] = True
        return out

    def eligibility_relaxed(self, x: np.ndarray) -> np.ndarray:
        """Optimistic eligibility: negated completion literals read as true."""
        out = np.zeros(self.n_options, dtype=bool)
        out[self.elig_const == 1] = True
        if len(self.hard_owner):
            sat = ~(self.hard_pos & ~x.reshape(1, -1)).any(axis=1)
            out[self.hard_owner[sat]] = True
        return out

    def apply(self, oi: int, x: np.ndarray) -> np.ndarray:
        out = x.copy()
        a = self.adds[oi]
        d = self.dels[oi]
        if a:
            out[list(a)] = True
        if d:
            out[list(d)] = False
        return out

    def set_rewards(self, rewards: np.ndarray) -> None:
        self.rewards = np.asarray(rewards, dtype=np.float64).copy()


def _reachable_completions(gg: GroundGraph, limit: int) -> np.ndarray | None:
    """BFS over completion vectors; None when more than ``limit`` are reachable."""
    n = gg.n_subtasks
    start = np.zeros(n, dtype=bool)
    seen = {start.tobytes()}
    frontier = [start]
    states = [start]
    while frontier:
        nxt = []
        for x in frontier:
            elig = gg.eligibility(x)
            for oi in np.nonzero(elig)[0]:
                y = gg.apply(int(oi), x)
                key = y.tobytes()
                if key not in seen:
                    seen.add(key)
                    if len(seen) > limit:
                        return None
                    nxt.append(y)
                    states.append(y)
        frontier = nxt
    return np.array(states, dtype=bool).reshape(len(states), n)


def semantic_graph_error(
    g_hat: ParamGraph,
    g_true: ParamGraph,
    task: "TaskInstance",
    probes: int = 10_000,
    rng_seed: int = 0,
) -> tuple[float, float]:
    """Probe-based disagreement fractions (precondition, effect).

    Probes are every completion reachable under the true graph when that set
    has at most ``probes`` elements, otherwise ``probes`` uniform-random
    completion vectors from a seeded generator.  The effect fraction counts
    only (option, probe) pairs the true graph marks eligible.
    """
    gg_hat = GroundGraph(task, g_hat)
    gg_true = GroundGraph(task, g_true)
    X = _reachable_completions(gg_true, probes)
    if X is None:
        rng = np.random.Generator(np.random.PCG64(rng_seed))
        X = rng.integers(0, 2, size=(probes, gg_true.n_subtasks)).astype(bool)

    elig_hat = gg_hat.eligibility_many(X)
    elig_true = gg_true.eligibility_many(X)
    prec_error = float(np.mean(elig_hat != elig_true))

    denom = int(elig_true.sum())
    if denom == 0:
        return prec_error, 0.0
    P, n = X.shape
    disagreements = 0
    for oi in range(gg_true.n_options):
        mask = elig_true[:, oi]
        cnt = int(mask.sum())
        if cnt == 0:
            continue
        ta, td = set(gg_true.adds[oi]), set(gg_true.dels[oi])
        ha, hd = set(gg_hat.adds[oi]), set(gg_hat.dels[oi])
        always = (ta & hd) | (td & ha)  # opposite actions
        # one side sets/clears, the other leaves the bit alone
        set_only = (ta ^ ha) - always
        clear_only = (td ^ hd) - always
        if always:
            disagreements += cnt
            continue
        if not set_only and not clear_only:
            continue
        Xm = X[mask]
        bad = np.zeros(cnt, dtype=bool)
        if set_only:
            bad |= (~Xm[:, sorted(set_only)]).any(axis=1)
        if clear_only:
            bad |= Xm[:, sorted(clear_only)].any(axis=1)
        disagreements += int(bad.sum())
    return prec_error, disagreements / denom
