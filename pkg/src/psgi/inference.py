"""Graph inference from adaptation trajectories.

Preconditions: every timestep contributes one labelled row per option, with
features re-expressed relative to the option's parameter slots (plus candidate
attribute columns); a CART tree with Gini impurity is fit per verb signature
and converted back to a boolean expression.  Effects: the aggregated
completion difference across successful executions, shared per signature.
Rewards: empirical mean of the reward observed when each ground subtask flips
complete.

The per-ground-option mode skips parameter substitution and attribute
features entirely: each ground option gets its own table over the raw
completion bits, and its own effect aggregation.
"""

from __future__ import annotations

import enum
import itertools
import logging
from dataclasses import dataclass

import numpy as np

from .attributes import AttributeFn
from .env import TaskInstance, Trajectory
from .errors import EmptyTableError
from .exprs import (
    FALSE,
    TRUE,
    And,
    GroundPattern,
    Lit,
    Or,
    ParamExpr,
    Pattern,
    SubtaskPattern,
    pattern_key,
    to_dnf,
)
from .graphs import EffectDelta, GroundOption, GroundSubtask, ParamGraph, VerbSignature

__all__ = [
    "InferenceMode",
    "PrecondTable",
    "DecisionTree",
    "build_precondition_table",
    "build_option_table",
    "fit_decision_tree",
    "tree_to_expr",
    "infer_effects",
    "infer_rewards",
    "infer_psg",
]

logger = logging.getLogger(__name__)


class InferenceMode(enum.Enum):
    PSGI = "psgi"
    MSGI_PLUS = "msgi"


def _subtask_patterns(task: TaskInstance, arity: int) -> list[SubtaskPattern]:
    """All completion patterns over the host slots, plus zero-arity subtasks."""
    out = []
    for sig in task.config.subtasks:
        for args in itertools.product(range(arity), repeat=sig.arity):
            out.append(SubtaskPattern(sig.verb, args))
    return sorted(out, key=pattern_key)


def _pattern_index(task: TaskInstance, pattern: SubtaskPattern, binding: tuple[str, ...]) -> int | None:
    key = GroundSubtask(pattern.verb, tuple(binding[j] for j in pattern.args))
    return task.subtask_index.get(key)


@dataclass
class PrecondTable:
    """Deduplicated training rows for one precondition learner.

    ``X`` holds one row per distinct feature vector; ``n0``/``n1`` count how
    often it was observed with label 0/1.
    """

    signature: VerbSignature | GroundOption
    columns: list[Pattern]
    X: np.ndarray  # (R, F) bool
    n0: np.ndarray  # (R,) int
    n1: np.ndarray  # (R,) int

    @property
    def inconsistent(self) -> int:
        return int(((self.n0 > 0) & (self.n1 > 0)).sum())

    def __len__(self) -> int:
        return len(self.X)


def _dedup_rows(
    X: np.ndarray, labels: np.ndarray, weights: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if len(X) == 0:
        return X, np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    if weights is None:
        weights = np.ones(len(X), dtype=np.int64)
    both = np.concatenate([X, labels.reshape(-1, 1)], axis=1)
    uniq, inverse = np.unique(both, axis=0, return_inverse=True)
    counts = np.bincount(inverse.ravel(), weights=weights).astype(np.int64)
    feats = uniq[:, :-1]
    labs = uniq[:, -1]
    rows: dict[bytes, list[int]] = {}
    order: list[np.ndarray] = []
    for row, lab, cnt in zip(feats, labs, counts):
        key = row.tobytes()
        if key not in rows:
            rows[key] = [0, 0]
            order.append(row)
        rows[key][int(lab)] += int(cnt)
    Xu = np.array(order, dtype=bool).reshape(len(order), X.shape[1])
    n0 = np.array([rows[r.tobytes()][0] for r in order], dtype=np.int64)
    n1 = np.array([rows[r.tobytes()][1] for r in order], dtype=np.int64)
    return Xu, n0, n1


def _unique_states(traj: Trajectory) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Distinct observed completions with multiplicities; eligibility is a
    function of the completion, so one eligibility row per distinct state."""
    X_states, E_states = traj.state_samples()
    if len(X_states) == 0:
        return X_states, E_states, np.zeros(0, dtype=np.int64)
    Xu, first, inverse = np.unique(X_states, axis=0, return_index=True, return_inverse=True)
    counts = np.bincount(inverse.ravel()).astype(np.int64)
    return Xu, E_states[first], counts


def build_precondition_table(
    traj: Trajectory,
    task: TaskInstance,
    sig: VerbSignature,
    attrs: list[AttributeFn],
    mode: InferenceMode = InferenceMode.PSGI,
) -> PrecondTable:
    """Signature-level table: one row per (timestep, ground option of ``sig``),
    eligibility as label, substituted completions and attribute values as
    features."""
    if mode is not InferenceMode.PSGI:
        raise ValueError("signature-level tables exist only in the parameterized mode")
    Xu_states, Eu_states, state_w = _unique_states(traj)
    sub_patterns = _subtask_patterns(task, sig.arity)
    attr_patterns = [(a, slot) for slot in range(sig.arity) for a in attrs]
    columns: list[Pattern] = list(sub_patterns) + [
        _attr_pattern(a, slot) for a, slot in attr_patterns
    ]
    U = len(Xu_states)
    # per option: dedup over the substituted completion features first, then
    # append the option's constant attribute block
    merged: dict[bytes, list] = {}
    for oi, opt in enumerate(task.options):
        if opt.signature != sig:
            continue
        idx = [_pattern_index(task, p, opt.entities) for p in sub_patterns]
        sub_feat = np.zeros((U, len(sub_patterns)), dtype=bool)
        present = [j for j, i in enumerate(idx) if i is not None]
        if present and U:
            sub_feat[:, present] = Xu_states[:, [idx[j] for j in present]]
        if U:
            fu, fn0, fn1 = _dedup_rows(sub_feat, Eu_states[:, oi], state_w)
        else:
            fu = np.zeros((0, len(sub_patterns)), dtype=bool)
            fn0 = fn1 = np.zeros(0, dtype=np.int64)
        attr_row = np.array(
            [a(opt.entities[slot]) for a, slot in attr_patterns], dtype=bool
        )
        ab = attr_row.tobytes()
        for row, a0, a1 in zip(fu, fn0, fn1):
            key = row.tobytes() + ab
            cell = merged.get(key)
            if cell is None:
                merged[key] = [row, attr_row, int(a0), int(a1)]
            else:
                cell[2] += int(a0)
                cell[3] += int(a1)
    if merged:
        rows = list(merged.values())
        Xu = np.array(
            [np.concatenate([r[0], r[1]]) for r in rows], dtype=bool
        ).reshape(len(rows), len(columns))
        n0 = np.array([r[2] for r in rows], dtype=np.int64)
        n1 = np.array([r[3] for r in rows], dtype=np.int64)
    else:
        Xu = np.zeros((0, len(columns)), dtype=bool)
        n0 = n1 = np.zeros(0, dtype=np.int64)
    table = PrecondTable(sig, columns, Xu, n0, n1)
    if table.inconsistent:
        logger.warning(
            "precondition table for %s has %d contradictory rows "
            "(feature space likely misses an attribute)",
            sig,
            table.inconsistent,
        )
    return table


def _attr_pattern(a: AttributeFn, slot: int):
    from .exprs import AttributePattern

    return AttributePattern(a.id, slot)


def build_option_table(
    traj: Trajectory,
    task: TaskInstance,
    opt: GroundOption,
    _states: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None,
) -> PrecondTable:
    """Per-ground-option table over the raw completion bits (no substitution)."""
    Xu_states, Eu_states, state_w = _states if _states is not None else _unique_states(traj)
    order = sorted(range(task.n_subtasks), key=lambda i: pattern_key(_ground(task, i)))
    columns: list[Pattern] = [_ground(task, i) for i in order]
    oi = task.option_index[opt]
    if len(Xu_states) == 0:
        return PrecondTable(opt, columns, np.zeros((0, task.n_subtasks), dtype=bool),
                            np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))
    # eligibility is a function of the completion, so the distinct states are
    # already the distinct rows; labels are constant per row
    labels = Eu_states[:, oi]
    n1 = np.where(labels, state_w, 0).astype(np.int64)
    n0 = (state_w - n1).astype(np.int64)
    return PrecondTable(opt, columns, Xu_states[:, order], n0, n1)


def _ground(task: TaskInstance, i: int) -> GroundPattern:
    s = task.subtasks[i]
    return GroundPattern(s.verb, s.entities)


# --- decision tree ----------------------------------------------------------


@dataclass
class _Leaf:
    label: int


@dataclass
class _Split:
    feature: int
    left: "_Split | _Leaf"  # feature is false
    right: "_Split | _Leaf"  # feature is true


@dataclass
class DecisionTree:
    root: "_Split | _Leaf"
    columns: list[Pattern]
    depth: int
    n_leaves: int

    def predict_row(self, row: np.ndarray) -> int:
        node = self.root
        while isinstance(node, _Split):
            node = node.right if row[node.feature] else node.left
        return node.label

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.array([self.predict_row(r) for r in X], dtype=np.int64)


def _gini_best_feature(X: np.ndarray, n0: np.ndarray, n1: np.ndarray) -> int | None:
    """Feature minimizing the multiplicity-weighted Gini impurity of the split.

    Degenerate splits (an empty side) are excluded; ties resolve to the lowest
    column index.  Returns None when no feature partitions the rows.
    """
    total0 = n0.sum()
    total1 = n1.sum()
    total = total0 + total1
    Xf = X.astype(np.float64)
    r0 = n0.astype(np.float64) @ Xf
    r1 = n1.astype(np.float64) @ Xf
    l0 = total0 - r0
    l1 = total1 - r1
    right = r0 + r1
    left = total - right
    with np.errstate(divide="ignore", invalid="ignore"):
        g_right = right - (r0 * r0 + r1 * r1) / right
        g_left = left - (l0 * l0 + l1 * l1) / left
    g_right = np.where(right > 0, g_right, 0.0)
    g_left = np.where(left > 0, g_left, 0.0)
    score = (g_right + g_left) / total
    valid = (right > 0) & (left > 0)
    if not valid.any():
        return None
    score = np.where(valid, score, np.inf)
    return int(np.argmin(score))


def fit_decision_tree(table: PrecondTable) -> DecisionTree:
    """Greedy CART over the deduplicated rows.

    Splits continue while a node is impure and some feature still partitions
    its rows, so consistent tables always train to 100% accuracy; a node whose
    rows are feature-identical but carry both labels becomes a majority leaf
    (ties resolve to label 0)."""
    if len(table) == 0:
        raise EmptyTableError(f"no rows for {table.signature}")

    def grow(mask: np.ndarray) -> "_Split | _Leaf":
        w0 = int(table.n0[mask].sum())
        w1 = int(table.n1[mask].sum())
        if w0 == 0 or w1 == 0:
            return _Leaf(1 if w0 == 0 else 0)
        X = table.X[mask]
        f = _gini_best_feature(X, table.n0[mask], table.n1[mask])
        if f is None:
            return _Leaf(1 if w1 > w0 else 0)
        sub = np.nonzero(mask)[0]
        right = np.zeros_like(mask)
        right[sub[X[:, f]]] = True
        left = mask & ~right
        return _Split(f, grow(left), grow(right))

    root = grow(np.ones(len(table), dtype=bool))

    def measure(node, d=0) -> tuple[int, int]:
        if isinstance(node, _Leaf):
            return d, 1
        dl, nl = measure(node.left, d + 1)
        dr, nr = measure(node.right, d + 1)
        return max(dl, dr), nl + nr

    depth, leaves = measure(root)
    return DecisionTree(root, table.columns, depth, leaves)


def tree_to_expr(tree: DecisionTree) -> ParamExpr:
    """OR over root-to-true-leaf paths of the AND of branch literals."""
    terms: list[ParamExpr] = []

    def walk(node, lits: list[Lit]) -> None:
        if isinstance(node, _Leaf):
            if node.label == 1:
                terms.append(And(tuple(lits)) if lits else TRUE)
            return
        col = tree.columns[node.feature]
        walk(node.left, lits + [Lit(col, positive=False)])
        walk(node.right, lits + [Lit(col, positive=True)])

    walk(tree.root, [])
    if not terms:
        return FALSE
    if any(t is TRUE for t in terms):
        return TRUE
    return to_dnf(Or(tuple(terms)))


# --- effects and rewards ----------------------------------------------------


def infer_effects(
    traj: Trajectory,
    task: TaskInstance,
    sig: VerbSignature | GroundOption,
    mode: InferenceMode = InferenceMode.PSGI,
) -> EffectDelta:
    """Aggregated completion difference across successful executions.

    A pattern joins the delta with sign s when at least one observed
    difference is nonzero and every nonzero difference equals s; opposite
    nonzero differences mean the feature space cannot explain the effect and
    the pattern is omitted with a logged diagnostic."""
    ok = traj.successful_steps()
    if mode is InferenceMode.PSGI:
        assert isinstance(sig, VerbSignature)
        patterns = _subtask_patterns(task, sig.arity)
        steps_by_opt: dict[int, list[int]] = {}
        for t in ok:
            oi = int(traj.options[t])
            if task.options[oi].signature == sig:
                steps_by_opt.setdefault(oi, []).append(int(t))
        out = []
        for p in patterns:
            signs: set[int] = set()
            for oi, steps in steps_by_opt.items():
                idx = _pattern_index(task, p, task.options[oi].entities)
                if idx is None:
                    continue
                steps = np.asarray(steps)
                before = traj.x[steps, idx].astype(np.int8)
                after = traj.x_after[steps, idx].astype(np.int8)
                deltas = after - before
                signs.update(int(d) for d in deltas[deltas != 0])
            if not signs:
                continue
            if len(signs) > 1:
                logger.warning("conflicting effect signs for %s on %s; omitted", sig, p)
                continue
            out.append((p, signs.pop()))
        return tuple(sorted(out, key=lambda ps: pattern_key(ps[0])))

    assert isinstance(sig, GroundOption)
    oi = task.option_index[sig]
    steps = ok[traj.options[ok] == oi]
    out = []
    for i in range(task.n_subtasks):
        before = traj.x[steps, i].astype(np.int8)
        after = traj.x_after[steps, i].astype(np.int8)
        deltas = after - before
        nz = set(int(d) for d in deltas[deltas != 0])
        if not nz:
            continue
        if len(nz) > 1:
            logger.warning("conflicting effect signs for %s on subtask %d; omitted", sig, i)
            continue
        out.append((_ground(task, i), nz.pop()))
    return tuple(sorted(out, key=lambda ps: pattern_key(ps[0])))


def infer_rewards(traj: Trajectory, task: TaskInstance) -> dict[GroundSubtask, tuple[float, int]]:
    """Empirical mean reward at each subtask's 0 -> 1 flips."""
    out: dict[GroundSubtask, tuple[float, int]] = {}
    if len(traj) == 0:
        return out
    flips = traj.x_after & ~traj.x  # (T, N)
    for i in range(task.n_subtasks):
        steps = np.nonzero(flips[:, i])[0]
        if len(steps):
            out[task.subtasks[i]] = (float(traj.rewards[steps].mean()), len(steps))
    return out


def infer_psg(
    traj: Trajectory,
    task: TaskInstance,
    attrs: list[AttributeFn],
    mode: InferenceMode = InferenceMode.PSGI,
) -> ParamGraph:
    """Assemble the maximum-likelihood graph: precondition trees, aggregated
    effects, and reward means, independently per factor."""
    rewards = infer_rewards(traj, task)
    if mode is InferenceMode.PSGI:
        preconditions: dict[VerbSignature, ParamExpr] = {}
        effects: dict[VerbSignature, EffectDelta] = {}
        for sig in task.signatures():
            table = build_precondition_table(traj, task, sig, attrs, mode)
            if len(table) == 0:
                preconditions[sig] = FALSE
            else:
                preconditions[sig] = tree_to_expr(fit_decision_tree(table))
            effects[sig] = infer_effects(traj, task, sig, mode)
        return ParamGraph(
            preconditions=preconditions,
            effects=effects,
            rewards=rewards,
            provenance="psgi",
            attr_defs={a.id: a for a in attrs},
        )

    ground_preconditions: dict[GroundOption, ParamExpr] = {}
    ground_effects: dict[GroundOption, EffectDelta] = {}
    states = _unique_states(traj)
    for opt in task.options:
        table = build_option_table(traj, task, opt, _states=states)
        if len(table) == 0:
            ground_preconditions[opt] = FALSE
        else:
            ground_preconditions[opt] = tree_to_expr(fit_decision_tree(table))
        ground_effects[opt] = infer_effects(traj, task, opt, mode)
    return ParamGraph(
        rewards=rewards,
        provenance="msgi",
        ground_preconditions=ground_preconditions,
        ground_effects=ground_effects,
    )
