"""Boolean expressions over parameterized subtask-completion and attribute literals.

An expression is an immutable AST of literals combined with AND/OR (plus the
TRUE/FALSE constants).  Literals carry their own polarity, so there is no NOT
node; negation is pushed down with De Morgan's laws when parsing.

Three literal payloads exist:

* ``SubtaskPattern`` -- completion of a subtask template whose arguments are
  slots of the host option signature (``held(p1)``),
* ``AttributePattern`` -- a boolean entity attribute applied to a slot
  (``pickupable(p2)``),
* ``GroundPattern`` -- completion of one specific ground subtask, used by the
  per-option inference mode that does not substitute parameters.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator, Mapping, Union

import numpy as np

from .errors import MissingFeatureError

__all__ = [
    "SubtaskPattern",
    "AttributePattern",
    "GroundPattern",
    "Pattern",
    "ParamExpr",
    "Lit",
    "And",
    "Or",
    "TRUE",
    "FALSE",
    "pattern_key",
    "lit_key",
    "eval_expr",
    "expr_patterns",
    "negate",
    "to_dnf",
    "dnf_terms",
    "expr_to_json",
    "expr_from_json",
    "slot_name",
]

MAX_VERIFY_FEATURES = 20


@dataclass(frozen=True)
class SubtaskPattern:
    """Completion bit of a subtask template, argued with host-signature slots."""

    verb: str
    args: tuple[int, ...]


@dataclass(frozen=True)
class AttributePattern:
    """Boolean entity attribute applied to one host-signature slot."""

    attr: str
    slot: int


@dataclass(frozen=True)
class GroundPattern:
    """Completion bit of one specific ground subtask (no substitution)."""

    verb: str
    entities: tuple[str, ...]


Pattern = Union[SubtaskPattern, AttributePattern, GroundPattern]


def pattern_key(p: Pattern) -> tuple:
    """Canonical sort key: (kind, verb, arity, slots, attribute id)."""
    if isinstance(p, SubtaskPattern):
        return (0, p.verb, len(p.args), p.args, "")
    if isinstance(p, GroundPattern):
        return (1, p.verb, len(p.entities), p.entities, "")
    return (2, "", 1, (p.slot,), p.attr)


class ParamExpr:
    """Base class for expression nodes."""

    __slots__ = ()

    def __and__(self, other: "ParamExpr") -> "ParamExpr":
        return And((self, other))

    def __or__(self, other: "ParamExpr") -> "ParamExpr":
        return Or((self, other))


@dataclass(frozen=True)
class Lit(ParamExpr):
    pattern: Pattern
    positive: bool = True


@dataclass(frozen=True)
class And(ParamExpr):
    children: tuple[ParamExpr, ...]

    def __post_init__(self):
        if not self.children:
            raise ValueError("And requires at least one child")


@dataclass(frozen=True)
class Or(ParamExpr):
    children: tuple[ParamExpr, ...]

    def __post_init__(self):
        if not self.children:
            raise ValueError("Or requires at least one child")


class _Const(ParamExpr):
    __slots__ = ("value",)

    def __init__(self, value: bool):
        object.__setattr__(self, "value", value)

    def __repr__(self):
        return "TRUE" if self.value else "FALSE"

    def __eq__(self, other):
        return isinstance(other, _Const) and other.value == self.value

    def __hash__(self):
        return hash(("_Const", self.value))


TRUE = _Const(True)
FALSE = _Const(False)


def lit_key(lit: Lit) -> tuple:
    return pattern_key(lit.pattern) + (not lit.positive,)


def eval_expr(expr: ParamExpr, assign: Mapping[Pattern, bool]) -> bool:
    """Evaluate under a complete feature assignment (standard boolean semantics)."""
    if isinstance(expr, _Const):
        return expr.value
    if isinstance(expr, Lit):
        try:
            v = assign[expr.pattern]
        except KeyError:
            raise MissingFeatureError(f"unassigned feature {expr.pattern!r}") from None
        return bool(v) if expr.positive else not v
    if isinstance(expr, And):
        return all(eval_expr(c, assign) for c in expr.children)
    if isinstance(expr, Or):
        return any(eval_expr(c, assign) for c in expr.children)
    raise TypeError(f"not an expression node: {expr!r}")


def expr_patterns(expr: ParamExpr) -> list[Pattern]:
    """Distinct patterns appearing in the expression, in canonical order."""
    found: set[Pattern] = set()

    def walk(e: ParamExpr) -> None:
        if isinstance(e, Lit):
            found.add(e.pattern)
        elif isinstance(e, (And, Or)):
            for c in e.children:
                walk(c)

    walk(expr)
    return sorted(found, key=pattern_key)


def negate(expr: ParamExpr) -> ParamExpr:
    """Negation with the NOT pushed down to the literals."""
    if isinstance(expr, _Const):
        return FALSE if expr.value else TRUE
    if isinstance(expr, Lit):
        return Lit(expr.pattern, not expr.positive)
    if isinstance(expr, And):
        return Or(tuple(negate(c) for c in expr.children))
    if isinstance(expr, Or):
        return And(tuple(negate(c) for c in expr.children))
    raise TypeError(f"not an expression node: {expr!r}")


def _dnf_sets(expr: ParamExpr) -> list[frozenset[Lit]]:
    """DNF as a list of conjunct literal sets. [] is FALSE, [frozenset()] TRUE."""
    if isinstance(expr, _Const):
        return [frozenset()] if expr.value else []
    if isinstance(expr, Lit):
        return [frozenset((expr,))]
    if isinstance(expr, Or):
        terms: list[frozenset[Lit]] = []
        for c in expr.children:
            terms.extend(_dnf_sets(c))
        return terms
    if isinstance(expr, And):
        terms = [frozenset()]
        for c in expr.children:
            child_terms = _dnf_sets(c)
            terms = [a | b for a, b in itertools.product(terms, child_terms)]
        return terms
    raise TypeError(f"not an expression node: {expr!r}")


def _prune_terms(terms: list[frozenset[Lit]]) -> list[frozenset[Lit]]:
    # drop contradictions (l and not-l in one conjunct), dedup, then remove
    # subsumed conjuncts (absorption: A subsumes A&B)
    alive = []
    seen = set()
    for t in terms:
        if any(Lit(l.pattern, not l.positive) in t for l in t):
            continue
        if t in seen:
            continue
        seen.add(t)
        alive.append(t)
    alive.sort(key=len)
    kept: list[frozenset[Lit]] = []
    for t in alive:
        if not any(k <= t for k in kept):
            kept.append(t)
    return kept


def _term_sort_key(t: frozenset[Lit]) -> tuple:
    return (len(t), tuple(sorted(lit_key(l) for l in t)))


def dnf_terms(expr: ParamExpr) -> list[tuple[Lit, ...]]:
    """Canonical DNF terms: each a tuple of literals sorted canonically.

    Empty list means FALSE; a single empty tuple means TRUE.
    """
    kept = _prune_terms(_dnf_sets(expr))
    kept.sort(key=_term_sort_key)
    return [tuple(sorted(t, key=lit_key)) for t in kept]


def _truth_table(expr: ParamExpr, patterns: list[Pattern]) -> np.ndarray:
    """Vectorized evaluation over all 2^F assignments of the given patterns."""
    n = len(patterns)
    rows = 1 << n
    cols = {}
    for i, p in enumerate(patterns):
        # feature i alternates in blocks of 2^(n-1-i)
        block = 1 << (n - 1 - i)
        cols[p] = ((np.arange(rows) // block) % 2).astype(bool)

    def ev(e: ParamExpr) -> np.ndarray:
        if isinstance(e, _Const):
            return np.full(rows, e.value)
        if isinstance(e, Lit):
            v = cols[e.pattern]
            return v if e.positive else ~v
        if isinstance(e, And):
            out = ev(e.children[0])
            for c in e.children[1:]:
                out = out & ev(c)
            return out
        out = ev(e.children[0])
        for c in e.children[1:]:
            out = out | ev(c)
        return out

    return ev(expr)


def to_dnf(expr: ParamExpr) -> ParamExpr:
    """Convert to a canonical OR-of-ANDs with duplicates and subsumed terms removed.

    For expressions over at most 20 distinct features the conversion is
    self-checked by exhaustive truth table; beyond that the check is skipped
    and the conversion is still performed.
    """
    terms = dnf_terms(expr)
    if not terms:
        result: ParamExpr = FALSE
    elif terms == [()]:
        result = TRUE
    else:
        result = Or(tuple(And(t) for t in terms))

    patterns = expr_patterns(expr)
    if len(patterns) <= MAX_VERIFY_FEATURES:
        if not np.array_equal(_truth_table(expr, patterns), _truth_table(result, patterns)):
            raise AssertionError("DNF conversion changed expression semantics")
    return result


# --- JSON codec (domain-config AST format) ---------------------------------

_SLOT_NAMES = ("p1", "p2", "p3")


def slot_name(i: int) -> str:
    return _SLOT_NAMES[i]


def _parse_args(args: list[str], arity: int, where: str) -> tuple[int, ...] | tuple[str, ...]:
    """Slot names ("p1".."p3") become slot indices; anything else is an entity id."""
    if all(a in _SLOT_NAMES for a in args):
        slots = tuple(_SLOT_NAMES.index(a) for a in args)
        for s in slots:
            if s >= arity:
                raise ValueError(f"{where}: slot {_SLOT_NAMES[s]} beyond host arity {arity}")
        return slots
    if any(a in _SLOT_NAMES for a in args):
        raise ValueError(f"{where}: cannot mix slot names and entity ids in {args}")
    return tuple(args)


def expr_from_json(obj, arity: int) -> ParamExpr:
    """Decode the nested-object AST used by domain configs and graph files."""
    if not isinstance(obj, dict) or len(obj) != 1:
        raise ValueError(f"bad expression node: {obj!r}")
    (op, body), = obj.items()
    if op == "true":
        return TRUE
    if op == "false":
        return FALSE
    if op == "and":
        return And(tuple(expr_from_json(c, arity) for c in body))
    if op == "or":
        return Or(tuple(expr_from_json(c, arity) for c in body))
    if op == "not":
        return negate(expr_from_json(body, arity))
    if op == "subtask":
        verb, args = body
        parsed = _parse_args(list(args), arity, f"subtask {verb}")
        if parsed and isinstance(parsed[0], str):
            return Lit(GroundPattern(verb, parsed))
        return Lit(SubtaskPattern(verb, parsed))
    if op == "attr":
        name, slot = body
        if slot not in _SLOT_NAMES:
            raise ValueError(f"attr {name}: slot must be one of {_SLOT_NAMES}, got {slot!r}")
        idx = _SLOT_NAMES.index(slot)
        if idx >= arity:
            raise ValueError(f"attr {name}: slot {slot} beyond host arity {arity}")
        return Lit(AttributePattern(name, idx))
    raise ValueError(f"unknown expression operator {op!r}")


def _pattern_to_json(p: Pattern) -> dict:
    if isinstance(p, SubtaskPattern):
        return {"subtask": [p.verb, [slot_name(i) for i in p.args]]}
    if isinstance(p, GroundPattern):
        return {"subtask": [p.verb, list(p.entities)]}
    return {"attr": [p.attr, slot_name(p.slot)]}


def expr_to_json(expr: ParamExpr) -> dict:
    if expr is TRUE or expr == TRUE:
        return {"true": None}
    if expr is FALSE or expr == FALSE:
        return {"false": None}
    if isinstance(expr, Lit):
        node = _pattern_to_json(expr.pattern)
        return node if expr.positive else {"not": node}
    if isinstance(expr, And):
        return {"and": [expr_to_json(c) for c in expr.children]}
    if isinstance(expr, Or):
        return {"or": [expr_to_json(c) for c in expr.children]}
    raise TypeError(f"not an expression node: {expr!r}")


def iter_assignments(patterns: list[Pattern]) -> Iterator[dict[Pattern, bool]]:
    """All 2^F assignments of the given patterns, in a fixed order."""
    for bits in itertools.product((False, True), repeat=len(patterns)):
        yield dict(zip(patterns, bits))
