"""DOT rendering of parameterized (or per-ground-option) graphs.

Options are rectangles; subtask patterns and attributes are ovals.
Precondition edges run pattern -> option, effect edges option -> pattern;
solid means positive, dashed negative.
"""

from __future__ import annotations

from .exprs import AttributePattern, GroundPattern, SubtaskPattern, dnf_terms, slot_name
from .graphs import ParamGraph

__all__ = ["export_dot"]


def _pattern_label(p) -> str:
    if isinstance(p, SubtaskPattern):
        args = ",".join(slot_name(i) for i in p.args)
        return f"{p.verb}({args})" if p.args else p.verb
    if isinstance(p, GroundPattern):
        args = ",".join(p.entities)
        return f"{p.verb}({args})" if p.entities else p.verb
    assert isinstance(p, AttributePattern)
    return f"{p.attr}({slot_name(p.slot)})"


def _quote(s: str) -> str:
    return '"' + s.replace('"', '\\"') + '"'


def export_dot(graph: ParamGraph) -> str:
    """Deterministic DOT text for the graph's structural part."""
    entries = []
    for sig in sorted(graph.preconditions, key=lambda s: (s.verb, s.arity)):
        label = f"{sig.verb}({','.join(slot_name(i) for i in range(sig.arity))})" if sig.arity else sig.verb
        entries.append((label, graph.preconditions[sig], graph.effects.get(sig, ())))
    for opt in sorted(graph.ground_preconditions, key=lambda o: (o.verb, o.entities)):
        label = f"{opt.verb}({','.join(opt.entities)})" if opt.entities else opt.verb
        entries.append((label, graph.ground_preconditions[opt], graph.ground_effects.get(opt, ())))

    pattern_nodes: set[str] = set()
    edges: set[tuple[str, str, bool]] = set()  # (src, dst, solid)
    option_nodes: list[str] = []
    for label, precondition, effect in entries:
        option_nodes.append(label)
        seen_lits = set()
        for term in dnf_terms(precondition):
            for lit in term:
                key = (lit.pattern, lit.positive)
                if key in seen_lits:
                    continue
                seen_lits.add(key)
                pl = _pattern_label(lit.pattern)
                pattern_nodes.add(pl)
                edges.add((pl, label, lit.positive))
        for pattern, sign in effect:
            pl = _pattern_label(pattern)
            pattern_nodes.add(pl)
            edges.add((label, pl, sign > 0))

    lines = ["digraph psg {"]
    for label in option_nodes:
        lines.append(f"  {_quote(label)} [shape=box];")
    for label in sorted(pattern_nodes):
        lines.append(f"  {_quote(label)} [shape=oval];")
    for src, dst, solid in sorted(edges):
        style = "solid" if solid else "dashed"
        lines.append(f"  {_quote(src)} -> {_quote(dst)} [style={style}];")
    lines.append("}")
    return "\n".join(lines) + "\n"
