"""Graph (de)serialization in the domain-config AST format.

Inferred graphs round-trip through JSON: per-signature (or per-ground-option)
preconditions and effects, reward estimates, and the candidate-attribute
definitions with their embedding provenance, so a prior trained in one
process can be reloaded and applied to unseen entities in another.
"""

from __future__ import annotations

import json
from pathlib import Path

from .attributes import AttributeFn, EmbeddingTable, ingest_embeddings, synth_embeddings
from .domain import DomainConfig
from .errors import ParseError
from .exprs import GroundPattern, SubtaskPattern, expr_from_json, expr_to_json, slot_name
from .graphs import EffectDelta, GroundOption, GroundSubtask, ParamGraph, VerbSignature

__all__ = [
    "graph_to_json",
    "graph_from_json",
    "save_graphs",
    "load_graphs",
    "embedding_from_spec",
]


def _effect_to_json(delta: EffectDelta) -> list[dict]:
    out = []
    for pattern, sign in delta:
        if isinstance(pattern, SubtaskPattern):
            args = [slot_name(i) for i in pattern.args]
        else:
            args = list(pattern.entities)
        out.append({("add" if sign > 0 else "del"): [pattern.verb, args]})
    return out


def _effect_from_json(items: list[dict], arity: int) -> EffectDelta:
    out = []
    for item in items:
        (op, body), = item.items()
        verb, args = body
        lit = expr_from_json({"subtask": [verb, args]}, arity)
        out.append((lit.pattern, 1 if op == "add" else -1))
    return tuple(out)


def graph_to_json(graph: ParamGraph) -> dict:
    doc: dict = {"provenance": graph.provenance}
    if graph.preconditions:
        doc["options"] = [
            {
                "verb": sig.verb,
                "arity": sig.arity,
                "precondition": expr_to_json(graph.preconditions[sig]),
                "effect": _effect_to_json(graph.effects.get(sig, ())),
            }
            for sig in sorted(graph.preconditions, key=lambda s: (s.verb, s.arity))
        ]
    if graph.ground_preconditions:
        doc["ground_options"] = [
            {
                "verb": opt.verb,
                "entities": list(opt.entities),
                "precondition": expr_to_json(graph.ground_preconditions[opt]),
                "effect": _effect_to_json(graph.ground_effects.get(opt, ())),
            }
            for opt in sorted(graph.ground_preconditions, key=lambda o: (o.verb, o.entities))
        ]
    doc["rewards"] = [
        {
            "subtask": [s.verb, list(s.entities)],
            "mean": mu,
            "count": count,
        }
        for s, (mu, count) in sorted(
            graph.rewards.items(), key=lambda kv: (kv[0].verb, kv[0].entities)
        )
    ]
    if graph.attr_defs is not None:
        doc["attributes"] = {
            attr_id: {"members": sorted(fn.members), "seen": sorted(fn.seen)}
            for attr_id, fn in sorted(graph.attr_defs.items())
            if isinstance(fn, AttributeFn)
        }
    return doc


def graph_from_json(doc: dict, emb: EmbeddingTable | None = None) -> ParamGraph:
    preconditions = {}
    effects = {}
    for o in doc.get("options", []):
        sig = VerbSignature(o["verb"], int(o["arity"]))
        preconditions[sig] = expr_from_json(o["precondition"], sig.arity)
        effects[sig] = _effect_from_json(o.get("effect", []), sig.arity)
    ground_preconditions = {}
    ground_effects = {}
    for o in doc.get("ground_options", []):
        opt = GroundOption(o["verb"], tuple(o["entities"]))
        arity = len(opt.entities)
        ground_preconditions[opt] = expr_from_json(o["precondition"], arity)
        ground_effects[opt] = _effect_from_json(o.get("effect", []), arity)
    rewards = {
        GroundSubtask(r["subtask"][0], tuple(r["subtask"][1])): (float(r["mean"]), int(r["count"]))
        for r in doc.get("rewards", [])
    }
    attr_defs = None
    if "attributes" in doc:
        if emb is None:
            raise ParseError("graph file carries attribute definitions; an embedding table is required")
        attr_defs = {
            attr_id: AttributeFn(
                id=attr_id,
                members=frozenset(spec["members"]),
                seen=tuple(sorted(spec["seen"])),
                table=emb,
            )
            for attr_id, spec in doc["attributes"].items()
        }
    return ParamGraph(
        preconditions=preconditions,
        effects=effects,
        rewards=rewards,
        provenance=doc.get("provenance", "psgi"),
        ground_preconditions=ground_preconditions,
        ground_effects=ground_effects,
        attr_defs=attr_defs,
    )


def embedding_from_spec(spec: dict, cfg: DomainConfig) -> EmbeddingTable:
    if spec.get("source") == "synthetic":
        return synth_embeddings(cfg, float(spec["sigma"]), int(spec["seed"]))
    if spec.get("source") == "file":
        return ingest_embeddings(spec["path"], [e.id for e in cfg.entities])
    raise ParseError(f"unknown embedding source {spec.get('source')!r}")


def save_graphs(path: str | Path, graphs: list[ParamGraph], embedding_spec: dict) -> None:
    doc = {
        "embedding": embedding_spec,
        "graphs": [graph_to_json(g) for g in graphs],
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_graphs(path: str | Path, cfg: DomainConfig) -> list[ParamGraph]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}: {exc.msg}") from exc
    emb = embedding_from_spec(doc["embedding"], cfg) if "embedding" in doc else None
    return [graph_from_json(g, emb) for g in doc["graphs"]]
