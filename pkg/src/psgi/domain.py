"""Declarative domain definitions and the config file loader.

A domain config declares the entity pool (with ground-truth attribute bits and
a train/eval split), the subtask and option templates in first-order form, and
the task parameters.  Configs are UTF-8 JSON; see ``load_domain`` for the
schema and ``data/`` for the bundled domains.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import ParseError, ValidationError
from .exprs import (
    AttributePattern,
    GroundPattern,
    Lit,
    ParamExpr,
    SubtaskPattern,
    expr_from_json,
    expr_patterns,
)
from .graphs import EffectDelta, VerbSignature

__all__ = [
    "EntityDef",
    "OptionTemplate",
    "DomainConfig",
    "load_domain",
    "parse_domain",
    "bundled_domain_path",
]

_SLOT_RE = re.compile(r"^p\d+$")
MAX_ARITY = 3


@dataclass(frozen=True)
class EntityDef:
    id: str
    attributes: dict[str, bool]
    pool: str  # "train" | "eval"


@dataclass(frozen=True)
class OptionTemplate:
    signature: VerbSignature
    precondition: ParamExpr
    effect: EffectDelta
    # per-slot attribute names an entity must carry to instantiate the slot
    filters: dict[int, str] = field(default_factory=dict)


@dataclass
class DomainConfig:
    name: str
    embedding_dim: int
    attributes: tuple[str, ...]
    entities: tuple[EntityDef, ...]
    subtasks: tuple[VerbSignature, ...]
    options: tuple[OptionTemplate, ...]
    entities_per_task: int
    episode_steps: int
    adaptation_steps: int
    test_horizon: int
    reward_mode: str = "critical_path"
    reward_value: float = 1.0

    def __post_init__(self):
        self._by_id = {e.id: e for e in self.entities}
        self.validate()

    def entity_attribute(self, entity: str, attr: str) -> bool:
        return bool(self._by_id[entity].attributes.get(attr, False))

    def pool_entities(self, pool: str) -> tuple[str, ...]:
        if pool not in ("train", "eval"):
            raise ValidationError(f"unknown pool {pool!r}")
        return tuple(sorted(e.id for e in self.entities if e.pool == pool))

    def attribute_bits(self, entity: str) -> tuple[bool, ...]:
        e = self._by_id[entity]
        return tuple(bool(e.attributes.get(a, False)) for a in self.attributes)

    def validate(self) -> None:
        ids = [e.id for e in self.entities]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate entity ids")
        for e in self.entities:
            if not e.id or any(c.isspace() for c in e.id):
                raise ValidationError(f"bad entity id {e.id!r}")
            if _SLOT_RE.match(e.id):
                raise ValidationError(f"entity id {e.id!r} collides with slot names")
            if e.pool not in ("train", "eval"):
                raise ValidationError(f"entity {e.id}: pool must be train or eval")
            for a in e.attributes:
                if a not in self.attributes:
                    raise ValidationError(f"entity {e.id}: undeclared attribute {a!r}")
        sigs = list(self.subtasks) + [o.signature for o in self.options]
        if len(set(sigs)) != len(sigs):
            raise ValidationError("duplicate (verb, arity) signature")
        for s in sigs:
            if not (0 <= s.arity <= MAX_ARITY):
                raise ValidationError(f"{s}: arity must be between 0 and {MAX_ARITY}")
        subtask_sigs = set(self.subtasks)
        for o in self.options:
            for p in expr_patterns(o.precondition):
                self._check_pattern(p, o.signature, subtask_sigs, "precondition")
            seen_patterns = set()
            for p, sign in o.effect:
                if sign not in (1, -1):
                    raise ValidationError(f"{o.signature}: effect sign must be +-1")
                if p in seen_patterns:
                    raise ValidationError(f"{o.signature}: duplicate effect pattern {p}")
                seen_patterns.add(p)
                self._check_pattern(p, o.signature, subtask_sigs, "effect")
            for slot, attr in o.filters.items():
                if not (0 <= slot < o.signature.arity):
                    raise ValidationError(f"{o.signature}: filter slot {slot} out of range")
                if attr not in self.attributes:
                    raise ValidationError(f"{o.signature}: undeclared filter attribute {attr!r}")
        if self.embedding_dim < len(self.attributes):
            raise ValidationError("embedding_dim smaller than the attribute count")
        for fld in ("entities_per_task", "episode_steps", "adaptation_steps", "test_horizon"):
            if getattr(self, fld) <= 0:
                raise ValidationError(f"{fld} must be positive")

    def _check_pattern(self, p, host: VerbSignature, subtask_sigs, where: str) -> None:
        if isinstance(p, AttributePattern):
            if p.attr not in self.attributes:
                raise ValidationError(f"{host} {where}: undeclared attribute {p.attr!r}")
            if p.slot >= host.arity:
                raise ValidationError(f"{host} {where}: slot beyond arity")
        elif isinstance(p, SubtaskPattern):
            if VerbSignature(p.verb, len(p.args)) not in subtask_sigs:
                raise ValidationError(f"{host} {where}: undeclared subtask {p.verb}/{len(p.args)}")
            if any(a >= host.arity for a in p.args):
                raise ValidationError(f"{host} {where}: slot beyond arity in {p.verb}")
        elif isinstance(p, GroundPattern):
            raise ValidationError(f"{host} {where}: ground references not allowed in configs")


def _effect_from_json(items, arity: int) -> EffectDelta:
    out = []
    for item in items:
        if not isinstance(item, dict) or len(item) != 1:
            raise ParseError(f"bad effect entry {item!r}")
        (op, body), = item.items()
        if op not in ("add", "del"):
            raise ParseError(f"effect operator must be add or del, got {op!r}")
        verb, args = body
        lit = expr_from_json({"subtask": [verb, args]}, arity)
        assert isinstance(lit, Lit)
        out.append((lit.pattern, 1 if op == "add" else -1))
    return tuple(out)


def parse_domain(raw: dict, source: str = "<dict>") -> DomainConfig:
    """Build and validate a DomainConfig from decoded JSON."""
    try:
        name = raw["name"]
        dim = int(raw["embedding_dim"])
        attributes = tuple(raw["attributes"])
        entities = tuple(
            EntityDef(e["id"], {k: bool(v) for k, v in e.get("attributes", {}).items()}, e["pool"])
            for e in raw["entities"]
        )
        subtasks = tuple(VerbSignature(s["verb"], int(s["arity"])) for s in raw["subtasks"])
        options = []
        for o in raw["options"]:
            sig = VerbSignature(o["verb"], int(o["arity"]))
            precondition = expr_from_json(o["precondition"], sig.arity)
            effect = _effect_from_json(o.get("effect", []), sig.arity)
            filters = {}
            for slot, attr in o.get("filters", {}).items():
                if not _SLOT_RE.match(slot):
                    raise ParseError(f"{sig}: filter key {slot!r} is not a slot name")
                filters[int(slot[1:]) - 1] = attr
            options.append(OptionTemplate(sig, precondition, effect, filters))
        task = raw["task"]
        reward = raw.get("reward", {})
        cfg = DomainConfig(
            name=name,
            embedding_dim=dim,
            attributes=attributes,
            entities=entities,
            subtasks=subtasks,
            options=tuple(options),
            entities_per_task=int(task["entities_per_task"]),
            episode_steps=int(task["episode_steps"]),
            adaptation_steps=int(task["adaptation_steps"]),
            test_horizon=int(task["test_horizon"]),
            reward_mode=reward.get("mode", "critical_path"),
            reward_value=float(reward.get("value", 1.0)),
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise ParseError(f"{source}: malformed domain config ({exc!r})") from exc
    except ValueError as exc:
        raise ParseError(f"{source}: {exc}") from exc
    if cfg.reward_mode != "critical_path":
        raise ValidationError(f"unsupported reward mode {cfg.reward_mode!r}")
    return cfg


def load_domain(path: str | Path) -> DomainConfig:
    """Load and validate a domain config file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}: {exc.msg}") from exc
    return parse_domain(raw, source=str(path))


def bundled_domain_path(name: str) -> Path:
    """Path of a domain config shipped with the package (cooking, mining, ...)."""
    base = resources.files("psgi").joinpath("data")
    p = Path(str(base.joinpath(f"{name}.domain.json")))
    if not p.exists():
        raise ParseError(f"no bundled domain named {name!r}")
    return p
