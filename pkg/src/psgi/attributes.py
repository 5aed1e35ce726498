"""Zero-shot entity-attribute induction.

Candidate attributes are clusters over the entities seen during adaptation:
every nonempty proper subset when the seen set is small, the internal nodes of
an average-linkage dendrogram (plus complements) when it is large.  Each
candidate extends to unseen entities through a 1-nearest-neighbor lookup in
embedding space.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.cluster.hierarchy import linkage

from .domain import DomainConfig
from .errors import (
    DimensionMismatchError,
    MissingEntityError,
    NoEmbeddingError,
    ParseError,
    TooFewEntitiesError,
)

__all__ = [
    "EmbeddingTable",
    "AttributeFn",
    "ingest_embeddings",
    "synth_embeddings",
    "generate_candidate_attributes",
    "predict_attribute",
    "attribute_accuracy",
    "match_candidates",
    "POWERSET_LIMIT",
]

POWERSET_LIMIT = 16


class EmbeddingTable:
    """Entity id -> fixed-dimension real vector."""

    def __init__(self, vectors: dict[str, np.ndarray]):
        self.vectors = {k: np.asarray(v, dtype=np.float64) for k, v in vectors.items()}
        dims = {v.shape for v in self.vectors.values()}
        if len(dims) > 1:
            raise DimensionMismatchError(f"inconsistent embedding dimensions: {dims}")
        self.dim = next(iter(dims))[0] if self.vectors else 0
        for k, v in self.vectors.items():
            if not np.isfinite(v).all():
                raise DimensionMismatchError(f"non-finite embedding for {k!r}")

    def __contains__(self, entity: str) -> bool:
        return entity in self.vectors

    def __getitem__(self, entity: str) -> np.ndarray:
        try:
            return self.vectors[entity]
        except KeyError:
            raise NoEmbeddingError(f"no embedding for entity {entity!r}") from None

    def nearest(self, entity: str, candidates: tuple[str, ...]) -> str:
        """Euclidean-nearest candidate; ties broken by lexicographic id."""
        v = self[entity]
        ordered = sorted(candidates)
        mat = np.stack([self[c] for c in ordered])
        d = np.linalg.norm(mat - v, axis=1)
        return ordered[int(np.argmin(d))]


def ingest_embeddings(path: str | Path, entities: list[str] | tuple[str, ...]) -> EmbeddingTable:
    """Read a whitespace-separated "token v1 .. vD" file, restricted to ``entities``."""
    path = Path(path)
    vectors: dict[str, np.ndarray] = {}
    wanted = set(entities)
    dim: int | None = None
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            token, vals = parts[0], parts[1:]
            if dim is None:
                if not vals:
                    raise ParseError(f"{path}:{lineno}: no vector components")
                dim = len(vals)
            if len(vals) != dim:
                raise DimensionMismatchError(
                    f"{path}:{lineno}: expected {dim} components, found {len(vals)}"
                )
            if token in wanted and token not in vectors:
                try:
                    vectors[token] = np.array([float(v) for v in vals])
                except ValueError as exc:
                    raise ParseError(f"{path}:{lineno}: {exc}") from exc
    missing = sorted(wanted - set(vectors))
    if missing:
        raise MissingEntityError(f"entities absent from {path}: {', '.join(missing)}")
    return EmbeddingTable(vectors)


def synth_embeddings(cfg: DomainConfig, noise_sigma: float, rng_seed: int) -> EmbeddingTable:
    """Synthetic embeddings: attribute bits scaled to +-1, zero-padded, plus noise."""
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be nonnegative")
    rng = np.random.Generator(np.random.PCG64(rng_seed))
    vectors = {}
    for e in cfg.entities:
        bits = np.array(cfg.attribute_bits(e.id), dtype=np.float64) * 2.0 - 1.0
        v = np.zeros(cfg.embedding_dim)
        v[: len(bits)] = bits
        v += rng.normal(0.0, noise_sigma, size=cfg.embedding_dim) if noise_sigma else 0.0
        vectors[e.id] = v
    return EmbeddingTable(vectors)


@dataclass(frozen=True)
class AttributeFn:
    """Cluster membership over seen entities, 1-NN extended to unseen ones."""

    id: str
    members: frozenset[str]
    seen: tuple[str, ...]
    table: EmbeddingTable
    _nearest_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __call__(self, entity: str) -> bool:
        if entity in self.seen:
            return entity in self.members
        hit = self._nearest_cache.get(entity)
        if hit is None:
            hit = self.table.nearest(entity, self.seen)
            self._nearest_cache[entity] = hit
        return hit in self.members


def _dedup_complements(seen: tuple[str, ...], member_sets: list[frozenset[str]]) -> list[frozenset[str]]:
    # keep the smaller side of each complement pair; ties by member tuple
    universe = frozenset(seen)

    def key(s: frozenset[str]) -> tuple:
        return (len(s), tuple(sorted(s)))

    kept: set[frozenset[str]] = set()
    for s in member_sets:
        if not s or s == universe:
            continue
        comp = universe - s
        rep = min(s, comp, key=key)
        kept.add(rep)
    return sorted(kept, key=key)


def generate_candidate_attributes(
    seen: list[str] | tuple[str, ...], emb: EmbeddingTable
) -> list[AttributeFn]:
    """Exhaustive candidate clusters over the seen entities.

    All nonempty proper subsets (complement-deduplicated) up to 16 seen
    entities; beyond that, the leaf sets of the internal nodes of an
    average-linkage dendrogram plus their complements.
    """
    seen = tuple(sorted(seen))
    n = len(seen)
    if n < 2:
        raise TooFewEntitiesError(f"need at least 2 seen entities, got {n}")
    if n <= POWERSET_LIMIT:
        sets = [
            frozenset(seen[i] for i in range(n) if mask >> i & 1)
            for mask in range(1, (1 << n) - 1)
        ]
    else:
        X = np.stack([emb[e] for e in seen])
        Z = linkage(X, method="average", metric="euclidean")
        leafsets: list[frozenset[str]] = [frozenset((e,)) for e in seen]
        sets = []
        for a, b, _, _ in Z:
            merged = leafsets[int(a)] | leafsets[int(b)]
            leafsets.append(merged)
            sets.append(merged)
            sets.append(frozenset(seen) - merged)
    member_sets = _dedup_complements(seen, sets)
    width = len(str(max(len(member_sets) - 1, 0)))
    return [
        AttributeFn(id=f"attr_{i:0{width}d}", members=m, seen=seen, table=emb)
        for i, m in enumerate(member_sets)
    ]


def predict_attribute(attr: AttributeFn, entity: str, emb: EmbeddingTable | None = None) -> bool:
    """Exact membership for seen entities, 1-NN membership otherwise."""
    if emb is not None and emb is not attr.table:
        if entity in attr.seen:
            return entity in attr.members
        return emb.nearest(entity, attr.seen) in attr.members
    return attr(entity)


def match_candidates(
    attrs: list[AttributeFn],
    truth: dict[str, dict[str, bool]],
) -> dict[str, tuple[AttributeFn, bool]]:
    """Per ground-truth attribute, the (candidate, polarity) pair that agrees
    most on the seen entities.  Complement-deduplication makes a candidate and
    its negation interchangeable, so both polarities compete."""
    out: dict[str, tuple[AttributeFn, bool]] = {}
    for name, bits in truth.items():
        best: tuple[float, int, bool] | None = None
        for i, cand in enumerate(attrs):
            agree = sum((e in cand.members) == bool(bits[e]) for e in cand.seen)
            for polarity, score in ((True, agree), (False, len(cand.seen) - agree)):
                key = (-score, i, not polarity)
                if best is None or key < best:
                    best = key
                    out[name] = (cand, polarity)
    return out


def attribute_accuracy(
    attrs: list[AttributeFn],
    truth: dict[str, dict[str, bool]],
    holdout: list[str] | tuple[str, ...],
    emb: EmbeddingTable,
) -> tuple[dict[str, float], float]:
    """1-NN generalization accuracy of the matched candidates on held-out entities."""
    matched = match_candidates(attrs, truth)
    per_attr: dict[str, float] = {}
    for name, (cand, polarity) in matched.items():
        hits = 0
        for e in holdout:
            pred = predict_attribute(cand, e, emb)
            if not polarity:
                pred = not pred
            hits += pred == bool(truth[name][e])
        per_attr[name] = hits / len(holdout) if holdout else 1.0
    mean = float(np.mean(list(per_attr.values()))) if per_attr else 1.0
    return per_attr, mean
