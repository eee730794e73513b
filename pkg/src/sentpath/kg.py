"""Commonsense knowledge graph: loading, traversal, and random-walk path sampling.

Entities and relation names are canonicalized to lowercase with internal
whitespace collapsed to underscores. Every edge is traversable in both
directions; reverse traversal renders the relation with a leading underscore
(``_usedfor``).
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

from .errors import EmptyInputError, EntityNotFoundError, ExhaustionError, ParseError

# Relation families that connect weakly associated concepts; paths using them
# are rejected by default.
BANNED_RELATIONS = frozenset(
    {
        "hascontext",
        "relatedto",
        "synonym",
        "antonym",
        "derivedfrom",
        "formof",
        "etymologicallyderivedfrom",
        "etymologicallyrelatedto",
    }
)

DEFAULT_MIN_HOPS = 2
DEFAULT_MAX_HOPS = 5

# Attempt budget multiplier: sampling gives up after ATTEMPT_FACTOR * count
# abandoned walks so pathological graphs terminate.
ATTEMPT_FACTOR = 100

_WS = re.compile(r"\s+")


def normalize(name: str) -> str:
    """Canonical surface form: lowercase, trimmed, whitespace -> underscore."""
    return _WS.sub("_", name.strip().lower())


@dataclass(frozen=True, order=True)
class Relation:
    """A relation occurrence; ``inverse`` marks tail-to-head traversal."""

    base: str
    inverse: bool = False

    def __post_init__(self):
        if not self.base or self.base.startswith("_"):
            raise ValueError(f"invalid relation base: {self.base!r}")

    def render(self) -> str:
        return f"_{self.base}" if self.inverse else self.base

    def flipped(self) -> "Relation":
        return Relation(self.base, not self.inverse)

    @classmethod
    def parse(cls, token: str) -> "Relation":
        if token.startswith("_"):
            return cls(token[1:], inverse=True)
        return cls(token)


@dataclass(frozen=True)
class Path:
    """Alternating entity/relation sequence: e1 r1 e2 ... r_n e_{n+1}."""

    entities: tuple[str, ...]
    relations: tuple[Relation, ...]

    def __post_init__(self):
        if len(self.entities) != len(self.relations) + 1:
            raise ValueError(
                f"path shape mismatch: {len(self.entities)} entities, "
                f"{len(self.relations)} relations"
            )

    @property
    def hops(self) -> int:
        return len(self.relations)

    def linearize(self) -> str:
        parts = [self.entities[0]]
        for rel, ent in zip(self.relations, self.entities[1:]):
            parts.append(rel.render())
            parts.append(ent)
        return " ".join(parts)

    @classmethod
    def from_linearized(cls, text: str) -> "Path":
        tokens = text.split()
        if not tokens or len(tokens) % 2 == 0:
            raise ValueError(f"not a linearized path: {text!r}")
        entities = tuple(tokens[0::2])
        relations = tuple(Relation.parse(tok) for tok in tokens[1::2])
        return cls(entities, relations)

    def __str__(self) -> str:
        return self.linearize()


@dataclass
class LoadReport:
    entities: int = 0
    edges: int = 0
    duplicates_dropped: int = 0


class KnowledgeGraph:
    """Immutable after construction; adjacency covers both edge directions."""

    def __init__(self, edges: Iterable[tuple[str, str, str]], extra_entities: Iterable[str] = ()):
        seen: set[tuple[str, str, str]] = set()
        self.edges: list[tuple[str, str, str]] = []
        self.entities: set[str] = set(extra_entities)
        adjacency: dict[str, list[tuple[Relation, str]]] = {}
        for head, rel, tail in edges:
            edge = (head, rel, tail)
            if edge in seen:
                continue
            seen.add(edge)
            self.edges.append(edge)
            self.entities.update((head, tail))
            adjacency.setdefault(head, []).append((Relation(rel), tail))
            adjacency.setdefault(tail, []).append((Relation(rel, inverse=True), head))
        for ent in self.entities:
            adjacency.setdefault(ent, [])
        # Deterministic traversal order: relation rendering, then neighbor id.
        self._adjacency = {
            ent: sorted(pairs, key=lambda p: (p[0].render(), p[1]))
            for ent, pairs in adjacency.items()
        }

    def neighbors(self, entity: str) -> list[tuple[Relation, str]]:
        if entity not in self._adjacency:
            raise EntityNotFoundError(f"unknown entity: {entity!r}")
        return list(self._adjacency[entity])

    def __contains__(self, entity: str) -> bool:
        return entity in self.entities


def load_kg(source: TextIO) -> tuple[KnowledgeGraph, LoadReport]:
    """Parse tab-separated ``head<TAB>relation<TAB>tail`` lines into a graph.

    Lines starting with '#' and blank lines are skipped. Duplicate edges
    (after normalization) are dropped and counted.
    """
    edges: list[tuple[str, str, str]] = []
    seen: set[tuple[str, str, str]] = set()
    report = LoadReport()
    for line_no, raw in enumerate(source, start=1):
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise ParseError(f"expected 3 tab-separated fields, got {len(fields)}", line_no)
        head, rel, tail = (normalize(f) for f in fields)
        if not head or not rel or not tail:
            raise ParseError("empty field after normalization", line_no)
        edge = (head, rel, tail)
        if edge in seen:
            report.duplicates_dropped += 1
            continue
        seen.add(edge)
        edges.append(edge)
    if not edges:
        raise EmptyInputError("no edges found in triple source")
    kg = KnowledgeGraph(edges)
    report.entities = len(kg.entities)
    report.edges = len(kg.edges)
    return kg, report


def neighbors(kg: KnowledgeGraph, entity: str) -> list[tuple[Relation, str]]:
    return kg.neighbors(entity)


@dataclass(frozen=True)
class PathCheck:
    ok: bool
    reason: str = ""

    def __bool__(self) -> bool:
        return self.ok


def is_valid_path(path: Path, banned: frozenset[str] = BANNED_RELATIONS) -> PathCheck:
    """Reject paths whose adjacent relations render identically or that use a
    banned relation. Total: never raises on a structurally well-formed path."""
    for rel in path.relations:
        if rel.base in banned:
            return PathCheck(False, f"banned-relation:{rel.base}")
    rendered = [rel.render() for rel in path.relations]
    for left, right in zip(rendered, rendered[1:]):
        if left == right:
            return PathCheck(False, f"adjacent-repeat:{left}")
    return PathCheck(True)


def _walk_once(
    kg: KnowledgeGraph,
    rng: random.Random,
    starts: Sequence[str],
    target_hops: int,
    banned: frozenset[str],
) -> Path | None:
    """One random walk attempt; None when it dead-ends before target length."""
    current = rng.choice(starts)
    entities = [current]
    relations: list[Relation] = []
    visited = {current}
    for _ in range(target_hops):
        options = [
            (rel, nxt)
            for rel, nxt in kg.neighbors(current)
            if nxt not in visited
            and rel.base not in banned
            and (not relations or rel.render() != relations[-1].render())
        ]
        if not options:
            return None
        rel, current = options[rng.randrange(len(options))]
        relations.append(rel)
        entities.append(current)
        visited.add(current)
    return Path(tuple(entities), tuple(relations))


def sample_paths(
    kg: KnowledgeGraph,
    count: int,
    min_hops: int = DEFAULT_MIN_HOPS,
    max_hops: int = DEFAULT_MAX_HOPS,
    seed: int = 0,
    banned: frozenset[str] = BANNED_RELATIONS,
) -> list[Path]:
    """Sample up to ``count`` distinct valid paths by seeded random walks.

    Each attempt picks a uniform start entity and a uniform target length in
    [min_hops, max_hops], then walks uniformly over edges that keep the path
    valid (no entity revisits, no adjacent relation repeat, no banned
    relation). Dead ends abandon the attempt. Raises ExhaustionError when the
    attempt budget produces nothing at all.
    """
    if not (1 <= min_hops <= max_hops):
        raise ValueError(f"need 1 <= min_hops <= max_hops, got {min_hops}..{max_hops}")
    if count < 1:
        raise ValueError("count must be positive")
    if not kg.entities:
        raise EmptyInputError("graph has no entities")

    rng = random.Random(seed)
    starts = sorted(kg.entities)
    paths: list[Path] = []
    seen: set[tuple] = set()
    budget = ATTEMPT_FACTOR * count
    for _ in range(budget):
        if len(paths) >= count:
            break
        target = rng.randint(min_hops, max_hops)
        path = _walk_once(kg, rng, starts, target, banned)
        if path is None:
            continue
        key = (path.entities, path.relations)
        if key in seen:
            continue
        seen.add(key)
        paths.append(path)
    if not paths:
        raise ExhaustionError(
            f"no valid path of length [{min_hops}, {max_hops}] found in {budget} attempts"
        )
    return paths


def sample_paths_sharded(
    kg: KnowledgeGraph,
    count: int,
    min_hops: int = DEFAULT_MIN_HOPS,
    max_hops: int = DEFAULT_MAX_HOPS,
    seed: int = 0,
    workers: int = 1,
    banned: frozenset[str] = BANNED_RELATIONS,
) -> list[Path]:
    """Partition ``count`` across workers with derived sub-seeds and merge.

    The merge is by worker index, then deduplicated, so the result depends
    only on (count, workers, seed) and never on scheduling.
    """
    from concurrent.futures import ThreadPoolExecutor

    from .util import derive_seed

    if workers <= 1:
        return sample_paths(kg, count, min_hops, max_hops, seed, banned)
    shares = [count // workers + (1 if i < count % workers else 0) for i in range(workers)]
    shares = [s for s in shares if s > 0]

    def job(idx_share: tuple[int, int]) -> list[Path]:
        idx, share = idx_share
        try:
            return sample_paths(
                kg, share, min_hops, max_hops, derive_seed(seed, "shard", idx), banned
            )
        except ExhaustionError:
            return []

    with ThreadPoolExecutor(max_workers=len(shares)) as pool:
        shards = list(pool.map(job, enumerate(shares)))
    merged: list[Path] = []
    seen: set[tuple] = set()
    for shard in shards:
        for path in shard:
            key = (path.entities, path.relations)
            if key not in seen:
                seen.add(key)
                merged.append(path)
    if not merged:
        raise ExhaustionError("no shard produced a valid path")
    return merged[:count]
