"""Evaluation of generated paths (relevance, diversity, novelty) and of
open-ended QA answer lists (hits@K, recall@K)."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .kg import Path


@dataclass(frozen=True, order=True)
class CanonicalTriple:
    """Direction-normalized edge: an inverse hop (e, _r, e') stores (e', r, e)."""

    head: str
    relation: str
    tail: str


def path_triples(path: Path) -> list[CanonicalTriple]:
    triples = []
    for i, rel in enumerate(path.relations):
        head, tail = path.entities[i], path.entities[i + 1]
        if rel.inverse:
            head, tail = tail, head
        triples.append(CanonicalTriple(head, rel.base, tail))
    return triples


def relevance_bleu(generated: Path, reference: Path) -> float:
    """BLEU with canonical triples as unigrams: clipped precision times the
    brevity penalty min(1, exp(1 - r/c))."""
    gen = Counter(path_triples(generated))
    ref = Counter(path_triples(reference))
    c = sum(gen.values())
    r = sum(ref.values())
    if c == 0:
        return 0.0
    clipped = sum((gen & ref).values())
    precision = clipped / c
    brevity = min(1.0, math.exp(1.0 - r / c))
    return precision * brevity


def diversity(paths: Sequence[Path]) -> float:
    """Mean over unordered path pairs of one minus the entity-set IoU.

    Needs at least two paths; a single path has no pairwise diversity.
    """
    if len(paths) < 2:
        raise ValueError("diversity needs at least 2 paths")
    entity_sets = [set(p.entities) for p in paths]
    total = 0.0
    pairs = 0
    for i in range(len(entity_sets)):
        for j in range(i + 1, len(entity_sets)):
            union = entity_sets[i] | entity_sets[j]
            inter = entity_sets[i] & entity_sets[j]
            total += 1.0 - (len(inter) / len(union) if union else 1.0)
            pairs += 1
    return total / pairs


def novelty(path: Path, training_entities: set[str]) -> float:
    """Fraction of the path's entities absent from every training path."""
    ents = path.entities
    return sum(1 for e in ents if e not in training_entities) / len(ents)


def hits_at_k(predicted: Sequence[str], truth: Iterable[str], k: int) -> int:
    """1 iff any of the top-k predictions is a ground-truth answer."""
    truth_set = set(truth)
    if k < 1:
        raise ValueError("k must be >= 1")
    if not truth_set:
        raise ValueError("truth set must be non-empty")
    return int(any(answer in truth_set for answer in predicted[:k]))


def recall_at_k(predicted: Sequence[str], truth: Iterable[str], k: int) -> float:
    """Fraction of ground-truth answers found among the top-k predictions."""
    truth_set = set(truth)
    if k < 1:
        raise ValueError("k must be >= 1")
    if not truth_set:
        raise ValueError("truth set must be non-empty")
    top = set(predicted[:k])
    return sum(1 for answer in truth_set if answer in top) / len(truth_set)


@dataclass
class EvalReport:
    """Aggregate metrics with per-sample breakdowns; each aggregate is the
    arithmetic mean of its per-sample values (None when undefined)."""

    relevance: float | None = None
    diversity: float | None = None
    novelty: float | None = None
    per_sample: dict[str, list[float]] = field(default_factory=dict)

    @staticmethod
    def _mean(values: list[float]) -> float | None:
        return sum(values) / len(values) if values else None

    @classmethod
    def from_samples(
        cls,
        relevance_values: list[float],
        diversity_values: list[float],
        novelty_values: list[float],
    ) -> "EvalReport":
        return cls(
            relevance=cls._mean(relevance_values),
            diversity=cls._mean(diversity_values),
            novelty=cls._mean(novelty_values),
            per_sample={
                "relevance": relevance_values,
                "diversity": diversity_values,
                "novelty": novelty_values,
            },
        )
