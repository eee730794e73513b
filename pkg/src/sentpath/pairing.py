"""Build the sentence/path paired dataset: query extraction, retrieval,
ranking, top-K' retention, entity masking, and dataset-quality audits."""

from __future__ import annotations

import random
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

from .corpus import (
    CorpusIndex,
    Sentence,
    entity_words,
    find_phrase,
    phrase_match,
    tokenize,
    tokenize_with_spans,
)
from .embed import Embedder, cosine
from .errors import DataError
from .kg import Path, Relation
from .util import derive_seed

MASK_TOKEN = "[MASK]"
DEFAULT_TOP_K = 10
DEFAULT_MASK_PROB = 0.33
TEMPLATE_CHOICES = ("q1", "q2", "q1+q2")


@dataclass(frozen=True)
class Query:
    """A retrieval query extracted from a path.

    kind "q1" carries two skip-one entities plus the relation between or
    after them; kind "q2" carries one adjacent entity pair and no relation.
    """

    kind: str
    entities: tuple[str, str]
    relation: Relation | None = None

    def __post_init__(self):
        if self.kind == "q1" and self.relation is None:
            raise ValueError("q1 queries carry exactly one relation")
        if self.kind == "q2" and self.relation is not None:
            raise ValueError("q2 queries carry no relation")

    def text(self) -> str:
        """Embedding text: entity words, plus the relation base for q1."""
        first, second = self.entities
        if self.relation is not None:
            return f"{first} {self.relation.base} {second}"
        return f"{first} {second}"


def extract_q1(path: Path) -> list[Query]:
    """Skip-one triples: (e_i, r_i, e_{i+2}) and (e_i, r_{i+1}, e_{i+2})."""
    queries = []
    for i in range(path.hops - 1):
        pair = (path.entities[i], path.entities[i + 2])
        queries.append(Query("q1", pair, path.relations[i]))
        queries.append(Query("q1", pair, path.relations[i + 1]))
    return queries


def extract_q2(path: Path) -> list[Query]:
    """Adjacent entity pairs, one query per hop."""
    return [
        Query("q2", (path.entities[i], path.entities[i + 1]))
        for i in range(path.hops)
    ]


def extract_queries(path: Path, templates: str = "q1+q2") -> list[Query]:
    if templates not in TEMPLATE_CHOICES:
        raise ValueError(f"templates must be one of {TEMPLATE_CHOICES}, got {templates!r}")
    queries: list[Query] = []
    if "q1" in templates:
        queries.extend(extract_q1(path))
    if "q2" in templates:
        queries.extend(extract_q2(path))
    return queries


def rank_candidates(
    index: CorpusIndex,
    embedder: Embedder,
    query: Query,
    cap: int = 500,
) -> list[tuple[int, float]]:
    """Retrieve sentences containing both query entities and rank by cosine
    similarity to the query text; ties break toward the lower sentence id."""
    from .corpus import search_all_entities

    candidate_ids = search_all_entities(index, list(query.entities), cap)
    if not candidate_ids:
        return []
    query_vec = embedder.embed(query.text())
    scored = [
        (sid, cosine(embedder.embed(index.sentence(sid).text), query_vec))
        for sid in candidate_ids
    ]
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return scored


@dataclass
class SentencePathPair:
    """One aligned (sentence, full path) training example.

    ``query`` holds full provenance when the pair was built in-process; pairs
    round-tripped through JSONL retain only ``query_kind``.
    """

    sentence: Sentence
    path: Path
    similarity: float
    query_kind: str
    query: Query | None = None
    masked_sentence: str | None = None
    masked_entity: str | None = None

    def to_record(self) -> dict:
        return {
            "sentence": self.sentence.text,
            "masked_sentence": self.masked_sentence,
            "masked_entity": self.masked_entity,
            "path": self.path.linearize(),
            "path_entities": list(self.path.entities),
            "path_relations": [rel.render() for rel in self.path.relations],
            "similarity": self.similarity,
            "query_kind": self.query_kind,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "SentencePathPair":
        return cls(
            sentence=Sentence.make(0, rec["sentence"]),
            path=Path.from_linearized(rec["path"]),
            similarity=float(rec.get("similarity", 0.0)),
            query_kind=rec.get("query_kind", "q2"),
            masked_sentence=rec.get("masked_sentence"),
            masked_entity=rec.get("masked_entity"),
        )


@dataclass
class PairingReport:
    paths_in: int = 0
    paths_skipped: int = 0
    pairs: int = 0
    masked: int = 0


def mask_first_occurrence(sentence: Sentence, entity: str) -> str | None:
    """Replace the entity's first token-level phrase occurrence with [MASK],
    preserving all surrounding text. None when the entity does not occur."""
    start_tok = find_phrase(sentence, entity)
    if start_tok is None:
        return None
    spans = tokenize_with_spans(sentence.text)
    n_words = len(entity_words(entity))
    start = spans[start_tok][1]
    end = spans[start_tok + n_words - 1][2]
    return sentence.text[:start] + MASK_TOKEN + sentence.text[end:]


def _pairs_for_path(
    path: Path,
    index: CorpusIndex,
    embedder: Embedder,
    top_k: int,
    mask_prob: float,
    templates: str,
    cap: int,
    rng: random.Random,
) -> list[SentencePathPair]:
    best: dict[int, tuple[float, Query]] = {}
    for query in extract_queries(path, templates):
        for sid, sim in rank_candidates(index, embedder, query, cap):
            if sid not in best or sim > best[sid][0]:
                best[sid] = (sim, query)
    ranked = sorted(best.items(), key=lambda item: (-item[1][0], item[0]))[:top_k]
    pairs = []
    for sid, (sim, query) in ranked:
        sentence = index.sentence(sid)
        pair = SentencePathPair(sentence, path, sim, query.kind, query)
        if rng.random() < mask_prob:
            occurring = [e for e in path.entities if phrase_match(sentence, e)]
            if occurring:
                entity = occurring[rng.randrange(len(occurring))]
                pair.masked_entity = entity
                pair.masked_sentence = mask_first_occurrence(sentence, entity)
        pairs.append(pair)
    return pairs


def build_pairs(
    paths: Sequence[Path],
    index: CorpusIndex,
    embedder: Embedder,
    top_k: int = DEFAULT_TOP_K,
    mask_prob: float = DEFAULT_MASK_PROB,
    templates: str = "q1+q2",
    seed: int = 0,
    cap: int = 500,
    workers: int = 1,
) -> tuple[list[SentencePathPair], PairingReport]:
    """For each path, union the ranked candidates over all queries, keep the
    top-K' distinct sentences by similarity, and mask one co-occurring entity
    with probability ``mask_prob``.

    The per-path RNG is derived from (seed, path index), so the output is
    identical no matter how paths are partitioned across workers.
    """
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    if not 0.0 <= mask_prob <= 1.0:
        raise ValueError("mask_prob must lie in [0, 1]")

    def job(idx_path: tuple[int, Path]) -> list[SentencePathPair]:
        idx, path = idx_path
        rng = random.Random(derive_seed(seed, "path", idx))
        return _pairs_for_path(path, index, embedder, top_k, mask_prob, templates, cap, rng)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_path = list(pool.map(job, enumerate(paths)))
    else:
        per_path = [job(item) for item in enumerate(paths)]

    report = PairingReport(paths_in=len(paths))
    pairs: list[SentencePathPair] = []
    for chunk in per_path:
        if not chunk:
            report.paths_skipped += 1
            continue
        pairs.extend(chunk)
        report.masked += sum(1 for p in chunk if p.masked_sentence is not None)
    report.pairs = len(pairs)
    return pairs, report


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def ngram_leakage(questions: Sequence[str], train_sentences: Sequence[str], n: int) -> float:
    """Mean over questions of the best train-sentence n-gram overlap fraction.

    Overlap is multiset intersection size over the question's n-gram count;
    questions shorter than n tokens contribute 0.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not questions:
        raise ValueError("questions must be non-empty")
    train_grams = [_ngrams(tokenize(s), n) for s in train_sentences]
    total = 0.0
    for question in questions:
        q_grams = _ngrams(tokenize(question), n)
        q_count = sum(q_grams.values())
        if q_count == 0:
            continue
        best = 0.0
        for grams in train_grams:
            matching = sum((q_grams & grams).values())
            if matching > best:
                best = matching
        total += best / q_count
    return total / len(questions)


def path_embedding_text(path: Path) -> str:
    """Linearization for embedding: inverse markers stripped; the embedder
    handles the underscore-to-space step."""
    parts = [path.entities[0]]
    for rel, ent in zip(path.relations, path.entities[1:]):
        parts.append(rel.base)
        parts.append(ent)
    return " ".join(parts)


def pair_similarity_audit(pairs: Iterable[SentencePathPair], embedder: Embedder) -> float:
    """Mean cosine similarity between each pair's full path and sentence."""
    sims = [
        cosine(embedder.embed(path_embedding_text(p.path)), embedder.embed(p.sentence.text))
        for p in pairs
    ]
    if not sims:
        raise ValueError("pairs must be non-empty")
    return sum(sims) / len(sims)
