"""Conditional path generation: the generator contract, a count-based
reference model, teacher-forcing loss, and four decoding strategies.

Path tokens live at whole-entity / whole-relation granularity, so the first
decoding step chooses the first entity. Legal token kinds alternate: an
entity after start or a relation, a relation (or END) after an entity. On
top of kind legality, the next-token distribution zeroes out choices that
would break path validity: entities already used in the prefix and a
relation whose rendering repeats the previous one. END becomes legal once
the prefix holds at least ``min_hops`` hops.
"""

from __future__ import annotations

import json
import math
import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Protocol, Sequence, runtime_checkable

from .corpus import tokenize
from .errors import DataError, EmptyInputError
from .kg import Path, Relation
from .pairing import SentencePathPair
from .util import atomic_write_text

MODEL_FORMAT = "sentpath-model"
MODEL_VERSION = 1

START_TEXT = "<s>"
END_TEXT = "</s>"

PROB_FLOOR = 1e-8

DEFAULT_LAMBDAS = (0.6, 0.3, 0.09, 0.01)
DEFAULT_BETA = 1.0
DEFAULT_TOPK = 5
DEFAULT_NUCLEUS_P = 0.95
DEFAULT_DIVERSE_K = 5

ENTITY = "entity"
RELATION = "relation"
END_KIND = "end"


@dataclass(frozen=True)
class PathToken:
    text: str
    kind: str


END_TOKEN = PathToken(END_TEXT, END_KIND)


@dataclass(frozen=True)
class TokenDistribution:
    """Next-token probabilities over kind-legal tokens; empty when the prefix
    admits no continuation."""

    probs: dict[PathToken, float]

    def is_empty(self) -> bool:
        return not self.probs

    def total(self) -> float:
        return sum(self.probs.values())

    def ordered(self) -> list[tuple[PathToken, float]]:
        """Tokens by descending probability, lexicographic text on ties."""
        return sorted(self.probs.items(), key=lambda item: (-item[1], item[0].text))

    def argmax(self) -> PathToken:
        return self.ordered()[0][0]

    def top_k(self, k: int) -> "TokenDistribution":
        kept = dict(self.ordered()[:k])
        total = sum(kept.values())
        return TokenDistribution({tok: p / total for tok, p in kept.items()})

    def nucleus(self, p: float) -> "TokenDistribution":
        kept: dict[PathToken, float] = {}
        cumulative = 0.0
        for tok, prob in self.ordered():
            if cumulative < p:
                kept[tok] = prob
                cumulative += prob
            else:
                break
        total = sum(kept.values())
        return TokenDistribution({tok: pr / total for tok, pr in kept.items()})

    def sample(self, rng: random.Random) -> PathToken:
        pick = rng.random()
        cumulative = 0.0
        items = self.ordered()
        for tok, prob in items:
            cumulative += prob
            if pick < cumulative:
                return tok
        return items[-1][0]


@runtime_checkable
class PathGenerator(Protocol):
    """Deterministic next-token model conditioned on a sentence and a prefix."""

    min_hops: int

    def next(self, sentence: str, prefix: Sequence["PathToken"]) -> TokenDistribution: ...


def expected_kind(prefix: Sequence[PathToken]) -> str:
    """Kind the grammar expects next; raises on an ill-formed prefix."""
    for pos, tok in enumerate(prefix):
        want = ENTITY if pos % 2 == 0 else RELATION
        if tok.kind != want:
            raise ValueError(
                f"prefix violates alternation at position {pos}: expected {want}, got {tok.kind}"
            )
    return ENTITY if len(prefix) % 2 == 0 else RELATION


def _token_words(text: str) -> list[str]:
    return [w for w in text.lstrip("_").split("_") if w]


@dataclass
class ReferenceModel:
    """Interpolated trigram/bigram/unigram counts with a copy bias.

    Tables are keyed by token text; a single START sentinel pads each
    sequence and END closes it. ``copy_occurrences``/``copy_overlap`` record,
    per token, how many times it was trained on and the summed fraction of
    its words found in the paired sentence.
    """

    entities: tuple[str, ...]
    relations: tuple[str, ...]
    trigram: Counter = field(default_factory=Counter)
    bigram: Counter = field(default_factory=Counter)
    unigram: Counter = field(default_factory=Counter)
    copy_occurrences: Counter = field(default_factory=Counter)
    copy_overlap: dict[str, float] = field(default_factory=dict)
    lambdas: tuple[float, float, float, float] = DEFAULT_LAMBDAS
    beta: float = DEFAULT_BETA
    min_hops: int = 2

    def __post_init__(self):
        if len(self.lambdas) != 4 or any(l < 0 for l in self.lambdas):
            raise ValueError("lambdas must be 4 non-negative weights")
        if abs(sum(self.lambdas) - 1.0) > 1e-9:
            raise ValueError("lambdas must sum to 1")
        self.refresh()

    def refresh(self) -> None:
        """Recompute cached totals after the count tables change."""
        self._total_unigrams = sum(self.unigram.values())
        self._inventory = len(self.entities) + len(self.relations) + 1
        self._start_contexts = sum(
            count for (first, _), count in self.bigram.items() if first == START_TEXT
        )

    def _interpolated(self, context: tuple[str, ...], token: str) -> float:
        l3, l2, l1, l0 = self.lambdas
        prob = l0 / self._inventory
        if self._total_unigrams:
            prob += l1 * self.unigram[token] / self._total_unigrams
        if context:
            prev = context[-1]
            denom = self.bigram_context_count(prev)
            if denom:
                prob += l2 * self.bigram[(prev, token)] / denom
        if len(context) >= 2:
            ctx = (context[-2], context[-1])
            denom = self.trigram_context_count(ctx)
            if denom:
                prob += l3 * self.trigram[(*ctx, token)] / denom
        return prob

    def bigram_context_count(self, token: str) -> int:
        """Occurrences of ``token`` in a position followed by another token."""
        if token == START_TEXT:
            return self._start_contexts
        if token == END_TEXT:
            return 0
        return self.unigram[token]

    def trigram_context_count(self, ctx: tuple[str, str]) -> int:
        if ctx[1] == END_TEXT:
            return 0
        return self.bigram[ctx]

    def copy_affinity(self, token: str, sentence_tokens: set[str]) -> float:
        words = _token_words(token)
        if not words:
            return 0.0
        return sum(1 for w in words if w in sentence_tokens) / len(words)

    def mean_training_overlap(self, token: str) -> float:
        occ = self.copy_occurrences[token]
        return self.copy_overlap.get(token, 0.0) / occ if occ else 0.0

    def _legal_tokens(self, prefix: Sequence[PathToken]) -> list[PathToken]:
        kind = expected_kind(prefix)
        if kind == ENTITY:
            used = {tok.text for tok in prefix if tok.kind == ENTITY}
            return [PathToken(e, ENTITY) for e in self.entities if e not in used]
        last_rel = prefix[-2].text if len(prefix) >= 2 else None
        hops = (len(prefix) - 1) // 2
        tokens = [PathToken(r, RELATION) for r in self.relations if r != last_rel]
        if hops >= self.min_hops:
            tokens.append(END_TOKEN)
        return tokens

    def next(self, sentence: str, prefix: Sequence[PathToken]) -> TokenDistribution:
        """Interpolated counts times the copy bias, masked to tokens that keep
        the path valid, floored at PROB_FLOOR, and renormalized."""
        legal = self._legal_tokens(prefix)
        if not legal:
            return TokenDistribution({})
        sentence_tokens = set(tokenize(sentence))
        context = (START_TEXT, *[tok.text for tok in prefix])
        weights = {}
        for tok in legal:
            w = self._interpolated(context, tok.text)
            if self.beta:
                w *= math.exp(self.beta * self.copy_affinity(tok.text, sentence_tokens))
            weights[tok] = max(w, PROB_FLOOR)
        total = sum(weights.values())
        return TokenDistribution({tok: w / total for tok, w in weights.items()})

    # --- persistence ---

    def save(self, path: str) -> None:
        def encode(counter: Counter) -> dict[str, int]:
            return {" ".join(key): count for key, count in sorted(counter.items())}

        payload = {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "entities": list(self.entities),
            "relations": list(self.relations),
            "trigram": encode(self.trigram),
            "bigram": encode(self.bigram),
            "unigram": dict(sorted(self.unigram.items())),
            "copy_occurrences": dict(sorted(self.copy_occurrences.items())),
            "copy_overlap": dict(sorted(self.copy_overlap.items())),
            "lambdas": list(self.lambdas),
            "beta": self.beta,
            "min_hops": self.min_hops,
        }
        atomic_write_text(path, json.dumps(payload, ensure_ascii=False))

    @classmethod
    def load(cls, path: str) -> "ReferenceModel":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        if payload.get("format") != MODEL_FORMAT:
            raise DataError(f"{path}: not a {MODEL_FORMAT} file")
        if payload.get("version") != MODEL_VERSION:
            raise DataError(f"{path}: unsupported model version {payload.get('version')}")

        def decode(table: dict[str, int]) -> Counter:
            return Counter({tuple(key.split(" ")): count for key, count in table.items()})

        return cls(
            entities=tuple(payload["entities"]),
            relations=tuple(payload["relations"]),
            trigram=decode(payload["trigram"]),
            bigram=decode(payload["bigram"]),
            unigram=Counter(payload["unigram"]),
            copy_occurrences=Counter(payload["copy_occurrences"]),
            copy_overlap=dict(payload["copy_overlap"]),
            lambdas=tuple(payload["lambdas"]),
            beta=payload["beta"],
            min_hops=payload["min_hops"],
        )


def path_token_texts(path: Path) -> list[str]:
    texts = [path.entities[0]]
    for rel, ent in zip(path.relations, path.entities[1:]):
        texts.append(rel.render())
        texts.append(ent)
    return texts


def path_tokens(path: Path) -> list[PathToken]:
    return [
        PathToken(text, ENTITY if i % 2 == 0 else RELATION)
        for i, text in enumerate(path_token_texts(path))
    ]


def train_reference(
    pairs: Sequence[SentencePathPair],
    lambdas: tuple[float, float, float, float] = DEFAULT_LAMBDAS,
    beta: float = DEFAULT_BETA,
    min_hops: int = 2,
) -> ReferenceModel:
    """Accumulate n-gram and copy statistics from the paired dataset.

    Masked pairs contribute their masked sentence as the conditioning
    context, matching how they are meant to be consumed downstream.
    """
    if not pairs:
        raise ValueError("training dataset must be non-empty")
    entities: set[str] = set()
    relations: set[str] = set()
    for pair in pairs:
        entities.update(pair.path.entities)
        relations.update(rel.render() for rel in pair.path.relations)
    if START_TEXT in entities | relations or END_TEXT in entities | relations:
        raise DataError("vocabulary collides with the reserved sentinel tokens")

    model = ReferenceModel(
        entities=tuple(sorted(entities)),
        relations=tuple(sorted(relations)),
        lambdas=lambdas,
        beta=beta,
        min_hops=min_hops,
    )
    for pair in pairs:
        sequence = [START_TEXT, *path_token_texts(pair.path), END_TEXT]
        context = pair.masked_sentence if pair.masked_sentence is not None else pair.sentence.text
        sentence_tokens = set(tokenize(context))
        for i in range(1, len(sequence)):
            token = sequence[i]
            model.unigram[token] += 1
            model.bigram[(sequence[i - 1], token)] += 1
            if i >= 2:
                model.trigram[(sequence[i - 2], sequence[i - 1], token)] += 1
            model.copy_occurrences[token] += 1
            overlap = model.copy_affinity(token, sentence_tokens)
            model.copy_overlap[token] = model.copy_overlap.get(token, 0.0) + overlap
    model.refresh()
    return model


def next_token_dist(
    model: PathGenerator, sentence: str, prefix: Sequence[PathToken]
) -> TokenDistribution:
    return model.next(sentence, prefix)


def teacher_forcing_loss(model: PathGenerator, sentence: str, path: Path) -> float:
    """Exact negative log-likelihood (natural log) of the path, END included.

    Gold tokens missing from a step's distribution (out of vocabulary or
    masked out) are charged the smoothing floor.
    """
    tokens = path_tokens(path) + [END_TOKEN]
    loss = 0.0
    prefix: list[PathToken] = []
    for token in tokens:
        dist = model.next(sentence, prefix)
        prob = dist.probs.get(token, PROB_FLOOR)
        loss -= math.log(prob)
        if token != END_TOKEN:
            prefix.append(token)
    return loss


@dataclass
class DecodeResult:
    path: Path
    truncated: bool = False


def _tokens_to_path(tokens: list[PathToken]) -> Path:
    # Drop a dangling relation so the result is structurally well-formed.
    if tokens and tokens[-1].kind == RELATION:
        tokens = tokens[:-1]
    if not tokens:
        raise EmptyInputError("decoding produced no tokens")
    entities = tuple(tok.text for tok in tokens[0::2])
    relations = tuple(Relation.parse(tok.text) for tok in tokens[1::2])
    return Path(entities, relations)


def _default_max_hops(model: PathGenerator) -> int:
    return 2 * model.min_hops + 1


def decode_greedy(
    model: PathGenerator,
    sentence: str,
    max_hops: int | None = None,
    forced_first: PathToken | None = None,
) -> DecodeResult:
    """Argmax decoding (lexicographic tie-break); stops at END or max_hops."""
    if max_hops is None:
        max_hops = _default_max_hops(model)
    tokens: list[PathToken] = []
    if forced_first is not None:
        tokens.append(forced_first)
    while True:
        if len(tokens) % 2 == 1 and len(tokens) // 2 >= max_hops:
            return DecodeResult(_tokens_to_path(tokens))
        dist = model.next(sentence, tokens)
        if dist.is_empty():
            return DecodeResult(_tokens_to_path(tokens), truncated=True)
        token = dist.argmax()
        if token == END_TOKEN:
            return DecodeResult(_tokens_to_path(tokens))
        tokens.append(token)


def _decode_sampling(
    model: PathGenerator,
    sentence: str,
    restrict,
    n_samples: int,
    seed: int,
    max_hops: int | None,
) -> list[Path]:
    if max_hops is None:
        max_hops = _default_max_hops(model)
    rng = random.Random(seed)
    paths = []
    for _ in range(n_samples):
        tokens: list[PathToken] = []
        while True:
            if len(tokens) % 2 == 1 and len(tokens) // 2 >= max_hops:
                break
            dist = model.next(sentence, tokens)
            if dist.is_empty():
                break
            token = restrict(dist).sample(rng)
            if token == END_TOKEN:
                break
            tokens.append(token)
        paths.append(_tokens_to_path(tokens))
    return paths


def decode_topk(
    model: PathGenerator,
    sentence: str,
    k: int = DEFAULT_TOPK,
    n_samples: int = 1,
    seed: int = 0,
    max_hops: int | None = None,
) -> list[Path]:
    if k < 1:
        raise ValueError("k must be >= 1")
    return _decode_sampling(model, sentence, lambda d: d.top_k(k), n_samples, seed, max_hops)


def decode_nucleus(
    model: PathGenerator,
    sentence: str,
    p: float = DEFAULT_NUCLEUS_P,
    n_samples: int = 1,
    seed: int = 0,
    max_hops: int | None = None,
) -> list[Path]:
    if not 0.0 < p <= 1.0:
        raise ValueError("p must lie in (0, 1]")
    return _decode_sampling(model, sentence, lambda d: d.nucleus(p), n_samples, seed, max_hops)


def decode_diverse_path(
    model: PathGenerator,
    sentence: str,
    k: int = DEFAULT_DIVERSE_K,
    max_hops: int | None = None,
) -> list[Path]:
    """The k most probable first tokens, each completed greedily.

    Returned in first-token probability order; fewer than k paths when the
    legal first-token support is smaller.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    first_dist = model.next(sentence, [])
    if first_dist.is_empty():
        return []
    firsts = [tok for tok, _ in first_dist.ordered()[:k]]
    return [
        decode_greedy(model, sentence, max_hops=max_hops, forced_first=first).path
        for first in firsts
    ]
