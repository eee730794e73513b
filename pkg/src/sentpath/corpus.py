"""Sentence corpus ingestion and an inverted index for all-terms phrase queries.

Tokenization is deliberately dumb and deterministic: split on whitespace,
strip leading/trailing punctuation, lowercase. No stemming, no lemmatization,
so "violins" never matches "violin".
"""

from __future__ import annotations

import json
import logging
import re
import unicodedata
from dataclasses import dataclass
from typing import Iterable, TextIO

from .errors import DataError, EmptyInputError, ParseError
from .util import atomic_write_text

logger = logging.getLogger(__name__)

INDEX_FORMAT = "sentpath-index"
INDEX_VERSION = 1

# Default number of candidate sentences retained per query before ranking.
DEFAULT_SEARCH_CAP = 500

_CHUNK = re.compile(r"\S+")


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def tokenize_with_spans(text: str) -> list[tuple[str, int, int]]:
    """Lowercased tokens with their [start, end) character spans in ``text``.

    A token is a whitespace-delimited chunk with punctuation stripped from
    both ends; chunks that are all punctuation vanish.
    """
    out = []
    for match in _CHUNK.finditer(text):
        start, end = match.start(), match.end()
        while start < end and _is_punct(text[start]):
            start += 1
        while end > start and _is_punct(text[end - 1]):
            end -= 1
        if end > start:
            out.append((text[start:end].lower(), start, end))
    return out


def tokenize(text: str) -> list[str]:
    return [tok for tok, _, _ in tokenize_with_spans(text)]


@dataclass
class Sentence:
    id: int
    text: str
    tokens: list[str]

    @classmethod
    def make(cls, sid: int, text: str) -> "Sentence":
        return cls(sid, text, tokenize(text))


def entity_words(entity: str) -> list[str]:
    """An entity id split into its surface words (underscores are separators)."""
    return [w for w in entity.lower().split("_") if w]


def phrase_match(sentence: Sentence, entity: str) -> bool:
    """True iff the entity's word sequence occurs contiguously in the tokens."""
    return find_phrase(sentence, entity) is not None


def find_phrase(sentence: Sentence, entity: str) -> int | None:
    """Index of the first contiguous token-level occurrence, or None."""
    words = entity_words(entity)
    if not words:
        return None
    toks = sentence.tokens
    n = len(words)
    for i in range(len(toks) - n + 1):
        if toks[i : i + n] == words:
            return i
    return None


class CorpusIndex:
    """Inverted index: term -> sorted sentence ids. Immutable after build."""

    def __init__(self, sentences: list[Sentence]):
        self.sentences = sentences
        postings: dict[str, list[int]] = {}
        for sent in sentences:
            for term in sorted(set(sent.tokens)):
                postings.setdefault(term, []).append(sent.id)
        self.postings = postings

    @property
    def sentence_count(self) -> int:
        return len(self.sentences)

    @property
    def term_count(self) -> int:
        return len(self.postings)

    def sentence(self, sid: int) -> Sentence:
        return self.sentences[sid]

    def document_frequency(self, term: str) -> int:
        return len(self.postings.get(term, ()))

    def save(self, path: str) -> None:
        payload = {
            "format": INDEX_FORMAT,
            "version": INDEX_VERSION,
            "sentences": [s.text for s in self.sentences],
        }
        atomic_write_text(path, json.dumps(payload, ensure_ascii=False))

    @classmethod
    def load(cls, path: str) -> "CorpusIndex":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        if payload.get("format") != INDEX_FORMAT:
            raise DataError(f"{path}: not a {INDEX_FORMAT} file")
        if payload.get("version") != INDEX_VERSION:
            raise DataError(f"{path}: unsupported index version {payload.get('version')}")
        sentences = [Sentence.make(i, text) for i, text in enumerate(payload["sentences"])]
        return cls(sentences)


def read_sentences(source: TextIO, fmt: str = "text") -> list[Sentence]:
    """Read sentences from plain text (one per line) or JSONL {"id", "text"}.

    JSONL ids must be unique and dense from 0; text lines are numbered in
    order. Blank lines are skipped in text mode.
    """
    if fmt == "text":
        sentences = []
        try:
            for line in source:
                line = line.strip()
                if line:
                    sentences.append(Sentence.make(len(sentences), line))
        except UnicodeDecodeError as exc:
            raise DataError(f"undecodable input at byte {exc.start}") from exc
        return sentences
    if fmt == "jsonl":
        by_id: dict[int, str] = {}
        for line_no, line in enumerate(source, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", line_no) from exc
            if not isinstance(rec, dict) or "id" not in rec or "text" not in rec:
                raise ParseError('expected an object with "id" and "text"', line_no)
            sid = rec["id"]
            if sid in by_id:
                raise ParseError(f"duplicate sentence id {sid}", line_no)
            by_id[sid] = rec["text"]
        if sorted(by_id) != list(range(len(by_id))):
            raise DataError("sentence ids must be dense from 0")
        return [Sentence.make(i, by_id[i]) for i in range(len(by_id))]
    raise ValueError(f"unknown corpus format: {fmt!r}")


def build_index(sentences: Iterable[Sentence] | Iterable[str]) -> CorpusIndex:
    materialized: list[Sentence] = []
    for item in sentences:
        if isinstance(item, Sentence):
            materialized.append(item)
        else:
            materialized.append(Sentence.make(len(materialized), item))
    if not materialized:
        logger.warning("building an index over an empty corpus")
    return CorpusIndex(materialized)


def _intersect_sorted(a: list[int], b: list[int]) -> list[int]:
    out, i, j = [], 0, 0
    while i < len(a) and j < len(b):
        if a[i] == b[j]:
            out.append(a[i])
            i += 1
            j += 1
        elif a[i] < b[j]:
            i += 1
        else:
            j += 1
    return out


def search_all_entities(
    index: CorpusIndex, entities: list[str], cap: int = DEFAULT_SEARCH_CAP
) -> list[int]:
    """Ids of sentences phrase-matching every entity, ascending, cut at ``cap``.

    Prefilter: intersect the postings of each entity's rarest word, then
    verify full phrases. Any entity word missing from the postings makes the
    result empty (not an error).
    """
    if not entities:
        raise ValueError("entities must be non-empty")
    if cap < 1:
        raise ValueError("cap must be positive")
    rare_postings: list[list[int]] = []
    for entity in entities:
        words = entity_words(entity)
        if not words:
            return []
        rarest = min(words, key=lambda w: index.document_frequency(w))
        posting = index.postings.get(rarest)
        if not posting:
            return []
        rare_postings.append(posting)
    rare_postings.sort(key=len)
    candidates = rare_postings[0]
    for posting in rare_postings[1:]:
        candidates = _intersect_sorted(candidates, posting)
        if not candidates:
            return []
    hits = []
    for sid in candidates:
        sent = index.sentence(sid)
        if all(phrase_match(sent, entity) for entity in entities):
            hits.append(sid)
            if len(hits) >= cap:
                break
    return hits
