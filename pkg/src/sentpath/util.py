"""Small shared helpers: seed derivation, atomic writes, JSONL IO."""

from __future__ import annotations

import hashlib
import json
import os
from typing import Any, Iterable, Iterator

from .errors import ParseError

_SEED_MASK = (1 << 63) - 1


def derive_seed(seed: int, *parts: object) -> int:
    """Derive a named sub-seed from a master seed.

    Uses blake2b over a textual key so the result is stable across
    processes and platforms (unlike ``hash()``).
    """
    key = ":".join([str(seed), *(str(p) for p in parts)])
    digest = hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") & _SEED_MASK


def atomic_write_text(path: str, text: str) -> None:
    """Write a file via a temp sibling + rename so failures leave no partial output."""
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def write_jsonl(path: str, records: Iterable[dict]) -> int:
    lines = [json.dumps(rec, ensure_ascii=False) for rec in records]
    atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))
    return len(lines)


def read_jsonl(path: str) -> Iterator[dict]:
    """Yield one decoded object per non-blank line; bad JSON carries the line number."""
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", line_no) from exc


def dump_json(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
