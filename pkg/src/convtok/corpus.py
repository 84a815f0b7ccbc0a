"""Annotated conversation data model and its JSONL serialization.

A corpus file holds one conversation per line::

    {"id": "c1", "segments": [{"start": 0.0, "end": 2.5, "speaker": "A",
      "words": ["my", "name", "is", "alexa"], "entities": [[3, 3]]}]}

Entity spans are inclusive word-index pairs into the segment's ``words``.
"""

from __future__ import annotations

import enum
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Union


class TaskToken(enum.Enum):
    """Reserved symbols inserted inline into transcripts."""

    SC = "[SC]"
    EP = "[EP]"
    NE_OPEN = "[NE]"
    NE_CLOSE = "[/NE]"

    @property
    def surface(self) -> str:
        return self.value

    @property
    def kind(self) -> str:
        return self.name

    @classmethod
    def from_kind(cls, kind: str) -> "TaskToken":
        try:
            return cls[kind]
        except KeyError:
            raise ValueError(f"unknown task token kind {kind!r}") from None

    def __repr__(self) -> str:
        return self.value


RESERVED_SURFACES = frozenset(t.surface for t in TaskToken)

# A transcript item is either a plain word or a task token.
Item = Union[str, TaskToken]


class CorpusError(ValueError):
    """Malformed corpus content. ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def is_token(item: Item) -> bool:
    return isinstance(item, TaskToken)


def check_word(word: object) -> str:
    if not isinstance(word, str) or not word:
        raise ValueError(f"word must be a non-empty string, got {word!r}")
    if word in RESERVED_SURFACES:
        raise ValueError(f"word {word!r} collides with a reserved task token")
    if any(ch.isspace() for ch in word):
        raise ValueError(f"word {word!r} contains whitespace")
    return word


@dataclass(frozen=True)
class EntitySpan:
    start_word_index: int
    end_word_index: int

    def __post_init__(self):
        if not (isinstance(self.start_word_index, int) and isinstance(self.end_word_index, int)):
            raise ValueError("entity span indices must be integers")
        if not 0 <= self.start_word_index <= self.end_word_index:
            raise ValueError(
                f"entity span ({self.start_word_index}, {self.end_word_index}) is not ordered"
            )

    def __len__(self) -> int:
        return self.end_word_index - self.start_word_index + 1


@dataclass(frozen=True)
class Segment:
    start: float
    end: float
    speaker: str
    words: tuple[str, ...]
    entities: tuple[EntitySpan, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "words", tuple(self.words))
        object.__setattr__(self, "entities", tuple(self.entities))
        if self.start < 0:
            raise ValueError(f"start must be non-negative, got {self.start}")
        if not self.end > self.start:
            raise ValueError(f"end ({self.end}) must exceed start ({self.start})")
        if not isinstance(self.speaker, str):
            raise ValueError("speaker must be a string")
        for w in self.words:
            check_word(w)
        prev_end = -1
        for span in self.entities:
            if span.end_word_index >= len(self.words):
                raise ValueError(
                    f"entity span end_word_index {span.end_word_index} out of range "
                    f"for {len(self.words)} words"
                )
            if span.start_word_index <= prev_end:
                raise ValueError("entity spans must be sorted, non-overlapping and non-nested")
            prev_end = span.end_word_index

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class Conversation:
    id: str
    segments: tuple[Segment, ...]

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if not isinstance(self.id, str):
            raise ValueError("id must be a string")
        if not self.segments:
            raise ValueError("conversation needs at least one segment")
        for a, b in zip(self.segments, self.segments[1:]):
            if b.start < a.start:
                raise ValueError("segments must be sorted by start time")


def conversation_to_dict(conv: Conversation) -> dict:
    return {
        "id": conv.id,
        "segments": [
            {
                "start": seg.start,
                "end": seg.end,
                "speaker": seg.speaker,
                "words": list(seg.words),
                "entities": [[e.start_word_index, e.end_word_index] for e in seg.entities],
            }
            for seg in conv.segments
        ],
    }


def _num(value, field: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValueError(f"{field} must be a number, got {value!r}")
    return float(value)


def conversation_from_dict(obj: dict) -> Conversation:
    """Build and validate a conversation; raises ValueError naming the failing field."""
    if not isinstance(obj, dict):
        raise ValueError("conversation must be a JSON object")
    cid = obj.get("id")
    if not isinstance(cid, str):
        raise ValueError("field 'id' missing or not a string")
    raw_segments = obj.get("segments")
    if not isinstance(raw_segments, list):
        raise ValueError(f"conversation {cid!r}: field 'segments' missing or not a list")
    segments = []
    for i, raw in enumerate(raw_segments):
        where = f"conversation {cid!r}: segments[{i}]"
        try:
            if not isinstance(raw, dict):
                raise ValueError("segment must be an object")
            missing = {"start", "end", "speaker", "words"} - raw.keys()
            if missing:
                raise ValueError(f"missing field(s) {sorted(missing)}")
            words = raw["words"]
            if not isinstance(words, list):
                raise ValueError("'words' must be a list")
            spans = []
            for pair in raw.get("entities", []):
                if not (isinstance(pair, list) and len(pair) == 2):
                    raise ValueError(f"'entities' item {pair!r} must be a [start, end] pair")
                spans.append(EntitySpan(pair[0], pair[1]))
            segments.append(
                Segment(
                    start=_num(raw["start"], "start"),
                    end=_num(raw["end"], "end"),
                    speaker=raw["speaker"],
                    words=tuple(words),
                    entities=tuple(spans),
                )
            )
        except ValueError as exc:
            raise ValueError(f"{where}: {exc}") from None
    try:
        return Conversation(cid, tuple(segments))
    except ValueError as exc:
        raise ValueError(f"conversation {cid!r}: {exc}") from None


def read_jsonl(path: str | os.PathLike) -> Iterable[tuple[int, object]]:
    """Yield ``(line_number, parsed_object)`` for each non-blank line."""
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"invalid JSON: {exc.msg}", lineno) from None


def write_jsonl(records: Iterable[dict], path: str | os.PathLike) -> int:
    """Write records atomically (temp file + rename). Returns the record count."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    n = 0
    try:
        with open(tmp, "w", encoding="utf-8") as f:
            for rec in records:
                f.write(json.dumps(rec, ensure_ascii=False) + "\n")
                n += 1
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()
    return n


def load_corpus(path: str | os.PathLike) -> list[Conversation]:
    conversations = []
    for lineno, obj in read_jsonl(path):
        try:
            conversations.append(conversation_from_dict(obj))
        except ValueError as exc:
            raise CorpusError(str(exc), lineno) from None
    return conversations


def save_corpus(conversations: Iterable[Conversation], path: str | os.PathLike) -> None:
    write_jsonl((conversation_to_dict(c) for c in conversations), path)
