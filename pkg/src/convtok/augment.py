"""Utterance packing and inline task-token augmentation.

Consecutive segments of a conversation are packed greedily into utterances
of bounded duration, then their words are concatenated with task tokens:

* ``[EP]`` after every segment's words,
* ``[SC]`` between consecutive segments of different speakers, after the
  preceding ``[EP]``,
* ``[NE]`` / ``[/NE]`` around each entity span.

Tokens of tasks not selected are never emitted, so single-task and
leave-one-out data are produced by the task subset alone.
"""

from __future__ import annotations

import enum
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .corpus import (
    Conversation,
    CorpusError,
    Item,
    Segment,
    TaskToken,
    check_word,
    read_jsonl,
    write_jsonl,
)

# float slack when comparing packed durations against the bound
_EPS = 1e-9


class Task(enum.Enum):
    SC = "sc"
    EP = "ep"
    NE = "ne"


ALL_TASKS = frozenset(Task)

_TASK_TOKENS = {
    Task.SC: (TaskToken.SC,),
    Task.EP: (TaskToken.EP,),
    Task.NE: (TaskToken.NE_OPEN, TaskToken.NE_CLOSE),
}


def parse_tasks(spec: str | Iterable[str]) -> frozenset[Task]:
    """Parse ``"sc,ep,ne"`` (or an iterable of names) into a task set; ``""`` is ASR-only."""
    if isinstance(spec, str):
        names = [s.strip() for s in spec.split(",")]
    else:
        names = [str(s).strip() for s in spec]
    tasks = set()
    for name in names:
        if not name:
            continue
        try:
            tasks.add(Task(name.lower()))
        except ValueError:
            raise ValueError(f"unknown task {name!r}; expected a subset of sc,ep,ne") from None
    return frozenset(tasks)


def tokens_for(tasks: Iterable[Task]) -> frozenset[TaskToken]:
    return frozenset(t for task in tasks for t in _TASK_TOKENS[task])


@dataclass(frozen=True)
class PackConfig:
    max_duration: float = 20.0
    tasks: frozenset[Task] = ALL_TASKS

    def __post_init__(self):
        if not self.max_duration > 0:
            raise ValueError("max_duration must be positive")
        object.__setattr__(self, "tasks", frozenset(self.tasks))


@dataclass(frozen=True)
class Utterance:
    """A packed span of segments with its token-augmented transcript.

    ``item_times`` is parallel to ``items``: the reference time of each item
    on the conversation clock. ``[EP]`` and ``[SC]`` carry the end time of
    the segment they follow; word times are interpolated uniformly within
    their segment. It is ``None`` when the source carried no timing.
    """

    conversation_id: str
    audio_start: float
    audio_end: float
    items: tuple[Item, ...]
    source_segment_indices: tuple[int, ...]
    oversize: bool = False
    item_times: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))
        object.__setattr__(self, "source_segment_indices", tuple(self.source_segment_indices))
        if self.item_times is not None:
            object.__setattr__(self, "item_times", tuple(self.item_times))
            if len(self.item_times) != len(self.items):
                raise ValueError("item_times must be parallel to items")
        if self.audio_end < self.audio_start:
            raise ValueError("audio_end precedes audio_start")

    @property
    def key(self) -> str:
        return utterance_key(self.conversation_id, self.audio_start)

    @property
    def duration(self) -> float:
        return self.audio_end - self.audio_start

    @property
    def words(self) -> list[str]:
        return strip_tokens(self.items)

    def event_times(self, token: TaskToken) -> list[float]:
        if self.item_times is None:
            raise ValueError(f"utterance {self.key} carries no item times")
        return [t for it, t in zip(self.items, self.item_times) if it is token]


def utterance_key(conversation_id: str, audio_start: float) -> str:
    return f"{conversation_id}@{audio_start:.3f}"


def _augment(segments: Sequence[Segment], tasks: frozenset[Task]):
    sc = Task.SC in tasks
    ep = Task.EP in tasks
    ne = Task.NE in tasks
    items: list[Item] = []
    times: list[float] = []
    for k, seg in enumerate(segments):
        if k and sc and seg.speaker != segments[k - 1].speaker:
            items.append(TaskToken.SC)
            times.append(segments[k - 1].end)
        opens = {e.start_word_index for e in seg.entities} if ne else set()
        closes = {e.end_word_index for e in seg.entities} if ne else set()
        n = len(seg.words)
        step = seg.duration / n if n else 0.0
        for i, w in enumerate(seg.words):
            if i in opens:
                items.append(TaskToken.NE_OPEN)
                times.append(round(seg.start + i * step, 6))
            items.append(w)
            times.append(round(seg.start + (i + 1) * step, 6))
            if i in closes:
                items.append(TaskToken.NE_CLOSE)
                times.append(times[-1])
        if ep:
            items.append(TaskToken.EP)
            times.append(seg.end)
    return items, times


def augment_text(segments: Sequence[Segment], tasks: Iterable[Task] = ALL_TASKS) -> list[Item]:
    """Concatenate segment words, inserting the task tokens enabled in ``tasks``."""
    items, _ = _augment(segments, frozenset(tasks))
    return items


def strip_tokens(items: Iterable[Item]) -> list[str]:
    return [it for it in items if not isinstance(it, TaskToken)]


def pack_segments(conversation: Conversation, config: PackConfig = PackConfig()) -> list[Utterance]:
    """Greedily pack consecutive segments into utterances no longer than ``max_duration``.

    Starting from the first unconsumed segment, the window grows while the
    span from its first start to its latest end fits. A segment that alone
    exceeds the bound becomes its own utterance with ``oversize`` set.
    """
    segs = conversation.segments
    utterances = []
    i = 0
    while i < len(segs):
        start = segs[i].start
        end = segs[i].end
        j = i + 1
        while j < len(segs) and max(end, segs[j].end) - start <= config.max_duration + _EPS:
            end = max(end, segs[j].end)
            j += 1
        window = segs[i:j]
        items, times = _augment(window, config.tasks)
        utterances.append(
            Utterance(
                conversation_id=conversation.id,
                audio_start=start,
                audio_end=end,
                items=tuple(items),
                source_segment_indices=tuple(range(i, j)),
                oversize=end - start > config.max_duration + _EPS,
                item_times=tuple(times),
            )
        )
        i = j
    return utterances


def prepare(conversations: Iterable[Conversation], config: PackConfig = PackConfig()) -> list[Utterance]:
    return [u for conv in conversations for u in pack_segments(conv, config)]


@dataclass
class StatsReport:
    n_utterances: int = 0
    n_words: int = 0
    duration: float = 0.0
    n_oversize: int = 0
    token_counts: dict[str, int] = field(default_factory=dict)
    n_entities: int = 0
    n_unique_entities: int = 0

    @property
    def token_percent(self) -> dict[str, float]:
        """Token count per kind as a percentage of the word count (tokens excluded)."""
        return {
            kind: (100.0 * n / self.n_words if self.n_words else 0.0)
            for kind, n in self.token_counts.items()
        }

    def to_dict(self) -> dict:
        return {
            "utterances": self.n_utterances,
            "words": self.n_words,
            "duration_s": self.duration,
            "oversize": self.n_oversize,
            "token_counts": dict(self.token_counts),
            "token_percent": self.token_percent,
            "entities": self.n_entities,
            "unique_entities": self.n_unique_entities,
        }

    def format(self) -> str:
        pct = self.token_percent
        lines = [
            "# token percentages are per word; task tokens are not counted as words",
            f"{'#utt':>8} {'#word':>9} {'dur[h]':>8} {'SC%':>6} {'NE%':>6} {'EP%':>6} {'#NE':>7} {'#uniq':>7}",
            f"{self.n_utterances:>8} {self.n_words:>9} {self.duration / 3600:>8.2f} "
            f"{pct['SC']:>6.1f} {pct['NE_OPEN']:>6.1f} {pct['EP']:>6.1f} "
            f"{self.n_entities:>7} {self.n_unique_entities:>7}",
        ]
        if self.n_oversize:
            lines.append(f"# {self.n_oversize} oversize utterance(s) kept whole")
        return "\n".join(lines)


def corpus_stats(utterances: Iterable[Utterance]) -> StatsReport:
    from .extract import extract_entities

    report = StatsReport()
    counts = Counter({t.kind: 0 for t in TaskToken})
    surfaces = []
    for utt in utterances:
        report.n_utterances += 1
        report.duration += utt.duration
        report.n_oversize += utt.oversize
        for it in utt.items:
            if isinstance(it, TaskToken):
                counts[it.kind] += 1
            else:
                report.n_words += 1
        surfaces.extend(" ".join(e.words) for e in extract_entities(utt.items).entities)
    report.token_counts = dict(counts)
    report.n_entities = len(surfaces)
    report.n_unique_entities = len(set(surfaces))
    return report


# --- utterance JSONL ---------------------------------------------------------


def item_to_dict(item: Item) -> dict:
    if isinstance(item, TaskToken):
        return {"t": item.kind}
    return {"w": item}


def item_from_dict(obj: dict) -> Item:
    if not isinstance(obj, dict):
        raise ValueError(f"item must be an object, got {obj!r}")
    if "t" in obj:
        return TaskToken.from_kind(obj["t"])
    if "w" in obj:
        return check_word(obj["w"])
    raise ValueError(f"item {obj!r} has neither 'w' nor 't'")


def utterance_to_dict(utt: Utterance) -> dict:
    d = {
        "conversation_id": utt.conversation_id,
        "audio_start": utt.audio_start,
        "audio_end": utt.audio_end,
        "items": [item_to_dict(it) for it in utt.items],
        "source_segments": list(utt.source_segment_indices),
        "oversize": utt.oversize,
    }
    if utt.item_times is not None:
        d["item_times"] = list(utt.item_times)
    return d


def utterance_from_dict(obj: dict) -> Utterance:
    if not isinstance(obj, dict):
        raise ValueError("utterance must be a JSON object")
    try:
        times = obj.get("item_times")
        return Utterance(
            conversation_id=obj["conversation_id"],
            audio_start=float(obj["audio_start"]),
            audio_end=float(obj["audio_end"]),
            items=tuple(item_from_dict(it) for it in obj["items"]),
            source_segment_indices=tuple(int(i) for i in obj.get("source_segments", [])),
            oversize=bool(obj.get("oversize", False)),
            item_times=None if times is None else tuple(float(t) for t in times),
        )
    except KeyError as exc:
        raise ValueError(f"utterance missing field {exc.args[0]!r}") from None


def load_utterances(path: str | os.PathLike) -> list[Utterance]:
    out = []
    for lineno, obj in read_jsonl(path):
        try:
            out.append(utterance_from_dict(obj))
        except (ValueError, TypeError) as exc:
            raise CorpusError(str(exc), lineno) from None
    return out


def save_utterances(utterances: Iterable[Utterance], path: str | os.PathLike) -> int:
    return write_jsonl((utterance_to_dict(u) for u in utterances), path)
