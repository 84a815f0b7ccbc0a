"""Turn a token-augmented decoder hypothesis into structured results.

A hypothesis is the sequence of emitted symbols, each tagged with the
acoustic frame index at which the decoder emitted it. From it we recover
entity word spans, timed speaker-change / endpoint events, speaker turns
and speech regions.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

from .augment import item_from_dict, item_to_dict, utterance_key
from .corpus import CorpusError, Item, TaskToken, read_jsonl, write_jsonl


@dataclass(frozen=True)
class FrameSpec:
    frame_duration: float = 0.025
    frame_stride: float = 0.020

    def __post_init__(self):
        if not (self.frame_duration > 0 and self.frame_stride > 0):
            raise ValueError("frame duration and stride must be positive")
        if self.frame_duration < self.frame_stride:
            raise ValueError("frame duration must be at least the stride")

    def frame_of(self, seconds: float) -> int:
        """Nearest frame index for an offset (in seconds) from the utterance start."""
        return max(0, int(round(seconds / self.frame_stride)))


class Emission(NamedTuple):
    item: Item
    frame: int


@dataclass(frozen=True)
class Hypothesis:
    conversation_id: str
    audio_start: float
    emissions: tuple[Emission, ...]

    def __post_init__(self):
        object.__setattr__(self, "emissions", tuple(Emission(*e) for e in self.emissions))
        prev = 0
        for e in self.emissions:
            if e.frame < prev:
                raise ValueError("emission frame indices must be non-decreasing and non-negative")
            prev = e.frame

    @property
    def key(self) -> str:
        return utterance_key(self.conversation_id, self.audio_start)

    @property
    def items(self) -> list[Item]:
        return [e.item for e in self.emissions]


@dataclass(frozen=True)
class TimedEvent:
    kind: TaskToken
    time: float


@dataclass(frozen=True)
class Entity:
    words: tuple[str, ...]
    # inclusive (start, end) indices into the token-stripped word sequence
    hyp_word_span: tuple[int, int]

    @property
    def text(self) -> str:
        return " ".join(self.words)


class EntityExtraction(NamedTuple):
    entities: list[Entity]
    unmatched_open: int
    unmatched_close: int


def extract_entities(source: Hypothesis | Sequence[Item]) -> EntityExtraction:
    """Pair each ``[NE]`` with the nearest following ``[/NE]``.

    An open followed by another open before any close is discarded as
    unmatched. A pair enclosing no words yields no entity and counts as one
    unmatched open plus one unmatched close.
    """
    items = source.items if isinstance(source, Hypothesis) else source
    entities = []
    n_open = n_close = 0
    open_at = None
    words: list[str] = []
    for it in items:
        if it is TaskToken.NE_OPEN:
            if open_at is not None:
                n_open += 1
            open_at = len(words)
        elif it is TaskToken.NE_CLOSE:
            if open_at is None:
                n_close += 1
            elif open_at == len(words):
                n_open += 1
                n_close += 1
            else:
                entities.append(Entity(tuple(words[open_at:]), (open_at, len(words) - 1)))
            open_at = None
        elif not isinstance(it, TaskToken):
            words.append(it)
    if open_at is not None:
        n_open += 1
    return EntityExtraction(entities, n_open, n_close)


def token_time(frame_index: int, spec: FrameSpec, audio_start: float) -> float:
    """Frame-start time of ``frame_index`` on the conversation clock (microsecond rounded)."""
    if frame_index < 0:
        raise ValueError("frame index must be non-negative")
    return round(audio_start + frame_index * spec.frame_stride, 6)


def extract_timed_events(hyp: Hypothesis, spec: FrameSpec = FrameSpec()) -> list[TimedEvent]:
    return [
        TimedEvent(e.item, token_time(e.frame, spec, hyp.audio_start))
        for e in hyp.emissions
        if e.item is TaskToken.SC or e.item is TaskToken.EP
    ]


def turns_from_events(times: Iterable[float], start: float, end: float) -> list[tuple[float, float]]:
    """Split ``[start, end]`` at each speaker-change time.

    Change times outside the open interval and duplicates are ignored, so
    no zero-length turn is produced.
    """
    cuts = sorted({t for t in times if start < t < end})
    bounds = [start, *cuts, end]
    return [(a, b) for a, b in zip(bounds, bounds[1:])]


def speech_regions_from_endpoints(
    ep_times: Iterable[float], spans: Sequence[tuple[float, float]]
) -> list[tuple[float, float]]:
    """Speech runs from the span start (or the previous endpoint) up to each endpoint.

    Audio after the last endpoint of a span is non-speech; a span without
    endpoints claims no speech. Endpoints are assigned to the span that
    contains them; those outside every span are ignored.
    """
    ep_times = sorted(ep_times)
    regions = []
    for s, e in spans:
        prev = s
        for t in ep_times:
            if s <= t <= e:
                if t > prev:
                    regions.append((prev, t))
                prev = max(prev, t)
    return regions


# --- hypothesis JSONL --------------------------------------------------------


def hypothesis_to_dict(hyp: Hypothesis) -> dict:
    return {
        "conversation_id": hyp.conversation_id,
        "audio_start": hyp.audio_start,
        "emissions": [{**item_to_dict(e.item), "f": e.frame} for e in hyp.emissions],
    }


def hypothesis_from_dict(obj: dict) -> Hypothesis:
    if not isinstance(obj, dict):
        raise ValueError("hypothesis must be a JSON object")
    try:
        emissions = []
        for e in obj["emissions"]:
            f = e.get("f") if isinstance(e, dict) else None
            if isinstance(f, bool) or not isinstance(f, int):
                raise ValueError(f"emission {e!r} needs an integer frame 'f'")
            emissions.append(Emission(item_from_dict(e), f))
        return Hypothesis(obj["conversation_id"], float(obj["audio_start"]), tuple(emissions))
    except KeyError as exc:
        raise ValueError(f"hypothesis missing field {exc.args[0]!r}") from None


def load_hypotheses(path: str | os.PathLike) -> list[Hypothesis]:
    out = []
    for lineno, obj in read_jsonl(path):
        try:
            out.append(hypothesis_from_dict(obj))
        except (ValueError, TypeError) as exc:
            raise CorpusError(str(exc), lineno) from None
    return out


def save_hypotheses(hyps: Iterable[Hypothesis], path: str | os.PathLike) -> int:
    return write_jsonl((hypothesis_to_dict(h) for h in hyps), path)
