"""Seeded synthetic conversations and decoder-style noisy hypotheses.

Every conversation and every utterance draws from its own counter-based
(Philox) stream keyed by the run seed plus a stable per-item key, so the
output does not depend on generation order. Segment boundaries fall on the
20 ms frame grid so that an uncorrupted hypothesis reproduces reference
event times exactly.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import NamedTuple

import numpy as np

from .augment import Utterance
from .corpus import Conversation, EntitySpan, Segment, TaskToken
from .extract import Emission, FrameSpec, Hypothesis

GRID = 0.02


@lru_cache(maxsize=None)
def _inventory(name: str) -> tuple[str, ...]:
    text = resources.files("convtok").joinpath("data").joinpath(name).read_text(encoding="utf-8")
    return tuple(line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#"))


def word_inventory() -> tuple[str, ...]:
    return _inventory("words.txt")


def entity_inventory() -> tuple[tuple[str, ...], ...]:
    return tuple(tuple(e.split()) for e in _inventory("entities.txt"))


def _rng(*key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(list(key))))


def _range(value, name: str, cast=float) -> tuple:
    lo, hi = (value, value) if np.isscalar(value) else tuple(value)
    lo, hi = cast(lo), cast(hi)
    if hi < lo:
        raise ValueError(f"{name}: empty range ({lo}, {hi})")
    return lo, hi


def _prob(value: float, name: str) -> float:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must be a probability, got {value}")
    return float(value)


@dataclass(frozen=True)
class SimConfig:
    seed: int = 42
    n_conversations: int = 20
    speakers_per_conversation: tuple[int, int] = (2, 3)
    segments_per_conversation: tuple[int, int] = (10, 40)
    segment_duration: tuple[float, float] = (1.0, 12.0)
    words_per_second: float = 2.5
    entity_rate: float = 0.03
    pause_range: tuple[float, float] = (0.0, 1.5)
    same_speaker_prob: float = 0.2

    def __post_init__(self):
        if self.n_conversations < 0:
            raise ValueError("n_conversations must be non-negative")
        spk = _range(self.speakers_per_conversation, "speakers_per_conversation", int)
        if spk[0] < 1:
            raise ValueError("need at least one speaker")
        segs = _range(self.segments_per_conversation, "segments_per_conversation", int)
        if segs[0] < 1:
            raise ValueError("need at least one segment per conversation")
        dur = _range(self.segment_duration, "segment_duration")
        if dur[0] < GRID:
            raise ValueError(f"segment_duration must be at least {GRID} s")
        pause = _range(self.pause_range, "pause_range")
        if pause[0] < 0:
            raise ValueError("pause_range must be non-negative")
        if not self.words_per_second > 0:
            raise ValueError("words_per_second must be positive")
        object.__setattr__(self, "speakers_per_conversation", spk)
        object.__setattr__(self, "segments_per_conversation", segs)
        object.__setattr__(self, "segment_duration", dur)
        object.__setattr__(self, "pause_range", pause)
        object.__setattr__(self, "entity_rate", _prob(self.entity_rate, "entity_rate"))
        object.__setattr__(self, "same_speaker_prob", _prob(self.same_speaker_prob, "same_speaker_prob"))


@dataclass(frozen=True)
class NoiseConfig:
    sub_rate: float = 0.0
    del_rate: float = 0.0
    ins_rate: float = 0.0
    token_drop_rate: float = 0.0
    frame_jitter: tuple[int, int] = (0, 0)
    seed: int = 0

    def __post_init__(self):
        for name in ("sub_rate", "del_rate", "ins_rate", "token_drop_rate"):
            object.__setattr__(self, name, _prob(getattr(self, name), name))
        if self.sub_rate + self.del_rate > 1.0:
            raise ValueError("sub_rate + del_rate must not exceed 1")
        object.__setattr__(self, "frame_jitter", _range(self.frame_jitter, "frame_jitter", int))


def _ticks(seconds: float) -> int:
    return int(round(seconds / GRID))


def _time(ticks: int) -> float:
    return round(ticks * GRID, 3)


def _conversation(config: SimConfig, index: int) -> Conversation:
    rng = _rng(config.seed, index)
    words, entities = word_inventory(), entity_inventory()
    n_spk = int(rng.integers(config.speakers_per_conversation[0], config.speakers_per_conversation[1] + 1))
    speakers = [f"spk{k}" for k in range(n_spk)]
    n_seg = int(rng.integers(config.segments_per_conversation[0], config.segments_per_conversation[1] + 1))
    dur_lo, dur_hi = map(_ticks, config.segment_duration)
    pause_lo, pause_hi = map(_ticks, config.pause_range)

    t = 0
    speaker = int(rng.integers(n_spk))
    segments = []
    for k in range(n_seg):
        if k:
            t += int(rng.integers(pause_lo, pause_hi + 1))
            if n_spk > 1 and rng.random() >= config.same_speaker_prob:
                speaker = (speaker + int(rng.integers(1, n_spk))) % n_spk
        dur = int(rng.integers(max(dur_lo, 1), max(dur_hi, 1) + 1))
        seconds = dur * GRID
        n_words = max(1, int(round(seconds * config.words_per_second * rng.uniform(0.7, 1.3))))
        seg_words: list[str] = []
        spans = []
        while len(seg_words) < n_words:
            if config.entity_rate and rng.random() < config.entity_rate:
                ent = entities[int(rng.integers(len(entities)))]
                spans.append(EntitySpan(len(seg_words), len(seg_words) + len(ent) - 1))
                seg_words.extend(ent)
            else:
                seg_words.append(words[int(rng.integers(len(words)))])
        segments.append(Segment(_time(t), _time(t + dur), speakers[speaker], tuple(seg_words), tuple(spans)))
        t += dur
    return Conversation(f"sim{config.seed}-{index:05d}", tuple(segments))


def generate_corpus(config: SimConfig = SimConfig()) -> list[Conversation]:
    return [_conversation(config, i) for i in range(config.n_conversations)]


class Corrupted(NamedTuple):
    hypothesis: Hypothesis
    # ground-truth edits, in reference order
    edits: list[dict]

    @property
    def word_errors(self) -> int:
        return sum(1 for e in self.edits if e["op"] in ("sub", "del", "ins"))


def _base_times(ref: Utterance) -> list[float]:
    if ref.item_times is not None:
        return list(ref.item_times)
    n = len(ref.items)
    return [ref.audio_start + (k + 1) * ref.duration / n for k in range(n)]


def corrupt(ref: Utterance, noise: NoiseConfig = NoiseConfig(), spec: FrameSpec = FrameSpec()) -> Corrupted:
    """Derive a decoder-style hypothesis from a token-augmented reference.

    Each reference word is deleted with ``del_rate`` or substituted with
    ``sub_rate``, and followed by a random inserted word with ``ins_rate``;
    each task token is dropped with ``token_drop_rate``. Emission frames
    come from the reference item times plus uniform jitter, then are made
    non-decreasing.
    """
    rng = _rng(noise.seed, zlib.crc32(ref.key.encode("utf-8")))
    vocab = word_inventory()
    jlo, jhi = noise.frame_jitter
    out: list[tuple[object, int]] = []
    edits: list[dict] = []
    ref_w = hyp_w = 0

    def emit(item, base_frame):
        jitter = int(rng.integers(jlo, jhi + 1)) if jhi > jlo else jlo
        out.append((item, base_frame + jitter))

    for item, t in zip(ref.items, _base_times(ref)):
        frame = spec.frame_of(t - ref.audio_start)
        if isinstance(item, TaskToken):
            if noise.token_drop_rate and rng.random() < noise.token_drop_rate:
                edits.append({"op": "drop", "token": item.kind, "ref": ref_w})
            else:
                emit(item, frame)
            continue
        u = rng.random()
        if u < noise.del_rate:
            edits.append({"op": "del", "ref": ref_w, "word": item})
        elif u < noise.del_rate + noise.sub_rate:
            new = item
            while new == item:
                new = vocab[int(rng.integers(len(vocab)))]
            edits.append({"op": "sub", "ref": ref_w, "hyp": hyp_w, "word": item, "with": new})
            emit(new, frame)
            hyp_w += 1
        else:
            emit(item, frame)
            hyp_w += 1
        ref_w += 1
        if noise.ins_rate and rng.random() < noise.ins_rate:
            new = vocab[int(rng.integers(len(vocab)))]
            edits.append({"op": "ins", "hyp": hyp_w, "with": new})
            emit(new, frame)
            hyp_w += 1

    emissions = []
    prev = 0
    for item, f in out:
        prev = max(prev, f)
        emissions.append(Emission(item, prev))
    return Corrupted(Hypothesis(ref.conversation_id, ref.audio_start, tuple(emissions)), edits)


def perfect_hypothesis(ref: Utterance, spec: FrameSpec = FrameSpec()) -> Hypothesis:
    return corrupt(ref, NoiseConfig(), spec).hypothesis


def edit_log_record(ref: Utterance, corrupted: Corrupted) -> dict:
    return {
        "utt": ref.key,
        "n_ref_words": sum(1 for it in ref.items if not isinstance(it, TaskToken)),
        "word_errors": corrupted.word_errors,
        "edits": corrupted.edits,
    }
