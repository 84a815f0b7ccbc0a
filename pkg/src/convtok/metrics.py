"""Scoring of token-augmented hypotheses against token-augmented references.

Covers token-stripped WER, exact- and soft-match NER, text- and time-based
speaker-change / endpoint F1, segment coverage/purity, and false-alarm /
missed-speech detection rates. Corpus figures pool counts (or durations)
over utterances before dividing.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

from .align import DEL, INS, MATCH, SUB, Alignment, ErrorCounts, levenshtein_align
from .augment import Utterance, strip_tokens
from .corpus import Item, TaskToken
from .extract import (
    Entity,
    EntityExtraction,
    FrameSpec,
    Hypothesis,
    extract_entities,
    extract_timed_events,
    speech_regions_from_endpoints,
    turns_from_events,
)

_EPS = 1e-9

Interval = tuple[float, float]


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class PRF:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    def __add__(self, other: "PRF") -> "PRF":
        return PRF(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    def to_dict(self) -> dict:
        return {
            "p": self.precision,
            "r": self.recall,
            "f1": self.f1,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
        }


@dataclass(frozen=True)
class CollarConfig:
    collar: float = 0.250

    def __post_init__(self):
        if self.collar < 0:
            raise ValueError("collar must be non-negative")


@dataclass(frozen=True)
class DetectionReport:
    fa_rate: float
    ms_rate: float
    f1: PRF = PRF()
    # durations the rates were computed from
    fa_time: float = 0.0
    ms_time: float = 0.0
    ref_time: float = 0.0
    degenerate: bool = False

    @property
    def der(self) -> float:
        return self.fa_rate + self.ms_rate


# --- NER ----------------------------------------------------------------------


def _match_one_to_one(
    ref: Sequence[Entity], hyp: Sequence[Entity], same: Callable[[Entity, Entity], bool]
) -> int:
    used = [False] * len(ref)
    tp = 0
    for h in hyp:
        for k, r in enumerate(ref):
            if not used[k] and same(r, h):
                used[k] = True
                tp += 1
                break
    return tp


def _ner_prf(ref: EntityExtraction, hyp: EntityExtraction, tp: int) -> PRF:
    fp = len(hyp.entities) - tp + hyp.unmatched_open + hyp.unmatched_close
    fn = len(ref.entities) - tp + ref.unmatched_open + ref.unmatched_close
    return PRF(tp, fp, fn)


def ner_exact(ref: EntityExtraction, hyp: EntityExtraction, alignment: Alignment) -> PRF:
    """A hypothesis entity counts iff every word is a match linked to the same reference span.

    ``alignment`` aligns the token-stripped reference and hypothesis words.
    Unmatched tag tokens count as false negatives (reference) or false
    positives (hypothesis).
    """
    links = {op.ref_index: op.hyp_index for op in alignment.ops if op.kind == MATCH}

    def same(r: Entity, h: Entity) -> bool:
        (rs, re), (hs, he) = r.hyp_word_span, h.hyp_word_span
        if re - rs != he - hs:
            return False
        return all(links.get(rs + k) == hs + k for k in range(re - rs + 1))

    return _ner_prf(ref, hyp, _match_one_to_one(ref.entities, hyp.entities, same))


def ner_soft(ref: EntityExtraction, hyp: EntityExtraction, alignment: Alignment) -> PRF:
    """A hypothesis entity counts iff an alignment link joins its span to a reference span.

    Word identity is ignored, so misrecognised entity words still count.
    """
    links = alignment.ref_to_hyp()

    def overlaps(r: Entity, h: Entity) -> bool:
        (rs, re), (hs, he) = r.hyp_word_span, h.hyp_word_span
        return any(hs <= links.get(i, -1) <= he for i in range(rs, re + 1))

    return _ner_prf(ref, hyp, _match_one_to_one(ref.entities, hyp.entities, overlaps))


# --- text-based token scoring ------------------------------------------------


def token_text_prf(
    ref_items: Sequence[Item],
    hyp_items: Sequence[Item],
    token: TaskToken,
    alignment: Optional[Alignment] = None,
) -> PRF:
    """Score one task token over an item-level alignment.

    A reference token aligned to the same token is a TP; one deleted or
    substituted is an FN; a hypothesis token inserted or substituted in is
    an FP.
    """
    if alignment is None:
        alignment = levenshtein_align(ref_items, hyp_items)
    tp = fp = fn = 0
    for op in alignment.ops:
        r = ref_items[op.ref_index] if op.ref_index is not None else None
        h = hyp_items[op.hyp_index] if op.hyp_index is not None else None
        if op.kind == MATCH:
            tp += r is token
        elif op.kind == SUB:
            fn += r is token
            fp += h is token
        elif op.kind == DEL:
            fn += r is token
        elif op.kind == INS:
            fp += h is token
    return PRF(tp, fp, fn)


def scd_text_f1(ref_items, hyp_items, alignment: Optional[Alignment] = None) -> PRF:
    return token_text_prf(ref_items, hyp_items, TaskToken.SC, alignment)


def ep_text_f1(ref_items, hyp_items, alignment: Optional[Alignment] = None) -> PRF:
    return token_text_prf(ref_items, hyp_items, TaskToken.EP, alignment)


# --- time-based scoring --------------------------------------------------------


def timestamp_f1(
    ref_times: Sequence[float], hyp_times: Sequence[float], collar: CollarConfig = CollarConfig()
) -> PRF:
    """One-to-one matching within ``±collar``.

    Hypothesis times are visited in order and each takes the earliest
    unmatched reference time inside its window. For sorted inputs this is
    a maximum-cardinality matching.
    """
    ref = sorted(ref_times)
    c = collar.collar + _EPS
    used = [False] * len(ref)
    lo = 0
    tp = 0
    for h in sorted(hyp_times):
        while lo < len(ref) and ref[lo] < h - c:
            lo += 1
        k = lo
        while k < len(ref) and ref[k] <= h + c:
            if not used[k]:
                used[k] = True
                tp += 1
                break
            k += 1
    return PRF(tp, len(hyp_times) - tp, len(ref) - tp)


def _overlap(a: Interval, b: Interval) -> float:
    return max(0.0, min(a[1], b[1]) - max(a[0], b[0]))


def _coverage_sums(ref: Sequence[Interval], hyp: Sequence[Interval]) -> tuple[float, float]:
    num = sum(max((_overlap(r, h) for h in hyp), default=0.0) for r in ref)
    den = sum(r[1] - r[0] for r in ref)
    return num, den


def _check_extent(ref: Sequence[Interval], hyp: Sequence[Interval]):
    if not ref or not hyp:
        raise ValueError("both partitions must be non-empty")
    r = (min(s for s, _ in ref), max(e for _, e in ref))
    h = (min(s for s, _ in hyp), max(e for _, e in hyp))
    if abs(r[0] - h[0]) > 1e-6 or abs(r[1] - h[1]) > 1e-6:
        raise ValueError(f"partitions cover different extents: {r} vs {h}")


def _harmonic(a: float, b: float) -> float:
    return 2 * a * b / (a + b) if a + b else 0.0


def coverage_purity(
    ref_turns: Sequence[Interval], hyp_turns: Sequence[Interval]
) -> tuple[float, float, float]:
    """Segment coverage, purity and their harmonic mean.

    Coverage sums, over reference turns, the largest overlap with any single
    hypothesis turn, divided by total reference duration. Purity swaps roles.
    """
    _check_extent(ref_turns, hyp_turns)
    num, den = _coverage_sums(ref_turns, hyp_turns)
    coverage = num / den if den else 0.0
    num, den = _coverage_sums(hyp_turns, ref_turns)
    purity = num / den if den else 0.0
    return coverage, purity, _harmonic(coverage, purity)


def merge_intervals(intervals: Iterable[Interval]) -> list[Interval]:
    merged: list[list[float]] = []
    for s, e in sorted(intervals):
        if e <= s:
            continue
        if merged and s <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], e)
        else:
            merged.append([s, e])
    return [(s, e) for s, e in merged]


def _total(intervals: Sequence[Interval]) -> float:
    return sum(e - s for s, e in intervals)


def _intersection(a: Sequence[Interval], b: Sequence[Interval]) -> float:
    i = j = 0
    total = 0.0
    while i < len(a) and j < len(b):
        total += _overlap(a[i], b[j])
        if a[i][1] < b[j][1]:
            i += 1
        else:
            j += 1
    return total


def _detection_times(ref_speech, hyp_speech) -> tuple[float, float, float]:
    ref = merge_intervals(ref_speech)
    hyp = merge_intervals(hyp_speech)
    both = _intersection(ref, hyp)
    ref_t = _total(ref)
    return _total(hyp) - both, ref_t - both, ref_t


def detection_metrics(
    ref_speech: Iterable[Interval],
    hyp_speech: Iterable[Interval],
    total_duration: Optional[float] = None,
) -> DetectionReport:
    """False-alarm and missed-speech time as fractions of reference speech time.

    Overlapping inputs are merged first. With no reference speech the rates
    are taken against ``total_duration`` (or the hypothesis extent) and the
    report is flagged ``degenerate``.
    """
    ref_speech, hyp_speech = list(ref_speech), list(hyp_speech)
    fa, ms, ref_t = _detection_times(ref_speech, hyp_speech)
    return _detection_report(fa, ms, ref_t, total_duration, hyp_speech)


def _detection_report(fa, ms, ref_t, total_duration, hyp_speech, f1: PRF = PRF()) -> DetectionReport:
    if ref_t > 0:
        return DetectionReport(fa / ref_t, ms / ref_t, f1, fa, ms, ref_t)
    if total_duration is None:
        spans = merge_intervals(hyp_speech)
        total_duration = spans[-1][1] - spans[0][0] if spans else 0.0
    if total_duration > 0:
        return DetectionReport(fa / total_duration, ms / total_duration, f1, fa, ms, 0.0, True)
    return DetectionReport(0.0, 0.0, f1, fa, ms, 0.0, True)


# --- corpus evaluation --------------------------------------------------------


@dataclass
class UtteranceScore:
    key: str
    errors: ErrorCounts
    ner_exact: PRF
    ner_soft: PRF
    scd_text: PRF
    ep_text: PRF
    scd_time: Optional[PRF] = None
    ep_time: Optional[PRF] = None


TSV_COLUMNS = (
    "utt", "ref_words", "hyp_words", "sub", "del", "ins", "wer",
    "ner_exact_tp", "ner_exact_fp", "ner_exact_fn",
    "ner_soft_tp", "ner_soft_fp", "ner_soft_fn",
    "scd_text_tp", "scd_text_fp", "scd_text_fn",
    "ep_text_tp", "ep_text_fp", "ep_text_fn",
    "scd_time_tp", "scd_time_fp", "scd_time_fn",
    "ep_time_tp", "ep_time_fp", "ep_time_fn",
)  # fmt: skip


@dataclass
class EvalReport:
    errors: ErrorCounts
    ner_exact: PRF
    ner_soft: PRF
    scd_text: PRF
    ep_text: PRF
    scd_time: Optional[PRF]
    ep_time: Optional[PRF]
    coverage: Optional[float]
    purity: Optional[float]
    detection: Optional[DetectionReport]
    utterances: list[UtteranceScore] = field(default_factory=list)
    macro: Optional[dict] = None

    @property
    def wer(self) -> float:
        return self.errors.rate

    @property
    def cp_f1(self) -> Optional[float]:
        if self.coverage is None:
            return None
        return _harmonic(self.coverage, self.purity)

    def to_dict(self) -> dict:
        det = self.detection
        d = {
            "wer": self.wer,
            "wer_degenerate": self.errors.degenerate,
            "ner_exact": self.ner_exact.to_dict(),
            "ner_soft": self.ner_soft.to_dict(),
            "scd_text": self.scd_text.to_dict(),
            "ep_text": self.ep_text.to_dict(),
            "scd_time": self.scd_time.to_dict() if self.scd_time else None,
            "ep_time": self.ep_time.to_dict() if self.ep_time else None,
            "coverage": self.coverage,
            "purity": self.purity,
            "cp_f1": self.cp_f1,
            "fa": det.fa_rate if det else None,
            "ms": det.ms_rate if det else None,
            "der": det.der if det else None,
            "detection_degenerate": det.degenerate if det else None,
            "counts": {
                "utterances": len(self.utterances),
                "ref_words": self.errors.ref_len,
                "hyp_words": self.errors.hyp_len,
                "sub": self.errors.sub,
                "del": self.errors.dels,
                "ins": self.errors.ins,
            },
        }
        if self.macro is not None:
            d["macro"] = self.macro
        return d

    def tsv_rows(self) -> list[list[str]]:
        rows = [list(TSV_COLUMNS)]
        for u in self.utterances:
            e = u.errors
            row = [u.key, e.ref_len, e.hyp_len, e.sub, e.dels, e.ins, f"{e.rate:.6f}"]
            for prf in (u.ner_exact, u.ner_soft, u.scd_text, u.ep_text, u.scd_time, u.ep_time):
                row += ["", "", ""] if prf is None else [prf.tp, prf.fp, prf.fn]
            rows.append([str(x) for x in row])
        return rows

    def to_tsv(self) -> str:
        return "".join("\t".join(r) + "\n" for r in self.tsv_rows())

    def summary(self) -> str:
        def f(prf):
            return "n/a" if prf is None else f"P={prf.precision:.3f} R={prf.recall:.3f} F1={prf.f1:.3f}"

        lines = [
            f"utterances   {len(self.utterances)}",
            f"WER          {self.wer:.4f}  ({self.errors.errors}/{self.errors.ref_len})"
            + ("  [degenerate: empty reference]" if self.errors.degenerate else ""),
            f"NER exact    {f(self.ner_exact)}",
            f"NER soft     {f(self.ner_soft)}",
            f"SCD text     {f(self.scd_text)}",
            f"EP  text     {f(self.ep_text)}",
            f"SCD time     {f(self.scd_time)}",
            f"EP  time     {f(self.ep_time)}",
        ]
        if self.coverage is not None:
            lines.append(f"coverage     {self.coverage:.4f}  purity {self.purity:.4f}  CP-F1 {self.cp_f1:.4f}")
        if self.detection is not None:
            d = self.detection
            lines.append(f"FA {d.fa_rate:.4f}  MS {d.ms_rate:.4f}  DER {d.der:.4f}")
        return "\n".join(lines)


def _clip(t: float, lo: float, hi: float) -> float:
    return min(max(t, lo), hi)


def score_utterance(
    ref: Utterance,
    hyp: Hypothesis,
    collar: CollarConfig = CollarConfig(),
    frame_spec: FrameSpec = FrameSpec(),
) -> UtteranceScore:
    ref_items, hyp_items = list(ref.items), hyp.items
    ref_words, hyp_words = strip_tokens(ref_items), strip_tokens(hyp_items)
    word_ali = levenshtein_align(ref_words, hyp_words)
    errors = ErrorCounts(word_ali.count(SUB), word_ali.count(DEL), word_ali.count(INS), len(ref_words), len(hyp_words))
    ref_ne, hyp_ne = extract_entities(ref_items), extract_entities(hyp_items)
    item_ali = levenshtein_align(ref_items, hyp_items)
    score = UtteranceScore(
        key=ref.key,
        errors=errors,
        ner_exact=ner_exact(ref_ne, hyp_ne, word_ali),
        ner_soft=ner_soft(ref_ne, hyp_ne, word_ali),
        scd_text=scd_text_f1(ref_items, hyp_items, item_ali),
        ep_text=ep_text_f1(ref_items, hyp_items, item_ali),
    )
    if ref.item_times is not None:
        events = extract_timed_events(hyp, frame_spec)
        hyp_sc = [e.time for e in events if e.kind is TaskToken.SC]
        hyp_ep = [e.time for e in events if e.kind is TaskToken.EP]
        score.scd_time = timestamp_f1(ref.event_times(TaskToken.SC), hyp_sc, collar)
        score.ep_time = timestamp_f1(ref.event_times(TaskToken.EP), hyp_ep, collar)
    return score


def evaluate_corpus(
    refs: Sequence[Utterance],
    hyps: Sequence[Hypothesis],
    collar: CollarConfig = CollarConfig(),
    frame_spec: FrameSpec = FrameSpec(),
    macro: bool = False,
) -> EvalReport:
    """Score every reference utterance against its hypothesis and pool the counts.

    Hypotheses are paired with references by conversation id and audio
    start. Every reference needs exactly one hypothesis and vice versa.
    Time-based figures are computed only when all references carry item
    times.
    """
    if not hyps:
        raise EvaluationError("empty hypothesis set")
    by_key: dict[str, Utterance] = {}
    for u in refs:
        if u.key in by_key:
            raise EvaluationError(f"duplicate reference utterance {u.key}")
        by_key[u.key] = u
    hyp_by_key: dict[str, Hypothesis] = {}
    for h in hyps:
        if h.key in hyp_by_key:
            raise EvaluationError(f"duplicate hypothesis for {h.key}")
        hyp_by_key[h.key] = h
    unknown = [k for k in hyp_by_key if k not in by_key]
    if unknown:
        raise EvaluationError("hypotheses reference unknown utterances: " + ", ".join(unknown))
    missing = [k for k in by_key if k not in hyp_by_key]
    if missing:
        raise EvaluationError("no hypothesis for utterances: " + ", ".join(missing))

    timed = all(u.item_times is not None for u in refs)
    scores = []
    # per conversation: spans, ref/hyp SC times, ref/hyp speech regions
    convs: dict[str, dict[str, list]] = defaultdict(lambda: defaultdict(list))
    for ref in refs:
        hyp = hyp_by_key[ref.key]
        s = score_utterance(ref, hyp, collar, frame_spec)
        scores.append(s)
        if not timed:
            continue
        c = convs[ref.conversation_id]
        span = (ref.audio_start, ref.audio_end)
        c["spans"].append(span)
        events = extract_timed_events(hyp, frame_spec)
        hyp_ep = [_clip(e.time, *span) for e in events if e.kind is TaskToken.EP]
        c["ref_sc"] += ref.event_times(TaskToken.SC)
        c["hyp_sc"] += [_clip(e.time, *span) for e in events if e.kind is TaskToken.SC]
        c["ref_speech"] += speech_regions_from_endpoints(ref.event_times(TaskToken.EP), [span])
        c["hyp_speech"] += speech_regions_from_endpoints(hyp_ep, [span])

    def pooled(attr):
        total = PRF()
        for s in scores:
            total = total + getattr(s, attr)
        return total

    errors = ErrorCounts()
    for s in scores:
        errors = errors + s.errors

    coverage = purity = detection = None
    scd_time = ep_time = None
    if timed:
        scd_time, ep_time = pooled("scd_time"), pooled("ep_time")
        cov_num = cov_den = pur_num = pur_den = 0.0
        fa = ms = ref_t = total = 0.0
        for c in convs.values():
            lo = min(s for s, _ in c["spans"])
            hi = max(e for _, e in c["spans"])
            ref_turns = turns_from_events(c["ref_sc"], lo, hi)
            hyp_turns = turns_from_events(c["hyp_sc"], lo, hi)
            n, d = _coverage_sums(ref_turns, hyp_turns)
            cov_num, cov_den = cov_num + n, cov_den + d
            n, d = _coverage_sums(hyp_turns, ref_turns)
            pur_num, pur_den = pur_num + n, pur_den + d
            a, m, r = _detection_times(c["ref_speech"], c["hyp_speech"])
            fa, ms, ref_t = fa + a, ms + m, ref_t + r
            total += _total(merge_intervals(c["spans"]))
        coverage = cov_num / cov_den if cov_den else 0.0
        purity = pur_num / pur_den if pur_den else 0.0
        detection = _detection_report(fa, ms, ref_t, total, [], ep_time)

    report = EvalReport(
        errors=errors,
        ner_exact=pooled("ner_exact"),
        ner_soft=pooled("ner_soft"),
        scd_text=pooled("scd_text"),
        ep_text=pooled("ep_text"),
        scd_time=scd_time,
        ep_time=ep_time,
        coverage=coverage,
        purity=purity,
        detection=detection,
        utterances=scores,
    )
    if macro:
        report.macro = _macro(scores)
    return report


def _macro(scores: Sequence[UtteranceScore]) -> dict:
    """Unweighted per-utterance means, skipping utterances where a figure is undefined."""

    def mean(values):
        values = list(values)
        return sum(values) / len(values) if values else None

    out = {"wer": mean(s.errors.rate for s in scores if s.errors.ref_len)}
    for attr in ("ner_exact", "ner_soft", "scd_text", "ep_text", "scd_time", "ep_time"):
        prfs = [getattr(s, attr) for s in scores]
        out[attr + "_f1"] = mean(p.f1 for p in prfs if p is not None and p.tp + p.fp + p.fn)
    return out
