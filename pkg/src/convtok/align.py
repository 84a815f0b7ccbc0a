"""Unit-cost Levenshtein alignment and word error rate.

Items are compared with ``==``, so task tokens take part in an alignment
as ordinary symbols and only ever match the identical token.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, NamedTuple, Optional, Sequence

MATCH = "match"
SUB = "substitute"
DEL = "delete"
INS = "insert"


class AlignOp(NamedTuple):
    kind: str
    ref_index: Optional[int]
    hyp_index: Optional[int]


@dataclass(frozen=True)
class Alignment:
    ops: tuple[AlignOp, ...]

    def count(self, kind: str) -> int:
        return sum(1 for op in self.ops if op.kind == kind)

    @property
    def distance(self) -> int:
        return sum(1 for op in self.ops if op.kind != MATCH)

    def ref_to_hyp(self) -> dict[int, int]:
        """Ref index -> hyp index for every match or substitution link."""
        return {op.ref_index: op.hyp_index for op in self.ops if op.kind in (MATCH, SUB)}


def _cost_matrix(ref: Sequence[Hashable], hyp: Sequence[Hashable]) -> list[list[int]]:
    n, m = len(ref), len(hyp)
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for j in range(m + 1):
        d[0][j] = j
    for i in range(1, n + 1):
        row, prev = d[i], d[i - 1]
        row[0] = i
        r = ref[i - 1]
        for j in range(1, m + 1):
            diag = prev[j - 1] + (r != hyp[j - 1])
            up = prev[j] + 1
            left = row[j - 1] + 1
            row[j] = min(diag, up, left)
    return d


def levenshtein_align(ref: Sequence[Hashable], hyp: Sequence[Hashable]) -> Alignment:
    """Minimal-cost alignment of ``hyp`` against ``ref``.

    Ties in the backtrace are broken match, then substitute, then delete,
    then insert.
    """
    d = _cost_matrix(ref, hyp)
    i, j = len(ref), len(hyp)
    ops = []
    while i or j:
        here = d[i][j]
        if i and j and ref[i - 1] == hyp[j - 1] and d[i - 1][j - 1] == here:
            ops.append(AlignOp(MATCH, i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i and j and d[i - 1][j - 1] + 1 == here:
            ops.append(AlignOp(SUB, i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i and d[i - 1][j] + 1 == here:
            ops.append(AlignOp(DEL, i - 1, None))
            i -= 1
        else:
            ops.append(AlignOp(INS, None, j - 1))
            j -= 1
    ops.reverse()
    return Alignment(tuple(ops))


def edit_distance(ref: Sequence[Hashable], hyp: Sequence[Hashable]) -> int:
    return _cost_matrix(ref, hyp)[len(ref)][len(hyp)]


@dataclass(frozen=True)
class ErrorCounts:
    """Pooled edit counts; add instances to accumulate over a corpus."""

    sub: int = 0
    dels: int = 0
    ins: int = 0
    ref_len: int = 0
    hyp_len: int = 0

    @property
    def errors(self) -> int:
        return self.sub + self.dels + self.ins

    @property
    def degenerate(self) -> bool:
        """True when the reference is empty but the hypothesis is not."""
        return self.ref_len == 0 and self.hyp_len > 0

    @property
    def rate(self) -> float:
        if self.ref_len:
            return self.errors / self.ref_len
        return float(self.hyp_len)

    def __add__(self, other: "ErrorCounts") -> "ErrorCounts":
        return ErrorCounts(
            self.sub + other.sub,
            self.dels + other.dels,
            self.ins + other.ins,
            self.ref_len + other.ref_len,
            self.hyp_len + other.hyp_len,
        )


def error_counts(ref_words: Sequence[str], hyp_words: Sequence[str]) -> ErrorCounts:
    ali = levenshtein_align(ref_words, hyp_words)
    return ErrorCounts(ali.count(SUB), ali.count(DEL), ali.count(INS), len(ref_words), len(hyp_words))


def wer(ref_words: Sequence[str], hyp_words: Sequence[str]) -> float:
    """(S + D + I) / |ref| over token-stripped word sequences.

    An empty reference gives 0.0 against an empty hypothesis and
    ``len(hyp_words)`` otherwise; use :func:`error_counts` to see the
    ``degenerate`` flag.
    """
    return error_counts(ref_words, hyp_words).rate
