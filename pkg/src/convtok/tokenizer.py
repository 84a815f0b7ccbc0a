"""Byte-pair-encoding subword vocabulary with atomic task tokens.

Every word is split into characters prefixed by the word-boundary marker
``▁`` and merged by the learned rules; protected strings (the task
tokens by default) are never split and always map to one piece id.
"""

from __future__ import annotations

import heapq
import os
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import RESERVED_SURFACES, Item, TaskToken

MARKER = "▁"
RESERVED_PIECES = ("<pad>", "<unk>", "<bos>", "<eos>")
PAD_ID, UNK_ID, BOS_ID, EOS_ID = range(4)
FORMAT_TAG = "#convtok-bpe 1"

_SURFACE_TO_TOKEN = {t.surface: t for t in TaskToken}


class VocabSizeError(ValueError):
    def __init__(self, requested: int, minimum: int):
        self.minimum = minimum
        super().__init__(f"vocab_size {requested} is below the minimum of {minimum}")


@dataclass
class Vocab:
    pieces: tuple[str, ...]
    protected: frozenset[str]
    merges: tuple[tuple[str, str], ...]
    piece_ids: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.pieces = tuple(self.pieces)
        self.protected = frozenset(self.protected)
        self.merges = tuple(tuple(m) for m in self.merges)
        if self.pieces[:4] != RESERVED_PIECES:
            raise ValueError("ids 0..3 must be " + ", ".join(RESERVED_PIECES))
        self.piece_ids = {p: i for i, p in enumerate(self.pieces)}
        if len(self.piece_ids) != len(self.pieces):
            raise ValueError("duplicate piece strings")
        missing = self.protected - self.piece_ids.keys()
        if missing:
            raise ValueError(f"protected strings without a piece: {sorted(missing)}")
        self._ranks = {m: r for r, m in enumerate(self.merges)}
        self._cache: dict[str, tuple[int, ...]] = {}

    def __len__(self) -> int:
        return len(self.pieces)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Vocab):
            return NotImplemented
        return (self.pieces, self.protected, self.merges) == (
            other.pieces,
            other.protected,
            other.merges,
        )

    def segment(self, word: str) -> list[str]:
        """Pieces of a single word after applying the merges in rank order."""
        syms = [MARKER] + [c if c != MARKER else RESERVED_PIECES[UNK_ID] for c in word]
        ranks = self._ranks
        while len(syms) > 1:
            best = None
            for pair in zip(syms, syms[1:]):
                r = ranks.get(pair)
                if r is not None and (best is None or r < best[0]):
                    best = (r, pair)
            if best is None:
                break
            syms = _merge_word(syms, best[1])
        return syms

    def _encode_word(self, word: str) -> tuple[int, ...]:
        ids = self._cache.get(word)
        if ids is None:
            if word in self.protected:
                ids = (self.piece_ids[word],)
            else:
                ids = tuple(self.piece_ids.get(p, UNK_ID) for p in self.segment(word))
            self._cache[word] = ids
        return ids


def _merge_word(syms: Sequence[str], pair: tuple[str, str]) -> list[str]:
    a, b = pair
    out = []
    i = 0
    while i < len(syms):
        if i + 1 < len(syms) and syms[i] == a and syms[i + 1] == b:
            out.append(a + b)
            i += 2
        else:
            out.append(syms[i])
            i += 1
    return out


def _sequences(corpus) -> Iterable[Sequence[Item]]:
    for entry in corpus:
        if isinstance(entry, str):
            yield [_SURFACE_TO_TOKEN.get(w, w) for w in entry.split()]
        elif hasattr(entry, "items") and not isinstance(entry, dict):
            yield entry.items
        else:
            yield entry


def train_bpe(
    corpus: Iterable,
    vocab_size: int = 500,
    protected: Iterable[str] = RESERVED_SURFACES,
) -> Vocab:
    """Learn BPE merges over the words of a token-augmented corpus.

    ``corpus`` yields item sequences, utterances, or whitespace-separated
    strings. Task tokens and other protected strings are atomic and never
    enter the merge statistics. The most frequent adjacent pair is merged
    first; ties go to the lexicographically smallest pair. Training stops
    at ``vocab_size`` pieces or when no pair is left.
    """
    protected = frozenset(protected)
    for p in protected:
        if not p or any(ch.isspace() for ch in p) or p.startswith(MARKER):
            raise ValueError(f"invalid protected string {p!r}")

    word_freq: Counter[str] = Counter()
    for items in _sequences(corpus):
        for it in items:
            if isinstance(it, TaskToken) or it in protected:
                continue
            word_freq[it] += 1

    chars = {MARKER}
    for w in word_freq:
        chars.update(w)
    clash = sorted(p for p in protected if p in chars)
    if clash:
        raise ValueError(f"protected string(s) {clash} collide with base characters")
    minimum = len(RESERVED_PIECES) + len(protected) + len(chars)
    if vocab_size < minimum:
        raise VocabSizeError(vocab_size, minimum)

    pieces = list(RESERVED_PIECES) + sorted(protected) + sorted(chars)
    known = set(pieces)
    merges: list[tuple[str, str]] = []

    # sorted for a traversal order independent of corpus order
    words = [[MARKER, *w] for w in sorted(word_freq) if MARKER not in w]
    freqs = [word_freq[w] for w in sorted(word_freq) if MARKER not in w]
    pair_counts: dict[tuple[str, str], int] = defaultdict(int)
    where: dict[tuple[str, str], set[int]] = defaultdict(set)
    for wi, syms in enumerate(words):
        for pair in zip(syms, syms[1:]):
            pair_counts[pair] += freqs[wi]
            where[pair].add(wi)
    heap = [(-c, p) for p, c in pair_counts.items()]
    heapq.heapify(heap)

    while len(pieces) < vocab_size and heap:
        negc, pair = heapq.heappop(heap)
        if pair_counts.get(pair, 0) != -negc or negc == 0:
            continue
        merges.append(pair)
        merged = pair[0] + pair[1]
        if merged not in known:
            known.add(merged)
            pieces.append(merged)
        touched = set()
        for wi in sorted(where.pop(pair, ())):
            old = words[wi]
            new = _merge_word(old, pair)
            f = freqs[wi]
            for p in zip(old, old[1:]):
                pair_counts[p] -= f
                touched.add(p)
            for p in zip(new, new[1:]):
                pair_counts[p] += f
                where[p].add(wi)
                touched.add(p)
            words[wi] = new
        for p in touched:
            c = pair_counts[p]
            if c > 0:
                heapq.heappush(heap, (-c, p))
            else:
                pair_counts.pop(p, None)
                where.pop(p, None)
        pair_counts.pop(pair, None)

    return Vocab(tuple(pieces), protected, tuple(merges))


def encode(vocab: Vocab, items: Iterable[Item]) -> list[int]:
    ids: list[int] = []
    for it in items:
        if isinstance(it, TaskToken):
            ids.append(vocab.piece_ids[it.surface] if it.surface in vocab.protected else UNK_ID)
        else:
            ids.extend(vocab._encode_word(it))
    return ids


def decode(vocab: Vocab, ids: Iterable[int]) -> list[Item]:
    out: list[Item] = []
    buf: list[str] = []

    def flush():
        if buf:
            out.extend(w for w in "".join(buf).split(MARKER) if w)
            buf.clear()

    n = len(vocab.pieces)
    for i in ids:
        if isinstance(i, bool) or not isinstance(i, int) or not 0 <= i < n:
            raise IndexError(f"piece id {i!r} out of range for vocab of size {n}")
        piece = vocab.pieces[i]
        if i == UNK_ID:
            buf.append(piece)
        elif i < len(RESERVED_PIECES):
            continue
        elif piece in vocab.protected:
            flush()
            out.append(_SURFACE_TO_TOKEN.get(piece, piece))
        else:
            buf.append(piece)
    flush()
    return out


def save_vocab(vocab: Vocab, path: str | os.PathLike) -> None:
    lines = [
        FORMAT_TAG,
        f"vocab_size {len(vocab.pieces)}",
        "protected " + " ".join(sorted(vocab.protected)),
        "pieces",
    ]
    lines += [f"{i}\t{p}" for i, p in enumerate(vocab.pieces)]
    lines.append("merges")
    lines += [f"{a}\t{b}" for a, b in vocab.merges]
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def load_vocab(path: str | os.PathLike) -> Vocab:
    lines = Path(path).read_text(encoding="utf-8").split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if len(lines) < 4 or lines[0] != FORMAT_TAG:
        raise ValueError(f"{path}: not a vocab file (expected header {FORMAT_TAG!r})")
    try:
        size = int(lines[1].split(" ", 1)[1])
        protected = lines[2].split(" ")[1:]
        if lines[3] != "pieces":
            raise ValueError("missing 'pieces' section")
        pieces = []
        k = 4
        for k in range(4, 4 + size):
            idx, piece = lines[k].split("\t", 1)
            if int(idx) != len(pieces):
                raise ValueError(f"piece ids must be dense, got {idx}")
            pieces.append(piece)
        k = 4 + size
        if lines[k] != "merges":
            raise ValueError("missing 'merges' section")
        merges = [tuple(line.split("\t", 1)) for line in lines[k + 1:]]
    except (IndexError, ValueError) as exc:
        raise ValueError(f"{path}: malformed vocab file: {exc}") from None
    return Vocab(tuple(pieces), frozenset(p for p in protected if p), tuple(merges))
