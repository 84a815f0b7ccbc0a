"""Independent reference computations used to check the package.

None of these import the code paths they are compared against.
"""

from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np

SURFACE = {"SC": "[SC]", "EP": "[EP]", "NE_OPEN": "[NE]", "NE_CLOSE": "[/NE]"}


def all_strings(alphabet: str, max_len: int) -> list[tuple[str, ...]]:
    return [s for n in range(max_len + 1) for s in itertools.product(alphabet, repeat=n)]


def edit_graph_distances(alphabet: str, max_len: int) -> tuple[list, np.ndarray]:
    """All-pairs minimal edit-script length by breadth-first search on the string graph.

    Nodes are every string up to ``max_len``; edges are one insertion,
    deletion or substitution. Scripts never need to leave this length range
    because an optimal script can substitute, then delete, then insert.
    """
    nodes = all_strings(alphabet, max_len)
    index = {s: i for i, s in enumerate(nodes)}
    n = len(nodes)
    adj = np.zeros((n, n), dtype=bool)
    for s, i in index.items():
        for k in range(len(s)):
            adj[i, index[s[:k] + s[k + 1:]]] = True
            for c in alphabet:
                if c != s[k]:
                    adj[i, index[s[:k] + (c,) + s[k + 1:]]] = True
        if len(s) < max_len:
            for k in range(len(s) + 1):
                for c in alphabet:
                    adj[i, index[s[:k] + (c,) + s[k:]]] = True
    dist = np.full((n, n), -1, dtype=np.int16)
    np.fill_diagonal(dist, 0)
    frontier = np.eye(n, dtype=bool)
    reached = frontier.copy()
    step = 0
    adj_f = adj.astype(np.float32)
    while frontier.any():
        step += 1
        nxt = (frontier.astype(np.float32) @ adj_f) > 0
        nxt &= ~reached
        dist[nxt] = step
        reached |= nxt
        frontier = nxt
    return nodes, dist


def exhaustive_alignment_cost(ref, hyp, bound: int | None = None) -> int:
    """Minimal cost over every monotone alignment path, enumerated without memoisation.

    ``bound`` prunes partial paths that already cost more than a known
    script; the result is still the exact minimum when one exists within it.
    """
    best = [bound if bound is not None else len(ref) + len(hyp)]

    def walk(i, j, cost):
        if cost > best[0]:
            return
        if i == len(ref) and j == len(hyp):
            best[0] = min(best[0], cost)
            return
        if i < len(ref) and j < len(hyp):
            walk(i + 1, j + 1, cost + (ref[i] != hyp[j]))
        if i < len(ref):
            walk(i + 1, j, cost + 1)
        if j < len(hyp):
            walk(i, j + 1, cost + 1)

    walk(0, 0, 0)
    return best[0]


def wagner_fischer(a, b) -> int:
    """Two-row Levenshtein distance."""
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def max_collar_matching(ref, hyp, collar: float) -> int:
    """Maximum matching size by exhaustive search over subsets of hypothesis times."""
    ref, hyp = list(ref), list(hyp)

    @lru_cache(maxsize=None)
    def best(i, used):
        if i == len(ref):
            return 0
        top = best(i + 1, used)
        for j, h in enumerate(hyp):
            if not used >> j & 1 and abs(ref[i] - h) <= collar + 1e-9:
                top = max(top, 1 + best(i + 1, used | 1 << j))
        return top

    return best(0, 0)


def greedy_pack_oracle(bounds, max_duration: float) -> list[list[int]]:
    """Pack by enumerating every prefix window from each start and keeping the longest that fits."""
    out = []
    i = 0
    while i < len(bounds):
        best = i + 1
        for j in range(i + 1, len(bounds) + 1):
            window = bounds[i:j]
            if max(e for _, e in window) - window[0][0] <= max_duration + 1e-9:
                best = j
        out.append(list(range(i, best)))
        i = best
    return out


def augment_reference(segments, tasks) -> list[str]:
    """Rule-by-rule token insertion over surface strings.

    ``segments`` are ``(speaker, words, spans)`` triples; ``tasks`` a set of
    ``"sc"``, ``"ep"``, ``"ne"``.
    """
    out: list[str] = []
    prev_speaker = None
    for k, (speaker, words, spans) in enumerate(segments):
        # rule 1: a speaker change inside the utterance
        if "sc" in tasks and k > 0 and speaker != prev_speaker:
            out.append("[SC]")
        text = list(words)
        # rule 2: wrap entities, right to left so indices stay valid
        if "ne" in tasks:
            for s, e in sorted(spans, reverse=True):
                text.insert(e + 1, "[/NE]")
                text.insert(s, "[NE]")
        out.extend(text)
        # rule 3: every segment end is an endpoint
        if "ep" in tasks:
            out.append("[EP]")
        prev_speaker = speaker
    return out


def stack_entities(surfaces: list[str]) -> tuple[list[str], int, int]:
    """Entity extraction with an explicit stack: a close pops the innermost open only."""
    stack: list[int] = []
    words: list[str] = []
    ents, bad_open, bad_close = [], 0, 0
    for s in surfaces:
        if s == "[NE]":
            stack.append(len(words))
        elif s == "[/NE]":
            if not stack:
                bad_close += 1
                continue
            start = stack.pop()
            # anything still open below the popped entry can never close validly
            bad_open += len(stack)
            stack.clear()
            if start == len(words):
                bad_open += 1
                bad_close += 1
            else:
                ents.append(" ".join(words[start:]))
        elif s not in ("[SC]", "[EP]"):
            words.append(s)
    return ents, bad_open + len(stack), bad_close
