"""Edit distance and closest-suffix selection for minimal-disturbance
regeneration.

Distance is computed over raw characters, not token sequences: users judge
similarity visually, so the metric should match what they see. Suffixes
longer than LINE_FALLBACK_CHARS are compared line-by-line instead, which
keeps a 10-way comparison interactive on pathological inputs.
"""
from __future__ import annotations

from typing import Sequence

# Above this many characters, compare whole lines instead of characters.
LINE_FALLBACK_CHARS = 4096


def _levenshtein(a: Sequence, b: Sequence, bound: int | None = None) -> int:
    """Unit-cost Levenshtein over any two sequences.

    With `bound` set, gives exact answers up to `bound` and returns
    `bound + 1` as soon as the true distance provably exceeds it.
    """
    if a == b:
        return 0
    la, lb = len(a), len(b)
    if la == 0:
        return lb
    if lb == 0:
        return la
    if bound is not None and abs(la - lb) > bound:
        return bound + 1
    if lb > la:  # iterate over the longer sequence, keep rows short
        a, b = b, a
        la, lb = lb, la
    prev = list(range(lb + 1))
    for i in range(1, la + 1):
        ca = a[i - 1]
        cur = [i]
        row_min = i
        for j in range(1, lb + 1):
            d = min(
                cur[j - 1] + 1,          # insert
                prev[j] + 1,             # delete
                prev[j - 1] + (ca != b[j - 1]),  # substitute / match
            )
            cur.append(d)
            if d < row_min:
                row_min = d
        if bound is not None and row_min > bound:
            return bound + 1
        prev = cur
    return prev[lb]


def edit_distance(a: str, b: str) -> int:
    """Exact character-level edit distance (insert/delete/substitute, cost 1)."""
    return _levenshtein(a, b)


def suffix_distance(a: str, b: str, bound: int | None = None) -> int:
    """Distance used to rank regenerated suffixes against the original.

    Character-level up to LINE_FALLBACK_CHARS; beyond that, line-level.
    """
    if max(len(a), len(b)) > LINE_FALLBACK_CHARS:
        return _levenshtein(a.splitlines(keepends=True), b.splitlines(keepends=True), bound)
    return _levenshtein(a, b, bound)


def select_closest_suffix(samples: Sequence[str], base_suffix: str) -> tuple[int, str]:
    """Pick the sample with minimal distance to the original suffix.

    Ties break toward the lowest index, so repeated runs over the same
    samples always pick the same one.
    """
    if not samples:
        raise ValueError("samples must be non-empty")
    best_index = 0
    best_dist = suffix_distance(samples[0], base_suffix)
    for i in range(1, len(samples)):
        if best_dist == 0:
            break
        d = suffix_distance(samples[i], base_suffix, bound=best_dist)
        if d < best_dist:
            best_index, best_dist = i, d
    return best_index, samples[best_index]
