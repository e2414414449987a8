"""Edit distance against an exhaustive recursive oracle, plus suffix selection."""
import itertools
from functools import lru_cache

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tokensteer.distance import (
    LINE_FALLBACK_CHARS,
    edit_distance,
    select_closest_suffix,
    suffix_distance,
)


def recursive_oracle(a: str, b: str) -> int:
    """Textbook recursive definition, memoized; independent of the DP rows."""

    @lru_cache(maxsize=None)
    def go(i: int, j: int) -> int:
        if i == len(a):
            return len(b) - j
        if j == len(b):
            return len(a) - i
        return min(
            go(i + 1, j) + 1,
            go(i, j + 1) + 1,
            go(i + 1, j + 1) + (a[i] != b[j]),
        )

    return go(0, 0)


short_strings = st.text(alphabet="abcxyz", max_size=12)


class TestEditDistance:
    def test_identical(self):
        assert edit_distance("same", "same") == 0

    def test_pure_insertions(self):
        assert edit_distance("", "abc") == 3

    def test_kitten_sitting(self):
        # Frozen from the recursive oracle.
        assert recursive_oracle("kitten", "sitting") == 3
        assert edit_distance("kitten", "sitting") == 3

    def test_exhaustive_small_alphabet(self):
        words = [
            "".join(w)
            for n in range(0, 4)
            for w in itertools.product("abc", repeat=n)
        ]
        for a in words:
            for b in words:
                assert edit_distance(a, b) == recursive_oracle(a, b)

    @given(short_strings, short_strings)
    def test_matches_oracle(self, a, b):
        assert edit_distance(a, b) == recursive_oracle(a, b)

    @given(short_strings, short_strings)
    def test_symmetry(self, a, b):
        assert edit_distance(a, b) == edit_distance(b, a)

    @given(short_strings, short_strings)
    def test_identity_of_indiscernibles(self, a, b):
        assert (edit_distance(a, b) == 0) == (a == b)

    @given(short_strings, short_strings, short_strings)
    @settings(max_examples=300)
    def test_triangle_inequality(self, a, b, c):
        assert edit_distance(a, c) <= edit_distance(a, b) + edit_distance(b, c)

    @given(short_strings, short_strings)
    def test_length_difference_lower_bound(self, a, b):
        assert edit_distance(a, b) >= abs(len(a) - len(b))


class TestSuffixDistance:
    def test_equals_edit_distance_for_short_strings(self):
        assert suffix_distance("kitten", "sitting") == 3

    def test_long_strings_compared_by_line(self):
        a = ("x" * 100 + "\n") * 50  # 5050 chars, above the cutoff
        b = ("x" * 100 + "\n") * 49 + "y" * 100 + "\n"
        assert max(len(a), len(b)) > LINE_FALLBACK_CHARS
        assert suffix_distance(a, b) == 1  # one line substituted

    def test_bound_prunes_but_stays_exact_below(self):
        assert suffix_distance("abcdef", "abcxef", bound=3) == 1
        assert suffix_distance("aaaaaa", "bbbbbb", bound=2) == 3  # bound + 1


class TestSelectClosestSuffix:
    def test_exact_match_wins(self):
        samples = ["abcd", "abce", "xyz"]
        idx, text = select_closest_suffix(samples, "abce")
        assert (idx, text) == (1, "abce")
        assert edit_distance(text, "abce") == 0

    def test_tie_breaks_to_lowest_index(self):
        # Both at distance 1 from "abe"; frozen from the oracle.
        assert recursive_oracle("abc", "abe") == 1
        assert recursive_oracle("abd", "abe") == 1
        idx, text = select_closest_suffix(["abc", "abd"], "abe")
        assert (idx, text) == (0, "abc")

    def test_scripted_argmin(self):
        base = "return hashed"
        samples = [
            "return hashed.hex()",
            "return digest",
            "return hashed",
            "yield hashed",
            "return  hashed",
        ]
        expected = min(
            range(len(samples)), key=lambda i: recursive_oracle(samples[i], base)
        )
        idx, _ = select_closest_suffix(samples, base)
        assert idx == expected == 2

    def test_empty_samples_rejected(self):
        with pytest.raises(ValueError):
            select_closest_suffix([], "x")

    @given(st.lists(short_strings, min_size=1, max_size=8), short_strings)
    def test_member_always_distance_zero(self, samples, s):
        idx, text = select_closest_suffix(samples + [s], s)
        assert edit_distance(text, s) == 0

    @given(st.lists(short_strings, min_size=1, max_size=6), short_strings)
    def test_returns_true_argmin(self, samples, base):
        idx, text = select_closest_suffix(samples, base)
        dists = [recursive_oracle(x, base) for x in samples]
        assert recursive_oracle(text, base) == min(dists)
        assert idx == dists.index(min(dists))
