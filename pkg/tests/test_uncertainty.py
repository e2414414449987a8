"""Entropy, corrected reweighting, and critical-step classification."""
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tokensteer.errors import AlignmentError, InvalidDistributionError
from tokensteer.model import StepDistribution, TokenCandidate
from tokensteer.uncertainty import (
    HighlightConfig,
    ImportanceProfile,
    classify_step,
    corrected_entropy,
    corrected_weights,
    shannon_entropy,
)


def entropy_oracle(ps):
    """Independent direct-summation oracle (renormalize, then -sum q ln q)."""
    total = math.fsum(ps)
    return -math.fsum(p / total * math.log(p / total) for p in ps if p > 0)


def make_step(probs, texts=None):
    texts = texts or [f"t{i}" for i in range(len(probs))]
    return StepDistribution(
        step_index=0,
        candidates=tuple(
            TokenCandidate(text=t, prob=p, rank=r)
            for r, (t, p) in enumerate(zip(texts, probs))
        ),
    )


class TestShannonEntropy:
    def test_uniform_four(self):
        assert shannon_entropy([0.25, 0.25, 0.25, 0.25]) == pytest.approx(
            math.log(4), abs=1e-12
        )

    def test_point_mass(self):
        assert shannon_entropy([1.0]) == 0.0

    def test_skewed_three(self):
        # Frozen from the direct-summation oracle: H(0.5, 0.25, 0.25).
        assert shannon_entropy([0.5, 0.25, 0.25]) == pytest.approx(1.039721, abs=1e-6)

    def test_renormalizes_truncated_mass(self):
        # Same shape at half scale must give the same entropy.
        assert shannon_entropy([0.25, 0.125, 0.125]) == pytest.approx(
            shannon_entropy([0.5, 0.25, 0.25]), abs=1e-12
        )

    def test_zero_entries_ignored(self):
        assert shannon_entropy([0.5, 0.5, 0.0]) == pytest.approx(math.log(2), abs=1e-12)

    def test_negative_probability_rejected(self):
        with pytest.raises(InvalidDistributionError):
            shannon_entropy([0.5, -0.1])

    def test_all_zero_rejected(self):
        with pytest.raises(InvalidDistributionError):
            shannon_entropy([0.0, 0.0])

    def test_empty_rejected(self):
        with pytest.raises(InvalidDistributionError):
            shannon_entropy([])

    def test_above_one_sum_rejected(self):
        with pytest.raises(InvalidDistributionError):
            shannon_entropy([0.9, 0.9])

    @given(
        st.lists(st.floats(min_value=1e-6, max_value=1.0), min_size=1, max_size=12)
    )
    def test_matches_oracle(self, raw):
        total = sum(raw)
        ps = [p / total for p in raw]
        assert shannon_entropy(ps) == pytest.approx(entropy_oracle(ps), abs=1e-9)

    @given(
        st.lists(st.floats(min_value=1e-6, max_value=1.0), min_size=2, max_size=10),
        st.randoms(),
    )
    def test_permutation_invariant(self, raw, rng):
        total = sum(raw)
        ps = [p / total for p in raw]
        shuffled = ps[:]
        rng.shuffle(shuffled)
        assert shannon_entropy(shuffled) == pytest.approx(
            shannon_entropy(ps), abs=1e-9
        )

    @given(st.integers(min_value=1, max_value=16))
    def test_bounded_by_log_k(self, k):
        h = shannon_entropy([1.0 / k] * k)
        assert 0.0 <= h <= math.log(k) + 1e-12
        assert h == pytest.approx(math.log(k), abs=1e-9)


class TestCorrectedWeights:
    def test_zero_scores_zero_alpha_point_mass(self):
        step = make_step([0.4, 0.3, 0.2])
        profile = ImportanceProfile((0.0, 0.0), ("Minor", "Minor"))
        cfg = HighlightConfig(alpha=0.0)
        assert corrected_weights(step, profile, cfg) == [1.0, 0.0, 0.0]

    def test_symmetric_full_score(self):
        step = make_step([0.5, 0.5])
        profile = ImportanceProfile((1.0,), ("Significant",))
        cfg = HighlightConfig(alpha=0.0, beta=1.0)
        w = corrected_weights(step, profile, cfg)
        assert w == pytest.approx([0.5, 0.5], abs=1e-12)

    def test_flattening_worked_example(self):
        # (0.9, 0.1), s1=1, beta=0.5, alpha=0 -> (0.75, 0.25), frozen from the
        # brute-force reweighting oracle.
        step = make_step([0.9, 0.1])
        profile = ImportanceProfile((1.0,), ("Significant",))
        cfg = HighlightConfig(alpha=0.0, beta=0.5)
        w = corrected_weights(step, profile, cfg)
        assert w == pytest.approx([0.75, 0.25], abs=1e-3)

    def test_incorrect_category_forces_zero(self):
        step = make_step([0.6, 0.4])
        profile = ImportanceProfile((0.9,), ("Incorrect",))
        cfg = HighlightConfig(alpha=0.0)
        assert corrected_weights(step, profile, cfg) == [1.0, 0.0]

    def test_misaligned_profile_rejected(self):
        step = make_step([0.5, 0.3, 0.2])
        profile = ImportanceProfile((0.5,), ("Minor",))
        with pytest.raises(AlignmentError):
            corrected_weights(step, profile, HighlightConfig())

    def test_order_preserved(self):
        step = make_step([0.5, 0.1, 0.3])  # rank order is by descending prob
        # (constructor enforces rank-0 max; build a legal non-sorted tail)
        profile = ImportanceProfile((1.0, 0.0), ("Significant", "Minor"))
        cfg = HighlightConfig(alpha=0.0, beta=1.0)
        w = corrected_weights(step, profile, cfg)
        assert w[1] > 0.0 and w[2] == 0.0

    @given(
        st.lists(st.floats(min_value=0.01, max_value=1.0), min_size=1, max_size=8),
        st.data(),
    )
    def test_valid_distribution(self, raw, data):
        total = sum(raw) * 1.0001
        probs = sorted((p / total for p in raw), reverse=True)
        step = make_step(probs)
        n_alts = len(probs) - 1
        scores = tuple(
            data.draw(st.floats(min_value=0.0, max_value=1.0)) for _ in range(n_alts)
        )
        cats = tuple(
            data.draw(st.sampled_from(["Significant", "Minor", "Incorrect"]))
            for _ in range(n_alts)
        )
        cfg = HighlightConfig(
            alpha=data.draw(st.floats(min_value=0.0, max_value=0.5)),
            beta=data.draw(st.floats(min_value=0.1, max_value=1.0)),
        )
        w = corrected_weights(step, ImportanceProfile(scores, cats), cfg)
        assert all(x >= 0 for x in w)
        assert sum(w) == pytest.approx(1.0, abs=1e-9)


class TestCorrectedEntropy:
    def test_all_minor_zero_alpha_is_zero(self):
        step = make_step([0.4, 0.35, 0.25])
        profile = ImportanceProfile((0.0, 0.0), ("Minor", "Minor"))
        assert corrected_entropy(step, profile, HighlightConfig(alpha=0.0)) == 0.0

    def test_symmetric_ln2(self):
        step = make_step([0.5, 0.5])
        profile = ImportanceProfile((1.0,), ("Significant",))
        cfg = HighlightConfig(alpha=0.0, beta=1.0)
        assert corrected_entropy(step, profile, cfg) == pytest.approx(
            math.log(2), abs=1e-12
        )

    def test_worked_example(self):
        step = make_step([0.9, 0.1])
        profile = ImportanceProfile((1.0,), ("Significant",))
        cfg = HighlightConfig(alpha=0.0, beta=0.5)
        assert corrected_entropy(step, profile, cfg) == pytest.approx(
            0.562335, abs=1e-3
        )

    def test_anti_false_positive(self):
        # Raw entropy can be huge; zero scores with alpha=0 silence it.
        step = make_step([0.26, 0.25, 0.25, 0.24])
        profile = ImportanceProfile((0.0,) * 3, ("Minor",) * 3)
        assert shannon_entropy(step.probs()) > 1.0
        assert corrected_entropy(step, profile, HighlightConfig(alpha=0.0)) == 0.0

    @given(
        st.floats(min_value=0.5, max_value=0.99),
        st.floats(min_value=0.1, max_value=1.0),
        st.floats(min_value=0.0, max_value=0.3),
        st.floats(min_value=0.0, max_value=1.0),
        st.floats(min_value=0.0, max_value=1.0),
    )
    @settings(max_examples=300)
    def test_two_candidate_monotonicity(self, p0, beta, alpha, s_lo, s_hi):
        # Corrected entropy grows with the alternative's score while the
        # reweighted alternative mass stays at or below one half.
        s_lo, s_hi = min(s_lo, s_hi), max(s_lo, s_hi)
        step = make_step([p0, 1.0 - p0])
        cfg = HighlightConfig(alpha=alpha, beta=beta)

        def alt_mass(s):
            w = corrected_weights(
                step, ImportanceProfile((s,), ("Significant",)), cfg
            )
            return w[1]

        if alt_mass(s_hi) <= 0.5:
            h_lo = corrected_entropy(step, ImportanceProfile((s_lo,), ("Significant",)), cfg)
            h_hi = corrected_entropy(step, ImportanceProfile((s_hi,), ("Significant",)), cfg)
            assert h_hi >= h_lo - 1e-12


class TestClassifyStep:
    def test_minor_and_incorrect_never_highlight(self):
        step = make_step([0.4, 0.3, 0.3])
        profile = ImportanceProfile((0.9, 0.9), ("Minor", "Incorrect"))
        ann = classify_step(step, profile, HighlightConfig())
        assert not ann.highlighted
        assert ann.intensity == 0.0

    def test_significant_above_threshold(self):
        # H' ~= 0.69 nats with tau 0.25 and h_max 1.4 -> intensity H'/1.4
        # (0.69 / 1.4 = 0.493, checked by hand).
        assert 0.69 / 1.4 == pytest.approx(0.493, abs=1e-3)
        step = make_step([0.5, 0.5])
        profile = ImportanceProfile((1.0,), ("Significant",))
        cfg = HighlightConfig(alpha=0.0, beta=1.0, tau=0.25, h_max=1.4)
        ann = classify_step(step, profile, cfg)
        assert ann.highlighted
        assert ann.corrected_entropy == pytest.approx(0.69, abs=5e-3)
        assert ann.intensity == pytest.approx(ann.corrected_entropy / 1.4, abs=1e-12)

    def test_significant_below_threshold(self):
        step = make_step([0.97, 0.03])
        profile = ImportanceProfile((0.3,), ("Significant",))
        cfg = HighlightConfig(tau=0.25)
        assert corrected_entropy(step, profile, cfg) < 0.25
        ann = classify_step(step, profile, cfg)
        assert not ann.highlighted

    def test_intensity_clamped_to_one(self):
        step = make_step([0.2, 0.2, 0.2, 0.2, 0.2])
        profile = ImportanceProfile((1.0,) * 4, ("Significant",) * 4)
        cfg = HighlightConfig(alpha=0.0, beta=1.0, tau=0.25, h_max=1.4)
        ann = classify_step(step, profile, cfg)
        assert ann.intensity == 1.0

    def test_visible_starts_true(self):
        step = make_step([0.5, 0.5])
        profile = ImportanceProfile((1.0,), ("Significant",))
        assert classify_step(step, profile, HighlightConfig()).visible

    @given(
        st.lists(st.floats(min_value=0.01, max_value=1.0), min_size=2, max_size=6),
        st.data(),
    )
    def test_never_highlights_without_significant(self, raw, data):
        total = sum(raw) * 1.001
        probs = sorted((p / total for p in raw), reverse=True)
        step = make_step(probs)
        n = len(probs) - 1
        scores = tuple(data.draw(st.floats(0.0, 1.0)) for _ in range(n))
        cats = tuple(data.draw(st.sampled_from(["Minor", "Incorrect"])) for _ in range(n))
        cfg = HighlightConfig(
            alpha=data.draw(st.floats(0.0, 1.0)),
            beta=data.draw(st.floats(0.1, 1.0)),
            tau=data.draw(st.floats(0.0, 0.5)),
            h_max=2.0,
        )
        ann = classify_step(step, ImportanceProfile(scores, cats), cfg)
        assert not ann.highlighted


class TestValidation:
    def test_profile_score_range(self):
        with pytest.raises(InvalidDistributionError):
            ImportanceProfile((1.2,), ("Minor",))

    def test_profile_unknown_category(self):
        with pytest.raises(InvalidDistributionError):
            ImportanceProfile((0.5,), ("Critical",))

    def test_config_tau_below_h_max(self):
        with pytest.raises(InvalidDistributionError):
            HighlightConfig(tau=2.0, h_max=1.0)

    def test_config_beta_range(self):
        with pytest.raises(InvalidDistributionError):
            HighlightConfig(beta=0.0)

    def test_step_importance_is_max_effective_score(self):
        profile = ImportanceProfile((0.4, 0.9, 0.7), ("Minor", "Incorrect", "Significant"))
        assert profile.step_importance == 0.7
