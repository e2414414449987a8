"""Pure math over token distributions: entropy, importance-corrected
reweighting, critical-step classification, and render-intensity mapping.

Raw next-token entropy is a poor highlighting signal on its own: it fires
on inconsequential steps (variable names, message strings) and stays quiet
when a confidently-emitted top token is exactly the thing a reviewer should
question. The corrected entropy here reweights each alternative by how much
its change would matter, so a step lights up only when the model considered
an alternative that is both plausible and consequential.

Everything in this module is stateless and safe under concurrent callers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import AlignmentError, InvalidDistributionError
from .model import PROB_SUM_TOLERANCE, StepDistribution

CATEGORY_SIGNIFICANT = "Significant"
CATEGORY_MINOR = "Minor"
CATEGORY_INCORRECT = "Incorrect"
VALID_CATEGORIES = frozenset({CATEGORY_SIGNIFICANT, CATEGORY_MINOR, CATEGORY_INCORRECT})


@dataclass(frozen=True)
class ImportanceProfile:
    """Per-alternative importance scores and categories for one step.

    Entry i describes the candidate at rank i+1 (rank 0 never gets scored).
    An Incorrect alternative contributes an effective score of 0 no matter
    what the analysis backend returned: invalid code must not drive
    highlighting.
    """

    scores: tuple[float, ...]
    categories: tuple[str, ...]

    def __post_init__(self):
        if len(self.scores) != len(self.categories):
            raise AlignmentError(
                f"{len(self.scores)} scores vs {len(self.categories)} categories"
            )
        for s in self.scores:
            if not 0.0 <= s <= 1.0 or math.isnan(s):
                raise InvalidDistributionError(f"importance score {s!r} outside [0, 1]")
        for c in self.categories:
            if c not in VALID_CATEGORIES:
                raise InvalidDistributionError(f"unknown category {c!r}")

    @classmethod
    def empty(cls, n_alternatives: int) -> "ImportanceProfile":
        """Profile for a step with no assessments yet: all zero, all Minor."""
        return cls((0.0,) * n_alternatives, (CATEGORY_MINOR,) * n_alternatives)

    def effective_scores(self) -> tuple[float, ...]:
        return tuple(
            0.0 if cat == CATEGORY_INCORRECT else s
            for s, cat in zip(self.scores, self.categories)
        )

    @property
    def has_significant(self) -> bool:
        return CATEGORY_SIGNIFICANT in self.categories

    @property
    def step_importance(self) -> float:
        """Step-level aggregate used to order analysis work: max effective score."""
        eff = self.effective_scores()
        return max(eff) if eff else 0.0


@dataclass(frozen=True)
class HighlightConfig:
    """Tunable parameters of the corrected-entropy highlighter.

    alpha   baseline weight floor so zero-scored alternatives keep a trace
            of mass; alpha = 0 makes them vanish entirely.
    beta    probability-flattening exponent in (0, 1]; values below 1 lift
            low-probability alternatives so a confidently-wrong top token
            can still be flagged.
    tau     highlight threshold on the corrected entropy, in nats.
    h_max   intensity normalization ceiling, in nats.
    """

    alpha: float = 0.05
    beta: float = 0.5
    tau: float = 0.25
    h_max: float = 1.4

    def __post_init__(self):
        for name in ("alpha", "beta", "tau", "h_max"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise InvalidDistributionError(f"{name} must be finite, got {v!r}")
        if self.alpha < 0:
            raise InvalidDistributionError(f"alpha must be >= 0, got {self.alpha}")
        if not 0.0 < self.beta <= 1.0:
            raise InvalidDistributionError(f"beta must be in (0, 1], got {self.beta}")
        if self.tau < 0:
            raise InvalidDistributionError(f"tau must be >= 0, got {self.tau}")
        if self.h_max <= 0:
            raise InvalidDistributionError(f"h_max must be > 0, got {self.h_max}")
        if self.tau >= self.h_max:
            raise InvalidDistributionError(
                f"tau ({self.tau}) must be below h_max ({self.h_max})"
            )


@dataclass
class HighlightAnnotation:
    """Rendering decision for one step. `visible` is user-controlled."""

    step_index: int
    corrected_entropy: float
    highlighted: bool
    intensity: float
    visible: bool = True

    def __post_init__(self):
        if not self.highlighted and self.intensity != 0.0:
            raise InvalidDistributionError("non-highlighted step must have intensity 0")


def shannon_entropy(probs: Sequence[float] | Iterable[float]) -> float:
    """Entropy in nats of a (possibly top-k-truncated) probability list.

    The list is renormalized before summation, so truncated tail mass is
    ignored rather than modeled as an extra outcome. 0 * ln 0 counts as 0.
    """
    ps = list(probs)
    if not ps:
        raise InvalidDistributionError("empty probability list")
    for p in ps:
        if math.isnan(p) or p < 0.0 or p > 1.0:
            raise InvalidDistributionError(f"probability {p!r} outside [0, 1]")
    total = sum(ps)
    if total <= 0.0:
        raise InvalidDistributionError("all-zero probability list")
    if total > 1.0 + PROB_SUM_TOLERANCE:
        raise InvalidDistributionError(f"probabilities sum to {total}, above 1")
    h = 0.0
    for p in ps:
        if p > 0.0:
            q = p / total
            h -= q * math.log(q)
    return max(h, 0.0)


def corrected_weights(
    dist: StepDistribution,
    profile: ImportanceProfile,
    cfg: HighlightConfig,
) -> list[float]:
    """Reweight a step's candidates by the importance of each alternative.

    The emitted token keeps weight p0^beta; alternative i gets
    pi^beta * (alpha + s_i) with s_i its effective importance score.
    Returns the weights normalized to sum 1, order preserved.
    """
    alts = dist.alternatives
    if len(profile.scores) != len(alts):
        raise AlignmentError(
            f"profile covers {len(profile.scores)} alternatives, step has {len(alts)}"
        )
    weights = [dist.chosen.prob**cfg.beta]
    for cand, score in zip(alts, profile.effective_scores()):
        weights.append(cand.prob**cfg.beta * (cfg.alpha + score))
    total = sum(weights)
    if total <= 0.0:
        raise InvalidDistributionError("corrected weights sum to zero")
    return [w / total for w in weights]


def corrected_entropy(
    dist: StepDistribution,
    profile: ImportanceProfile,
    cfg: HighlightConfig,
) -> float:
    """Entropy in nats of the importance-corrected candidate distribution."""
    return shannon_entropy(corrected_weights(dist, profile, cfg))


def classify_step(
    dist: StepDistribution,
    profile: ImportanceProfile,
    cfg: HighlightConfig,
) -> HighlightAnnotation:
    """Decide whether a step is a critical decision point worth highlighting.

    A step is highlighted iff some alternative is categorized Significant
    and the corrected entropy reaches tau. Intensity maps corrected entropy
    linearly onto [0, 1] with ceiling h_max; non-highlighted steps get 0.
    """
    h = corrected_entropy(dist, profile, cfg)
    highlighted = profile.has_significant and h >= cfg.tau
    intensity = min(max(h / cfg.h_max, 0.0), 1.0) if highlighted else 0.0
    return HighlightAnnotation(
        step_index=dist.step_index,
        corrected_entropy=h,
        highlighted=highlighted,
        intensity=intensity,
    )
