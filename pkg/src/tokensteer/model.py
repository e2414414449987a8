"""Core data model: token distributions, completion contexts, and completions.

These objects are produced by the backend gateway and consumed everywhere
else (uncertainty math, alternative expansion, sessions, the service).
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .errors import InvalidDistributionError

# Top-k truncation discards tail mass, so step probabilities may sum to
# anything in (0, 1]; a small epsilon absorbs float noise above 1.
PROB_SUM_TOLERANCE = 1e-6


@dataclass(frozen=True)
class TokenCandidate:
    """One candidate token at a generation step.

    Rank 0 is the token the model actually emitted; ranks are contiguous
    and ordered by descending probability.
    """

    text: str
    prob: float
    rank: int

    def __post_init__(self):
        if not 0.0 < self.prob <= 1.0:
            raise InvalidDistributionError(
                f"candidate prob must be in (0, 1], got {self.prob!r}"
            )
        if self.rank < 0:
            raise InvalidDistributionError(f"candidate rank must be >= 0, got {self.rank}")


@dataclass(frozen=True)
class StepDistribution:
    """Top-k candidates the model considered at one generation step."""

    step_index: int
    candidates: tuple[TokenCandidate, ...]

    def __post_init__(self):
        if not self.candidates:
            raise InvalidDistributionError("step needs at least one candidate")
        total = sum(c.prob for c in self.candidates)
        if total > 1.0 + PROB_SUM_TOLERANCE:
            raise InvalidDistributionError(
                f"step {self.step_index}: candidate probs sum to {total}, above 1"
            )
        ranks = [c.rank for c in self.candidates]
        if ranks != list(range(len(self.candidates))):
            raise InvalidDistributionError(
                f"step {self.step_index}: ranks must be contiguous from 0, got {ranks}"
            )
        top = self.candidates[0].prob
        if any(c.prob > top for c in self.candidates[1:]):
            raise InvalidDistributionError(
                f"step {self.step_index}: rank-0 candidate must have maximal probability"
            )

    @property
    def chosen(self) -> TokenCandidate:
        return self.candidates[0]

    @property
    def alternatives(self) -> tuple[TokenCandidate, ...]:
        return self.candidates[1:]

    def probs(self) -> list[float]:
        return [c.prob for c in self.candidates]


@dataclass(frozen=True)
class CompletionContext:
    """Document split at the cursor; the completion fills the gap."""

    prefix: str
    suffix: str
    language_hint: str = ""

    @property
    def document(self) -> str:
        return self.prefix + self.suffix


@dataclass(frozen=True)
class GenerationParams:
    """Knobs forwarded to the completion backend."""

    max_tokens: int = 128
    temperature: float = 0.0
    top_k: int = 10
    n_samples: int = 10

    def __post_init__(self):
        if self.max_tokens <= 0:
            raise ValueError(f"max_tokens must be positive, got {self.max_tokens}")
        if self.temperature < 0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")
        if self.top_k < 2:
            raise ValueError(f"top_k must be >= 2 (need alternatives), got {self.top_k}")
        if self.n_samples < 1:
            raise ValueError(f"n_samples must be >= 1, got {self.n_samples}")


@dataclass(frozen=True)
class BaseCompletion:
    """A full completion plus the per-step distributions behind it."""

    text: str
    steps: tuple[StepDistribution, ...]
    finish_reason: str = "stop"

    def __post_init__(self):
        if self.text and not self.steps:
            raise InvalidDistributionError("non-empty completion requires step data")
        emitted = "".join(s.chosen.text for s in self.steps)
        if emitted != self.text:
            raise InvalidDistributionError(
                "rank-0 tokens do not concatenate to the completion text"
            )

    @property
    def empty(self) -> bool:
        return not self.text

    def text_before(self, step_index: int) -> str:
        """Concatenation of emitted tokens strictly before the step."""
        return "".join(s.chosen.text for s in self.steps[:step_index])

    def text_after(self, step_index: int) -> str:
        """Concatenation of emitted tokens strictly after the step."""
        return "".join(s.chosen.text for s in self.steps[step_index + 1:])


@dataclass(frozen=True)
class SuffixSample:
    """One sampled continuation; step data present only if the backend sent it."""

    text: str
    steps: tuple[StepDistribution, ...] | None = None


@dataclass(frozen=True)
class SuffixSampleBatch:
    """Result of a multi-sample request; may be partial after backend errors."""

    samples: tuple[SuffixSample, ...] = field(default_factory=tuple)
    requested: int = 0

    @property
    def complete(self) -> bool:
        return len(self.samples) >= self.requested

    def texts(self) -> list[str]:
        return [s.text for s in self.samples]
