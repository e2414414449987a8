"""Building the alternatives list for a step and applying a selection.

Expansion fans out preview and assessment work concurrently; entries are
created in likelihood order and never reorder as results arrive, they only
transition pending -> ready/unavailable. Selection regenerates the suffix
with several samples and keeps the one closest to the original completion,
so a one-token change disturbs downstream code as little as possible.
"""
from __future__ import annotations

import asyncio
import re
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .analysis import AlternativeAssessment, AssessmentRequest, AssessmentService
from .distance import select_closest_suffix, suffix_distance
from .errors import (
    AssessmentUnavailableError,
    BackendError,
    InvalidAlternativeError,
    ProtocolError,
    SelectionFailedError,
    UnknownStepError,
)
from .model import (
    BaseCompletion,
    CompletionContext,
    GenerationParams,
    StepDistribution,
    SuffixSample,
    TokenCandidate,
)
from .uncertainty import CATEGORY_INCORRECT, CATEGORY_MINOR, ImportanceProfile

PENDING = "pending"
READY = "ready"
UNAVAILABLE = "unavailable"

# How much document prefix the analyzer gets to see.
CONTEXT_CHARS = 400


@dataclass
class AlternativePreview:
    """One alternative's row in the panel; fills in asynchronously."""

    alt_rank: int
    token_text: str
    probability: float
    preview: str | None = None
    preview_status: str = PENDING
    assessment: AlternativeAssessment | None = None
    assessment_status: str = PENDING

    @property
    def flagged_incorrect(self) -> bool:
        return self.assessment is not None and self.assessment.category == CATEGORY_INCORRECT


@dataclass(frozen=True)
class RegenerationResult:
    """Outcome of replacing a token and regenerating the suffix."""

    new_completion: BaseCompletion
    chosen_sample_index: int
    distance_to_base: int
    edited_step_index: int


@dataclass
class StepExpansion:
    """Live fan-out state for one step's alternatives."""

    step_index: int
    entries: list[AlternativePreview]
    tasks: list[asyncio.Task] = field(default_factory=list)

    @property
    def settled(self) -> bool:
        return all(t.done() for t in self.tasks)

    async def wait(self) -> None:
        if self.tasks:
            await asyncio.gather(*self.tasks, return_exceptions=True)

    def cancel(self) -> None:
        for t in self.tasks:
            if not t.done():
                t.cancel()


def profile_from_entries(entries: Sequence[AlternativePreview]) -> ImportanceProfile:
    """Importance profile over the current assessment state of a step.

    Unresolved entries contribute score 0 / Minor, so provisional profiles
    never highlight a step before any significant evidence arrives.
    """
    scores, categories = [], []
    for e in entries:
        if e.assessment_status == READY and e.assessment is not None:
            scores.append(e.assessment.importance_score)
            categories.append(e.assessment.category)
        else:
            scores.append(0.0)
            categories.append(CATEGORY_MINOR)
    return ImportanceProfile(tuple(scores), tuple(categories))


class AlternativeExpander:
    """Runs the preview + assessment fan-out against the configured backends."""

    def __init__(
        self,
        completion_client,
        assessments: AssessmentService,
        *,
        params: GenerationParams | None = None,
        on_event: Callable[[str, str, int, int], None] | None = None,
    ):
        self._client = completion_client
        self._assessments = assessments
        self._params = params or GenerationParams()
        self._on_event = on_event or (lambda session_key, kind, step, rank: None)
        self._preview_cache: dict[tuple, str] = {}

    def start_step(
        self,
        session_key: str,
        ctx: CompletionContext,
        completion: BaseCompletion,
        step_index: int,
    ) -> StepExpansion:
        """Create the entries for a step and spawn their fill tasks.

        A step with a single candidate expands to an empty list; that is a
        valid outcome, not an error.
        """
        if not 0 <= step_index < len(completion.steps):
            raise UnknownStepError(f"step {step_index} out of range")
        step = completion.steps[step_index]
        entries = [
            AlternativePreview(alt_rank=c.rank, token_text=c.text, probability=c.prob)
            for c in step.alternatives
        ]
        expansion = StepExpansion(step_index=step_index, entries=entries)
        before_tokens = [s.chosen.text for s in completion.steps[:step_index]]
        for entry in entries:
            task = asyncio.create_task(
                self._fill_entry(session_key, ctx, completion, step, before_tokens, entry)
            )
            expansion.tasks.append(task)
        return expansion

    async def _fill_entry(
        self,
        session_key: str,
        ctx: CompletionContext,
        completion: BaseCompletion,
        step: StepDistribution,
        before_tokens: list[str],
        entry: AlternativePreview,
    ) -> None:
        cache_key = (session_key, entry.token_text, tuple(before_tokens))
        try:
            if cache_key in self._preview_cache:
                entry.preview = self._preview_cache[cache_key]
            else:
                entry.preview = await self._client.request_preview(
                    ctx, before_tokens, entry.token_text, self._params
                )
                self._preview_cache[cache_key] = entry.preview
            entry.preview_status = READY
        except (BackendError, ProtocolError):
            entry.preview = None
            entry.preview_status = UNAVAILABLE
        self._on_event(session_key, "preview-ready", step.step_index, entry.alt_rank)

        req = AssessmentRequest(
            base_completion=step.chosen.text + completion.text_after(step.step_index),
            top_token=step.chosen.text,
            alternative_token=entry.token_text,
            preview=entry.preview or "",
            surrounding_context=ctx.prefix[-CONTEXT_CHARS:],
        )
        try:
            # Key carries the request itself: the same (session, step, alt)
            # on the same completion dedups, while a regenerated step that
            # reuses an index gets its own assessment.
            entry.assessment = await self._assessments.assess(
                req, key=(session_key, step.step_index, entry.alt_rank, req)
            )
            entry.assessment_status = READY
        except AssessmentUnavailableError:
            entry.assessment = None
            entry.assessment_status = UNAVAILABLE
        self._on_event(session_key, "assessment-ready", step.step_index, entry.alt_rank)


def _synthesize_steps(text: str) -> tuple[StepDistribution, ...]:
    """Point-mass steps for a plain-text suffix (one per line fragment)."""
    chunks = re.findall(r"[^\n]*\n|[^\n]+", text)
    return tuple(
        StepDistribution(
            step_index=i, candidates=(TokenCandidate(text=chunk, prob=1.0, rank=0),)
        )
        for i, chunk in enumerate(chunks)
    )


def _regenerated_steps(chosen: SuffixSample) -> tuple[StepDistribution, ...]:
    if chosen.steps is not None and "".join(s.chosen.text for s in chosen.steps) == chosen.text:
        return chosen.steps
    return _synthesize_steps(chosen.text)


async def apply_selection(
    ctx: CompletionContext,
    completion: BaseCompletion,
    step_index: int,
    alt_rank: int,
    client,
    params: GenerationParams | None = None,
) -> RegenerationResult:
    """Replace one token with an alternative and regenerate downstream code.

    Requests n_samples suffixes continuing from the alternative token and
    keeps the one with minimal edit distance to the original post-step
    text. The edited step becomes a single-candidate choice point; the
    untouched prefix steps keep their full distributions.
    """
    params = params or GenerationParams()
    if not 0 <= step_index < len(completion.steps):
        raise UnknownStepError(f"step {step_index} out of range")
    step = completion.steps[step_index]
    if alt_rank == 0:
        raise InvalidAlternativeError("rank 0 is the current token, not an alternative")
    if not 1 <= alt_rank < len(step.candidates):
        raise InvalidAlternativeError(
            f"step {step_index} has no alternative at rank {alt_rank}"
        )
    alt = step.candidates[alt_rank]

    before = completion.text_before(step_index)
    base_suffix = completion.text_after(step_index)
    committed = before + alt.text

    # A backend with deterministic regeneration cannot produce sample
    # diversity, so one sample is enough.
    n = params.n_samples
    if getattr(client, "regeneration_temperature", None) == 0.0:
        n = 1
    batch = await client.request_suffix_samples(ctx, committed, n, params)
    if not batch.samples:
        raise SelectionFailedError("no usable suffix samples")

    idx, chosen_text = select_closest_suffix(batch.texts(), base_suffix)
    distance = suffix_distance(chosen_text, base_suffix)
    chosen = batch.samples[idx]

    edited_step = StepDistribution(
        step_index=step_index,
        candidates=(TokenCandidate(text=alt.text, prob=alt.prob, rank=0),),
    )
    regen = _regenerated_steps(chosen)
    stitched = list(completion.steps[:step_index]) + [edited_step] + [
        StepDistribution(step_index=step_index + 1 + i, candidates=s.candidates)
        for i, s in enumerate(regen)
    ]
    new_completion = BaseCompletion(
        text=before + alt.text + chosen.text,
        steps=tuple(stitched),
        finish_reason=completion.finish_reason,
    )
    return RegenerationResult(
        new_completion=new_completion,
        chosen_sample_index=idx,
        distance_to_base=distance,
        edited_step_index=step_index,
    )
