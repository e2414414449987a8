"""Completion wire protocol: request building and response parsing.

The protocol is JSON over HTTP, completion-style: one endpoint accepting a
document prefix/suffix plus sampling knobs, returning one choice per
requested sample with optional per-emitted-token alternatives. Field names
are pinned in docs/wire.md and exercised by the fixtures under
fixtures/wire/.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

from .errors import InvalidDistributionError, ProtocolError
from .model import BaseCompletion, StepDistribution, SuffixSample, TokenCandidate

FINISH_REASONS = ("stop", "length")


def build_completion_request(
    prompt: str,
    suffix: str,
    *,
    max_tokens: int,
    temperature: float,
    n: int = 1,
    logprob_alternatives: int = 0,
    stop: list[str] | None = None,
) -> dict[str, Any]:
    body: dict[str, Any] = {
        "prompt": prompt,
        "suffix": suffix,
        "max_tokens": max_tokens,
        "temperature": temperature,
        "n": n,
        "logprob_alternatives": logprob_alternatives,
    }
    if stop:
        body["stop"] = stop
    return body


@dataclass(frozen=True)
class ParsedChoice:
    text: str
    finish_reason: str
    steps: tuple[StepDistribution, ...] | None


def _require(obj: dict, field: str, path: str) -> Any:
    if not isinstance(obj, dict) or field not in obj:
        raise ProtocolError(f"response missing required field {path!r}", field=path)
    return obj[field]


def _parse_candidates(raw_alts: Any, path: str) -> list[tuple[str, float]]:
    if not isinstance(raw_alts, list) or not raw_alts:
        raise ProtocolError(f"{path} must be a non-empty array", field=path)
    out = []
    for k, alt in enumerate(raw_alts):
        text = _require(alt, "text", f"{path}[{k}].text")
        logprob = _require(alt, "logprob", f"{path}[{k}].logprob")
        if not isinstance(text, str):
            raise ProtocolError(f"{path}[{k}].text must be a string", field=f"{path}[{k}].text")
        if not isinstance(logprob, (int, float)) or math.isnan(logprob):
            raise ProtocolError(
                f"{path}[{k}].logprob must be a number", field=f"{path}[{k}].logprob"
            )
        if logprob > 0.0:
            raise ProtocolError(
                f"{path}[{k}].logprob is above 0 (probability would exceed 1)",
                field=f"{path}[{k}].logprob",
            )
        out.append((text, math.exp(logprob)))
    return out


def _parse_step(step_index: int, token_obj: Any, path: str, *, strict_greedy: bool) -> StepDistribution:
    emitted = _require(token_obj, "text", f"{path}.text")
    pairs = _parse_candidates(_require(token_obj, "alternatives", f"{path}.alternatives"), f"{path}.alternatives")
    # Stable sort by descending probability; ties keep backend order.
    pairs.sort(key=lambda tp: -tp[1])
    chosen_pos = next((k for k, (t, _) in enumerate(pairs) if t == emitted), None)
    if chosen_pos is None:
        raise ProtocolError(
            f"{path}.alternatives does not contain the emitted token {emitted!r}",
            field=f"{path}.alternatives",
        )
    if pairs[chosen_pos][1] < pairs[0][1]:
        if strict_greedy:
            raise ProtocolError(
                f"{path}: emitted token {emitted!r} is not the most probable candidate",
                field=f"{path}.alternatives",
            )
        # Sampled continuation picked a non-argmax token; the alternatives
        # cannot be ranked under it, so keep only the emitted token.
        pairs = [pairs[chosen_pos]]
        chosen_pos = 0
    pairs.insert(0, pairs.pop(chosen_pos))
    try:
        return StepDistribution(
            step_index=step_index,
            candidates=tuple(
                TokenCandidate(text=t, prob=p, rank=r) for r, (t, p) in enumerate(pairs)
            ),
        )
    except InvalidDistributionError as exc:
        raise ProtocolError(f"{path}: {exc}", field=path) from exc


def parse_choice(
    choice: Any,
    path: str,
    *,
    expect_tokens: bool,
    strict_greedy: bool,
    top_k: int | None = None,
) -> ParsedChoice:
    text = _require(choice, "text", f"{path}.text")
    if not isinstance(text, str):
        raise ProtocolError(f"{path}.text must be a string", field=f"{path}.text")
    finish = choice.get("finish_reason", "stop")
    if finish not in FINISH_REASONS:
        raise ProtocolError(
            f"{path}.finish_reason must be one of {FINISH_REASONS}, got {finish!r}",
            field=f"{path}.finish_reason",
        )

    raw_tokens = choice.get("tokens")
    if raw_tokens is None:
        if expect_tokens and text:
            raise ProtocolError(
                f"response missing required field {path + '.tokens'!r}",
                field=f"{path}.tokens",
            )
        return ParsedChoice(text=text, finish_reason=finish, steps=None)

    if not isinstance(raw_tokens, list):
        raise ProtocolError(f"{path}.tokens must be an array", field=f"{path}.tokens")
    steps = []
    for i, token_obj in enumerate(raw_tokens):
        step = _parse_step(i, token_obj, f"{path}.tokens[{i}]", strict_greedy=strict_greedy)
        if top_k is not None and len(step.candidates) > top_k:
            step = StepDistribution(step_index=i, candidates=step.candidates[:top_k])
        steps.append(step)
    emitted = "".join(s.chosen.text for s in steps)
    if emitted != text:
        raise ProtocolError(
            f"{path}: token texts concatenate to {emitted!r}, not the choice text",
            field=f"{path}.tokens",
        )
    return ParsedChoice(text=text, finish_reason=finish, steps=tuple(steps))


def parse_base_completion(payload: Any, top_k: int | None = None) -> BaseCompletion:
    """Parse a single-choice greedy completion with per-token alternatives.

    Probabilities are exactly exp(logprob) of the wire values. A zero-length
    generation parses to an empty completion; that is a signal, not an error.
    """
    choices = _require(payload, "choices", "choices")
    if not isinstance(choices, list) or not choices:
        raise ProtocolError("choices must be a non-empty array", field="choices")
    parsed = parse_choice(
        choices[0], "choices[0]", expect_tokens=True, strict_greedy=True, top_k=top_k
    )
    return BaseCompletion(
        text=parsed.text,
        steps=parsed.steps or (),
        finish_reason=parsed.finish_reason,
    )


def parse_suffix_samples(payload: Any, top_k: int | None = None) -> list[SuffixSample]:
    """Parse a multi-sample response; token data is optional per choice.

    A choice with broken token data but usable text degrades to text-only;
    a choice without usable text is dropped, yielding a partial batch.
    """
    choices = _require(payload, "choices", "choices")
    if not isinstance(choices, list):
        raise ProtocolError("choices must be an array", field="choices")
    samples = []
    for i, choice in enumerate(choices):
        try:
            parsed = parse_choice(
                choice, f"choices[{i}]", expect_tokens=False, strict_greedy=False, top_k=top_k
            )
        except ProtocolError:
            text = choice.get("text") if isinstance(choice, dict) else None
            if isinstance(text, str):
                samples.append(SuffixSample(text=text))
            continue
        samples.append(SuffixSample(text=parsed.text, steps=parsed.steps))
    return samples
