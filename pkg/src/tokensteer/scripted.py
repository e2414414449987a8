"""Deterministic scripted completion backend.

A trace file scripts everything a completion backend would say for one
document context: the base completion's step distributions, canned preview
continuations, suffix sample lists, and (optionally) nested continuation
entries describing the model's state after a forced alternative token.
Identical requests always yield identical responses, which makes full
end-to-end runs reproducible offline. Schema pinned in docs/trace.md.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .errors import BackendError, InvalidAlternativeError, TraceError
from .model import (
    BaseCompletion,
    CompletionContext,
    GenerationParams,
    StepDistribution,
    SuffixSample,
    SuffixSampleBatch,
    TokenCandidate,
)

_KEY_SEP = ":"


def _parse_key(key: str, n_steps: int, path: str) -> tuple[int, int]:
    try:
        step_s, rank_s = key.split(_KEY_SEP)
        step, rank = int(step_s), int(rank_s)
    except ValueError:
        raise TraceError(f"{path}: key {key!r} is not 'stepIndex:altRank'") from None
    if not 0 <= step < n_steps:
        raise TraceError(f"{path}: key {key!r} references step {step} out of range")
    if rank < 0:
        raise TraceError(f"{path}: key {key!r} has negative rank")
    return step, rank


def _load_steps(raw_steps: object, path: str) -> tuple[StepDistribution, ...]:
    if not isinstance(raw_steps, list):
        raise TraceError(f"{path}: 'steps' must be an array")
    steps = []
    for i, raw in enumerate(raw_steps):
        cands = raw.get("candidates") if isinstance(raw, dict) else None
        if not isinstance(cands, list) or not cands:
            raise TraceError(f"{path}: steps[{i}] needs a non-empty 'candidates' array")
        pairs = []
        for k, c in enumerate(cands):
            if not isinstance(c, dict) or "text" not in c or "logprob" not in c:
                raise TraceError(f"{path}: steps[{i}].candidates[{k}] needs text and logprob")
            if not isinstance(c["text"], str) or not c["text"]:
                raise TraceError(f"{path}: steps[{i}].candidates[{k}].text must be non-empty")
            lp = c["logprob"]
            if not isinstance(lp, (int, float)) or lp > 0:
                raise TraceError(f"{path}: steps[{i}].candidates[{k}].logprob must be <= 0")
            pairs.append((c["text"], math.exp(lp)))
        pairs.sort(key=lambda tp: -tp[1])
        try:
            steps.append(
                StepDistribution(
                    step_index=i,
                    candidates=tuple(
                        TokenCandidate(text=t, prob=p, rank=r)
                        for r, (t, p) in enumerate(pairs)
                    ),
                )
            )
        except Exception as exc:
            raise TraceError(f"{path}: steps[{i}]: {exc}") from exc
    return tuple(steps)


@dataclass(frozen=True)
class TraceEntry:
    """One scripted completion state: steps plus canned responses."""

    steps: tuple[StepDistribution, ...]
    previews: dict[str, str] = field(default_factory=dict)
    suffixes: dict[str, list[str]] = field(default_factory=dict)
    continuations: dict[str, "TraceEntry"] = field(default_factory=dict)
    baseline_samples: list[str] = field(default_factory=list)
    finish_reason: str = "stop"

    @property
    def base_text(self) -> str:
        return "".join(s.chosen.text for s in self.steps)

    def text_from(self, step_index: int) -> str:
        return "".join(s.chosen.text for s in self.steps[step_index:])

    def rank_of(self, step_index: int, token_text: str) -> int | None:
        for cand in self.steps[step_index].candidates:
            if cand.text == token_text:
                return cand.rank
        return None


def _load_entry(raw: object, path: str) -> TraceEntry:
    if not isinstance(raw, dict):
        raise TraceError(f"{path}: trace entry must be a JSON object")
    steps = _load_steps(raw.get("steps", []), path)

    previews = {}
    for key, value in (raw.get("previews") or {}).items():
        step, rank = _parse_key(key, len(steps), f"{path}.previews")
        if rank >= len(steps[step].candidates):
            raise TraceError(f"{path}.previews: key {key!r} rank out of range")
        if not isinstance(value, str):
            raise TraceError(f"{path}.previews[{key!r}] must be a string")
        previews[key] = value

    suffixes = {}
    for key, value in (raw.get("suffixes") or {}).items():
        step, rank = _parse_key(key, len(steps), f"{path}.suffixes")
        if rank >= len(steps[step].candidates):
            raise TraceError(f"{path}.suffixes: key {key!r} rank out of range")
        if not isinstance(value, list) or not all(isinstance(s, str) for s in value):
            raise TraceError(f"{path}.suffixes[{key!r}] must be an array of strings")
        suffixes[key] = list(value)

    continuations = {}
    for key, value in (raw.get("continuations") or {}).items():
        step, rank = _parse_key(key, len(steps), f"{path}.continuations")
        if not 1 <= rank < len(steps[step].candidates):
            raise TraceError(f"{path}.continuations: key {key!r} must force an alternative")
        continuations[key] = _load_entry(value, f"{path}.continuations[{key!r}]")

    baseline = raw.get("baseline_samples", [])
    if not isinstance(baseline, list) or not all(isinstance(s, str) for s in baseline):
        raise TraceError(f"{path}: baseline_samples must be an array of strings")

    finish = raw.get("finish_reason", "stop")
    if finish not in ("stop", "length"):
        raise TraceError(f"{path}: finish_reason must be 'stop' or 'length'")
    return TraceEntry(
        steps=steps,
        previews=previews,
        suffixes=suffixes,
        continuations=continuations,
        baseline_samples=list(baseline),
        finish_reason=finish,
    )


@dataclass(frozen=True)
class ScriptedTrace:
    """A root trace entry, optionally bound to a specific document context."""

    root: TraceEntry
    context: CompletionContext | None = None

    @classmethod
    def from_dict(cls, raw: dict, path: str = "trace") -> "ScriptedTrace":
        ctx = None
        if "context" in raw:
            c = raw["context"]
            if not isinstance(c, dict) or "prefix" not in c or "suffix" not in c:
                raise TraceError(f"{path}.context needs prefix and suffix")
            ctx = CompletionContext(
                prefix=c["prefix"],
                suffix=c["suffix"],
                language_hint=c.get("language_hint", ""),
            )
        return cls(root=_load_entry(raw, path), context=ctx)

    @classmethod
    def from_file(cls, file_path: str | Path) -> "ScriptedTrace":
        p = Path(file_path)
        try:
            raw = json.loads(p.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise TraceError(f"{p}: cannot read trace: {exc}") from exc
        return cls.from_dict(raw, str(p))


def _clip(steps: Sequence[StepDistribution], top_k: int) -> tuple[StepDistribution, ...]:
    return tuple(
        StepDistribution(s.step_index, s.candidates[:top_k])
        if len(s.candidates) > top_k
        else s
        for s in steps
    )


def _reindex(steps: Sequence[StepDistribution]) -> tuple[StepDistribution, ...]:
    return tuple(
        StepDistribution(step_index=i, candidates=s.candidates)
        for i, s in enumerate(steps)
    )


def build_preview(alt_text: str, continuation: str) -> str:
    """One-line preview: the forced token plus its continuation up to a newline."""
    return alt_text + continuation.split("\n", 1)[0]


class ScriptedBackend:
    """Completion client that replays scripted traces instead of calling a model."""

    def __init__(self, trace: ScriptedTrace | None = None):
        self._default: ScriptedTrace | None = trace
        self._by_context: dict[tuple[str, str], ScriptedTrace] = {}
        if trace is not None and trace.context is not None:
            self._by_context[(trace.context.prefix, trace.context.suffix)] = trace

    @classmethod
    def from_dir(cls, trace_dir: str | Path) -> "ScriptedBackend":
        backend = cls()
        paths = sorted(Path(trace_dir).glob("*.json"))
        if not paths:
            raise TraceError(f"no trace files under {trace_dir}")
        for p in paths:
            trace = ScriptedTrace.from_file(p)
            if trace.context is None:
                raise TraceError(f"{p}: traces in a directory must declare a context")
            backend.add_trace(trace)
        return backend

    def add_trace(self, trace: ScriptedTrace) -> None:
        if trace.context is None:
            self._default = trace
        else:
            self._by_context[(trace.context.prefix, trace.context.suffix)] = trace

    def _entry_for(self, ctx: CompletionContext) -> TraceEntry:
        trace = self._by_context.get((ctx.prefix, ctx.suffix))
        if trace is None:
            trace = self._default
        if trace is None:
            raise BackendError("no scripted trace registered for this context")
        return trace.root

    def _resolve_tokens(
        self, ctx: CompletionContext, tokens: Sequence[str]
    ) -> tuple[TraceEntry, int]:
        """Walk emitted tokens from the root, descending through forced alternatives."""
        entry = self._entry_for(ctx)
        i = 0
        for tok in tokens:
            if i < len(entry.steps) and entry.steps[i].chosen.text == tok:
                i += 1
                continue
            rank = entry.rank_of(i, tok) if i < len(entry.steps) else None
            key = f"{i}{_KEY_SEP}{rank}"
            if rank and key in entry.continuations:
                entry = entry.continuations[key]
                i = 0
                continue
            raise BackendError(f"scripted trace has no path for token {tok!r} at step {i}")
        return entry, i

    def _resolve_committed(self, ctx: CompletionContext, committed: str):
        """Align a committed completion-region prefix with the scripted paths."""
        entry = self._entry_for(ctx)
        i = 0
        pos = 0
        while pos < len(committed):
            if i >= len(entry.steps):
                raise BackendError("committed prefix runs past the scripted completion")
            step = entry.steps[i]
            rest = committed[pos:]
            terminal = next((c for c in step.candidates[1:] if c.text == rest), None)
            if terminal is not None:
                return "alt", entry, i, terminal.rank
            top = step.chosen.text
            if rest.startswith(top):
                pos += len(top)
                i += 1
                continue
            for cand in step.candidates[1:]:
                key = f"{i}{_KEY_SEP}{cand.rank}"
                if rest.startswith(cand.text) and key in entry.continuations:
                    entry = entry.continuations[key]
                    pos += len(cand.text)
                    i = 0
                    break
            else:
                raise BackendError(
                    f"cannot align committed prefix with scripted trace at offset {pos}"
                )
        return "path", entry, i, None

    async def request_base_completion(
        self, ctx: CompletionContext, params: GenerationParams
    ) -> BaseCompletion:
        entry = self._entry_for(ctx)
        steps = _clip(entry.steps, params.top_k)
        return BaseCompletion(
            text=entry.base_text, steps=steps, finish_reason=entry.finish_reason
        )

    async def request_preview(
        self,
        ctx: CompletionContext,
        forced_prefix_tokens: Sequence[str],
        alt_token: str,
        params: GenerationParams | None = None,
    ) -> str:
        entry, i = self._resolve_tokens(ctx, forced_prefix_tokens)
        if i >= len(entry.steps):
            raise BackendError(f"no scripted step at index {i}")
        rank = entry.rank_of(i, alt_token)
        if rank is None:
            raise InvalidAlternativeError(
                f"{alt_token!r} is not a candidate at step {i}"
            )
        key = f"{i}{_KEY_SEP}{rank}"
        if key in entry.previews:
            continuation = entry.previews[key]
        elif rank == 0:
            continuation = entry.text_from(i + 1)
        else:
            raise BackendError(f"no scripted preview for step {i} rank {rank}")
        return build_preview(alt_token, continuation)

    async def request_suffix_samples(
        self,
        ctx: CompletionContext,
        committed_prefix: str,
        n: int,
        params: GenerationParams | None = None,
    ) -> SuffixSampleBatch:
        if n < 1:
            raise ValueError("n must be >= 1")
        if committed_prefix == "":
            # Whole-completion sampling (the comparison mode): serve the
            # scripted baseline list, or repeat the base path.
            entry = self._entry_for(ctx)
            if entry.baseline_samples:
                samples = tuple(SuffixSample(text=t) for t in entry.baseline_samples[:n])
                return SuffixSampleBatch(samples=samples, requested=n)
        kind, entry, i, rank = self._resolve_committed(ctx, committed_prefix)
        if kind == "path":
            # Continuing the base path: the scripted model has one answer.
            remaining = _reindex(entry.steps[i:])
            sample = SuffixSample(text=entry.text_from(i), steps=remaining or None)
            return SuffixSampleBatch(samples=(sample,) * n, requested=n)
        key = f"{i}{_KEY_SEP}{rank}"
        texts = entry.suffixes.get(key)
        if texts is None:
            raise BackendError(f"no scripted suffix samples for step {i} rank {rank}")
        cont = entry.continuations.get(key)
        cont_text = cont.base_text if cont is not None else None
        samples = []
        for text in texts[:n]:
            steps = cont.steps if (cont is not None and text == cont_text) else None
            samples.append(SuffixSample(text=text, steps=steps))
        return SuffixSampleBatch(samples=tuple(samples), requested=n)
