"""Per-session state: annotated completions, edit history, visibility,
lifecycle, and the append-only interaction log.

History is linear: selecting an alternative while positioned before the
end of history discards the forward records. Snapshots store whole
annotated completions rather than diffs; completions are bounded by
max_tokens, so clarity wins over compactness.
"""
from __future__ import annotations

import asyncio
import json
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .alternatives import (
    AlternativeExpander,
    AlternativePreview,
    StepExpansion,
    apply_selection,
    profile_from_entries,
)
from .analysis import AssessmentService
from .errors import (
    BoundsError,
    StateError,
    UnknownSessionError,
    UnknownStepError,
)
from .model import BaseCompletion, CompletionContext, GenerationParams
from .uncertainty import HighlightAnnotation, HighlightConfig, classify_step

STATUS_ACTIVE = "active"
STATUS_ACCEPTED = "accepted"
STATUS_DISMISSED = "dismissed"

BACK = "back"
FORWARD = "forward"

EVENT_KINDS = (
    "completion-requested",
    "alternatives-opened",
    "alternative-selected",
    "highlight-hidden",
    "back",
    "forward",
    "accepted",
    "dismissed",
)


@dataclass(frozen=True)
class InteractionEvent:
    """One line of the append-only per-session interaction log."""

    seq: int
    timestamp: float
    session_id: str
    kind: str
    payload: dict

    def to_json(self) -> str:
        return json.dumps(
            {
                "seq": self.seq,
                "timestamp": self.timestamp,
                "session_id": self.session_id,
                "kind": self.kind,
                "payload": self.payload,
            },
            ensure_ascii=False,
        )

    @classmethod
    def from_json(cls, line: str) -> "InteractionEvent":
        raw = json.loads(line)
        return cls(
            seq=raw["seq"],
            timestamp=raw["timestamp"],
            session_id=raw["session_id"],
            kind=raw["kind"],
            payload=raw.get("payload", {}),
        )


@dataclass
class AnnotatedCompletion:
    """A completion snapshot plus everything needed to render it."""

    completion: BaseCompletion
    annotations: list[HighlightAnnotation]
    choice_points: frozenset[int] = frozenset()
    expansions: dict[int, StepExpansion] = field(
        default_factory=dict, compare=False, repr=False
    )

    @property
    def settled(self) -> bool:
        return all(e.settled for e in self.expansions.values())


@dataclass(frozen=True)
class EditRecord:
    """One token replacement: full snapshots before and after."""

    step_index: int
    alt_rank: int
    prior: AnnotatedCompletion
    new: AnnotatedCompletion
    timestamp: float


@dataclass
class Session:
    session_id: str
    context: CompletionContext
    base: AnnotatedCompletion | None = None
    history: list[EditRecord] = field(default_factory=list)
    cursor: int = 0  # number of edits applied; 0..len(history)
    status: str = STATUS_ACTIVE
    hidden_steps: set[int] = field(default_factory=set)
    events: list[InteractionEvent] = field(default_factory=list)
    lock: asyncio.Lock = field(default_factory=asyncio.Lock, repr=False)

    @property
    def current(self) -> AnnotatedCompletion | None:
        if self.cursor == 0:
            return self.base
        return self.history[self.cursor - 1].new

    def snapshots(self) -> Iterable[AnnotatedCompletion]:
        if self.base is not None:
            yield self.base
        for record in self.history:
            yield record.new

    @property
    def can_back(self) -> bool:
        return self.cursor > 0

    @property
    def can_forward(self) -> bool:
        return self.cursor < len(self.history)


def verify_history(session: Session) -> None:
    """Replaying the records from the base snapshot must land on `current`."""
    prev = session.base
    for record in session.history:
        assert record.prior is prev or record.prior == prev, "history chain broken"
        prev = record.new
    expected = session.base if session.cursor == 0 else session.history[session.cursor - 1].new
    assert session.current is expected, "cursor points outside the replayed chain"


class SessionManager:
    """Owns all sessions; serializes mutations per session (single-writer)."""

    def __init__(
        self,
        completion_client,
        assessments: AssessmentService,
        *,
        params: GenerationParams | None = None,
        highlight_cfg: HighlightConfig | None = None,
        log_dir: str | Path | None = None,
        summary_columns: int = 60,
        on_push: Callable[[str, str, dict], None] | None = None,
    ):
        self.completion_client = completion_client
        self.assessments = assessments
        self.params = params or GenerationParams()
        self.highlight_cfg = highlight_cfg or HighlightConfig()
        self.summary_columns = summary_columns
        self._log_dir = Path(log_dir) if log_dir else None
        self.on_push = on_push or (lambda sid, kind, payload: None)
        self._sessions: dict[str, Session] = {}
        self._expander = AlternativeExpander(
            completion_client,
            assessments,
            params=self.params,
            on_event=self._on_expansion_event,
        )

    # -- lookups ---------------------------------------------------------

    def get(self, session_id: str) -> Session:
        session = self._sessions.get(session_id)
        if session is None:
            raise UnknownSessionError(f"no session {session_id!r}")
        return session

    def _require_active(self, session: Session) -> None:
        if session.status != STATUS_ACTIVE:
            raise StateError(f"session is {session.status}, not active")

    def _require_completion(self, session: Session) -> AnnotatedCompletion:
        current = session.current
        if current is None:
            raise StateError("no completion requested yet")
        return current

    # -- event plumbing ---------------------------------------------------

    def _log(self, session: Session, kind: str, payload: dict) -> InteractionEvent:
        assert kind in EVENT_KINDS, kind
        now = time.time()
        if session.events:
            now = max(now, session.events[-1].timestamp)
        event = InteractionEvent(
            seq=len(session.events),
            timestamp=now,
            session_id=session.session_id,
            kind=kind,
            payload=payload,
        )
        session.events.append(event)
        if self._log_dir is not None:
            self._log_dir.mkdir(parents=True, exist_ok=True)
            path = self._log_dir / f"{session.session_id}.jsonl"
            with path.open("a", encoding="utf-8") as fh:
                fh.write(event.to_json() + "\n")
        return event

    def _push(self, session: Session, kind: str, payload: dict) -> None:
        self.on_push(session.session_id, kind, payload)

    def _on_expansion_event(
        self, session_key: str, kind: str, step_index: int, alt_rank: int
    ) -> None:
        session = self._sessions.get(session_key)
        if session is None:
            return
        self._push(session, kind, {"step_index": step_index, "alt_rank": alt_rank})
        if kind != "assessment-ready":
            return
        # Recompute the step's annotation on every snapshot that has it;
        # the refresh is idempotent and only pushes when something changed.
        for snapshot in session.snapshots():
            if step_index in snapshot.expansions:
                self._refresh_annotation(session, snapshot, step_index)

    # -- annotation math ---------------------------------------------------

    def _annotation_for(
        self, snapshot: AnnotatedCompletion, step_index: int
    ) -> HighlightAnnotation:
        step = snapshot.completion.steps[step_index]
        expansion = snapshot.expansions.get(step_index)
        entries: Sequence[AlternativePreview] = expansion.entries if expansion else []
        if len(entries) != len(step.alternatives):
            entries = []
        if entries:
            profile = profile_from_entries(entries)
        else:
            profile = profile_from_entries(
                [
                    AlternativePreview(alt_rank=c.rank, token_text=c.text, probability=c.prob)
                    for c in step.alternatives
                ]
            )
        return classify_step(step, profile, self.highlight_cfg)

    def _refresh_annotation(
        self, session: Session, snapshot: AnnotatedCompletion, step_index: int
    ) -> bool:
        if step_index >= len(snapshot.annotations):
            return False
        fresh = self._annotation_for(snapshot, step_index)
        fresh.visible = step_index not in session.hidden_steps
        old = snapshot.annotations[step_index]
        if (
            old.corrected_entropy == fresh.corrected_entropy
            and old.highlighted == fresh.highlighted
            and old.intensity == fresh.intensity
            and old.visible == fresh.visible
        ):
            return False
        snapshot.annotations[step_index] = fresh
        if snapshot is session.current:
            self._push(
                session,
                "highlight-updated",
                {
                    "step_index": step_index,
                    "corrected_entropy": fresh.corrected_entropy,
                    "highlighted": fresh.highlighted,
                    "intensity": fresh.intensity,
                    "visible": fresh.visible,
                },
            )
        return True

    def _apply_visibility(self, session: Session) -> None:
        current = session.current
        if current is None:
            return
        for ann in current.annotations:
            ann.visible = ann.step_index not in session.hidden_steps

    def _annotate_snapshot(
        self, session: Session, completion: BaseCompletion, choice_points: frozenset[int]
    ) -> AnnotatedCompletion:
        snapshot = AnnotatedCompletion(
            completion=completion, annotations=[], choice_points=choice_points
        )
        for step in completion.steps:
            ann = self._annotation_for(snapshot, step.step_index)
            ann.visible = step.step_index not in session.hidden_steps
            snapshot.annotations.append(ann)
        return snapshot

    def _spawn_expansions(
        self, session: Session, snapshot: AnnotatedCompletion, step_indices: Iterable[int]
    ) -> None:
        for i in step_indices:
            step = snapshot.completion.steps[i]
            if len(step.candidates) < 2 or i in snapshot.expansions:
                continue
            snapshot.expansions[i] = self._expander.start_step(
                session.session_id, session.context, snapshot.completion, i
            )
        # Annotations may already be final (deduplicated assessments resolve
        # synchronously); recompute after the fan-out lands via callbacks.

    # -- operations --------------------------------------------------------

    def create_session(
        self, document: str, cursor_offset: int, language_hint: str = ""
    ) -> Session:
        if not 0 <= cursor_offset <= len(document):
            raise BoundsError(
                f"cursor_offset {cursor_offset} outside [0, {len(document)}]"
            )
        ctx = CompletionContext(
            prefix=document[:cursor_offset],
            suffix=document[cursor_offset:],
            language_hint=language_hint,
        )
        session = Session(session_id=uuid.uuid4().hex[:12], context=ctx)
        self._sessions[session.session_id] = session
        return session

    async def run_completion(self, session_id: str) -> AnnotatedCompletion:
        session = self.get(session_id)
        async with session.lock:
            self._require_active(session)
            ctx = session.context
            # Backend failure propagates here and leaves the session untouched.
            completion = await self.completion_client.request_base_completion(
                ctx, self.params
            )
            self._cancel_session_work(session)
            session.hidden_steps = set()
            session.history = []
            session.cursor = 0
            snapshot = AnnotatedCompletion(completion=completion, annotations=[])
            session.base = snapshot
            self._spawn_expansions(session, snapshot, range(len(completion.steps)))
            snapshot.annotations.extend(
                self._annotation_for(snapshot, i) for i in range(len(completion.steps))
            )
            self._log(
                session,
                "completion-requested",
                {
                    "document": ctx.document,
                    "cursor_offset": len(ctx.prefix),
                    "language_hint": ctx.language_hint,
                },
            )
            if __debug__:
                verify_history(session)
            return snapshot

    async def expand_alternatives(
        self, session_id: str, step_index: int
    ) -> list[AlternativePreview]:
        session = self.get(session_id)
        async with session.lock:
            current = self._require_completion(session)
            if not 0 <= step_index < len(current.completion.steps):
                raise UnknownStepError(f"step {step_index} out of range")
            if session.status == STATUS_ACTIVE:
                self._spawn_expansions(session, current, [step_index])
                self._log(session, "alternatives-opened", {"step_index": step_index})
            expansion = current.expansions.get(step_index)
            return expansion.entries if expansion else []

    async def select_alternative(
        self, session_id: str, step_index: int, alt_rank: int
    ) -> AnnotatedCompletion:
        session = self.get(session_id)
        async with session.lock:
            self._require_active(session)
            current = self._require_completion(session)
            result = await apply_selection(
                session.context,
                current.completion,
                step_index,
                alt_rank,
                self.completion_client,
                self.params,
            )
            surviving = frozenset(
                c for c in current.choice_points if c < step_index
            ) | {step_index}
            snapshot = AnnotatedCompletion(
                completion=result.new_completion,
                annotations=[],
                choice_points=surviving,
            )
            # Prefix steps are untouched: share their expansion state so
            # cached previews and assessments carry over without re-querying.
            for i in range(step_index):
                if i in current.expansions:
                    snapshot.expansions[i] = current.expansions[i]
            self._spawn_expansions(
                session,
                snapshot,
                range(step_index + 1, len(result.new_completion.steps)),
            )
            snapshot.annotations.extend(
                self._annotation_for(snapshot, i)
                for i in range(len(result.new_completion.steps))
            )
            for ann in snapshot.annotations:
                ann.visible = ann.step_index not in session.hidden_steps
            record = EditRecord(
                step_index=step_index,
                alt_rank=alt_rank,
                prior=current,
                new=snapshot,
                timestamp=time.time(),
            )
            del session.history[session.cursor:]  # linear history
            session.history.append(record)
            session.cursor = len(session.history)
            self._log(
                session,
                "alternative-selected",
                {
                    "step_index": step_index,
                    "alt_rank": alt_rank,
                    "chosen_sample_index": result.chosen_sample_index,
                    "distance_to_base": result.distance_to_base,
                },
            )
            if __debug__:
                verify_history(session)
            return snapshot

    async def hide_highlight(self, session_id: str, step_index: int) -> HighlightAnnotation:
        session = self.get(session_id)
        async with session.lock:
            current = self._require_completion(session)
            if not 0 <= step_index < len(current.completion.steps):
                raise UnknownStepError(f"step {step_index} out of range")
            session.hidden_steps.add(step_index)
            self._apply_visibility(session)
            self._log(session, "highlight-hidden", {"step_index": step_index})
            return current.annotations[step_index]

    async def navigate(
        self, session_id: str, direction: str
    ) -> tuple[AnnotatedCompletion, bool]:
        if direction not in (BACK, FORWARD):
            raise BoundsError(f"direction must be 'back' or 'forward', got {direction!r}")
        session = self.get(session_id)
        async with session.lock:
            current = self._require_completion(session)
            noop = (direction == BACK and not session.can_back) or (
                direction == FORWARD and not session.can_forward
            )
            if not noop:
                session.cursor += 1 if direction == FORWARD else -1
                self._apply_visibility(session)
            self._log(session, direction, {"noop": noop})
            if __debug__:
                verify_history(session)
            return session.current or current, noop

    async def finalize(self, session_id: str, action: str) -> str | None:
        if action not in ("accept", "dismiss"):
            raise BoundsError(f"action must be 'accept' or 'dismiss', got {action!r}")
        session = self.get(session_id)
        async with session.lock:
            self._require_active(session)
            self._cancel_session_work(session)
            if action == "accept":
                current = self._require_completion(session)
                session.status = STATUS_ACCEPTED
                final = (
                    session.context.prefix
                    + current.completion.text
                    + session.context.suffix
                )
                self._log(session, "accepted", {"final_length": len(final)})
                self._push(session, "session-finalized", {"status": session.status})
                return final
            session.status = STATUS_DISMISSED
            self._log(session, "dismissed", {})
            self._push(session, "session-finalized", {"status": session.status})
            return None

    # -- maintenance -------------------------------------------------------

    def _cancel_session_work(self, session: Session) -> None:
        for snapshot in session.snapshots():
            for expansion in snapshot.expansions.values():
                expansion.cancel()
        self.assessments.cancel_where(
            lambda key: isinstance(key, tuple) and key and key[0] == session.session_id
        )

    async def wait_settled(self, session_id: str) -> None:
        """Drain all in-flight preview/assessment work for a session."""
        session = self.get(session_id)
        for snapshot in list(session.snapshots()):
            for expansion in list(snapshot.expansions.values()):
                await expansion.wait()


async def replay_events(
    manager: SessionManager, events: Sequence[InteractionEvent]
) -> Session | None:
    """Re-execute a recorded interaction log against (scripted) backends.

    The first completion-requested event carries the document context, so
    the log alone reconstructs the session.
    """
    session: Session | None = None
    for event in events:
        if event.kind == "completion-requested":
            if session is None:
                session = manager.create_session(
                    event.payload["document"],
                    event.payload["cursor_offset"],
                    event.payload.get("language_hint", ""),
                )
            await manager.run_completion(session.session_id)
        elif session is None:
            continue
        elif event.kind == "alternatives-opened":
            await manager.expand_alternatives(
                session.session_id, event.payload["step_index"]
            )
        elif event.kind == "alternative-selected":
            await manager.select_alternative(
                session.session_id,
                event.payload["step_index"],
                event.payload["alt_rank"],
            )
        elif event.kind == "highlight-hidden":
            await manager.hide_highlight(session.session_id, event.payload["step_index"])
        elif event.kind in (BACK, FORWARD):
            await manager.navigate(session.session_id, event.kind)
        elif event.kind == "accepted":
            await manager.finalize(session.session_id, "accept")
        elif event.kind == "dismissed":
            await manager.finalize(session.session_id, "dismiss")
    return session
