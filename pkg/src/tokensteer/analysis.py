"""Structured assessment of local alternatives.

Each alternative gets a four-field assessment: a detailed explanation, a
glanceable summary, a category (Significant / Minor / Incorrect), and an
importance score in [0, 1]. Assessments come either from a chat-style
analysis backend returning schema-validated structured output, or from the
built-in heuristic analyzer, a deterministic rule table good enough for
offline runs and tests. No raw backend text ever escapes unvalidated.
"""
from __future__ import annotations

import asyncio
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Awaitable, Callable, Hashable, Protocol

import httpx

from .errors import (
    AssessmentRangeError,
    AssessmentSchemaError,
    AssessmentUnavailableError,
    BackendError,
)
from .uncertainty import (
    CATEGORY_INCORRECT,
    CATEGORY_MINOR,
    CATEGORY_SIGNIFICANT,
    VALID_CATEGORIES,
)

ELLIPSIS = "…"

ASSESSMENT_FIELDS = ("detailed_explanation", "summary", "category", "importance_score")


@dataclass(frozen=True)
class AlternativeAssessment:
    """Validated structured analysis of one alternative token."""

    detailed_explanation: str
    summary: str
    category: str
    importance_score: float

    @property
    def effective_score(self) -> float:
        """Score as the highlighter sees it: Incorrect alternatives count 0."""
        return 0.0 if self.category == CATEGORY_INCORRECT else self.importance_score


@dataclass(frozen=True)
class AssessmentRequest:
    """Inputs to one assessment.

    base_completion is the original completion text from the decision step
    onward (so its first line starts with top_token); preview is the
    alternative's one-line continuation. An empty preview means the preview
    backend failed and the assessment works from the tokens alone.
    """

    base_completion: str
    top_token: str
    alternative_token: str
    preview: str
    surrounding_context: str = ""

    def __post_init__(self):
        if self.alternative_token == self.top_token:
            raise ValueError("alternative token must differ from the top token")


def validate_assessment(raw: object) -> AlternativeAssessment:
    """Check all four fields of structured analyzer output.

    Unknown categories and missing fields are schema errors; an
    out-of-range importance score is a range error.
    """
    if not isinstance(raw, dict):
        raise AssessmentSchemaError(f"assessment must be an object, got {type(raw).__name__}")
    for name in ASSESSMENT_FIELDS:
        if name not in raw:
            raise AssessmentSchemaError(f"assessment missing field {name!r}")
    category = raw["category"]
    if category not in VALID_CATEGORIES:
        raise AssessmentSchemaError(f"unknown category {category!r}")
    summary = raw["summary"]
    if not isinstance(summary, str) or not summary.strip():
        raise AssessmentSchemaError("summary must be a non-empty string")
    detailed = raw["detailed_explanation"]
    if not isinstance(detailed, str):
        raise AssessmentSchemaError("detailed_explanation must be a string")
    score = raw["importance_score"]
    if not isinstance(score, (int, float)) or isinstance(score, bool):
        raise AssessmentRangeError(f"importance_score must be a number, got {score!r}")
    if not 0.0 <= float(score) <= 1.0:
        raise AssessmentRangeError(f"importance_score {score} outside [0, 1]")
    return AlternativeAssessment(
        detailed_explanation=detailed,
        summary=summary,
        category=category,
        importance_score=float(score),
    )


def truncate_summary(summary: str, limit: int) -> str:
    """Fit a summary into `limit` display columns, ellipsizing if needed."""
    if limit < 4:
        raise ValueError(f"limit must be >= 4, got {limit}")
    if len(summary) <= limit:
        return summary
    return summary[: limit - 1] + ELLIPSIS


# --- heuristic analyzer -----------------------------------------------------

# Control-flow and structural keywords whose change means a different program.
_KEYWORDS = frozenset(
    "if else elif for while return raise try except finally break continue "
    "with yield assert pass match case import from def class lambda".split()
)

_LEX_RE = re.compile(
    r""""(?:\\.|[^"\\])*"|'(?:\\.|[^'\\])*'   # string literals
      | \d+(?:\.\d+)?                          # numbers
      | \w+                                    # identifiers / keywords
      | [^\w\s]                                # single punctuation chars
    """,
    re.VERBOSE,
)

_OPENERS = {"(": ")", "[": "]", "{": "}"}
_CLOSERS = {")": "(", "]": "[", "}": "{"}


def _lex(line: str) -> list[str]:
    return _LEX_RE.findall(line)


def _kind(token: str) -> str:
    if token[0] in "\"'":
        return "string"
    if token[0].isdigit():
        return "number"
    if token in _KEYWORDS:
        return "keyword"
    if re.fullmatch(r"\w+", token):
        return "identifier"
    return "punct"


def _balance_signature(line: str) -> tuple:
    """Unmatched closers, unmatched openers, and quote state of a fragment.

    Previews are line fragments spliced into surrounding code, so absolute
    balance is meaningless: a lone ')' may close a paren opened upstream.
    What must hold is that the alternative leaves the same unmatched
    delimiters as the original fragment it replaces.
    """
    stack: list[str] = []
    excess: list[str] = []
    quote: str | None = None
    escaped = False
    for ch in line:
        if quote is not None:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == quote:
                quote = None
            continue
        if ch in "\"'":
            quote = ch
        elif ch in _OPENERS:
            stack.append(ch)
        elif ch in _CLOSERS:
            if stack and stack[-1] == _CLOSERS[ch]:
                stack.pop()
            else:
                excess.append(ch)
    return tuple(excess), tuple(stack), quote is not None


def _first_callee(tokens: list[str]) -> str | None:
    for i, tok in enumerate(tokens):
        if tok == "(" and i > 0 and _kind(tokens[i - 1]) == "identifier":
            return tokens[i - 1]
    return None


def _assessment(category: str, score: float, summary: str, detailed: str) -> AlternativeAssessment:
    return AlternativeAssessment(
        detailed_explanation=detailed,
        summary=summary,
        category=category,
        importance_score=score,
    )


class HeuristicAnalyzer:
    """Deterministic rule-table analyzer; a pure function of the request.

    Rule table, first match wins:
      bracket/quote balance differs from the original line -> Incorrect, 0.0
      changed control-flow/structure keyword               -> Significant, 0.9
      changed callee, or changed literal in a call         -> Significant, 0.8
      identifier-only diff                                 -> Minor, 0.1
      anything else                                        -> Minor, 0.2
    """

    async def assess(self, req: AssessmentRequest) -> AlternativeAssessment:
        return self.assess_sync(req)

    def assess_sync(self, req: AssessmentRequest) -> AlternativeAssessment:
        base_line = req.base_completion.split("\n", 1)[0]
        alt_line = req.preview.split("\n", 1)[0] if req.preview else req.alternative_token

        if _balance_signature(alt_line) != _balance_signature(base_line):
            return _assessment(
                CATEGORY_INCORRECT,
                0.0,
                "leaves brackets or quotes unbalanced",
                f"The line {alt_line!r} leaves different brackets or quotes open "
                f"than the original {base_line!r}, so the surrounding code would "
                "no longer parse.",
            )

        base_toks, alt_toks = _lex(base_line), _lex(alt_line)
        base_kw = [t for t in base_toks if _kind(t) == "keyword"]
        alt_kw = [t for t in alt_toks if _kind(t) == "keyword"]
        if base_kw != alt_kw:
            old = next((t for t in base_kw if t not in alt_kw), "(none)")
            new = next((t for t in alt_kw if t not in base_kw), "(none)")
            return _assessment(
                CATEGORY_SIGNIFICANT,
                0.9,
                f"changes control flow: {old} -> {new}",
                f"The alternative restructures the statement around {new!r} where the "
                f"original used {old!r}; control flow and side effects change.",
            )

        base_callee, alt_callee = _first_callee(base_toks), _first_callee(alt_toks)
        if base_callee != alt_callee and (base_callee or alt_callee):
            return _assessment(
                CATEGORY_SIGNIFICANT,
                0.8,
                f"calls {alt_callee or '(nothing)'} instead of {base_callee or '(nothing)'}",
                f"The first call on the line changes from {base_callee!r} to "
                f"{alt_callee!r}. Different functions can differ in behavior, "
                "robustness, and security properties, so this needs review.",
            )

        base_lits = sorted(t for t in base_toks if _kind(t) in ("string", "number"))
        alt_lits = sorted(t for t in alt_toks if _kind(t) in ("string", "number"))
        if base_lits != alt_lits and ("(" in base_toks or "(" in alt_toks):
            old = next((t for t in base_lits if t not in alt_lits), "(none)")
            new = next((t for t in alt_lits if t not in base_lits), "(none)")
            return _assessment(
                CATEGORY_SIGNIFICANT,
                0.8,
                f"changes argument {old} to {new}",
                f"A literal in a call changes from {old} to {new}; argument values "
                "alter runtime behavior rather than style.",
            )

        if len(base_toks) == len(alt_toks):
            diffs = [(b, a) for b, a in zip(base_toks, alt_toks) if b != a]
            if diffs and all(
                _kind(b) == "identifier" and _kind(a) == "identifier" for b, a in diffs
            ):
                b, a = diffs[0]
                return _assessment(
                    CATEGORY_MINOR,
                    0.1,
                    f"renames {b} to {a}",
                    f"Only identifier spelling differs ({b} vs {a}); the program's "
                    "execution is unchanged.",
                )

        return _assessment(
            CATEGORY_MINOR,
            0.2,
            "rewrites the line with the same effect",
            f"The alternative line {alt_line!r} differs from the original "
            f"{base_line!r} in layout or phrasing without changing the first call, "
            "keywords, or literals.",
        )


# --- remote analyzer ---------------------------------------------------------

DEFAULT_PROMPT_PATH = Path(__file__).resolve().parents[2] / "prompts" / "analysis.txt"


def load_analysis_prompt(path: str | Path | None = None) -> str:
    return Path(path or DEFAULT_PROMPT_PATH).read_text(encoding="utf-8")


class RemoteAnalyzer:
    """Chat-style analysis backend client with one re-ask on bad output."""

    def __init__(
        self,
        base_url: str,
        *,
        prompt: str | None = None,
        prompt_path: str | Path | None = None,
        endpoint: str = "/chat/completions",
        model: str = "",
        timeout: float = 20.0,
        client: httpx.AsyncClient | None = None,
    ):
        self._url = base_url.rstrip("/") + endpoint
        self._prompt = prompt if prompt is not None else load_analysis_prompt(prompt_path)
        self._model = model
        self._timeout = timeout
        self._client = client or httpx.AsyncClient()

    def _user_message(self, req: AssessmentRequest) -> str:
        return json.dumps(
            {
                "surrounding_context": req.surrounding_context,
                "base_completion": req.base_completion,
                "top_token": req.top_token,
                "alternative_token": req.alternative_token,
                "preview": req.preview,
            },
            ensure_ascii=False,
        )

    async def _ask(self, messages: list[dict]) -> str:
        body = {
            "messages": messages,
            "response_format": {"type": "json_object"},
        }
        if self._model:
            body["model"] = self._model
        try:
            resp = await self._client.post(self._url, json=body, timeout=self._timeout)
        except httpx.HTTPError as exc:
            raise BackendError(f"analysis backend unreachable: {exc}") from exc
        if resp.status_code >= 400:
            raise BackendError(f"analysis backend returned {resp.status_code}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise AssessmentSchemaError(f"malformed analysis response: {exc}") from exc

    async def assess(self, req: AssessmentRequest) -> AlternativeAssessment:
        messages = [
            {"role": "system", "content": self._prompt},
            {"role": "user", "content": self._user_message(req)},
        ]
        last_error: Exception | None = None
        content = ""
        for _ in range(2):  # one re-ask on malformed output, then give up
            try:
                content = await self._ask(messages)
                return validate_assessment(json.loads(content))
            except (AssessmentSchemaError, AssessmentRangeError, json.JSONDecodeError) as exc:
                last_error = exc
                messages = messages + [
                    {"role": "assistant", "content": content},
                    {
                        "role": "user",
                        "content": (
                            f"That output failed validation ({exc}). Respond again with "
                            "exactly the four required JSON fields."
                        ),
                    },
                ]
            except BackendError as exc:
                raise AssessmentUnavailableError(str(exc)) from exc
        raise AssessmentUnavailableError(f"analysis output invalid after re-ask: {last_error}")


class Analyzer(Protocol):
    def assess(self, req: AssessmentRequest) -> Awaitable[AlternativeAssessment]: ...


class AssessmentService:
    """Concurrency cap plus (session, step, alt)-keyed deduplication.

    The same key never triggers a second backend call while a result (or a
    deduplicated failure) is available; canceled work may be retried.
    """

    def __init__(self, analyzer: Analyzer, *, cap: int = 6):
        self._analyzer = analyzer
        self._sem = asyncio.Semaphore(cap)
        self._tasks: dict[Hashable, asyncio.Task] = {}

    async def assess(
        self, req: AssessmentRequest, key: Hashable | None = None
    ) -> AlternativeAssessment:
        k = key if key is not None else (
            req.base_completion, req.top_token, req.alternative_token, req.preview
        )
        task = self._tasks.get(k)
        if task is None or task.cancelled():
            task = asyncio.create_task(self._run(req))
            self._tasks[k] = task
        return await task

    async def _run(self, req: AssessmentRequest) -> AlternativeAssessment:
        async with self._sem:
            return await self._analyzer.assess(req)

    def cancel_where(self, predicate: Callable[[Hashable], bool]) -> int:
        """Cancel in-flight assessments whose key matches; returns the count."""
        n = 0
        for k, task in list(self._tasks.items()):
            if predicate(k) and not task.done():
                task.cancel()
                n += 1
        return n
