"""Shared fixtures: scripted traces, managers, and async helpers."""
import asyncio
import math
from pathlib import Path

import pytest

from tokensteer.analysis import AssessmentService, HeuristicAnalyzer
from tokensteer.scripted import ScriptedBackend, ScriptedTrace
from tokensteer.session import SessionManager

FIXTURES = Path(__file__).resolve().parents[1] / "fixtures"
SCENARIO_TRACE = FIXTURES / "traces" / "scenario_password_hash.json"


def lp(p: float) -> float:
    return math.log(p)


def steps_from(*step_specs) -> list[dict]:
    return [
        {"candidates": [{"text": t, "logprob": lp(p)} for t, p in spec]}
        for spec in step_specs
    ]


def full_coverage_trace() -> dict:
    """Small trace with previews and suffixes for every alternative, so a
    random sequence of selections can always proceed."""
    base_tokens = ["    a = make()\n", "    b = trim(a)\n", "    return b\n"]
    steps = []
    previews = {}
    suffixes = {}
    for i, tok in enumerate(base_tokens):
        word = tok.strip().split(" ")[0]
        alt1 = tok.replace(word, word + "x", 1)          # identifier rename
        alt2 = tok.replace("(", "(1, ", 1) if "(" in tok else tok.rstrip() + "  \n"
        steps.append([(tok, 0.6), (alt1, 0.25), (alt2, 0.1)])
        rest = "".join(base_tokens[i + 1:])
        for rank, alt in ((1, alt1), (2, alt2)):
            previews[f"{i}:{rank}"] = rest.split("\n", 1)[0] if rest else ""
            suffixes[f"{i}:{rank}"] = [
                rest,                      # the original suffix, planted
                rest.replace("b", "bb") if rest else "    pass\n",
                "    return None\n",
            ]
    return {
        "context": {"prefix": "def build():\n", "suffix": "", "language_hint": "python"},
        "steps": steps_from(*steps),
        "previews": previews,
        "suffixes": suffixes,
    }


def make_manager(trace_dict_or_path, **kwargs) -> tuple[SessionManager, ScriptedTrace]:
    if isinstance(trace_dict_or_path, (str, Path)):
        trace = ScriptedTrace.from_file(trace_dict_or_path)
    else:
        trace = ScriptedTrace.from_dict(trace_dict_or_path)
    backend = ScriptedBackend(trace)
    manager = SessionManager(
        backend, AssessmentService(HeuristicAnalyzer()), **kwargs
    )
    return manager, trace


@pytest.fixture
def scenario_manager():
    return make_manager(SCENARIO_TRACE)


@pytest.fixture
def run():
    return asyncio.run


async def completed_session(manager, trace, settle=True):
    doc = trace.context.prefix + trace.context.suffix if trace.context else "x"
    offset = len(trace.context.prefix) if trace.context else 1
    session = manager.create_session(doc, offset, "python")
    await manager.run_completion(session.session_id)
    if settle:
        await manager.wait_settled(session.session_id)
    return session
