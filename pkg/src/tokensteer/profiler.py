"""Batch profiling of prompt corpora: decision-point statistics per entry.

Runs each corpus entry through the full pipeline (scripted or live
backend), then reports raw and corrected entropies, highlight counts, and
category histograms, with corpus-level aggregates that are recomputable
from the per-entry rows. Scripted runs are byte-reproducible. Column order
and field names are pinned in docs/report.md.
"""
from __future__ import annotations

import asyncio
import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .errors import TokensteerError
from .session import SessionManager
from .uncertainty import shannon_entropy

CATEGORY_KEYS = ("Significant", "Minor", "Incorrect", "unassessed")

CSV_COLUMNS = [
    "entry_id",
    "status",
    "step_count",
    "highlighted_steps",
    "significant",
    "minor",
    "incorrect",
    "mean_raw_entropy",
    "mean_corrected_entropy",
    "max_corrected_entropy",
    "error",
]

# Default grid for --sweep, one report per combination of swept values.
SWEEP_GRID = {
    "alpha": [0.0, 0.05, 0.1],
    "beta": [0.25, 0.5, 1.0],
    "tau": [0.1, 0.25, 0.5],
}


@dataclass(frozen=True)
class CorpusEntry:
    id: str
    document: str
    cursor_offset: int
    language_hint: str = ""


@dataclass
class EntryProfile:
    entry_id: str
    status: str = "ok"
    error: str | None = None
    step_count: int = 0
    highlighted_steps: int = 0
    raw_entropies: list[float] = field(default_factory=list)
    corrected_entropies: list[float] = field(default_factory=list)
    category_histogram: dict[str, int] = field(
        default_factory=lambda: {k: 0 for k in CATEGORY_KEYS}
    )


@dataclass
class ProfileReport:
    entries: list[EntryProfile]
    config: dict

    @property
    def failed(self) -> int:
        return sum(1 for e in self.entries if e.status == "error")

    def aggregates(self) -> dict:
        ok = [e for e in self.entries if e.status == "ok"]
        raw = [h for e in ok for h in e.raw_entropies]
        corrected = [h for e in ok for h in e.corrected_entropies]
        return {
            "entries_ok": len(ok),
            "entries_failed": self.failed,
            "highlighted_steps": _stats([e.highlighted_steps for e in ok]),
            "step_count": _stats([e.step_count for e in ok]),
            "raw_entropy": _stats(raw),
            "corrected_entropy": _stats(corrected),
        }

    def to_json(self) -> str:
        payload = {
            "config": self.config,
            "entries": [
                {
                    "entry_id": e.entry_id,
                    "status": e.status,
                    "error": e.error,
                    "step_count": e.step_count,
                    "highlighted_steps": e.highlighted_steps,
                    "raw_entropies": [round(h, 9) for h in e.raw_entropies],
                    "corrected_entropies": [round(h, 9) for h in e.corrected_entropies],
                    "category_histogram": e.category_histogram,
                }
                for e in self.entries
            ],
            "aggregates": self.aggregates(),
        }
        return json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for e in self.entries:
            raw_mean = sum(e.raw_entropies) / len(e.raw_entropies) if e.raw_entropies else 0.0
            corr = e.corrected_entropies
            writer.writerow(
                [
                    e.entry_id,
                    e.status,
                    e.step_count,
                    e.highlighted_steps,
                    e.category_histogram.get("Significant", 0),
                    e.category_histogram.get("Minor", 0),
                    e.category_histogram.get("Incorrect", 0),
                    f"{raw_mean:.6f}",
                    f"{(sum(corr) / len(corr)) if corr else 0.0:.6f}",
                    f"{max(corr) if corr else 0.0:.6f}",
                    e.error or "",
                ]
            )
        return buf.getvalue()


def percentile(values: Sequence[float], q: float) -> float:
    """Linear-interpolation percentile, q in [0, 100]."""
    if not values:
        raise ValueError("empty values")
    xs = sorted(values)
    if len(xs) == 1:
        return float(xs[0])
    pos = (len(xs) - 1) * q / 100.0
    lo = int(pos)
    hi = min(lo + 1, len(xs) - 1)
    frac = pos - lo
    return xs[lo] * (1 - frac) + xs[hi] * frac


def _stats(values: Sequence[float]) -> dict | None:
    if not values:
        return None
    return {
        "median": round(percentile(values, 50), 9),
        "p25": round(percentile(values, 25), 9),
        "p75": round(percentile(values, 75), 9),
        "p90": round(percentile(values, 90), 9),
        "min": round(min(values), 9),
        "max": round(max(values), 9),
    }


def load_corpus(path: str | Path) -> list[CorpusEntry]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, list):
        raise ValueError("corpus must be a JSON array of entries")
    entries = []
    seen = set()
    for i, item in enumerate(raw):
        if not isinstance(item, dict):
            raise ValueError(f"corpus[{i}] must be an object")
        for name in ("id", "document", "cursor_offset"):
            if name not in item:
                raise ValueError(f"corpus[{i}] missing field {name!r}")
        if item["id"] in seen:
            raise ValueError(f"duplicate corpus id {item['id']!r}")
        seen.add(item["id"])
        entries.append(
            CorpusEntry(
                id=str(item["id"]),
                document=item["document"],
                cursor_offset=item["cursor_offset"],
                language_hint=item.get("language_hint", ""),
            )
        )
    return entries


async def profile_entry(manager: SessionManager, entry: CorpusEntry) -> EntryProfile:
    profile = EntryProfile(entry_id=entry.id)
    try:
        session = manager.create_session(
            entry.document, entry.cursor_offset, entry.language_hint
        )
        snapshot = await manager.run_completion(session.session_id)
        await manager.wait_settled(session.session_id)
        steps = snapshot.completion.steps
        profile.step_count = len(steps)
        profile.raw_entropies = [shannon_entropy(s.probs()) for s in steps]
        profile.corrected_entropies = [a.corrected_entropy for a in snapshot.annotations]
        profile.highlighted_steps = sum(1 for a in snapshot.annotations if a.highlighted)
        for expansion in snapshot.expansions.values():
            for e in expansion.entries:
                if e.assessment is not None:
                    profile.category_histogram[e.assessment.category] += 1
                else:
                    profile.category_histogram["unassessed"] += 1
    except TokensteerError as exc:
        profile.status = "error"
        profile.error = f"{type(exc).__name__}: {exc}"
    return profile


async def run_corpus(
    manager: SessionManager,
    entries: Sequence[CorpusEntry],
    *,
    config_echo: dict | None = None,
    concurrency: int = 4,
) -> ProfileReport:
    """Profile every entry; per-entry failures become error rows, not aborts."""
    sem = asyncio.Semaphore(max(1, concurrency))

    async def run_one(entry: CorpusEntry) -> EntryProfile:
        async with sem:
            return await profile_entry(manager, entry)

    profiles = await asyncio.gather(*(run_one(e) for e in entries))
    ordered = sorted(profiles, key=lambda p: p.entry_id)
    return ProfileReport(entries=ordered, config=config_echo or {})


async def baseline_mode(manager: SessionManager, entry: CorpusEntry, n: int) -> list[str]:
    """Whole-completion comparison mode: n independent samples, text only."""
    if n < 1:
        raise ValueError(f"baseline sample count must be >= 1, got {n}")
    session = manager.create_session(entry.document, entry.cursor_offset, entry.language_hint)
    batch = await manager.completion_client.request_suffix_samples(
        session.context, "", n, manager.params
    )
    return batch.texts()


def write_report(report: ProfileReport, out_dir: str | Path, stem: str = "report") -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{stem}.json").write_text(report.to_json() + "\n", encoding="utf-8")
    (out / f"{stem}.csv").write_text(report.to_csv(), encoding="utf-8")
