#!/usr/bin/env python3
"""Regenerate the bundled scripted traces, corpus, and wire fixtures.

Everything here is deterministic: fixed literals, no RNG, no timestamps.
Run from the repo root: python scripts/make_traces.py
"""
from __future__ import annotations

import json
import math
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from tokensteer.distance import edit_distance  # noqa: E402
from tokensteer.scripted import ScriptedTrace  # noqa: E402

TRACES_DIR = ROOT / "fixtures" / "traces"
WIRE_DIR = ROOT / "fixtures" / "wire"
CORPUS_DIR = ROOT / "fixtures" / "corpus"


def lp(p: float) -> float:
    return math.log(p)


def cands(*pairs) -> dict:
    return {"candidates": [{"text": t, "logprob": lp(p)} for t, p in pairs]}


def scenario_trace() -> dict:
    """The password-hashing walkthrough: sha256 base, four hash alternatives,
    scrypt continuation with its own decision points."""
    prefix = (
        "import hashlib\n"
        "\n"
        "def register(username, password):\n"
        "    # hash the password before storing it\n"
        "    hashed = hashlib."
    )
    suffix = "\n    store(username, hashed)\n"

    base_suffix_after_hash = "(password.encode()).hexdigest()\n    return hashed"
    scrypt_text = (
        "(password.encode(), salt=salt, n=16384, r=8, p=1).hex()\n    return hashed"
    )

    scrypt_continuation = {
        "steps": [
            cands(("(password.encode()", 0.9), ("(password", 0.05)),
            cands(
                (", salt=salt", 0.5),
                (", salt=os.urandom(16)", 0.3),
                (", salt=b'static'", 0.1),
            ),
            cands((", n=16384, r=8, p=1)", 0.95), (", n=2**14, r=8, p=1)", 0.03)),
            cands((".hex()", 0.9), (".hexdigest()", 0.05)),
            cands(("\n    return hashed", 0.92), ("\n    return hashed.hex()", 0.03)),
        ],
        "previews": {
            "0:1": ", salt=salt, n=16384, r=8, p=1).hex()",
            "1:1": ", n=16384, r=8, p=1).hex()",
            "1:2": ", n=16384, r=8, p=1).hex()",
            "2:1": ".hex()",
            "3:1": "",
            "4:1": "",
        },
    }

    md5_samples = [
        "(password.encode(), usedforsecurity=False).hexdigest()\n    return hashed",
        "(password.encode()).hexdigest().upper()\n    return hashed",
        "(str(password).encode()).hexdigest()\n    return hashed",
        base_suffix_after_hash,  # planted: identical to the original suffix
        "(password.encode()).digest()\n    return hashed",
        "(password.encode('utf-8')).hexdigest()\n    return hashed",
        "(salt + password.encode()).hexdigest()\n    return hashed",
        "(password.encode()).hexdigest()\n    return hashed.encode()",
        "(password.encode()).hexdigest()[:32]\n    return hashed",
        "(password.encode() + salt).hexdigest()\n    return hashed",
    ]
    assert md5_samples.index(base_suffix_after_hash) == 3

    scrypt_samples = [
        scrypt_text,  # matches the continuation entry: carries step data
        "(password.encode(), salt=os.urandom(16), n=16384, r=8, p=1).hex()\n    return hashed",
        "(password.encode(), salt=salt, n=2**14, r=8, p=1, dklen=64).hex()\n    return hashed",
        "(password.encode(), salt=salt, n=16384, r=8, p=1)\n    return hashed.hex()",
        "(password.encode(), salt=b'salt', n=16384, r=8, p=1).hex()\n    return hashed",
        "(password.encode(), salt=salt, n=32768, r=8, p=2).hex()\n    return hashed.hex()",
        "(password.encode(), salt=os.urandom(32), n=16384, r=16, p=1).hex()\n    return hashed",
        "(password.encode(), salt=salt, n=16384, r=8, p=1).hex().upper()\n    return hashed",
        "(bytes(password, 'utf-8'), salt=salt, n=16384, r=8, p=1).hex()\n    return hashed",
        "(password.encode(), salt=salt, n=16384, r=8, p=1, dklen=32).hex()\n    return hashed",
    ]
    dists = [edit_distance(s, base_suffix_after_hash) for s in scrypt_samples]
    assert dists[0] == min(dists), dists
    assert dists.count(dists[0]) == 1, dists  # strict argmin, stable across runs

    return {
        "context": {"prefix": prefix, "suffix": suffix, "language_hint": "python"},
        "steps": [
            cands(
                ("sha256", 0.45),
                ("md5", 0.25),
                ("sha512", 0.12),
                ("pbkdf2_hmac", 0.08),
                ("scrypt", 0.06),
            ),
            cands(("(password", 0.97), ("(username", 0.02)),
            cands(
                (".encode()", 0.5),
                (".encode('utf-8')", 0.2),
                (".encode(encoding)", 0.1),
            ),
            cands((")", 0.985), ("))", 0.005)),
            cands((".hexdigest()", 0.9), (".digest()", 0.08)),
            cands(("\n    return hashed", 0.93), ("\n    return hashed.upper()", 0.02)),
        ],
        "previews": {
            "0:1": "(password.encode()).hexdigest()",
            "0:2": "(password.encode()).hexdigest()",
            "0:3": "('sha256', password.encode(), salt, 100000)",
            "0:4": "(password.encode(), salt=salt, n=16384, r=8, p=1).hex()",
            "1:1": ".encode()).hexdigest()",
            "2:1": ").hexdigest()",
            "2:2": ").hexdigest()",
            "3:1": "",
            "4:1": "",
            "5:1": "",
        },
        "suffixes": {
            "0:1": md5_samples,
            "0:4": scrypt_samples,
        },
        "continuations": {
            "0:4": scrypt_continuation,
        },
        "baseline_samples": [
            "sha256(password.encode()).hexdigest()\n    return hashed",
            "md5(password.encode()).hexdigest()\n    return hashed",
            "sha512(password.encode()).hexdigest()\n    return hashed",
            "scrypt(password.encode(), salt=salt, n=16384, r=8, p=1).hex()\n    return hashed",
            "sha256(password.encode(), usedforsecurity=True).hexdigest()\n    return hashed",
        ],
    }


# Steps designated significant per synthetic trace (<= 3 each).
SYNTHETIC_PLAN = {
    "synthetic-00": [7],
    "synthetic-01": [3, 29],
    "synthetic-02": [5, 18, 33],
    "synthetic-03": [11, 36],
    "synthetic-04": [0, 20, 39],
}
SYNTHETIC_STEPS = 40


def synthetic_trace(name: str, significant_steps: list[int]) -> dict:
    prefix = f"# profiling prompt {name}\ndef load_all():\n"
    steps = []
    previews = {}
    for i in range(SYNTHETIC_STEPS):
        line = f"    v{i:02d} = load_{i:02d}()\n"
        minor = f"    w{i:02d} = load_{i:02d}()\n"
        if i in significant_steps:
            alt = f"    v{i:02d} = fetch_{i:02d}()\n"
            steps.append(cands((line, 0.55), (alt, 0.25), (minor, 0.10)))
        else:
            fallback = f"    v{i:02d} = load_{i:02d}()  # cached\n"
            steps.append(cands((line, 0.92), (minor, 0.05), (fallback, 0.02)))
        previews[f"{i}:1"] = ""
        previews[f"{i}:2"] = ""
    return {
        "context": {"prefix": prefix, "suffix": "", "language_hint": "python"},
        "steps": steps,
        "previews": previews,
    }


def wire_fixtures() -> dict[str, dict]:
    ok = {
        "choices": [
            {
                "index": 0,
                "text": "sha256(data)",
                "finish_reason": "stop",
                "tokens": [
                    {
                        "text": "sha256",
                        "alternatives": [
                            {"text": "sha256", "logprob": lp(0.6)},
                            {"text": "md5", "logprob": lp(0.3)},
                            {"text": "blake2b", "logprob": lp(0.05)},
                        ],
                    },
                    {
                        "text": "(data",
                        "alternatives": [
                            {"text": "(data", "logprob": lp(0.8)},
                            {"text": "(payload", "logprob": lp(0.1)},
                        ],
                    },
                    {
                        "text": ")",
                        "alternatives": [
                            {"text": ")", "logprob": lp(0.95)},
                            {"text": ", salt)", "logprob": lp(0.01)},
                        ],
                    },
                ],
            }
        ]
    }
    missing_alternatives = json.loads(json.dumps(ok))
    del missing_alternatives["choices"][0]["tokens"][1]["alternatives"]

    missing_tokens = {
        "choices": [{"index": 0, "text": "sha256(data)", "finish_reason": "stop"}]
    }

    positive_logprob = json.loads(json.dumps(ok))
    positive_logprob["choices"][0]["tokens"][0]["alternatives"][0]["logprob"] = 0.25

    empty = {"choices": [{"index": 0, "text": "", "finish_reason": "stop", "tokens": []}]}

    samples = {
        "choices": [
            {
                "index": 0,
                "text": "ab",
                "finish_reason": "stop",
                "tokens": [
                    {
                        "text": "a",
                        "alternatives": [
                            {"text": "a", "logprob": lp(0.7)},
                            {"text": "x", "logprob": lp(0.2)},
                        ],
                    },
                    {
                        "text": "b",
                        "alternatives": [
                            {"text": "b", "logprob": lp(0.9)},
                            {"text": "y", "logprob": lp(0.05)},
                        ],
                    },
                ],
            },
            {"index": 1, "text": "cd", "finish_reason": "stop"},
            {
                "index": 2,
                "text": "ef",
                "finish_reason": "stop",
                # Broken token data: usable text, steps must degrade to None.
                "tokens": [{"text": "ef"}],
            },
        ]
    }
    return {
        "base_completion.json": ok,
        "missing_alternatives.json": missing_alternatives,
        "missing_tokens.json": missing_tokens,
        "positive_logprob.json": positive_logprob,
        "empty_completion.json": empty,
        "suffix_samples.json": samples,
    }


def write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def main() -> None:
    scenario = scenario_trace()
    write_json(TRACES_DIR / "scenario_password_hash.json", scenario)
    ScriptedTrace.from_file(TRACES_DIR / "scenario_password_hash.json")  # must load

    corpus = []
    for name, significant in SYNTHETIC_PLAN.items():
        trace = synthetic_trace(name, significant)
        write_json(TRACES_DIR / f"{name}.json", trace)
        ScriptedTrace.from_file(TRACES_DIR / f"{name}.json")
        corpus.append(
            {
                "id": name,
                "document": trace["context"]["prefix"],
                "cursor_offset": len(trace["context"]["prefix"]),
                "language_hint": "python",
            }
        )
    write_json(CORPUS_DIR / "synthetic.json", corpus)

    for name, payload in wire_fixtures().items():
        write_json(WIRE_DIR / name, payload)

    print(f"wrote traces to {TRACES_DIR}, corpus to {CORPUS_DIR}, wire to {WIRE_DIR}")


if __name__ == "__main__":
    main()
