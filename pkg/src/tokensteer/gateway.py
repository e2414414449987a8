"""HTTP client for completion backends speaking the wire protocol.

One retry on transport errors and 5xx responses; previews are best-effort
and callers degrade when they fail. Preview and suffix-sample traffic
shares a configurable in-flight cap so a step's fan-out cannot flood the
backend. All operations are independently cancelable.
"""
from __future__ import annotations

import asyncio
import json
import os
from typing import Sequence

import httpx

from .errors import BackendError, ProtocolError
from .model import (
    BaseCompletion,
    CompletionContext,
    GenerationParams,
    SuffixSampleBatch,
)
from .scripted import build_preview
from .wire import build_completion_request, parse_base_completion, parse_suffix_samples

DEFAULT_COMPLETION_TIMEOUT = 30.0
DEFAULT_PREVIEW_TIMEOUT = 10.0
DEFAULT_FANOUT_CAP = 4
PREVIEW_MAX_TOKENS = 32


class HttpCompletionClient:
    """Shareable, concurrency-safe client for one completion backend."""

    def __init__(
        self,
        base_url: str,
        *,
        api_key_env: str | None = None,
        endpoint: str = "/completions",
        completion_timeout: float = DEFAULT_COMPLETION_TIMEOUT,
        preview_timeout: float = DEFAULT_PREVIEW_TIMEOUT,
        fanout_cap: int = DEFAULT_FANOUT_CAP,
        regeneration_temperature: float = 0.8,
        client: httpx.AsyncClient | None = None,
    ):
        headers = {}
        if api_key_env:
            key = os.environ.get(api_key_env, "")
            if key:
                headers["Authorization"] = f"Bearer {key}"
        self._url = base_url.rstrip("/") + endpoint
        self._client = client or httpx.AsyncClient(headers=headers)
        self._owns_client = client is None
        self._completion_timeout = completion_timeout
        self._preview_timeout = preview_timeout
        self._fanout = asyncio.Semaphore(fanout_cap)
        self.regeneration_temperature = regeneration_temperature

    async def aclose(self) -> None:
        if self._owns_client:
            await self._client.aclose()

    async def _post(self, body: dict, timeout: float) -> dict:
        last_exc: Exception | None = None
        for attempt in range(2):
            try:
                resp = await self._client.post(self._url, json=body, timeout=timeout)
            except httpx.HTTPError as exc:
                last_exc = exc
                continue
            if resp.status_code >= 500:
                last_exc = BackendError(f"backend returned {resp.status_code}")
                continue
            if resp.status_code >= 400:
                raise BackendError(f"backend rejected request: {resp.status_code}")
            try:
                return resp.json()
            except (json.JSONDecodeError, ValueError) as exc:
                raise ProtocolError(f"backend sent non-JSON response: {exc}") from exc
        raise BackendError(f"backend unreachable after retry: {last_exc}")

    async def request_base_completion(
        self, ctx: CompletionContext, params: GenerationParams
    ) -> BaseCompletion:
        body = build_completion_request(
            ctx.prefix,
            ctx.suffix,
            max_tokens=params.max_tokens,
            temperature=params.temperature,
            n=1,
            logprob_alternatives=params.top_k,
        )
        payload = await self._post(body, self._completion_timeout)
        return parse_base_completion(payload, top_k=params.top_k)

    async def request_preview(
        self,
        ctx: CompletionContext,
        forced_prefix_tokens: Sequence[str],
        alt_token: str,
        params: GenerationParams | None = None,
    ) -> str:
        body = build_completion_request(
            ctx.prefix + "".join(forced_prefix_tokens) + alt_token,
            ctx.suffix,
            max_tokens=PREVIEW_MAX_TOKENS,
            temperature=0.0,
            n=1,
            logprob_alternatives=0,
            stop=["\n"],
        )
        async with self._fanout:
            payload = await self._post(body, self._preview_timeout)
        choices = payload.get("choices") if isinstance(payload, dict) else None
        if not isinstance(choices, list) or not choices or "text" not in choices[0]:
            raise ProtocolError("preview response missing choices[0].text", field="choices")
        return build_preview(alt_token, choices[0]["text"])

    async def request_suffix_samples(
        self,
        ctx: CompletionContext,
        committed_prefix: str,
        n: int,
        params: GenerationParams | None = None,
    ) -> SuffixSampleBatch:
        params = params or GenerationParams()
        temperature = self.regeneration_temperature if n > 1 else 0.0
        body = build_completion_request(
            ctx.prefix + committed_prefix,
            ctx.suffix,
            max_tokens=params.max_tokens,
            temperature=temperature,
            n=n,
            logprob_alternatives=params.top_k,
        )
        async with self._fanout:
            payload = await self._post(body, self._completion_timeout)
        samples = parse_suffix_samples(payload, top_k=params.top_k)
        return SuffixSampleBatch(samples=tuple(samples), requested=n)
