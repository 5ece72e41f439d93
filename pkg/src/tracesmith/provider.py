"""Uniform client for completion and embedding endpoints.

One gateway serves both call kinds with timeouts, bounded retries with
full-jitter exponential backoff, and a record/replay cassette store so
everything provider-shaped can run offline in tests. Cassette entries are
keyed by a hash of the canonical request JSON, which is stable across runs
and implementations.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import httpx

from .errors import ProviderFailure

logger = logging.getLogger(__name__)

EMBEDDING_DIM = 768

ENV_COMPLETE_URL = "TRACESMITH_COMPLETE_URL"
ENV_EMBED_URL = "TRACESMITH_EMBED_URL"

_BACKOFF_BASE_S = 0.5
_BACKOFF_FACTOR = 2.0


class ProviderTimeout(ProviderFailure):
    """The endpoint did not answer within the request's budget."""


class RemoteError(ProviderFailure):
    """The endpoint answered with a failure status."""

    def __init__(self, status: int, snippet: str):
        super().__init__(f"remote error {status}: {snippet}")
        self.status = status
        self.snippet = snippet


class DimensionMismatch(ProviderFailure):
    """An embedding response had vectors of the wrong dimension."""


class MissingCassette(ProviderFailure):
    """Replay mode found no recorded response for this request."""


class CassetteWriteFailed(ProviderFailure):
    """A cassette entry could not be persisted."""


@dataclass(frozen=True, slots=True)
class ProviderRequest:
    kind: str
    input: str | Sequence[str]
    model: str = "default"
    timeout_ms: int = 30_000
    max_retries: int = 2

    def __post_init__(self) -> None:
        if self.kind not in ("completion", "embedding"):
            raise ValueError(f"kind must be completion or embedding, got {self.kind!r}")
        if self.kind == "embedding" and isinstance(self.input, str):
            raise ValueError("embedding input must be a list of texts")
        if self.kind == "completion" and not isinstance(self.input, str):
            raise ValueError("completion input must be a single text")


@dataclass(frozen=True, slots=True)
class ProviderResponse:
    kind: str
    text: str | None = None
    vectors: tuple[tuple[float, ...], ...] | None = None
    latency_ms: int = 0


def request_hash(req: ProviderRequest) -> str:
    """Stable content hash over the canonical request JSON."""
    payload = {
        "kind": req.kind,
        "model": req.model,
        "input": list(req.input) if not isinstance(req.input, str) else req.input,
    }
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


class CassetteStore:
    """Append-only request-hash -> response store, one JSON file."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._entries: dict[str, dict] = {}
        if self.path.exists():
            self._entries = json.loads(self.path.read_text(encoding="utf-8"))

    def get(self, key: str) -> dict | None:
        return self._entries.get(key)

    def put(self, key: str, payload: dict) -> None:
        self._entries[key] = payload
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=self.path.parent, prefix=".cassette-")
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(self._entries, fh, indent=2, sort_keys=True)
            os.replace(tmp, self.path)
        except OSError as exc:
            raise CassetteWriteFailed(f"cannot write {self.path}: {exc}") from exc


class Gateway:
    """Completion/embedding client with retry, timeout, and record/replay.

    ``mode`` is one of ``live``, ``record`` (call through and persist), or
    ``replay`` (cassette only; performs zero network operations).
    """

    def __init__(
        self,
        complete_url: str | None = None,
        embed_url: str | None = None,
        *,
        mode: str = "live",
        cassette: CassetteStore | None = None,
        transport: httpx.BaseTransport | None = None,
        sleeper=time.sleep,
        rng: random.Random | None = None,
    ):
        if mode not in ("live", "record", "replay"):
            raise ValueError(f"bad gateway mode {mode!r}")
        if mode in ("record", "replay") and cassette is None:
            raise ValueError(f"{mode} mode requires a cassette store")
        self.complete_url = complete_url or os.environ.get(ENV_COMPLETE_URL)
        self.embed_url = embed_url or os.environ.get(ENV_EMBED_URL)
        self.mode = mode
        self.cassette = cassette
        self._transport = transport
        self._sleep = sleeper
        self._rng = rng or random.Random()

    # -- public surface -------------------------------------------------

    def call(self, req: ProviderRequest) -> ProviderResponse:
        key = request_hash(req)
        if self.mode == "replay":
            entry = self.cassette.get(key)
            if entry is None:
                raise MissingCassette(f"no cassette entry for request {key[:12]}...")
            return self._response_from_payload(req.kind, entry, latency_ms=0)
        response = self._call_with_retries(req)
        if self.mode == "record":
            self.record_fixture(req, response)
        return response

    def complete(self, prompt: str, model: str = "default") -> str:
        resp = self.call(ProviderRequest(kind="completion", input=prompt, model=model))
        return resp.text or ""

    def embed(self, texts: Sequence[str], model: str = "default") -> list[list[float]]:
        resp = self.call(ProviderRequest(kind="embedding", input=list(texts), model=model))
        return [list(v) for v in resp.vectors or ()]

    def record_fixture(self, req: ProviderRequest, resp: ProviderResponse) -> None:
        """Persist one request/response pair for later replay."""
        payload: dict = {"kind": resp.kind}
        if resp.kind == "completion":
            payload["text"] = resp.text
        else:
            payload["vectors"] = [list(v) for v in resp.vectors or ()]
        self.cassette.put(request_hash(req), payload)

    # -- internals -------------------------------------------------------

    def _response_from_payload(self, kind: str, payload: dict, latency_ms: int) -> ProviderResponse:
        try:
            return self._build_response(kind, payload, latency_ms)
        except (KeyError, TypeError, ValueError) as exc:
            raise ProviderFailure(f"malformed {kind} payload: {exc}") from exc

    def _build_response(self, kind: str, payload: dict, latency_ms: int) -> ProviderResponse:
        if kind == "completion":
            return ProviderResponse(kind=kind, text=payload["text"], latency_ms=latency_ms)
        vectors = tuple(tuple(float(x) for x in vec) for vec in payload["vectors"])
        for vec in vectors:
            if len(vec) != EMBEDDING_DIM:
                raise DimensionMismatch(
                    f"expected {EMBEDDING_DIM}-dim vectors, got {len(vec)}"
                )
        return ProviderResponse(kind=kind, vectors=vectors, latency_ms=latency_ms)

    def _endpoint(self, req: ProviderRequest) -> tuple[str, dict]:
        if req.kind == "completion":
            if not self.complete_url:
                raise ProviderFailure(f"no completion endpoint; set {ENV_COMPLETE_URL}")
            return self.complete_url, {"prompt": req.input}
        if not self.embed_url:
            raise ProviderFailure(f"no embedding endpoint; set {ENV_EMBED_URL}")
        return self.embed_url, {"texts": list(req.input)}

    def _call_with_retries(self, req: ProviderRequest) -> ProviderResponse:
        url, body = self._endpoint(req)
        timeout = req.timeout_ms / 1000.0
        last_error: Exception | None = None
        for attempt in range(req.max_retries + 1):
            if attempt:
                delay = self._rng.uniform(0, _BACKOFF_BASE_S * _BACKOFF_FACTOR ** (attempt - 1))
                logger.debug("retrying %s after %.2fs (attempt %d)", req.kind, delay, attempt + 1)
                self._sleep(delay)
            start = time.monotonic()
            try:
                with httpx.Client(transport=self._transport, timeout=timeout) as client:
                    raw = client.post(url, json=body)
            except httpx.TimeoutException as exc:
                last_error = ProviderTimeout(f"{req.kind} request timed out after {timeout}s")
                logger.warning("%s", last_error)
                continue
            except httpx.HTTPError as exc:
                last_error = ProviderFailure(f"transport error: {exc}")
                logger.warning("%s", last_error)
                continue
            latency_ms = int((time.monotonic() - start) * 1000)
            if raw.status_code >= 500:
                last_error = RemoteError(raw.status_code, raw.text[:200])
                logger.warning("%s", last_error)
                continue
            if raw.status_code >= 400:
                raise RemoteError(raw.status_code, raw.text[:200])
            try:
                data = raw.json()
            except ValueError as exc:
                raise ProviderFailure(f"non-JSON response from {url}: {exc}") from exc
            return self._response_from_payload(req.kind, data, latency_ms)
        raise last_error if last_error else ProviderFailure("request failed")


def gateway_from_env(
    mode: str | None = None, cassette_path: str | Path | None = None
) -> Gateway:
    """Gateway configured from environment variables."""
    mode = mode or os.environ.get("TRACESMITH_PROVIDER_MODE", "live")
    cassette = CassetteStore(cassette_path) if cassette_path else None
    return Gateway(mode=mode, cassette=cassette)
