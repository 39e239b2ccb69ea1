"""Chat-completions wire client for remote VLM oracles, plus the prompt
builders that pair template text with a lossless PNG payload."""

from __future__ import annotations

import base64
import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path

import httpx

from .vgls import RoundContext

API_KEY_ENV = "TRAJORACLE_API_KEY"


class OracleTransport(RuntimeError):
    """Endpoint unreachable or persistently failing after retries."""


class AuthError(RuntimeError):
    """Endpoint rejected the credentials (401/403); never retried."""


class TemplateMissing(FileNotFoundError):
    """No packaged template for the requested prompt kind."""


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model_name: str
    api_key: str | None = None  # falls back to $TRAJORACLE_API_KEY
    timeout_seconds: float = 60.0
    max_retries: int = 2
    temperature: float = 0.0
    max_tokens: int = 1024
    backoff_base_seconds: float = 1.0
    requests_per_second: float = 1.0
    max_concurrency: int = 4

    def __post_init__(self) -> None:
        if not self.base_url.startswith(("http://", "https://")):
            raise ValueError(f"base_url {self.base_url!r} is not an http(s) URL")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")

    def resolved_key(self) -> str | None:
        return self.api_key or os.environ.get(API_KEY_ENV)


class PromptKind(Enum):
    VGLS = "vgls"
    POINT_LOCALIZATION = "point_localization"
    COT_GENERATION = "cot_generation"
    PREDICT_NEXT = "predict_next"


def load_template(kind: PromptKind) -> str:
    try:
        return resources.files("trajoracle.prompts").joinpath(f"{kind.value}.txt").read_text("utf-8")
    except (FileNotFoundError, ModuleNotFoundError) as e:
        raise TemplateMissing(f"no template for {kind}") from e


def png_data_uri(png: bytes) -> str:
    return "data:image/png;base64," + base64.b64encode(png).decode("ascii")


def build_prompt(kind: PromptKind, image_png: bytes | None = None,
                 point_index: int | None = None) -> list[dict]:
    """Chat messages for one query: template text plus an optional image part.

    POINT_LOCALIZATION requires ``point_index`` in [1, 12], substituted into
    the template; the other kinds take no parameters.
    """
    text = load_template(kind)
    if kind is PromptKind.POINT_LOCALIZATION:
        if point_index is None or not 1 <= point_index <= 12:
            raise ValueError(f"point_index {point_index!r} outside [1, 12]")
        text = text.replace("{index}", str(point_index))
    content: list[dict] = [{"type": "text", "text": text}]
    if image_png is not None:
        content.append({"type": "image_url", "image_url": {"url": png_data_uri(image_png)}})
    return [{"role": "user", "content": content}]


class _RateGate:
    """Minimum-interval pacing plus a concurrent-request cap."""

    def __init__(self, requests_per_second: float, max_concurrency: int):
        self._interval = 1.0 / requests_per_second if requests_per_second > 0 else 0.0
        self._lock = threading.Lock()
        self._next_allowed = 0.0
        self._slots = threading.BoundedSemaphore(max(1, max_concurrency))

    def __enter__(self):
        self._slots.acquire()
        if self._interval > 0:
            with self._lock:
                now = time.monotonic()
                wait = self._next_allowed - now
                self._next_allowed = max(now, self._next_allowed) + self._interval
            if wait > 0:
                time.sleep(wait)
        return self

    def __exit__(self, *exc):
        self._slots.release()


def _summarize_messages(messages: list[dict]) -> list[dict]:
    """Transcript-safe copy: image payloads replaced by hash + length."""
    out = []
    for msg in messages:
        content = msg.get("content")
        if isinstance(content, list):
            parts = []
            for part in content:
                if part.get("type") == "image_url":
                    url = part["image_url"]["url"]
                    parts.append({
                        "type": "image_url",
                        "sha256": hashlib.sha256(url.encode("ascii")).hexdigest(),
                        "bytes": len(url),
                    })
                else:
                    parts.append(part)
            out.append({"role": msg.get("role"), "content": parts})
        else:
            out.append(dict(msg))
    return out


class OracleClient:
    """Thread-safe client for one endpoint; retries with exponential backoff.

    Every request/response pair is appended to the transcript file (when one
    is configured) before the reply is returned, so a crashed run can be
    replayed. The API key never appears in transcripts.
    """

    def __init__(self, cfg: EndpointConfig, transcript_path: str | Path | None = None):
        self.cfg = cfg
        self._gate = _RateGate(cfg.requests_per_second, cfg.max_concurrency)
        self._transcript_path = Path(transcript_path) if transcript_path else None
        self._transcript_lock = threading.Lock()
        self._http = httpx.Client(timeout=cfg.timeout_seconds)

    def close(self) -> None:
        self._http.close()

    def _log(self, record: dict) -> None:
        if self._transcript_path is None:
            return
        with self._transcript_lock:
            with self._transcript_path.open("a", encoding="utf-8") as f:
                f.write(json.dumps(record) + "\n")
                f.flush()

    def query(self, messages: list[dict]) -> str:
        """POST the messages to {base_url}/chat/completions and return the text.

        Retries transport errors and 429/5xx with exponential backoff
        (base * 2^attempt). 401/403 raise AuthError immediately; other 4xx
        and exhausted retries raise OracleTransport.
        """
        payload = {
            "model": self.cfg.model_name,
            "messages": messages,
            "temperature": self.cfg.temperature,
            "max_tokens": self.cfg.max_tokens,
        }
        headers = {"Content-Type": "application/json"}
        key = self.cfg.resolved_key()
        if key:
            headers["Authorization"] = f"Bearer {key}"
        url = self.cfg.base_url.rstrip("/") + "/chat/completions"
        summary = _summarize_messages(messages)
        self._log({"event": "request", "url": url, "model": self.cfg.model_name,
                   "messages": summary})

        last_error = "no attempt made"
        for attempt in range(self.cfg.max_retries + 1):
            if attempt > 0:
                time.sleep(self.cfg.backoff_base_seconds * (2 ** (attempt - 1)))
            try:
                with self._gate:
                    resp = self._http.post(url, json=payload, headers=headers)
            except httpx.HTTPError as e:
                last_error = f"transport error: {e}"
                continue
            if resp.status_code in (401, 403):
                self._log({"event": "error", "status": resp.status_code})
                raise AuthError(f"endpoint rejected credentials (HTTP {resp.status_code})")
            if resp.status_code == 429 or resp.status_code >= 500:
                last_error = f"HTTP {resp.status_code}"
                continue
            if resp.status_code != 200:
                self._log({"event": "error", "status": resp.status_code})
                raise OracleTransport(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                data = resp.json()
                choice = data["choices"][0]
                text = choice["message"]["content"] if "message" in choice else choice["text"]
            except (ValueError, KeyError, IndexError, TypeError) as e:
                self._log({"event": "error", "status": 200, "detail": "malformed body"})
                raise OracleTransport(f"malformed completion body: {e}") from e
            self._log({"event": "response", "status": 200, "text": text})
            return text
        self._log({"event": "error", "detail": last_error})
        raise OracleTransport(f"gave up after {self.cfg.max_retries + 1} attempts: {last_error}")


def query(cfg: EndpointConfig, messages: list[dict]) -> str:
    """One-shot convenience wrapper around :class:`OracleClient`."""
    client = OracleClient(cfg)
    try:
        return client.query(messages)
    finally:
        client.close()


class HttpVglsOracle:
    """Adapter exposing a remote endpoint as a VGLS round oracle."""

    needs_image = True

    def __init__(self, client: OracleClient):
        self.client = client

    def answer(self, ctx: RoundContext) -> str:
        if ctx.image_png is None:
            raise ValueError("HTTP oracle needs the rendered round image")
        return self.client.query(build_prompt(PromptKind.VGLS, image_png=ctx.image_png))
