"""Client for an OpenAI-compatible ``/v1/chat/completions`` endpoint.

Configuration comes from the environment:

    DSM_VLM_ENDPOINT   base URL, e.g. https://api.openai.com
    DSM_VLM_API_KEY    bearer token
    DSM_VLM_MODEL      model id (default gpt-4o-mini)
"""
from __future__ import annotations

import base64
import io
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import httpx
import numpy as np
from PIL import Image

from dsmap.errors import BackendConfigError, CredentialError, TransportError

log = logging.getLogger(__name__)

DEFAULT_MODEL = "gpt-4o-mini"


@dataclass
class ChatMessage:
    role: str
    text: str
    images: list = field(default_factory=list)  # base64 PNG strings

    def to_wire(self) -> dict:
        if not self.images:
            return {"role": self.role, "content": self.text}
        parts = [{"type": "text", "text": self.text}]
        for b64 in self.images:
            parts.append({"type": "image_url", "image_url": {"url": f"data:image/png;base64,{b64}"}})
        return {"role": self.role, "content": parts}


@dataclass
class ChatRequest:
    model: str
    messages: list
    temperature: float = 0.0
    max_tokens: int = 1024

    def to_wire(self) -> dict:
        return {
            "model": self.model,
            "messages": [m.to_wire() for m in self.messages],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }


@dataclass
class ChatResponse:
    text: str
    finish_reason: Optional[str] = None
    usage: dict = field(default_factory=dict)

    @classmethod
    def from_wire(cls, body: dict) -> "ChatResponse":
        try:
            choice = body["choices"][0]
            content = choice["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"unexpected chat response shape: {exc!r}") from exc
        if isinstance(content, list):
            content = "".join(p.get("text", "") for p in content if isinstance(p, dict))
        return cls(content or "", choice.get("finish_reason"), dict(body.get("usage") or {}))


def png_base64(rgb: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(rgb, dtype=np.uint8)).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


class ChatClient:
    """Chat-completion transport with bounded retries and a client-side in-flight cap.

    5xx replies and timeouts are retried up to ``max_retries`` times with
    exponential backoff. 401/403 raise CredentialError, any other 4xx raises
    BackendConfigError without retrying.
    """

    def __init__(
        self,
        endpoint: str,
        api_key: str = "",
        model: str = DEFAULT_MODEL,
        timeout: float = 60.0,
        max_retries: int = 2,
        backoff: float = 1.0,
        max_in_flight: int = 4,
        transport: Optional[httpx.BaseTransport] = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if not endpoint:
            raise BackendConfigError("no chat endpoint configured (set DSM_VLM_ENDPOINT)")
        self.url = endpoint.rstrip("/")
        if not self.url.endswith("/chat/completions"):
            if not self.url.endswith("/v1"):
                self.url += "/v1"
            self.url += "/chat/completions"
        self.model = model
        self.max_retries = max_retries
        self.backoff = backoff
        self._sleep = sleep
        self._slots = threading.Semaphore(max_in_flight)
        headers = {"Content-Type": "application/json"}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._http = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    @classmethod
    def from_env(cls, **kwargs) -> "ChatClient":
        return cls(
            os.environ.get("DSM_VLM_ENDPOINT", ""),
            os.environ.get("DSM_VLM_API_KEY", ""),
            os.environ.get("DSM_VLM_MODEL", DEFAULT_MODEL),
            **kwargs,
        )

    def close(self) -> None:
        self._http.close()

    def complete(self, req: ChatRequest) -> ChatResponse:
        payload = req.to_wire()
        last_error = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                self._sleep(self.backoff * 2 ** (attempt - 1))
            try:
                with self._slots:
                    resp = self._http.post(self.url, json=payload)
            except httpx.TimeoutException as exc:
                last_error = f"timeout: {exc}"
                log.warning("chat request timed out (attempt %d)", attempt + 1)
                continue
            except httpx.TransportError as exc:
                last_error = f"transport: {exc}"
                log.warning("chat transport error (attempt %d): %s", attempt + 1, exc)
                continue
            if resp.status_code >= 500:
                last_error = f"HTTP {resp.status_code}"
                log.warning("chat endpoint returned %d (attempt %d)", resp.status_code, attempt + 1)
                continue
            if resp.status_code in (401, 403):
                raise CredentialError(f"chat endpoint rejected credentials (HTTP {resp.status_code})")
            if resp.status_code >= 400:
                raise BackendConfigError(f"chat endpoint returned HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                body = resp.json()
            except ValueError as exc:
                raise TransportError(f"chat endpoint returned non-JSON body: {exc}") from exc
            return ChatResponse.from_wire(body)
        raise TransportError(f"chat request failed after {self.max_retries + 1} attempts ({last_error})")

    def ask(self, prompt: str, images=(), system: Optional[str] = None, max_tokens: int = 1024) -> str:
        messages = []
        if system:
            messages.append(ChatMessage("system", system))
        messages.append(ChatMessage("user", prompt, list(images)))
        return self.complete(ChatRequest(self.model, messages, 0.0, max_tokens)).text
