"""Minimal OpenAI-style completion client plus an in-process mock server.

The client is deliberately small: one POST per completion, bounded retries
with exponential backoff for timeouts and rate limiting, and a typed status
on every response.  Transport trouble is data, not an exception; callers
decide what a failed completion means for their pipeline.

The mock server binds an ephemeral localhost port and answers the same wire
format.  Behavior is programmable per test: a responder callable, fixture
completions keyed by prompt hash, a default completion, and a queue of
status codes to fail with first.  Responses carry no timestamps so runs
against the mock are byte-reproducible.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import requests

STATUS_OK = "ok"
STATUS_TIMEOUT = "timeout"
STATUS_RATE_LIMITED = "rate_limited"
STATUS_HTTP_ERROR = "http_error"
STATUS_TRUNCATED = "truncated"

ENV_URL = "CFRAG_LLM_URL"
ENV_KEY = "CFRAG_LLM_KEY"
ENV_MODEL = "CFRAG_LLM_MODEL"


class LlmError(Exception):
    """Configuration mistakes; transport failures are response statuses."""


@dataclass(frozen=True)
class LlmConfig:
    url: str
    model: str = "default"
    api_key: str = ""
    timeout: float = 60.0
    retries: int = 3  # extra attempts after the first
    backoff: float = 1.0  # seconds; doubles per retry
    max_tokens: int = 512
    concurrency: int = 4

    @classmethod
    def from_env(cls, **overrides) -> "LlmConfig":
        url = os.environ.get(ENV_URL, "")
        if not url:
            raise LlmError(f"{ENV_URL} is not set")
        values = {
            "url": url,
            "api_key": os.environ.get(ENV_KEY, ""),
            "model": os.environ.get(ENV_MODEL, "default"),
        }
        values.update(overrides)
        return cls(**values)


@dataclass(frozen=True)
class LlmRequest:
    request_id: str
    prompt: str
    temperature: float = 0.0
    max_tokens: int | None = None  # falls back to the config value


@dataclass(frozen=True)
class LlmResponse:
    request_id: str
    completion: str
    status: str
    http_code: int | None
    attempts: int
    prompt_tokens: int = 0
    completion_tokens: int = 0

    @property
    def ok(self) -> bool:
        return self.status == STATUS_OK


def prompt_sha256(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def log_row(request: LlmRequest, response: LlmResponse) -> dict:
    """A reproducible request-log record: hashes and statuses, no clocks."""
    return {
        "request_id": request.request_id,
        "prompt_sha256": prompt_sha256(request.prompt),
        "status": response.status,
        "http_code": response.http_code,
        "attempts": response.attempts,
    }


class LlmClient:
    def __init__(self, config: LlmConfig):
        if config.concurrency < 1:
            raise LlmError("concurrency must be at least 1")
        if config.retries < 0:
            raise LlmError("retries must not be negative")
        self.config = config

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.config.api_key:
            headers["Authorization"] = f"Bearer {self.config.api_key}"
        return headers

    def complete(self, request: LlmRequest) -> LlmResponse:
        cfg = self.config
        payload = {
            "model": cfg.model,
            "prompt": request.prompt,
            "max_tokens": request.max_tokens or cfg.max_tokens,
            "temperature": request.temperature,
        }
        attempt = 0
        while True:
            attempt += 1
            status, response = self._attempt(request, payload, attempt)
            retryable = status in (STATUS_TIMEOUT, STATUS_RATE_LIMITED)
            if not retryable or attempt > cfg.retries:
                return response
            time.sleep(cfg.backoff * (2 ** (attempt - 1)))

    def _attempt(self, request: LlmRequest, payload: dict, attempt: int):
        cfg = self.config

        def resp(status, http_code=None, completion="", p_tok=0, c_tok=0):
            return status, LlmResponse(
                request_id=request.request_id,
                completion=completion,
                status=status,
                http_code=http_code,
                attempts=attempt,
                prompt_tokens=p_tok,
                completion_tokens=c_tok,
            )

        try:
            http = requests.post(
                cfg.url, json=payload, headers=self._headers(), timeout=cfg.timeout
            )
        except (requests.Timeout, requests.ConnectionError):
            return resp(STATUS_TIMEOUT)
        if http.status_code == 429:
            return resp(STATUS_RATE_LIMITED, http_code=429)
        if http.status_code != 200:
            return resp(STATUS_HTTP_ERROR, http_code=http.status_code)
        try:
            body = http.json()
            choice = body["choices"][0]
            text = choice.get("text", "")
            finish = choice.get("finish_reason", "stop")
        except (ValueError, KeyError, IndexError, TypeError):
            return resp(STATUS_HTTP_ERROR, http_code=200)
        usage = body.get("usage", {})
        p_tok = int(usage.get("prompt_tokens", 0))
        c_tok = int(usage.get("completion_tokens", 0))
        status = STATUS_TRUNCATED if (finish == "length" or not text) else STATUS_OK
        return resp(status, http_code=200, completion=text, p_tok=p_tok, c_tok=c_tok)

    def complete_many(self, requests_: list) -> list:
        """Concurrent completions, results in request order."""
        if len(requests_) <= 1 or self.config.concurrency == 1:
            return [self.complete(r) for r in requests_]
        with ThreadPoolExecutor(max_workers=self.config.concurrency) as pool:
            return list(pool.map(self.complete, requests_))


# --- Mock server --------------------------------------------------------------


@dataclass
class _MockState:
    responder: object
    fixtures: dict
    default_completion: str
    finish_reason: str
    fail_statuses: list
    lock: threading.Lock = field(default_factory=threading.Lock)
    request_count: int = 0


class MockLlmServer:
    """Deterministic localhost stand-in for a completion endpoint.

    Resolution order per request: queued failure status, then ``responder``
    (a prompt -> completion callable), then ``fixtures`` keyed by
    ``prompt_key(prompt)``, then ``default_completion``.
    """

    def __init__(
        self,
        responder=None,
        fixtures: dict | None = None,
        default_completion: str = "",
        finish_reason: str = "stop",
        fail_statuses: list | None = None,
    ):
        self._state = _MockState(
            responder=responder,
            fixtures=dict(fixtures or {}),
            default_completion=default_completion,
            finish_reason=finish_reason,
            fail_statuses=list(fail_statuses or []),
        )
        state = self._state

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):  # noqa: D102 - silence stderr
                pass

            def do_POST(self):
                length = int(self.headers.get("Content-Length", "0"))
                try:
                    data = json.loads(self.rfile.read(length) or b"{}")
                except ValueError:
                    data = {}
                prompt = data.get("prompt", "")
                with state.lock:
                    state.request_count += 1
                    fail_code = (
                        state.fail_statuses.pop(0) if state.fail_statuses else None
                    )
                if fail_code is not None:
                    body = json.dumps({"error": {"code": fail_code}}).encode()
                    self.send_response(fail_code)
                    self.send_header("Content-Type", "application/json")
                    self.send_header("Content-Length", str(len(body)))
                    self.end_headers()
                    self.wfile.write(body)
                    return
                if state.responder is not None:
                    completion = state.responder(prompt)
                else:
                    completion = state.fixtures.get(
                        prompt_sha256(prompt), state.default_completion
                    )
                payload = {
                    "id": f"mock-{prompt_sha256(prompt)[:8]}",
                    "object": "text_completion",
                    "model": data.get("model", "mock"),
                    "choices": [
                        {
                            "text": completion,
                            "index": 0,
                            "finish_reason": state.finish_reason,
                        }
                    ],
                    "usage": {
                        "prompt_tokens": len(prompt.split()),
                        "completion_tokens": len(completion.split()),
                        "total_tokens": len(prompt.split()) + len(completion.split()),
                    },
                }
                body = json.dumps(payload, sort_keys=True).encode()
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread: threading.Thread | None = None

    @staticmethod
    def prompt_key(prompt: str) -> str:
        return prompt_sha256(prompt)

    @property
    def url(self) -> str:
        host, port = self._server.server_address
        return f"http://{host}:{port}/v1/completions"

    @property
    def request_count(self) -> int:
        with self._state.lock:
            return self._state.request_count

    def start(self) -> "MockLlmServer":
        self._thread = threading.Thread(
            target=self._server.serve_forever, daemon=True
        )
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        if self._thread is not None:
            self._thread.join()
        self._server.server_close()

    def __enter__(self) -> "MockLlmServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()
