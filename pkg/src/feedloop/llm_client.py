"""Text-completion clients for the prompt pathway.

The wire contract is a single HTTP POST of {"prompt": string} returning
{"text": string}. The deterministic mock replays scripted responses from a
JSONL fixture and is the default in tests and simulations; the HTTP client is
the only permitted external network call and stays off unless configured.
"""

from __future__ import annotations

import json
import threading
import urllib.error
import urllib.request
from pathlib import Path
from typing import Iterable, Optional

from .errors import ClientFailure


class HttpCompletionClient:
    """POSTs prompts to a configured endpoint with a bounded in-flight cap."""

    def __init__(
        self,
        endpoint: str,
        auth_token: Optional[str] = None,
        timeout: float = 30.0,
        max_in_flight: int = 2,
    ) -> None:
        self.endpoint = endpoint
        self.auth_token = auth_token
        self.timeout = timeout
        self._slots = threading.Semaphore(max_in_flight)

    def complete(self, prompt: str) -> str:
        body = json.dumps({"prompt": prompt}).encode("utf-8")
        headers = {"Content-Type": "application/json"}
        if self.auth_token:
            headers["Authorization"] = f"Bearer {self.auth_token}"
        request = urllib.request.Request(self.endpoint, data=body, headers=headers)
        with self._slots:
            try:
                with urllib.request.urlopen(request, timeout=self.timeout) as response:
                    payload = json.loads(response.read().decode("utf-8"))
            except (urllib.error.URLError, TimeoutError, OSError, json.JSONDecodeError) as exc:
                raise ClientFailure(f"completion endpoint failed: {exc}") from exc
        if not isinstance(payload, dict) or not isinstance(payload.get("text"), str):
            raise ClientFailure(f"completion endpoint returned malformed body: {payload!r}")
        return payload["text"]


class MockCompletionClient:
    """Deterministic scripted client: responses are consumed in order.

    An exhausted script raises ClientFailure unless cycle=True, in which case
    the script repeats from the top.
    """

    def __init__(self, responses: Iterable[str], cycle: bool = False) -> None:
        self._responses = list(responses)
        self._cycle = cycle
        self._cursor = 0
        self._lock = threading.Lock()
        self.prompts: list[str] = []  # captured for assertions

    @classmethod
    def from_jsonl(cls, path: str | Path, cycle: bool = False) -> "MockCompletionClient":
        responses = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            responses.append(doc["text"])
        return cls(responses, cycle=cycle)

    def complete(self, prompt: str) -> str:
        with self._lock:
            self.prompts.append(prompt)
            if self._cursor >= len(self._responses):
                if not self._cycle or not self._responses:
                    raise ClientFailure("mock script exhausted")
                self._cursor = 0
            response = self._responses[self._cursor]
            self._cursor += 1
            return response


def client_from_config(cfg) -> Optional[object]:
    """Build a client from an LlmClientConfig; None when neither an endpoint
    nor a mock script is configured."""
    if cfg.mock_script:
        return MockCompletionClient.from_jsonl(cfg.mock_script, cycle=cfg.mock_cycle)
    if cfg.endpoint:
        return HttpCompletionClient(
            endpoint=cfg.endpoint,
            auth_token=cfg.auth_token,
            timeout=cfg.timeout,
            max_in_flight=cfg.max_in_flight,
        )
    return None
