"""Text providers for per-view vocabulary and compatibility grouping.

Two interchangeable providers return the raw response text; parsing lives in
``group3d.vocabulary``.

``FixtureProvider`` reads recorded responses from disk and never touches the
network. ``ChatCompletionProvider`` speaks a minimal chat-completion wire
shape (``model`` plus a ``messages`` list in, ``choices[0].message.content``
out) over an injectable transport, with bounded retries and a hard timeout.
"""

from __future__ import annotations

import json
import logging
import os
import socket
import threading
import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

from .errors import ConfigurationError, LoadError, ProviderError
from .vocabulary import SceneVocabulary

logger = logging.getLogger(__name__)

API_KEY_ENV = "GROUP3D_API_KEY"

VOCAB_PROMPT = """\
You are identifying the dominant object categories present
in the scene.

# Task
- Identify the main object categories visible in the image.

# Constraints
- Focus on the most prominent objects in the scene.
- Use simple singular nouns.
- Mention each category only once.
- Avoid descriptive modifiers.

# Output format
- Return a single comma-separated line containing at most
  five object categories.
"""

GROUPING_PROMPT = """\
You are generating a semantic merge prior for 3D voxel-based
fragment merging.

# Context
- Categories originate from per-frame 2D class-aware segmentation.
- The same physical object may receive different category names
  across frames due to taxonomy variations.

# Task
- Group categories that could plausibly refer to the same physical
  object observed across views.

# Constraints
- Do not group categories merely because they frequently co-occur
  in the same scene or belong to the same structure.
- Do not group structural elements with their openings.
- Do not group part–whole relations.

# Output constraints
- Use only categories from the provided list.
- Each category may appear in at most one group.
- Output only groups containing two or more categories.
- Categories not mentioned are treated as singleton groups.
- Do not include explanations.

# Output format
- group_name: [category1, category2, ...]
"""


def grouping_message(vocab: SceneVocabulary | Sequence[str], template: str = GROUPING_PROMPT) -> str:
    """Prompt text for the grouping query: instruction, then the category list."""
    return template + "\n# Categories\n" + ", ".join(vocab) + "\n"


# -- fixtures -------------------------------------------------------------------


class FixtureProvider:
    """Recorded responses.

    ``vocab_path`` holds one response line per frame; an image reference is
    the 0-based line index. ``grouping_path`` holds the grouping response.
    """

    def __init__(self, vocab_path=None, grouping_path=None):
        self.vocab_path = Path(vocab_path) if vocab_path is not None else None
        self.grouping_path = Path(grouping_path) if grouping_path is not None else None
        self._lines: list[str] | None = None

    @staticmethod
    def _read(path: Path | None, what: str) -> str:
        if path is None:
            raise LoadError(f"no {what} fixture configured")
        try:
            return path.read_text(encoding="utf-8")
        except FileNotFoundError:
            raise LoadError(f"missing {what} fixture: {path}") from None

    def request_vocabulary(self, image_ref, template: str = VOCAB_PROMPT) -> str:
        if self._lines is None:
            self._lines = self._read(self.vocab_path, "vocabulary").splitlines()
        try:
            return self._lines[int(image_ref)]
        except (IndexError, ValueError):
            raise LoadError(f"vocabulary fixture has no line for image {image_ref!r}") from None

    def request_vocabularies(self, image_refs: Sequence) -> list[str]:
        return [self.request_vocabulary(r) for r in image_refs]

    def request_grouping(self, vocab, template: str = GROUPING_PROMPT) -> str:
        return self._read(self.grouping_path, "grouping")


# -- live client ----------------------------------------------------------------


@dataclass(frozen=True)
class HttpResponse:
    status: int
    body: bytes


Transport = Callable[[str, bytes, dict, float], HttpResponse]
"""``transport(url, body, headers, timeout) -> HttpResponse``.

Must raise ``TimeoutError`` on timeout and ``OSError`` on connection failure.
"""


def urllib_transport(url: str, body: bytes, headers: dict, timeout: float) -> HttpResponse:
    req = urllib.request.Request(url, data=body, headers=headers, method="POST")
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return HttpResponse(resp.status, resp.read())
    except urllib.error.HTTPError as exc:
        return HttpResponse(exc.code, exc.read() or b"")
    except urllib.error.URLError as exc:
        if isinstance(exc.reason, socket.timeout):
            raise TimeoutError(str(exc.reason)) from None
        raise OSError(str(exc.reason)) from None
    except socket.timeout as exc:
        raise TimeoutError(str(exc)) from None


def _message_text(payload: dict) -> str:
    content = payload["choices"][0]["message"]["content"]
    if isinstance(content, list):  # content-part form
        return "".join(p.get("text", "") for p in content if isinstance(p, dict))
    if not isinstance(content, str):
        raise TypeError("message content is not text")
    return content


class ChatCompletionProvider:
    """Live provider over a generic chat-completion endpoint.

    Parameters
    ----------
    endpoint : str
        Full URL the JSON request is POSTed to.
    model : str
        Model name sent with each request.
    api_key : str, optional
        Bearer token; defaults to the ``GROUP3D_API_KEY`` environment variable.
    timeout : float
        Per-attempt timeout in seconds.
    max_retries : int
        Extra attempts after a timeout, connection failure, 429 or 5xx.
    backoff : float
        Sleep before retry ``i`` is ``backoff * 2**i`` seconds.
    max_in_flight : int
        Cap on concurrent requests in ``request_vocabularies``.
    transport : callable, optional
        Replaces the urllib transport (used by tests).
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        *,
        api_key: str | None = None,
        timeout: float = 60.0,
        max_retries: int = 2,
        backoff: float = 0.5,
        max_in_flight: int = 4,
        transport: Transport | None = None,
    ):
        if not endpoint:
            raise ConfigurationError("endpoint must be non-empty")
        if timeout <= 0:
            raise ConfigurationError("timeout must be positive")
        if max_retries < 0:
            raise ConfigurationError("max_retries must be non-negative")
        if max_in_flight < 1:
            raise ConfigurationError("max_in_flight must be at least 1")
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff = backoff
        self.max_in_flight = max_in_flight
        self.transport = transport or urllib_transport
        self.retries = 0  # retries performed over the provider's lifetime
        self._lock = threading.Lock()

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        return headers

    def complete(self, text: str, image_ref: str | None = None, *, stage: str = "provider") -> str:
        """Send one user message and return the first choice's text."""
        content: list[dict] = [{"type": "text", "text": text}]
        if image_ref is not None:
            content.append({"type": "image_url", "image_url": {"url": str(image_ref)}})
        body = json.dumps(
            {"model": self.model, "messages": [{"role": "user", "content": content}]}
        ).encode("utf-8")

        last = "no attempt made"
        for attempt in range(self.max_retries + 1):
            if attempt:
                with self._lock:
                    self.retries += 1
                if self.backoff > 0:
                    time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = self.transport(self.endpoint, body, self._headers(), self.timeout)
            except TimeoutError:
                last = f"timed out after {self.timeout}s"
                continue
            except OSError as exc:
                last = f"connection failed: {exc}"
                continue
            if resp.status == 429 or resp.status >= 500:
                last = f"HTTP {resp.status}"
                continue
            if resp.status != 200:
                raise self._error(stage, f"HTTP {resp.status}")
            try:
                return _message_text(json.loads(resp.body.decode("utf-8")))
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise self._error(stage, f"malformed response: {exc}") from None
        raise self._error(stage, f"{last} ({self.max_retries + 1} attempts)")

    @staticmethod
    def _error(stage: str, msg: str) -> ProviderError:
        err = ProviderError(msg)
        err.stage = stage
        return err

    def request_vocabulary(self, image_ref, template: str = VOCAB_PROMPT) -> str:
        return self.complete(template, image_ref, stage="vocabulary")

    def request_vocabularies(self, image_refs: Sequence) -> list[str]:
        """Concurrent per-frame queries; results follow the input order."""
        with ThreadPoolExecutor(max_workers=self.max_in_flight) as pool:
            return list(pool.map(self.request_vocabulary, image_refs))

    def request_grouping(self, vocab, template: str = GROUPING_PROMPT) -> str:
        return self.complete(grouping_message(vocab, template), stage="grouping")
