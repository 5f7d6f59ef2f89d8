"""HTTP client for chat-completion style LLM endpoints."""

import logging
import os
import time
from typing import Callable, Dict, List, Optional

import httpx

from rankdigest.config import RemoteSpec
from rankdigest.errors import BackendUnavailable

logger = logging.getLogger(__name__)

_RETRYABLE_STATUS = {408, 409, 429, 500, 502, 503, 504}


class RemoteChatClient:
    """
    Sends a system line plus one user prompt and returns the first choice's text.

    Args:
        spec: Endpoint, model, timeout and retry settings
        transport: Optional httpx transport (tests pass httpx.MockTransport)
        sleep: Backoff sleep function
    """

    def __init__(
        self,
        spec: RemoteSpec,
        transport: Optional[httpx.BaseTransport] = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.spec = spec
        self._sleep = sleep
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(spec.api_key_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        else:
            logger.warning("No API key in $%s; calling %s without a bearer token", spec.api_key_env, spec.url)
        self._client = httpx.Client(timeout=spec.timeout_s, headers=headers, transport=transport)

    @property
    def name(self) -> str:
        return f"remote:{self.spec.model}"

    def build_payload(self, prompt: str) -> Dict[str, object]:
        messages: List[Dict[str, str]] = [
            {"role": "system", "content": self.spec.system_prompt},
            {"role": "user", "content": prompt},
        ]
        return {"model": self.spec.model, "messages": messages, "temperature": 0}

    def complete(self, prompt: str) -> str:
        """
        Send one prompt with exponential backoff.

        Raises:
            BackendUnavailable: After max_retries failed retries or a non-retryable error
        """
        payload = self.build_payload(prompt)
        last_error = "no attempt made"
        for attempt in range(self.spec.max_retries + 1):
            try:
                response = self._client.post(self.spec.url, json=payload)
            except httpx.HTTPError as exc:
                last_error = f"{type(exc).__name__}: {exc}"
            else:
                if response.status_code == 200:
                    return _first_choice_text(response, self.name)
                last_error = f"HTTP {response.status_code}: {response.text[:200]}"
                if response.status_code not in _RETRYABLE_STATUS:
                    raise BackendUnavailable(self.name, last_error)
            if attempt < self.spec.max_retries:
                wait = self.spec.backoff_s * (2**attempt)
                logger.warning("Remote call failed (%s); retry %d in %.1fs", last_error, attempt + 1, wait)
                self._sleep(wait)
        raise BackendUnavailable(self.name, last_error)

    def probe(self) -> None:
        """Startup reachability check: one tiny completion."""
        self.complete("ping")

    def close(self) -> None:
        self._client.close()


def _first_choice_text(response: httpx.Response, name: str) -> str:
    try:
        data = response.json()
        content = data["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise BackendUnavailable(name, f"unexpected response body: {exc}")
    if not isinstance(content, str):
        raise BackendUnavailable(name, "response content is not text")
    return content
