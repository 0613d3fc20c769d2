"""HTTP transport for chat-completions-compatible endpoints."""

from __future__ import annotations

import hashlib
import os

import httpx
from loguru import logger

from dyadic.agent import AgentError, PromptRequest
from dyadic.models import LlmConfig


class TransportError(AgentError):
    """Raised for network failures, timeouts and non-2xx responses."""

    def __init__(self, message: str, status: int | None = None) -> None:
        self.status = status
        super().__init__(message)


class TransportConfigError(TransportError):
    """Raised when the endpoint, credential or model is not configured."""


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:12]


class HttpLlmPort:
    """:class:`~dyadic.agent.LlmPort` that posts each request to ``{base_url}/chat/completions``.

    The response schema travels as a ``json_schema`` response format. Only
    hashes of prompts and answers are logged unless ``verbose`` is set.
    """

    def __init__(
        self,
        base_url: str,
        api_key: str,
        model: str,
        timeout: float = 30.0,
        temperature: float = 0.0,
        verbose: bool = False,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.model = model
        self.timeout = timeout
        self.temperature = temperature
        self.verbose = verbose
        self.calls = 0

    @classmethod
    def from_env(
        cls, config: LlmConfig, timeout: float = 30.0, verbose: bool = False
    ) -> HttpLlmPort:
        """Build a port from the environment variables named in ``config``.

        Raises:
            TransportConfigError: Before any network call, if a variable is unset.
        """
        values = {
            name: os.environ.get(name, "").strip()
            for name in (config.base_url_env, config.api_key_env, config.model_env)
        }
        missing = [name for name, value in values.items() if not value]
        if missing:
            raise TransportConfigError(f"Missing environment variable(s): {', '.join(missing)}")
        return cls(
            base_url=values[config.base_url_env],
            api_key=values[config.api_key_env],
            model=values[config.model_env],
            timeout=timeout,
            temperature=config.temperature,
            verbose=verbose,
        )

    def _payload(self, request: PromptRequest) -> dict[str, object]:
        return {
            "model": self.model,
            "temperature": self.temperature,
            "messages": [
                {"role": "system", "content": "Answer with one JSON object that fits the schema."},
                {"role": "user", "content": request.prompt},
            ],
            "response_format": {
                "type": "json_schema",
                "json_schema": {
                    "name": request.schema_name,
                    "schema": request.response_schema,
                },
            },
        }

    def complete(self, request: PromptRequest) -> str:
        url = f"{self.base_url}/chat/completions"
        headers = {
            "Authorization": f"Bearer {self.api_key}",
            "Content-Type": "application/json",
        }
        self.calls += 1
        if self.verbose:
            logger.debug("POST {} {}:\n{}", url, request.template_id, request.prompt)
        else:
            logger.debug("POST {} {} prompt={}", url, request.template_id, _digest(request.prompt))
        try:
            with httpx.Client(timeout=self.timeout) as client:
                resp = client.post(url, headers=headers, json=self._payload(request))
        except httpx.TimeoutException as e:
            raise TransportError(
                f"{request.template_id}: request timed out after {self.timeout}s"
            ) from e
        except httpx.HTTPError as e:
            raise TransportError(f"{request.template_id}: {e}") from e
        if not resp.is_success:
            raise TransportError(
                f"{request.template_id}: endpoint answered {resp.status_code}",
                status=resp.status_code,
            )
        try:
            content = resp.json()["choices"][0]["message"].get("content") or ""
        except (ValueError, KeyError, IndexError, TypeError) as e:
            raise TransportError(f"{request.template_id}: unexpected response body") from e
        if self.verbose:
            logger.debug("{} answered:\n{}", request.template_id, content)
        else:
            logger.debug("{} answered {}", request.template_id, _digest(content))
        return str(content)
