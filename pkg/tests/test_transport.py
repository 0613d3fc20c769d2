"""Tests for the chat-completions transport, with HTTP mocked by respx."""

from __future__ import annotations

import json

import httpx
import pytest
import respx

from dyadic.agent import PromptRequest, analyze_dialogue
from dyadic.models import AgentConfig, LlmConfig, SceneContext, TranscriptWord
from dyadic.transport import HttpLlmPort, TransportConfigError, TransportError

BASE_URL = "https://llm.example.com/v1"
ENDPOINT = f"{BASE_URL}/chat/completions"

SCENE = SceneContext(
    scenario="A job interview",
    relationship="acquaintances",
    emotion="neutral",
    character_settings={"I": "Interviews.", "II": "Answers."},
)


def _request() -> PromptRequest:
    return PromptRequest(
        template_id="dialogue_analyzer",
        prompt="Describe the scene.",
        schema_name="SceneContext",
        response_schema=SceneContext.model_json_schema(),
    )


def _answer(content: str) -> httpx.Response:
    return httpx.Response(
        200, json={"choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]}
    )


def _port(**kwargs) -> HttpLlmPort:
    return HttpLlmPort(base_url=BASE_URL + "/", api_key="sk-test", model="m-1", **kwargs)


# ── configuration ──────────────────────────────────────────────────────────


def test_from_env(monkeypatch):
    """The endpoint, key and model come from the configured variables."""
    monkeypatch.setenv("DYADIC_LLM_BASE_URL", BASE_URL)
    monkeypatch.setenv("DYADIC_LLM_API_KEY", "sk-test")
    monkeypatch.setenv("DYADIC_LLM_MODEL", "m-1")

    port = HttpLlmPort.from_env(LlmConfig(temperature=0.3), timeout=5.0)

    assert (port.base_url, port.model, port.timeout) == (BASE_URL, "m-1", 5.0)
    assert port.temperature == 0.3


def test_from_env_missing_variables(monkeypatch):
    """Unset variables are all named before any request is made."""
    monkeypatch.setenv("DYADIC_LLM_BASE_URL", BASE_URL)
    monkeypatch.delenv("DYADIC_LLM_API_KEY", raising=False)
    monkeypatch.setenv("DYADIC_LLM_MODEL", "  ")

    with pytest.raises(TransportConfigError) as exc_info:
        HttpLlmPort.from_env(LlmConfig())

    assert "DYADIC_LLM_API_KEY" in str(exc_info.value)
    assert "DYADIC_LLM_MODEL" in str(exc_info.value)


# ── requests ───────────────────────────────────────────────────────────────


@respx.mock
def test_complete_returns_message_content():
    """The first choice's message content is the answer."""
    route = respx.post(ENDPOINT).mock(return_value=_answer('{"ok": true}'))
    port = _port()

    assert port.complete(_request()) == '{"ok": true}'
    assert route.called
    assert port.calls == 1


@respx.mock
def test_request_carries_schema_and_credentials():
    """The prompt, model and response schema travel in the body."""
    route = respx.post(ENDPOINT).mock(return_value=_answer("{}"))

    _port(temperature=0.2).complete(_request())

    sent = route.calls.last.request
    body = json.loads(sent.content)
    assert sent.headers["Authorization"] == "Bearer sk-test"
    assert body["model"] == "m-1"
    assert body["temperature"] == 0.2
    assert body["messages"][-1] == {"role": "user", "content": "Describe the scene."}
    assert body["response_format"]["json_schema"]["name"] == "SceneContext"
    assert "scenario" in body["response_format"]["json_schema"]["schema"]["properties"]


@respx.mock
def test_non_success_status():
    """Error statuses raise with the status attached."""
    respx.post(ENDPOINT).mock(return_value=httpx.Response(429, json={"error": "slow down"}))

    with pytest.raises(TransportError, match="429") as exc_info:
        _port().complete(_request())

    assert exc_info.value.status == 429


@respx.mock
def test_timeout():
    """Timeouts become transport errors."""
    respx.post(ENDPOINT).mock(side_effect=httpx.ReadTimeout("timed out"))

    with pytest.raises(TransportError, match="timed out"):
        _port(timeout=1.0).complete(_request())


@respx.mock
def test_connection_error():
    """Network failures become transport errors."""
    respx.post(ENDPOINT).mock(side_effect=httpx.ConnectError("refused"))

    with pytest.raises(TransportError, match="refused"):
        _port().complete(_request())


@respx.mock
def test_unexpected_body():
    """A body without choices is rejected."""
    respx.post(ENDPOINT).mock(return_value=httpx.Response(200, json={"id": "x"}))

    with pytest.raises(TransportError, match="unexpected response body"):
        _port().complete(_request())


@respx.mock
def test_port_drives_the_agent():
    """The agent accepts a schema-valid answer delivered over HTTP."""
    respx.post(ENDPOINT).mock(return_value=_answer(SCENE.model_dump_json()))
    words = [TranscriptWord(word="hello", start=0.0, end=0.3, speaker="I")]

    scene = analyze_dialogue(words, _port(), AgentConfig())

    assert scene == SCENE


@respx.mock
def test_transport_errors_are_not_retried():
    """A failed request surfaces at once instead of being retried."""
    route = respx.post(ENDPOINT).mock(return_value=httpx.Response(500))
    words = [TranscriptWord(word="hello", start=0.0, end=0.3, speaker="I")]

    with pytest.raises(TransportError):
        analyze_dialogue(words, _port(), AgentConfig(retries=2))

    assert route.call_count == 1
