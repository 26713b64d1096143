import json
import os
import threading

import httpx
import pytest
from hypothesis import given, strategies as st

from regionopt.errors import ConfigurationError, TransportError
from regionopt.gateway import (AgentGateway, HttpTransport, MockTransport, ModelConfig,
                               TokenLedger, estimate_tokens)
from regionopt.prompts import PromptPair

PROMPT = PromptPair("system text", "user text here")


def gateway(script, sleeps=None, **cfg):
    sleep = sleeps.append if sleeps is not None else (lambda s: None)
    return AgentGateway(MockTransport(script), ModelConfig(**cfg), sleep=sleep)


def test_ledger_counts_reported_usage():
    ledger = TokenLedger()
    gw = gateway([{"reply": "a", "input_tokens": 10, "output_tokens": 3},
                  {"reply": "b", "input_tokens": 7, "output_tokens": 2}])
    assert gw.complete(PROMPT, ledger) == "a"
    s = ledger.snapshot()
    assert (s.api_calls, s.input_tokens, s.output_tokens, s.estimated) == (1, 10, 3, False)
    assert gw.complete(PROMPT, ledger) == "b"
    s = ledger.snapshot()
    assert (s.api_calls, s.input_tokens, s.output_tokens) == (2, 17, 5)


def test_estimated_tokens_when_usage_missing():
    ledger = TokenLedger()
    gateway(["abcde"]).complete(PROMPT, ledger)
    s = ledger.snapshot()
    assert s.estimated
    assert s.input_tokens == estimate_tokens("system text") + estimate_tokens("user text here")
    assert s.output_tokens == 2


@pytest.mark.parametrize("text, n", [("", 0), ("a", 1), ("abcd", 1), ("abcde", 2), ("x" * 400, 100)])
def test_estimate_tokens(text, n):
    assert estimate_tokens(text) == n


def test_transient_failures_retry_with_backoff():
    sleeps, ledger = [], TokenLedger()
    gw = gateway([{"error": "busy", "transient": True}, {"error": "busy", "transient": True},
                  "ok"], sleeps=sleeps, backoff=0.5)
    assert gw.complete(PROMPT, ledger) == "ok"
    assert sleeps == [0.5, 1.0]
    assert ledger.snapshot().api_calls == 1


def test_retries_exhausted():
    ledger = TokenLedger()
    gw = gateway([{"error": "busy", "transient": True}] * 5, retries=2)
    with pytest.raises(TransportError, match="3 attempts"):
        gw.complete(PROMPT, ledger)
    assert gw.transport.remaining == 2
    assert ledger.snapshot().api_calls == 0


def test_permanent_failure_not_retried():
    gw = gateway([{"error": "denied"}, "never"])
    with pytest.raises(TransportError, match="denied"):
        gw.complete(PROMPT, TokenLedger())
    assert gw.transport.remaining == 1


def test_mock_exhausted_and_records_requests():
    t = MockTransport(["only"])
    gw = AgentGateway(t)
    agent = gw.bind(TokenLedger())
    assert agent.ask(PROMPT) == "only"
    with pytest.raises(TransportError, match="exhausted"):
        agent.ask(PromptPair("s", "second"))
    assert [r.user for r in t.requests] == ["user text here", "second"]


def test_mock_from_file(tmp_path):
    p = tmp_path / "script.json"
    p.write_text(json.dumps(["one", {"reply": "two", "input_tokens": 1, "output_tokens": 1}]))
    t = MockTransport.from_file(p)
    assert t.remaining == 2
    p.write_text('{"reply": "x"}')
    with pytest.raises(ConfigurationError):
        MockTransport.from_file(p)


def test_http_requires_api_key(monkeypatch):
    monkeypatch.delenv("OPENAI_API_KEY", raising=False)
    ledger = TokenLedger()
    with pytest.raises(ConfigurationError, match="OPENAI_API_KEY"):
        HttpTransport()
    assert ledger.snapshot().api_calls == 0


def http(monkeypatch, handler):
    monkeypatch.setenv("OPENAI_API_KEY", "sk-test")
    client = httpx.Client(transport=httpx.MockTransport(handler))
    return HttpTransport(base_url="http://llm.local/v1/", client=client)


def test_http_success(monkeypatch):
    seen = {}

    def handler(request):
        seen["url"] = str(request.url)
        seen["auth"] = request.headers["authorization"]
        seen["body"] = json.loads(request.content)
        return httpx.Response(200, json={
            "choices": [{"message": {"content": "<sol></sol>"}}],
            "usage": {"prompt_tokens": 31, "completion_tokens": 4}})

    t = http(monkeypatch, handler)
    ledger = TokenLedger()
    assert AgentGateway(t).complete(PROMPT, ledger) == "<sol></sol>"
    assert seen["url"] == "http://llm.local/v1/chat/completions"
    assert seen["auth"] == "Bearer sk-test"
    assert seen["body"]["messages"] == [{"role": "system", "content": "system text"},
                                        {"role": "user", "content": "user text here"}]
    assert seen["body"]["model"] == "gpt-4o-mini"
    s = ledger.snapshot()
    assert (s.input_tokens, s.output_tokens, s.estimated) == (31, 4, False)


@pytest.mark.parametrize("status", [429, 500, 503])
def test_http_transient_status_retried(monkeypatch, status):
    calls = []

    def handler(request):
        calls.append(1)
        if len(calls) == 1:
            return httpx.Response(status, text="slow down")
        return httpx.Response(200, json={"choices": [{"message": {"content": "fine"}}]})

    gw = AgentGateway(http(monkeypatch, handler), sleep=lambda s: None)
    ledger = TokenLedger()
    assert gw.complete(PROMPT, ledger) == "fine"
    assert len(calls) == 2 and ledger.snapshot().estimated


def test_http_client_error_is_permanent(monkeypatch):
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(400, text="bad request")

    gw = AgentGateway(http(monkeypatch, handler), sleep=lambda s: None)
    with pytest.raises(TransportError, match="HTTP 400"):
        gw.complete(PROMPT, TokenLedger())
    assert len(calls) == 1


def test_http_bad_shape(monkeypatch):
    t = http(monkeypatch, lambda r: httpx.Response(200, json={"nothing": []}))
    with pytest.raises(TransportError, match="shape"):
        AgentGateway(t).complete(PROMPT, TokenLedger())


def test_http_connection_error_is_transient(monkeypatch):
    def handler(request):
        raise httpx.ConnectError("refused")

    gw = AgentGateway(http(monkeypatch, handler), ModelConfig(retries=1), sleep=lambda s: None)
    with pytest.raises(TransportError, match="2 attempts"):
        gw.complete(PROMPT, TokenLedger())


def test_model_config_validation():
    with pytest.raises(ConfigurationError):
        ModelConfig(retries=-1)
    with pytest.raises(ConfigurationError):
        ModelConfig(timeout=0)


@given(st.lists(st.tuples(st.integers(0, 10**6), st.integers(0, 10**6)), max_size=30))
def test_ledger_monotonic(usages):
    ledger = TokenLedger()
    prev = ledger.snapshot()
    for n_in, n_out in usages:
        ledger.record(n_in, n_out)
        cur = ledger.snapshot()
        assert cur.api_calls == prev.api_calls + 1
        assert cur.input_tokens >= prev.input_tokens and cur.output_tokens >= prev.output_tokens
        prev = cur
    assert prev.input_tokens == sum(u[0] for u in usages)


def test_ledger_rejects_negative():
    with pytest.raises(ValueError):
        TokenLedger().record(-1, 0)


def test_ledger_thread_safe():
    ledger = TokenLedger()

    def work():
        for _ in range(2000):
            ledger.record(2, 1)

    threads = [threading.Thread(target=work) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    s = ledger.snapshot()
    assert (s.api_calls, s.input_tokens, s.output_tokens) == (16000, 32000, 16000)


@pytest.mark.skipif(not (os.environ.get("REGIONOPT_LIVE") and os.environ.get("OPENAI_API_KEY")),
                    reason="live smoke test; set REGIONOPT_LIVE=1 and OPENAI_API_KEY")
def test_live_smoke():
    ledger = TokenLedger()
    text = AgentGateway(HttpTransport()).complete(PromptPair("Reply with OK.", "Ping"), ledger)
    assert text and ledger.snapshot().api_calls == 1
