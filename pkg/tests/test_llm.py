import json

import httpx
import pytest
from hypothesis import given, settings, strategies as st

from metaforge.corpus import Chunk
from metaforge.llm.clients import (ChatRequest, HttpClient, LLMResponse, LLMTransportError,
                                   MockClient, ReplayClient, SequenceClient,
                                   parse_chat_completion)
from metaforge.llm.parsing import ParseFailure, coerce_value, last_json_object, parse_response
from metaforge.llm.prompts import build_prompt
from metaforge.llm.retry import ExtractionFailed, extract_with_retry
from metaforge.llm.schema import TOOL_NAME, build_tool_schema
from metaforge.selection import SelectedContext
from metaforge.template import FieldSpec, Template


def ctx(*texts):
    chunks = [Chunk("d", i, (i, i + 1), t, 3) for i, t in enumerate(texts)]
    return SelectedContext(chunks, 3 * len(chunks), {}, 100)


AB = Template((FieldSpec("A"), FieldSpec("B")))


# Tool schema

def test_schema_for_three_field_example():
    t = Template((FieldSpec("document_name"), FieldSpec("effective_date", value_type="date"),
                  FieldSpec("parties", value_type="array")))
    schema = build_tool_schema(t)
    assert schema.name == "extract_metadata"
    props = schema.parameters["properties"]
    assert "string" in props["document_name"]["type"]
    assert "string" in props["effective_date"]["type"]
    assert props["effective_date"]["format"] == "date"
    assert "array" in props["parties"]["type"] and props["parties"]["items"] == {"type": "string"}
    assert sorted(schema.parameters["required"]) == ["document_name", "effective_date", "parties"]
    # Unknown values may be reported as null.
    assert list(schema.validator().iter_errors(
        {"document_name": None, "effective_date": None, "parties": None})) == []


def test_schema_enum_and_order_canonicalization(three_field_template):
    props = build_tool_schema(three_field_template).parameters["properties"]
    assert props["Most Favored Nation"]["enum"][:2] == ["Yes", "No"]
    reversed_t = Template(tuple(reversed(three_field_template.fields)))
    a, b = build_tool_schema(three_field_template), build_tool_schema(reversed_t)
    assert a.canonical() == b.canonical()
    assert a.parameters["properties"] == b.parameters["properties"]


def test_schema_rejects_bad_date_and_extra_keys():
    t = Template((FieldSpec("d", value_type="date"),))
    v = build_tool_schema(t).validator()
    assert list(v.iter_errors({"d": "2024-03-24"})) == []
    assert list(v.iter_errors({"d": "not a date"}))
    assert list(v.iter_errors({"d": None, "x": 1}))


# Prompts

def test_prompt_modes():
    plain = build_prompt(ctx("alpha", "beta"), AB, "plain")
    assert plain.user_text.count("<thinking>") == 0
    cot = build_prompt(ctx("alpha"), AB, "cot")
    assert "<thinking>" in cot.user_text and "</thinking>" in cot.user_text
    with pytest.raises(ValueError):
        build_prompt(ctx("alpha"), AB, "poetry")
    with pytest.raises(ValueError):
        build_prompt(SelectedContext([], 0, {}, 10), AB)


def test_prompt_embeds_each_chunk_once_in_order():
    c = SelectedContext([Chunk("d", 4, (0, 1), "first-chunk", 1),
                         Chunk("d", 9, (5, 6), "second-chunk", 1)], 2, {}, 10)
    text = build_prompt(c, AB).user_text
    assert text.count("first-chunk") == 1 and text.count("second-chunk") == 1
    assert text.index('<chunk index="4">') < text.index("first-chunk") < text.index(
        '<chunk index="9">') < text.index("second-chunk")


def test_prompt_lists_prior_values():
    t = Template((FieldSpec("Parties", value_type="array"), FieldSpec("End Date", value_type="date")))
    text = build_prompt(ctx("x"), t, prior={"Parties": ["Acme"], "End Date": None}).user_text
    known = text.split("Values already extracted")[1].split("Fields still missing")[0]
    missing = text.split("Fields still missing")[1]
    assert '- Parties: ["Acme"]' in known and "End Date" not in known
    assert "- End Date" in missing and "Parties" not in missing


def test_request_fingerprint_ignores_metadata():
    p = build_prompt(ctx("x"), AB)
    r1 = p.to_request(AB, metadata={"doc_id": "a"})
    r2 = p.to_request(AB, metadata={"doc_id": "b"})
    assert r1.fingerprint() == r2.fingerprint()
    assert p.to_request(AB, tool_use=False).fingerprint() != r1.fingerprint()
    body = r1.body()
    assert body["tools"][0]["function"]["name"] == TOOL_NAME
    assert body["temperature"] == 0.0


# Parsing

def test_cot_trace_with_json_payload():
    t = Template((FieldSpec("End Date", value_type="date"),))
    raw = ("No end date is written down.\n"
           "<thinking>The term runs fifty days from the start.</thinking>\n"
           "<thinking>Start is February 2, 2024; fifty days later is March 24, 2024.</thinking>\n"
           "<thinking>So the answer is March 24, 2024.</thinking>\n"
           '{"End Date": "March 24, 2024"}')
    result = parse_response(raw, t)
    assert result.values == {"End Date": "2024-03-24"}
    assert len(result.thinking_trace) == 3
    assert result.diagnostics == []


def test_tool_call_pass_through(three_field_template):
    args = {"Parties": ["Acme Corp", "Beta LLC"], "Effective Date": "2024-03-24",
            "Most Favored Nation": "No"}
    result = parse_response(LLMResponse.tool(TOOL_NAME, args), three_field_template)
    assert result.values == args
    assert result.thinking_trace == [] and result.diagnostics == []
    as_string = LLMResponse.tool(TOOL_NAME, json.dumps(args))
    assert parse_response(as_string, three_field_template).values == args


def test_enum_outside_options(three_field_template):
    result = parse_response('{"Most Favored Nation": "Maybe"}', three_field_template)
    assert result.values["Most Favored Nation"] is None
    msgs = {d["field"]: d["message"] for d in result.diagnostics}
    assert "value not in options" in msgs["Most Favored Nation"]
    tool = parse_response(LLMResponse.tool(TOOL_NAME, {
        "Parties": None, "Effective Date": None, "Most Favored Nation": "Maybe"}),
        three_field_template)
    assert tool.values["Most Favored Nation"] is None
    assert any("value not in options" in d["message"] for d in tool.diagnostics)


def test_parse_failure_carries_raw_text():
    with pytest.raises(ParseFailure) as info:
        parse_response("I could not find anything.", AB)
    assert info.value.raw == "I could not find anything."


def test_parse_never_invents_keys():
    result = parse_response('{"A": "x", "Z": "extra"}', AB)
    assert set(result.values) == {"A", "B"}
    assert result.values["B"] is None


def test_last_json_object_wins():
    assert last_json_object('{"a": 1} then {"a": 2} and {broken') == {"a": 2}
    assert last_json_object("none here") is None


@pytest.mark.parametrize("vtype, options, raw, expected, problem", [
    ("date", (), "24 March 2024", "2024-03-24", None),
    ("date", (), "03/24/2024", "2024-03-24", None),
    ("date", (), "sometime", None, "unrecognized date"),
    ("integer", (), "1,200", 1200, None),
    ("integer", (), "12.5", None, "expected integer"),
    ("number", (), "$3.50", 3.5, None),
    ("multiSelect", ("a", "b"), ["A", "a", "b"], ["a", "b"], None),
    ("multiSelect", ("a", "b"), ["c"], None, "value not in options"),
    ("array", (), "solo", ["solo"], None),
    ("string", (), "N/A", None, None),
    ("string", (), {"x": 1}, None, "expected a string"),
])
def test_coerce_value(vtype, options, raw, expected, problem):
    assert coerce_value(FieldSpec("f", "", vtype, options), raw) == (expected, problem)


# Retry loop

def test_retry_fills_missing_field():
    client = SequenceClient([LLMResponse.tool(TOOL_NAME, {"A": "x", "B": None}),
                             LLMResponse.tool(TOOL_NAME, {"A": "x", "B": "y"})])
    result = extract_with_retry(client, ctx("text"), AB, max_retries=1)
    assert result.values == {"A": "x", "B": "y"}
    assert result.attempt == 1
    second = client.calls[1].user_text
    assert '- A: "x"' in second and "- B" in second.split("Fields still missing")[1]


def test_retry_early_exit_and_disabled():
    full = LLMResponse.tool(TOOL_NAME, {"A": "x", "B": "y"})
    client = SequenceClient([full] * 5)
    assert extract_with_retry(client, ctx("t"), AB, max_retries=4).attempt == 0
    assert len(client.calls) == 1
    partial = SequenceClient([LLMResponse.tool(TOOL_NAME, {"A": "x", "B": None})])
    result = extract_with_retry(partial, ctx("t"), AB, max_retries=0)
    assert result.values == {"A": "x", "B": None} and result.attempt == 0


def test_retry_newer_non_null_value_wins():
    client = SequenceClient([LLMResponse.tool(TOOL_NAME, {"A": "old", "B": None}),
                             LLMResponse.tool(TOOL_NAME, {"A": "new", "B": None}),
                             LLMResponse.tool(TOOL_NAME, {"A": None, "B": "b"})])
    result = extract_with_retry(client, ctx("t"), AB, max_retries=2)
    assert result.values == {"A": "new", "B": "b"}


def test_retry_all_attempts_unparseable():
    client = SequenceClient([LLMResponse("nothing"), LLMResponse("still nothing")])
    with pytest.raises(ExtractionFailed) as info:
        extract_with_retry(client, ctx("t"), AB, max_retries=1, tool_use=False)
    assert info.value.raw_responses == ["nothing", "still nothing"]
    with pytest.raises(ValueError):
        extract_with_retry(client, ctx("t"), AB, max_retries=-1)


def test_retry_metadata_carries_attempt():
    client = SequenceClient([LLMResponse.tool(TOOL_NAME, {"A": None, "B": None})] * 3)
    extract_with_retry(client, ctx("t"), AB, max_retries=2, metadata={"doc_id": "d7"})
    assert [dict(c.metadata) for c in client.calls] == [
        {"doc_id": "d7", "attempt": str(i)} for i in range(3)]


# Clients

def test_mock_client_script_and_handler():
    req = build_prompt(ctx("x"), AB).to_request(AB)
    resp = LLMResponse("scripted")
    assert MockClient({req.fingerprint(): resp}).complete(req) is resp
    fallback = MockClient(handler=lambda r: LLMResponse("handled"))
    assert fallback.complete(req).text == "handled"
    with pytest.raises(KeyError):
        MockClient().complete(req)


def test_sequence_client_exhaustion():
    client = SequenceClient([LLMResponse("a")])
    req = ChatRequest(({"role": "user", "content": "hi"},))
    client.complete(req)
    with pytest.raises(IndexError):
        client.complete(req)


def test_replay_client_records_and_replays(tmp_path):
    req = build_prompt(ctx("x"), AB).to_request(AB)
    source = MockClient(handler=lambda r: LLMResponse.tool(TOOL_NAME, {"A": "1", "B": "2"}))
    recorder = ReplayClient(tmp_path, record_from=source)
    first = recorder.complete(req)
    assert (tmp_path / f"{req.fingerprint()}.json").exists()
    replayed = ReplayClient(tmp_path).complete(req)
    assert replayed == first
    with pytest.raises(KeyError):
        ReplayClient(tmp_path).complete(ChatRequest(({"role": "user", "content": "other"},)))


def _chat_payload(content=None, tool=None):
    msg = {"role": "assistant", "content": content}
    if tool:
        msg["tool_calls"] = [{"type": "function", "function": {
            "name": tool[0], "arguments": json.dumps(tool[1])}}]
    return {"choices": [{"message": msg}]}


def test_http_client_wire_format_and_retry():
    seen = []

    def handler(request):
        seen.append(request)
        if len(seen) == 1:
            return httpx.Response(429)
        return httpx.Response(200, json=_chat_payload(tool=(TOOL_NAME, {"A": "a", "B": None})))

    client = HttpClient("test-model", endpoint="http://llm.test/chat", api_key="k",
                        backoff=0.0, transport=httpx.MockTransport(handler))
    req = build_prompt(ctx("x"), AB).to_request(AB)
    resp = client.complete(req)
    assert resp.tool_calls[0].name == TOOL_NAME
    assert parse_response(resp, AB).values == {"A": "a", "B": None}
    body = json.loads(seen[-1].content)
    assert body["model"] == "test-model" and body["messages"][1]["role"] == "user"
    assert seen[-1].headers["authorization"] == "Bearer k"
    assert len(seen) == 2


def test_http_client_gives_up():
    transport = httpx.MockTransport(lambda r: httpx.Response(503))
    client = HttpClient("m", endpoint="http://llm.test", max_retries=2, backoff=0.0,
                        transport=transport)
    with pytest.raises(LLMTransportError) as info:
        client.complete(ChatRequest(({"role": "user", "content": "hi"},)))
    assert info.value.attempts == 3 and info.value.status == 503
    bad = HttpClient("m", endpoint="http://llm.test", backoff=0.0,
                     transport=httpx.MockTransport(lambda r: httpx.Response(400, text="no")))
    with pytest.raises(LLMTransportError) as info:
        bad.complete(ChatRequest(({"role": "user", "content": "hi"},)))
    assert info.value.attempts == 1


def test_http_client_needs_endpoint(monkeypatch):
    monkeypatch.delenv("METAFORGE_LLM_ENDPOINT", raising=False)
    with pytest.raises(ValueError):
        HttpClient("m")


def test_parse_chat_completion_text():
    assert parse_chat_completion(_chat_payload("hello")) == LLMResponse("hello")


# Monotone retries over random scripts

payload_values = st.one_of(st.none(), st.sampled_from(["x", "y", "z"]))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.fixed_dictionaries({"A": payload_values, "B": payload_values,
                                       "C": payload_values}), min_size=1, max_size=5))
def test_non_null_count_never_decreases(script):
    t = Template((FieldSpec("A"), FieldSpec("B"), FieldSpec("C")))
    counts = []
    for n in range(1, len(script) + 1):
        client = SequenceClient([LLMResponse.tool(TOOL_NAME, s) for s in script])
        counts.append(extract_with_retry(client, ctx("t"), t, max_retries=n - 1).non_null_count())
    assert counts == sorted(counts)
