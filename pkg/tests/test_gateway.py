"""Model gateway: schemas, the scripted mock, routing, deadlines."""

import json

import pytest

from embercoach.gateway import (
    BUILTIN_DEFAULTS,
    DEFAULT_DEADLINES_S,
    AdviceSchema,
    AudioChunk,
    ConfigurationError,
    DecisionSchema,
    EntryListSchema,
    Gateway,
    GatewayConfig,
    HttpChatProvider,
    MockProvider,
    MockRule,
    MockScript,
    ModelRequest,
    PromptPart,
    ProviderError,
    ProviderTimeout,
    ReportSchema,
    ResponseStatus,
    SchemaViolation,
    ScoreSchema,
    SequencingError,
    Task,
    TextSchema,
    build_gateway,
    route_by_task,
)


def req(task, text, schema=None):
    return ModelRequest(task=task, parts=(PromptPart("user", text),), schema=schema)


class FailingProvider:
    name = "boom"

    def complete(self, request):
        raise ProviderError("boom: no capacity")


class StallingProvider:
    name = "stall"

    def complete(self, request):
        raise ProviderTimeout("stall: gave up")


class EchoProvider:
    name = "echo"

    def __init__(self, payload):
        self.payload = payload

    def complete(self, request):
        return self.payload


class TestScoreSchema:
    def test_accepts_bare_number_and_wrapped(self):
        s = ScoreSchema()
        assert s.validate(0.25) == 0.25
        assert s.validate({"score": 1}) == 1.0

    @pytest.mark.parametrize("bad", [True, False, "0.5", None, [0.5]])
    def test_rejects_non_numbers(self, bad):
        with pytest.raises(SchemaViolation, match="expected a number"):
            ScoreSchema().validate(bad)

    @pytest.mark.parametrize("bad", [-0.01, 1.01, 7])
    def test_rejects_out_of_range(self, bad):
        with pytest.raises(SchemaViolation, match=r"outside \[0, 1\]"):
            ScoreSchema().validate(bad)


class TestAdviceSchema:
    def schema(self):
        return AdviceSchema(
            categories=frozenset({"empathy-and-acceptance", "positive-encouragement"}),
            aliases={"empathy": "empathy-and-acceptance"},
        )

    def test_normalizes_case_whitespace_and_aliases(self):
        out = self.schema().validate({"category": "  Empathy ", "text": " Kneel down. "})
        assert out == {"category": "empathy-and-acceptance", "text": "Kneel down."}

    def test_rejects_unknown_category(self):
        with pytest.raises(SchemaViolation, match="not in the closed set"):
            self.schema().validate({"category": "bribery", "text": "x"})

    def test_rejects_blank_text(self):
        with pytest.raises(SchemaViolation, match="text missing or empty"):
            self.schema().validate({"category": "empathy", "text": "   "})

    def test_rejects_non_object(self):
        with pytest.raises(SchemaViolation, match="expected an object"):
            self.schema().validate("kneel down")


class TestEntryListSchema:
    def test_normalizes_dimension_and_facet_but_keeps_statement_case(self):
        out = EntryListSchema().validate(
            [{"dimension": " Expression ", "facet": "Emotional-Expression", "statement": " Says BIG feelings out loud. "}]
        )
        assert out == [
            {
                "dimension": "expression",
                "facet": "emotional-expression",
                "statement": "Says BIG feelings out loud.",
            }
        ]

    def test_empty_list_is_valid(self):
        assert EntryListSchema().validate([]) == []

    def test_missing_key_names_the_index(self):
        with pytest.raises(SchemaViolation, match=r'profile-entries\[1\]: missing string "facet"'):
            EntryListSchema().validate(
                [
                    {"dimension": "d", "facet": "f", "statement": "s"},
                    {"dimension": "d", "statement": "s"},
                ]
            )

    def test_blank_statement_fails_the_batch(self):
        with pytest.raises(SchemaViolation, match="empty statement"):
            EntryListSchema().validate([{"dimension": "d", "facet": "f", "statement": "  "}])

    def test_non_list_rejected(self):
        with pytest.raises(SchemaViolation, match="expected a list"):
            EntryListSchema().validate({"dimension": "d"})


class TestDecisionSchema:
    def test_probe_and_advance_pass(self):
        assert DecisionSchema().validate({"action": "probe"}) == {"action": "probe", "question": None}
        out = DecisionSchema().validate({"action": "advance", "question": "And then?"})
        assert out == {"action": "advance", "question": "And then?"}

    def test_other_actions_rejected(self):
        with pytest.raises(SchemaViolation, match="probe"):
            DecisionSchema().validate({"action": "retreat"})

    def test_non_string_question_rejected(self):
        with pytest.raises(SchemaViolation, match="question"):
            DecisionSchema().validate({"action": "probe", "question": 7})


class TestReportSchema:
    STAGES = ("S1", "S2")

    def payload(self):
        return {
            "per_stage": {
                "S1": {"score": 0.5, "review": "Fine start."},
                "S2": {"score": 0.9, "review": "Strong labels."},
            },
            "suggestions": ["Slow down."],
            "highlights": [{"turn_index": 3, "comment": "Named the feeling."}],
        }

    def test_valid_payload_normalizes(self):
        out = ReportSchema(stage_keys=self.STAGES).validate(self.payload())
        assert out["per_stage"]["S2"] == {"score": 0.9, "review": "Strong labels."}
        assert out["highlights"][0]["turn_index"] == 3

    def test_stage_cover_must_be_exact(self):
        p = self.payload()
        p["per_stage"]["S3"] = {"score": 0.1, "review": "extra"}
        with pytest.raises(SchemaViolation, match="per_stage must cover exactly"):
            ReportSchema(stage_keys=self.STAGES).validate(p)
        del p["per_stage"]["S3"], p["per_stage"]["S1"]
        with pytest.raises(SchemaViolation, match="per_stage must cover exactly"):
            ReportSchema(stage_keys=self.STAGES).validate(p)

    def test_boolean_turn_index_rejected(self):
        p = self.payload()
        p["highlights"][0]["turn_index"] = True
        with pytest.raises(SchemaViolation, match=r"highlights\[0\] malformed"):
            ReportSchema(stage_keys=self.STAGES).validate(p)

    def test_suggestions_must_be_strings(self):
        p = self.payload()
        p["suggestions"] = ["ok", 3]
        with pytest.raises(SchemaViolation, match="suggestions"):
            ReportSchema(stage_keys=self.STAGES).validate(p)


class TestTextSchema:
    def test_accepts_bare_and_wrapped(self):
        assert TextSchema().validate("  hi ") == "hi"
        assert TextSchema().validate({"text": "hello"}) == "hello"

    @pytest.mark.parametrize("bad", ["", "   ", 5, None, {"text": ""}])
    def test_rejects_empty_or_non_string(self, bad):
        with pytest.raises(SchemaViolation):
            TextSchema().validate(bad)


class TestMockScript:
    def test_first_match_wins_in_rule_order(self):
        script = MockScript(
            rules=(
                MockRule(Task.CHAT, ("alpha",), "first"),
                MockRule(Task.CHAT, ("alpha", "beta"), "second"),
            )
        )
        assert script.lookup(req(Task.CHAT, "alpha beta")) == "first"

    def test_rule_needs_every_substring_and_matching_task(self):
        rule = MockRule(Task.CHAT, ("alpha", "beta"), "x")
        assert rule.matches(req(Task.CHAT, "beta then alpha"))
        assert not rule.matches(req(Task.CHAT, "alpha only"))
        assert not rule.matches(req(Task.SCORE, "alpha beta"))

    def test_defaults_then_builtins(self):
        script = MockScript(defaults={Task.CHAT: "scripted default"})
        assert script.lookup(req(Task.CHAT, "anything")) == "scripted default"
        assert script.lookup(req(Task.SCORE, "anything")) == BUILTIN_DEFAULTS[Task.SCORE] == 0.5
        assert script.lookup(req(Task.EXTRACT, "anything")) == []

    def test_from_file_promotes_bare_contains_string(self, tmp_path):
        p = tmp_path / "script.json"
        p.write_text(
            json.dumps(
                {
                    "seed": 7,
                    "rules": [{"task": "chat", "contains": "magic", "payload": "poof"}],
                    "defaults": {"score": 0.25},
                }
            ),
            encoding="utf-8",
        )
        script = MockScript.from_file(p)
        assert script.seed == 7
        assert script.rules[0].contains == ("magic",)
        assert script.lookup(req(Task.CHAT, "say the magic word")) == "poof"
        assert script.lookup(req(Task.SCORE, "x")) == 0.25


class TestMockProvider:
    def test_imagine_default_embeds_prompt_hash(self):
        import hashlib

        provider = MockProvider()
        out = provider.complete(req(Task.IMAGINE, "a calm classroom"))
        digest = hashlib.sha256(b"a calm classroom").hexdigest()
        assert out == b"mock-image sha256=" + digest.encode("ascii")

    def test_synthesize_default_embeds_prompt_hash(self):
        import hashlib

        provider = MockProvider()
        out = provider.complete(req(Task.SYNTHESIZE, "hello there"))
        digest = hashlib.sha256(b"hello there").hexdigest()
        assert out == b"mock-audio sha256=" + digest.encode("ascii")

    def test_same_request_same_payload(self):
        provider = MockProvider(MockScript(defaults={Task.CHAT: "steady"}))
        a = provider.complete(req(Task.CHAT, "x"))
        b = provider.complete(req(Task.CHAT, "x"))
        assert a == b == "steady"


class TestRouting:
    def test_every_task_must_be_bound(self):
        config = GatewayConfig(bindings={Task.CHAT: "mock"})
        with pytest.raises(ConfigurationError, match="no provider bound"):
            Gateway(config, {"mock": MockProvider()})

    def test_binding_to_unknown_provider_fails_at_init(self):
        config = GatewayConfig(bindings={t: "ghost" for t in Task})
        with pytest.raises(ConfigurationError, match="unknown provider 'ghost'"):
            Gateway(config, {"mock": MockProvider()})

    def test_route_by_task_reads_the_binding(self):
        config = GatewayConfig(bindings={t: "mock" for t in Task})
        assert route_by_task(config, Task.IMAGINE) == "mock"


class TestInvoke:
    def test_extract_and_score_must_carry_schemas(self):
        gw = Gateway.all_mock()
        with pytest.raises(ValueError, match="must carry an output schema"):
            gw.invoke(req(Task.SCORE, "rate this"))
        with pytest.raises(ValueError, match="must carry an output schema"):
            gw.invoke(req(Task.EXTRACT, "extract this"))

    def test_ok_response_carries_validated_payload_and_latency(self):
        gw = Gateway.all_mock(MockScript(defaults={Task.SCORE: {"score": 0.75}}))
        resp = gw.invoke(req(Task.SCORE, "rate this", schema=ScoreSchema()))
        assert resp.ok and resp.status is ResponseStatus.OK
        assert resp.payload == 0.75
        assert resp.latency_ms >= 0.0

    def test_provider_error_becomes_failed_response(self):
        config = GatewayConfig(bindings={t: "boom" for t in Task})
        gw = Gateway(config, {"boom": FailingProvider()})
        resp = gw.invoke(req(Task.CHAT, "hi"))
        assert resp.status is ResponseStatus.FAILED
        assert "no capacity" in resp.reason

    def test_provider_timeout_becomes_timeout_response(self):
        config = GatewayConfig(bindings={t: "stall" for t in Task})
        gw = Gateway(config, {"stall": StallingProvider()})
        resp = gw.invoke(req(Task.CHAT, "hi"))
        assert resp.status is ResponseStatus.TIMEOUT

    def test_blown_deadline_becomes_timeout(self):
        config = GatewayConfig(
            bindings={t: "mock" for t in Task},
            deadlines_s={t: 0.0 for t in Task},
        )
        gw = Gateway(config, {"mock": MockProvider()})
        resp = gw.invoke(req(Task.CHAT, "hi"))
        assert resp.status is ResponseStatus.TIMEOUT
        assert "deadline 0.0s exceeded" in resp.reason

    def test_schema_violation_becomes_failed_with_reason_prefix(self):
        config = GatewayConfig(bindings={t: "echo" for t in Task})
        gw = Gateway(config, {"echo": EchoProvider({"score": 4.0})})
        resp = gw.invoke(req(Task.SCORE, "rate", schema=ScoreSchema()))
        assert resp.status is ResponseStatus.FAILED
        assert resp.reason.startswith("schema-violation: ")

    def test_default_deadlines_split_realtime_and_reflective(self):
        assert DEFAULT_DEADLINES_S[Task.CHAT] == 5.0
        assert DEFAULT_DEADLINES_S[Task.SCORE] == 5.0
        assert DEFAULT_DEADLINES_S[Task.TRANSCRIBE] == 5.0
        assert DEFAULT_DEADLINES_S[Task.SYNTHESIZE] == 5.0
        assert DEFAULT_DEADLINES_S[Task.EXTRACT] == 60.0
        assert DEFAULT_DEADLINES_S[Task.IMAGINE] == 60.0


class TestTranscribe:
    def gateway(self, mapping):
        rules = tuple(MockRule(Task.TRANSCRIBE, (label,), text) for label, text in mapping.items())
        return Gateway.all_mock(MockScript(rules=rules))

    def test_resolves_labels_in_order(self):
        gw = self.gateway({"chunk-a": "hello", "chunk-b": "world"})
        segs = gw.transcribe([AudioChunk(0, "chunk-a"), AudioChunk(1, "chunk-b")])
        assert [(s.index, s.text, s.failed) for s in segs] == [(0, "hello", False), (1, "world", False)]

    def test_out_of_order_chunks_rejected_before_any_call(self):
        gw = self.gateway({})
        with pytest.raises(SequencingError, match="audio chunk 1 after 1"):
            gw.transcribe([AudioChunk(1, "a"), AudioChunk(1, "b")])

    def test_empty_payload_marks_segment_failed_and_continues(self):
        # No rule for chunk-a: the builtin transcribe default is "".
        gw = self.gateway({"chunk-b": "world"})
        segs = gw.transcribe([AudioChunk(0, "chunk-a"), AudioChunk(2, "chunk-b")])
        assert segs[0].failed and segs[0].text == ""
        assert not segs[1].failed and segs[1].text == "world"


class TestBuildGateway:
    def test_empty_doc_builds_an_all_mock_gateway(self):
        gw = build_gateway({})
        assert isinstance(gw.provider_for(Task.CHAT), MockProvider)

    def test_partial_bindings_fall_back_to_declared_mock(self):
        gw = build_gateway(
            {
                "providers": {"mock": {"kind": "mock"}, "live": {"kind": "openai-compat", "base_url": "http://example.invalid", "model": "m"}},
                "bindings": {"chat": "live"},
            }
        )
        assert isinstance(gw.provider_for(Task.CHAT), HttpChatProvider)
        assert isinstance(gw.provider_for(Task.SCORE), MockProvider)

    def test_partial_bindings_without_mock_fail(self):
        doc = {
            "providers": {"live": {"kind": "openai-compat", "base_url": "http://example.invalid", "model": "m"}},
            "bindings": {"chat": "live"},
        }
        with pytest.raises(ConfigurationError, match="no provider bound"):
            build_gateway(doc)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ConfigurationError, match="unknown provider kind"):
            build_gateway({"providers": {"x": {"kind": "quantum"}}})

    def test_deadline_overrides_apply(self):
        gw = build_gateway({"deadlines_s": {"chat": 9.5}})
        assert gw.config.deadlines_s[Task.CHAT] == 9.5
        assert gw.config.deadlines_s[Task.EXTRACT] == 60.0

    def test_script_path_wires_the_mock(self, tmp_path):
        p = tmp_path / "s.json"
        p.write_text(json.dumps({"defaults": {"chat": "scripted"}}), encoding="utf-8")
        gw = build_gateway({"providers": {"mock": {"kind": "mock", "script": str(p)}}})
        resp = gw.invoke(req(Task.CHAT, "anything"))
        assert resp.payload == "scripted"

    def test_loads_from_json_file(self, tmp_path):
        p = tmp_path / "gateway.json"
        p.write_text(json.dumps({"deadlines_s": {"imagine": 120}}), encoding="utf-8")
        gw = build_gateway(p)
        assert gw.config.deadlines_s[Task.IMAGINE] == 120.0


class TestHttpChatProviderOffline:
    def test_media_tasks_rejected_without_network(self):
        p = HttpChatProvider(name="live", base_url="http://example.invalid", model="m")
        with pytest.raises(ProviderError, match="not supported"):
            p.complete(req(Task.IMAGINE, "draw"))
