"""Advice, agent voice, scoring, images, rewards, reports, badges."""

import json

import pytest

from embercoach.content import (
    AdviceCategory,
    AdviceItem,
    AdviceKind,
    Badge,
    BadgeHistory,
    ContentGenerator,
    FeedbackReport,
    MEDAL_THRESHOLD,
    PromptLibrary,
    RewardKind,
    SessionSummary,
    award_badges,
    criterion_met,
    default_content_filter,
    load_badge_catalog,
    load_fallback_advice,
    render_profile,
    render_turns,
    reward_shape,
)
from embercoach.domain import Scenario, Speaker, StageId, Utterance
from embercoach.engine import ConversationGraph
from embercoach.gateway import Gateway, MockRule, MockScript, Task
from embercoach.modeling import ChildEmotionalProfile, EntrySource, Facet, ProfileDimension, ProfileEntry

SCENARIO = Scenario(
    id="sc-show",
    category="stressful-challenges",
    title="The school show",
    description="Standing on the big stage in front of everyone.",
    common_emotions=("fear", "pride"),
)


def gen(**defaults):
    return ContentGenerator(Gateway.all_mock(MockScript(defaults=defaults)))


def utter(i, text, speaker=Speaker.CHILD, stage=StageId.S1, t0=0.0, t1=1.0):
    return Utterance(i, speaker, text, t0, t1, stage)


def finished_graph(levels=(0.55, 0.7, 0.8, 0.85, 0.9)):
    graph = ConversationGraph.fresh("sess-9", "sc-show")
    for node, level in zip(graph.nodes, levels):
        node.completion_level = level
    graph.finished_at = 120.0
    return graph


class TestRewardShape:
    @pytest.mark.parametrize(
        "mean,kind,count",
        [
            (1.0, RewardKind.MEDAL, 1),
            (0.8, RewardKind.MEDAL, 1),  # boundary: >= earns the medal
            (0.79, RewardKind.STARS, 4),  # 3.95 + 0.5 -> 4
            (0.76, RewardKind.STARS, 4),  # 3.8 + 0.5 -> 4
            (0.7, RewardKind.STARS, 4),  # 3.5 + 0.5 -> 4.0
            (0.6, RewardKind.STARS, 3),  # 3.0 + 0.5 -> 3.5 -> 3
            (0.5, RewardKind.STARS, 3),  # 2.5 rounds half-up to 3
            (0.3, RewardKind.STARS, 2),
            (0.1, RewardKind.STARS, 1),
            (0.0, RewardKind.STARS, 1),  # floor of one star
        ],
    )
    def test_pinned_values(self, mean, kind, count):
        assert reward_shape(mean) == (kind, count)

    def test_threshold_constant(self):
        assert MEDAL_THRESHOLD == 0.8


class TestReward:
    def test_model_caption_used_when_present(self):
        g = gen(**{Task.CHAT: "Shiny stars for you!"})
        reward = g.reward(finished_graph())
        assert reward.kind is RewardKind.STARS and reward.count == 4
        assert reward.caption == "Shiny stars for you!"
        assert reward.session_id == "sess-9"

    def test_blank_caption_falls_back_to_template(self):
        g = gen(**{Task.CHAT: "  "})
        reward = g.reward(finished_graph())
        assert reward.caption == "You earned 4 stars for talking about your feelings today!"

    def test_singular_star_noun(self):
        g = gen(**{Task.CHAT: ""})
        reward = g.reward(finished_graph(levels=(0.0, 0.0, 0.0, 0.0, 0.0)))
        assert reward.count == 1
        assert "1 star " in reward.caption

    def test_medal_noun(self):
        g = gen(**{Task.CHAT: ""})
        reward = g.reward(finished_graph(levels=(0.9, 0.9, 0.9, 0.9, 0.9)))
        assert reward.kind is RewardKind.MEDAL
        assert "1 medal" in reward.caption

    def test_unfinished_session_rejected(self):
        graph = ConversationGraph.fresh("s", "sc-show")
        with pytest.raises(ValueError, match="finished"):
            gen().reward(graph)


class TestAdvice:
    def test_phase_advice_happy_path(self):
        g = gen(**{Task.CHAT: {"category": "role play", "text": "Act out the show with toys."}})
        item = g.phase_advice(
            StageId.S1, SCENARIO, None, [], item_id="adv1", created_at=3.0
        )
        assert item.kind is AdviceKind.PHASE
        assert item.category is AdviceCategory.SCENARIO_SIMULATION  # alias resolved
        assert item.text == "Act out the show with toys."
        assert item.stage is StageId.S1 and item.created_at == 3.0
        assert not item.degraded

    def test_realtime_advice_sees_recent_turns(self):
        script = MockScript(
            rules=(
                MockRule(
                    Task.CHAT,
                    ("child: My tummy hurts",),
                    {"category": "empathy", "text": "Name the feeling with her."},
                ),
            )
        )
        g = ContentGenerator(Gateway.all_mock(script))
        item = g.realtime_advice(
            StageId.S2,
            SCENARIO,
            [utter(0, "My tummy hurts", stage=StageId.S2)],
            item_id="adv2",
            created_at=31.0,
        )
        assert item.kind is AdviceKind.REALTIME
        assert item.category is AdviceCategory.EMPATHY_AND_ACCEPTANCE

    def test_generation_failure_degrades_to_static_table(self):
        g = gen(**{Task.CHAT: "not an advice object"})
        item = g.phase_advice(StageId.S3, SCENARIO, None, [], item_id="a", created_at=0.0)
        table = load_fallback_advice()
        assert item.degraded
        assert item.category.value == table[StageId.S3]["category"]
        assert item.text == table[StageId.S3]["text"]

    def test_advice_item_round_trip(self):
        item = AdviceItem(
            id="a1",
            kind=AdviceKind.REALTIME,
            category=AdviceCategory.POSITIVE_ENCOURAGEMENT,
            text="Praise the brave try.",
            stage=StageId.S4,
            created_at=61.5,
            acknowledged=True,
        )
        assert AdviceItem.from_dict(item.to_dict()) == item


class TestAgentReply:
    def test_text_plus_mock_audio(self):
        g = gen(**{Task.CHAT: "Let's roar together!"})
        text, audio = g.agent_reply(SCENARIO, StageId.S5, [utter(0, "hi")])
        assert text == "Let's roar together!"
        assert audio is not None and audio.startswith(b"mock-audio sha256=")

    def test_non_bytes_audio_becomes_none(self):
        g = gen(**{Task.CHAT: "Hello!", Task.SYNTHESIZE: 123})
        _, audio = g.agent_reply(SCENARIO, StageId.S1, [])
        assert audio is None

    def test_blank_reply_raises(self):
        g = gen(**{Task.CHAT: "   "})
        with pytest.raises(RuntimeError, match="agent reply failed"):
            g.agent_reply(SCENARIO, StageId.S1, [])


class TestScoreStage:
    def test_returns_validated_score(self):
        g = gen(**{Task.SCORE: {"score": 0.66}})
        assert g.score_stage(StageId.S2, StageId.S2.goal, [utter(0, "x")]) == 0.66

    def test_failure_raises_for_the_assessor_to_catch(self):
        g = gen(**{Task.SCORE: {"score": 2.0}})
        with pytest.raises(RuntimeError, match="stage scoring failed"):
            g.score_stage(StageId.S2, StageId.S2.goal, [utter(0, "x")])


class TestSceneImage:
    def test_ready_image_carries_deterministic_bytes(self):
        g = gen()
        handle = g.scene_image(SCENARIO, [], image_id="img1")
        assert handle.status == "ready"
        assert handle.data.startswith(b"mock-image sha256=")
        again = gen().scene_image(SCENARIO, [], image_id="img1")
        assert again.data == handle.data

    def test_non_bytes_payload_fails_the_image(self):
        g = gen(**{Task.IMAGINE: "a lovely painting"})
        handle = g.scene_image(SCENARIO, [], image_id="img1")
        assert handle.status == "failed"
        assert handle.reason == "no image payload"
        assert handle.data is None

    def test_context_is_filtered_before_prompting(self):
        captured = {}

        def spy_filter(context, scenario):
            captured["context"] = context
            return "FILTERED"

        g = ContentGenerator(Gateway.all_mock(), content_filter=spy_filter)
        g.scene_image(SCENARIO, [utter(0, "secret address 12 Elm Street")], image_id="i")
        assert "secret address" in captured["context"]
        handle = g.scene_image(SCENARIO, [utter(0, "x")], image_id="i2")
        assert "FILTERED" in handle.prompt


class TestContentFilter:
    def test_keeps_neutral_and_scenario_words_only(self):
        out = default_content_filter("the dragon stage notebook", SCENARIO)
        # "the" is neutral, "stage" appears in the scenario title words? it is
        # in the neutral set; "dragon" and "notebook" appear nowhere.
        assert out == "the stage"

    def test_scenario_vocabulary_is_allowed(self):
        out = default_content_filter("everyone standing front", SCENARIO)
        assert out == "everyone standing front"

    def test_punctuation_does_not_block_matches(self):
        out = default_content_filter("Everyone! stage...", SCENARIO)
        assert out == "Everyone! stage..."


class TestPromptLibrary:
    def test_packaged_templates_load_and_cache(self):
        lib = PromptLibrary()
        a = lib.get("phase_advice")
        b = lib.get("phase_advice")
        assert a is b and "{goal}" in a

    def test_missing_template_raises(self, tmp_path):
        lib = PromptLibrary(tmp_path)
        with pytest.raises(FileNotFoundError):
            lib.get("nope")


class TestFallbackAdvice:
    def test_packaged_table_covers_all_stages_with_legal_categories(self):
        table = load_fallback_advice()
        assert set(table) == set(StageId)
        for rec in table.values():
            AdviceCategory(rec["category"])
            assert rec["text"].strip()

    def test_missing_stage_rejected(self, tmp_path):
        doc = {"stages": {"S1": {"category": "empathy-and-acceptance", "text": "t"}}}
        p = tmp_path / "f.json"
        p.write_text(json.dumps(doc), encoding="utf-8")
        with pytest.raises(ValueError, match="misses stages"):
            load_fallback_advice(p)

    def test_bad_category_rejected(self, tmp_path):
        doc = {
            "stages": {
                s.value: {"category": "bribery", "text": "t"} for s in StageId
            }
        }
        p = tmp_path / "f.json"
        p.write_text(json.dumps(doc), encoding="utf-8")
        with pytest.raises(ValueError, match="bad category"):
            load_fallback_advice(p)


class TestRenderers:
    def test_render_turns(self):
        window = [utter(0, "hi", speaker=Speaker.PARENT), utter(1, "hello", speaker=Speaker.AGENT)]
        assert render_turns(window) == "parent: hi\nagent: hello"
        assert render_turns([]) == ""

    def test_render_profile(self):
        assert render_profile(None) == "(no profile on record)"
        assert render_profile(ChildEmotionalProfile(child_id="c")) == "(no profile on record)"
        p = ChildEmotionalProfile(child_id="c")
        p.entries.append(
            ProfileEntry(
                id="e1",
                dimension=ProfileDimension.REGULATION,
                facet=Facet.EMOTION_REGULATION,
                statement="Counts to ten.",
                source=EntrySource.PARENT_INTERVIEW,
                evidence=["x"],
                created_at=0.0,
            )
        )
        assert render_profile(p) == "- [regulation/emotion-regulation] Counts to ten."


class TestBadges:
    def history(self, scores_list):
        return BadgeHistory(
            sessions=[
                SessionSummary(session_id=f"s{i}", finished_at=float(i), stage_scores=scores)
                for i, scores in enumerate(scores_list)
            ]
        )

    def test_sessions_completed(self):
        crit = {"kind": "sessions-completed", "count": 2}
        assert not criterion_met(crit, self.history([{}]))
        assert criterion_met(crit, self.history([{}, {}]))

    def test_stage_score(self):
        crit = {"kind": "stage-score", "stage": "S3", "min_score": 0.8, "times": 2}
        hist = self.history([{"S3": 0.9}, {"S3": 0.7}, {"S3": 0.8}])
        assert criterion_met(crit, hist)
        hist = self.history([{"S3": 0.9}, {"S3": 0.7}])
        assert not criterion_met(crit, hist)

    def test_mean_score(self):
        crit = {"kind": "mean-score", "min_score": 0.8}
        assert criterion_met(crit, self.history([{"S1": 0.7, "S2": 0.9}]))
        assert not criterion_met(crit, self.history([{"S1": 0.7, "S2": 0.8}]))

    def test_award_records_and_skips_already_awarded(self):
        catalog = [
            Badge(id="b1", name="One", criterion={"kind": "sessions-completed", "count": 1}),
            Badge(id="b2", name="Two", criterion={"kind": "sessions-completed", "count": 3}),
        ]
        hist = self.history([{}])
        earned = award_badges(catalog, hist, "s0")
        assert earned == ["b1"]
        assert hist.awarded == {"b1": "s0"}
        # second evaluation: b1 already given, b2 still unmet
        assert award_badges(catalog, hist, "s1") == []

    def test_packaged_catalog_loads(self):
        catalog = load_badge_catalog()
        assert catalog, "packaged badge catalog must not be empty"
        assert any(b.id == "first-adventure" for b in catalog)
        ids = [b.id for b in catalog]
        assert len(set(ids)) == len(ids)

    def test_unknown_criterion_kind_rejected(self, tmp_path):
        doc = {"badges": [{"id": "x", "name": "X", "criterion": {"kind": "vibes"}}]}
        p = tmp_path / "b.json"
        p.write_text(json.dumps(doc), encoding="utf-8")
        with pytest.raises(ValueError, match="unknown criterion kind"):
            load_badge_catalog(p)

    def test_history_round_trip(self):
        hist = self.history([{"S1": 0.5}])
        hist.awarded["b1"] = "s0"
        assert BadgeHistory.from_dict(hist.to_dict()).to_dict() == hist.to_dict()


def report_payload(highlight_turns=(0,)):
    return {
        "per_stage": {
            "S1": {"score": 0.6, "review": "Warm recall."},
            "S2": {"score": 0.72, "review": "Good labels."},
            "S3": {"score": 0.8, "review": "Real empathy."},
            "S4": {"score": 0.86, "review": "Both sides seen."},
            "S5": {"score": 0.9, "review": "A concrete plan."},
        },
        "suggestions": ["Keep naming feelings."],
        "highlights": [
            {"turn_index": t, "comment": f"Nice moment at {t}."} for t in highlight_turns
        ],
    }


class TestFeedbackReport:
    def catalog(self):
        return [Badge(id="first-steps", name="First", criterion={"kind": "sessions-completed", "count": 1})]

    def utterances(self):
        return [utter(0, "I was scared."), utter(1, "Scared is okay.", speaker=Speaker.PARENT)]

    def test_model_path_builds_full_report(self):
        g = gen(**{Task.EXTRACT: report_payload()})
        hist = BadgeHistory()
        report = g.feedback_report(
            finished_graph(), self.utterances(), None, badge_catalog=self.catalog(), history=hist
        )
        assert isinstance(report, FeedbackReport)
        assert report.generated_at == 120.0
        assert report.per_stage[StageId.S2].score == 0.72
        assert report.highlights[0].excerpt == "I was scared."
        assert report.suggestions == ["Keep naming feelings."]
        assert report.flags == []
        assert report.badges_awarded == ["first-steps"]
        assert len(hist.sessions) == 1

    def test_bad_citations_stripped_and_flagged_once(self):
        g = gen(**{Task.EXTRACT: report_payload(highlight_turns=(0, 99, 100))})
        report = g.feedback_report(
            finished_graph(), self.utterances(), None, badge_catalog=[], history=BadgeHistory()
        )
        assert [h.turn_index for h in report.highlights] == [0]
        assert report.flags == ["highlight-dropped"]

    def test_excerpt_comes_from_the_transcript_not_the_model(self):
        payload = report_payload(highlight_turns=(1,))
        payload["highlights"][0]["comment"] = "Calm reframe."
        g = gen(**{Task.EXTRACT: payload})
        report = g.feedback_report(
            finished_graph(), self.utterances(), None, badge_catalog=[], history=BadgeHistory()
        )
        h = report.highlights[0]
        assert h.excerpt == "Scared is okay." and h.comment == "Calm reframe."

    def test_degraded_path_copies_graph_levels(self):
        g = gen(**{Task.EXTRACT: "nonsense"})
        report = g.feedback_report(
            finished_graph(), self.utterances(), None, badge_catalog=[], history=BadgeHistory()
        )
        assert report.flags == ["degraded"]
        assert report.per_stage[StageId.S1].score == 0.55
        assert report.per_stage[StageId.S1].review == "Stage S1 reached 55% of its goal."
        assert report.per_stage[StageId.S2].review == "Stage S2 reached 70% of its goal."
        assert report.suggestions == [
            "Pick one moment from today's talk and revisit it together tomorrow."
        ]

    def test_history_gets_the_session_exactly_once(self):
        g = gen(**{Task.EXTRACT: report_payload()})
        hist = BadgeHistory()
        g.feedback_report(finished_graph(), [], None, badge_catalog=[], history=hist)
        g.feedback_report(finished_graph(), [], None, badge_catalog=[], history=hist)
        assert len(hist.sessions) == 1
        assert hist.sessions[0].stage_scores == {
            "S1": 0.55, "S2": 0.7, "S3": 0.8, "S4": 0.85, "S5": 0.9,
        }

    def test_regenerated_report_still_lists_badges_awarded_earlier(self):
        g = gen(**{Task.EXTRACT: report_payload()})
        hist = BadgeHistory()
        first = g.feedback_report(
            finished_graph(), [], None, badge_catalog=self.catalog(), history=hist
        )
        assert first.badges_awarded == ["first-steps"]
        # same session re-reported against the already-updated history (the
        # crash-recovery shape): the badge must not vanish
        second = g.feedback_report(
            finished_graph(), [], None, badge_catalog=self.catalog(), history=hist
        )
        assert second.badges_awarded == ["first-steps"]

    def test_other_sessions_badges_not_claimed(self):
        g = gen(**{Task.EXTRACT: report_payload()})
        hist = BadgeHistory()
        hist.awarded["first-steps"] = "someone-elses-session"
        report = g.feedback_report(
            finished_graph(), [], None, badge_catalog=self.catalog(), history=hist
        )
        assert report.badges_awarded == []

    def test_unfinished_graph_rejected(self):
        graph = ConversationGraph.fresh("s", "sc-show")
        with pytest.raises(ValueError, match="finished"):
            gen().feedback_report(graph, [], None, badge_catalog=[], history=BadgeHistory())

    def test_report_dict_shape(self):
        g = gen(**{Task.EXTRACT: report_payload()})
        report = g.feedback_report(
            finished_graph(), self.utterances(), None, badge_catalog=[], history=BadgeHistory()
        )
        d = report.to_dict()
        assert set(d) == {
            "session_id",
            "generated_at",
            "per_stage",
            "highlights",
            "suggestions",
            "badges_awarded",
            "flags",
        }
        assert set(d["per_stage"]) == {"S1", "S2", "S3", "S4", "S5"}
