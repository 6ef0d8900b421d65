import pytest

from convosim.agents import invoke
from convosim.agents.core import (
    AgentEndpoint,
    AgentError,
    AgentOutput,
    AgentResponse,
    CandidateSet,
    ProtocolError,
)
from convosim.agents.prompts import (
    GenerationConfig,
    build_answer_finder_input,
    build_answer_grounded_question_prompt,
    build_cae_input,
    build_prior_grounded_question_prompt,
)
from convosim.agents.scripted import (
    SCRIPTED_AGENTS,
    get_scripted,
    make_lexical_answerer,
    prior_questioner,
    span_extractor,
    template_questioner,
)
from convosim.corpus import CANNOTANSWER, AnswerSpan, BackgroundInfo, QAPair

from helpers import DEFAULT_PASSAGE, span_in

GEN = GenerationConfig()
BG = BackgroundInfo("Ella Reed", "Observatory", "An astronomer.")


class TestAgentResponse:
    def test_best_text(self):
        resp = AgentResponse(outputs=(AgentOutput("a", 1.0), AgentOutput("b", 0.5)))
        assert resp.text == "a"

    def test_empty_outputs_raise_on_access(self):
        with pytest.raises(ProtocolError):
            AgentResponse(outputs=()).text


class TestCandidateSet:
    def spans(self, n):
        return [AnswerSpan(f"s{i}", i) for i in range(n)]

    def test_sorts_and_truncates(self):
        cs = CandidateSet.from_scored_spans(self.spans(4), [0.1, 0.9, 0.5, 0.7], k=2)
        assert [s.text for s in cs.spans] == ["s1", "s3"]
        assert cs.scores == (0.9, 0.7)
        assert len(cs) == 2

    def test_stable_on_ties(self):
        cs = CandidateSet.from_scored_spans(self.spans(3), [0.5, 0.5, 0.5], k=3)
        assert [s.text for s in cs.spans] == ["s0", "s1", "s2"]

    def test_top_and_empty(self):
        cs = CandidateSet.from_scored_spans(self.spans(2), [0.2, 0.1], k=5)
        assert cs.top().text == "s0"
        empty = CandidateSet(spans=(), scores=(), k=3)
        assert empty.top() is None

    def test_invariants(self):
        with pytest.raises(ValueError):
            CandidateSet(spans=(), scores=(), k=0)
        with pytest.raises(ValueError):
            CandidateSet(spans=(AnswerSpan("x", 0),), scores=(), k=1)
        with pytest.raises(ValueError):
            CandidateSet(spans=tuple(self.spans(2)), scores=(0.1, 0.9), k=2)
        with pytest.raises(ValueError):
            CandidateSet(spans=tuple(self.spans(3)), scores=(0.9, 0.5, 0.1), k=2)


class TestAgentEndpoint:
    def test_scripted_kind(self):
        ep = AgentEndpoint(kind="scripted:span-extractor")
        assert ep.transport == "scripted"
        assert ep.target == "span-extractor"

    def test_remote_kind(self):
        ep = AgentEndpoint(kind="remote:http://127.0.0.1:9")
        assert ep.transport == "remote"
        assert ep.target == "http://127.0.0.1:9"

    def test_bad_kinds(self):
        for kind in ("scripted:", "remote:", "ftp:thing", "plain", "remote:ws://x"):
            with pytest.raises(ValueError):
                AgentEndpoint(kind=kind)

    def test_knob_validation(self):
        with pytest.raises(ValueError):
            AgentEndpoint(kind="scripted:cannotanswer", timeout=0)
        with pytest.raises(ValueError):
            AgentEndpoint(kind="scripted:cannotanswer", retries=-1)
        with pytest.raises(ValueError):
            AgentEndpoint(kind="scripted:cannotanswer", max_inflight=0)


class TestSpanExtractor:
    def test_offsets_are_passage_absolute(self):
        bundle = build_cae_input(DEFAULT_PASSAGE, None, turn_index=1)
        resp = span_extractor(bundle, GEN)
        assert resp.outputs
        for out in resp.outputs:
            assert out.start is not None
            assert DEFAULT_PASSAGE[out.start : out.start + len(out.text)] == out.text

    def test_one_candidate_per_sentence_scores_descend(self):
        bundle = build_cae_input(DEFAULT_PASSAGE, None, turn_index=1)
        resp = span_extractor(bundle, GEN)
        assert len(resp.outputs) == 4
        scores = [o.score for o in resp.outputs]
        assert scores == sorted(scores, reverse=True)
        assert scores[0] == 1.0

    def test_skips_leading_article(self):
        passage = "The lighthouse keeper waved. A storm rolled in."
        bundle = build_cae_input(passage, None, turn_index=1)
        resp = span_extractor(bundle, GEN)
        assert resp.outputs[0].text.startswith("lighthouse")
        assert resp.outputs[1].text.startswith("storm")

    def test_only_passage_segment_is_scanned(self):
        prev = QAPair(1, "Where is the harbor light?", span_in(DEFAULT_PASSAGE, "1902"))
        bundle = build_cae_input(DEFAULT_PASSAGE, prev, turn_index=2)
        resp = span_extractor(bundle, GEN)
        for out in resp.outputs:
            assert DEFAULT_PASSAGE[out.start : out.start + len(out.text)] == out.text
            assert "harbor light" not in out.text


class TestTemplateQuestioner:
    def test_reads_target_from_prompt_tail(self):
        bundle = build_answer_grounded_question_prompt(
            DEFAULT_PASSAGE, [], span_in(DEFAULT_PASSAGE, "four tons"))
        resp = template_questioner(bundle, GEN)
        assert resp.text == "What is four tons?"

    def test_with_history(self):
        history = [QAPair(1, "Q1?", span_in(DEFAULT_PASSAGE, "1902"))]
        bundle = build_answer_grounded_question_prompt(
            DEFAULT_PASSAGE, history, span_in(DEFAULT_PASSAGE, "four tons"))
        resp = template_questioner(bundle, GEN)
        assert resp.text == "What is four tons?"

    def test_malformed_prompt_rejected(self):
        from convosim.agents.prompts import PromptBundle
        bundle = PromptBundle(role="cqg_answer", text="no slot here", turn_index=1)
        with pytest.raises(AgentError):
            template_questioner(bundle, GEN)


class TestPriorQuestioner:
    def test_alternates_by_history_parity(self):
        b1 = build_prior_grounded_question_prompt(BG, [])
        assert prior_questioner(b1, GEN).text == "What happened next?"

        h1 = [QAPair(1, "What happened next?", span_in(DEFAULT_PASSAGE, "1902"))]
        b2 = build_prior_grounded_question_prompt(BG, h1)
        assert prior_questioner(b2, GEN).text == "Anything else?"

        h2 = h1 + [QAPair(2, "Anything else?", AnswerSpan.unanswerable())]
        b3 = build_prior_grounded_question_prompt(BG, h2)
        assert prior_questioner(b3, GEN).text == "What happened next?"


class TestLexicalAnswerer:
    def answer(self, question, passage=DEFAULT_PASSAGE, history=()):
        agent = make_lexical_answerer()
        bundle = build_answer_finder_input(question, passage, list(history), BG)
        return agent(bundle, GEN)

    def test_picks_highest_overlap_sentence(self):
        resp = self.answer("How much does the main telescope weigh?")
        assert resp.text == "The main telescope weighs four tons"

    def test_no_overlap_cannot_answer(self):
        resp = self.answer("Quetzal migration patterns?")
        assert resp.text == CANNOTANSWER

    def test_tie_goes_to_earliest_sentence(self):
        passage = "Red door. Red gate."
        resp = self.answer("Which red?", passage=passage)
        assert resp.text == "Red door"

    def test_min_overlap_threshold(self):
        strict = make_lexical_answerer(min_overlap=3)
        bundle = build_answer_finder_input("telescope?", DEFAULT_PASSAGE, [], BG)
        assert strict(bundle, GEN).text == CANNOTANSWER


class TestRegistry:
    def test_known_names(self):
        assert set(SCRIPTED_AGENTS) == {
            "span-extractor", "template-questioner", "prior-questioner",
            "lexical-answerer", "cannotanswer",
        }

    def test_get_scripted_unknown(self):
        with pytest.raises(ValueError, match="unknown scripted agent"):
            get_scripted("gpt")

    def test_cannotanswer_always_declines(self):
        agent = get_scripted("cannotanswer")
        bundle = build_answer_finder_input("Anything?", DEFAULT_PASSAGE, [], BG)
        assert agent(bundle, GEN).text == CANNOTANSWER


class TestInvokeScripted:
    def test_dispatch(self):
        ep = AgentEndpoint(kind="scripted:template-questioner")
        bundle = build_answer_grounded_question_prompt(
            DEFAULT_PASSAGE, [], span_in(DEFAULT_PASSAGE, "1902"))
        assert invoke(ep, bundle).text == "What is 1902?"

    def test_cae_outputs_carry_offsets(self):
        ep = AgentEndpoint(kind="scripted:span-extractor")
        bundle = build_cae_input(DEFAULT_PASSAGE, None, turn_index=1)
        resp = invoke(ep, bundle)
        assert all(out.start is not None for out in resp.outputs)

    def test_role_mismatch_guard(self):
        # an agent that returns no offsets cannot serve the extractor role
        ep = AgentEndpoint(kind="scripted:cannotanswer")
        bundle = build_cae_input(DEFAULT_PASSAGE, None, turn_index=1)
        with pytest.raises(ProtocolError):
            invoke(ep, bundle)
