import pytest

from convosim.agents import AgentEndpoint, AgentError
from convosim.agents.scripted import SCRIPTED_AGENTS
from convosim.corpus import CANNOTANSWER, canonical_bytes
from convosim.simulator import (
    BatchResult,
    FilterConfig,
    SimulationConfig,
    build_manifest,
    format_filter_report,
    required_roles,
    roundtrip_filter,
    run_batch,
    semi_supervised_config,
    simulate_asym,
    simulate_conversation,
    simulate_sym,
    wiki_config,
)

from helpers import DEFAULT_PASSAGE, make_conversation, make_dataset, make_document

EXTRACTOR = AgentEndpoint(kind="scripted:span-extractor")
TEMPLATE_Q = AgentEndpoint(kind="scripted:template-questioner")
PRIOR_Q = AgentEndpoint(kind="scripted:prior-questioner")
ANSWERER = AgentEndpoint(kind="scripted:lexical-answerer")
DECLINER = AgentEndpoint(kind="scripted:cannotanswer")

SYM_ENDPOINTS = {"cae": EXTRACTOR, "cqg_answer": TEMPLATE_Q}
ASYM_ENDPOINTS = {"cqg_prior": PRIOR_Q, "caf": ANSWERER}


class TestSimulationConfig:
    def test_presets(self):
        semi = semi_supervised_config("sym")
        assert (semi.max_turns, semi.unanswerable_budget) == (6, None)
        wiki = wiki_config("asym")
        assert (wiki.max_turns, wiki.unanswerable_budget) == (12, 3)

    def test_validation(self):
        with pytest.raises(ValueError):
            SimulationConfig(mode="both")
        with pytest.raises(ValueError):
            SimulationConfig(mode="sym", max_turns=0)
        with pytest.raises(ValueError):
            SimulationConfig(mode="sym", unanswerable_budget=-1)
        with pytest.raises(ValueError):
            SimulationConfig(mode="sym", k=0)
        with pytest.raises(ValueError):
            SimulationConfig(mode="sym", candidate_policy="beam")

    def test_required_roles(self):
        assert required_roles("sym") == ("cae", "cqg_answer")
        assert required_roles("asym") == ("cqg_prior", "caf")


class TestAnswerFirstPipeline:
    def test_runs_to_turn_cap(self):
        doc = make_document()
        conv = simulate_sym(doc, EXTRACTOR, TEMPLATE_Q, semi_supervised_config("sym"))
        assert len(conv.turns) == 6
        assert [p.turn_index for p in conv.turns] == [1, 2, 3, 4, 5, 6]

    def test_answers_are_verified_spans(self):
        doc = make_document()
        conv = simulate_sym(doc, EXTRACTOR, TEMPLATE_Q, semi_supervised_config("sym"))
        for pair in conv.turns:
            assert not pair.answer.is_unanswerable
            assert pair.answer.verify_against(doc.passage)

    def test_questions_come_from_questioner(self):
        doc = make_document()
        conv = simulate_sym(doc, EXTRACTOR, TEMPLATE_Q, semi_supervised_config("sym"))
        for pair in conv.turns:
            assert pair.question == f"What is {pair.answer.text}?"

    def test_top1_repeats_best_candidate(self):
        doc = make_document()
        conv = simulate_sym(
            doc, EXTRACTOR, TEMPLATE_Q, SimulationConfig(mode="sym", candidate_policy="top1"))
        targets = {(p.answer.start, p.answer.text) for p in conv.turns}
        assert len(targets) == 1

    def test_dedup_stops_when_candidates_exhausted(self):
        # four sentences -> four distinct leads -> four turns, then stop
        doc = make_document()
        conv = simulate_sym(
            doc, EXTRACTOR, TEMPLATE_Q,
            SimulationConfig(mode="sym", max_turns=6, candidate_policy="top1-dedup"))
        assert len(conv.turns) == 4
        targets = {(p.answer.start, p.answer.text) for p in conv.turns}
        assert len(targets) == 4

    def test_uniform_random_deterministic_under_seed(self):
        doc = make_document()
        cfg = SimulationConfig(mode="sym", candidate_policy="uniform-random", seed=11)
        a = simulate_sym(doc, EXTRACTOR, TEMPLATE_Q, cfg)
        b = simulate_sym(doc, EXTRACTOR, TEMPLATE_Q, cfg)
        assert a == b

    def test_conv_id_defaults_to_doc_id(self):
        doc = make_document(doc_id="paper-7")
        conv = simulate_sym(doc, EXTRACTOR, TEMPLATE_Q, semi_supervised_config("sym"))
        assert conv.conv_id == "paper-7"
        named = simulate_sym(doc, EXTRACTOR, TEMPLATE_Q, semi_supervised_config("sym"),
                             conv_id="other")
        assert named.conv_id == "other"


class TestQuestionFirstPipeline:
    def test_alternating_answerable(self):
        passage = "The next event happened at dawn. Nothing else occurred."
        doc = make_document(doc_id="d", passage=passage)
        conv = simulate_asym(doc, PRIOR_Q, ANSWERER, semi_supervised_config("asym"))
        assert len(conv.turns) == 6
        assert conv.turns[0].question == "What happened next?"
        assert conv.turns[0].answer.text == "The next event happened at dawn"
        assert conv.turns[1].question == "Anything else?"
        assert conv.turns[1].answer.text == "Nothing else occurred"

    def test_answer_offsets_point_into_passage(self):
        passage = "The next event happened at dawn. Nothing else occurred."
        doc = make_document(doc_id="d", passage=passage)
        conv = simulate_asym(doc, PRIOR_Q, ANSWERER, semi_supervised_config("asym"))
        for pair in conv.turns:
            if not pair.answer.is_unanswerable:
                assert pair.answer.verify_against(passage)

    def test_unrelated_passage_yields_unanswerable(self):
        doc = make_document()  # no token overlap with the generic questions
        conv = simulate_asym(doc, PRIOR_Q, ANSWERER, semi_supervised_config("asym"))
        assert all(p.answer.is_unanswerable for p in conv.turns)
        assert len(conv.turns) == 6  # no budget in the semi-supervised config

    def test_budget_stops_after_crossing_turn(self):
        doc = make_document()
        conv = simulate_asym(doc, PRIOR_Q, DECLINER, wiki_config("asym"))
        # budget 3: the 4th unanswerable crosses it and is retained
        assert len(conv.turns) == 4
        assert all(p.answer.is_unanswerable for p in conv.turns)

    def test_budget_zero(self):
        doc = make_document()
        cfg = SimulationConfig(mode="asym", max_turns=8, unanswerable_budget=0)
        conv = simulate_asym(doc, PRIOR_Q, DECLINER, cfg)
        assert len(conv.turns) == 1

    def test_answerable_turns_never_consume_budget(self):
        passage = "The next event happened at dawn. Nothing else occurred."
        doc = make_document(doc_id="d", passage=passage)
        cfg = SimulationConfig(mode="asym", max_turns=5, unanswerable_budget=0)
        conv = simulate_asym(doc, PRIOR_Q, ANSWERER, cfg)
        assert len(conv.turns) == 5


class TestSimulateConversation:
    def test_dispatch_and_role_check(self):
        doc = make_document()
        conv = simulate_conversation(doc, SYM_ENDPOINTS, semi_supervised_config("sym"))
        assert len(conv.turns) == 6
        with pytest.raises(ValueError, match="needs an endpoint"):
            simulate_conversation(doc, {"cae": EXTRACTOR}, semi_supervised_config("sym"))
        with pytest.raises(ValueError, match="needs an endpoint"):
            simulate_conversation(doc, SYM_ENDPOINTS, semi_supervised_config("asym"))


def batch_documents(n):
    # distinct passages so conversations differ across documents
    docs = []
    for i in range(n):
        passage = (f"Marker {i} opens the record. The archive holds item {i}. "
                   f"Visitors arrive on day {i}.")
        docs.append(make_document(doc_id=f"doc-{i:03d}", passage=passage))
    return docs


class TestRunBatch:
    def test_one_conversation_per_document_sorted(self):
        docs = batch_documents(5)[::-1]  # feed in reverse order
        result = run_batch(docs, SYM_ENDPOINTS, semi_supervised_config("sym"))
        assert result.attempted == 5
        assert result.aborted == 0
        assert [c.conv_id for c in result.dataset] == [f"doc-{i:03d}" for i in range(5)]
        assert result.dataset.provenance == "synthetic-sym"

    def test_asym_provenance(self):
        result = run_batch(batch_documents(2), ASYM_ENDPOINTS, wiki_config("asym"))
        assert result.dataset.provenance == "synthetic-asym"

    def test_duplicate_doc_ids_rejected(self):
        docs = batch_documents(2) + batch_documents(1)
        with pytest.raises(ValueError, match="duplicate doc_id"):
            run_batch(docs, SYM_ENDPOINTS, semi_supervised_config("sym"))

    def test_parallel_equals_serial(self):
        docs = batch_documents(8)
        cfg = semi_supervised_config("sym", seed=3)
        serial = run_batch(docs, SYM_ENDPOINTS, cfg, jobs=1)
        parallel = run_batch(docs, SYM_ENDPOINTS, cfg, jobs=4)
        assert canonical_bytes(serial.dataset) == canonical_bytes(parallel.dataset)

    def test_agent_error_aborts_only_its_document(self, monkeypatch):
        def flaky(bundle, generation):
            if "archive holds item 1" in bundle.text:
                raise AgentError("synthetic failure")
            return SCRIPTED_AGENTS["span-extractor"](bundle, generation)

        monkeypatch.setitem(SCRIPTED_AGENTS, "flaky-extractor", flaky)
        endpoints = dict(SYM_ENDPOINTS, cae=AgentEndpoint(kind="scripted:flaky-extractor"))
        result = run_batch(batch_documents(3), endpoints, semi_supervised_config("sym"))
        assert result.aborted == 1
        assert result.errors[0].doc_id == "doc-001"
        assert "synthetic failure" in result.errors[0].message
        assert [c.conv_id for c in result.dataset] == ["doc-000", "doc-002"]

    def test_turn_histogram(self):
        docs = batch_documents(3)
        result = run_batch(docs, SYM_ENDPOINTS, semi_supervised_config("sym"))
        assert result.turn_histogram() == {6: 3}

    def test_manifest_shape(self):
        docs = batch_documents(2)
        cfg = wiki_config("asym", seed=5)
        result = run_batch(docs, ASYM_ENDPOINTS, cfg)
        manifest = build_manifest(cfg, ASYM_ENDPOINTS, result)
        assert manifest["config"] == {
            "mode": "asym", "max_turns": 12, "unanswerable_budget": 3,
            "k": 10, "candidate_policy": "top1", "seed": 5,
        }
        assert sorted(manifest["agents"]) == ["caf", "cqg_prior"]
        assert manifest["agents"]["caf"]["kind"] == "scripted:lexical-answerer"
        assert manifest["counts"]["documents"] == 2
        assert manifest["counts"]["conversations"] == len(result.dataset)
        assert manifest["counts"]["qa_pairs"] == result.dataset.n_pairs()
        assert "created_at" in manifest


def filter_fixture():
    """Three turns with known lexical-answerer outcomes: pass, fail, pass."""
    doc = make_document()
    conv = make_conversation(
        "conv-1",
        doc,
        [
            ("How much does the main telescope weigh?",
             "The main telescope weighs four tons"),
            ("Quetzal migration patterns?", "Night tours"),
            ("When do night tours run?", "Night tours run every summer weekend"),
        ],
    )
    return make_dataset("synthetic", [conv], provenance="synthetic-sym")


class TestRoundtripFilter:
    def test_provenance_guard(self):
        ds = make_dataset(
            "human", [make_conversation("c", make_document(), [("Q?", "1902")])],
            provenance="human")
        with pytest.raises(ValueError, match="synthetic-sym"):
            roundtrip_filter(ds, ANSWERER)

    def test_kept_dropped_partition(self):
        result = roundtrip_filter(filter_fixture(), ANSWERER)
        assert result.total_pairs == 3
        assert result.passing_pairs == 2
        assert result.success_rate == pytest.approx(2 / 3)
        assert len(result.dropped) == 1
        drop = result.dropped[0]
        assert (drop.conv_id, drop.turn_index, drop.reason) == ("conv-1", 2, "below_threshold")
        assert drop.f1 == 0.0

    def test_survivors_renumbered(self):
        result = roundtrip_filter(filter_fixture(), ANSWERER)
        conv = result.kept.conversations[0]
        assert [p.turn_index for p in conv.turns] == [1, 2]
        assert conv.turns[1].question == "When do night tours run?"

    def test_kept_dataset_named_and_typed(self):
        result = roundtrip_filter(filter_fixture(), ANSWERER)
        assert result.kept.name == "synthetic-filtered"
        assert result.kept.provenance == "synthetic-sym"

    def test_audit_mode_keeps_everything(self):
        result = roundtrip_filter(filter_fixture(), ANSWERER,
                                  FilterConfig(drop_below=False))
        conv = result.kept.conversations[0]
        assert [p.turn_index for p in conv.turns] == [1, 2, 3]
        assert result.success_rate == pytest.approx(2 / 3)
        assert result.dropped == ()

    def test_empty_conversation_retained(self):
        doc = make_document()
        conv = make_conversation("hopeless", doc, [("Quetzal?", "Night tours")])
        ds = make_dataset("synthetic", [conv], provenance="synthetic-sym")
        result = roundtrip_filter(ds, ANSWERER)
        assert len(result.kept) == 1
        assert result.kept.conversations[0].turns == ()
        assert result.success_rate == 0.0

    def test_agent_error_drops_pair(self, monkeypatch):
        def broken(bundle, generation):
            raise AgentError("answerer offline")

        monkeypatch.setitem(SCRIPTED_AGENTS, "broken-answerer", broken)
        result = roundtrip_filter(
            filter_fixture(), AgentEndpoint(kind="scripted:broken-answerer"))
        assert result.passing_pairs == 0
        assert {d.reason for d in result.dropped} == {"agent_error"}
        assert all(d.f1 is None for d in result.dropped)

    def test_threshold_validation(self):
        with pytest.raises(ValueError):
            FilterConfig(f1_threshold=1.5)

    def test_filter_uses_original_history(self, monkeypatch):
        """The answerer must see unfiltered preceding turns even after
        earlier pairs in the same conversation failed."""
        seen_prompts = []
        real = SCRIPTED_AGENTS["lexical-answerer"]

        def spying(bundle, generation):
            seen_prompts.append(bundle.text)
            return real(bundle, generation)

        monkeypatch.setitem(SCRIPTED_AGENTS, "spying-answerer", spying)
        roundtrip_filter(filter_fixture(), AgentEndpoint(kind="scripted:spying-answerer"))
        # the third prompt carries both original earlier turns, including the
        # second one that the filter rejects
        assert "Quetzal migration patterns?" in seen_prompts[2]

    def test_report_format(self):
        result = roundtrip_filter(filter_fixture(), ANSWERER)
        text = format_filter_report([("synthetic", result)])
        lines = text.splitlines()
        assert "#(D̂)" in lines[0]
        assert "%(Success)" in lines[0]
        assert lines[1].split() == ["synthetic", "2", "66.7"]
