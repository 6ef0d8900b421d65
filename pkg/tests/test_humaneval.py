import io
import json
import time

import pytest

from convosim.corpus import BackgroundInfo
from convosim.humaneval.protocol import (
    CRITERIA,
    Candidate,
    EvalReport,
    ExclusionRules,
    JudgmentTask,
    Vote,
    bootstrap_test,
    create_tasks,
    format_report,
    majority,
    new_vote,
    read_tasks,
    read_votes,
    report,
    task_excluded,
    task_from_record,
    task_to_record,
    vote_to_line,
    write_tasks,
)

from helpers import make_conversation, make_dataset, make_document
import reference_impls as ref

BG = BackgroundInfo("Ella Reed", "Observatory", "An astronomer.")


def candidate(source, question="What year?", answer="1902", unanswerable=False):
    return Candidate(question=question, answer=answer, unanswerable=unanswerable, source=source)


def task(task_id, *, left="src-a", right="src-b", q_left="What year?", q_right="Which span?",
         unans_left=False, unans_right=False, history=()):
    return JudgmentTask(
        task_id=task_id,
        doc_id="doc-0",
        background=BG,
        history=tuple(history),
        left=candidate(left, question=q_left, unanswerable=unans_left),
        right=candidate(right, question=q_right, unanswerable=unans_right),
    )


def paired_datasets():
    """alpha and beta share doc-1 (2 aligned turns) and doc-2 (3)."""
    docs = {i: make_document(doc_id=f"doc-{i}") for i in range(4)}
    a_convs = [
        make_conversation("a0", docs[0], [("A0 turn 1?", "1902")] ),
        make_conversation("a1", docs[1], [("A1 turn 1?", "1902"), ("A1 turn 2?", "four tons"),
                                          ("A1 turn 3?", "Night tours")]),
        make_conversation("a2", docs[2], [("A2 turn 1?", "1902"), ("A2 turn 2?", None),
                                          ("A2 turn 3?", "four tons")]),
    ]
    b_convs = [
        make_conversation("b1", docs[1], [("B1 turn 1?", "four tons"), ("B1 turn 2?", "1902")]),
        make_conversation("b2", docs[2], [("B2 turn 1?", None), ("B2 turn 2?", "Night tours"),
                                          ("B2 turn 3?", "1902")]),
        make_conversation("b3", docs[3], [("B3 turn 1?", "1902")]),
    ]
    return make_dataset("alpha", a_convs), make_dataset("beta", b_convs)


class TestJudgmentTask:
    def test_sources_must_differ(self):
        with pytest.raises(ValueError, match="different datasets"):
            task("t", left="same", right="same")

    def test_pair_is_sorted(self):
        t = task("t", left="zeta", right="alpha")
        assert t.pair == ("alpha", "zeta")

    def test_source_of(self):
        t = task("t")
        assert t.source_of("A") == "src-a"
        assert t.source_of("B") == "src-b"
        with pytest.raises(ValueError):
            t.source_of("C")

    def test_annotator_payload_strips_sources(self):
        t = task("t", history=[("Earlier?", "an answer")])
        payload = t.annotator_payload()
        blob = json.dumps(payload)
        assert "src-a" not in blob
        assert "src-b" not in blob
        assert "source" not in blob
        assert [c["label"] for c in payload["candidates"]] == ["A", "B"]
        assert payload["history"] == [{"q": "Earlier?", "a": "an answer"}]
        assert payload["criteria"] == list(CRITERIA)


class TestCreateTasks:
    def test_samples_aligned_positions(self):
        alpha, beta = paired_datasets()
        tasks = create_tasks(alpha, beta, n=5, seed=0)
        assert len(tasks) == 5
        positions = {(t.doc_id, len(t.history) + 1) for t in tasks}
        assert positions == {("doc-1", 1), ("doc-1", 2), ("doc-2", 1),
                             ("doc-2", 2), ("doc-2", 3)}
        assert len({t.task_id for t in tasks}) == 5

    def test_too_few_positions_error_states_count(self):
        alpha, beta = paired_datasets()
        with pytest.raises(ValueError, match="need 6 aligned positions but only 5 exist"):
            create_tasks(alpha, beta, n=6, seed=0)

    def test_zero_aligned_positions(self):
        doc_x = make_document(doc_id="only-x")
        doc_y = make_document(doc_id="only-y")
        a = make_dataset("alpha", [make_conversation("a", doc_x, [("Q?", "1902")])])
        b = make_dataset("beta", [make_conversation("b", doc_y, [("Q?", "1902")])])
        with pytest.raises(ValueError, match="only 0 exist"):
            create_tasks(a, b, n=1)

    def test_deterministic_under_seed(self):
        alpha, beta = paired_datasets()
        first = create_tasks(alpha, beta, n=4, seed=9)
        second = create_tasks(alpha, beta, n=4, seed=9)
        assert first == second

    def test_sides_randomized(self):
        alpha, beta = paired_datasets()
        tasks = create_tasks(alpha, beta, n=5, seed=1)
        lefts = {t.left.source for t in tasks}
        assert lefts == {"alpha", "beta"}  # both orders appear over 5 tasks

    def test_history_comes_from_first_dataset(self):
        alpha, beta = paired_datasets()
        tasks = create_tasks(alpha, beta, n=5, seed=0)
        for t in tasks:
            if t.doc_id == "doc-1" and len(t.history) == 1:
                assert t.history[0] == ("A1 turn 1?", "1902")

    def test_candidates_carry_turn_content(self):
        alpha, beta = paired_datasets()
        tasks = create_tasks(alpha, beta, n=5, seed=3)
        for t in tasks:
            turn = len(t.history) + 1
            by_source = {t.left.source: t.left, t.right.source: t.right}
            assert by_source["alpha"].question.startswith(f"A{t.doc_id[-1]} turn {turn}?")
            assert by_source["beta"].question.startswith(f"B{t.doc_id[-1]} turn {turn}?")

    def test_unanswerable_flag_propagates(self):
        alpha, beta = paired_datasets()
        tasks = create_tasks(alpha, beta, n=5, seed=0)
        for t in tasks:
            if t.doc_id == "doc-2" and len(t.history) == 0:
                beta_side = t.left if t.left.source == "beta" else t.right
                assert beta_side.unanswerable
                assert beta_side.answer == "CANNOTANSWER"

    def test_same_names_rejected(self):
        alpha, _ = paired_datasets()
        with pytest.raises(ValueError, match="distinct names"):
            create_tasks(alpha, alpha, n=1)

    def test_duplicate_doc_conversations_warn_and_use_first(self, caplog):
        doc = make_document(doc_id="shared")
        a = make_dataset("alpha", [
            make_conversation("a1", doc, [("First conv?", "1902")]),
            make_conversation("a2", doc, [("Second conv?", "1902")]),
        ])
        b = make_dataset("beta", [make_conversation("b1", doc, [("Beta conv?", "1902")])])
        with caplog.at_level("WARNING"):
            tasks = create_tasks(a, b, n=1, seed=0)
        assert len(tasks) == 1
        questions = {tasks[0].left.question, tasks[0].right.question}
        assert questions == {"First conv?", "Beta conv?"}
        assert any("using the first" in r.message for r in caplog.records)


class TestMajority:
    def test_examples(self):
        assert majority(["A", "A", "A", "B", "B"]) == "A"
        assert majority(["B", "B", "B", "B", "B"]) == "B"
        assert majority(["A", "B", "B"]) == "B"
        assert majority(["A"]) == "A"

    def test_even_and_empty_rejected(self):
        with pytest.raises(ValueError, match="odd"):
            majority(["A", "B"])
        with pytest.raises(ValueError):
            majority([])
        with pytest.raises(ValueError):
            majority(["A", "X", "B"])


class TestBootstrap:
    def test_unanimous_is_zero(self):
        assert bootstrap_test(["x"] * 25, n_samples=500, seed=0) == 0.0

    def test_balanced_is_one(self):
        outcomes = ["a"] * 10 + ["b"] * 10
        assert bootstrap_test(outcomes, n_samples=500, seed=0) == 1.0

    def test_seed_determinism(self):
        outcomes = ["a"] * 70 + ["b"] * 30
        p1 = bootstrap_test(outcomes, n_samples=2000, seed=42)
        p2 = bootstrap_test(outcomes, n_samples=2000, seed=42)
        assert p1 == p2

    def test_matches_sequential_reference_exactly(self):
        # the batched resampler must consume the PCG64 stream exactly like
        # a one-resample-at-a-time loop
        cases = [
            ["a"] * 70 + ["b"] * 30,
            ["a"] * 55 + ["b"] * 45,
            ["win"] * 9 + ["lose"] * 3,
        ]
        for outcomes in cases:
            for seed in (0, 7):
                got = bootstrap_test(outcomes, n_samples=1500, seed=seed)
                want = ref.ref_bootstrap_p(outcomes, 1500, seed)
                assert got == pytest.approx(want, abs=1e-12), (len(outcomes), seed)

    def test_validation(self):
        with pytest.raises(ValueError):
            bootstrap_test([])
        with pytest.raises(ValueError):
            bootstrap_test(["a"], n_samples=0)
        with pytest.raises(ValueError, match="binary"):
            bootstrap_test(["a", "b", "c"])


class TestExclusions:
    def test_unanswerable_excludes(self):
        assert task_excluded(task("t", unans_right=True), ExclusionRules())
        assert not task_excluded(task("t"), ExclusionRules())

    def test_generic_followup_excludes(self):
        t = task("t", q_left="Anything else?")
        assert task_excluded(t, ExclusionRules())
        t2 = task("t2", q_right="What other events?")
        assert task_excluded(t2, ExclusionRules())

    def test_rules_can_be_disabled(self):
        t = task("t", q_left="Anything else?", unans_right=True)
        off = ExclusionRules(exclude_unanswerable=False, exclude_generic_followup=False)
        assert not task_excluded(t, off)

    def test_custom_markers(self):
        t = task("t", q_left="What more happened?")
        assert not task_excluded(t, ExclusionRules())
        assert task_excluded(t, ExclusionRules(markers=("more",)))


def votes_for(task_id, annotator, criterion_choices):
    return [
        Vote(task_id=task_id, annotator_id=annotator, criterion=crit, choice=choice,
             timestamp=1.0)
        for crit, choice in criterion_choices.items()
    ]


class TestReport:
    def hand_fixture(self):
        # left is always src-a, so choice A means src-a
        tasks = [task(f"t{i}", q_left=f"Left {i}?", q_right=f"Right {i}?") for i in range(4)]
        votes = []
        for tid, choice in (("t0", "A"), ("t1", "A"), ("t2", "A"), ("t3", "B")):
            votes += votes_for(tid, "ann-1", {"adequacy": choice})
        return tasks, votes

    def test_hand_tallied_proportions(self):
        tasks, votes = self.hand_fixture()
        rep = report(tasks, votes, n_samples=200, seed=0)
        adequacy = next(s for s in rep.sections if s.criterion == "adequacy")
        assert adequacy.n_tasks == 4
        assert adequacy.proportions == {"src-a": 0.75, "src-b": 0.25}
        assert adequacy.pair == ("src-a", "src-b")
        assert rep.n_votes == 4
        assert rep.n_tasks_total == 4
        assert rep.n_excluded == 0

    def test_one_section_per_criterion(self):
        tasks, votes = self.hand_fixture()
        rep = report(tasks, votes, n_samples=100)
        assert [s.criterion for s in rep.sections] == list(CRITERIA)
        empty = [s for s in rep.sections if s.criterion != "adequacy"]
        for section in empty:
            assert section.n_tasks == 0
            assert section.proportions == {}
            assert section.p_value is None
            assert not section.significant

    def test_three_annotator_panel(self):
        tasks = [task("t0")]
        votes = []
        for ann, choice in (("a1", "A"), ("a2", "B"), ("a3", "B")):
            votes += votes_for("t0", ann, {"relevance": choice})
        rep = report(tasks, votes, n_samples=100)
        relevance = next(s for s in rep.sections if s.criterion == "relevance")
        assert relevance.proportions == {"src-a": 0.0, "src-b": 1.0}

    def test_even_votes_undecided(self):
        tasks = [task("t0")]
        votes = votes_for("t0", "a1", {"accuracy": "A"}) + \
            votes_for("t0", "a2", {"accuracy": "B"})
        rep = report(tasks, votes, n_samples=100)
        accuracy = next(s for s in rep.sections if s.criterion == "accuracy")
        assert accuracy.n_tasks == 0
        assert accuracy.n_undecided == 1
        assert accuracy.p_value is None

    def test_duplicate_votes_first_wins(self):
        tasks = [task("t0")]
        votes = votes_for("t0", "a1", {"adequacy": "A"}) + \
            votes_for("t0", "a1", {"adequacy": "B"})
        rep = report(tasks, votes, n_samples=100)
        adequacy = next(s for s in rep.sections if s.criterion == "adequacy")
        assert rep.n_votes == 1
        assert adequacy.proportions == {"src-a": 1.0, "src-b": 0.0}

    def test_exclusion_applies_to_all_criteria(self):
        tasks = [task("t0"), task("t1", unans_left=True)]
        votes = []
        for crit in CRITERIA:
            votes += votes_for("t0", "a1", {crit: "A"})
            votes += votes_for("t1", "a1", {crit: "B"})
        rep = report(tasks, votes, n_samples=100)
        assert rep.n_excluded == 1
        for section in rep.sections:
            assert section.n_tasks == 1  # t1 gone everywhere

    def test_unknown_task_vote_rejected(self):
        with pytest.raises(ValueError, match="unknown task"):
            report([task("t0")], votes_for("ghost", "a1", {"adequacy": "A"}), n_samples=10)

    def test_duplicate_task_ids_rejected(self):
        with pytest.raises(ValueError, match="duplicate task_id"):
            report([task("t0"), task("t0")], [], n_samples=10)

    def test_unanimous_significant_balanced_not(self):
        tasks = [task(f"t{i}") for i in range(12)]
        unanimous = []
        for t_obj in tasks:
            unanimous += votes_for(t_obj.task_id, "a1", {"adequacy": "A"})
        rep = report(tasks, unanimous, n_samples=500, seed=0)
        adequacy = next(s for s in rep.sections if s.criterion == "adequacy")
        assert adequacy.p_value == 0.0
        assert adequacy.significant

        balanced = []
        for i, t_obj in enumerate(tasks):
            balanced += votes_for(t_obj.task_id, "a1",
                                  {"adequacy": "A" if i % 2 == 0 else "B"})
        rep2 = report(tasks, balanced, n_samples=500, seed=0)
        adequacy2 = next(s for s in rep2.sections if s.criterion == "adequacy")
        assert adequacy2.p_value == 1.0
        assert not adequacy2.significant

    def test_multiple_pairs_sorted(self):
        tasks = [
            task("t0", left="src-a", right="src-c"),
            task("t1", left="src-a", right="src-b"),
        ]
        rep = report(tasks, [], n_samples=10)
        pairs = [s.pair for s in rep.sections]
        assert pairs == [("src-a", "src-b")] * 4 + [("src-a", "src-c")] * 4

    def test_report_bytes_deterministic(self):
        tasks, votes = self.hand_fixture()
        a = report(tasks, votes, n_samples=300, seed=5).to_json()
        b = report(tasks, votes, n_samples=300, seed=5).to_json()
        assert a == b

    def test_format_report_lines(self):
        tasks, votes = self.hand_fixture()
        text = format_report(report(tasks, votes, n_samples=100, seed=0))
        lines = text.splitlines()
        assert "4 total, 0 excluded" in lines[0]
        assert lines[1].startswith("criterion")
        assert len(lines) == 2 + len(CRITERIA)
        assert any("src-a vs src-b" in line for line in lines)


class TestSerialization:
    def test_task_record_round_trip(self):
        t = task("t0", history=[("Q?", "an answer")])
        assert task_from_record(task_to_record(t)) == t

    def test_task_file_round_trip(self):
        tasks = [task(f"t{i}") for i in range(3)]
        buf = io.StringIO()
        write_tasks(tasks, buf)
        buf.seek(0)
        assert read_tasks(buf) == tasks

    def test_vote_line_round_trip(self):
        vote = Vote("t0", "ann", "adequacy", "A", 123.5)
        line = vote_to_line(vote)
        back = read_votes(io.StringIO(line + "\n"))
        assert back == [vote]

    def test_torn_log_line_skipped(self, caplog):
        good = vote_to_line(Vote("t0", "ann", "adequacy", "A", 1.0))
        torn = good[: len(good) // 2]
        with caplog.at_level("WARNING"):
            votes = read_votes(io.StringIO(good + "\n" + torn + "\n" + good + "\n"))
        assert len(votes) == 2
        assert any("unreadable" in r.message for r in caplog.records)

    def test_new_vote_stamps_time(self):
        before = time.time()
        vote = new_vote("t", "ann", "accuracy", "B")
        assert before <= vote.timestamp <= time.time()

    def test_vote_validation(self):
        with pytest.raises(ValueError):
            Vote("t", "a", "style", "A", 0.0)
        with pytest.raises(ValueError):
            Vote("t", "a", "adequacy", "Z", 0.0)
