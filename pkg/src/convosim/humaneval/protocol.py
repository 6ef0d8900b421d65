"""Pairwise human-evaluation protocol: tasks, votes, aggregation, report.

Annotators compare two candidate question/answer pairs that continue the
same conversation position, one drawn from each of two datasets, across
four criteria.  Sources stay hidden behind presentation sides A (left) and
B (right); per-task majorities are aggregated per criterion, tested by a
seeded bootstrap, and filtered by the reporting exclusion rules.
"""

from __future__ import annotations

import json
import logging
import random
import time
from dataclasses import dataclass
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from ..corpus import BackgroundInfo, Dataset
from ..textnorm import ANYTHING_ELSE_MARKERS, is_anything_else

logger = logging.getLogger(__name__)

CRITERIA = ("adequacy", "informativeness", "relevance", "accuracy")
CHOICES = ("A", "B")


@dataclass(frozen=True)
class Candidate:
    """One side of a comparison; `source` names the dataset it came from
    and never reaches annotators."""

    question: str
    answer: str
    unanswerable: bool
    source: str


@dataclass(frozen=True)
class JudgmentTask:
    task_id: str
    doc_id: str
    background: BackgroundInfo
    history: tuple[tuple[str, str], ...]  # (question, answer) pairs shown above the candidates
    left: Candidate
    right: Candidate
    criteria: tuple[str, ...] = CRITERIA

    def __post_init__(self):
        if self.left.source == self.right.source:
            raise ValueError(
                f"task {self.task_id!r}: candidates must come from different datasets"
            )

    @property
    def pair(self) -> tuple[str, str]:
        """The compared dataset names, order-independent."""
        return tuple(sorted((self.left.source, self.right.source)))  # type: ignore[return-value]

    def source_of(self, choice: str) -> str:
        if choice == "A":
            return self.left.source
        if choice == "B":
            return self.right.source
        raise ValueError(f"choice must be A or B, got {choice!r}")

    def annotator_payload(self) -> dict:
        """What an annotator may see: no source tags, no span bookkeeping."""
        return {
            "task_id": self.task_id,
            "background": {
                "title": self.background.title,
                "section_title": self.background.section_title,
                "abstract": self.background.abstract,
            },
            "history": [{"q": q, "a": a} for q, a in self.history],
            "candidates": [
                {"label": "A", "question": self.left.question, "answer": self.left.answer},
                {"label": "B", "question": self.right.question, "answer": self.right.answer},
            ],
            "criteria": list(self.criteria),
        }


@dataclass(frozen=True)
class Vote:
    task_id: str
    annotator_id: str
    criterion: str
    choice: str
    timestamp: float

    def __post_init__(self):
        if self.criterion not in CRITERIA:
            raise ValueError(f"unknown criterion {self.criterion!r}")
        if self.choice not in CHOICES:
            raise ValueError(f"choice must be one of {CHOICES}, got {self.choice!r}")


def create_tasks(
    dataset_a: Dataset, dataset_b: Dataset, n: int, seed: int = 0
) -> list[JudgmentTask]:
    """Sample n comparison tasks from positions the two datasets share.

    A position is a (doc_id, turn) both datasets cover; the history prefix
    shown with a task comes from `dataset_a`'s conversation.  Sampling is
    without replacement and presentation sides are randomized, both under
    one seed.  When a dataset holds several conversations over one doc_id,
    the first is used and the rest are ignored with a warning.
    """
    if dataset_a.name == dataset_b.name:
        raise ValueError("datasets must have distinct names; they become the source tags")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")

    def first_by_doc(dataset: Dataset) -> dict:
        by_doc: dict = {}
        for conv in dataset.conversations:
            if conv.document.doc_id in by_doc:
                logger.warning(
                    "dataset %s: several conversations over doc %s, using the first",
                    dataset.name, conv.document.doc_id,
                )
                continue
            by_doc[conv.document.doc_id] = conv
        return by_doc

    a_by_doc = first_by_doc(dataset_a)
    b_by_doc = first_by_doc(dataset_b)
    aligned: list[tuple[str, int]] = []
    for conv in dataset_a.conversations:
        doc_id = conv.document.doc_id
        if a_by_doc.get(doc_id) is not conv or doc_id not in b_by_doc:
            continue
        shared_turns = min(len(conv.turns), len(b_by_doc[doc_id].turns))
        aligned.extend((doc_id, t) for t in range(1, shared_turns + 1))
    if len(aligned) < n:
        raise ValueError(
            f"need {n} aligned positions but only {len(aligned)} exist "
            f"between {dataset_a.name!r} and {dataset_b.name!r}"
        )

    rng = random.Random(seed)
    chosen = rng.sample(aligned, n)
    tasks = []
    for i, (doc_id, t) in enumerate(chosen):
        conv_a = a_by_doc[doc_id]
        conv_b = b_by_doc[doc_id]
        pair_a = conv_a.turns[t - 1]
        pair_b = conv_b.turns[t - 1]
        cand_a = Candidate(
            question=pair_a.question,
            answer=pair_a.answer.text,
            unanswerable=pair_a.answer.is_unanswerable,
            source=dataset_a.name,
        )
        cand_b = Candidate(
            question=pair_b.question,
            answer=pair_b.answer.text,
            unanswerable=pair_b.answer.is_unanswerable,
            source=dataset_b.name,
        )
        a_left = rng.random() < 0.5
        left, right = (cand_a, cand_b) if a_left else (cand_b, cand_a)
        history = tuple((p.question, p.answer.text) for p in conv_a.turns[: t - 1])
        tasks.append(
            JudgmentTask(
                task_id=f"task-{i:05d}",
                doc_id=doc_id,
                background=conv_a.document.background,
                history=history,
                left=left,
                right=right,
            )
        )
    return tasks


def majority(choices: Sequence[str]) -> str:
    """Strict majority of an odd number of A/B choices."""
    if not choices:
        raise ValueError("no votes to aggregate")
    if len(choices) % 2 == 0:
        raise ValueError(f"vote count must be odd, got {len(choices)}")
    a_count = 0
    for choice in choices:
        if choice not in CHOICES:
            raise ValueError(f"choice must be one of {CHOICES}, got {choice!r}")
        if choice == "A":
            a_count += 1
    return "A" if a_count * 2 > len(choices) else "B"


def bootstrap_test(
    outcomes: Sequence[str], n_samples: int = 100_000, seed: int = 0
) -> float:
    """Significance of a per-task majority-winner imbalance.

    Tasks are resampled with replacement n_samples times.  The observed
    winner is the more frequent outcome (ties break to the
    lexicographically smaller value), and the raw statistic is the fraction
    of resamples where that winner's proportion drops to 0.5 or below.
    Because the winner is read off the same sample being tested, the
    one-sided fraction is doubled (capped at 1): without the doubling, a
    fair coin would be called significant at the 0.1 level almost twice as
    often as the level promises.  Unanimous outcomes give exactly 0.0;
    perfectly balanced ones give 1.0.  Deterministic under the seed.
    """
    if not outcomes:
        raise ValueError("no outcomes to test")
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    values = sorted(set(outcomes))
    if len(values) > 2:
        raise ValueError(f"outcomes must be binary, got {len(values)} distinct values")
    counts = {v: 0 for v in values}
    for outcome in outcomes:
        counts[outcome] += 1
    winner = max(values, key=lambda v: (counts[v], v == values[0]))
    wins = np.array([1 if o == winner else 0 for o in outcomes], dtype=np.int64)
    n = len(outcomes)
    rng = np.random.default_rng(seed)
    at_or_below_half = 0
    remaining = n_samples
    batch_rows = max(1, min(n_samples, 10_000_000 // max(n, 1)))
    while remaining:
        rows = min(batch_rows, remaining)
        idx = rng.integers(0, n, size=(rows, n))
        row_wins = wins[idx].sum(axis=1)
        # proportion <= 0.5 exactly iff 2 * wins <= n (integer arithmetic).
        at_or_below_half += int((2 * row_wins <= n).sum())
        remaining -= rows
    return min(1.0, 2.0 * at_or_below_half / n_samples)


@dataclass(frozen=True)
class ExclusionRules:
    """Reporting filters: drop tasks where either candidate is unanswerable
    or either question is a generic follow-up.  A dropped task disappears
    from every criterion."""

    exclude_unanswerable: bool = True
    exclude_generic_followup: bool = True
    markers: tuple[str, ...] = ANYTHING_ELSE_MARKERS


def task_excluded(task: JudgmentTask, rules: ExclusionRules) -> bool:
    for candidate in (task.left, task.right):
        if rules.exclude_unanswerable and candidate.unanswerable:
            return True
        if rules.exclude_generic_followup and is_anything_else(candidate.question, rules.markers):
            return True
    return False


@dataclass(frozen=True)
class ReportSection:
    """One criterion of one dataset pair.  proportions maps each source to
    its share of decided tasks and sums to 1 when any task is decided;
    n_undecided counts tasks whose vote count was even (panel in flight)."""

    criterion: str
    pair: tuple[str, str]
    n_tasks: int
    n_undecided: int
    proportions: Mapping[str, float]
    p_value: float | None
    significant: bool


@dataclass(frozen=True)
class EvalReport:
    sections: tuple[ReportSection, ...]
    n_tasks_total: int
    n_excluded: int
    n_votes: int

    def to_dict(self) -> dict:
        return {
            "n_tasks_total": self.n_tasks_total,
            "n_excluded": self.n_excluded,
            "n_votes": self.n_votes,
            "sections": [
                {
                    "criterion": s.criterion,
                    "pair": list(s.pair),
                    "n_tasks": s.n_tasks,
                    "n_undecided": s.n_undecided,
                    "proportions": dict(sorted(s.proportions.items())),
                    "p_value": s.p_value,
                    "significant": s.significant,
                }
                for s in self.sections
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False, indent=2)


def _dedup_votes(votes: Iterable[Vote]) -> list[Vote]:
    seen: set[tuple[str, str, str]] = set()
    kept = []
    for vote in votes:
        key = (vote.task_id, vote.annotator_id, vote.criterion)
        if key in seen:
            continue
        seen.add(key)
        kept.append(vote)
    return kept


def report(
    tasks: Sequence[JudgmentTask],
    votes: Iterable[Vote],
    *,
    rules: ExclusionRules = ExclusionRules(),
    seed: int = 0,
    n_samples: int = 100_000,
    significance: float = 0.1,
) -> EvalReport:
    """Aggregate votes into per-criterion, per-dataset-pair sections.

    The first vote per (task, annotator, criterion) wins; later duplicates
    are ignored, so replaying an append-only log is idempotent.  Majorities
    are taken over tasks with an odd number of votes for the criterion;
    even (in-flight) tallies are reported as undecided.  Exclusion rules
    apply before aggregation, to all criteria alike.  Output depends only
    on tasks, votes, and the seed.
    """
    by_id = {}
    for task in tasks:
        if task.task_id in by_id:
            raise ValueError(f"duplicate task_id {task.task_id!r}")
        by_id[task.task_id] = task
    deduped = _dedup_votes(votes)
    for vote in deduped:
        if vote.task_id not in by_id:
            raise ValueError(f"vote references unknown task {vote.task_id!r}")

    surviving = [t for t in tasks if not task_excluded(t, rules)]
    votes_by_key: dict[tuple[str, str], list[str]] = {}
    for vote in deduped:
        votes_by_key.setdefault((vote.task_id, vote.criterion), []).append(vote.choice)

    pairs: list[tuple[str, str]] = []
    tasks_by_pair: dict[tuple[str, str], list[JudgmentTask]] = {}
    for task in surviving:
        if task.pair not in tasks_by_pair:
            pairs.append(task.pair)
            tasks_by_pair[task.pair] = []
        tasks_by_pair[task.pair].append(task)

    sections = []
    for pair in sorted(pairs):
        for criterion in CRITERIA:
            outcomes: list[str] = []
            undecided = 0
            for task in tasks_by_pair[pair]:
                choices = votes_by_key.get((task.task_id, criterion), [])
                if not choices:
                    continue
                if len(choices) % 2 == 0:
                    undecided += 1
                    continue
                outcomes.append(task.source_of(majority(choices)))
            if outcomes:
                proportions = {
                    source: sum(1 for o in outcomes if o == source) / len(outcomes)
                    for source in pair
                }
                p_value = bootstrap_test(outcomes, n_samples=n_samples, seed=seed)
                significant = p_value < significance
            else:
                proportions = {}
                p_value = None
                significant = False
            sections.append(
                ReportSection(
                    criterion=criterion,
                    pair=pair,
                    n_tasks=len(outcomes),
                    n_undecided=undecided,
                    proportions=proportions,
                    p_value=p_value,
                    significant=significant,
                )
            )
    return EvalReport(
        sections=tuple(sections),
        n_tasks_total=len(tasks),
        n_excluded=len(tasks) - len(surviving),
        n_votes=len(deduped),
    )


def format_report(eval_report: EvalReport) -> str:
    lines = [
        f"tasks: {eval_report.n_tasks_total} total, {eval_report.n_excluded} excluded "
        f"by reporting rules; votes: {eval_report.n_votes}",
        f"{'criterion':<16} {'pair':<28} {'n':>4} {'proportions':<28} {'p':>8}  sig",
    ]
    for s in eval_report.sections:
        pair_str = " vs ".join(s.pair)
        props = ", ".join(f"{src} {val:.2f}" for src, val in sorted(s.proportions.items()))
        p_str = f"{s.p_value:.4f}" if s.p_value is not None else "-"
        sig = "*" if s.significant else ""
        lines.append(f"{s.criterion:<16} {pair_str:<28} {s.n_tasks:>4} {props:<28} {p_str:>8}  {sig}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# File formats: tasks as JSON lines, votes as an append-only JSON-line log.
# ---------------------------------------------------------------------------


def task_to_record(task: JudgmentTask) -> dict:
    def cand(c: Candidate) -> dict:
        return {
            "question": c.question,
            "answer": c.answer,
            "unanswerable": c.unanswerable,
            "source": c.source,
        }

    return {
        "task_id": task.task_id,
        "doc_id": task.doc_id,
        "background": {
            "title": task.background.title,
            "section_title": task.background.section_title,
            "abstract": task.background.abstract,
        },
        "history": [{"q": q, "a": a} for q, a in task.history],
        "left": cand(task.left),
        "right": cand(task.right),
        "criteria": list(task.criteria),
    }


def task_from_record(rec: Mapping) -> JudgmentTask:
    def cand(data: Mapping) -> Candidate:
        return Candidate(
            question=data["question"],
            answer=data["answer"],
            unanswerable=bool(data["unanswerable"]),
            source=data["source"],
        )

    bg = rec["background"]
    return JudgmentTask(
        task_id=rec["task_id"],
        doc_id=rec["doc_id"],
        background=BackgroundInfo(bg["title"], bg["section_title"], bg["abstract"]),
        history=tuple((h["q"], h["a"]) for h in rec["history"]),
        left=cand(rec["left"]),
        right=cand(rec["right"]),
        criteria=tuple(rec.get("criteria", CRITERIA)),
    )


def write_tasks(tasks: Iterable[JudgmentTask], fp: IO[str]) -> None:
    for task in tasks:
        fp.write(json.dumps(task_to_record(task), sort_keys=True, ensure_ascii=False,
                            separators=(",", ":")))
        fp.write("\n")


def read_tasks(fp: IO[str]) -> list[JudgmentTask]:
    tasks = []
    for line in fp:
        line = line.strip()
        if line:
            tasks.append(task_from_record(json.loads(line)))
    return tasks


def vote_to_line(vote: Vote) -> str:
    return json.dumps(
        {
            "task_id": vote.task_id,
            "annotator_id": vote.annotator_id,
            "criterion": vote.criterion,
            "choice": vote.choice,
            "ts": vote.timestamp,
        },
        sort_keys=True,
        separators=(",", ":"),
    )


def read_votes(fp: IO[str]) -> list[Vote]:
    """Replay a vote log.  Torn or malformed lines (a crash mid-append) are
    skipped with a warning rather than poisoning the whole log."""
    votes = []
    for line_no, line in enumerate(fp, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
            votes.append(
                Vote(
                    task_id=rec["task_id"],
                    annotator_id=rec["annotator_id"],
                    criterion=rec["criterion"],
                    choice=rec["choice"],
                    timestamp=float(rec.get("ts", 0.0)),
                )
            )
        except (ValueError, KeyError, TypeError):
            logger.warning("vote log line %d unreadable, skipped", line_no)
    return votes


def new_vote(task_id: str, annotator_id: str, criterion: str, choice: str) -> Vote:
    return Vote(
        task_id=task_id,
        annotator_id=annotator_id,
        criterion=criterion,
        choice=choice,
        timestamp=time.time(),
    )
