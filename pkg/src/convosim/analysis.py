"""Dataset statistics, per-turn metric curves, and classifier training data.

Everything here is a pure computation over an immutable Dataset; the only
randomness is the seeded sampling in the training-set constructors, and
those document their draw order precisely so an independent sampler with
the same seed reproduces them.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass
from typing import IO, Callable, Mapping, Sequence

from .corpus import Conversation, Dataset
from .textnorm import is_anything_else, normalize, token_f1, token_precision

logger = logging.getLogger(__name__)

Scorer = Callable[[Conversation, int], float]


@dataclass(frozen=True)
class StatReport:
    """Surface statistics of a conversation dataset.

    Token counts are raw whitespace tokens.  F1 fields are percentages
    (mean per-pair F1 times 100).  Unanswerable answers are excluded from
    tokens_per_answer and f1_q_a; they still contribute their marker text
    to the previous-answer bags of f1_q_prev_answers.
    """

    dataset_name: str
    n_conversations: int
    n_questions: int
    tokens_per_question: float
    tokens_per_answer: float
    f1_q_a: float
    f1_q_prev_answers: float
    pct_anything_else: float
    pct_unanswerable: float


def dataset_statistics(dataset: Dataset) -> StatReport:
    if not dataset.conversations or dataset.n_pairs() == 0:
        raise ValueError(f"dataset {dataset.name!r} has no question/answer pairs")
    n_questions = 0
    q_tokens = 0
    a_tokens = 0
    n_answerable = 0
    f1_qa_sum = 0.0
    f1_qprev_sum = 0.0
    n_qprev = 0
    n_anything_else = 0
    n_unanswerable = 0
    for conv in dataset.conversations:
        for i, pair in enumerate(conv.turns):
            n_questions += 1
            q_tokens += len(pair.question.split())
            if is_anything_else(pair.question):
                n_anything_else += 1
            if pair.answer.is_unanswerable:
                n_unanswerable += 1
            else:
                n_answerable += 1
                a_tokens += len(pair.answer.text.split())
                f1_qa_sum += token_f1(pair.question, pair.answer.text)
            if i >= 1:
                prev_bag = normalize(" ".join(p.answer.text for p in conv.turns[:i]))
                f1_qprev_sum += token_f1(normalize(pair.question), prev_bag)
                n_qprev += 1
    return StatReport(
        dataset_name=dataset.name,
        n_conversations=len(dataset.conversations),
        n_questions=n_questions,
        tokens_per_question=q_tokens / n_questions,
        tokens_per_answer=a_tokens / n_answerable if n_answerable else 0.0,
        f1_q_a=(f1_qa_sum / n_answerable * 100.0) if n_answerable else 0.0,
        f1_q_prev_answers=(f1_qprev_sum / n_qprev * 100.0) if n_qprev else 0.0,
        pct_anything_else=n_anything_else / n_questions * 100.0,
        pct_unanswerable=n_unanswerable / n_questions * 100.0,
    )


def format_stat_report(report: StatReport) -> str:
    rows = [
        ("tokens / question", f"{report.tokens_per_question:.1f}"),
        ("tokens / answer", f"{report.tokens_per_answer:.1f}"),
        ("F1(question, answer)", f"{report.f1_q_a:.1f}"),
        ("F1(question, previous answers)", f"{report.f1_q_prev_answers:.1f}"),
        ("% generic follow-up questions", f"{report.pct_anything_else:.1f}"),
        ("% unanswerable questions", f"{report.pct_unanswerable:.1f}"),
    ]
    width = max(len(label) for label, _ in rows)
    lines = [f"{report.dataset_name}: {report.n_conversations} conversations, "
             f"{report.n_questions} questions"]
    lines += [f"  {label:<{width}}  {value:>8}" for label, value in rows]
    return "\n".join(lines)


def informativeness(conversation: Conversation, t: int) -> float:
    """How much of answer t is new relative to each earlier answer.

    1 minus the maximum token precision of a_t against any single earlier
    answer; the first turn scores 1.0 (empty maximum).  Adding earlier
    answers can only lower the score.
    """
    if not 1 <= t <= len(conversation.turns):
        raise ValueError(
            f"turn {t} out of range for conversation {conversation.conv_id!r} "
            f"with {len(conversation.turns)} turns"
        )
    current = normalize(conversation.turns[t - 1].answer.text)
    worst = 0.0
    for earlier in conversation.turns[: t - 1]:
        precision = token_precision(current, normalize(earlier.answer.text))
        if precision > worst:
            worst = precision
    return 1.0 - worst


@dataclass(frozen=True)
class TurnCurve:
    """Per-turn-index means of a metric over a dataset.

    means[i] and counts[i] describe turn index i+1; turns a conversation
    does not reach contribute nothing.  skipped counts pairs whose scorer
    raised.
    """

    metric: str
    means: tuple[float, ...]
    counts: tuple[int, ...]
    skipped: int = 0

    def __post_init__(self):
        if len(self.means) != len(self.counts):
            raise ValueError("means and counts must align")


def per_turn_curves(dataset: Dataset, scorers: Mapping[str, Scorer]) -> list[TurnCurve]:
    """Evaluate each scorer on every (conversation, turn) and average by turn."""
    max_turns = max((len(c.turns) for c in dataset.conversations), default=0)
    curves = []
    for name, scorer in scorers.items():
        sums = [0.0] * max_turns
        counts = [0] * max_turns
        skipped = 0
        for conv in dataset.conversations:
            for t in range(1, len(conv.turns) + 1):
                try:
                    score = scorer(conv, t)
                except Exception:
                    skipped += 1
                    continue
                sums[t - 1] += score
                counts[t - 1] += 1
        means = tuple(
            sums[i] / counts[i] if counts[i] else 0.0 for i in range(max_turns)
        )
        curves.append(TurnCurve(metric=name, means=means, counts=tuple(counts), skipped=skipped))
    return curves


def read_score_file(fp: IO[str]) -> dict[tuple[str, int], float]:
    """Per-pair scores, one "conv_id t score" line each (whitespace split
    from the right, so conv_ids may contain spaces)."""
    scores: dict[tuple[str, int], float] = {}
    for line_no, line in enumerate(fp, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            conv_id, t_str, score_str = line.rsplit(None, 2)
            scores[(conv_id, int(t_str))] = float(score_str)
        except ValueError:
            raise ValueError(f"score file line {line_no}: expected 'conv_id t score', got {line!r}")
    return scores


def make_file_scorer(scores: Mapping[tuple[str, int], float]) -> Scorer:
    """Scorer over externally computed per-pair scores; missing pairs raise,
    which per_turn_curves counts as skipped."""

    def scorer(conversation: Conversation, t: int) -> float:
        return scores[(conversation.conv_id, t)]

    return scorer


def format_curves(curves: Sequence[TurnCurve]) -> str:
    """Long-form delimited table: metric, turn, mean, count."""
    lines = ["metric\tturn\tmean\tcount"]
    for curve in curves:
        for i, (mean, count) in enumerate(zip(curve.means, curve.counts), start=1):
            lines.append(f"{curve.metric}\t{i}\t{mean:.6f}\t{count}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Training data for the question-specificity and answer-relevance classifiers.
# The classifiers themselves are trained elsewhere; these constructors only
# author their contrastive examples.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClassifierExample:
    conv_id: str
    turn_index: int
    history: tuple[tuple[str, str], ...]  # (question, answer text) pairs
    question: str
    answer: str | None
    label: str  # "positive" | "negative"
    negative_kind: str | None = None  # frequent_question | random_question | random_answer

    def __post_init__(self):
        if self.label not in ("positive", "negative"):
            raise ValueError(f"label must be positive/negative, got {self.label!r}")
        if (self.label == "negative") != (self.negative_kind is not None):
            raise ValueError("negatives carry a negative_kind; positives do not")


def _history_pairs(conv: Conversation, upto: int) -> tuple[tuple[str, str], ...]:
    return tuple((p.question, p.answer.text) for p in conv.turns[: upto - 1])


def build_specificity_training_set(dataset: Dataset, seed: int = 0) -> list[ClassifierExample]:
    """Contrastive (history, question) examples for a specificity scorer.

    Draw order, one `random.Random(seed)` stream, conversations and turns
    in dataset order:
      1. u = rng.random(); u < 0.5 emits the positive pair.
      2. otherwise v = rng.random() picks the negative source: v < 0.5 and
         a non-empty frequent pool -> a question occurring more than once
         in the dataset (pool in first-appearance order, index by
         rng.randrange(len(pool))); else a question from another
         conversation (flattened dataset order, same randrange call).  With
         a single conversation the fallback pool is the other questions of
         that conversation; with no alternative at all the positive is
         emitted instead.
    """
    rng = random.Random(seed)
    counts: dict[str, int] = {}
    order: list[str] = []
    for conv in dataset.conversations:
        for pair in conv.turns:
            if pair.question not in counts:
                order.append(pair.question)
            counts[pair.question] = counts.get(pair.question, 0) + 1
    frequent_pool = [q for q in order if counts[q] > 1]
    all_questions = [
        (conv.conv_id, pair.question)
        for conv in dataset.conversations
        for pair in conv.turns
    ]
    warned_empty_pool = False
    examples: list[ClassifierExample] = []
    for conv in dataset.conversations:
        for pair in conv.turns:
            history = _history_pairs(conv, pair.turn_index)
            if rng.random() < 0.5:
                examples.append(
                    ClassifierExample(
                        conv_id=conv.conv_id,
                        turn_index=pair.turn_index,
                        history=history,
                        question=pair.question,
                        answer=None,
                        label="positive",
                    )
                )
                continue
            source_draw = rng.random()
            if source_draw < 0.5 and frequent_pool:
                question = frequent_pool[rng.randrange(len(frequent_pool))]
                kind = "frequent_question"
            else:
                if source_draw < 0.5 and not frequent_pool and not warned_empty_pool:
                    logger.warning(
                        "specificity negatives: no question occurs more than once, "
                        "falling back to the random-question source"
                    )
                    warned_empty_pool = True
                pool = [q for cid, q in all_questions if cid != conv.conv_id]
                if not pool:
                    pool = [
                        q
                        for cid, q in all_questions
                        if cid == conv.conv_id and q != pair.question
                    ]
                if not pool:
                    examples.append(
                        ClassifierExample(
                            conv_id=conv.conv_id,
                            turn_index=pair.turn_index,
                            history=history,
                            question=pair.question,
                            answer=None,
                            label="positive",
                        )
                    )
                    continue
                question = pool[rng.randrange(len(pool))]
                kind = "random_question"
            examples.append(
                ClassifierExample(
                    conv_id=conv.conv_id,
                    turn_index=pair.turn_index,
                    history=history,
                    question=question,
                    answer=None,
                    label="negative",
                    negative_kind=kind,
                )
            )
    return examples


def build_relevance_training_set(dataset: Dataset, seed: int = 0) -> list[ClassifierExample]:
    """Contrastive (history, question, answer) examples for a relevance scorer.

    Same stream discipline as the specificity constructor: per pair,
    rng.random() < 0.5 emits the positive; otherwise the answer is replaced
    by a uniformly random other-turn answer of the same conversation with
    different text (rng.randrange over that pool in turn order).  Pairs
    with no differing alternative fall back to positives; the fallback
    count is logged.
    """
    rng = random.Random(seed)
    fallbacks = 0
    examples: list[ClassifierExample] = []
    for conv in dataset.conversations:
        answers = [p.answer.text for p in conv.turns]
        for idx, pair in enumerate(conv.turns):
            history = _history_pairs(conv, pair.turn_index)
            if rng.random() < 0.5:
                examples.append(
                    ClassifierExample(
                        conv_id=conv.conv_id,
                        turn_index=pair.turn_index,
                        history=history,
                        question=pair.question,
                        answer=pair.answer.text,
                        label="positive",
                    )
                )
                continue
            pool = [a for j, a in enumerate(answers) if j != idx and a != answers[idx]]
            if not pool:
                fallbacks += 1
                examples.append(
                    ClassifierExample(
                        conv_id=conv.conv_id,
                        turn_index=pair.turn_index,
                        history=history,
                        question=pair.question,
                        answer=pair.answer.text,
                        label="positive",
                    )
                )
                continue
            examples.append(
                ClassifierExample(
                    conv_id=conv.conv_id,
                    turn_index=pair.turn_index,
                    history=history,
                    question=pair.question,
                    answer=pool[rng.randrange(len(pool))],
                    label="negative",
                    negative_kind="random_answer",
                )
            )
    if fallbacks:
        logger.info("relevance negatives: %d pairs had no alternative answer, kept as positives",
                    fallbacks)
    return examples


def write_classifier_examples(examples: Sequence[ClassifierExample], fp: IO[str]) -> None:
    import json

    for ex in examples:
        rec = {
            "conv_id": ex.conv_id,
            "t": ex.turn_index,
            "history": [{"q": q, "a": a} for q, a in ex.history],
            "question": ex.question,
            "answer": ex.answer,
            "label": ex.label,
            "negative_kind": ex.negative_kind,
        }
        fp.write(json.dumps(rec, sort_keys=True, ensure_ascii=False, separators=(",", ":")))
        fp.write("\n")
