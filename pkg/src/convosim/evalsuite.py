"""Downstream evaluation: answer F1/HEQ, extractor recall, retrieval
ranking metrics, and intrinsic n-gram overlap for generated questions.

Inputs arrive as plain mappings and line-oriented files so externally
produced predictions and rankings can be scored without touching the rest
of the package.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import IO, Iterable, Mapping, Sequence

from .corpus import CANNOTANSWER
from .textnorm import corpus_bleu_n, max_f1_over_refs, normalize_text

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CqaPrediction:
    question_id: str
    answer_text: str


@dataclass(frozen=True)
class CqaF1Result:
    score: float  # macro average, percent
    per_question: Mapping[str, float]  # per-question F1 in [0,1]
    missing: tuple[str, ...]  # gold ids with no prediction, scored 0


def cqa_f1(
    predictions: Mapping[str, str],
    references: Mapping[str, Sequence[str]],
) -> CqaF1Result:
    """Macro-averaged answer F1 against multi-reference gold.

    Per question: when every reference is the unanswerable marker, the
    prediction scores 1 iff it is the marker too; otherwise the score is
    the maximum token F1 over the non-marker references.  Questions without
    a prediction score 0 and are flagged.
    """
    if not references:
        raise ValueError("no gold references given")
    per_question: dict[str, float] = {}
    missing: list[str] = []
    for qid, refs in references.items():
        if not refs:
            raise ValueError(f"question {qid!r} has no references")
        if qid not in predictions:
            missing.append(qid)
            per_question[qid] = 0.0
            continue
        prediction = predictions[qid]
        span_refs = [r for r in refs if r != CANNOTANSWER]
        if not span_refs:
            per_question[qid] = 1.0 if prediction == CANNOTANSWER else 0.0
        else:
            per_question[qid] = max_f1_over_refs(prediction, span_refs)
    if missing:
        logger.warning("%d gold questions had no prediction and scored 0", len(missing))
    score = sum(per_question.values()) / len(per_question) * 100.0
    return CqaF1Result(score=score, per_question=per_question, missing=tuple(missing))


def heq(
    model_f1: Mapping[str, float],
    human_f1: Mapping[str, float],
    dialogues: Mapping[str, Sequence[str]],
) -> tuple[float, float]:
    """Percent of questions (HEQ-Q) and whole dialogues (HEQ-D) where the
    model's F1 reaches the human F1."""
    if set(model_f1) != set(human_f1):
        raise ValueError("model and human F1 maps cover different question ids")
    for did, qids in dialogues.items():
        for qid in qids:
            if qid not in model_f1:
                raise ValueError(f"dialogue {did!r} references unknown question {qid!r}")
    if not model_f1:
        raise ValueError("no questions to score")
    passed = {qid: model_f1[qid] >= human_f1[qid] for qid in model_f1}
    heq_q = sum(passed.values()) / len(passed) * 100.0
    if not dialogues:
        raise ValueError("no dialogues to score")
    full = [all(passed[qid] for qid in qids) for qids in dialogues.values()]
    heq_d = sum(full) / len(full) * 100.0
    return heq_q, heq_d


def cae_recall_at_k(
    candidate_sets: Sequence[Sequence[str]],
    gold_spans: Sequence[str],
    k: int,
) -> float:
    """Fraction of questions whose gold span, compared on normalized tokens,
    appears among the top k candidates."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if len(candidate_sets) != len(gold_spans):
        raise ValueError("candidate sets and gold spans must align")
    if not gold_spans:
        return 0.0
    hits = 0
    for candidates, gold in zip(candidate_sets, gold_spans):
        target = normalize_text(gold)
        if any(normalize_text(c) == target for c in candidates[:k]):
            hits += 1
    return hits / len(gold_spans)


def build_retrieval_query(questions: Sequence[str], max_len: int = 128) -> str:
    """Join the question history for retrieval, bounded by token budget.

    Questions are joined with "[SEP]".  When the whitespace-token length of
    the joined text exceeds max_len, middle questions are dropped oldest
    first; the first and the current question always survive.
    """
    if not questions:
        raise ValueError("at least one question required")
    kept = list(questions)

    def too_long() -> bool:
        return len(" [SEP] ".join(kept).split()) > max_len

    # Drop indices 1, 2, ... (oldest interior first); never 0 or the last.
    while len(kept) > 2 and too_long():
        kept.pop(1)
    return " [SEP] ".join(kept)


@dataclass(frozen=True)
class RankedRetrieval:
    query_id: str
    ranked: tuple[str, ...]
    gold: str

    def __post_init__(self):
        object.__setattr__(self, "ranked", tuple(self.ranked))
        if len(set(self.ranked)) != len(self.ranked):
            raise ValueError(f"query {self.query_id!r}: ranked ids must be unique")


def mrr(rankings: Sequence[RankedRetrieval]) -> float:
    """Mean reciprocal rank of the gold id; absent gold contributes 0."""
    if not rankings:
        raise ValueError("no rankings to score")
    total = 0.0
    for r in rankings:
        try:
            total += 1.0 / (r.ranked.index(r.gold) + 1)
        except ValueError:
            pass
    return total / len(rankings)


def recall_at_k(rankings: Sequence[RankedRetrieval], k: int) -> float:
    if not rankings:
        raise ValueError("no rankings to score")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    hits = sum(1 for r in rankings if r.gold in r.ranked[:k])
    return hits / len(rankings)


def intrinsic_bleu_eval(
    generated: Mapping[tuple[str, int], str],
    gold: Mapping[tuple[str, int], str],
    max_order: int = 4,
) -> tuple[float, ...]:
    """Corpus-level order-1..max_order overlap of generated questions
    against gold questions aligned by (conv_id, turn)."""
    missing_gen = sorted(set(gold) - set(generated))
    missing_gold = sorted(set(generated) - set(gold))
    if missing_gen or missing_gold:
        parts = []
        if missing_gen:
            parts.append(f"no generated question for {missing_gen[:5]}")
        if missing_gold:
            parts.append(f"no gold question for {missing_gold[:5]}")
        raise ValueError("generated/gold misaligned: " + "; ".join(parts))
    if not gold:
        raise ValueError("no aligned question pairs")
    keys = sorted(gold)
    pairs = [(generated[key], [gold[key]]) for key in keys]
    return tuple(corpus_bleu_n(pairs, n) for n in range(1, max_order + 1))


# ---------------------------------------------------------------------------
# Line-oriented file formats.
# ---------------------------------------------------------------------------


def read_prediction_file(fp: IO[str]) -> dict[str, str]:
    """Predictions: one "question_id<TAB>answer text" line each."""
    predictions: dict[str, str] = {}
    for line_no, line in enumerate(fp, start=1):
        line = line.rstrip("\n")
        if not line:
            continue
        if "\t" not in line:
            raise ValueError(f"prediction line {line_no}: expected 'id<TAB>answer', got {line!r}")
        qid, answer = line.split("\t", 1)
        if qid in predictions:
            raise ValueError(f"prediction line {line_no}: duplicate question id {qid!r}")
        predictions[qid] = answer
    return predictions


def read_reference_file(fp: IO[str]) -> tuple[dict[str, list[str]], dict[str, list[str]]]:
    """Gold references: JSON lines {"qid", "dialogue_id", "refs": [...]}.

    Returns (references by qid, question ids grouped by dialogue).
    """
    import json

    references: dict[str, list[str]] = {}
    dialogues: dict[str, list[str]] = {}
    for line_no, line in enumerate(fp, start=1):
        line = line.strip()
        if not line:
            continue
        rec = json.loads(line)
        for key in ("qid", "dialogue_id", "refs"):
            if key not in rec:
                raise ValueError(f"reference line {line_no}: missing {key!r}")
        qid = rec["qid"]
        if qid in references:
            raise ValueError(f"reference line {line_no}: duplicate qid {qid!r}")
        references[qid] = list(rec["refs"])
        dialogues.setdefault(rec["dialogue_id"], []).append(qid)
    return references, dialogues


def read_ranking_file(fp: IO[str]) -> list[RankedRetrieval]:
    """Rankings: one "query_id<TAB>id1,id2,...<TAB>gold_id" line each."""
    rankings = []
    for line_no, line in enumerate(fp, start=1):
        line = line.rstrip("\n")
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise ValueError(
                f"ranking line {line_no}: expected 'query<TAB>ranked<TAB>gold', got {line!r}"
            )
        query_id, ranked_str, gold = fields
        ranked = tuple(x for x in ranked_str.split(",") if x)
        rankings.append(RankedRetrieval(query_id=query_id, ranked=ranked, gold=gold))
    return rankings


def read_per_question_f1(fp: IO[str]) -> dict[str, float]:
    """Per-question F1 values: one "question_id<TAB>f1" line each."""
    values: dict[str, float] = {}
    for line_no, line in enumerate(fp, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            qid, value = line.split("\t")
            values[qid] = float(value)
        except ValueError:
            raise ValueError(f"f1 line {line_no}: expected 'id<TAB>f1', got {line!r}")
    return values
