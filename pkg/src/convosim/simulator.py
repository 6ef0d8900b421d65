"""Conversation simulation: turn loops, batching, and roundtrip filtering.

Two pipelines build synthetic conversations over a document:

  sym: an extractor proposes answer candidates from the passage, one is
       chosen as the next target, and a questioner writes the question for
       it.  Both sides see the passage.
  asym: a questioner that sees only the document background asks, and an
       answerer that sees the passage replies with a span or declines.
       The questioner's ignorance of the passage is structural.

Both loops append turns until the turn cap, an early-stop condition, or an
agent failure ends the conversation.
"""

from __future__ import annotations

import datetime as _dt
import logging
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

from .agents import (
    AgentEndpoint,
    AgentError,
    CandidateSet,
    ProtocolError,
    ROLE_CAE,
    ROLE_CAF,
    ROLE_CQG_ANSWER,
    ROLE_CQG_PRIOR,
    build_answer_finder_input,
    build_answer_grounded_question_prompt,
    build_cae_input,
    build_prior_grounded_question_prompt,
    invoke,
)
from .corpus import CANNOTANSWER, AnswerSpan, Conversation, Dataset, Document, QAPair
from .textnorm import token_f1

logger = logging.getLogger(__name__)

MODES = ("sym", "asym")
CANDIDATE_POLICIES = ("top1", "top1-dedup", "uniform-random")


@dataclass(frozen=True)
class SimulationConfig:
    """Turn-loop parameters shared by both pipelines.

    unanswerable_budget, when set, stops a conversation once the cumulative
    count of unanswerable answers exceeds it; the turn that crossed the
    budget stays in the conversation.  candidate_policy picks among the
    extractor's top-k candidates (sym only).
    """

    mode: str
    max_turns: int = 6
    unanswerable_budget: int | None = None
    k: int = 10
    candidate_policy: str = "top1"
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.max_turns < 1:
            raise ValueError(f"max_turns must be >= 1, got {self.max_turns}")
        if self.unanswerable_budget is not None and self.unanswerable_budget < 0:
            raise ValueError("unanswerable_budget must be >= 0 when set")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.candidate_policy not in CANDIDATE_POLICIES:
            raise ValueError(
                f"candidate_policy must be one of {CANDIDATE_POLICIES}, "
                f"got {self.candidate_policy!r}"
            )


def semi_supervised_config(mode: str, **overrides) -> SimulationConfig:
    """Six turns, no early stop."""
    return SimulationConfig(mode=mode, max_turns=6, unanswerable_budget=None, **overrides)


def wiki_config(mode: str, **overrides) -> SimulationConfig:
    """Twelve turns, stop once more than three answers are unanswerable."""
    return SimulationConfig(mode=mode, max_turns=12, unanswerable_budget=3, **overrides)


PRESETS = {"semi": semi_supervised_config, "wiki": wiki_config}


def _doc_rng(config: SimulationConfig, doc_id: str) -> random.Random:
    # String seeding hashes with sha512 under the hood: stable across
    # platforms and runs, unlike hash().
    return random.Random(f"{config.seed}:{doc_id}")


def _extract_candidates(
    document: Document, endpoint: AgentEndpoint, prev_turn: QAPair | None,
    config: SimulationConfig, conv_id: str, turn_index: int,
) -> CandidateSet:
    bundle = build_cae_input(
        document.passage, prev_turn, turn_index=turn_index, conv_id=conv_id
    )
    response = invoke(endpoint, bundle)
    spans: list[AnswerSpan] = []
    scores: list[float] = []
    for output in response.outputs:
        if output.text == CANNOTANSWER:
            logger.warning("%s t=%d: extractor proposed the unanswerable marker, skipped",
                           conv_id, turn_index)
            continue
        span = AnswerSpan(text=output.text, start=output.start)
        if not span.verify_against(document.passage):
            logger.warning("%s t=%d: extractor span %r not at offset %d, skipped",
                           conv_id, turn_index, output.text, output.start)
            continue
        spans.append(span)
        scores.append(output.score)
    return CandidateSet.from_scored_spans(spans, scores, config.k)


def _pick_candidate(
    candidates: CandidateSet,
    policy: str,
    used: set[tuple[int, str]],
    rng: random.Random,
) -> AnswerSpan | None:
    if not candidates.spans:
        return None
    if policy == "top1":
        return candidates.spans[0]
    if policy == "top1-dedup":
        for span in candidates.spans:
            if (span.start, span.text) not in used:
                return span
        return None
    return rng.choice(list(candidates.spans))


def simulate_sym(
    document: Document,
    extractor: AgentEndpoint,
    questioner: AgentEndpoint,
    config: SimulationConfig,
    *,
    conv_id: str | None = None,
) -> Conversation:
    """Answer-first pipeline: extract a target span, then ask about it.

    Stops early when the extractor offers no usable candidate (or, under
    top1-dedup, no unused one); the partial conversation is returned.
    Answers are always spans, never unanswerable.
    """
    conv_id = conv_id or document.doc_id
    rng = _doc_rng(config, document.doc_id)
    used: set[tuple[int, str]] = set()
    history: list[QAPair] = []
    for t in range(1, config.max_turns + 1):
        prev = history[-1] if history else None
        candidates = _extract_candidates(document, extractor, prev, config, conv_id, t)
        target = _pick_candidate(candidates, config.candidate_policy, used, rng)
        if target is None:
            break
        used.add((target.start, target.text))
        bundle = build_answer_grounded_question_prompt(
            document.passage, history, target, conv_id=conv_id
        )
        question = invoke(questioner, bundle).text.strip()
        if not question:
            raise ProtocolError(f"{conv_id} t={t}: questioner returned an empty question")
        history.append(QAPair(turn_index=t, question=question, answer=target))
    return Conversation(conv_id=conv_id, document=document, turns=tuple(history))


def simulate_asym(
    document: Document,
    questioner: AgentEndpoint,
    answerer: AgentEndpoint,
    config: SimulationConfig,
    *,
    conv_id: str | None = None,
) -> Conversation:
    """Question-first pipeline under information asymmetry.

    The answerer's reply is either the unanswerable marker or text that
    must occur in the passage (located at its first occurrence); anything
    else is a protocol violation and aborts the conversation.
    """
    conv_id = conv_id or document.doc_id
    history: list[QAPair] = []
    unanswerable_seen = 0
    for t in range(1, config.max_turns + 1):
        q_bundle = build_prior_grounded_question_prompt(
            document.background, history, conv_id=conv_id
        )
        question = invoke(questioner, q_bundle).text.strip()
        if not question:
            raise ProtocolError(f"{conv_id} t={t}: questioner returned an empty question")
        a_bundle = build_answer_finder_input(
            question, document.passage, history, document.background, conv_id=conv_id
        )
        answer_text = invoke(answerer, a_bundle).text.strip()
        if answer_text == CANNOTANSWER:
            answer = AnswerSpan.unanswerable()
            unanswerable_seen += 1
        else:
            start = document.passage.find(answer_text)
            if start < 0:
                raise ProtocolError(
                    f"{conv_id} t={t}: answer {answer_text!r} does not occur in the passage"
                )
            answer = AnswerSpan(text=answer_text, start=start)
        history.append(QAPair(turn_index=t, question=question, answer=answer))
        if (
            config.unanswerable_budget is not None
            and unanswerable_seen > config.unanswerable_budget
        ):
            break
    return Conversation(conv_id=conv_id, document=document, turns=tuple(history))


def required_roles(mode: str) -> tuple[str, str]:
    return (ROLE_CAE, ROLE_CQG_ANSWER) if mode == "sym" else (ROLE_CQG_PRIOR, ROLE_CAF)


def simulate_conversation(
    document: Document,
    endpoints: Mapping[str, AgentEndpoint],
    config: SimulationConfig,
    *,
    conv_id: str | None = None,
) -> Conversation:
    for role in required_roles(config.mode):
        if role not in endpoints:
            raise ValueError(f"mode {config.mode!r} needs an endpoint for role {role!r}")
    if config.mode == "sym":
        return simulate_sym(
            document, endpoints[ROLE_CAE], endpoints[ROLE_CQG_ANSWER], config, conv_id=conv_id
        )
    return simulate_asym(
        document, endpoints[ROLE_CQG_PRIOR], endpoints[ROLE_CAF], config, conv_id=conv_id
    )


@dataclass(frozen=True)
class BatchError:
    doc_id: str
    message: str


@dataclass(frozen=True)
class BatchResult:
    dataset: Dataset
    attempted: int
    errors: tuple[BatchError, ...]

    @property
    def aborted(self) -> int:
        return len(self.errors)

    def turn_histogram(self) -> dict[int, int]:
        counts: dict[int, int] = {}
        for conv in self.dataset.conversations:
            counts[len(conv.turns)] = counts.get(len(conv.turns), 0) + 1
        return dict(sorted(counts.items()))


def run_batch(
    documents: Sequence[Document],
    endpoints: Mapping[str, AgentEndpoint],
    config: SimulationConfig,
    *,
    jobs: int = 1,
    dataset_name: str = "synthetic",
) -> BatchResult:
    """Simulate one conversation per document.

    Conversations are ordered by doc_id regardless of `jobs`, so a batch is
    deterministic under its seed whether or not it ran in parallel.  An
    AgentError aborts only its own document and is reported; other
    exceptions propagate.
    """
    seen: set[str] = set()
    for doc in documents:
        if doc.doc_id in seen:
            raise ValueError(f"duplicate doc_id {doc.doc_id!r} in batch input")
        seen.add(doc.doc_id)

    def one(doc: Document) -> Conversation | BatchError:
        try:
            return simulate_conversation(doc, endpoints, config)
        except AgentError as exc:
            logger.warning("document %s aborted: %s", doc.doc_id, exc)
            return BatchError(doc_id=doc.doc_id, message=str(exc))

    if jobs <= 1:
        results = [one(doc) for doc in documents]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, documents))

    conversations = sorted(
        (r for r in results if isinstance(r, Conversation)), key=lambda c: c.conv_id
    )
    errors = sorted(
        (r for r in results if isinstance(r, BatchError)), key=lambda e: e.doc_id
    )
    provenance = "synthetic-sym" if config.mode == "sym" else "synthetic-asym"
    dataset = Dataset(
        name=dataset_name, conversations=tuple(conversations), provenance=provenance
    )
    return BatchResult(dataset=dataset, attempted=len(documents), errors=tuple(errors))


def build_manifest(
    config: SimulationConfig,
    endpoints: Mapping[str, AgentEndpoint],
    result: BatchResult,
) -> dict:
    """Reproducibility record for a batch; created_at is the one
    deliberately non-deterministic field."""
    return {
        "config": {
            "mode": config.mode,
            "max_turns": config.max_turns,
            "unanswerable_budget": config.unanswerable_budget,
            "k": config.k,
            "candidate_policy": config.candidate_policy,
            "seed": config.seed,
        },
        "agents": {
            role: {
                "kind": ep.kind,
                "generation": ep.generation.to_payload(),
                "timeout": ep.timeout,
                "retries": ep.retries,
            }
            for role, ep in sorted(endpoints.items())
        },
        "counts": {
            "documents": result.attempted,
            "conversations": len(result.dataset),
            "aborted": result.aborted,
            "qa_pairs": result.dataset.n_pairs(),
        },
        "created_at": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }


# ---------------------------------------------------------------------------
# Roundtrip filtering.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FilterConfig:
    """f1_threshold: minimum answer-recovery F1 for a pair to pass.
    drop_below: when False, failing pairs stay in the kept dataset (audit
    mode) but still count as failures in the success rate."""

    f1_threshold: float = 0.5
    drop_below: bool = True

    def __post_init__(self):
        if not 0.0 <= self.f1_threshold <= 1.0:
            raise ValueError(f"f1_threshold must be in [0,1], got {self.f1_threshold}")


@dataclass(frozen=True)
class DroppedPair:
    conv_id: str
    turn_index: int
    reason: str  # "below_threshold" | "agent_error"
    f1: float | None


@dataclass(frozen=True)
class FilterResult:
    kept: Dataset
    dropped: tuple[DroppedPair, ...]
    success_rate: float
    total_pairs: int
    passing_pairs: int


def roundtrip_filter(
    dataset: Dataset,
    answerer: AgentEndpoint,
    config: FilterConfig = FilterConfig(),
) -> FilterResult:
    """Keep pairs whose predetermined answer an independent answerer recovers.

    For each pair the answerer sees the original preceding turns (never the
    filtered ones) and the current question; its prediction is compared to
    the predetermined answer by token F1.  Pairs at or above the threshold
    pass.  Kept conversations renumber their surviving turns from 1;
    conversations may end up empty but are retained.  Answerer failures
    drop the pair with reason "agent_error".

    Only answer-first synthetic data has predetermined extractor spans to
    check against, so any other provenance is rejected.
    """
    if dataset.provenance != "synthetic-sym":
        raise ValueError(
            "roundtrip filtering checks predetermined extractor answers; "
            f"dataset provenance must be 'synthetic-sym', got {dataset.provenance!r}"
        )
    total = 0
    passing = 0
    dropped: list[DroppedPair] = []
    kept_convs: list[Conversation] = []
    for conv in dataset.conversations:
        doc = conv.document
        new_turns: list[QAPair] = []
        for i, pair in enumerate(conv.turns):
            total += 1
            history = conv.turns[:i]
            bundle = build_answer_finder_input(
                pair.question, doc.passage, history, doc.background, conv_id=conv.conv_id
            )
            try:
                prediction = invoke(answerer, bundle).text.strip()
            except AgentError as exc:
                logger.warning("%s t=%d: filter answerer failed: %s",
                               conv.conv_id, pair.turn_index, exc)
                dropped.append(DroppedPair(conv.conv_id, pair.turn_index, "agent_error", None))
                continue
            f1 = token_f1(prediction, pair.answer.text)
            if f1 >= config.f1_threshold:
                passing += 1
                new_turns.append(replace(pair, turn_index=len(new_turns) + 1))
            elif config.drop_below:
                dropped.append(
                    DroppedPair(conv.conv_id, pair.turn_index, "below_threshold", f1)
                )
            else:
                new_turns.append(replace(pair, turn_index=len(new_turns) + 1))
        kept_convs.append(Conversation(conv.conv_id, doc, tuple(new_turns)))
    kept = Dataset(
        name=f"{dataset.name}-filtered",
        conversations=tuple(kept_convs),
        provenance="synthetic-sym",
    )
    success_rate = passing / total if total else 0.0
    return FilterResult(
        kept=kept,
        dropped=tuple(dropped),
        success_rate=success_rate,
        total_pairs=total,
        passing_pairs=passing,
    )


def format_filter_report(rows: Iterable[tuple[str, FilterResult]]) -> str:
    """Two-column success report: kept-pair count and success percentage.

    D̂ denotes the filtered dataset; the header names the surviving-pair
    count and the fraction of checked pairs that passed."""
    lines = [f"{'dataset':<28} {'#(D̂)':>10} {'%(Success)':>12}"]
    for name, result in rows:
        kept_pairs = result.kept.n_pairs()
        lines.append(f"{name:<28} {kept_pairs:>10d} {result.success_rate * 100:>12.1f}")
    return "\n".join(lines)
