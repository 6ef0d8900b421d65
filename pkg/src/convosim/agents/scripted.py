"""Deterministic in-process stand-ins for the four agent roles.

Each scripted agent is a pure function of (prompt bundle, generation
config).  They parse the same flat prompt text a remote model would
receive; bundle metadata beyond the text is deliberately ignored so that
in-process and over-the-wire behavior cannot diverge.  They assume the
separator literals do not occur inside passages, which holds for test and
demo corpora.
"""

from __future__ import annotations

import re
from typing import Callable

from ..corpus import CANNOTANSWER
from ..textnorm import normalize
from .core import AgentError, AgentOutput, AgentResponse
from .prompts import MASK, SEP, SEP_SQ, GenerationConfig, PromptBundle

ScriptedAgent = Callable[[PromptBundle, GenerationConfig], AgentResponse]

_SENTENCE_CHUNK = re.compile(r"[^.!?]+")
_LEAD_ARTICLES = frozenset({"a", "an", "the"})
_LEAD_WORDS = 4


def _sentences_with_offsets(passage: str) -> list[tuple[int, str]]:
    """(start, text) for each sentence-ish chunk, terminators dropped."""
    out = []
    for match in _SENTENCE_CHUNK.finditer(passage):
        text = match.group()
        stripped = text.strip()
        if stripped:
            out.append((match.start() + text.index(stripped[0]), stripped))
    return out


def span_extractor(bundle: PromptBundle, generation: GenerationConfig) -> AgentResponse:
    """Candidate spans: each sentence's leading phrase, scored by position.

    The phrase is the first few words of the sentence with leading articles
    skipped, taken verbatim from the passage so offsets hold.  Scores fall
    as 1/(rank+1), so the set is already ordered.
    """
    passage = bundle.text.split(f" {SEP_SQ} ")[0]
    outputs = []
    for rank, (sent_start, sentence) in enumerate(_sentences_with_offsets(passage)):
        words = [(m.start(), m.group()) for m in re.finditer(r"\S+", sentence)]
        lead = words
        while lead and lead[0][1].lower() in _LEAD_ARTICLES:
            lead = lead[1:]
        if not lead:
            lead = words
        chosen = lead[:_LEAD_WORDS]
        first_off, _ = chosen[0]
        last_off, last_word = chosen[-1]
        phrase = sentence[first_off : last_off + len(last_word)]
        outputs.append(
            AgentOutput(text=phrase, score=1.0 / (rank + 1), start=sent_start + first_off)
        )
    return AgentResponse(outputs=tuple(outputs))


def template_questioner(bundle: PromptBundle, generation: GenerationConfig) -> AgentResponse:
    """Asks "What is <target>?" about the span marked in the prompt tail."""
    text = bundle.text
    tail = f" {SEP}"
    marker = f"{MASK} "
    pos = text.rfind(marker)
    if pos < 0 or not text.endswith(tail):
        raise AgentError("prompt does not carry a target slot")
    target = text[pos + len(marker) : len(text) - len(tail)]
    return AgentResponse(outputs=(AgentOutput(text=f"What is {target}?", score=1.0),))


def prior_questioner(bundle: PromptBundle, generation: GenerationConfig) -> AgentResponse:
    """Cycles two generic follow-ups, alternating by turn.

    The turn is recovered from the prompt alone: the background contributes
    three separator-delimited parts and each history turn two more, so with
    p parts the history holds (p - 3) // 2 turns.
    """
    parts = bundle.text.split(f" {SEP} ")
    turn = (len(parts) - 3) // 2 + 1
    question = "What happened next?" if turn % 2 == 1 else "Anything else?"
    return AgentResponse(outputs=(AgentOutput(text=question, score=1.0),))


def make_lexical_answerer(min_overlap: int = 1) -> ScriptedAgent:
    """Answerer that quotes the sentence sharing most tokens with the question.

    Overlap is counted on normalized token multisets.  When no sentence
    reaches `min_overlap` shared tokens the answer is the unanswerable
    marker.  Ties go to the earliest sentence.
    """

    def lexical_answerer(bundle: PromptBundle, generation: GenerationConfig) -> AgentResponse:
        segments = bundle.text.split(f" {SEP_SQ} ")
        if len(segments) < 2:
            raise AgentError("prompt lacks a query/passage split")
        passage = segments[-1]
        question = segments[-2]
        q_bag = normalize(question)
        best: tuple[int, str] | None = None
        best_overlap = -1
        for start, sentence in _sentences_with_offsets(passage):
            overlap = q_bag.overlap(normalize(sentence))
            if overlap > best_overlap:
                best_overlap = overlap
                best = (start, sentence)
        if best is None or best_overlap < min_overlap:
            return AgentResponse(outputs=(AgentOutput(text=CANNOTANSWER, score=0.0),))
        return AgentResponse(outputs=(AgentOutput(text=best[1], score=float(best_overlap)),))

    return lexical_answerer


def cannotanswer_agent(bundle: PromptBundle, generation: GenerationConfig) -> AgentResponse:
    """Declines every question; exercises unanswerable-budget handling."""
    return AgentResponse(outputs=(AgentOutput(text=CANNOTANSWER, score=0.0),))


SCRIPTED_AGENTS: dict[str, ScriptedAgent] = {
    "span-extractor": span_extractor,
    "template-questioner": template_questioner,
    "prior-questioner": prior_questioner,
    "lexical-answerer": make_lexical_answerer(),
    "cannotanswer": cannotanswer_agent,
}


def get_scripted(name: str) -> ScriptedAgent:
    try:
        return SCRIPTED_AGENTS[name]
    except KeyError:
        known = ", ".join(sorted(SCRIPTED_AGENTS))
        raise ValueError(f"unknown scripted agent {name!r}; known: {known}") from None
