"""Input representations for the four agent roles.

Each builder flattens structured state (passage, background, history, target
span) into the single text field an agent consumes, using the role's fixed
separator vocabulary.  Builders are pure: same inputs, same bytes.  The
exact concatenation orders are part of the trained-model contract and are
pinned by tests; change them and remote agents will silently degrade.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from ..corpus import AnswerSpan, BackgroundInfo, QAPair

SEP = "<sep>"
MASK = "<mask>"
HL = "<hl>"
SEP_SQ = "[SEP]"

ROLE_CAE = "cae"
ROLE_CQG_ANSWER = "cqg_answer"
ROLE_CQG_PRIOR = "cqg_prior"
ROLE_CAF = "caf"

ROLES = (ROLE_CAE, ROLE_CQG_ANSWER, ROLE_CQG_PRIOR, ROLE_CAF)


@dataclass(frozen=True)
class GenerationConfig:
    """Decoding knobs forwarded verbatim to generation agents."""

    beam_size: int = 5
    top_p: float = 0.98
    temperature: float = 1.2
    max_new_tokens: int = 64

    def __post_init__(self):
        if self.beam_size < 1:
            raise ValueError(f"beam_size must be >= 1, got {self.beam_size}")
        if not 0.0 < self.top_p <= 1.0:
            raise ValueError(f"top_p must be in (0, 1], got {self.top_p}")
        if self.temperature <= 0.0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")
        if self.max_new_tokens < 1:
            raise ValueError(f"max_new_tokens must be >= 1, got {self.max_new_tokens}")

    def to_payload(self) -> dict:
        return {
            "beam_size": self.beam_size,
            "top_p": self.top_p,
            "temperature": self.temperature,
            "max_new_tokens": self.max_new_tokens,
        }

    @classmethod
    def from_mapping(cls, data: Mapping) -> "GenerationConfig":
        kwargs = {}
        for key in ("beam_size", "top_p", "temperature", "max_new_tokens"):
            if key in data:
                kwargs[key] = data[key]
        return cls(**kwargs)


@dataclass(frozen=True)
class PromptBundle:
    """One agent invocation's input: role tag, flat text, turn coordinates."""

    role: str
    text: str
    turn_index: int
    conv_id: str = ""

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}, expected one of {ROLES}")
        if self.turn_index < 1:
            raise ValueError(f"turn_index must be >= 1, got {self.turn_index}")


def _history_block(history: Sequence[QAPair]) -> str:
    """q1 <sep> a1 <sep> q2 <sep> a2 ... with <sep> between pairs too."""
    parts = []
    for pair in history:
        parts.append(f"{pair.question} {SEP} {pair.answer.text}")
    return f" {SEP} ".join(parts)


def build_cae_input(
    passage: str,
    prev_turn: QAPair | None,
    *,
    turn_index: int,
    conv_id: str = "",
) -> PromptBundle:
    """Extractor input: the passage, then the immediately preceding exchange.

    First turn: the passage alone.  Later turns:
    "passage [SEP] q_prev [SEP] a_prev"; an unanswerable previous answer
    appears as its literal marker text.
    """
    if prev_turn is None:
        text = passage
    else:
        text = f"{passage} {SEP_SQ} {prev_turn.question} {SEP_SQ} {prev_turn.answer.text}"
    return PromptBundle(role=ROLE_CAE, text=text, turn_index=turn_index, conv_id=conv_id)


def highlight_span(passage: str, target: AnswerSpan) -> str:
    """Wrap the target occurrence, located by its offset, in highlight tags."""
    if target.is_unanswerable:
        raise ValueError("cannot highlight an unanswerable span")
    start, end = target.start, target.start + len(target.text)
    if passage[start:end] != target.text:
        raise ValueError(
            f"target text {target.text!r} not found at offset {target.start} of the passage"
        )
    return f"{passage[:start]}{HL} {target.text} {HL}{passage[end:]}"


def build_answer_grounded_question_prompt(
    passage: str,
    history: Sequence[QAPair],
    target: AnswerSpan,
    *,
    conv_id: str = "",
) -> PromptBundle:
    """Questioner input when the next answer is already chosen.

    The target span is highlighted in place, the history follows the
    passage, and the prompt ends with "<mask> target <sep>" so the model
    fills the question slot:

      no history:  "P* <sep> <mask> a_t <sep>"
      k turns:     "P* <sep> q1 <sep> a1 [<sep> ...] <mask> a_t <sep>"
    """
    marked = highlight_span(passage, target)
    if history:
        text = f"{marked} {SEP} {_history_block(history)} {MASK} {target.text} {SEP}"
    else:
        text = f"{marked} {SEP} {MASK} {target.text} {SEP}"
    return PromptBundle(
        role=ROLE_CQG_ANSWER, text=text, turn_index=len(history) + 1, conv_id=conv_id
    )


def build_prior_grounded_question_prompt(
    background: BackgroundInfo,
    history: Sequence[QAPair],
    *,
    conv_id: str = "",
) -> PromptBundle:
    """Questioner input from background knowledge only.

    The passage never enters this prompt; the asymmetry between questioner
    and answerer is structural, not a decoding choice.  Empty background
    fields are emitted verbatim.

      no history:  "title <sep> section_title <sep> abstract <sep> <mask>"
      k turns:     "... abstract <sep> q1 <sep> a1 [<sep> ...] <mask>"
    """
    prior = f"{background.title} {SEP} {background.section_title} {SEP} {background.abstract}"
    if history:
        text = f"{prior} {SEP} {_history_block(history)} {MASK}"
    else:
        text = f"{prior} {SEP} {MASK}"
    return PromptBundle(
        role=ROLE_CQG_PRIOR, text=text, turn_index=len(history) + 1, conv_id=conv_id
    )


def build_answer_finder_input(
    question: str,
    passage: str,
    history: Sequence[QAPair],
    background: BackgroundInfo,
    *,
    conv_id: str = "",
) -> PromptBundle:
    """Answerer input: a query block followed by the passage.

    The query concatenates title, section title, the full history as
    alternating question/answer segments, and the current question; the
    passage is appended as the final segment.  Consumers may rely on the
    passage being last and the current question second to last.
    """
    segments = [background.title, background.section_title]
    for pair in history:
        segments.append(pair.question)
        segments.append(pair.answer.text)
    segments.append(question)
    query = f" {SEP_SQ} ".join(segments)
    text = f"{query} {SEP_SQ} {passage}"
    return PromptBundle(role=ROLE_CAF, text=text, turn_index=len(history) + 1, conv_id=conv_id)
