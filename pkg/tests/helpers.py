"""Fixture builders shared across the test suite."""

from __future__ import annotations

import random

from convosim.corpus import (
    AnswerSpan,
    BackgroundInfo,
    CANNOTANSWER,
    Conversation,
    Dataset,
    Document,
    QAPair,
)

DEFAULT_PASSAGE = (
    "Ella Reed founded the observatory in 1902. The main telescope weighs "
    "four tons. Night tours run every summer weekend. Funding came from a "
    "local shipping fortune."
)


def make_document(
    doc_id: str = "doc-0",
    passage: str = DEFAULT_PASSAGE,
    title: str = "Ella Reed",
    section_title: str = "Observatory",
    abstract: str = "Ella Reed was an astronomer and philanthropist.",
) -> Document:
    return Document(
        doc_id=doc_id,
        background=BackgroundInfo(title=title, section_title=section_title, abstract=abstract),
        passage=passage,
    )


def span_in(passage: str, text: str) -> AnswerSpan:
    start = passage.index(text)
    return AnswerSpan(text=text, start=start)


def make_conversation(
    conv_id: str,
    document: Document,
    qa: list[tuple[str, str | None]],
) -> Conversation:
    """qa: (question, answer text) pairs; answer None or CANNOTANSWER means
    unanswerable, otherwise the text must occur in the passage."""
    turns = []
    for t, (question, answer) in enumerate(qa, start=1):
        if answer is None or answer == CANNOTANSWER:
            span = AnswerSpan.unanswerable()
        else:
            span = span_in(document.passage, answer)
        turns.append(QAPair(turn_index=t, question=question, answer=span))
    return Conversation(conv_id=conv_id, document=document, turns=tuple(turns))


def make_dataset(
    name: str,
    conversations,
    provenance: str = "human",
) -> Dataset:
    return Dataset(name=name, conversations=tuple(conversations), provenance=provenance)


_VOCAB = (
    "comet glass harbor lantern meadow onyx pepper quartz ribbon saddle "
    "timber velvet walnut yarn zephyr anchor bridge copper drizzle ember"
).split()


def random_words(rng: random.Random, lo: int = 1, hi: int = 6) -> str:
    return " ".join(rng.choice(_VOCAB) for _ in range(rng.randint(lo, hi)))


def random_conversation(rng: random.Random, conv_id: str, n_turns: int) -> Conversation:
    """Conversation with vocabulary-word answers embedded in a generated
    passage, plus occasional unanswerable turns."""
    answers = []
    for _ in range(n_turns):
        if rng.random() < 0.2:
            answers.append(None)
        else:
            answers.append(random_words(rng, 1, 4))
    passage_parts = [a for a in answers if a is not None]
    passage_parts.append(random_words(rng, 3, 8))
    passage = ". ".join(passage_parts) + "."
    doc = make_document(doc_id=f"doc-{conv_id}", passage=passage)
    qa = []
    for i, answer in enumerate(answers):
        question = random_words(rng, 2, 6) + "?"
        qa.append((question, answer))
    return make_conversation(conv_id, doc, qa)


def random_dataset(rng: random.Random, n_convs: int, name: str = "rand",
                   provenance: str = "human") -> Dataset:
    convs = [
        random_conversation(rng, f"c{i:03d}", rng.randint(1, 6)) for i in range(n_convs)
    ]
    return make_dataset(name, convs, provenance=provenance)
