"""Conversation corpus model and serialization.

The unit of work everywhere else in this package is a `Dataset`: a named,
immutable collection of `Conversation`s, each grounded in exactly one
`Document`.  Datasets cross process boundaries as JSON-lines files in the
canonical record shape produced by `write_canonical` and accepted by
`read_canonical`; that byte format is a compatibility surface, so the field
set and key order are fixed here and nowhere else.
"""

from __future__ import annotations

import io
import json
import logging
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, Mapping, Sequence

logger = logging.getLogger(__name__)

CANNOTANSWER = "CANNOTANSWER"

PROVENANCES = ("human", "synthetic-sym", "synthetic-asym", "imported")


class CorpusFormatError(ValueError):
    """A serialized corpus file violates the canonical record schema."""

    def __init__(self, message: str, *, path: str | None = None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}: "
        if line is not None:
            where = f"{where}line {line}: "
        super().__init__(where + message)
        self.path = path
        self.line = line


@dataclass(frozen=True)
class BackgroundInfo:
    """What a questioner may see without reading the passage."""

    title: str
    section_title: str
    abstract: str


@dataclass(frozen=True)
class Document:
    doc_id: str
    background: BackgroundInfo
    passage: str
    word_count: int = field(init=False)

    def __post_init__(self):
        if not self.doc_id:
            raise ValueError("doc_id must be non-empty")
        if not self.passage:
            raise ValueError(f"document {self.doc_id!r} has an empty passage")
        # Whitespace token count; length filters elsewhere use this field.
        object.__setattr__(self, "word_count", len(self.passage.split()))


@dataclass(frozen=True)
class AnswerSpan:
    """An answer: either a passage span or the unanswerable marker.

    Invariant: unanswerable spans carry the literal CANNOTANSWER text and no
    offset; answerable spans carry a non-negative character offset into the
    passage they were extracted from.
    """

    text: str
    start: int | None
    is_unanswerable: bool = False

    def __post_init__(self):
        if self.is_unanswerable:
            if self.text != CANNOTANSWER:
                raise ValueError(
                    f"unanswerable span must carry {CANNOTANSWER!r}, got {self.text!r}"
                )
            if self.start is not None:
                raise ValueError("unanswerable span must not carry an offset")
        else:
            if not self.text:
                raise ValueError("answerable span must have non-empty text")
            if self.start is None or self.start < 0:
                raise ValueError(f"answerable span needs an offset >= 0, got {self.start!r}")

    @classmethod
    def unanswerable(cls) -> "AnswerSpan":
        return cls(CANNOTANSWER, None, True)

    def verify_against(self, passage: str) -> bool:
        """True when this span's text actually occurs at its offset."""
        if self.is_unanswerable:
            return True
        return passage[self.start : self.start + len(self.text)] == self.text


@dataclass(frozen=True)
class QAPair:
    turn_index: int
    question: str
    answer: AnswerSpan

    def __post_init__(self):
        if self.turn_index < 1:
            raise ValueError(f"turn_index must be >= 1, got {self.turn_index}")
        if not self.question:
            raise ValueError("question must be non-empty")


@dataclass(frozen=True)
class Conversation:
    conv_id: str
    document: Document
    turns: tuple[QAPair, ...]

    def __post_init__(self):
        if not self.conv_id:
            raise ValueError("conv_id must be non-empty")
        object.__setattr__(self, "turns", tuple(self.turns))
        for i, pair in enumerate(self.turns, start=1):
            if pair.turn_index != i:
                raise ValueError(
                    f"conversation {self.conv_id!r}: turn {i} is numbered {pair.turn_index}"
                )

    def history_before(self, turn_index: int) -> tuple[QAPair, ...]:
        """Turns strictly preceding `turn_index`."""
        return self.turns[: turn_index - 1]


@dataclass(frozen=True)
class Dataset:
    name: str
    conversations: tuple[Conversation, ...]
    provenance: str

    def __post_init__(self):
        object.__setattr__(self, "conversations", tuple(self.conversations))
        if self.provenance not in PROVENANCES:
            raise ValueError(
                f"provenance must be one of {PROVENANCES}, got {self.provenance!r}"
            )
        seen: set[str] = set()
        for conv in self.conversations:
            if conv.conv_id in seen:
                raise ValueError(f"duplicate conv_id {conv.conv_id!r} in dataset {self.name!r}")
            seen.add(conv.conv_id)

    def __len__(self) -> int:
        return len(self.conversations)

    def __iter__(self) -> Iterator[Conversation]:
        return iter(self.conversations)

    def n_pairs(self) -> int:
        return sum(len(c.turns) for c in self.conversations)


# ---------------------------------------------------------------------------
# Canonical JSON-lines serialization.
#
# One conversation per line:
#   {"conv_id": ..., "doc": {"doc_id", "title", "section_title", "abstract",
#    "passage"}, "turns": [{"t", "q", "a", "start", "unanswerable"}, ...]}
# word_count is derived and never serialized.  Keys are emitted sorted with
# compact separators so identical datasets produce identical bytes.
# ---------------------------------------------------------------------------


def _conversation_record(conv: Conversation) -> dict:
    doc = conv.document
    return {
        "conv_id": conv.conv_id,
        "doc": {
            "doc_id": doc.doc_id,
            "title": doc.background.title,
            "section_title": doc.background.section_title,
            "abstract": doc.background.abstract,
            "passage": doc.passage,
        },
        "turns": [
            {
                "t": pair.turn_index,
                "q": pair.question,
                "a": pair.answer.text,
                "start": pair.answer.start,
                "unanswerable": pair.answer.is_unanswerable,
            }
            for pair in conv.turns
        ],
    }


def _record_to_conversation(rec: Mapping, *, path: str | None, line: int) -> Conversation:
    def fail(msg: str):
        raise CorpusFormatError(msg, path=path, line=line)

    if not isinstance(rec, Mapping):
        fail("record is not a JSON object")
    for key in ("conv_id", "doc", "turns"):
        if key not in rec:
            fail(f"missing key {key!r}")
    doc_rec = rec["doc"]
    if not isinstance(doc_rec, Mapping):
        fail("'doc' is not a JSON object")
    for key in ("doc_id", "title", "section_title", "abstract", "passage"):
        if key not in doc_rec:
            fail(f"doc missing key {key!r}")
        if not isinstance(doc_rec[key], str):
            fail(f"doc field {key!r} must be a string")
    if not isinstance(rec["turns"], list):
        fail("'turns' is not a list")

    try:
        document = Document(
            doc_id=doc_rec["doc_id"],
            background=BackgroundInfo(
                title=doc_rec["title"],
                section_title=doc_rec["section_title"],
                abstract=doc_rec["abstract"],
            ),
            passage=doc_rec["passage"],
        )
        turns = []
        for turn_rec in rec["turns"]:
            if not isinstance(turn_rec, Mapping):
                fail("turn is not a JSON object")
            for key in ("t", "q", "a", "start", "unanswerable"):
                if key not in turn_rec:
                    fail(f"turn missing key {key!r}")
            answer = AnswerSpan(
                text=turn_rec["a"],
                start=turn_rec["start"],
                is_unanswerable=bool(turn_rec["unanswerable"]),
            )
            turns.append(QAPair(turn_index=turn_rec["t"], question=turn_rec["q"], answer=answer))
        return Conversation(conv_id=rec["conv_id"], document=document, turns=tuple(turns))
    except ValueError as exc:
        if isinstance(exc, CorpusFormatError):
            raise
        fail(str(exc))
    raise AssertionError("unreachable")


def write_canonical(dataset: Dataset, fp: IO[str]) -> None:
    for conv in dataset.conversations:
        fp.write(json.dumps(_conversation_record(conv), sort_keys=True, ensure_ascii=False,
                            separators=(",", ":")))
        fp.write("\n")


def read_canonical(
    fp: IO[str],
    *,
    name: str = "dataset",
    provenance: str = "imported",
    path: str | None = None,
) -> Dataset:
    """Parse a canonical JSON-lines stream.

    The line format carries no dataset-level metadata, so `name` and
    `provenance` are supplied by the caller (the CLI threads its flags
    through here).  Malformed lines raise CorpusFormatError with the
    offending line number.
    """
    conversations = []
    for line_no, line in enumerate(fp, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusFormatError(f"invalid JSON ({exc.msg})", path=path, line=line_no)
        conversations.append(_record_to_conversation(rec, path=path, line=line_no))
    return Dataset(name=name, conversations=tuple(conversations), provenance=provenance)


def save_canonical(dataset: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8") as fp:
        write_canonical(dataset, fp)


def load_canonical(path, *, name: str | None = None, provenance: str = "imported") -> Dataset:
    with open(path, "r", encoding="utf-8") as fp:
        return read_canonical(
            fp, name=name if name is not None else str(path), provenance=provenance, path=str(path)
        )


def canonical_bytes(dataset: Dataset) -> bytes:
    buf = io.StringIO()
    write_canonical(dataset, buf)
    return buf.getvalue().encode("utf-8")


# ---------------------------------------------------------------------------
# Document files: one document per line, same field names as the embedded
# "doc" object above.  Used to feed the simulator.
# ---------------------------------------------------------------------------


def write_documents(documents: Iterable[Document], fp: IO[str]) -> None:
    for doc in documents:
        rec = {
            "doc_id": doc.doc_id,
            "title": doc.background.title,
            "section_title": doc.background.section_title,
            "abstract": doc.background.abstract,
            "passage": doc.passage,
        }
        fp.write(json.dumps(rec, sort_keys=True, ensure_ascii=False, separators=(",", ":")))
        fp.write("\n")


def read_documents(fp: IO[str], *, path: str | None = None) -> list[Document]:
    documents = []
    for line_no, line in enumerate(fp, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusFormatError(f"invalid JSON ({exc.msg})", path=path, line=line_no)
        for key in ("doc_id", "title", "section_title", "abstract", "passage"):
            if key not in rec:
                raise CorpusFormatError(f"document missing key {key!r}", path=path, line=line_no)
        try:
            documents.append(
                Document(
                    doc_id=rec["doc_id"],
                    background=BackgroundInfo(rec["title"], rec["section_title"], rec["abstract"]),
                    passage=rec["passage"],
                )
            )
        except ValueError as exc:
            raise CorpusFormatError(str(exc), path=path, line=line_no)
    return documents


def filter_documents_by_length(
    documents: Iterable[Document], min_words: int | None = None, max_words: int | None = None
) -> list[Document]:
    """Keep documents whose whitespace word count lies in [min_words, max_words]."""
    kept = []
    for doc in documents:
        if min_words is not None and doc.word_count < min_words:
            continue
        if max_words is not None and doc.word_count > max_words:
            continue
        kept.append(doc)
    return kept


def dataset_documents(dataset: Dataset) -> list[Document]:
    """Unique documents of a dataset, first appearance order."""
    seen: set[str] = set()
    documents = []
    for conv in dataset.conversations:
        if conv.document.doc_id not in seen:
            seen.add(conv.document.doc_id)
            documents.append(conv.document)
    return documents


# ---------------------------------------------------------------------------
# Official-distribution import (QuAC-shaped JSON).
# ---------------------------------------------------------------------------


def import_quac(
    raw: Mapping,
    *,
    name: str = "quac",
    provenance: str = "human",
) -> Dataset:
    """Build a Dataset from a QuAC-format dict (the parsed official JSON).

    Passages are kept byte for byte as distributed, including the trailing
    unanswerable marker token.  Answer offsets are trusted but verified: a
    span whose text does not occur at its recorded offset is repaired to the
    first occurrence in the passage, and a span that does not occur at all
    becomes unanswerable.  Both repairs are logged.
    """
    if "data" not in raw or not isinstance(raw["data"], list):
        raise CorpusFormatError("expected top-level 'data' list")
    conversations = []
    for article in raw["data"]:
        title = article.get("title", "")
        section_title = article.get("section_title", "")
        background = article.get("background", "")
        for para in article.get("paragraphs", []):
            passage = para["context"]
            conv_id = para["id"]
            document = Document(
                doc_id=conv_id,
                background=BackgroundInfo(title, section_title, background),
                passage=passage,
            )
            turns = []
            for t, qa in enumerate(para.get("qas", []), start=1):
                question = qa["question"]
                orig = qa.get("orig_answer") or (qa["answers"][0] if qa.get("answers") else None)
                if orig is None:
                    raise CorpusFormatError(f"question {qa.get('id')!r} has no answer")
                answer = _repair_span(orig["text"], orig.get("answer_start"), passage,
                                      conv_id=conv_id, turn=t)
                turns.append(QAPair(turn_index=t, question=question, answer=answer))
            conversations.append(Conversation(conv_id=conv_id, document=document, turns=tuple(turns)))
    return Dataset(name=name, conversations=tuple(conversations), provenance=provenance)


def _repair_span(text: str, start, passage: str, *, conv_id: str, turn: int) -> AnswerSpan:
    if text == CANNOTANSWER:
        return AnswerSpan.unanswerable()
    if isinstance(start, int) and start >= 0 and passage[start : start + len(text)] == text:
        return AnswerSpan(text, start)
    found = passage.find(text)
    if found >= 0:
        logger.warning(
            "conversation %s turn %d: answer offset %r repaired to %d", conv_id, turn, start, found
        )
        return AnswerSpan(text, found)
    logger.warning(
        "conversation %s turn %d: answer text not in passage, marking unanswerable", conv_id, turn
    )
    return AnswerSpan.unanswerable()


def quac_references(raw: Mapping) -> list[dict]:
    """Per-question reference answers from a QuAC-format dict.

    Returns one record per question: {"qid", "dialogue_id", "refs"} where
    refs collects the distinct reference answer texts (original answer first,
    then additional annotations).  Used as gold input for answer scoring.
    """
    records = []
    for article in raw.get("data", []):
        for para in article.get("paragraphs", []):
            dialogue_id = para["id"]
            for qa in para.get("qas", []):
                refs: list[str] = []
                orig = qa.get("orig_answer")
                if orig:
                    refs.append(orig["text"])
                for extra in qa.get("answers", []):
                    if extra["text"] not in refs:
                        refs.append(extra["text"])
                records.append({"qid": qa["id"], "dialogue_id": dialogue_id, "refs": refs})
    return records


def split_dataset(dataset: Dataset, splits: Mapping[str, Iterable[str]]) -> dict[str, Dataset]:
    """Partition a dataset by conv_id into named splits.

    Every conv_id in `splits` must exist, no conv_id may appear in two
    splits, and conversations not mentioned anywhere are left out (the
    caller decides whether that is an error).
    """
    by_id = {conv.conv_id: conv for conv in dataset.conversations}
    assigned: dict[str, str] = {}
    out: dict[str, Dataset] = {}
    for split_name, ids in splits.items():
        members = []
        for conv_id in ids:
            if conv_id not in by_id:
                raise ValueError(f"split {split_name!r} references unknown conv_id {conv_id!r}")
            if conv_id in assigned:
                raise ValueError(
                    f"conv_id {conv_id!r} assigned to both {assigned[conv_id]!r} and {split_name!r}"
                )
            assigned[conv_id] = split_name
            members.append(by_id[conv_id])
        out[split_name] = Dataset(name=split_name, conversations=tuple(members),
                                  provenance=dataset.provenance)
    return out
