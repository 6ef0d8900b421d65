"""Agent endpoints, responses, and the errors they can raise.

An `AgentEndpoint` names where a role's model lives: in-process behind a
scripted stand-in (kind "scripted:<name>") or behind an inference server
speaking the wire protocol (kind "remote:<url>").  Everything downstream of
`invoke` sees the same `AgentResponse` either way.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from ..corpus import AnswerSpan
from .prompts import GenerationConfig


class AgentError(Exception):
    """Base class for agent invocation failures."""


class TransportError(AgentError):
    """The agent could not be reached or refused the request."""


class ProtocolError(AgentError):
    """The agent replied, but the reply violates the exchange contract."""


@dataclass(frozen=True)
class AgentOutput:
    """One decoded hypothesis; extractors also carry a character offset."""

    text: str
    score: float
    start: int | None = None


@dataclass(frozen=True)
class AgentResponse:
    outputs: tuple[AgentOutput, ...]

    def __post_init__(self):
        object.__setattr__(self, "outputs", tuple(self.outputs))

    @property
    def text(self) -> str:
        """Text of the best output."""
        if not self.outputs:
            raise ProtocolError("agent returned no outputs")
        return self.outputs[0].text


@dataclass(frozen=True)
class CandidateSet:
    """Ranked answer candidates, truncated to the top k by score.

    Construction sorts stably by descending score, so ties keep the
    producer's order, then truncates.
    """

    spans: tuple[AnswerSpan, ...]
    scores: tuple[float, ...]
    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if len(self.spans) != len(self.scores):
            raise ValueError("spans and scores must align")
        if len(self.spans) > self.k:
            raise ValueError(f"candidate set holds {len(self.spans)} spans but k={self.k}")
        for earlier, later in zip(self.scores, self.scores[1:]):
            if later > earlier:
                raise ValueError("scores must be non-increasing")

    @classmethod
    def from_scored_spans(
        cls, spans: Sequence[AnswerSpan], scores: Sequence[float], k: int
    ) -> "CandidateSet":
        order = sorted(range(len(spans)), key=lambda i: -scores[i])[:k]
        return cls(
            spans=tuple(spans[i] for i in order),
            scores=tuple(scores[i] for i in order),
            k=k,
        )

    def __len__(self) -> int:
        return len(self.spans)

    def top(self) -> AnswerSpan | None:
        return self.spans[0] if self.spans else None


@dataclass(frozen=True)
class AgentEndpoint:
    """Where one role's agent runs, plus its decoding and transport knobs.

    kind is "scripted:<registry name>" or "remote:<base url>"; the base url
    is the server root, the wire path is appended by the client.
    """

    kind: str
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    timeout: float = 10.0
    retries: int = 2
    max_inflight: int = 4

    def __post_init__(self):
        transport, _, target = self.kind.partition(":")
        if transport not in ("scripted", "remote") or not target:
            raise ValueError(
                f"endpoint kind must be 'scripted:<name>' or 'remote:<url>', got {self.kind!r}"
            )
        if transport == "remote" and not target.startswith(("http://", "https://")):
            raise ValueError(f"remote endpoint needs an http(s) url, got {target!r}")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.retries < 0:
            raise ValueError("retries must be >= 0")
        if self.max_inflight < 1:
            raise ValueError("max_inflight must be >= 1")

    @property
    def transport(self) -> str:
        return self.kind.partition(":")[0]

    @property
    def target(self) -> str:
        return self.kind.partition(":")[2]
