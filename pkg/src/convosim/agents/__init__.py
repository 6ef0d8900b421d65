"""Agent invocation: prompt building, endpoints, scripted and remote calls."""

from __future__ import annotations

from ..corpus import CANNOTANSWER
from .core import (
    AgentEndpoint,
    AgentError,
    AgentOutput,
    AgentResponse,
    CandidateSet,
    ProtocolError,
    TransportError,
)
from .prompts import (
    GenerationConfig,
    PromptBundle,
    ROLE_CAE,
    ROLE_CAF,
    ROLE_CQG_ANSWER,
    ROLE_CQG_PRIOR,
    ROLES,
    build_answer_finder_input,
    build_answer_grounded_question_prompt,
    build_cae_input,
    build_prior_grounded_question_prompt,
)
from .scripted import SCRIPTED_AGENTS, get_scripted


def invoke(endpoint: AgentEndpoint, bundle: PromptBundle) -> AgentResponse:
    """Run one agent call and validate the response against the role.

    Generator and answerer roles must return at least one output; the
    extractor may legitimately return none.  Extractor outputs must carry
    span offsets (remote replies are checked at parse time, scripted ones
    here).
    """
    if endpoint.transport == "scripted":
        agent = get_scripted(endpoint.target)
        response = agent(bundle, endpoint.generation)
    else:
        from .remote import call_remote

        response = call_remote(endpoint, bundle)
    if bundle.role == ROLE_CAE:
        for i, output in enumerate(response.outputs):
            if output.start is None or output.start < 0:
                raise ProtocolError(f"extractor output {i} lacks a span offset")
    elif not response.outputs:
        raise ProtocolError(f"{bundle.role} agent returned no outputs")
    return response


__all__ = [
    "AgentEndpoint",
    "AgentError",
    "AgentOutput",
    "AgentResponse",
    "CANNOTANSWER",
    "CandidateSet",
    "GenerationConfig",
    "PromptBundle",
    "ProtocolError",
    "ROLES",
    "ROLE_CAE",
    "ROLE_CAF",
    "ROLE_CQG_ANSWER",
    "ROLE_CQG_PRIOR",
    "SCRIPTED_AGENTS",
    "TransportError",
    "build_answer_finder_input",
    "build_answer_grounded_question_prompt",
    "build_cae_input",
    "build_prior_grounded_question_prompt",
    "get_scripted",
    "invoke",
]
