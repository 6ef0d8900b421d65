"""HTTP client side of the inference wire protocol.

POST {base}/v1/generate with
  {"role", "prompt", "generation": {beam_size, top_p, temperature,
   max_new_tokens}, "request_id"}
and expect
  {"request_id", "outputs": [{"text", "score"[, "start"]}], ...}.

Transient failures (connection refused, timeouts, 5xx) are retried with
exponential backoff up to the endpoint's retry budget; other non-2xx
statuses and malformed replies fail immediately.  Concurrent requests per
endpoint address are bounded by a shared semaphore.
"""

from __future__ import annotations

import logging
import threading
import time
import uuid

import requests

from .core import AgentEndpoint, AgentOutput, AgentResponse, ProtocolError, TransportError
from .prompts import ROLE_CAE, PromptBundle

logger = logging.getLogger(__name__)

WIRE_PATH = "/v1/generate"

_BACKOFF_BASE = 0.05

_semaphores: dict[tuple[str, int], threading.BoundedSemaphore] = {}
_semaphores_lock = threading.Lock()


def _inflight_gate(endpoint: AgentEndpoint) -> threading.BoundedSemaphore:
    key = (endpoint.target, endpoint.max_inflight)
    with _semaphores_lock:
        gate = _semaphores.get(key)
        if gate is None:
            gate = _semaphores[key] = threading.BoundedSemaphore(endpoint.max_inflight)
        return gate


def call_remote(endpoint: AgentEndpoint, bundle: PromptBundle) -> AgentResponse:
    url = endpoint.target.rstrip("/") + WIRE_PATH
    request_id = uuid.uuid4().hex
    payload = {
        "role": bundle.role,
        "prompt": bundle.text,
        "generation": endpoint.generation.to_payload(),
        "request_id": request_id,
    }
    gate = _inflight_gate(endpoint)
    last_failure: TransportError | None = None
    for attempt in range(endpoint.retries + 1):
        if attempt:
            time.sleep(_BACKOFF_BASE * (2 ** (attempt - 1)))
        try:
            with gate:
                reply = requests.post(url, json=payload, timeout=endpoint.timeout)
        except requests.RequestException as exc:
            last_failure = TransportError(f"{url}: {exc}")
            logger.debug("attempt %d failed: %s", attempt + 1, exc)
            continue
        if reply.status_code >= 500:
            last_failure = TransportError(f"{url}: HTTP {reply.status_code}")
            continue
        if not 200 <= reply.status_code < 300:
            # Client-side errors are not transient; surfacing beats retrying.
            raise TransportError(f"{url}: HTTP {reply.status_code}")
        return _parse_reply(reply, request_id, bundle.role, url)
    assert last_failure is not None
    raise last_failure


def _parse_reply(reply, request_id: str, role: str, url: str) -> AgentResponse:
    try:
        body = reply.json()
    except ValueError:
        raise ProtocolError(f"{url}: reply is not JSON") from None
    if not isinstance(body, dict):
        raise ProtocolError(f"{url}: reply is not a JSON object")
    if body.get("request_id") != request_id:
        raise ProtocolError(
            f"{url}: request_id mismatch (sent {request_id!r}, got {body.get('request_id')!r})"
        )
    raw_outputs = body.get("outputs")
    if not isinstance(raw_outputs, list):
        raise ProtocolError(f"{url}: reply lacks an outputs list")
    outputs = []
    for i, item in enumerate(raw_outputs):
        if not isinstance(item, dict) or not isinstance(item.get("text"), str):
            raise ProtocolError(f"{url}: output {i} lacks a text field")
        score = item.get("score")
        if not isinstance(score, (int, float)) or isinstance(score, bool):
            raise ProtocolError(f"{url}: output {i} lacks a numeric score")
        start = None
        if role == ROLE_CAE:
            start = item.get("start")
            if not isinstance(start, int) or isinstance(start, bool) or start < 0:
                raise ProtocolError(f"{url}: extractor output {i} lacks a valid start offset")
        return_item = AgentOutput(text=item["text"], score=float(score), start=start)
        outputs.append(return_item)
    return AgentResponse(outputs=tuple(outputs))
