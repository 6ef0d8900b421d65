"""Mock inference server speaking the agent wire protocol.

Serves the scripted agents over HTTP so the remote client path can be
exercised end to end without a model server.  Failure injection (status
codes, malformed bodies, latency) makes the retry and protocol-error paths
testable.  Also runnable standalone:

    python -m convosim.agents.mock_server --port 8100
"""

from __future__ import annotations

import argparse
import json
import logging
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Mapping

from .prompts import ROLE_CAE, ROLES, GenerationConfig, PromptBundle
from .scripted import get_scripted

logger = logging.getLogger(__name__)

DEFAULT_ROLE_AGENTS = {
    "cae": "span-extractor",
    "cqg_answer": "template-questioner",
    "cqg_prior": "prior-questioner",
    "caf": "lexical-answerer",
}


class _Handler(BaseHTTPRequestHandler):
    server: "_MockHTTPServer"

    def log_message(self, fmt, *args):
        logger.debug("mock server: " + fmt, *args)

    def _send_json(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        if self.path == "/healthz":
            self._send_json(200, {"ok": True})
        else:
            self._send_json(404, {"error": "not found"})

    def do_POST(self):
        if self.path != "/v1/generate":
            self._send_json(404, {"error": "not found"})
            return

        injected = self.server.next_injected_failure()
        if injected is not None:
            status, malformed = injected
            if malformed:
                body = b'{"outputs": '
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)
            else:
                self._send_json(status, {"error": "injected failure"})
            return

        if self.server.delay:
            time.sleep(self.server.delay)

        length = int(self.headers.get("Content-Length", "0"))
        try:
            payload = json.loads(self.rfile.read(length))
        except (ValueError, UnicodeDecodeError):
            self._send_json(400, {"error": "request body is not JSON"})
            return
        role = payload.get("role")
        prompt = payload.get("prompt")
        request_id = payload.get("request_id")
        if role not in ROLES or not isinstance(prompt, str) or not isinstance(request_id, str):
            self._send_json(400, {"error": "invalid role/prompt/request_id"})
            return
        try:
            generation = GenerationConfig.from_mapping(payload.get("generation") or {})
        except (TypeError, ValueError) as exc:
            self._send_json(400, {"error": f"invalid generation config: {exc}"})
            return

        agent = self.server.role_agents.get(role)
        if agent is None:
            self._send_json(400, {"error": f"no agent configured for role {role!r}"})
            return
        # The wire carries no turn metadata; scripted agents work off the
        # prompt text alone, so a placeholder index is fine here.
        bundle = PromptBundle(role=role, text=prompt, turn_index=1)
        response = agent(bundle, generation)

        outputs = []
        for output in response.outputs:
            item: dict = {"text": output.text, "score": output.score}
            if role == ROLE_CAE:
                item["start"] = output.start
            outputs.append(item)
        reply = {"request_id": request_id, "outputs": outputs}
        if role == ROLE_CAE:
            reply["k"] = len(outputs)
        self._send_json(200, reply)


class _MockHTTPServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address, role_agents, delay, failure_plan):
        super().__init__(address, _Handler)
        self.role_agents = role_agents
        self.delay = delay
        self._failure_plan = list(failure_plan)
        self._failure_lock = threading.Lock()

    def handle_error(self, request, client_address):
        # client gone mid-request (timeout tests do this); not a server fault
        logger.debug("connection dropped by %s", client_address, exc_info=True)

    def next_injected_failure(self):
        with self._failure_lock:
            if self._failure_plan:
                return self._failure_plan.pop(0)
        return None


class MockAgentServer:
    """Embeddable mock agent server bound to an ephemeral port by default.

    `fail_statuses` injects one HTTP status per entry for the first
    requests; `malformed_replies` injects that many truncated JSON bodies
    before the failure statuses are consumed.  `delay` sleeps before every
    normal reply to provoke client timeouts.
    """

    def __init__(
        self,
        host: str = "127.0.0.1",
        port: int = 0,
        *,
        agents: Mapping[str, str] | None = None,
        delay: float = 0.0,
        fail_statuses: tuple[int, ...] = (),
        malformed_replies: int = 0,
    ):
        role_agents = {
            role: get_scripted(name)
            for role, name in (agents or DEFAULT_ROLE_AGENTS).items()
        }
        failure_plan = [(200, True)] * malformed_replies + [
            (status, False) for status in fail_statuses
        ]
        self._server = _MockHTTPServer((host, port), role_agents, delay, failure_plan)
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "MockAgentServer":
        # tight poll so stop() returns promptly in test embeddings
        self._thread = threading.Thread(
            target=lambda: self._server.serve_forever(poll_interval=0.05), daemon=True
        )
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5.0)
            self._thread = None

    def __enter__(self) -> "MockAgentServer":
        return self.start()

    def __exit__(self, *exc_info) -> None:
        self.stop()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Serve scripted agents over the wire protocol")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8100)
    parser.add_argument("--delay", type=float, default=0.0, help="seconds to sleep per request")
    args = parser.parse_args(argv)

    server = MockAgentServer(args.host, args.port)
    print(f"mock agent server listening on {server.address}")
    try:
        server._server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server._server.server_close()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
