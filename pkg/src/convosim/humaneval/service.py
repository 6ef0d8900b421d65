"""HTTP service for collecting pairwise judgments.

Routes:
  GET  /api/session/new          -> {"annotator_id": ...}
  GET  /api/tasks/next?annotator -> next unvoted task for that annotator,
                                    source tags stripped; {"done": true}
                                    when none remain
  POST /api/votes                -> {"task_id", "annotator_id",
                                    "choices": {criterion: "A"|"B" x4}};
                                    one submission per (task, annotator),
                                    duplicates answered idempotently
  GET  /api/report               -> aggregation over the current vote log

Votes append to a line-delimited log, flushed per submission under one
lock; restarting the service replays the log, so duplicate protection
survives crashes.  A static UI directory can be served alongside the API.
"""

from __future__ import annotations

import json
import logging
import mimetypes
import threading
import uuid
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Sequence
from urllib.parse import parse_qs, urlparse

from .protocol import (
    CHOICES,
    CRITERIA,
    ExclusionRules,
    JudgmentTask,
    Vote,
    new_vote,
    read_votes,
    report,
    vote_to_line,
)

logger = logging.getLogger(__name__)


class HumanEvalService:
    def __init__(
        self,
        tasks: Sequence[JudgmentTask],
        votes_path,
        *,
        host: str = "127.0.0.1",
        port: int = 0,
        ui_dir=None,
        seed: int = 0,
        n_samples: int = 100_000,
        significance: float = 0.1,
        panel_size: int = 5,
        rules: ExclusionRules = ExclusionRules(),
    ):
        if panel_size % 2 == 0 or panel_size < 1:
            raise ValueError(f"panel_size must be odd, got {panel_size}")
        self.tasks = list(tasks)
        self._by_id = {}
        for task in self.tasks:
            if task.task_id in self._by_id:
                raise ValueError(f"duplicate task_id {task.task_id!r}")
            self._by_id[task.task_id] = task
        self.votes_path = Path(votes_path)
        self.ui_dir = Path(ui_dir).resolve() if ui_dir else None
        self.seed = seed
        self.n_samples = n_samples
        self.significance = significance
        self.panel_size = panel_size
        self.rules = rules

        self._lock = threading.Lock()
        self._votes: list[Vote] = []
        self._submitted: set[tuple[str, str]] = set()
        if self.votes_path.exists():
            with open(self.votes_path, "r", encoding="utf-8") as fp:
                for vote in read_votes(fp):
                    self._votes.append(vote)
                    self._submitted.add((vote.task_id, vote.annotator_id))
            logger.info("replayed %d votes from %s", len(self._votes), self.votes_path)
        self._log = open(self.votes_path, "a", encoding="utf-8")

        self._server = _HTTPServer((host, port), self)
        self._thread: threading.Thread | None = None

    # -- state transitions ---------------------------------------------------

    def next_task_for(self, annotator_id: str) -> dict:
        with self._lock:
            submitted = set(self._submitted)
        pending = [t for t in self.tasks if (t.task_id, annotator_id) not in submitted]
        if not pending:
            return {"done": True, "task": None}
        payload = pending[0].annotator_payload()
        return {"done": False, "task": payload, "remaining": len(pending)}

    def record_votes(self, task_id: str, annotator_id: str, choices: dict) -> tuple[int, dict]:
        if task_id not in self._by_id:
            return 404, {"error": f"unknown task {task_id!r}"}
        if not annotator_id or not isinstance(annotator_id, str):
            return 400, {"error": "annotator_id required"}
        if not isinstance(choices, dict) or set(choices) != set(CRITERIA):
            return 400, {"error": f"choices must cover exactly the criteria {list(CRITERIA)}"}
        for criterion, choice in choices.items():
            if choice not in CHOICES:
                return 400, {"error": f"choice for {criterion!r} must be one of {list(CHOICES)}"}
        with self._lock:
            if (task_id, annotator_id) in self._submitted:
                return 200, {"recorded": False, "detail": "already recorded"}
            votes = [
                new_vote(task_id, annotator_id, criterion, choices[criterion])
                for criterion in CRITERIA
            ]
            for vote in votes:
                self._log.write(vote_to_line(vote))
                self._log.write("\n")
            self._log.flush()
            self._votes.extend(votes)
            self._submitted.add((task_id, annotator_id))
        return 200, {"recorded": True, "votes": len(CRITERIA)}

    def current_report(self) -> dict:
        with self._lock:
            snapshot = list(self._votes)
        return report(
            self.tasks,
            snapshot,
            rules=self.rules,
            seed=self.seed,
            n_samples=self.n_samples,
            significance=self.significance,
        ).to_dict()

    # -- lifecycle -----------------------------------------------------------

    @property
    def address(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "HumanEvalService":
        # tight poll so stop() returns promptly in test embeddings
        self._thread = threading.Thread(
            target=lambda: self._server.serve_forever(poll_interval=0.05), daemon=True
        )
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self._server.serve_forever()

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5.0)
            self._thread = None
        self._log.close()

    def __enter__(self) -> "HumanEvalService":
        return self.start()

    def __exit__(self, *exc_info) -> None:
        self.stop()


class _HTTPServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address, service: HumanEvalService):
        super().__init__(address, _Handler)
        self.service = service

    def handle_error(self, request, client_address):
        # client gone mid-request; not a server fault
        logger.debug("connection dropped by %s", client_address, exc_info=True)


class _Handler(BaseHTTPRequestHandler):
    server: _HTTPServer

    def log_message(self, fmt, *args):
        logger.debug("humaneval service: " + fmt, *args)

    def _send_json(self, status: int, payload: dict) -> None:
        body = json.dumps(payload, ensure_ascii=False).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def do_OPTIONS(self):
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.end_headers()

    def do_GET(self):
        parsed = urlparse(self.path)
        if parsed.path == "/api/session/new":
            self._send_json(200, {"annotator_id": uuid.uuid4().hex})
        elif parsed.path == "/api/tasks/next":
            params = parse_qs(parsed.query)
            annotator = params.get("annotator", [""])[0]
            if not annotator:
                self._send_json(400, {"error": "annotator query parameter required"})
                return
            self._send_json(200, self.server.service.next_task_for(annotator))
        elif parsed.path == "/api/report":
            self._send_json(200, self.server.service.current_report())
        elif parsed.path.startswith("/api/"):
            self._send_json(404, {"error": "not found"})
        else:
            self._serve_static(parsed.path)

    def do_POST(self):
        parsed = urlparse(self.path)
        if parsed.path != "/api/votes":
            self._send_json(404, {"error": "not found"})
            return
        length = int(self.headers.get("Content-Length", "0"))
        try:
            body = json.loads(self.rfile.read(length))
        except (ValueError, UnicodeDecodeError):
            self._send_json(400, {"error": "request body is not JSON"})
            return
        if not isinstance(body, dict):
            self._send_json(400, {"error": "request body must be a JSON object"})
            return
        status, payload = self.server.service.record_votes(
            str(body.get("task_id", "")),
            body.get("annotator_id", ""),
            body.get("choices"),
        )
        self._send_json(status, payload)

    def _serve_static(self, path: str) -> None:
        ui_dir = self.server.service.ui_dir
        if ui_dir is None:
            if path == "/":
                self._send_json(
                    200,
                    {
                        "service": "pairwise judgment collection",
                        "tasks": len(self.server.service.tasks),
                        "api": ["/api/session/new", "/api/tasks/next", "/api/votes", "/api/report"],
                    },
                )
            else:
                self._send_json(404, {"error": "not found"})
            return
        rel = path.lstrip("/") or "index.html"
        target = (ui_dir / rel).resolve()
        if ui_dir not in target.parents and target != ui_dir:
            self._send_json(404, {"error": "not found"})
            return
        if target.is_dir():
            target = target / "index.html"
        if not target.is_file():
            self._send_json(404, {"error": "not found"})
            return
        content_type = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
        data = target.read_bytes()
        self.send_response(200)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)
