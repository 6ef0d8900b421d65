"""Pairwise human evaluation: protocol, aggregation, and HTTP service."""

from __future__ import annotations

from .protocol import (
    CHOICES,
    CRITERIA,
    Candidate,
    EvalReport,
    ExclusionRules,
    JudgmentTask,
    ReportSection,
    Vote,
    bootstrap_test,
    create_tasks,
    format_report,
    majority,
    new_vote,
    read_tasks,
    read_votes,
    report,
    task_excluded,
    vote_to_line,
    write_tasks,
)
from .service import HumanEvalService

__all__ = [
    "CHOICES",
    "CRITERIA",
    "Candidate",
    "EvalReport",
    "ExclusionRules",
    "HumanEvalService",
    "JudgmentTask",
    "ReportSection",
    "Vote",
    "bootstrap_test",
    "create_tasks",
    "format_report",
    "majority",
    "new_vote",
    "read_tasks",
    "read_votes",
    "report",
    "task_excluded",
    "vote_to_line",
    "write_tasks",
]
