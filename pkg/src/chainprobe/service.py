"""HTTP JSON API for annotation sessions, consumed by the browser UI.

A session bundles an eval sample set, an assignment plan, the chain texts,
and the instruction asset. Annotators work through their assigned chain
pairs one at a time; judgments are idempotent per (annotator, chain) and a
survey closes each annotator's part of the session. Generator model names
never appear in any payload.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from typing import Any

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import PlainTextResponse
from pydantic import BaseModel, Field

from .humaneval import (
    AnnotationRecord,
    AssignmentPlan,
    EvalSample,
    IncompleteJudgments,
    SurveyRecord,
    agreement_report,
    annotations_to_csv,
    surveys_to_csv,
)


def default_instructions() -> dict[str, Any]:
    raw = resources.files("chainprobe.templates").joinpath("annotation_instructions.json")
    return json.loads(raw.read_text("utf-8"))


class ChainView(BaseModel):
    chain_id: str
    events: list[str]


class InstructionsIn(BaseModel):
    text: str
    examples: list[list[str]] = Field(default_factory=list)


class SessionCreate(BaseModel):
    samples: list[dict[str, Any]]
    plan: dict[str, Any]
    chains: dict[str, ChainView]
    instructions: InstructionsIn | None = None


class JudgmentIn(BaseModel):
    annotator_id: str
    chain_id: str
    integrity_judgment: bool
    coherence_judgment: bool


class SurveyIn(BaseModel):
    annotator_id: str
    difficulty: int = Field(ge=1, le=5)
    can_construct_chain: bool
    comparison_note: str = ""


@dataclass
class SessionState:
    session_id: str
    samples: list[EvalSample]
    plan: AssignmentPlan
    chains: dict[str, ChainView]
    instructions: dict[str, Any]
    judgments: dict[tuple[str, str], AnnotationRecord] = field(default_factory=dict)
    surveys: dict[str, SurveyRecord] = field(default_factory=dict)

    def assigned_chain_ids(self, annotator_id: str) -> set[str]:
        assigned: set[str] = set()
        for item in self.plan.items_for(annotator_id):
            assigned.add(item.sample.maintained_chain_id)
            assigned.add(item.sample.violated_chain_id)
        return assigned

    def item_complete(self, annotator_id: str, item_id: str) -> bool:
        item = next(i for i in self.plan.items if i.item_id == item_id)
        return all(
            (annotator_id, cid) in self.judgments
            for cid in (item.sample.maintained_chain_id, item.sample.violated_chain_id)
        )

    def next_item(self, annotator_id: str):
        for item in self.plan.items_for(annotator_id):
            if not self.item_complete(annotator_id, item.item_id):
                return item
        return None

    def progress(self, annotator_id: str) -> tuple[int, int]:
        items = self.plan.items_for(annotator_id)
        done = sum(1 for item in items if self.item_complete(annotator_id, item.item_id))
        return done, len(items)

    def expected_records(self) -> int:
        return 2 * sum(len(item.annotators) for item in self.plan.items)


def _error(status_code: int, name: str, message: str) -> HTTPException:
    return HTTPException(status_code=status_code, detail={"error": name, "message": message})


def create_app() -> FastAPI:
    app = FastAPI(title="chainprobe annotation service")
    # The UI is served from a different origin than the API; annotator
    # tokens are opaque and no cookies are involved.
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    sessions: dict[str, SessionState] = {}
    lock = threading.Lock()

    def get_session(session_id: str) -> SessionState:
        session = sessions.get(session_id)
        if session is None:
            raise _error(404, "UnknownSession", f"session {session_id} does not exist")
        return session

    @app.get("/healthz")
    def healthz() -> dict[str, str]:
        return {"status": "ok"}

    @app.post("/sessions")
    def create_session(payload: SessionCreate) -> dict[str, Any]:
        plan = AssignmentPlan.from_dict(payload.plan)
        samples = [EvalSample.from_dict(s) for s in payload.samples]
        for item in plan.items:
            for chain_id in (item.sample.maintained_chain_id, item.sample.violated_chain_id):
                if chain_id not in payload.chains:
                    raise _error(422, "MissingChainText", f"no events supplied for chain {chain_id}")
        instructions = (
            payload.instructions.model_dump() if payload.instructions else default_instructions()
        )
        session_id = uuid.uuid4().hex[:12]
        with lock:
            sessions[session_id] = SessionState(
                session_id=session_id,
                samples=samples,
                plan=plan,
                chains=dict(payload.chains),
                instructions=instructions,
            )
        return {
            "session_id": session_id,
            "annotators": plan.annotators,
            "items_per_annotator": {a: len(plan.items_for(a)) for a in plan.annotators},
        }

    @app.get("/sessions/{session_id}/next-item")
    def next_item(session_id: str, annotator: str) -> dict[str, Any]:
        session = get_session(session_id)
        if not session.plan.items_for(annotator):
            raise _error(403, "NotAssigned", f"annotator {annotator} has no assignments")
        done, total = session.progress(annotator)
        item = session.next_item(annotator)
        body: dict[str, Any] = {
            "done": item is None,
            "progress": {"completed": done, "total": total},
            "instructions": session.instructions,
            "survey_submitted": annotator in session.surveys,
            "item": None,
        }
        if item is not None:
            chain_a_id, chain_b_id = item.ab_orders[annotator]
            body["item"] = {
                "item_id": item.item_id,
                "chain_a": session.chains[chain_a_id].model_dump(),
                "chain_b": session.chains[chain_b_id].model_dump(),
            }
        return body

    @app.post("/sessions/{session_id}/judgments")
    def submit_judgment(session_id: str, payload: JudgmentIn) -> dict[str, Any]:
        session = get_session(session_id)
        with lock:
            if payload.annotator_id in session.surveys:
                raise _error(
                    409,
                    "SessionClosed",
                    f"annotator {payload.annotator_id} already completed the session",
                )
            if payload.chain_id not in session.assigned_chain_ids(payload.annotator_id):
                raise _error(
                    403,
                    "NotAssigned",
                    f"chain {payload.chain_id} is not assigned to {payload.annotator_id}",
                )
            key = (payload.annotator_id, payload.chain_id)
            existing = session.judgments.get(key)
            if existing is not None:
                if (
                    existing.integrity_judgment == payload.integrity_judgment
                    and existing.coherence_judgment == payload.coherence_judgment
                ):
                    return {"status": "duplicate", "record": existing.to_dict()}
                raise _error(
                    409,
                    "DuplicateSubmission",
                    f"conflicting resubmission for chain {payload.chain_id}",
                )
            record = AnnotationRecord(
                session_id=session_id,
                annotator_id=payload.annotator_id,
                chain_id=payload.chain_id,
                integrity_judgment=payload.integrity_judgment,
                coherence_judgment=payload.coherence_judgment,
                submitted_at=datetime.now(timezone.utc).isoformat(),
            )
            session.judgments[key] = record
        return {"status": "stored", "record": record.to_dict()}

    @app.post("/sessions/{session_id}/survey")
    def submit_survey(session_id: str, payload: SurveyIn) -> dict[str, Any]:
        session = get_session(session_id)
        with lock:
            items = session.plan.items_for(payload.annotator_id)
            if not items:
                raise _error(403, "NotAssigned", f"annotator {payload.annotator_id} has no assignments")
            done, total = session.progress(payload.annotator_id)
            if done < total:
                raise _error(
                    409,
                    "SessionIncomplete",
                    f"{total - done} item(s) still unjudged for {payload.annotator_id}",
                )
            record = SurveyRecord(
                annotator_id=payload.annotator_id,
                difficulty=payload.difficulty,
                can_construct_chain=payload.can_construct_chain,
                comparison_note=payload.comparison_note,
            )
            session.surveys[payload.annotator_id] = record
        return {"status": "stored", "record": record.to_dict()}

    @app.get("/sessions/{session_id}/report")
    def report(session_id: str) -> dict[str, Any]:
        session = get_session(session_id)
        records = list(session.judgments.values())
        try:
            agreement = agreement_report(
                records, session.plan.chain_ids, session.plan.raters_per_chain
            )
        except IncompleteJudgments as exc:
            raise _error(409, "IncompleteJudgments", str(exc))
        surveys = list(session.surveys.values())
        survey_summary: dict[str, Any] = {"count": len(surveys)}
        if surveys:
            survey_summary["mean_difficulty"] = sum(s.difficulty for s in surveys) / len(surveys)
            survey_summary["can_construct_yes"] = sum(s.can_construct_chain for s in surveys)
        return {"agreement": agreement.to_dict(), "surveys": survey_summary}

    @app.get("/sessions/{session_id}/export/annotations.csv", response_class=PlainTextResponse)
    def export_annotations(session_id: str) -> str:
        session = get_session(session_id)
        records = sorted(
            session.judgments.values(), key=lambda r: (r.annotator_id, r.chain_id)
        )
        return annotations_to_csv(records)

    @app.get("/sessions/{session_id}/export/surveys.csv", response_class=PlainTextResponse)
    def export_surveys(session_id: str) -> str:
        session = get_session(session_id)
        records = sorted(session.surveys.values(), key=lambda r: r.annotator_id)
        return surveys_to_csv(records)

    def register_session(payload: dict[str, Any]) -> dict[str, Any]:
        """Create a session without going through HTTP (CLI startup preload)."""
        return create_session(SessionCreate(**payload))

    app.state.register_session = register_session
    return app


def load_session_payload(path: str | Path) -> dict[str, Any]:
    """Read a session-creation payload (samples, plan, chains, instructions)."""
    return json.loads(Path(path).read_text("utf-8"))
