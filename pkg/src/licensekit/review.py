"""Timed human review workflow with optional model assistance.

Reviewers work through a fixed license queue in one of two groups: Manual
(no assistance offered) or Assisted (a model verdict and rationale can be
requested per license). Decisions are append-only; duration is computed
server-side from the reviewer-reported start/end timestamps, which must be
ISO-8601 UTC and may not run ahead of server receipt by more than a small
skew allowance. A session summary reduces to prediction agreement against
the corpus ground truth plus the mean seconds per decision.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from types import SimpleNamespace
from typing import Mapping, Sequence

from fastapi import FastAPI, HTTPException, Request
from pydantic import BaseModel

from .corpus import Label, LicenseRecord
from .metrics import Ruleset, Verdict, extract_verdict, prediction_agreement
from .modelgate import GateError, ModelEndpointConfig, TransportError
from .prompts import TemplatePack, render

#: Reviewer-supplied end timestamps may lead server receipt by at most this.
CLOCK_SKEW_ALLOWANCE_S = 5.0


class ReviewGroup(Enum):
    MANUAL = "manual"
    ASSISTED = "assisted"


class ReviewError(ValueError):
    pass


class UnknownResourceError(ReviewError):
    pass


class ConflictError(ReviewError):
    pass


@dataclass(frozen=True)
class ReviewDecision:
    session_id: str
    license_id: str
    verdict: Label
    started_at: str
    ended_at: str
    duration_s: float
    assist_shown: bool
    assist_verdict: Verdict | None = None

    def to_dict(self) -> dict:
        out = {
            "session_id": self.session_id,
            "license_id": self.license_id,
            "verdict": self.verdict.value,
            "started_at": self.started_at,
            "ended_at": self.ended_at,
            "duration_s": self.duration_s,
            "assist_shown": self.assist_shown,
        }
        if self.assist_verdict is not None:
            out["assist_verdict"] = self.assist_verdict.value
        return out


@dataclass
class ReviewSession:
    session_id: str
    reviewer_id: str
    group: ReviewGroup
    created_at: str
    license_queue: tuple[str, ...]
    decisions: dict[str, ReviewDecision] = field(default_factory=dict)


def _parse_ts(value: str, name: str) -> datetime:
    try:
        ts = datetime.fromisoformat(value.replace("Z", "+00:00"))
    except (ValueError, AttributeError):
        raise ReviewError(f"{name} is not an ISO-8601 timestamp: {value!r}")
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts


def _now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass(frozen=True)
class AssistPayload:
    verdict: Verdict
    rationale_text: str
    latency_s: float

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "rationale_text": self.rationale_text,
            "latency_s": self.latency_s,
        }


class ReviewService:
    """State and rules of the review workflow, independent of HTTP."""

    def __init__(
        self,
        records: Sequence[LicenseRecord],
        store_dir: str | Path,
        *,
        backend=None,
        registry: Mapping[str, ModelEndpointConfig] | None = None,
        pack: TemplatePack | None = None,
        ruleset: Ruleset | None = None,
    ) -> None:
        self._records = {rec.id: rec for rec in records}
        self._store_dir = Path(store_dir)
        self._store_dir.mkdir(parents=True, exist_ok=True)
        self._backend = backend
        self._registry = registry or {}
        self._pack = pack
        self._ruleset = ruleset
        self._sessions: dict[str, ReviewSession] = {}
        self._assist_cache: dict[str, AssistPayload] = {}
        self._lock = threading.Lock()
        self._load_store()

    # -- persistence ------------------------------------------------------

    @property
    def _sessions_path(self) -> Path:
        return self._store_dir / "sessions.jsonl"

    @property
    def _decisions_path(self) -> Path:
        return self._store_dir / "decisions.jsonl"

    def _load_store(self) -> None:
        if self._sessions_path.exists():
            with self._sessions_path.open("r", encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    obj = json.loads(line)
                    session = ReviewSession(
                        session_id=obj["session_id"],
                        reviewer_id=obj["reviewer_id"],
                        group=ReviewGroup(obj["group"]),
                        created_at=obj["created_at"],
                        license_queue=tuple(obj["license_queue"]),
                    )
                    self._sessions[session.session_id] = session
        if self._decisions_path.exists():
            with self._decisions_path.open("r", encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    obj = json.loads(line)
                    decision = ReviewDecision(
                        session_id=obj["session_id"],
                        license_id=obj["license_id"],
                        verdict=Label(obj["verdict"]),
                        started_at=obj["started_at"],
                        ended_at=obj["ended_at"],
                        duration_s=float(obj["duration_s"]),
                        assist_shown=bool(obj["assist_shown"]),
                        assist_verdict=Verdict(obj["assist_verdict"]) if obj.get("assist_verdict") else None,
                    )
                    session = self._sessions.get(decision.session_id)
                    if session is not None:
                        session.decisions[decision.license_id] = decision

    def _append(self, path: Path, obj: dict) -> None:
        with path.open("a", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")

    # -- sessions ---------------------------------------------------------

    def create_session(self, reviewer_id: str, group: str, license_ids: Sequence[str]) -> ReviewSession:
        if not license_ids:
            raise ReviewError("license queue must not be empty")
        if len(set(license_ids)) != len(license_ids):
            raise ReviewError("license queue contains duplicates")
        unknown = [lid for lid in license_ids if lid not in self._records]
        if unknown:
            raise UnknownResourceError(f"unknown license ids: {', '.join(unknown)}")
        try:
            group_value = ReviewGroup(group)
        except ValueError:
            raise ReviewError(f"group must be 'manual' or 'assisted', got {group!r}")
        with self._lock:
            session = ReviewSession(
                session_id="s" + uuid.uuid4().hex[:12],
                reviewer_id=reviewer_id,
                group=group_value,
                created_at=_now_iso(),
                license_queue=tuple(license_ids),
            )
            self._sessions[session.session_id] = session
            self._append(
                self._sessions_path,
                {
                    "session_id": session.session_id,
                    "reviewer_id": session.reviewer_id,
                    "group": session.group.value,
                    "created_at": session.created_at,
                    "license_queue": list(session.license_queue),
                },
            )
        return session

    def _session(self, session_id: str) -> ReviewSession:
        session = self._sessions.get(session_id)
        if session is None:
            raise UnknownResourceError(f"unknown session {session_id!r}")
        return session

    def next_license(self, session_id: str) -> LicenseRecord | None:
        session = self._session(session_id)
        for lid in session.license_queue:
            if lid not in session.decisions:
                return self._records[lid]
        return None

    def progress(self, session_id: str) -> tuple[int, int]:
        session = self._session(session_id)
        return len(session.decisions), len(session.license_queue)

    # -- assistance -------------------------------------------------------

    def analyze(self, license_id: str, model_id: str, system_id: str, user_id: str) -> AssistPayload:
        if self._backend is None or self._pack is None or self._ruleset is None:
            raise ReviewError("assistance is not configured on this service")
        record = self._records.get(license_id)
        if record is None:
            raise UnknownResourceError(f"unknown license {license_id!r}")
        config = self._registry.get(model_id)
        if config is None:
            raise ReviewError(f"model {model_id!r} is not configured")
        rendered = render(self._pack, system_id, user_id, record)
        response = self._backend.complete(config, rendered)
        with self._lock:
            cached = self._assist_cache.get(response.request_fingerprint)
            if cached is None:
                cached = AssistPayload(
                    verdict=extract_verdict(response.text, self._ruleset),
                    rationale_text=response.text,
                    latency_s=response.latency_s,
                )
                self._assist_cache[response.request_fingerprint] = cached
        return cached

    # -- decisions --------------------------------------------------------

    def record_decision(
        self,
        session_id: str,
        license_id: str,
        verdict: str,
        started_at: str,
        ended_at: str,
        assist_shown: bool,
        assist_verdict: str | None = None,
        received_at: datetime | None = None,
    ) -> ReviewDecision:
        session = self._session(session_id)
        if license_id not in session.license_queue:
            raise ReviewError(f"license {license_id!r} is not in this session's queue")
        try:
            verdict_value = Label(verdict)
        except ValueError:
            raise ReviewError(f"verdict must be allows/denies/unclear, got {verdict!r}")
        if verdict_value not in (Label.ALLOWS, Label.DENIES, Label.UNCLEAR):
            raise ReviewError(f"verdict must be allows/denies/unclear, got {verdict!r}")
        if assist_shown and session.group is not ReviewGroup.ASSISTED:
            raise ReviewError("assist_shown is only valid in assisted sessions")

        start = _parse_ts(started_at, "started_at")
        end = _parse_ts(ended_at, "ended_at")
        if end < start:
            raise ReviewError("ended_at precedes started_at")
        receipt = received_at or datetime.now(timezone.utc)
        if (end - receipt).total_seconds() > CLOCK_SKEW_ALLOWANCE_S:
            raise ReviewError("ended_at runs ahead of server time beyond the skew allowance")

        with self._lock:
            if license_id in session.decisions:
                raise ConflictError(f"decision for {license_id!r} already recorded")
            decision = ReviewDecision(
                session_id=session_id,
                license_id=license_id,
                verdict=verdict_value,
                started_at=started_at,
                ended_at=ended_at,
                duration_s=(end - start).total_seconds(),
                assist_shown=assist_shown,
                assist_verdict=Verdict(assist_verdict) if assist_verdict else None,
            )
            session.decisions[license_id] = decision
            self._append(self._decisions_path, decision.to_dict())
        return decision

    # -- summary ----------------------------------------------------------

    def session_summary(self, session_id: str) -> dict:
        session = self._session(session_id)
        decisions = [session.decisions[lid] for lid in session.license_queue if lid in session.decisions]
        if not decisions:
            raise ReviewError("session has no decisions yet")
        graded = [
            SimpleNamespace(correct=(d.verdict is self._records[d.license_id].label))
            for d in decisions
        ]
        return {
            "pa_pct": prediction_agreement(graded),
            "mean_duration_s": sum(d.duration_s for d in decisions) / len(decisions),
            "n_decided": len(decisions),
            "n_pending": len(session.license_queue) - len(decisions),
        }


class CreateSessionBody(BaseModel):
    reviewer_id: str
    group: str
    license_ids: list[str]


class AnalyzeBody(BaseModel):
    license_id: str
    model_id: str
    system_id: str
    user_id: str


class DecisionBody(BaseModel):
    license_id: str
    verdict: str
    started_at: str
    ended_at: str
    assist_shown: bool = False
    assist_verdict: str | None = None


def create_app(service: ReviewService, token: str | None = None):
    """FastAPI wiring over a ReviewService; see the API table in the README."""
    app = FastAPI(title="licensekit review service")

    def _authorize(request: Request) -> None:
        if token is None:
            return
        supplied = request.headers.get("Authorization", "")
        if supplied != f"Bearer {token}":
            raise HTTPException(status_code=401, detail="missing or invalid bearer token")

    def _translate(exc: Exception) -> HTTPException:
        if isinstance(exc, UnknownResourceError):
            return HTTPException(status_code=404, detail=str(exc))
        if isinstance(exc, ConflictError):
            return HTTPException(status_code=409, detail=str(exc))
        if isinstance(exc, ReviewError):
            return HTTPException(status_code=400, detail=str(exc))
        if isinstance(exc, TransportError):
            return HTTPException(status_code=502, detail={"error": str(exc), "retriable": True})
        if isinstance(exc, GateError):
            return HTTPException(status_code=502, detail={"error": str(exc), "retriable": False})
        raise exc

    @app.post("/sessions")
    def create_session(body: CreateSessionBody, request: Request):
        _authorize(request)
        try:
            session = service.create_session(body.reviewer_id, body.group, body.license_ids)
        except Exception as exc:
            raise _translate(exc)
        return {"session_id": session.session_id}

    @app.get("/sessions/{session_id}/next")
    def next_license(session_id: str, request: Request):
        _authorize(request)
        try:
            record = service.next_license(session_id)
            decided, total = service.progress(session_id)
            group = service._session(session_id).group.value
        except Exception as exc:
            raise _translate(exc)
        if record is None:
            return {"license_id": None, "decided": decided, "total": total, "group": group}
        return {
            "license_id": record.id,
            "name": record.name,
            "text": record.text,
            "decided": decided,
            "total": total,
            "group": group,
        }

    @app.post("/analyze")
    def analyze(body: AnalyzeBody, request: Request):
        _authorize(request)
        try:
            payload = service.analyze(body.license_id, body.model_id, body.system_id, body.user_id)
        except Exception as exc:
            raise _translate(exc)
        return payload.to_dict()

    @app.post("/sessions/{session_id}/decisions")
    def record_decision(session_id: str, body: DecisionBody, request: Request):
        _authorize(request)
        try:
            decision = service.record_decision(
                session_id,
                body.license_id,
                body.verdict,
                body.started_at,
                body.ended_at,
                body.assist_shown,
                assist_verdict=body.assist_verdict,
            )
        except Exception as exc:
            raise _translate(exc)
        return decision.to_dict()

    @app.get("/sessions/{session_id}/summary")
    def session_summary(session_id: str, request: Request):
        _authorize(request)
        try:
            return service.session_summary(session_id)
        except Exception as exc:
            raise _translate(exc)

    return app
