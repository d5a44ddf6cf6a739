from __future__ import annotations

from datetime import datetime, timedelta, timezone

import pytest
from fastapi.testclient import TestClient

import licensekit
from licensekit.corpus import Category, Label
from licensekit.metrics import Verdict, load_ruleset
from licensekit.modelgate import (
    GenerationParams,
    ModelEndpointConfig,
    ReplayBackend,
    ReplayStore,
    completion_fingerprint,
)
from licensekit.prompts import load_template_pack, render
from licensekit.review import (
    CLOCK_SKEW_ALLOWANCE_S,
    ConflictError,
    ReviewError,
    ReviewService,
    UnknownResourceError,
    create_app,
)

from .conftest import make_record

CCBYNC_RESPONSE = (
    "You cannot use a dataset licensed under CC BY-NC 4.0 in a commercial project "
    "without violating the terms. The 'NC' clause restricts any commercial purpose; "
    "you may use the dataset for research or education, or negotiate a separate "
    "commercial license with the rights holder."
)


_BASE = datetime.now(timezone.utc).replace(microsecond=0) - timedelta(hours=1)


def iso(offset_s: float = 0.0) -> str:
    """Timestamp safely in the past so the server-side skew guard is quiet."""
    return (_BASE + timedelta(seconds=offset_s)).isoformat()


@pytest.fixture()
def corpus_records():
    records = [
        make_record("ccbync", label=Label.DENIES, text="CC BY-NC 4.0: NonCommercial terms apply."),
        make_record("mit-ish", label=Label.ALLOWS, text="Permissive grant, commercial use fine."),
        make_record("terms-x", label=Label.UNCLEAR, category=Category.OFFICIAL_TERMS,
                    text="Portal terms: please cite the provider."),
    ]
    return records


class CountingBackend:
    def __init__(self, inner):
        self.inner = inner
        self.calls = 0

    def complete(self, config, prompt):
        self.calls += 1
        return self.inner.complete(config, prompt)


@pytest.fixture()
def assist_parts(corpus_records):
    pack = load_template_pack(licensekit.fixture_path("prompt_pack.json"))
    ruleset = load_ruleset(licensekit.fixture_path("rules_en.json"))
    config = ModelEndpointConfig(model_id="licensegpt", params=GenerationParams())
    store = ReplayStore()
    rendered = render(pack, "sys_v3", "user_v3", corpus_records[0])
    fp = completion_fingerprint("licensegpt", rendered.system_text, rendered.user_text, config.params)
    store.completions[fp] = (CCBYNC_RESPONSE, 2.4)
    backend = CountingBackend(ReplayBackend(store))
    return {"pack": pack, "ruleset": ruleset, "registry": {"licensegpt": config}, "backend": backend}


@pytest.fixture()
def service(corpus_records, assist_parts, tmp_path):
    return ReviewService(
        corpus_records,
        tmp_path / "store",
        backend=assist_parts["backend"],
        registry=assist_parts["registry"],
        pack=assist_parts["pack"],
        ruleset=assist_parts["ruleset"],
    )


class TestSessions:
    def test_queue_of_ten_preserved_in_order(self, tmp_path):
        records = [make_record(f"l{i}", text=f"terms {i}") for i in range(10)]
        service = ReviewService(records, tmp_path / "s")
        session = service.create_session("lawyer-1", "assisted", [r.id for r in records])
        assert session.license_queue == tuple(f"l{i}" for i in range(10))
        assert session.group.value == "assisted"

    def test_empty_queue_rejected(self, service):
        with pytest.raises(ReviewError, match="empty"):
            service.create_session("r", "manual", [])

    def test_duplicate_queue_entry_rejected(self, service):
        with pytest.raises(ReviewError, match="duplicates"):
            service.create_session("r", "manual", ["ccbync", "ccbync"])

    def test_unknown_license_rejected(self, service):
        with pytest.raises(UnknownResourceError, match="nope"):
            service.create_session("r", "manual", ["nope"])

    def test_next_walks_queue_in_order(self, service):
        session = service.create_session("r", "manual", ["ccbync", "mit-ish"])
        assert service.next_license(session.session_id).id == "ccbync"
        service.record_decision(session.session_id, "ccbync", "denies", iso(0), iso(10), False)
        assert service.next_license(session.session_id).id == "mit-ish"
        service.record_decision(session.session_id, "mit-ish", "allows", iso(20), iso(25), False)
        assert service.next_license(session.session_id) is None


class TestAnalyze:
    def test_ccbync_assist_payload(self, service):
        payload = service.analyze("ccbync", "licensegpt", "sys_v3", "user_v3")
        assert payload.verdict is Verdict.DENIES
        assert payload.rationale_text.startswith("You cannot use a dataset licensed under CC BY-NC 4.0")
        assert payload.latency_s == 2.4

    def test_repeat_analyze_served_from_cache(self, service, assist_parts):
        first = service.analyze("ccbync", "licensegpt", "sys_v3", "user_v3")
        second = service.analyze("ccbync", "licensegpt", "sys_v3", "user_v3")
        assert first == second
        assert first is second  # cached object, not a re-grade

    def test_unknown_model_is_configuration_error(self, service):
        with pytest.raises(ReviewError, match="not configured"):
            service.analyze("ccbync", "ghost", "sys_v3", "user_v3")

    def test_unknown_license_404(self, service):
        with pytest.raises(UnknownResourceError):
            service.analyze("missing", "licensegpt", "sys_v3", "user_v3")


class TestDecisions:
    def test_duration_computed_server_side(self, service):
        session = service.create_session("r", "assisted", ["ccbync"])
        decision = service.record_decision(session.session_id, "ccbync", "denies", iso(0), iso(6), True)
        assert decision.duration_s == 6.0

    def test_manual_long_review_duration(self, service):
        session = service.create_session("r", "manual", ["mit-ish"])
        decision = service.record_decision(session.session_id, "mit-ish", "allows", iso(0), iso(108), False)
        assert decision.duration_s == 108.0

    def test_double_submission_conflict(self, service):
        session = service.create_session("r", "manual", ["ccbync"])
        service.record_decision(session.session_id, "ccbync", "denies", iso(0), iso(5), False)
        with pytest.raises(ConflictError, match="already recorded"):
            service.record_decision(session.session_id, "ccbync", "denies", iso(6), iso(9), False)

    def test_end_before_start_rejected(self, service):
        session = service.create_session("r", "manual", ["ccbync"])
        with pytest.raises(ReviewError, match="precedes"):
            service.record_decision(session.session_id, "ccbync", "denies", iso(10), iso(5), False)

    def test_future_end_beyond_skew_rejected(self, service):
        session = service.create_session("r", "manual", ["ccbync"])
        now = datetime.now(timezone.utc)
        start = now.isoformat()
        end = (now + timedelta(seconds=CLOCK_SKEW_ALLOWANCE_S + 30)).isoformat()
        with pytest.raises(ReviewError, match="skew"):
            service.record_decision(session.session_id, "ccbync", "denies", start, end, False)

    def test_assist_flag_invalid_in_manual_group(self, service):
        session = service.create_session("r", "manual", ["ccbync"])
        with pytest.raises(ReviewError, match="assisted"):
            service.record_decision(session.session_id, "ccbync", "denies", iso(0), iso(5), True)

    def test_license_outside_queue_rejected(self, service):
        session = service.create_session("r", "manual", ["ccbync"])
        with pytest.raises(ReviewError, match="queue"):
            service.record_decision(session.session_id, "mit-ish", "allows", iso(0), iso(5), False)

    def test_bad_verdict_rejected(self, service):
        session = service.create_session("r", "manual", ["ccbync"])
        with pytest.raises(ReviewError, match="verdict"):
            service.record_decision(session.session_id, "ccbync", "unlabeled", iso(0), iso(5), False)


class TestSummary:
    def test_three_correct_decisions_mean_six_seconds(self, service):
        session = service.create_session("r", "manual", ["ccbync", "mit-ish", "terms-x"])
        truths = {"ccbync": "denies", "mit-ish": "allows", "terms-x": "unclear"}
        for i, (lid, verdict) in enumerate(truths.items()):
            service.record_decision(session.session_id, lid, verdict, iso(i * 100), iso(i * 100 + 5 + i), False)
        summary = service.session_summary(session.session_id)
        assert summary["pa_pct"] == 100.0
        assert summary["mean_duration_s"] == pytest.approx(6.0, abs=1e-9)
        assert summary["n_decided"] == 3
        assert summary["n_pending"] == 0

    def test_one_of_two_correct_is_50(self, service):
        session = service.create_session("r", "manual", ["ccbync", "mit-ish"])
        service.record_decision(session.session_id, "ccbync", "denies", iso(0), iso(5), False)
        service.record_decision(session.session_id, "mit-ish", "denies", iso(10), iso(15), False)
        assert service.session_summary(session.session_id)["pa_pct"] == 50.0

    def test_no_decisions_errors(self, service):
        session = service.create_session("r", "manual", ["ccbync"])
        with pytest.raises(ReviewError, match="no decisions"):
            service.session_summary(session.session_id)


class TestPersistence:
    def test_store_reload_preserves_sessions_and_decisions(self, corpus_records, tmp_path):
        store = tmp_path / "store"
        service = ReviewService(corpus_records, store)
        session = service.create_session("r", "manual", ["ccbync", "mit-ish"])
        service.record_decision(session.session_id, "ccbync", "denies", iso(0), iso(7), False)

        reloaded = ReviewService(corpus_records, store)
        assert reloaded.next_license(session.session_id).id == "mit-ish"
        summary = reloaded.session_summary(session.session_id)
        assert summary["n_decided"] == 1
        assert summary["mean_duration_s"] == 7.0


class TestHttpApi:
    @pytest.fixture()
    def client(self, service):
        return TestClient(create_app(service))

    def test_scripted_assisted_session(self, client):
        created = client.post(
            "/sessions",
            json={"reviewer_id": "lawyer-2", "group": "assisted",
                  "license_ids": ["ccbync", "mit-ish", "terms-x"]},
        )
        assert created.status_code == 200
        sid = created.json()["session_id"]

        first = client.get(f"/sessions/{sid}/next").json()
        assert first["license_id"] == "ccbync"
        assert first["total"] == 3 and first["decided"] == 0
        assert first["group"] == "assisted"

        assist = client.post(
            "/analyze",
            json={"license_id": "ccbync", "model_id": "licensegpt",
                  "system_id": "sys_v3", "user_id": "user_v3"},
        )
        assert assist.status_code == 200
        assert assist.json()["verdict"] == "denies"

        truths = {"ccbync": "denies", "mit-ish": "allows", "terms-x": "unclear"}
        durations = [5, 6, 7]
        for (lid, verdict), dur in zip(truths.items(), durations):
            posted = client.post(
                f"/sessions/{sid}/decisions",
                json={"license_id": lid, "verdict": verdict, "started_at": iso(0),
                      "ended_at": iso(dur), "assist_shown": lid == "ccbync"},
            )
            assert posted.status_code == 200, posted.text
            assert posted.json()["duration_s"] == float(dur)

        response = client.get(f"/sessions/{sid}/summary")
        assert response.json() == {"pa_pct": 100.0, "mean_duration_s": 6.0, "n_decided": 3, "n_pending": 0}
        # The browser client renders these tokens verbatim; pin the wire bytes.
        assert '"pa_pct":100.0' in response.text
        assert '"mean_duration_s":6.0' in response.text

    def test_conflict_maps_to_409(self, client):
        sid = client.post(
            "/sessions", json={"reviewer_id": "r", "group": "manual", "license_ids": ["ccbync"]}
        ).json()["session_id"]
        body = {"license_id": "ccbync", "verdict": "denies", "started_at": iso(0),
                "ended_at": iso(4), "assist_shown": False}
        assert client.post(f"/sessions/{sid}/decisions", json=body).status_code == 200
        assert client.post(f"/sessions/{sid}/decisions", json=body).status_code == 409

    def test_unknown_session_404(self, client):
        assert client.get("/sessions/snope/next").status_code == 404
        assert client.get("/sessions/snope/summary").status_code == 404

    def test_validation_maps_to_400(self, client):
        sid = client.post(
            "/sessions", json={"reviewer_id": "r", "group": "manual", "license_ids": ["ccbync"]}
        ).json()["session_id"]
        bad = {"license_id": "ccbync", "verdict": "denies", "started_at": iso(10),
               "ended_at": iso(0), "assist_shown": False}
        assert client.post(f"/sessions/{sid}/decisions", json=bad).status_code == 400
        assert client.get(f"/sessions/{sid}/summary").status_code == 400

    def test_bearer_token_enforced_when_configured(self, service):
        client = TestClient(create_app(service, token="hunter2"))
        body = {"reviewer_id": "r", "group": "manual", "license_ids": ["ccbync"]}
        assert client.post("/sessions", json=body).status_code == 401
        ok = client.post("/sessions", json=body, headers={"Authorization": "Bearer hunter2"})
        assert ok.status_code == 200
