"""Walkthrough: drive the lawyer-review HTTP API end to end in-process.

A manual session of three licenses is created, timed decisions are posted,
and the summary (prediction agreement + mean seconds) is fetched back.

Run: python3 demos/demo_review_session.py
"""

import tempfile
from datetime import datetime, timedelta, timezone
from pathlib import Path

from fastapi.testclient import TestClient

from licensekit.corpus import Category, Label, LicenseRecord
from licensekit.review import ReviewService, create_app

records = [
    LicenseRecord(id="pddl", name="PDDL", platform="zenodo", category=Category.GENERAL,
                  text="Public domain dedication; any use permitted.", label=Label.ALLOWS),
    LicenseRecord(id="nc-terms", name="NC terms", platform="kaggle", category=Category.CUSTOMIZED,
                  text="Research use only; no commercial exploitation.", label=Label.DENIES),
    LicenseRecord(id="cite-only", name="Citation notice", platform="github", category=Category.CUSTOMIZED,
                  text="Please cite the technical report.", label=Label.UNCLEAR),
]

service = ReviewService(records, Path(tempfile.mkdtemp()) / "store")
client = TestClient(create_app(service))

sid = client.post("/sessions", json={
    "reviewer_id": "demo-lawyer", "group": "manual",
    "license_ids": ["pddl", "nc-terms", "cite-only"],
}).json()["session_id"]
print(f"created session {sid}")

base = datetime.now(timezone.utc) - timedelta(minutes=10)
for verdict, duration in zip(("allows", "denies", "unclear"), (95, 120, 109)):
    item = client.get(f"/sessions/{sid}/next").json()
    client.post(f"/sessions/{sid}/decisions", json={
        "license_id": item["license_id"],
        "verdict": verdict,
        "started_at": base.isoformat(),
        "ended_at": (base + timedelta(seconds=duration)).isoformat(),
        "assist_shown": False,
    })
    print(f"decided {item['license_id']:10s} -> {verdict} in {duration}s")

summary = client.get(f"/sessions/{sid}/summary").json()
print(f"\nsummary: PA {summary['pa_pct']:.0f} %, mean {summary['mean_duration_s']:.1f} s "
      f"({summary['n_decided']} decided, {summary['n_pending']} pending)")
