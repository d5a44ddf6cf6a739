from __future__ import annotations

import json
from pathlib import Path

import pytest

import licensekit
from licensekit.corpus import Category, Label, LicenseRecord, Status


def make_record(
    id: str,
    label: Label = Label.ALLOWS,
    category: Category = Category.GENERAL,
    text: str | None = None,
    status: Status = Status.VALID,
    rationale: str | None = None,
) -> LicenseRecord:
    return LicenseRecord(
        id=id,
        name=f"License {id}",
        platform="huggingface",
        category=category,
        text=text if text is not None else f"Terms for {id}: reuse governed by clause {id}.",
        label=label,
        rationale=rationale,
        status=status,
    )


def make_labeled_corpus(n_per_class: int, prefix: str = "rec") -> tuple[LicenseRecord, ...]:
    """n_per_class records of each ground-truth label, interleaved."""
    records = []
    labels = (Label.ALLOWS, Label.DENIES, Label.UNCLEAR)
    categories = (Category.GENERAL, Category.CUSTOMIZED, Category.OFFICIAL_TERMS)
    for i in range(3 * n_per_class):
        records.append(
            make_record(
                f"{prefix}-{i:04d}",
                label=labels[i % 3],
                category=categories[(i // 3) % 3],
                rationale=f"Expert note {i} on commercial terms.",
            )
        )
    return tuple(records)


def write_jsonl(path: Path, rows: list[dict]) -> Path:
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    return path


@pytest.fixture(scope="session")
def bundled_corpus_path() -> Path:
    return Path(str(licensekit.fixture_path("corpus_sample.jsonl")))


@pytest.fixture(scope="session")
def bundled_pack_path() -> Path:
    return Path(str(licensekit.fixture_path("prompt_pack.json")))


@pytest.fixture(scope="session")
def bundled_ruleset_path() -> Path:
    return Path(str(licensekit.fixture_path("rules_en.json")))


@pytest.fixture(scope="session")
def bundled_registry_path() -> Path:
    return Path(str(licensekit.fixture_path("models.json")))
