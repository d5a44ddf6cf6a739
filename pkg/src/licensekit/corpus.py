"""Labeled license corpora: loading, filtering, stratification, and exports.

A corpus is an immutable tuple of LicenseRecord values in file order. All
sampling operations are deterministic for a fixed (input order, seed) so
experiment splits can be reproduced from a manifest alone.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import random
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .textnorm import normalize


class Category(Enum):
    GENERAL = "general"
    CUSTOMIZED = "customized"
    OFFICIAL_TERMS = "official_terms"


class Label(Enum):
    ALLOWS = "allows"
    DENIES = "denies"
    UNCLEAR = "unclear"
    UNLABELED = "unlabeled"


class Status(Enum):
    VALID = "valid"
    UNREADABLE = "unreadable"
    EXPIRED = "expired"
    DUPLICATE = "duplicate"


#: The three classes accepted as evaluation ground truth.
GROUND_TRUTH_LABELS = (Label.ALLOWS, Label.DENIES, Label.UNCLEAR)

#: Canonical verdict phrases used in instruction targets and reference
#: answers. Kept in sync with the default extraction ruleset.
LABEL_PHRASES: Mapping[Label, str] = {
    Label.ALLOWS: "The license allows commercial use.",
    Label.DENIES: "The license does not allow commercial use.",
    Label.UNCLEAR: "It is unclear if the license allows commercial use.",
}


class CorpusError(ValueError):
    """Raised for malformed corpus files or infeasible sampling requests."""


@dataclass(frozen=True)
class LicenseRecord:
    id: str
    name: str
    platform: str
    category: Category
    text: str
    label: Label
    url: str | None = None
    rationale: str | None = None
    rights_obligations: tuple[str, ...] = ()
    status: Status = Status.VALID

    def reference_answer(self) -> str:
        """Expert answer this record's responses are compared against."""
        if self.label is Label.UNLABELED:
            raise CorpusError(f"record {self.id!r} has no ground-truth label")
        phrase = LABEL_PHRASES[self.label]
        if self.rationale:
            return f"{phrase} {self.rationale}"
        return phrase


Corpus = tuple[LicenseRecord, ...]


@dataclass(frozen=True)
class FilterReport:
    input_count: int
    removed_unreadable: int
    removed_expired: int
    removed_duplicate: int
    output_count: int

    def __post_init__(self) -> None:
        removed = self.removed_unreadable + self.removed_expired + self.removed_duplicate
        if self.output_count != self.input_count - removed:
            raise ValueError("filter report counts do not reconcile")


@dataclass(frozen=True)
class FoldAssignment:
    k: int
    seed: int
    assignments: Mapping[str, int]

    def fold_ids(self, fold: int) -> list[str]:
        return [rid for rid, f in self.assignments.items() if f == fold]

    def canonical_json(self) -> str:
        return json.dumps(
            {"k": self.k, "seed": self.seed, "assignments": dict(sorted(self.assignments.items()))},
            sort_keys=True,
        )

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class CategoryStats:
    counts: Mapping[Category, int]
    total: int


_REQUIRED_KEYS = ("id", "name", "platform", "category", "text", "label")

_CSV_COLUMNS = (
    "id",
    "name",
    "platform",
    "category",
    "text",
    "url",
    "label",
    "rationale",
    "rights_obligations",
    "status",
)


def _parse_enum(enum_cls, raw: str, where: str):
    try:
        return enum_cls(raw)
    except ValueError:
        allowed = ", ".join(e.value for e in enum_cls)
        raise CorpusError(f"{where}: unknown {enum_cls.__name__.lower()} {raw!r} (expected one of: {allowed})")


def _record_from_mapping(obj: Mapping[str, object], where: str, *, utf8_ok: bool = True) -> LicenseRecord:
    missing = [k for k in _REQUIRED_KEYS if obj.get(k) in (None, "") and k != "text"]
    if "text" not in obj or obj.get("text") is None:
        missing.append("text")
    if missing:
        raise CorpusError(f"{where}: missing required field(s): {', '.join(sorted(missing))}")

    rights = obj.get("rights_obligations") or ()
    if isinstance(rights, str):
        rights = tuple(p for p in rights.split("|") if p)
    else:
        rights = tuple(str(r) for r in rights)

    status = _parse_enum(Status, str(obj.get("status") or "valid"), where)
    text = str(obj["text"])
    # Unreadable is detected at load: blank text or bytes that failed UTF-8.
    if status is Status.VALID and (not text.strip() or not utf8_ok):
        status = Status.UNREADABLE

    return LicenseRecord(
        id=str(obj["id"]),
        name=str(obj["name"]),
        platform=str(obj["platform"]),
        category=_parse_enum(Category, str(obj["category"]), where),
        text=text,
        url=str(obj["url"]) if obj.get("url") else None,
        label=_parse_enum(Label, str(obj["label"]), where),
        rationale=str(obj["rationale"]) if obj.get("rationale") else None,
        rights_obligations=rights,
        status=status,
    )


def _check_unique_ids(records: Sequence[LicenseRecord]) -> None:
    seen: dict[str, int] = {}
    for idx, rec in enumerate(records, start=1):
        if rec.id in seen:
            raise CorpusError(
                f"duplicate record id {rec.id!r}: records {seen[rec.id]} and {idx}"
            )
        seen[rec.id] = idx


def load_corpus(path: str | Path, format: str = "json_lines") -> Corpus:
    """Load a corpus file. ``format`` is ``json_lines`` or ``csv``.

    Unknown fields are ignored. Malformed rows raise CorpusError naming the
    offending line; duplicate ids raise naming both occurrences.
    """
    path = Path(path)
    if format == "json_lines":
        records = list(_iter_jsonl(path))
    elif format == "csv":
        records = list(_iter_csv(path))
    else:
        raise CorpusError(f"unknown corpus format {format!r}")
    _check_unique_ids(records)
    return tuple(records)


def _iter_jsonl(path: Path) -> Iterable[LicenseRecord]:
    with path.open("rb") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            utf8_ok = True
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError:
                # Salvage the row so it can be flagged Unreadable; if the
                # JSON itself is broken this still errors below.
                utf8_ok = False
                line = raw.decode("utf-8", errors="replace")
            where = f"{path.name}:{lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{where}: invalid JSON: {exc.msg}") from exc
            if not isinstance(obj, dict):
                raise CorpusError(f"{where}: expected an object, got {type(obj).__name__}")
            yield _record_from_mapping(obj, where, utf8_ok=utf8_ok)


def _iter_csv(path: Path) -> Iterable[LicenseRecord]:
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for rownum, row in enumerate(reader, start=2):  # header is line 1
            where = f"{path.name}:{rownum}"
            if None in row:
                raise CorpusError(f"{where}: more cells than header columns")
            yield _record_from_mapping({k: v for k, v in row.items() if v != ""}, where)


def save_corpus(records: Sequence[LicenseRecord], path: str | Path, format: str = "json_lines") -> None:
    path = Path(path)
    if format == "json_lines":
        with path.open("w", encoding="utf-8", newline="\n") as fh:
            for rec in records:
                fh.write(json.dumps(record_to_dict(rec), ensure_ascii=False) + "\n")
    elif format == "csv":
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=_CSV_COLUMNS)
            writer.writeheader()
            for rec in records:
                row = record_to_dict(rec)
                row["rights_obligations"] = "|".join(rec.rights_obligations)
                writer.writerow({k: row.get(k, "") or "" for k in _CSV_COLUMNS})
    else:
        raise CorpusError(f"unknown corpus format {format!r}")


def record_to_dict(rec: LicenseRecord) -> dict:
    out: dict[str, object] = {
        "id": rec.id,
        "name": rec.name,
        "platform": rec.platform,
        "category": rec.category.value,
        "text": rec.text,
        "label": rec.label.value,
    }
    if rec.url:
        out["url"] = rec.url
    if rec.rationale:
        out["rationale"] = rec.rationale
    if rec.rights_obligations:
        out["rights_obligations"] = list(rec.rights_obligations)
    if rec.status is not Status.VALID:
        out["status"] = rec.status.value
    return out


def filter_invalid(records: Sequence[LicenseRecord]) -> tuple[Corpus, FilterReport]:
    """Drop unreadable, expired, and duplicated records.

    Duplicates are exact matches after normalization (first occurrence kept).
    Filtering never fails; the report reconciles by construction.
    """
    kept: list[LicenseRecord] = []
    seen_texts: set[str] = set()
    n_unreadable = n_expired = n_duplicate = 0
    for rec in records:
        if rec.status is Status.UNREADABLE:
            n_unreadable += 1
            continue
        if rec.status is Status.EXPIRED:
            n_expired += 1
            continue
        if rec.status is Status.DUPLICATE:
            n_duplicate += 1
            continue
        key = normalize(rec.text)
        if key in seen_texts:
            n_duplicate += 1
            continue
        seen_texts.add(key)
        kept.append(rec)
    report = FilterReport(
        input_count=len(records),
        removed_unreadable=n_unreadable,
        removed_expired=n_expired,
        removed_duplicate=n_duplicate,
        output_count=len(kept),
    )
    return tuple(kept), report


def category_stats(records: Sequence[LicenseRecord]) -> CategoryStats:
    counts = {cat: 0 for cat in Category}
    for rec in records:
        counts[rec.category] += 1
    return CategoryStats(counts=counts, total=len(records))


def _subseed(seed: int, name: str) -> int:
    digest = hashlib.sha256(f"{seed}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def _by_label(records: Sequence[LicenseRecord]) -> dict[Label, list[LicenseRecord]]:
    groups: dict[Label, list[LicenseRecord]] = {lab: [] for lab in GROUND_TRUTH_LABELS}
    for rec in records:
        if rec.label in groups:
            groups[rec.label].append(rec)
    return groups


def balanced_subset(
    records: Sequence[LicenseRecord],
    fraction: float,
    seed: int,
    allow_shrink: bool = False,
) -> Corpus:
    """Seeded label-balanced subset of ``fraction`` of the corpus.

    The subset size is fraction x corpus size rounded down to a multiple of
    three, with each ground-truth class contributing exactly a third. If a
    class cannot supply its share the call errors unless ``allow_shrink``
    permits undersampling every class to the feasible equal count.
    """
    if not 0 < fraction <= 1:
        raise CorpusError(f"fraction must be in (0, 1], got {fraction}")
    groups = _by_label(records)
    empty = [lab.value for lab, recs in groups.items() if not recs]
    if empty:
        raise CorpusError(f"corpus has no records labeled: {', '.join(empty)}")

    per_class = int(fraction * len(records)) // 3
    smallest = min(len(recs) for recs in groups.values())
    if per_class > smallest:
        if not allow_shrink:
            short = min(groups.items(), key=lambda kv: len(kv[1]))
            raise CorpusError(
                f"class {short[0].value!r} has only {len(short[1])} records, "
                f"{per_class} required (shortfall {per_class - len(short[1])}); "
                "pass allow_shrink to undersample to the feasible balanced size"
            )
        per_class = smallest
    if per_class == 0:
        raise CorpusError("requested fraction yields an empty subset")

    rng = random.Random(_subseed(seed, "balanced_subset"))
    chosen: set[str] = set()
    for lab in GROUND_TRUTH_LABELS:
        chosen.update(rec.id for rec in rng.sample(groups[lab], per_class))
    return tuple(rec for rec in records if rec.id in chosen)


def stratified_folds(records: Sequence[LicenseRecord], k: int, seed: int) -> FoldAssignment:
    """Assign every record to one of ``k`` folds, stratified by label.

    Each class is shuffled and dealt round-robin from a cursor that carries
    across classes, which keeps both per-class and total fold sizes within
    one of the ideal share.
    """
    if k < 2:
        raise CorpusError(f"k must be >= 2, got {k}")
    if k > len(records):
        raise CorpusError(f"k={k} exceeds subset size {len(records)}")
    rng = random.Random(_subseed(seed, "stratified_folds"))
    assignments: dict[str, int] = {}
    cursor = 0
    for lab in GROUND_TRUTH_LABELS + (Label.UNLABELED,):
        members = [rec.id for rec in records if rec.label is lab]
        rng.shuffle(members)
        for rid in members:
            assignments[rid] = cursor % k
            cursor += 1
    return FoldAssignment(k=k, seed=seed, assignments=assignments)


def write_instruction_rows(
    records: Sequence[LicenseRecord],
    pack,
    system_id: str,
    user_id: str,
    out_path: str | Path,
) -> int:
    """Write instruction examples: {"system", "user", "target", "license_id"}
    per json-lines row, in the given record order. The target is the
    canonical label phrase followed by the expert rationale.
    """
    from .prompts import render  # local import to avoid a cycle

    count = 0
    with Path(out_path).open("w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            if rec.label is Label.UNLABELED:
                raise CorpusError(f"record {rec.id!r} is unlabeled; cannot form a target")
            rendered = render(pack, system_id, user_id, rec)
            row = {
                "system": rendered.system_text,
                "user": rendered.user_text,
                "target": rec.reference_answer(),
                "license_id": rec.id,
            }
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
            count += 1
    return count


def export_instruction_dataset(
    records: Sequence[LicenseRecord],
    folds: FoldAssignment,
    held_out_fold: int,
    pack,
    system_id: str,
    user_id: str,
    out_path: str | Path,
) -> int:
    """Write one instruction example per record outside the held-out fold.

    Returns the number of examples written.
    """
    if not 0 <= held_out_fold < folds.k:
        raise CorpusError(f"held_out_fold {held_out_fold} outside [0, {folds.k})")
    training = [
        rec
        for rec in records
        if folds.assignments.get(rec.id) is not None and folds.assignments[rec.id] != held_out_fold
    ]
    return write_instruction_rows(training, pack, system_id, user_id, out_path)


def subsample_for_ablation(
    records: Sequence[LicenseRecord],
    sizes: Sequence[int],
    seed: int,
) -> list[Corpus]:
    """Nested, approximately label-balanced subsets of the given sizes.

    Records are drawn one at a time from whichever class currently has the
    fewest selections, so every prefix is balanced to within one record and
    each subset is contained in the next.
    """
    if not sizes:
        raise CorpusError("sizes must be non-empty")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise CorpusError(f"sizes must be strictly increasing, got {list(sizes)}")
    if sizes[-1] > len(records):
        raise CorpusError(f"size {sizes[-1]} exceeds corpus size {len(records)}")

    rng = random.Random(_subseed(seed, "ablation_subsample"))
    groups = _by_label(records)
    queues = {lab: list(recs) for lab, recs in groups.items()}
    for queue in queues.values():
        rng.shuffle(queue)

    taken: dict[Label, int] = {lab: 0 for lab in GROUND_TRUTH_LABELS}
    order: list[LicenseRecord] = []
    while len(order) < sizes[-1]:
        candidates = [lab for lab in GROUND_TRUTH_LABELS if taken[lab] < len(queues[lab])]
        if not candidates:
            raise CorpusError("ran out of labeled records while building ablation subsets")
        lab = min(candidates, key=lambda l: (taken[l], l.value))
        order.append(queues[lab][taken[lab]])
        taken[lab] += 1

    subsets: list[Corpus] = []
    for size in sizes:
        chosen = {rec.id for rec in order[:size]}
        subsets.append(tuple(rec for rec in records if rec.id in chosen))
    return subsets
