"""Grading of model responses and the five performance measures.

Verdict extraction is rule-driven: ordered pattern groups are checked with
deny taking precedence over unclear over allow, and a response matching no
group at all is non-specific (and therefore never correct). The measures
are plain percentages and means over graded outcomes:

    PA  = 100 * correct / n
    DR  = 100 * (n - distinct normalized responses) / n     (extras mode)
    SS  = cosine(embed(response), embed(reference)), reported as 100 * mean
    NRR = 100 * non-specific / n
    ARS = mean latency in seconds
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import Label
from .textnorm import normalize


class Verdict(Enum):
    ALLOWS = "allows"
    DENIES = "denies"
    UNCLEAR = "unclear"
    NON_SPECIFIC = "non_specific"


#: Mapping from ground-truth labels to the verdict that counts as correct.
_LABEL_TO_VERDICT = {
    Label.ALLOWS: Verdict.ALLOWS,
    Label.DENIES: Verdict.DENIES,
    Label.UNCLEAR: Verdict.UNCLEAR,
}


class MetricsError(ValueError):
    """Raised for empty inputs, corrupt outcomes, or bad rulesets."""


@dataclass(frozen=True)
class Ruleset:
    """Ordered pattern groups; precedence is deny, then unclear, then allow."""

    deny: tuple[str, ...]
    unclear: tuple[str, ...]
    allow: tuple[str, ...]
    pattern_syntax: str = "substring"

    def __post_init__(self) -> None:
        if self.pattern_syntax not in ("substring", "regex"):
            raise MetricsError(f"unknown pattern_syntax {self.pattern_syntax!r}")
        if not (self.deny or self.unclear or self.allow):
            raise MetricsError("ruleset has no patterns")
        if self.pattern_syntax == "regex":
            for pat in self.deny + self.unclear + self.allow:
                try:
                    re.compile(pat)
                except re.error as exc:
                    raise MetricsError(f"invalid regex pattern {pat!r}: {exc}")

    def _matches(self, patterns: tuple[str, ...], text: str) -> bool:
        if self.pattern_syntax == "substring":
            return any(pat.casefold() in text for pat in patterns)
        return any(re.search(pat, text, re.IGNORECASE) for pat in patterns)


def load_ruleset(path: str | Path) -> Ruleset:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return Ruleset(
        deny=tuple(doc.get("deny", ())),
        unclear=tuple(doc.get("unclear", ())),
        allow=tuple(doc.get("allow", ())),
        pattern_syntax=doc.get("pattern_syntax", "substring"),
    )


def extract_verdict(response_text: str, ruleset: Ruleset) -> Verdict:
    text = response_text.casefold()
    if ruleset._matches(ruleset.deny, text):
        return Verdict.DENIES
    if ruleset._matches(ruleset.unclear, text):
        return Verdict.UNCLEAR
    if ruleset._matches(ruleset.allow, text):
        return Verdict.ALLOWS
    return Verdict.NON_SPECIFIC


@dataclass(frozen=True)
class EvalOutcome:
    license_id: str
    model_id: str
    system_id: str
    user_id: str
    response_text: str
    extracted: Verdict
    ground_truth: Label
    correct: bool
    normalized_response: str
    latency_s: float
    ss: float | None = None

    def to_dict(self) -> dict:
        out = {
            "license_id": self.license_id,
            "model_id": self.model_id,
            "system_id": self.system_id,
            "user_id": self.user_id,
            "response_text": self.response_text,
            "extracted": self.extracted.value,
            "ground_truth": self.ground_truth.value,
            "correct": self.correct,
            "normalized_response": self.normalized_response,
            "latency_s": self.latency_s,
        }
        if self.ss is not None:
            out["ss"] = self.ss
        return out

    @classmethod
    def from_dict(cls, obj: Mapping) -> "EvalOutcome":
        return cls(
            license_id=obj["license_id"],
            model_id=obj["model_id"],
            system_id=obj["system_id"],
            user_id=obj["user_id"],
            response_text=obj["response_text"],
            extracted=Verdict(obj["extracted"]),
            ground_truth=Label(obj["ground_truth"]),
            correct=bool(obj["correct"]),
            normalized_response=obj["normalized_response"],
            latency_s=float(obj["latency_s"]),
            ss=float(obj["ss"]) if obj.get("ss") is not None else None,
        )


@dataclass(frozen=True)
class MetricSummary:
    pa_pct: float
    dr_pct: float
    nrr_pct: float
    ars_s: float
    n: int
    ss_pct: float | None = None

    def __post_init__(self) -> None:
        if self.n <= 0:
            raise MetricsError("summary requires n > 0")


@dataclass(frozen=True)
class SsSummary:
    ss_pct: float
    consistency_pct: float


def grade_response(
    *,
    license_id: str,
    model_id: str,
    system_id: str,
    user_id: str,
    response_text: str,
    ground_truth: Label,
    latency_s: float,
    ruleset: Ruleset,
    ss: float | None = None,
) -> EvalOutcome:
    extracted = extract_verdict(response_text, ruleset)
    correct = (
        extracted is not Verdict.NON_SPECIFIC
        and _LABEL_TO_VERDICT.get(ground_truth) is extracted
    )
    return EvalOutcome(
        license_id=license_id,
        model_id=model_id,
        system_id=system_id,
        user_id=user_id,
        response_text=response_text,
        extracted=extracted,
        ground_truth=ground_truth,
        correct=correct,
        normalized_response=normalize(response_text),
        latency_s=latency_s,
        ss=ss,
    )


def _require_outcomes(outcomes: Sequence[EvalOutcome]) -> None:
    if not outcomes:
        raise MetricsError("no outcomes to evaluate")


def prediction_agreement(outcomes: Sequence[EvalOutcome]) -> float:
    _require_outcomes(outcomes)
    return 100.0 * sum(1 for o in outcomes if o.correct) / len(outcomes)


def duplication_rate(outcomes: Sequence[EvalOutcome], mode: str = "extras") -> float:
    """Share of repeated answers.

    ``extras`` counts every response beyond the first of its normalized
    text; ``max-class`` reports the largest group of identical responses
    (zero when all responses are distinct).
    """
    _require_outcomes(outcomes)
    counts: dict[str, int] = {}
    for o in outcomes:
        counts[o.normalized_response] = counts.get(o.normalized_response, 0) + 1
    n = len(outcomes)
    if mode == "extras":
        return 100.0 * (n - len(counts)) / n
    if mode == "max-class":
        biggest = max(counts.values())
        return 100.0 * biggest / n if biggest >= 2 else 0.0
    raise MetricsError(f"unknown duplication mode {mode!r}")


def semantic_similarity(outcome_text: str, reference_text: str, embedder) -> float:
    """Cosine similarity between the embeddings of the two texts."""
    if not outcome_text or not reference_text:
        raise MetricsError("semantic similarity requires non-empty texts")
    x = embedder.embed(outcome_text)
    y = embedder.embed(reference_text)
    if len(x) != len(y):
        raise MetricsError(f"embedding dimensions differ: {len(x)} vs {len(y)}")
    nx = math.sqrt(sum(v * v for v in x))
    ny = math.sqrt(sum(v * v for v in y))
    if nx == 0.0 or ny == 0.0:
        raise MetricsError("zero-norm embedding: similarity undefined")
    return sum(a * b for a, b in zip(x, y)) / (nx * ny)


#: Threshold above which a response counts as consistent with the expert answer.
SS_CONSISTENCY_THRESHOLD = 0.80


def mean_ss(outcomes: Sequence[EvalOutcome]) -> SsSummary:
    _require_outcomes(outcomes)
    missing = [o.license_id for o in outcomes if o.ss is None]
    if missing:
        raise MetricsError(f"outcomes missing ss: {', '.join(missing[:5])}")
    values = [o.ss for o in outcomes]
    mean = sum(values) / len(values)
    consistent = sum(1 for v in values if v > SS_CONSISTENCY_THRESHOLD)
    return SsSummary(
        ss_pct=max(0.0, 100.0 * mean),
        consistency_pct=100.0 * consistent / len(values),
    )


def nonspecific_rate(outcomes: Sequence[EvalOutcome]) -> float:
    _require_outcomes(outcomes)
    n_ns = sum(1 for o in outcomes if o.extracted is Verdict.NON_SPECIFIC)
    return 100.0 * n_ns / len(outcomes)


def average_response_speed(outcomes: Sequence[EvalOutcome]) -> float:
    _require_outcomes(outcomes)
    if any(o.latency_s < 0 for o in outcomes):
        bad = [o.license_id for o in outcomes if o.latency_s < 0]
        raise MetricsError(f"negative latency on: {', '.join(bad[:5])}")
    return sum(o.latency_s for o in outcomes) / len(outcomes)


def summarize(outcomes: Sequence[EvalOutcome], dr_mode: str = "extras") -> MetricSummary:
    """Aggregate graded outcomes into one summary row.

    Outcomes are sorted by license id first so the result is independent of
    arrival order. ss_pct is present only when every outcome carries ss.
    """
    _require_outcomes(outcomes)
    ordered = sorted(outcomes, key=lambda o: o.license_id)
    have_ss = all(o.ss is not None for o in ordered)
    return MetricSummary(
        pa_pct=prediction_agreement(ordered),
        dr_pct=duplication_rate(ordered, mode=dr_mode),
        nrr_pct=nonspecific_rate(ordered),
        ars_s=average_response_speed(ordered),
        ss_pct=mean_ss(ordered).ss_pct if have_ss else None,
        n=len(ordered),
    )


def evaluate_fold(
    responses: Mapping[str, tuple[str, float]],
    ground_truth: Mapping[str, Label],
    ruleset: Ruleset,
    embedder=None,
    *,
    references: Mapping[str, str] | None = None,
    model_id: str = "",
    system_id: str = "",
    user_id: str = "",
) -> MetricSummary:
    """Grade a fold of (response text, latency) pairs and summarize it.

    ``responses`` and ``ground_truth`` must cover the same license ids.
    When an embedder is given, per-item similarity is computed against
    ``references`` (expert answers keyed by license id).
    """
    outcomes = grade_fold(
        responses,
        ground_truth,
        ruleset,
        embedder,
        references=references,
        model_id=model_id,
        system_id=system_id,
        user_id=user_id,
    )
    return summarize(outcomes)


def grade_fold(
    responses: Mapping[str, tuple[str, float]],
    ground_truth: Mapping[str, Label],
    ruleset: Ruleset,
    embedder=None,
    *,
    references: Mapping[str, str] | None = None,
    model_id: str = "",
    system_id: str = "",
    user_id: str = "",
) -> list[EvalOutcome]:
    unmatched = set(responses) ^ set(ground_truth)
    if unmatched:
        raise MetricsError(f"responses and ground truth disagree on ids: {sorted(unmatched)}")
    outcomes = []
    for license_id in sorted(responses):
        text, latency = responses[license_id]
        ss = None
        if embedder is not None:
            if references is None or license_id not in references:
                raise MetricsError(f"no reference answer for {license_id!r}")
            ss = semantic_similarity(text, references[license_id], embedder)
        outcomes.append(
            grade_response(
                license_id=license_id,
                model_id=model_id,
                system_id=system_id,
                user_id=user_id,
                response_text=text,
                ground_truth=ground_truth[license_id],
                latency_s=latency,
                ruleset=ruleset,
                ss=ss,
            )
        )
    return outcomes


def write_outcomes(outcomes: Iterable[EvalOutcome], path: str | Path, run_tag: str = "") -> None:
    """One EvalOutcome object per json line; ``run_tag`` (the run's manifest
    hash) is embedded in every line so result files carry their provenance."""
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for o in outcomes:
            row = o.to_dict()
            if run_tag:
                row["run"] = run_tag
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def read_outcomes(path: str | Path) -> list[EvalOutcome]:
    out = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(EvalOutcome.from_dict(json.loads(line)))
    return out
