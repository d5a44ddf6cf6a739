"""Manifest-driven experiment runs: cross-validated evaluation, ranking,
pairwise comparison, the prompt grid, and the data-size ablation.

Every run is described by one RunManifest. All randomness flows from the
manifest seed, results are persisted as plain files under a run directory,
and a MANIFEST.lock records input hashes so reports can refuse to combine
results that were produced from different corpora or fold splits. Under a
replay backend a run is byte-deterministic.
"""

from __future__ import annotations

import csv
import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

from . import corpus as corpus_mod
from . import metrics as metrics_mod
from . import modelgate
from . import prompts as prompts_mod
from . import stats as stats_mod
from .corpus import FoldAssignment, Label, LicenseRecord
from .metrics import EvalOutcome, MetricSummary
from .modelgate import Embedder, LiveBackend, RecordBackend, ReplayBackend
from .stats import ComparisonResult, RankTable, SampleGroup


class ExperimentError(ValueError):
    """Raised for invalid manifests or inconsistent run inputs."""


#: Metric column -> (summary attribute, better direction)
METRIC_FIELDS = {
    "pa": ("pa_pct", "higher"),
    "dr": ("dr_pct", "lower"),
    "nrr": ("nrr_pct", "lower"),
    "ss": ("ss_pct", "higher"),
    "ars": ("ars_s", "lower"),
}

_SUMMARY_COLUMNS = ("model_id", "fold", "n", "pa", "dr", "nrr", "ss", "ars")


@dataclass(frozen=True)
class RunManifest:
    run_id: str
    corpus_path: str
    fraction: float
    k: int
    seed: int
    model_ids: tuple[str, ...]
    system_id: str
    user_id: str
    ruleset_path: str
    registry_path: str
    pack_path: str
    backend: str = "replay"
    embedder_id: str | None = None
    replay_path: str | None = None
    concurrency_limit: int = 1
    allow_shrink: bool = False

    def __post_init__(self) -> None:
        if self.backend not in ("live", "record", "replay"):
            raise ExperimentError(f"unknown backend {self.backend!r}")
        if self.backend == "replay" and not self.replay_path:
            raise ExperimentError("replay backend requires replay_path")
        if self.backend == "record" and not self.replay_path:
            raise ExperimentError("record backend requires replay_path as the sink")
        if self.concurrency_limit < 1:
            raise ExperimentError("concurrency_limit must be >= 1")
        if not self.model_ids:
            raise ExperimentError("manifest names no models")

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "corpus_path": self.corpus_path,
            "fraction": self.fraction,
            "k": self.k,
            "seed": self.seed,
            "model_ids": list(self.model_ids),
            "system_id": self.system_id,
            "user_id": self.user_id,
            "ruleset_path": self.ruleset_path,
            "registry_path": self.registry_path,
            "pack_path": self.pack_path,
            "backend": self.backend,
            "embedder_id": self.embedder_id,
            "replay_path": self.replay_path,
            "concurrency_limit": self.concurrency_limit,
            "allow_shrink": self.allow_shrink,
        }

    @classmethod
    def from_dict(cls, obj: Mapping) -> "RunManifest":
        try:
            return cls(
                run_id=obj["run_id"],
                corpus_path=obj["corpus_path"],
                fraction=float(obj["fraction"]),
                k=int(obj["k"]),
                seed=int(obj["seed"]),
                model_ids=tuple(obj["model_ids"]),
                system_id=obj["system_id"],
                user_id=obj["user_id"],
                ruleset_path=obj["ruleset_path"],
                registry_path=obj["registry_path"],
                pack_path=obj["pack_path"],
                backend=obj.get("backend", "replay"),
                embedder_id=obj.get("embedder_id"),
                replay_path=obj.get("replay_path"),
                concurrency_limit=int(obj.get("concurrency_limit", 1)),
                allow_shrink=bool(obj.get("allow_shrink", False)),
            )
        except KeyError as exc:
            raise ExperimentError(f"manifest missing field: {exc.args[0]}")

    @classmethod
    def from_file(cls, path: str | Path) -> "RunManifest":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def digest(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class RunResult:
    manifest: RunManifest
    out_dir: Path
    summaries: Mapping[tuple[str, int], MetricSummary]
    provenance: Mapping[str, str]


def _file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _make_backend(manifest: RunManifest):
    if manifest.backend == "replay":
        return ReplayBackend.from_file(manifest.replay_path)
    if manifest.backend == "record":
        return RecordBackend(LiveBackend(), manifest.replay_path)
    return LiveBackend()


def _complete_many(backend, config, rendered: Sequence, limit: int) -> dict[str, modelgate.ModelResponse]:
    """Fan out completions; results are keyed by license id so output
    ordering never depends on completion order."""
    if limit <= 1 or len(rendered) <= 1:
        return {r.license_id: backend.complete(config, r) for r in rendered}
    results: dict[str, modelgate.ModelResponse] = {}
    with ThreadPoolExecutor(max_workers=limit) as pool:
        futures = {r.license_id: pool.submit(backend.complete, config, r) for r in rendered}
        for license_id, future in futures.items():
            results[license_id] = future.result()
    return results


def _format_cell(value: float | None) -> str:
    return "" if value is None else repr(float(value))


def write_summary_csv(
    path: Path,
    rows: Sequence[tuple[str, int, MetricSummary]],
    manifest_sha256: str = "",
) -> None:
    columns = _SUMMARY_COLUMNS + (("manifest",) if manifest_sha256 else ())
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for model_id, fold, s in rows:
            cells = [
                model_id,
                str(fold),
                str(s.n),
                _format_cell(s.pa_pct),
                _format_cell(s.dr_pct),
                _format_cell(s.nrr_pct),
                _format_cell(s.ss_pct),
                _format_cell(s.ars_s),
            ]
            if manifest_sha256:
                cells.append(manifest_sha256)
            fh.write(",".join(cells) + "\n")


@dataclass(frozen=True)
class SummaryRow:
    model_id: str
    fold: int
    n: int
    values: Mapping[str, float | None]


def read_summary_rows(path: str | Path) -> list[SummaryRow]:
    rows = []
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        for raw in csv.DictReader(fh):
            rows.append(
                SummaryRow(
                    model_id=raw["model_id"],
                    fold=int(raw["fold"]),
                    n=int(raw["n"]),
                    values={
                        m: (float(raw[m]) if raw.get(m) not in (None, "") else None)
                        for m in ("pa", "dr", "nrr", "ss", "ars")
                    },
                )
            )
    return rows


def run_cv_eval(manifest: RunManifest, out_dir: str | Path) -> RunResult:
    """Evaluate every manifest model across stratified folds and persist
    outcomes, per-fold summaries, and provenance hashes.

    A failure leaves a PARTIAL marker naming the error in the run directory
    before re-raising.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        result = _run_cv_eval(manifest, out_dir)
    except Exception as exc:
        (out_dir / "PARTIAL").write_text(f"{type(exc).__name__}: {exc}\n", encoding="utf-8")
        raise
    marker = out_dir / "PARTIAL"
    if marker.exists():
        marker.unlink()
    return result


def _load_inputs(manifest: RunManifest):
    records = corpus_mod.load_corpus(manifest.corpus_path)
    registry = modelgate.load_registry(manifest.registry_path)
    pack = prompts_mod.load_template_pack(manifest.pack_path)
    ruleset = metrics_mod.load_ruleset(manifest.ruleset_path)
    missing = [m for m in manifest.model_ids if m not in registry]
    if missing:
        raise ExperimentError(f"models not in registry: {', '.join(missing)}")
    if manifest.embedder_id is not None and manifest.embedder_id not in registry:
        raise ExperimentError(f"embedder {manifest.embedder_id!r} not in registry")
    return records, registry, pack, ruleset


def _eval_split(manifest: RunManifest, records) -> tuple[tuple[LicenseRecord, ...], FoldAssignment]:
    subset = corpus_mod.balanced_subset(
        records, manifest.fraction, manifest.seed, allow_shrink=manifest.allow_shrink
    )
    folds = corpus_mod.stratified_folds(subset, manifest.k, manifest.seed)
    return subset, folds


def _run_cv_eval(manifest: RunManifest, out_dir: Path) -> RunResult:
    records, registry, pack, ruleset = _load_inputs(manifest)
    subset, folds = _eval_split(manifest, records)
    backend = _make_backend(manifest)
    embedder = (
        Embedder(backend, registry[manifest.embedder_id]) if manifest.embedder_id is not None else None
    )

    manifest_sha = manifest.digest()
    summaries: dict[tuple[str, int], MetricSummary] = {}
    summary_rows: list[tuple[str, int, MetricSummary]] = []
    for model_id in manifest.model_ids:
        config = registry[model_id]
        model_dir = out_dir / "outcomes" / model_id
        model_dir.mkdir(parents=True, exist_ok=True)
        for fold in range(folds.k):
            fold_records = [rec for rec in subset if folds.assignments[rec.id] == fold]
            rendered = [
                prompts_mod.render(pack, manifest.system_id, manifest.user_id, rec)
                for rec in fold_records
            ]
            responses = _complete_many(backend, config, rendered, manifest.concurrency_limit)
            outcomes = metrics_mod.grade_fold(
                {rid: (resp.text, resp.latency_s) for rid, resp in responses.items()},
                {rec.id: rec.label for rec in fold_records},
                ruleset,
                embedder,
                references={rec.id: rec.reference_answer() for rec in fold_records},
                model_id=model_id,
                system_id=manifest.system_id,
                user_id=manifest.user_id,
            )
            metrics_mod.write_outcomes(outcomes, model_dir / f"{fold}.jsonl", run_tag=manifest_sha)
            summary = metrics_mod.summarize(outcomes)
            summaries[(model_id, fold)] = summary
            summary_rows.append((model_id, fold, summary))

    write_summary_csv(out_dir / "summary.csv", summary_rows, manifest_sha256=manifest_sha)
    provenance = {
        "manifest_sha256": manifest_sha,
        "corpus_sha256": _file_digest(manifest.corpus_path),
        "pack_sha256": pack.digest,
        "ruleset_sha256": _file_digest(manifest.ruleset_path),
        "registry_sha256": _file_digest(manifest.registry_path),
        "folds_sha256": folds.digest(),
    }
    (out_dir / "MANIFEST.lock").write_text(
        json.dumps(provenance, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return RunResult(manifest=manifest, out_dir=out_dir, summaries=summaries, provenance=provenance)


def _groups_for_metric(rows: Sequence[SummaryRow], metric: str) -> list[SampleGroup]:
    if metric not in METRIC_FIELDS:
        raise ExperimentError(f"unknown metric {metric!r} (expected one of {sorted(METRIC_FIELDS)})")
    per_model: dict[str, list[tuple[int, float]]] = {}
    for row in rows:
        value = row.values.get(metric)
        if value is None:
            raise ExperimentError(f"metric {metric!r} missing for model {row.model_id!r} fold {row.fold}")
        per_model.setdefault(row.model_id, []).append((row.fold, value))
    return [
        SampleGroup(group_id=model, values=tuple(v for _, v in sorted(folds)))
        for model, folds in sorted(per_model.items())
    ]


def _summary_source(source: str | Path) -> Path:
    source = Path(source)
    return source / "summary.csv" if source.is_dir() else source


def rank_report(
    source: str | Path,
    metric: str,
    direction: str | None = None,
    d_threshold: float = 0.2,
    out_dir: str | Path | None = None,
) -> tuple[RankTable, str]:
    """SK-ESD rank table for one metric, read from a run directory or a bare
    summary.csv. Returns the table plus its markdown rendering; when
    ``out_dir`` is given, rank_<metric>.md and .csv are written there.
    """
    if metric not in METRIC_FIELDS:
        raise ExperimentError(f"unknown metric {metric!r} (expected one of {sorted(METRIC_FIELDS)})")
    rows = read_summary_rows(_summary_source(source))
    if not rows:
        raise ExperimentError("summary has no rows")
    direction = direction or METRIC_FIELDS[metric][1]
    groups = _groups_for_metric(rows, metric)
    table = stats_mod.sk_esd_rank(groups, direction=direction, d_threshold=d_threshold, metric_name=metric)

    ordered = sorted(table.entries, key=lambda e: (e.rank, e.group_id))
    lines = [f"| Model | Rank | Value |", "| --- | ---: | ---: |"]
    lines += [f"| {e.group_id} | {e.rank} | {e.mean:.2f} |" for e in ordered]
    markdown = "\n".join(lines) + "\n"

    if out_dir is not None:
        out_dir = Path(out_dir)
        (out_dir / f"rank_{metric}.md").write_text(markdown, encoding="utf-8")
        with (out_dir / f"rank_{metric}.csv").open("w", encoding="utf-8", newline="\n") as fh:
            fh.write("model_id,rank,value\n")
            for e in ordered:
                fh.write(f"{e.group_id},{e.rank},{e.mean:.2f}\n")
    return table, markdown


def _check_same_split(dir_a: Path, dir_b: Path) -> None:
    lock_a = json.loads((dir_a / "MANIFEST.lock").read_text(encoding="utf-8"))
    lock_b = json.loads((dir_b / "MANIFEST.lock").read_text(encoding="utf-8"))
    for key in ("corpus_sha256", "folds_sha256"):
        if lock_a.get(key) != lock_b.get(key):
            raise ExperimentError(
                f"runs disagree on {key}; results are not comparable fold-by-fold"
            )


def compare_report(
    run_a: str | Path,
    run_b: str | Path,
    alpha: float = 0.05,
    *,
    model_a: str | None = None,
    model_b: str | None = None,
    mode: str = "auto",
    family_m: int | None = None,
    out_path: str | Path | None = None,
    out_md: str | Path | None = None,
) -> list[ComparisonResult]:
    """Paired per-metric comparison of one model from each run.

    Folds are paired by index, which both runs must share (enforced via the
    corpus/fold hashes in MANIFEST.lock). The Bonferroni family defaults to
    the number of metrics compared.
    """
    dir_a, dir_b = Path(run_a), Path(run_b)
    if dir_a.is_dir() and dir_b.is_dir():
        _check_same_split(dir_a, dir_b)
    rows_a = read_summary_rows(_summary_source(dir_a))
    rows_b = read_summary_rows(_summary_source(dir_b))
    model_a = model_a or _single_model(rows_a, "run_a")
    model_b = model_b or _single_model(rows_b, "run_b")

    values_a = _fold_values(rows_a, model_a)
    values_b = _fold_values(rows_b, model_b)
    if sorted(values_a) != sorted(values_b):
        raise ExperimentError(
            f"unpaired folds: {sorted(values_a)} vs {sorted(values_b)}"
        )

    metrics = [m for m in ("pa", "dr", "nrr", "ss", "ars") if _metric_present(rows_a, rows_b, m)]
    family = family_m if family_m is not None else len(metrics)

    partial: list[tuple[str, float, float, stats_mod.CliffsDeltaResult, bool]] = []
    for metric in metrics:
        a = [values_a[fold].values[metric] for fold in sorted(values_a)]
        b = [values_b[fold].values[metric] for fold in sorted(values_b)]
        delta = stats_mod.cliffs_delta(a, b)
        if all(x == y for x, y in zip(a, b)):
            partial.append((metric, 0.0, 1.0, delta, True))
        else:
            wres = stats_mod.wilcoxon_signed_rank(a, b, mode=mode)
            partial.append((metric, wres.w, wres.p_value, delta, False))

    adjusted = stats_mod.bonferroni([p for _, _, p, _, _ in partial], alpha, m=family)
    results = [
        ComparisonResult(
            pair=(model_a, model_b),
            metric_name=metric,
            statistic_w=w,
            p_value=entry.p_value,
            alpha_adjusted=entry.alpha_adjusted,
            significant=entry.significant and not no_diff,
            cliffs_delta=delta.delta,
            magnitude=delta.magnitude,
            delta_is_zero=delta.is_zero,
            no_difference=no_diff,
        )
        for (metric, w, _, delta, no_diff), entry in zip(partial, adjusted)
    ]

    if out_path is not None:
        with Path(out_path).open("w", encoding="utf-8", newline="\n") as fh:
            fh.write("metric,model_a,model_b,w,p_value,alpha_adjusted,significant,cliffs_delta,magnitude,note\n")
            for r in results:
                note = "no difference" if r.no_difference else ""
                fh.write(
                    f"{r.metric_name},{r.pair[0]},{r.pair[1]},{r.statistic_w!r},{r.p_value!r},"
                    f"{r.alpha_adjusted!r},{r.significant},{r.cliffs_delta!r},{r.magnitude},{note}\n"
                )
    if out_md is not None:
        Path(out_md).write_text(comparison_markdown(results), encoding="utf-8")
    return results


def comparison_markdown(results: Sequence[ComparisonResult]) -> str:
    lines = [
        "| Metric | W | p | adjusted alpha | Significant | Cliff's delta | Magnitude | Note |",
        "| --- | ---: | ---: | ---: | --- | ---: | --- | --- |",
    ]
    for r in results:
        note = "no difference" if r.no_difference else ""
        lines.append(
            f"| {r.metric_name} | {r.statistic_w:g} | {r.p_value:.6g} | {r.alpha_adjusted:.6g} "
            f"| {'yes' if r.significant else 'no'} | {r.cliffs_delta:.4f} | {r.magnitude} | {note} |"
        )
    return "\n".join(lines) + "\n"


def _single_model(rows: Sequence[SummaryRow], which: str) -> str:
    models = sorted({r.model_id for r in rows})
    if len(models) != 1:
        raise ExperimentError(f"{which} holds {len(models)} models; name one explicitly")
    return models[0]


def _fold_values(rows: Sequence[SummaryRow], model_id: str) -> dict[int, SummaryRow]:
    out = {r.fold: r for r in rows if r.model_id == model_id}
    if not out:
        raise ExperimentError(f"model {model_id!r} not present in summary")
    return out


def _metric_present(rows_a, rows_b, metric: str) -> bool:
    return all(r.values.get(metric) is not None for r in rows_a) and all(
        r.values.get(metric) is not None for r in rows_b
    )


def run_prompt_grid(
    manifest: RunManifest,
    system_ids: Sequence[str],
    user_ids: Sequence[str],
    out_dir: str | Path,
) -> dict[tuple[str, str], float]:
    """Run the full cross-validated evaluation per prompt pair on the same
    subset and folds; cell value is the mean PA over (model, fold).

    Writes grid_pa.csv with one row per system prompt, cells at one decimal.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pack = prompts_mod.load_template_pack(manifest.pack_path)
    pairs = prompts_mod.grid(pack, system_ids, user_ids)

    cells: dict[tuple[str, str], float] = {}
    for system_id, user_id in pairs:
        cell_manifest = replace(
            manifest,
            run_id=f"{manifest.run_id}__{system_id}__{user_id}",
            system_id=system_id,
            user_id=user_id,
        )
        result = run_cv_eval(cell_manifest, out_dir / "cells" / f"{system_id}__{user_id}")
        values = [s.pa_pct for s in result.summaries.values()]
        cells[(system_id, user_id)] = sum(values) / len(values)

    with (out_dir / "grid_pa.csv").open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("system," + ",".join(user_ids) + "\n")
        for system_id in system_ids:
            row = [f"{cells[(system_id, uid)]:.1f}" for uid in user_ids]
            fh.write(system_id + "," + ",".join(row) + "\n")
    return cells


def run_data_size_ablation(
    manifest: RunManifest,
    sizes: Sequence[int],
    eval_endpoints: Mapping[int, str],
    out_dir: str | Path,
) -> list[tuple[int, float]]:
    """Evaluate one endpoint per training-set size on the manifest's held-out
    folds and emit (size, mean PA) rows.

    Also exports the nested instruction-tuning subsets the external
    fine-tuning jobs consume, one json-lines file per size.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    missing = [s for s in sizes if s not in eval_endpoints]
    if missing:
        raise ExperimentError(f"no evaluation endpoint registered for sizes: {missing}")

    records, registry, pack, ruleset = _load_inputs(manifest)
    bad = [eval_endpoints[s] for s in sizes if eval_endpoints[s] not in registry]
    if bad:
        raise ExperimentError(f"ablation endpoints not in registry: {sorted(set(bad))}")

    subsets = corpus_mod.subsample_for_ablation(records, list(sizes), manifest.seed)
    for size, subset in zip(sizes, subsets):
        corpus_mod.write_instruction_rows(
            subset, pack, manifest.system_id, manifest.user_id, out_dir / f"train_{size}.jsonl"
        )

    rows: list[tuple[int, float]] = []
    for size in sizes:
        size_manifest = replace(
            manifest,
            run_id=f"{manifest.run_id}__size{size}",
            model_ids=(eval_endpoints[size],),
        )
        result = run_cv_eval(size_manifest, out_dir / "eval" / f"size_{size}")
        values = [s.pa_pct for s in result.summaries.values()]
        rows.append((size, sum(values) / len(values)))

    with (out_dir / "ablation.csv").open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("size,pa\n")
        for size, pa in rows:
            fh.write(f"{size},{pa:.1f}\n")
    return rows
