"""licensekit command-line interface.

Thin wrappers over the library: corpus curation, prompt rendering, metric
summaries, ranking/comparison reports, manifest-driven experiment runs,
and the review service.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import corpus as corpus_mod
from . import experiments as experiments_mod
from . import metrics as metrics_mod
from . import modelgate
from . import prompts as prompts_mod


@click.group()
def main() -> None:
    """Dataset-license compliance evaluation toolkit."""


# -- corpus ----------------------------------------------------------------


@main.group()
def corpus() -> None:
    """Load, filter, sample, and export license corpora."""


_format_option = click.option(
    "--format", "fmt", type=click.Choice(["json_lines", "csv"]), default="json_lines", show_default=True
)


@corpus.command("load")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@_format_option
def corpus_load(in_path: str, fmt: str) -> None:
    records = corpus_mod.load_corpus(in_path, fmt)
    click.echo(f"{len(records)} records loaded from {in_path}")


@corpus.command("filter")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@_format_option
def corpus_filter(in_path: str, out_path: str, fmt: str) -> None:
    records = corpus_mod.load_corpus(in_path, fmt)
    kept, report = corpus_mod.filter_invalid(records)
    corpus_mod.save_corpus(kept, out_path, fmt)
    click.echo(
        f"kept {report.output_count} of {report.input_count} "
        f"(unreadable {report.removed_unreadable}, expired {report.removed_expired}, "
        f"duplicate {report.removed_duplicate})"
    )


@corpus.command("stats")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@_format_option
def corpus_stats(in_path: str, fmt: str) -> None:
    records = corpus_mod.load_corpus(in_path, fmt)
    stats = corpus_mod.category_stats(records)
    for cat in corpus_mod.Category:
        click.echo(f"{cat.value}: {stats.counts[cat]}")
    click.echo(f"total: {stats.total}")


@corpus.command("subset")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--fraction", type=float, required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--allow-shrink", is_flag=True, help="Undersample to the feasible balanced size.")
@_format_option
def corpus_subset(in_path: str, out_path: str, fraction: float, seed: int, allow_shrink: bool, fmt: str) -> None:
    records = corpus_mod.load_corpus(in_path, fmt)
    subset = corpus_mod.balanced_subset(records, fraction, seed, allow_shrink=allow_shrink)
    corpus_mod.save_corpus(subset, out_path, fmt)
    click.echo(f"{len(subset)} records written to {out_path}")


@corpus.command("folds")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--k", type=int, required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@_format_option
def corpus_folds(in_path: str, out_path: str, k: int, seed: int, fmt: str) -> None:
    records = corpus_mod.load_corpus(in_path, fmt)
    folds = corpus_mod.stratified_folds(records, k, seed)
    Path(out_path).write_text(folds.canonical_json() + "\n", encoding="utf-8")
    click.echo(f"assigned {len(folds.assignments)} records to {k} folds")


@corpus.command("export-instructions")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--pack", "pack_path", required=True, type=click.Path(exists=True))
@click.option("--system", "system_id", required=True)
@click.option("--user", "user_id", required=True)
@click.option("--k", type=int, required=True)
@click.option("--held-out-fold", type=int, required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@_format_option
def corpus_export_instructions(
    in_path: str, out_path: str, pack_path: str, system_id: str, user_id: str,
    k: int, held_out_fold: int, seed: int, fmt: str,
) -> None:
    records = corpus_mod.load_corpus(in_path, fmt)
    folds = corpus_mod.stratified_folds(records, k, seed)
    pack = prompts_mod.load_template_pack(pack_path)
    n = corpus_mod.export_instruction_dataset(records, folds, held_out_fold, pack, system_id, user_id, out_path)
    click.echo(f"{n} instruction examples written to {out_path}")


@corpus.command("ablate-subsets")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--sizes", required=True, help="Comma-separated, strictly increasing sizes.")
@click.option("--seed", type=int, default=0, show_default=True)
@_format_option
def corpus_ablate_subsets(in_path: str, out_dir: str, sizes: str, seed: int, fmt: str) -> None:
    records = corpus_mod.load_corpus(in_path, fmt)
    size_list = [int(s) for s in sizes.split(",") if s.strip()]
    subsets = corpus_mod.subsample_for_ablation(records, size_list, seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for size, subset in zip(size_list, subsets):
        corpus_mod.save_corpus(subset, out / f"subset_{size}.jsonl", "json_lines")
    click.echo(f"wrote {len(subsets)} nested subsets to {out_dir}")


# -- prompts ----------------------------------------------------------------


@main.group()
def prompts() -> None:
    """Inspect and render prompt templates."""


@prompts.command("list")
@click.option("--pack", "pack_path", required=True, type=click.Path(exists=True))
def prompts_list(pack_path: str) -> None:
    pack = prompts_mod.load_template_pack(pack_path)
    for tpl in pack.templates.values():
        click.echo(f"{tpl.id}\t{tpl.kind.value}\t{tpl.origin.value}")


@prompts.command("render")
@click.option("--pack", "pack_path", required=True, type=click.Path(exists=True))
@click.option("--system", "system_id", required=True)
@click.option("--user", "user_id", required=True)
@click.option("--license-id", required=True)
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@_format_option
def prompts_render(pack_path: str, system_id: str, user_id: str, license_id: str, in_path: str, fmt: str) -> None:
    pack = prompts_mod.load_template_pack(pack_path)
    records = {rec.id: rec for rec in corpus_mod.load_corpus(in_path, fmt)}
    if license_id not in records:
        raise click.ClickException(f"license {license_id!r} not in corpus")
    rendered = prompts_mod.render(pack, system_id, user_id, records[license_id])
    click.echo("--- system ---")
    click.echo(rendered.system_text)
    click.echo("--- user ---")
    click.echo(rendered.user_text)


# -- models ------------------------------------------------------------------


@main.group()
def models() -> None:
    """Inspect the model endpoint registry."""


@models.command("list")
@click.option("--registry", "registry_path", required=True, type=click.Path(exists=True))
def models_list(registry_path: str) -> None:
    registry = modelgate.load_registry(registry_path)
    for config in registry.values():
        size = f"{config.parameter_count_b}B" if config.parameter_count_b else "-"
        click.echo(f"{config.model_id}\t{size}\t{config.base_url}")


@models.command("probe")
@click.option("--registry", "registry_path", required=True, type=click.Path(exists=True))
@click.option("--model", "model_id", default=None, help="Probe a single model instead of all.")
def models_probe(registry_path: str, model_id: str | None) -> None:
    registry = modelgate.load_registry(registry_path)
    targets = [model_id] if model_id else list(registry)
    backend = modelgate.LiveBackend()
    prompt = prompts_mod.RenderedPrompt(
        system_text="Reply with the single word: ok.",
        user_text="Health check.",
        system_id="probe",
        user_id="probe",
        license_id="probe",
    )
    failures = 0
    for mid in targets:
        if mid not in registry:
            raise click.ClickException(f"model {mid!r} not in registry")
        try:
            response = backend.complete(registry[mid], prompt)
            click.echo(f"{mid}: ok ({response.latency_s:.2f}s)")
        except Exception as exc:
            failures += 1
            click.echo(f"{mid}: FAILED - {exc}")
    backend.close()
    if failures:
        sys.exit(1)


# -- metrics -----------------------------------------------------------------


@main.command("metrics")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--ruleset", "ruleset_path", type=click.Path(exists=True), default=None,
              help="Re-extract verdicts with this ruleset before summarizing.")
@click.option("--dr-mode", type=click.Choice(["extras", "max-class"]), default="extras", show_default=True)
def metrics_cmd(in_path: str, ruleset_path: str | None, dr_mode: str) -> None:
    """Summarize a json-lines outcome file."""
    outcomes = metrics_mod.read_outcomes(in_path)
    if ruleset_path:
        ruleset = metrics_mod.load_ruleset(ruleset_path)
        outcomes = [
            metrics_mod.grade_response(
                license_id=o.license_id,
                model_id=o.model_id,
                system_id=o.system_id,
                user_id=o.user_id,
                response_text=o.response_text,
                ground_truth=o.ground_truth,
                latency_s=o.latency_s,
                ruleset=ruleset,
                ss=o.ss,
            )
            for o in outcomes
        ]
    summary = metrics_mod.summarize(outcomes, dr_mode=dr_mode)
    click.echo(f"n: {summary.n}")
    click.echo(f"pa_pct: {summary.pa_pct:.2f}")
    click.echo(f"dr_pct: {summary.dr_pct:.2f}")
    click.echo(f"nrr_pct: {summary.nrr_pct:.2f}")
    if summary.ss_pct is not None:
        click.echo(f"ss_pct: {summary.ss_pct:.2f}")
    click.echo(f"ars_s: {summary.ars_s:.2f}")


# -- rank / compare ------------------------------------------------------------


@main.command("rank")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True),
              help="Run directory or summary.csv.")
@click.option("--metric", required=True, type=click.Choice(sorted(experiments_mod.METRIC_FIELDS)))
@click.option("--direction", type=click.Choice(["higher", "lower"]), default=None)
@click.option("--d-threshold", type=float, default=0.2, show_default=True)
@click.option("--out", "out_dir", type=click.Path(), default=None)
def rank_cmd(in_path: str, metric: str, direction: str | None, d_threshold: float, out_dir: str | None) -> None:
    """SK-ESD rank table for one metric."""
    _, markdown = experiments_mod.rank_report(
        in_path, metric, direction=direction, d_threshold=d_threshold, out_dir=out_dir
    )
    click.echo(markdown, nl=False)


@main.command("compare")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--in-b", "in_b_path", type=click.Path(exists=True), default=None,
              help="Second run directory (defaults to --in).")
@click.option("--a", "model_a", default=None, help="Model id on the A side.")
@click.option("--b", "model_b", default=None, help="Model id on the B side.")
@click.option("--metric", default=None, help="Print only this metric's row.")
@click.option("--alpha", type=float, default=0.05, show_default=True)
@click.option("--bonferroni-m", type=int, default=None, help="Family size; defaults to metric count.")
@click.option("--mode", type=click.Choice(["auto", "exact", "approx"]), default="auto", show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None, help="Write the csv table here.")
@click.option("--out-md", "out_md", type=click.Path(), default=None, help="Write the markdown table here.")
def compare_cmd(
    in_path: str, in_b_path: str | None, model_a: str | None, model_b: str | None,
    metric: str | None, alpha: float, bonferroni_m: int | None, mode: str,
    out_path: str | None, out_md: str | None,
) -> None:
    """Wilcoxon + Cliff's delta comparison of two models, fold by fold."""
    results = experiments_mod.compare_report(
        in_path,
        in_b_path or in_path,
        alpha,
        model_a=model_a,
        model_b=model_b,
        mode=mode,
        family_m=bonferroni_m,
        out_path=out_path,
        out_md=out_md,
    )
    for r in results:
        if metric and r.metric_name != metric:
            continue
        note = " (no difference)" if r.no_difference else ""
        click.echo(
            f"{r.metric_name}: W={r.statistic_w} p={r.p_value:.6g} "
            f"alpha_adj={r.alpha_adjusted:.6g} significant={r.significant} "
            f"delta={r.cliffs_delta:.4f} [{r.magnitude}]{note}"
        )


# -- eval ----------------------------------------------------------------------


@main.group("eval")
def eval_group() -> None:
    """Manifest-driven experiment runs."""


@eval_group.command("run")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", type=click.Path(), default=None)
def eval_run(manifest_path: str, out_dir: str | None) -> None:
    manifest = experiments_mod.RunManifest.from_file(manifest_path)
    target = Path(out_dir) if out_dir else Path("results") / manifest.run_id
    result = experiments_mod.run_cv_eval(manifest, target)
    click.echo(f"{len(result.summaries)} (model, fold) summaries written to {target}")


@eval_group.command("rank")
@click.option("--run", "run_dir", required=True, type=click.Path(exists=True))
@click.option("--metric", required=True, type=click.Choice(sorted(experiments_mod.METRIC_FIELDS)))
@click.option("--d-threshold", type=float, default=0.2, show_default=True)
def eval_rank(run_dir: str, metric: str, d_threshold: float) -> None:
    _, markdown = experiments_mod.rank_report(run_dir, metric, d_threshold=d_threshold, out_dir=run_dir)
    click.echo(markdown, nl=False)


@eval_group.command("compare")
@click.option("--run-a", required=True, type=click.Path(exists=True))
@click.option("--run-b", required=True, type=click.Path(exists=True))
@click.option("--a", "model_a", default=None)
@click.option("--b", "model_b", default=None)
@click.option("--alpha", type=float, default=0.05, show_default=True)
@click.option("--bonferroni-m", type=int, default=None)
@click.option("--mode", type=click.Choice(["auto", "exact", "approx"]), default="auto", show_default=True)
def eval_compare(run_a: str, run_b: str, model_a: str | None, model_b: str | None,
                 alpha: float, bonferroni_m: int | None, mode: str) -> None:
    results = experiments_mod.compare_report(
        run_a, run_b, alpha, model_a=model_a, model_b=model_b, mode=mode, family_m=bonferroni_m
    )
    for r in results:
        note = " (no difference)" if r.no_difference else ""
        click.echo(
            f"{r.metric_name}: W={r.statistic_w} p={r.p_value:.6g} significant={r.significant} "
            f"delta={r.cliffs_delta:.4f} [{r.magnitude}]{note}"
        )


@eval_group.command("grid")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--systems", required=True, help="Comma-separated system template ids.")
@click.option("--users", required=True, help="Comma-separated user template ids.")
@click.option("--out", "out_dir", required=True, type=click.Path())
def eval_grid(manifest_path: str, systems: str, users: str, out_dir: str) -> None:
    manifest = experiments_mod.RunManifest.from_file(manifest_path)
    system_ids = [s for s in systems.split(",") if s]
    user_ids = [u for u in users.split(",") if u]
    cells = experiments_mod.run_prompt_grid(manifest, system_ids, user_ids, out_dir)
    click.echo(f"{len(cells)} cells written to {out_dir}/grid_pa.csv")


@eval_group.command("ablate")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--sizes", required=True, help="Comma-separated training-set sizes.")
@click.option("--endpoints", required=True,
              help="size=model_id pairs, comma-separated (e.g. 100=ft100,150=ft150).")
@click.option("--out", "out_dir", required=True, type=click.Path())
def eval_ablate(manifest_path: str, sizes: str, endpoints: str, out_dir: str) -> None:
    manifest = experiments_mod.RunManifest.from_file(manifest_path)
    size_list = [int(s) for s in sizes.split(",") if s]
    endpoint_map = {}
    for pair in endpoints.split(","):
        size, _, model_id = pair.partition("=")
        endpoint_map[int(size)] = model_id
    rows = experiments_mod.run_data_size_ablation(manifest, size_list, endpoint_map, out_dir)
    for size, pa in rows:
        click.echo(f"{size}: {pa:.1f}")


# -- serve -----------------------------------------------------------------------


@main.command("serve")
@click.option("--port", type=int, default=8400, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--registry", "registry_path", type=click.Path(exists=True), default=None)
@click.option("--pack", "pack_path", type=click.Path(exists=True), default=None)
@click.option("--ruleset", "ruleset_path", type=click.Path(exists=True), default=None)
@click.option("--store", "store_dir", required=True, type=click.Path())
@click.option("--replay", "replay_path", type=click.Path(exists=True), default=None,
              help="Answer assist requests from this replay store instead of the network.")
@click.option("--token", default=None, help="Require this static bearer token.")
def serve(port: int, host: str, corpus_path: str, registry_path: str | None, pack_path: str | None,
          ruleset_path: str | None, store_dir: str, replay_path: str | None, token: str | None) -> None:
    """Host the lawyer-review HTTP service."""
    import uvicorn

    from .review import ReviewService, create_app

    records = corpus_mod.load_corpus(corpus_path)
    backend = None
    if replay_path:
        backend = modelgate.ReplayBackend.from_file(replay_path)
    elif registry_path:
        backend = modelgate.LiveBackend()
    service = ReviewService(
        records,
        store_dir,
        backend=backend,
        registry=modelgate.load_registry(registry_path) if registry_path else None,
        pack=prompts_mod.load_template_pack(pack_path) if pack_path else None,
        ruleset=metrics_mod.load_ruleset(ruleset_path) if ruleset_path else None,
    )
    uvicorn.run(create_app(service, token=token), host=host, port=port)


if __name__ == "__main__":
    main()
