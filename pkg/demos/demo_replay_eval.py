"""Walkthrough: record a fake model session, then run the full
cross-validated evaluation twice from the replay store and show that the
results are byte-identical.

Run: python3 demos/demo_replay_eval.py
"""

import hashlib
import json
import tempfile
from pathlib import Path

import licensekit
from licensekit.corpus import balanced_subset, load_corpus, stratified_folds
from licensekit.experiments import RunManifest, run_cv_eval
from licensekit.modelgate import ReplayStore, completion_fingerprint, load_registry
from licensekit.prompts import load_template_pack, render

work = Path(tempfile.mkdtemp(prefix="licensekit-demo-"))
corpus_path = Path(str(licensekit.fixture_path("corpus_sample.jsonl")))
pack_path = Path(str(licensekit.fixture_path("prompt_pack.json")))

# A registry with one replay-only model.
registry_path = work / "registry.json"
registry_path.write_text(json.dumps({"models": [{"model_id": "demo-model"}]}))
registry = load_registry(registry_path)
pack = load_template_pack(pack_path)

# "Record" a response for every license the evaluation will touch.
records = load_corpus(corpus_path)
subset = balanced_subset(records, 1.0, seed=1)
folds = stratified_folds(subset, 4, seed=1)
store = ReplayStore()
for rec in subset:
    rendered = render(pack, "sys_v3", "user_v3", rec)
    fp = completion_fingerprint("demo-model", rendered.system_text, rendered.user_text,
                                registry["demo-model"].params)
    store.completions[fp] = (rec.reference_answer(), 1.0)  # a model that parrots the expert
store.save(work / "replay.jsonl")

manifest = RunManifest(
    run_id="demo",
    corpus_path=str(corpus_path),
    fraction=1.0,
    k=4,
    seed=1,
    model_ids=("demo-model",),
    system_id="sys_v3",
    user_id="user_v3",
    ruleset_path=str(licensekit.fixture_path("rules_en.json")),
    registry_path=str(registry_path),
    pack_path=str(pack_path),
    backend="replay",
    replay_path=str(work / "replay.jsonl"),
)


def run_and_hash(out: Path) -> str:
    run_cv_eval(manifest, out)
    digest = hashlib.sha256()
    for path in sorted(out.rglob("*")):
        if path.is_file():
            digest.update(path.read_bytes())
    return digest.hexdigest()


h1 = run_and_hash(work / "run1")
h2 = run_and_hash(work / "run2")
print(f"run 1 results hash: {h1[:16]}…")
print(f"run 2 results hash: {h2[:16]}…")
print(f"byte-identical: {h1 == h2}")
print(f"artifacts in {work}/run1: summary.csv, MANIFEST.lock, outcomes/")
