"""Walkthrough: grade a handful of model responses and compute the five
performance measures.

Run: python3 demos/demo_metrics.py
"""

import licensekit
from licensekit.corpus import Label
from licensekit.metrics import grade_fold, load_ruleset, summarize

ruleset = load_ruleset(licensekit.fixture_path("rules_en.json"))

# Four fake model responses, keyed by license id, with latencies.
responses = {
    "cc-by": ("The license allows commercial use. Attribution is required.", 1.2),
    "cc-by-nc": ("You cannot use this dataset commercially without violating the terms.", 1.9),
    "cifar": ("It is not clear whether commercial use is authorized.", 2.3),
    "flickr": ("Thanks for your question!", 0.8),  # non-specific
}
ground_truth = {
    "cc-by": Label.ALLOWS,
    "cc-by-nc": Label.DENIES,
    "cifar": Label.UNCLEAR,
    "flickr": Label.DENIES,
}

outcomes = grade_fold(responses, ground_truth, ruleset)
for o in outcomes:
    print(f"{o.license_id:10s} extracted={o.extracted.value:13s} correct={o.correct}")

summary = summarize(outcomes)
print()
print(f"PA  = {summary.pa_pct:.2f} %   (3 of 4 correct)")
print(f"DR  = {summary.dr_pct:.2f} %   (all responses distinct)")
print(f"NRR = {summary.nrr_pct:.2f} %  (1 of 4 non-specific)")
print(f"ARS = {summary.ars_s:.2f} s")
