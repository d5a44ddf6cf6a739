"""licensekit: dataset-license compliance evaluation toolkit.

Subpackages by concern:

- ``corpus``      labeled license corpora: loading, filtering, splits, exports
- ``prompts``     versioned system/user templates and rendering
- ``modelgate``   chat-completion/embedding clients with record/replay
- ``metrics``     verdict extraction and the five performance measures
- ``stats``       SK-ESD ranking, Wilcoxon, Cliff's delta, Bonferroni
- ``experiments`` manifest-driven runs, ranking/comparison/grid/ablation
- ``review``      timed lawyer-review service over HTTP
"""

from importlib.resources import files as _files

__version__ = "0.1.0"


def fixture_path(name: str):
    """Path to a bundled data fixture (default prompt pack, rulesets,
    sample corpus, example registry)."""
    return _files("licensekit") / "fixtures" / name
