"""Shared text normalization used for duplicate detection.

Both the corpus filter and the duplication-rate metric must agree on what
"the same text" means, so the rule lives in one place: strip, collapse any
internal whitespace run to a single space, casefold.
"""

from __future__ import annotations

import re

_WS_RUN = re.compile(r"\s+")


def normalize(text: str) -> str:
    return _WS_RUN.sub(" ", text.strip()).casefold()
