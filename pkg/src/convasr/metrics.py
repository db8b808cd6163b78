"""Edit-distance error rates at letter and word granularity."""

from __future__ import annotations

import math
from dataclasses import dataclass


def levenshtein(ref, hyp) -> int:
    """Unit-cost edit distance between two sequences (two-row DP)."""
    if len(ref) < len(hyp):
        ref, hyp = hyp, ref
    prev = list(range(len(hyp) + 1))
    for i, r in enumerate(ref, 1):
        cur = [i]
        for j, h in enumerate(hyp, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (r != h)))
        prev = cur
    return prev[-1]


@dataclass
class MetricReport:
    rate: float  # total edits / total reference length
    total_edits: int
    total_ref_length: int
    distances: list  # per-utterance edit distances
    unit: str  # "letter" or "word"


def error_rate(refs, hyps, unit: str = "letter") -> MetricReport:
    """Micro-averaged error rate over paired utterances.

    ``unit="letter"`` compares character sequences, ``unit="word"``
    whitespace-split tokens.  Utterance counts must match.
    """
    if len(refs) != len(hyps):
        raise ValueError(f"utterance count mismatch: {len(refs)} refs vs {len(hyps)} hyps")
    if unit not in ("letter", "word"):
        raise ValueError(f"unknown unit {unit!r}")
    distances = []
    edits = 0
    ref_len = 0
    for r, h in zip(refs, hyps):
        if unit == "word":
            r, h = r.split(), h.split()
        d = levenshtein(r, h)
        distances.append(d)
        edits += d
        ref_len += len(r)
    if ref_len == 0:
        rate = 0.0 if edits == 0 else math.inf
    else:
        rate = edits / ref_len
    return MetricReport(rate, edits, ref_len, distances, unit)
