"""Line-level difference between a parent program and its mutated child.

Sources are compared on normalized lines: trailing whitespace is stripped
and blank lines are dropped, so formatting churn does not count as change.
The difference is the percentage of lines not shared, measured through the
longest common subsequence of the two line sequences.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence


@dataclass(frozen=True)
class SourceText:
    """A piece of source plus its comparison view (non-empty stripped lines)."""

    raw: str
    lines: tuple[str, ...]


def normalize(raw: str) -> SourceText:
    """Split on newlines, strip trailing whitespace, drop empty lines."""
    lines = []
    for line in raw.split("\n"):
        stripped = line.rstrip()
        if stripped:
            lines.append(stripped)
    return SourceText(raw=raw, lines=tuple(lines))


def line_count(source: SourceText) -> int:
    return len(source.lines)


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    # Two-row dynamic program; O(len(a) * len(b)) time, O(min) space.
    if not a or not b:
        return 0
    if len(b) < len(a):
        a, b = b, a
    prev = [0] * (len(a) + 1)
    for token in b:
        curr = [0] * (len(a) + 1)
        for i, other in enumerate(a, start=1):
            if other == token:
                curr[i] = prev[i - 1] + 1
            else:
                curr[i] = max(prev[i], curr[i - 1])
        prev = curr
    return prev[-1]


def diff_percent(parent: SourceText, child: SourceText) -> float:
    """Percent of lines changed: 100 * (longest - LCS) / longest.

    Uses the longer of the two line counts as the reference length, so the
    value is symmetric and stays within [0, 100].
    """
    longest = max(len(parent.lines), len(child.lines))
    if longest == 0:
        raise ValueError("difference between two empty sources is undefined")
    common = _lcs_length(parent.lines, child.lines)
    return 100.0 * (longest - common) / longest
